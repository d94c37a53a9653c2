//! Run configuration: a TOML file, then command-line overrides.
//!
//! Angles are degrees here and radians everywhere past [`RunConfig::grid_spec`]
//! and friends.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use springmass::dynamics::{IntegratorConfig, ModelKind, ModelParams, Spring};
use springmass::optimizer::{ParamSpace, PsoConfig};
use springmass::poincare::GridSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Total energy [J].
    pub energy: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub integrator: IntegratorConfig<f64>,
    pub noise: NoiseConfig,
    pub sweeps: SweepConfig,
    pub bifurcation: BifurcationConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Slip,
            energy: 1860.0,
            seed: 0,
            out: PathBuf::from("out"),
            params: ParamsConfig::default(),
            grid: GridConfig::default(),
            integrator: IntegratorConfig::default(),
            noise: NoiseConfig::default(),
            sweeps: SweepConfig::default(),
            bifurcation: BifurcationConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Overrides of the selected model's reference parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    /// Linear leg stiffness [N/m].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Knee spring coefficient [N m/rad].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub s_bounds: [f64; 2],
    pub alpha_deg: [f64; 2],
    pub n_s: usize,
    pub n_alpha: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            s_bounds: [0.0, 1.0],
            alpha_deg: [0.0, 90.0],
            n_s: 100,
            n_alpha: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub eta_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { eta_deg: 7.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eta_deg: Vec<f64>,
    pub energies: Vec<f64>,
    /// Run the noise sweep for both models instead of the selected one.
    pub both_models: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eta_deg: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0],
            energies: vec![1400.0, 1600.0, 1860.0, 2200.0, 2600.0],
            both_models: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcationConfig {
    pub alpha_deg: [f64; 2],
    pub n_alpha: usize,
    pub n_s: usize,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        Self {
            alpha_deg: [20.0, 50.0],
            n_alpha: 61,
            n_s: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub n_particles: usize,
    pub chi: f64,
    pub c1: f64,
    pub c2: f64,
    pub var_tol: f64,
    pub max_iters: usize,
    /// Fitness grid size, `[n_s, n_alpha]`.
    pub resolution: [usize; 2],
    pub c_bounds: [f64; 2],
    pub beta0_deg_bounds: [f64; 2],
    pub k_bounds: [f64; 2],
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let pso = PsoConfig::default();
        Self {
            n_particles: pso.n_particles,
            chi: pso.chi,
            c1: pso.c1,
            c2: pso.c2,
            var_tol: pso.var_tol,
            max_iters: pso.max_iters,
            resolution: [100, 100],
            c_bounds: [100.0, 5000.0],
            beta0_deg_bounds: [100.0, 179.0],
            k_bounds: [2000.0, 40000.0],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub energy: Option<f64>,
    pub resolution: Option<(usize, usize)>,
    pub eta_deg: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// `NxM` as `(n_s, n_alpha)`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
    let n = a.trim().parse().map_err(|_| format!("bad state count `{a}`"))?;
    let m = b.trim().parse().map_err(|_| format!("bad action count `{b}`"))?;
    Ok((n, m))
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(m) = o.model {
            cfg.model = m;
        }
        if let Some(e) = o.energy {
            cfg.energy = e;
        }
        if let Some((n, m)) = o.resolution {
            cfg.grid.n_s = n;
            cfg.grid.n_alpha = m;
        }
        if let Some(e) = o.eta_deg {
            cfg.noise.eta_deg = e;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(out) = &o.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params_for(self.model)?;
        self.grid_spec().validate()?;
        self.integrator.validate()?;
        if !(self.noise.eta_deg >= 0.0 && self.noise.eta_deg.is_finite()) {
            bail!("noise.eta_deg must be >= 0");
        }
        let etas = &self.sweeps.eta_deg;
        if etas.iter().any(|e| !(*e >= 0.0)) || etas.windows(2).any(|w| w[1] < w[0]) {
            bail!("sweeps.eta_deg must be ascending and >= 0");
        }
        if self.sweeps.energies.iter().any(|e| !(*e > 0.0)) {
            bail!("sweeps.energies must be positive");
        }
        let b = &self.bifurcation;
        if b.n_alpha == 0 || b.n_s < 2 || !(b.alpha_deg[0] <= b.alpha_deg[1]) {
            bail!("bifurcation needs n_alpha >= 1, n_s >= 2 and ascending alpha_deg");
        }
        self.pso_config().validate()?;
        self.param_space()?.validate()?;
        let [n, m] = self.optimizer.resolution;
        GridSpec::standard(n, m, self.energy).validate()?;
        Ok(())
    }

    pub fn params_for(&self, kind: ModelKind) -> Result<ModelParams<f64>> {
        let mut p = ModelParams::reference(kind);
        let o = &self.params;
        if let Some(m) = o.m {
            p.m = m;
        }
        if let Some(g) = o.g {
            p.g = g;
        }
        if let Some(l0) = o.l0 {
            p.l0 = l0;
        }
        match &mut p.spring {
            Spring::Slip { k } => {
                if o.c.is_some() || o.beta0_deg.is_some() {
                    bail!("params.c and params.beta0_deg apply to the nslip model only");
                }
                if let Some(v) = o.k {
                    *k = v;
                }
            }
            Spring::Nslip { c, beta0 } => {
                if o.k.is_some() {
                    bail!("params.k applies to the slip model only");
                }
                if let Some(v) = o.c {
                    *c = v;
                }
                if let Some(v) = o.beta0_deg {
                    *beta0 = v.to_radians();
                }
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        self.params_for(self.model)
    }

    pub fn grid_spec(&self) -> GridSpec<f64> {
        GridSpec {
            s_bounds: self.grid.s_bounds,
            alpha_bounds_rad: self.grid.alpha_deg.map(f64::to_radians),
            n_s: self.grid.n_s,
            n_alpha: self.grid.n_alpha,
            energy: self.energy,
        }
    }

    pub fn eta_rad(&self) -> f64 {
        self.noise.eta_deg.to_radians()
    }

    pub fn pso_config(&self) -> PsoConfig {
        let o = &self.optimizer;
        PsoConfig {
            n_particles: o.n_particles,
            chi: o.chi,
            c1: o.c1,
            c2: o.c2,
            var_tol: o.var_tol,
            max_iters: o.max_iters,
            seed: self.seed,
        }
    }

    /// Spring parameters of the selected model, around its configured values.
    pub fn param_space(&self) -> Result<ParamSpace> {
        let base = self.params()?;
        let o = &self.optimizer;
        Ok(match self.model {
            ModelKind::Slip => ParamSpace {
                names: vec!["k".into()],
                lower: vec![o.k_bounds[0]],
                upper: vec![o.k_bounds[1]],
                base,
            },
            ModelKind::Nslip => ParamSpace {
                names: vec!["c".into(), "beta0".into()],
                lower: vec![o.c_bounds[0], o.beta0_deg_bounds[0].to_radians()],
                upper: vec![o.c_bounds[1], o.beta0_deg_bounds[1].to_radians()],
                base,
            },
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }
}
