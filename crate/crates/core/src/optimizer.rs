//! Constriction particle swarm maximizing set hypervolume over model parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, ModelParams, Spring};
use crate::error::{Error, Result};
use crate::poincare::{build_grid, GridSpec};
use crate::viability::{viable_sets, SetMask};

/// Box-bounded search space and its mapping to model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Parameters the search vector is written into.
    pub base: ModelParams<f64>,
}

impl ParamSpace {
    /// NSLIP knee stiffness `c` in [100, 5000] N m/rad and rest knee angle
    /// `beta0` in [100, 179] degrees (stored in radians).
    pub fn nslip_default() -> Self {
        Self {
            names: vec!["c".into(), "beta0".into()],
            lower: vec![100.0, 100f64.to_radians()],
            upper: vec![5000.0, 179f64.to_radians()],
            base: ModelParams::nslip_reference(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0 || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Precondition("parameter space dimensions disagree".into()));
        }
        for k in 0..n {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Precondition(format!(
                    "bounds of `{}` must be finite with lower < upper",
                    self.names[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && (0..x.len()).all(|k| x[k] >= self.lower[k] && x[k] <= self.upper[k])
    }

    /// Write `x` into a copy of `base`. Recognized names: `m`, `l0`, `k`,
    /// `c`, `beta0` [rad].
    pub fn to_params(&self, x: &[f64]) -> Result<ModelParams<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Precondition("parameter vector has the wrong length".into()));
        }
        let mut p = self.base;
        for (name, &v) in self.names.iter().zip(x) {
            match (name.as_str(), &mut p.spring) {
                ("m", _) => p.m = v,
                ("l0", _) => p.l0 = v,
                ("k", Spring::Slip { k }) => *k = v,
                ("c", Spring::Nslip { c, .. }) => *c = v,
                ("beta0", Spring::Nslip { beta0, .. }) => *beta0 = v,
                _ => {
                    return Err(Error::Precondition(format!(
                        "parameter `{name}` does not apply to the {} model",
                        p.kind()
                    )))
                }
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub chi: f64,
    pub c1: f64,
    pub c2: f64,
    /// Stop once the variance of the swarm's current fitness drops below this.
    pub var_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 25,
            chi: 0.7298,
            c1: 2.05,
            c2: 2.05,
            var_tol: 1e-5,
            max_iters: 200,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Precondition("at least two particles".into()));
        }
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return Err(Error::Precondition("chi must lie in (0, 1)".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::Precondition("c1 and c2 must be >= 0".into()));
        }
        if !(self.var_tol >= 0.0) {
            return Err(Error::Precondition("var_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_fitness: f64,
    pub best_params: Vec<f64>,
    pub fitness_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsoTrace {
    pub config: PsoConfig,
    pub space: ParamSpace,
    /// Record 0 is the initial swarm; record `k` follows the `k`-th update.
    pub iterations: Vec<IterationRecord>,
    pub verdict: Verdict,
}

impl PsoTrace {
    pub fn best(&self) -> &IterationRecord {
        self.iterations.last().expect("trace has the initial record")
    }

    /// Number of velocity updates performed.
    pub fn updates(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Maximize `fitness` over `space`.
///
/// Particles start uniformly in the box with zero velocity. Each update draws
/// `r1, r2` per dimension from a single seeded stream in particle order, then
/// evaluates the swarm in parallel. A position past a bound is clamped and its
/// velocity component zeroed.
pub fn pso_optimize<F>(space: &ParamSpace, cfg: &PsoConfig, fitness: F) -> Result<PsoTrace>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    cfg.validate()?;
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x: Vec<Vec<f64>> = (0..cfg.n_particles)
        .map(|_| {
            (0..dim)
                .map(|k| rng.gen_range(space.lower[k]..=space.upper[k]))
                .collect()
        })
        .collect();
    let mut v = vec![vec![0.0; dim]; cfg.n_particles];
    let eval = |x: &[Vec<f64>]| -> Vec<f64> {
        x.par_iter()
            .map(|p| {
                let f = fitness(p);
                if f.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    f
                }
            })
            .collect()
    };

    let mut f = eval(&x);
    let mut pbest = x.clone();
    let mut pbest_f = f.clone();
    let mut g = argmax(&f);
    let mut gbest = x[g].clone();
    let mut gbest_f = f[g];
    let mut iterations = vec![IterationRecord {
        iteration: 0,
        best_fitness: gbest_f,
        best_params: gbest.clone(),
        fitness_variance: variance(&f),
    }];

    let mut verdict = Verdict::MaxIters;
    for it in 1..=cfg.max_iters {
        if variance(&f) < cfg.var_tol {
            verdict = Verdict::Converged;
            break;
        }
        for p in 0..cfg.n_particles {
            for k in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let vk = cfg.chi
                    * (v[p][k]
                        + cfg.c1 * r1 * (pbest[p][k] - x[p][k])
                        + cfg.c2 * r2 * (gbest[k] - x[p][k]));
                let xk = x[p][k] + vk;
                if xk < space.lower[k] || xk > space.upper[k] {
                    x[p][k] = xk.clamp(space.lower[k], space.upper[k]);
                    v[p][k] = 0.0;
                } else {
                    x[p][k] = xk;
                    v[p][k] = vk;
                }
            }
        }
        f = eval(&x);
        for p in 0..cfg.n_particles {
            if f[p] > pbest_f[p] {
                pbest_f[p] = f[p];
                pbest[p] = x[p].clone();
            }
        }
        g = argmax(&pbest_f);
        if pbest_f[g] > gbest_f {
            gbest_f = pbest_f[g];
            gbest = pbest[g].clone();
        }
        iterations.push(IterationRecord {
            iteration: it,
            best_fitness: gbest_f,
            best_params: gbest.clone(),
            fitness_variance: variance(&f),
        });
    }
    if verdict == Verdict::MaxIters && variance(&f) < cfg.var_tol {
        verdict = Verdict::Converged;
    }
    Ok(PsoTrace {
        config: *cfg,
        space: space.clone(),
        iterations,
        verdict,
    })
}

fn argmax(f: &[f64]) -> usize {
    // First maximum wins, so ties resolve by particle index.
    let mut best = 0;
    for (i, v) in f.iter().enumerate() {
        if *v > f[best] {
            best = i;
        }
    }
    best
}

/// Optional per-cell weights for [`weighted_measure`], row-major by state cell.
pub type CellWeights = Vec<f64>;

/// Weighted member fraction: `sum(w over members) / sum(w)`.
pub fn weighted_measure<T: crate::Scalar>(m: &SetMask<T>, weights: Option<&[f64]>) -> f64 {
    let members = m.members();
    match weights {
        None => members.iter().filter(|x| **x).count() as f64 / members.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return 0.0;
            }
            members
                .iter()
                .zip(w)
                .filter(|(m, _)| **m)
                .map(|(_, w)| *w)
                .sum::<f64>()
                / total
        }
    }
}

/// Hypervolume of `Q_V` for the parameters `x`.
///
/// Parameters that do not map to a valid model, and grids that cannot be
/// built, score 0 with a warning.
pub fn fitness_qv(
    x: &[f64],
    space: &ParamSpace,
    spec: &GridSpec<f64>,
    cfg: &IntegratorConfig<f64>,
    weights: Option<&[f64]>,
) -> f64 {
    let p = match space.to_params(x) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("fitness undefined at {x:?}: {e}");
            return 0.0;
        }
    };
    match build_grid(spec, &p, cfg) {
        Ok(g) => weighted_measure(&viable_sets(&g).0, weights),
        Err(e) => {
            log::warn!("grid failed at {x:?}: {e}");
            0.0
        }
    }
}
