//! Apex Poincaré section: normalized apex height, the transition map, and
//! the dense transition grid over (state, action) cells.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::dynamics::{
    simulate_step, ContinuousState, IntegratorConfig, ModelKind, ModelParams, Spring,
    StepOutcome,
};
use crate::error::{DynamicsError, Error, Result};
use crate::scalar::{lit, Scalar};

pub const GRID_KIND: &str = "transition-grid";
pub const FAILURE_CODE: f64 = -1.0;
pub const INFEASIBLE_CODE: f64 = -2.0;

/// Apex state reduced to the potential-energy fraction `s` at total energy `energy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApexState<T> {
    pub s: T,
    pub energy: T,
}

/// `s = g y / (g y + vx^2 / 2)`, `E = m g y + m vx^2 / 2`.
pub fn normalize_apex<T: Scalar>(y: T, vx: T, p: &ModelParams<T>) -> Result<ApexState<T>> {
    let pot = p.g * y;
    let kin = vx * vx / lit(2.0);
    let total = pot + kin;
    if !(total > T::zero()) {
        return Err(Error::DegenerateApex);
    }
    Ok(ApexState {
        s: (pot / total).max(T::zero()).min(T::one()),
        energy: p.m * total,
    })
}

/// Apex height and forward speed of a normalized state.
pub fn denormalize_apex<T: Scalar>(a: &ApexState<T>, p: &ModelParams<T>) -> (T, T) {
    let y = a.s * a.energy / (p.m * p.g);
    let vx = (lit::<T>(2.0) * a.energy * (T::one() - a.s) / p.m)
        .max(T::zero())
        .sqrt();
    (y, vx)
}

/// Cell-centered sampling of the (s, alpha) plane at one energy level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec<T> {
    pub s_bounds: [T; 2],
    /// Angle-of-attack bounds [rad].
    pub alpha_bounds_rad: [T; 2],
    pub n_s: usize,
    pub n_alpha: usize,
    /// Total mechanical energy [J].
    pub energy: T,
}

impl<T: Scalar> GridSpec<T> {
    /// Full state range and angle of attack in [0, 90] degrees.
    pub fn standard(n_s: usize, n_alpha: usize, energy: T) -> Self {
        Self {
            s_bounds: [T::zero(), T::one()],
            alpha_bounds_rad: [T::zero(), T::FRAC_PI_2()],
            n_s,
            n_alpha,
            energy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_owned()));
        let [s_lo, s_hi] = self.s_bounds;
        let [a_lo, a_hi] = self.alpha_bounds_rad;
        if !(s_lo >= T::zero() && s_hi <= T::one() && s_lo < s_hi) {
            return bad("state bounds must satisfy 0 <= lo < hi <= 1");
        }
        if !(a_lo < a_hi) || !a_lo.is_finite() || !a_hi.is_finite() {
            return bad("action bounds must satisfy lo < hi");
        }
        if self.n_s < 2 || self.n_alpha < 2 {
            return bad("at least two cells per axis");
        }
        if !(self.energy > T::zero()) || !self.energy.is_finite() {
            return bad("energy must be positive");
        }
        Ok(())
    }

    pub fn ds(&self) -> T {
        (self.s_bounds[1] - self.s_bounds[0]) / cast_usize(self.n_s)
    }

    pub fn dalpha(&self) -> T {
        (self.alpha_bounds_rad[1] - self.alpha_bounds_rad[0]) / cast_usize(self.n_alpha)
    }

    pub fn s_center(&self, i: usize) -> T {
        self.s_bounds[0] + (cast_usize::<T>(i) + lit(0.5)) * self.ds()
    }

    pub fn alpha_center(&self, j: usize) -> T {
        self.alpha_bounds_rad[0] + (cast_usize::<T>(j) + lit(0.5)) * self.dalpha()
    }

    pub fn n_cells(&self) -> usize {
        self.n_s * self.n_alpha
    }

    /// State cell containing `s`; the upper bound belongs to the top cell.
    pub fn state_cell(&self, s: T) -> Option<usize> {
        let [lo, hi] = self.s_bounds;
        if !(s >= lo && s <= hi) {
            return None;
        }
        let idx = ((s - lo) / self.ds()).floor().to_usize().unwrap_or(0);
        Some(idx.min(self.n_s - 1))
    }

    pub fn cast<U: Scalar>(&self) -> GridSpec<U> {
        GridSpec {
            s_bounds: self.s_bounds.map(conv),
            alpha_bounds_rad: self.alpha_bounds_rad.map(conv),
            n_s: self.n_s,
            n_alpha: self.n_alpha,
            energy: conv(self.energy),
        }
    }
}

fn cast_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("index representable")
}

pub(crate) fn conv<T: Scalar, U: Scalar>(x: T) -> U {
    U::from_f64(x.to_f64_lossy()).expect("finite conversion")
}

impl<T: Scalar> ModelParams<T> {
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            m: conv(self.m),
            g: conv(self.g),
            l0: conv(self.l0),
            spring: match self.spring {
                Spring::Slip { k } => Spring::Slip { k: conv(k) },
                Spring::Nslip { c, beta0 } => Spring::Nslip {
                    c: conv(c),
                    beta0: conv(beta0),
                },
            },
        }
    }
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn cast<U: Scalar>(&self) -> IntegratorConfig<U> {
        IntegratorConfig {
            rel_tol: conv(self.rel_tol),
            abs_tol: conv(self.abs_tol),
            event_tol: conv(self.event_tol),
            max_step_time: conv(self.max_step_time),
            initial_step: conv(self.initial_step),
            max_step: conv(self.max_step),
        }
    }
}

/// Result of one (state, action) cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellOutcome<T> {
    NextS(T),
    Failure,
    Infeasible,
}

impl<T: Scalar> CellOutcome<T> {
    pub fn next_s(&self) -> Option<T> {
        match self {
            CellOutcome::NextS(s) => Some(*s),
            _ => None,
        }
    }

    pub fn code(&self) -> f64 {
        match self {
            CellOutcome::NextS(s) => s.to_f64_lossy(),
            CellOutcome::Failure => FAILURE_CODE,
            CellOutcome::Infeasible => INFEASIBLE_CODE,
        }
    }

    pub fn from_code(v: f64) -> Result<Self> {
        if v == FAILURE_CODE {
            Ok(CellOutcome::Failure)
        } else if v == INFEASIBLE_CODE {
            Ok(CellOutcome::Infeasible)
        } else if (0.0..=1.0).contains(&v) {
            Ok(CellOutcome::NextS(T::from_f64(v).expect("finite")))
        } else {
            Err(Error::Format(format!("invalid cell code {v}")))
        }
    }
}

/// Whether the foot starts underground: `y(s, E) < l_rest cos(alpha)`.
pub fn is_infeasible<T: Scalar>(s: T, alpha: T, energy: T, p: &ModelParams<T>) -> bool {
    let (y, _) = denormalize_apex(&ApexState { s, energy }, p);
    y < p.rest_length() * alpha.cos()
}

/// One application of the apex-to-apex map at energy `energy`.
pub fn transition<T: Scalar>(
    s: T,
    alpha: T,
    energy: T,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> std::result::Result<CellOutcome<T>, DynamicsError> {
    let (y, vx) = denormalize_apex(&ApexState { s, energy }, p);
    let apex = ContinuousState::apex(y, vx);
    Ok(match simulate_step(&apex, alpha, p, cfg)? {
        StepOutcome::Apex(next) => match normalize_apex(next.y, next.vx, p) {
            Ok(a) => CellOutcome::NextS(a.s),
            Err(_) => CellOutcome::Failure,
        },
        StepOutcome::Failure(_) => CellOutcome::Failure,
        StepOutcome::Infeasible => CellOutcome::Infeasible,
    })
}

/// Dense lookup table of the transition map, row-major by state cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionGrid<T> {
    pub spec: GridSpec<T>,
    pub params: ModelParams<T>,
    pub integrator: IntegratorConfig<T>,
    cells: Vec<CellOutcome<T>>,
    /// Cells whose simulation raised an integrator error (stored as failures).
    pub errored_cells: usize,
}

impl<T: Scalar> TransitionGrid<T> {
    /// Assemble a grid from precomputed outcomes, row-major by state cell.
    pub fn from_cells(
        spec: GridSpec<T>,
        params: ModelParams<T>,
        integrator: IntegratorConfig<T>,
        cells: Vec<CellOutcome<T>>,
    ) -> Result<Self> {
        spec.validate()?;
        if cells.len() != spec.n_cells() {
            return Err(Error::InvalidSpec(format!(
                "expected {} cells, got {}",
                spec.n_cells(),
                cells.len()
            )));
        }
        if let Some(bad) = cells
            .iter()
            .filter_map(|c| c.next_s())
            .find(|s| !(*s >= T::zero() && *s <= T::one()))
        {
            return Err(Error::InvalidSpec(format!("next state {bad} outside [0, 1]")));
        }
        Ok(Self {
            spec,
            params,
            integrator,
            cells,
            errored_cells: 0,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> CellOutcome<T> {
        self.cells[i * self.spec.n_alpha + j]
    }

    pub fn cells(&self) -> &[CellOutcome<T>] {
        &self.cells
    }

    /// State cell reached from (i, j), if the cell is a non-failing transition
    /// landing inside the state bounds.
    #[inline]
    pub fn next_cell(&self, i: usize, j: usize) -> Option<usize> {
        self.get(i, j).next_s().and_then(|s| self.spec.state_cell(s))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_artifact()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }

    pub fn to_artifact(&self) -> Result<Artifact> {
        let header = GridHeader {
            model: self.params.kind(),
            scalar: std::any::type_name::<T>().to_owned(),
            errored_cells: self.errored_cells,
            params: self.params.cast(),
            spec: self.spec.cast(),
            integrator: self.integrator.cast(),
        };
        let rows = self
            .cells
            .chunks(self.spec.n_alpha)
            .map(|row| row.iter().map(CellOutcome::code).collect())
            .collect();
        Artifact::new(GRID_KIND, &header, rows)
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        a.expect_kind(GRID_KIND)?;
        let h: GridHeader = a.header_as()?;
        if h.params.kind() != h.model {
            return Err(Error::Format("model tag disagrees with parameters".into()));
        }
        let spec: GridSpec<T> = h.spec.cast();
        if a.rows.len() != spec.n_s || a.rows.iter().any(|r| r.len() != spec.n_alpha) {
            return Err(Error::Format("payload shape disagrees with grid spec".into()));
        }
        let cells = a
            .rows
            .iter()
            .flatten()
            .map(|&v| CellOutcome::from_code(v))
            .collect::<Result<Vec<_>>>()?;
        let mut grid = Self::from_cells(spec, h.params.cast(), h.integrator.cast(), cells)?;
        grid.errored_cells = h.errored_cells;
        Ok(grid)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    model: ModelKind,
    scalar: String,
    errored_cells: usize,
    params: ModelParams<f64>,
    spec: GridSpec<f64>,
    integrator: IntegratorConfig<f64>,
}

/// Evaluate the transition map at every cell center on the current rayon pool.
pub fn build_grid<T: Scalar>(
    spec: &GridSpec<T>,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<TransitionGrid<T>> {
    spec.validate()?;
    p.validate()?;
    cfg.validate()?;
    let n_alpha = spec.n_alpha;
    let results: Vec<(CellOutcome<T>, bool)> = (0..spec.n_cells())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n_alpha, idx % n_alpha);
            match transition(spec.s_center(i), spec.alpha_center(j), spec.energy, p, cfg) {
                Ok(c) => (c, false),
                Err(_) => (CellOutcome::Failure, true),
            }
        })
        .collect();
    let errored = results.iter().filter(|(_, e)| *e).count();
    if errored > 0 {
        log::warn!("{errored} grid cells raised integrator errors and were marked as failures");
    }
    let cells = results.into_iter().map(|(c, _)| c).collect();
    let mut grid = TransitionGrid::from_cells(*spec, *p, *cfg, cells)?;
    grid.errored_cells = errored;
    Ok(grid)
}

/// [`build_grid`] on a dedicated pool of `workers` threads.
pub fn build_grid_with_workers<T: Scalar>(
    spec: &GridSpec<T>,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
    workers: usize,
) -> Result<TransitionGrid<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    pool.install(|| build_grid(spec, p, cfg))
}
