//! Period-1 fixed points, basins, noise thresholds and set-size sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::dynamics::{IntegratorConfig, ModelParams};
use crate::error::{Error, Result};
use crate::poincare::{
    build_grid, conv, denormalize_apex, transition, ApexState, GridSpec, TransitionGrid,
};
use crate::scalar::{lit, Scalar};
use crate::viability::{measure, robust_sets, viable_sets, NoiseModel, SetMask, StateMask};

pub const FIXED_POINT_TOL: f64 = 1e-8;
pub const BASIN_ITERATIONS: usize = 200;
pub const BASIN_RADIUS_CELLS: f64 = 2.0;
pub const BIFURCATION_KIND: &str = "bifurcation";
pub const SWEEP_KIND: &str = "sweep";
pub const ENERGY_STATES_KIND: &str = "energy-states";
pub const ISOLINE_KIND: &str = "isolines";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Solution of `P(s, alpha) = s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoint<T> {
    pub alpha: T,
    pub s_star: T,
    pub stability: Stability,
    /// `dP/ds` at `s_star`.
    pub derivative: T,
}

/// Contiguous state interval attracted to the stable fixed point `s_star`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basin<T> {
    pub s_star: T,
    pub lo: T,
    pub hi: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationSlice<T> {
    pub alpha: T,
    pub fixed_points: Vec<FixedPoint<T>>,
    pub basins: Vec<Basin<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationDiagram<T> {
    pub energy: T,
    pub s_bounds: [T; 2],
    pub n_s: usize,
    pub slices: Vec<BifurcationSlice<T>>,
}

/// Robust-set sizes along one axis (noise level or energy).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult<T> {
    pub axis: SweepAxis,
    pub values: Vec<T>,
    pub qr_measures: Vec<f64>,
    pub sr_measures: Vec<f64>,
    pub state_masks: Vec<StateMask<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Noise half-width [rad].
    Eta,
    /// Total energy [J].
    Energy,
}

/// Bracket of the largest noise level with a nonempty robust set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseThreshold<T> {
    pub last_nonempty: T,
    pub first_empty: T,
}

/// One state cell of an energy level in apex coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApexPoint<T> {
    pub energy: T,
    pub s: T,
    pub y: T,
    pub vx: T,
    pub robust: bool,
}

/// Crossing of a constant-speed line with one energy level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsolinePoint<T> {
    pub vx: T,
    pub energy: T,
    pub y: T,
    pub s: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergySweep<T> {
    pub sweep: SweepResult<T>,
    pub points: Vec<ApexPoint<T>>,
    pub isolines: Vec<IsolinePoint<T>>,
}

/// Apex-to-apex map at fixed `alpha` through the continuous simulator.
/// Failures, infeasible starts and integrator errors give `None`.
pub fn simulator_map<'a, T: Scalar>(
    alpha: T,
    energy: T,
    p: &'a ModelParams<T>,
    cfg: &'a IntegratorConfig<T>,
) -> impl Fn(T) -> Option<T> + Sync + 'a {
    move |s| {
        transition(s, alpha, energy, p, cfg)
            .ok()
            .and_then(|c| c.next_s())
    }
}

fn residual_tol<T: Scalar>() -> T {
    lit::<T>(FIXED_POINT_TOL).max(T::epsilon() * lit(64.0))
}

/// Roots of `map(s) - s` on `[s_bounds]`.
///
/// Sign changes are bracketed on the endpoints, the `n` cell centers and the
/// edges of ranges where the map fails, then refined by bisection until the
/// residual is below [`FIXED_POINT_TOL`].
/// Stability comes from a central difference of width one cell (one-sided at
/// a bound or next to a failing state).
pub fn find_fixed_points<T: Scalar>(
    map: impl Fn(T) -> Option<T>,
    alpha: T,
    s_bounds: [T; 2],
    n: usize,
) -> Vec<FixedPoint<T>> {
    let [lo, hi] = s_bounds;
    let ds = (hi - lo) / T::from_usize(n.max(1)).expect("count");
    let mut samples = Vec::with_capacity(n + 2);
    samples.push(lo);
    samples.extend((0..n).map(|i| lo + (T::from_usize(i).expect("index") + lit(0.5)) * ds));
    samples.push(hi);
    let h = |s: T| map(s).map(|p| p - s);
    let coarse: Vec<Option<T>> = samples.iter().map(|s| h(*s)).collect();
    // Where the map stops being defined between two samples, add the last
    // defined point so roots next to a failure boundary are still bracketed.
    let mut values = Vec::with_capacity(samples.len());
    let mut points = Vec::with_capacity(samples.len());
    for k in 0..samples.len() {
        if k > 0 && coarse[k - 1].is_some() != coarse[k].is_some() {
            let edge = defined_edge(&h, samples[k - 1], samples[k], coarse[k - 1].is_some());
            if let Some(he) = h(edge) {
                points.push(edge);
                values.push(Some(he));
            }
        }
        points.push(samples[k]);
        values.push(coarse[k]);
    }
    let samples = points;
    let tol = residual_tol::<T>();

    let mut roots = Vec::new();
    for k in 0..samples.len() {
        if values[k] == Some(T::zero()) {
            roots.push(samples[k]);
        }
        if k + 1 == samples.len() {
            break;
        }
        let (Some(ha), Some(hb)) = (values[k], values[k + 1]) else {
            continue;
        };
        if ha == T::zero() || hb == T::zero() || (ha > T::zero()) == (hb > T::zero()) {
            continue;
        }
        if let Some(r) = bisect(&h, samples[k], samples[k + 1], ha, tol) {
            roots.push(r);
        }
    }

    roots
        .into_iter()
        .filter_map(|s_star| {
            let derivative = slope(&map, s_star, ds, lo, hi)?;
            let stability = if derivative.abs() < T::one() {
                Stability::Stable
            } else {
                Stability::Unstable
            };
            Some(FixedPoint {
                alpha,
                s_star,
                stability,
                derivative,
            })
        })
        .collect()
}

fn bisect<T: Scalar>(h: &impl Fn(T) -> Option<T>, mut a: T, mut b: T, mut ha: T, tol: T) -> Option<T> {
    for _ in 0..200 {
        let m = (a + b) / lit(2.0);
        let hm = h(m)?;
        if hm.abs() <= tol {
            return Some(m);
        }
        if (hm > T::zero()) == (ha > T::zero()) {
            a = m;
            ha = hm;
        } else {
            b = m;
        }
        if b - a <= T::epsilon() * (a.abs() + b.abs()) {
            break;
        }
    }
    None
}

/// Point closest to the definedness boundary between `a` and `b` on the
/// defined side (`a` is defined iff `left_defined`).
fn defined_edge<T: Scalar>(h: &impl Fn(T) -> Option<T>, a: T, b: T, left_defined: bool) -> T {
    let (mut good, mut bad) = if left_defined { (a, b) } else { (b, a) };
    for _ in 0..60 {
        let m = (good + bad) / lit(2.0);
        if m == good || m == bad {
            break;
        }
        if h(m).is_some() {
            good = m;
        } else {
            bad = m;
        }
    }
    good
}

fn slope<T: Scalar>(map: &impl Fn(T) -> Option<T>, s: T, ds: T, lo: T, hi: T) -> Option<T> {
    let half = ds / lit(2.0);
    let below = (s - half).max(lo);
    let above = (s + half).min(hi);
    let p_below = map(below);
    let p_above = map(above);
    let p_mid = map(s)?;
    match (p_below, p_above) {
        (Some(a), Some(b)) if above > below => Some((b - a) / (above - below)),
        (None, Some(b)) if above > s => Some((b - p_mid) / (above - s)),
        (Some(a), None) if s > below => Some((p_mid - a) / (s - below)),
        _ => None,
    }
}

/// Whether iterating `map` from `s0` settles within two cells of `s_star`.
fn attracted<T: Scalar>(map: &impl Fn(T) -> Option<T>, s0: T, s_star: T, ds: T) -> bool {
    let radius = ds * lit(BASIN_RADIUS_CELLS);
    let tight = residual_tol::<T>();
    let mut s = s0;
    for _ in 0..BASIN_ITERATIONS {
        match map(s) {
            Some(next) => s = next,
            None => return false,
        }
        if (s - s_star).abs() <= tight {
            return true;
        }
    }
    (s - s_star).abs() <= radius
}

/// Fixed points and basins for evenly spaced angles of attack.
///
/// `alpha_range` is inclusive [rad]; the state axis is sampled at `n_s` cell
/// centers of [0, 1].
pub fn bifurcation_sweep<T: Scalar>(
    p: &ModelParams<T>,
    energy: T,
    alpha_range: [T; 2],
    n_alpha: usize,
    n_s: usize,
    cfg: &IntegratorConfig<T>,
) -> Result<BifurcationDiagram<T>> {
    p.validate()?;
    cfg.validate()?;
    if n_alpha == 0 || n_s < 2 || !(alpha_range[0] <= alpha_range[1]) || !(energy > T::zero()) {
        return Err(Error::Precondition("invalid bifurcation sweep".into()));
    }
    let s_bounds = [T::zero(), T::one()];
    let ds = T::one() / T::from_usize(n_s).expect("count");
    let alphas: Vec<T> = if n_alpha == 1 {
        vec![alpha_range[0]]
    } else {
        let step = (alpha_range[1] - alpha_range[0]) / T::from_usize(n_alpha - 1).expect("count");
        (0..n_alpha)
            .map(|k| alpha_range[0] + step * T::from_usize(k).expect("index"))
            .collect()
    };
    let slices = alphas
        .par_iter()
        .map(|&alpha| {
            let map = simulator_map(alpha, energy, p, cfg);
            let fixed_points = find_fixed_points(&map, alpha, s_bounds, n_s);
            let basins = basins_of(&map, &fixed_points, n_s, ds);
            BifurcationSlice {
                alpha,
                fixed_points,
                basins,
            }
        })
        .collect();
    Ok(BifurcationDiagram {
        energy,
        s_bounds,
        n_s,
        slices,
    })
}

fn basins_of<T: Scalar>(
    map: &(impl Fn(T) -> Option<T> + Sync),
    fixed_points: &[FixedPoint<T>],
    n_s: usize,
    ds: T,
) -> Vec<Basin<T>> {
    let stable: Vec<T> = fixed_points
        .iter()
        .filter(|f| f.stability == Stability::Stable)
        .map(|f| f.s_star)
        .collect();
    if stable.is_empty() {
        return Vec::new();
    }
    let center = |i: usize| (T::from_usize(i).expect("index") + lit(0.5)) * ds;
    let owner: Vec<Option<usize>> = (0..n_s)
        .map(|i| stable.iter().position(|&s| attracted(map, center(i), s, ds)))
        .collect();
    let mut basins = Vec::new();
    let mut i = 0;
    while i < n_s {
        let Some(k) = owner[i] else {
            i += 1;
            continue;
        };
        let start = i;
        while i < n_s && owner[i] == Some(k) {
            i += 1;
        }
        basins.push(Basin {
            s_star: stable[k],
            lo: T::from_usize(start).expect("index") * ds,
            hi: T::from_usize(i).expect("index") * ds,
        });
    }
    basins
}

fn check_noise_levels<T: Scalar>(etas: &[T]) -> Result<()> {
    if etas.iter().any(|e| !(*e >= T::zero()) || !e.is_finite()) {
        return Err(Error::Precondition("noise levels must be finite and >= 0".into()));
    }
    if etas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("noise levels must be sorted".into()));
    }
    Ok(())
}

/// Largest noise level with a nonempty `Q_R`, found by bisection on `eta`
/// [rad] to tolerance `tol`.
pub fn noise_threshold<T: Scalar>(
    g: &TransitionGrid<T>,
    q_v: &SetMask<T>,
    eta_lo: T,
    eta_hi: T,
    tol: T,
) -> Result<NoiseThreshold<T>> {
    check_noise_levels(&[eta_lo, eta_hi])?;
    if !(tol > T::zero()) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let nonempty = |eta: T| -> Result<bool> {
        Ok(!robust_sets(g, q_v, &NoiseModel::new(eta)?).0.is_empty())
    };
    if !nonempty(eta_lo)? {
        return Err(Error::Precondition(format!(
            "robust set already empty at the lower noise bound {eta_lo}"
        )));
    }
    if nonempty(eta_hi)? {
        return Err(Error::Precondition(format!(
            "robust set still nonempty at the upper noise bound {eta_hi}"
        )));
    }
    let (mut lo, mut hi) = (eta_lo, eta_hi);
    while hi - lo > tol {
        let mid = (lo + hi) / lit(2.0);
        if nonempty(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NoiseThreshold {
        last_nonempty: lo,
        first_empty: hi,
    })
}

/// `Q_R` and `S_R` sizes for each noise level [rad], in ascending order.
pub fn noise_sweep<T: Scalar>(
    g: &TransitionGrid<T>,
    q_v: &SetMask<T>,
    etas: &[T],
) -> Result<SweepResult<T>> {
    check_noise_levels(etas)?;
    let entries = etas
        .par_iter()
        .map(|&eta| {
            let (q_r, s_r) = robust_sets(g, q_v, &NoiseModel::new(eta)?);
            Ok((measure(&q_r), s_r.measure(), s_r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_sweep(SweepAxis::Eta, etas.to_vec(), entries))
}

fn collect_sweep<T>(
    axis: SweepAxis,
    values: Vec<T>,
    entries: Vec<(f64, f64, StateMask<T>)>,
) -> SweepResult<T> {
    let mut qr_measures = Vec::with_capacity(entries.len());
    let mut sr_measures = Vec::with_capacity(entries.len());
    let mut state_masks = Vec::with_capacity(entries.len());
    for (q, s, m) in entries {
        qr_measures.push(q);
        sr_measures.push(s);
        state_masks.push(m);
    }
    SweepResult {
        axis,
        values,
        qr_measures,
        sr_measures,
        state_masks,
    }
}

/// Ground-height change `dh` moves an apex along its forward-speed isoline.
pub fn perturb_ground<T: Scalar>(y: T, vx: T, dh: T) -> (T, T) {
    (y + dh, vx)
}

/// Robust states at several energy levels, with a fresh grid per level.
///
/// `spec.energy` is ignored; every other field is reused. Besides the sweep,
/// the robust masks are listed in (y, vx) apex coordinates together with ten
/// constant-speed isolines crossing every energy level.
pub fn energy_sweep<T: Scalar>(
    p: &ModelParams<T>,
    energies: &[T],
    eta: T,
    spec: &GridSpec<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<EnergySweep<T>> {
    if energies.is_empty() || energies.iter().any(|e| !(*e > T::zero()) || !e.is_finite()) {
        return Err(Error::Precondition("energies must be positive".into()));
    }
    let noise = NoiseModel::new(eta)?;
    let mut entries = Vec::with_capacity(energies.len());
    let mut points = Vec::new();
    for &energy in energies {
        let spec = GridSpec { energy, ..*spec };
        let g = build_grid(&spec, p, cfg)?;
        let (q_v, _) = viable_sets(&g);
        let (q_r, s_r) = robust_sets(&g, &q_v, &noise);
        for i in 0..spec.n_s {
            let s = spec.s_center(i);
            let (y, vx) = denormalize_apex(&ApexState { s, energy }, p);
            points.push(ApexPoint {
                energy,
                s,
                y,
                vx,
                robust: s_r.contains(i),
            });
        }
        entries.push((measure(&q_r), s_r.measure(), s_r));
    }
    let sweep = collect_sweep(SweepAxis::Energy, energies.to_vec(), entries);
    let isolines = isolines(p, energies, 10);
    Ok(EnergySweep {
        sweep,
        points,
        isolines,
    })
}

/// `count` constant-speed lines, evenly spaced in (0, v_max], where v_max is
/// the speed of a zero-height apex at the largest energy. Each line is
/// sampled where it meets an energy level with a nonnegative apex height.
pub fn isolines<T: Scalar>(p: &ModelParams<T>, energies: &[T], count: usize) -> Vec<IsolinePoint<T>> {
    let two: T = lit(2.0);
    let e_max = energies.iter().copied().fold(T::zero(), T::max);
    let v_max = (two * e_max / p.m).sqrt();
    let mut out = Vec::new();
    for k in 1..=count {
        let vx = v_max * T::from_usize(k).expect("index") / T::from_usize(count).expect("count");
        for &energy in energies {
            let y = (energy / p.m - vx * vx / two) / p.g;
            if y < T::zero() {
                continue;
            }
            let s = p.g * y / (energy / p.m);
            out.push(IsolinePoint { vx, energy, y, s });
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepHeader {
    axis: SweepAxis,
    columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BifurcationHeader {
    energy: f64,
    s_bounds: [f64; 2],
    n_s: usize,
    columns: Vec<String>,
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl<T: Scalar> SweepResult<T> {
    /// One row per entry: axis value, `Q_R` measure, `S_R` measure.
    pub fn to_artifact(&self) -> Result<Artifact> {
        let header = SweepHeader {
            axis: self.axis,
            columns: columns(&["value", "qr_measure", "sr_measure"]),
        };
        let rows = (0..self.values.len())
            .map(|k| vec![conv(self.values[k]), self.qr_measures[k], self.sr_measures[k]])
            .collect();
        Artifact::new(SWEEP_KIND, &header, rows)
    }
}

impl<T: Scalar> EnergySweep<T> {
    /// State cells as `energy, s, y, vx, robust (1/0)` rows.
    pub fn points_artifact(&self, eta: T) -> Result<Artifact> {
        let rows = self
            .points
            .iter()
            .map(|q| {
                vec![conv(q.energy), conv(q.s), conv(q.y), conv(q.vx), q.robust as u8 as f64]
            })
            .collect();
        let header = EnergyHeader {
            eta_rad: conv(eta),
            columns: columns(&["energy", "s", "y", "vx", "robust"]),
        };
        Artifact::new(ENERGY_STATES_KIND, &header, rows)
    }

    /// Isoline samples as `vx, energy, y, s` rows.
    pub fn isolines_artifact(&self, eta: T) -> Result<Artifact> {
        let rows = self
            .isolines
            .iter()
            .map(|q| vec![conv(q.vx), conv(q.energy), conv(q.y), conv(q.s)])
            .collect();
        let header = EnergyHeader {
            eta_rad: conv(eta),
            columns: columns(&["vx", "energy", "y", "s"]),
        };
        Artifact::new(ISOLINE_KIND, &header, rows)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyHeader {
    eta_rad: f64,
    columns: Vec<String>,
}

impl<T: Scalar> BifurcationDiagram<T> {
    /// Fixed points as `alpha, s_star, stable (1/0), derivative` rows.
    pub fn fixed_points_artifact(&self) -> Result<Artifact> {
        let rows = self
            .slices
            .iter()
            .flat_map(|sl| sl.fixed_points.iter())
            .map(|f| {
                vec![
                    conv(f.alpha),
                    conv(f.s_star),
                    (f.stability == Stability::Stable) as u8 as f64,
                    conv(f.derivative),
                ]
            })
            .collect();
        Artifact::new(
            BIFURCATION_KIND,
            &self.header(&["alpha_rad", "s_star", "stable", "derivative"]),
            rows,
        )
    }

    /// Basins as `alpha, s_star, lo, hi` rows.
    pub fn basins_artifact(&self) -> Result<Artifact> {
        let rows = self
            .slices
            .iter()
            .flat_map(|sl| sl.basins.iter().map(move |b| (sl.alpha, b)))
            .map(|(a, b)| vec![conv(a), conv(b.s_star), conv(b.lo), conv(b.hi)])
            .collect();
        Artifact::new(
            BIFURCATION_KIND,
            &self.header(&["alpha_rad", "s_star", "lo", "hi"]),
            rows,
        )
    }

    fn header(&self, names: &[&str]) -> BifurcationHeader {
        BifurcationHeader {
            energy: conv(self.energy),
            s_bounds: self.s_bounds.map(conv),
            n_s: self.n_s,
            columns: columns(names),
        }
    }
}
