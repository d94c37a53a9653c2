//! Independent reference implementations used across the integration tests.
#![allow(dead_code)]

use springmass::dynamics::ModelParams;
use springmass::poincare::TransitionGrid;

type V4 = [f64; 4];

fn rk4(f: &dyn Fn(&V4) -> V4, y: V4, h: f64) -> V4 {
    let add = |a: &V4, b: &V4, s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    let k1 = f(&y);
    let k2 = f(&add(&y, &k1, h / 2.0));
    let k3 = f(&add(&y, &k2, h / 2.0));
    let k4 = f(&add(&y, &k3, h));
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-step RK4 until `g` falls through zero (located by bisection on the
/// last step) or `fail` holds.
fn run_until(
    f: &dyn Fn(&V4) -> V4,
    mut y: V4,
    g: &dyn Fn(&V4) -> f64,
    fail: &dyn Fn(&V4) -> bool,
    h: f64,
) -> Option<V4> {
    for _ in 0..2_000_000 {
        let next = rk4(f, y, h);
        if fail(&next) {
            return None;
        }
        if g(&y) > 0.0 && g(&next) <= 0.0 {
            let (mut a, mut b) = (0.0, h);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if g(&rk4(f, y, m)) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(rk4(f, y, b));
        }
        y = next;
    }
    None
}

/// Apex-to-apex map by a fixed-step RK4 of the hybrid model, written without
/// the crate's integrator. Returns the next apex `(y, vx)` or `None` on any
/// failure.
pub fn rk4_step(p: &ModelParams<f64>, y0: f64, vx0: f64, alpha: f64) -> Option<(f64, f64)> {
    let r = p.rest_length();
    if y0 < r * alpha.cos() {
        return None;
    }
    let h = 1e-5;
    let flight = |y: &V4| [y[2], y[3], 0.0, -p.g];
    let y = run_until(&flight, [0.0, y0, vx0, 0.0], &|y| y[1] - r * alpha.cos(), &|y| y[1] <= 0.0, h)?;
    let stance = |y: &V4| {
        let l = y[0].hypot(y[1]);
        let f = if l < r { p.leg_force(l).unwrap() } else { 0.0 };
        [y[2], y[3], f / p.m * y[0] / l, f / p.m * y[1] / l - p.g]
    };
    let start = [-r * alpha.sin(), r * alpha.cos(), y[2], y[3]];
    let y = run_until(
        &stance,
        start,
        &|y| r - y[0].hypot(y[1]),
        &|y| y[1] <= 0.0 || y[2] < 0.0 || y[0].hypot(y[1]) < 0.05 * r,
        h,
    )?;
    if y[3] <= 0.0 {
        return None;
    }
    let y = run_until(&flight, y, &|y| y[3], &|y| y[1] <= 0.0, h)?;
    Some((y[1], y[2]))
}

/// Leg spring potential at length `l` by composite Simpson quadrature of the
/// force from `l` to the rest length.
pub fn spring_energy(p: &ModelParams<f64>, l: f64) -> f64 {
    let r = p.rest_length();
    if l >= r {
        return 0.0;
    }
    let n = 2000;
    let h = (r - l) / n as f64;
    let f = |x: f64| p.leg_force(x).unwrap();
    let mut acc = f(l) + f(r);
    for k in 1..n {
        acc += f(l + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Viable state cells by explicit path search: a state is viable iff some
/// path of non-failing, in-bounds transitions reaches a state that lies on a
/// cycle.
pub fn brute_force_viable_states(g: &TransitionGrid<f64>) -> Vec<bool> {
    let n = g.spec.n_s;
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut v: Vec<usize> = (0..g.spec.n_alpha).filter_map(|j| g.next_cell(i, j)).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let reach = |i: usize| {
        // States reachable from i in one or more steps.
        let mut seen = vec![false; n];
        let mut stack = succ[i].clone();
        while let Some(k) = stack.pop() {
            if !seen[k] {
                seen[k] = true;
                stack.extend(succ[k].iter().copied());
            }
        }
        seen
    };
    let reach_all: Vec<Vec<bool>> = (0..n).map(reach).collect();
    let on_cycle: Vec<bool> = (0..n).map(|i| reach_all[i][i]).collect();
    (0..n)
        .map(|i| on_cycle[i] || (0..n).any(|k| reach_all[i][k] && on_cycle[k]))
        .collect()
}

/// Outcome of running the noisy member-action policy from every robust state.
#[derive(Debug)]
pub struct SurvivalReport {
    pub trajectories: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

/// From each state cell of `s_r` (cycled until at least `min_trajectories`
/// runs), pick a uniformly random member action of `q_r` in the current state
/// cell, perturb it uniformly within `eta` and simulate `steps` continuous
/// steps. A step fails if the body fails or lands in a state cell with no
/// member action.
pub fn closed_loop(
    p: &ModelParams<f64>,
    q_r: &springmass::viability::SetMask<f64>,
    s_r: &springmass::viability::StateMask<f64>,
    eta: f64,
    steps: usize,
    min_trajectories: usize,
    seed: u64,
) -> SurvivalReport {
    use rand::{Rng, SeedableRng};
    use springmass::dynamics::{simulate_step, ContinuousState, IntegratorConfig, StepOutcome};
    use springmass::poincare::{denormalize_apex, normalize_apex, ApexState};

    let spec = q_r.spec;
    let cfg = IntegratorConfig::default();
    let starts: Vec<usize> = (0..spec.n_s).filter(|&i| s_r.contains(i)).collect();
    let mut report = SurvivalReport { trajectories: 0, failures: 0, first_failure: None };
    if starts.is_empty() {
        return report;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let runs = min_trajectories.max(starts.len());
    for k in 0..runs {
        let i0 = starts[k % starts.len()];
        let (y, vx) = denormalize_apex(&ApexState { s: spec.s_center(i0), energy: spec.energy }, p);
        let mut state = ContinuousState::apex(y, vx);
        report.trajectories += 1;
        for step in 0..steps {
            let s = normalize_apex(state.y, state.vx, p).map(|a| a.s).ok();
            let row: Vec<usize> = s
                .and_then(|s| spec.state_cell(s))
                .map(|i| (0..spec.n_alpha).filter(|&j| q_r.contains(i, j)).collect())
                .unwrap_or_default();
            let fail = |why: String, report: &mut SurvivalReport| {
                report.failures += 1;
                report.first_failure.get_or_insert(format!("start {i0}, step {step}: {why}"));
            };
            if row.is_empty() {
                fail(format!("no member action at s = {s:?}"), &mut report);
                break;
            }
            let j = row[rng.gen_range(0..row.len())];
            let alpha = spec.alpha_center(j) + rng.gen_range(-eta..=eta);
            match simulate_step(&state, alpha, p, &cfg) {
                Ok(StepOutcome::Apex(next)) => state = ContinuousState::apex(next.y, next.vx),
                other => {
                    fail(format!("{other:?} at s = {s:?}, alpha = {alpha}"), &mut report);
                    break;
                }
            }
        }
    }
    report
}
