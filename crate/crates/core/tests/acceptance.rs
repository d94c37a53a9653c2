//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use springmass::analysis::*;
use springmass::dynamics::*;
use springmass::optimizer::*;
use springmass::poincare::*;
use springmass::viability::*;

const ENERGY: f64 = 1860.0;
const FINE: usize = 400;
const COARSE: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn cfg() -> IntegratorConfig<f64> {
    IntegratorConfig::default()
}

fn grid(kind: ModelKind, spec: &GridSpec<f64>) -> TransitionGrid<f64> {
    grid_with(&ModelParams::reference(kind), spec)
}

fn grid_with(p: &ModelParams<f64>, spec: &GridSpec<f64>) -> TransitionGrid<f64> {
    build_grid(spec, p, &cfg()).expect("grid")
}

struct Fine {
    slip: TransitionGrid<f64>,
    nslip: TransitionGrid<f64>,
    slip_qv: SetMask<f64>,
    nslip_qv: SetMask<f64>,
}

fn qv_ratio(a: &TransitionGrid<f64>, b: &TransitionGrid<f64>) -> f64 {
    measure(&viable_sets(b).0) / measure(&viable_sets(a).0)
}

fn criterion_1(f: &Fine) -> Outcome {
    let (m_s, m_n) = (measure(&f.slip_qv), measure(&f.nslip_qv));
    let ratio = m_n / m_s;
    let pass = (ratio - 1.36).abs() <= 0.05;
    let mut detail = format!("Q_V SLIP {m_s:.4}, NSLIP {m_n:.4}, ratio {ratio:.4} (target 1.36 +/- 0.05)");
    if !pass {
        let mut sweep = Vec::new();
        let wide = GridSpec {
            alpha_bounds_rad: [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
            n_alpha: 2 * FINE,
            ..GridSpec::standard(FINE, FINE, ENERGY)
        };
        sweep.push((
            "alpha in [-90, 90] deg",
            qv_ratio(&grid(ModelKind::Slip, &wide), &grid(ModelKind::Nslip, &wide)),
        ));
        let mut unit_rest = ModelParams::<f64>::nslip_reference();
        if let Spring::Nslip { beta0, .. } = unit_rest.spring {
            unit_rest.l0 = 1.0 / (beta0 / 2.0).sin();
        }
        let std = GridSpec::standard(FINE, FINE, ENERGY);
        sweep.push(("NSLIP rest length 1 m", qv_ratio(&f.slip, &grid_with(&unit_rest, &std))));
        let half = GridSpec::standard(FINE / 2, FINE / 2, ENERGY);
        sweep.push((
            "200x200 grid",
            qv_ratio(&grid(ModelKind::Slip, &half), &grid(ModelKind::Nslip, &half)),
        ));
        for (name, r) in sweep {
            detail.push_str(&format!("; {name}: {r:.4}"));
        }
    }
    outcome(pass, detail)
}

fn threshold_deg(g: &TransitionGrid<f64>, q_v: &SetMask<f64>) -> Result<NoiseThreshold<f64>, String> {
    noise_threshold(g, q_v, 0.0, 45f64.to_radians(), 0.01f64.to_radians())
        .map(|t| NoiseThreshold {
            last_nonempty: t.last_nonempty.to_degrees(),
            first_empty: t.first_empty.to_degrees(),
        })
        .map_err(|e| e.to_string())
}

fn criterion_2(f: &Fine) -> Outcome {
    let (slip, nslip) = match (threshold_deg(&f.slip, &f.slip_qv), threshold_deg(&f.nslip, &f.nslip_qv)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(false, format!("threshold search failed: {a:?} {b:?}")),
    };
    let pass = (slip.last_nonempty - 10.75).abs() <= 1.0 && (nslip.last_nonempty - 20.0).abs() <= 1.0;
    outcome(
        pass,
        format!(
            "critical eta SLIP {:.2} deg (empty at {:.2}), NSLIP {:.2} deg (empty at {:.2}); targets 10.75 and 20.00 +/- 1.0",
            slip.last_nonempty, slip.first_empty, nslip.last_nonempty, nslip.first_empty
        ),
    )
}

/// Largest distance, in cells, from a member of one mask to the nearest
/// member of the other (both ways). `None` if exactly one mask is empty.
fn mask_distance(a: &StateMask<f64>, b: &StateMask<f64>) -> Option<usize> {
    let ia: Vec<usize> = (0..a.spec.n_s).filter(|&i| a.contains(i)).collect();
    let ib: Vec<usize> = (0..b.spec.n_s).filter(|&i| b.contains(i)).collect();
    match (ia.is_empty(), ib.is_empty()) {
        (true, true) => return Some(0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let one_way = |x: &[usize], y: &[usize]| {
        x.iter()
            .map(|&i| y.iter().map(|&k| i.abs_diff(k)).min().unwrap())
            .max()
            .unwrap()
    };
    Some(one_way(&ia, &ib).max(one_way(&ib, &ia)))
}

fn criterion_3(f: &Fine) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for eta_deg in [0.0, 1.0, 2.0, 3.0, 4.0, 5.0] {
        let noise = NoiseModel::from_degrees(eta_deg).unwrap();
        let (_, a) = robust_sets(&f.slip, &f.slip_qv, &noise);
        let (_, b) = robust_sets(&f.nslip, &f.nslip_qv, &noise);
        let d = mask_distance(&a, &b);
        pass &= d.is_some_and(|d| d <= 1);
        parts.push(format!(
            "{eta_deg} deg: S_R {:.4}/{:.4} dist {}",
            a.measure(),
            b.measure(),
            d.map_or("one empty".to_string(), |d| format!("{d} cells"))
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let mut checked = 0;
    for kind in [ModelKind::Slip, ModelKind::Nslip] {
        for energy in [1400.0, 1860.0, 2400.0] {
            let g = grid(kind, &GridSpec::standard(50, 50, energy));
            let q_n = non_failing_set(&g);
            let (q_v, s_v) = viable_sets(&g);
            let fail = |m: String| outcome(false, format!("{kind} E={energy}: {m}"));
            if !q_v.is_subset_of(&q_n) {
                return fail("Q_V not within Q_N".into());
            }
            let brute = common::brute_force_viable_states(&g);
            if s_v.members() != &brute[..] {
                return fail("S_V differs from the path-search oracle".into());
            }
            for i in 0..50 {
                for j in 0..50 {
                    let expect = g.next_cell(i, j).is_some_and(|c| brute[c]);
                    if q_v.contains(i, j) != expect {
                        return fail(format!("Q_V differs from the oracle at ({i}, {j})"));
                    }
                }
            }
            let mut prev = q_v.clone();
            for eta_deg in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0] {
                let noise = NoiseModel::from_degrees(eta_deg).unwrap();
                let (q_r, _) = robust_sets(&g, &q_v, &noise);
                if eta_deg == 0.0 && q_r.members() != q_v.members() {
                    return fail("Q_R(0) != Q_V".into());
                }
                if !q_r.is_subset_of(&prev) || !q_r.is_subset_of(&q_v) {
                    return fail(format!("Q_R not monotone at {eta_deg} deg"));
                }
                if robust_sweep(&g, &q_v, &q_r, noise.cells(g.spec.dalpha())) != q_r {
                    return fail(format!("Q_R not a fixed point at {eta_deg} deg"));
                }
                prev = q_r;
                checked += 1;
            }
        }
    }
    outcome(true, format!("{checked} (grid, eta) cases on 50x50 grids, Q_V equals the path-search oracle"))
}

fn criterion_5() -> Outcome {
    let p = ModelParams::nslip_reference();
    let g = grid_with(&p, &GridSpec::standard(COARSE, COARSE, ENERGY));
    let (q_v, _) = viable_sets(&g);
    let eta = 7.5f64.to_radians();
    let (q_r, s_r) = robust_sets(&g, &q_v, &NoiseModel::new(eta).unwrap());
    if s_r.is_empty() {
        return outcome(false, format!("S_R is empty at 7.5 deg on the {COARSE}x{COARSE} NSLIP grid; no states to start from"));
    }
    let rep = common::closed_loop(&p, &q_r, &s_r, eta, 1000, 100, 1);
    outcome(
        rep.failures == 0 && rep.trajectories >= 100,
        format!("{} trajectories, {} failures {:?}", rep.trajectories, rep.failures, rep.first_failure),
    )
}

fn criterion_6() -> Outcome {
    let cfg = cfg();
    let (mut flight, mut drift, mut resid) = (0.0f64, 0.0f64, 0.0f64);
    for p in [ModelParams::slip_reference(), ModelParams::nslip_reference()] {
        let rest = p.rest_length();
        for (s, a) in [(0.5, 0.5), (0.6, 0.45), (0.4, 0.55), (0.8, 0.3), (0.7, 0.5), (0.45, 0.7)] {
            let (y0, vx0) = denormalize_apex(&ApexState { s, energy: ENERGY }, &p);
            let tr = simulate_step_traced(&ContinuousState::apex(y0, vx0), a, &p, &cfg).unwrap();
            for e in &tr.events {
                resid = resid.max(e.residual.abs());
            }
            let td = tr.events[0].state;
            let t = td.t;
            flight = flight
                .max((td.x - vx0 * t).abs())
                .max((td.y - (y0 - 0.5 * p.g * t * t)).abs())
                .max((td.vy + p.g * t).abs());
            if let (StepOutcome::Apex(n), Some(lo)) =
                (tr.outcome, tr.events.iter().find(|e| e.kind == EventKind::Liftoff))
            {
                let lo = lo.state;
                flight = flight
                    .max((n.t - (lo.t + lo.vy / p.g)).abs())
                    .max((n.y - (lo.y + lo.vy * lo.vy / (2.0 * p.g))).abs());
            }

            let energy = |v: &[f64; 4]| {
                0.5 * p.m * (v[2] * v[2] + v[3] * v[3])
                    + p.m * p.g * v[1]
                    + common::spring_energy(&p, v[0].hypot(v[1]))
            };
            let rhs = |v: &[f64; 4]| {
                let st = ContinuousState { x: v[0], y: v[1], vx: v[2], vy: v[3], phase: Phase::Stance, t: 0.0 };
                let (ax, ay) = if v[0].hypot(v[1]) < rest { stance_accel(&st, &p)? } else { (0.0, -p.g) };
                Ok([v[2], v[3], ax, ay])
            };
            let lift = |v: &[f64; 4]| v[0].hypot(v[1]) - rest;
            let events = [EventFn { g: &lift, crossing: Crossing::Rising }];
            let mut v = [-rest * a.sin(), rest * a.cos(), td.vx, td.vy];
            let e0 = energy(&v);
            let mut tt = 0.0;
            for _ in 0..200 {
                let stop = integrate(rhs, tt, v, tt + 0.01, &events, &cfg).unwrap();
                tt = stop.t;
                v = stop.y;
                drift = drift.max((energy(&v) - e0).abs() / e0);
                if stop.event.is_some() {
                    break;
                }
            }
        }
    }
    outcome(
        flight <= 1e-9 && drift <= 1e-6 && resid <= 1e-10,
        format!("flight error {flight:.2e} (<= 1e-9), stance drift {drift:.2e} (<= 1e-6), event residual {resid:.2e} (<= 1e-10)"),
    )
}

/// Whether a slice has a stable fixed point whose basin reaches down to the
/// infeasibility boundary and up to the nearest unstable fixed point above
/// it, each within one cell.
fn bounded_basin(sl: &BifurcationSlice<f64>, p: &ModelParams<f64>, ds: f64) -> bool {
    let Some(stable) = sl.fixed_points.iter().find(|f| f.stability == Stability::Stable) else {
        return false;
    };
    let saddle = sl
        .fixed_points
        .iter()
        .filter(|f| f.stability == Stability::Unstable && f.s_star > stable.s_star)
        .map(|f| f.s_star)
        .fold(f64::INFINITY, f64::min);
    let s_inf = p.m * p.g * p.rest_length() * sl.alpha.cos() / ENERGY;
    sl.basins
        .iter()
        .find(|b| b.lo <= stable.s_star && stable.s_star <= b.hi)
        .is_some_and(|b| (b.lo - s_inf).abs() <= ds && (b.hi - saddle).abs() <= ds)
}

fn criterion_7() -> Outcome {
    let p = ModelParams::slip_reference();
    let d = bifurcation_sweep(&p, ENERGY, [30f64.to_radians(), 42f64.to_radians()], 49, 200, &cfg()).unwrap();
    let ds = 1.0 / d.n_s as f64;
    let both: Vec<bool> = d
        .slices
        .iter()
        .map(|sl| {
            let fp = &sl.fixed_points;
            fp.iter().any(|f| f.stability == Stability::Stable) && fp.iter().any(|f| f.stability == Stability::Unstable)
        })
        .collect();
    let good: Vec<bool> = d.slices.iter().zip(&both).map(|(sl, b)| *b && bounded_basin(sl, &p, ds)).collect();
    // Longest contiguous run of qualifying angles.
    let (mut best, mut run_start) = ((0, 0), 0);
    for k in 0..=good.len() {
        if k == good.len() || !good[k] {
            if k - run_start > best.1 - best.0 {
                best = (run_start, k);
            }
            run_start = k + 1;
        }
    }
    let (lo, hi) = best;
    if hi - lo < 3 {
        return outcome(false, format!("no contiguous band of at least 3 angles with a bounded basin (longest {})", hi - lo));
    }
    let mut worst_oracle = 0.0f64;
    for sl in &d.slices[lo..hi] {
        for f in &sl.fixed_points {
            let (y, vx) = denormalize_apex(&ApexState { s: f.s_star, energy: ENERGY }, &p);
            let Some((y1, vx1)) = common::rk4_step(&p, y, vx, sl.alpha) else {
                return outcome(false, format!("oracle fails at fixed point {f:?}"));
            };
            let s1 = normalize_apex(y1, vx1, &p).unwrap().s;
            worst_oracle = worst_oracle.max((s1 - f.s_star).abs());
        }
    }
    let deg = |k: usize| d.slices[k].alpha.to_degrees();
    let edge: Vec<String> = (0..good.len())
        .filter(|&k| both[k] && !good[k])
        .map(|k| format!("{:.2}", deg(k)))
        .collect();
    outcome(
        worst_oracle <= 1e-6,
        format!(
            "stable and unstable fixed points with basin bounded by infeasibility and the saddle for alpha in [{:.2}, {:.2}] deg ({} angles); pairs with a fragmented basin at {:?} deg; RK4 oracle residual {worst_oracle:.1e}",
            deg(lo),
            deg(hi - 1),
            hi - lo,
            edge
        ),
    )
}

fn criterion_8() -> Outcome {
    let square = ParamSpace {
        names: vec!["u".into(), "v".into()],
        lower: vec![-5.0, -5.0],
        upper: vec![5.0, 5.0],
        base: ModelParams::slip_reference(),
    };
    let sphere = |x: &[f64]| -((x[0] - 1.5).powi(2) + (x[1] + 2.0).powi(2));
    let sc = PsoConfig { var_tol: 1e-12, max_iters: 200, seed: 1, ..Default::default() };
    let st = pso_optimize(&square, &sc, sphere).unwrap();
    let b = &st.best().best_params;
    let sphere_err = (b[0] - 1.5).hypot(b[1] + 2.0);

    let space = ParamSpace::nslip_default();
    let spec = GridSpec::standard(COARSE, COARSE, ENERGY);
    let icfg = cfg();
    let fit = |x: &[f64]| fitness_qv(x, &space, &spec, &icfg, None);
    let pc = PsoConfig { n_particles: 25, var_tol: 1e-5, max_iters: 200, seed: 42, ..Default::default() };
    let a = pso_optimize(&space, &pc, fit).unwrap();
    let again = pso_optimize(&space, &pc, fit).unwrap();
    let appendix = fit(&[704.0, 170f64.to_radians()]);
    let best = a.best();
    let pass = sphere_err <= 1e-3 && st.updates() <= 200 && best.best_fitness >= appendix && a == again;
    outcome(
        pass,
        format!(
            "sphere error {sphere_err:.1e} after {} updates; NSLIP best {:.4} at c = {:.1}, beta0 = {:.2} deg after {} updates ({:?}), appendix point {appendix:.4}; reproducible: {}",
            st.updates(),
            best.best_fitness,
            best.best_params[0],
            best.best_params[1].to_degrees(),
            a.updates(),
            a.verdict,
            a == again
        ),
    )
}

fn main() {
    let start = Instant::now();
    let spec = GridSpec::standard(FINE, FINE, ENERGY);
    let slip = grid(ModelKind::Slip, &spec);
    let nslip = grid(ModelKind::Nslip, &spec);
    let fine = Fine {
        slip_qv: viable_sets(&slip).0,
        nslip_qv: viable_sets(&nslip).0,
        slip,
        nslip,
    };
    let criteria: [(&str, Box<dyn Fn() -> Outcome + '_>); 8] = [
        ("Q_V size ratio", Box::new(|| criterion_1(&fine))),
        ("critical noise thresholds", Box::new(|| criterion_2(&fine))),
        ("S_R equality at low noise", Box::new(|| criterion_3(&fine))),
        ("set-algebra properties", Box::new(criterion_4)),
        ("closed-loop survival", Box::new(criterion_5)),
        ("numerical integrity", Box::new(criterion_6)),
        ("bifurcation structure", Box::new(criterion_7)),
        ("particle swarm", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {} [{}] {name}: {} ({:.1} s)",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 8 passed in {:.0} s", 8 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
