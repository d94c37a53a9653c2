//! One function per subcommand. Each writes into the configured output
//! directory and finishes with a manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use springmass::analysis::{bifurcation_sweep, energy_sweep, noise_sweep, Stability};
use springmass::artifact::{file_sha256, Artifact};
use springmass::dynamics::ModelKind;
use springmass::optimizer::{fitness_qv, pso_optimize};
use springmass::poincare::{build_grid, GridSpec, TransitionGrid};
use springmass::viability::{measure, non_failing_set, robust_sets, viable_sets, NoiseModel, SetKind, SetMask};

use crate::config::RunConfig;
use crate::manifest::{Recorder, RunManifest};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json<V: Serialize>(path: &Path, v: &V) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn build(cfg: &RunConfig, kind: ModelKind, spec: &GridSpec<f64>) -> Result<TransitionGrid<f64>> {
    let g = build_grid(spec, &cfg.params_for(kind)?, &cfg.integrator)?;
    if g.errored_cells > 0 {
        log::warn!("{kind}: {} cells failed to integrate and count as failures", g.errored_cells);
    }
    Ok(g)
}

fn load_or_build(cfg: &RunConfig, rec: &mut Recorder, grid: Option<&Path>) -> Result<TransitionGrid<f64>> {
    match grid {
        Some(p) => rec
            .time("load", || TransitionGrid::load(p))
            .with_context(|| format!("loading grid {}", p.display())),
        None => rec.time("grid", || build(cfg, cfg.model, &cfg.grid_spec())),
    }
}

/// One row per state-action cell with the set memberships as 0/1 columns.
fn write_sets_csv(path: &Path, masks: &[(&str, &SetMask<f64>)]) -> Result<()> {
    let spec = masks[0].1.spec;
    let mut w = csv_writer(path)?;
    let mut head = vec!["i", "j", "s", "alpha_deg"];
    head.extend(masks.iter().map(|(n, _)| *n));
    w.write_record(&head)?;
    for i in 0..spec.n_s {
        for j in 0..spec.n_alpha {
            let mut row = vec![
                i.to_string(),
                j.to_string(),
                spec.s_center(i).to_string(),
                spec.alpha_center(j).to_degrees().to_string(),
            ];
            row.extend(masks.iter().map(|(_, m)| u8::from(m.contains(i, j)).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn grid(cfg: &RunConfig) -> Result<PathBuf> {
    let mut rec = Recorder::new("grid", cfg)?;
    let g = rec.time("grid", || build(cfg, cfg.model, &cfg.grid_spec()))?;
    g.save(rec.file("grid.sma"))?;
    let mut w = csv_writer(&rec.file("grid.csv"))?;
    w.write_record(["i", "j", "s", "alpha_deg", "code", "next_s"])?;
    for i in 0..g.spec.n_s {
        for j in 0..g.spec.n_alpha {
            let c = g.get(i, j);
            let next = c.next_s().map(|s| s.to_string()).unwrap_or_default();
            w.write_record([
                i.to_string(),
                j.to_string(),
                g.spec.s_center(i).to_string(),
                g.spec.alpha_center(j).to_degrees().to_string(),
                c.code().to_string(),
                next,
            ])?;
        }
    }
    w.flush()?;
    rec.finish()
}

#[derive(Serialize)]
struct Measures {
    q_n: f64,
    q_v: f64,
    s_v: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_r: Option<f64>,
}

pub fn viable(cfg: &RunConfig, grid: Option<&Path>) -> Result<PathBuf> {
    sets("viable", cfg, grid, false)
}

pub fn robust(cfg: &RunConfig, grid: Option<&Path>) -> Result<PathBuf> {
    sets("robust", cfg, grid, true)
}

fn sets(command: &str, cfg: &RunConfig, grid: Option<&Path>, with_noise: bool) -> Result<PathBuf> {
    let mut rec = Recorder::new(command, cfg)?;
    let g = load_or_build(cfg, &mut rec, grid)?;
    let q_n = non_failing_set(&g);
    let (q_v, s_v) = rec.time("viable", || viable_sets(&g));
    q_n.save(rec.file("qn.mask"))?;
    q_v.save(rec.file("qv.mask"))?;
    s_v.save(rec.file("sv.mask"), SetKind::Qv)?;
    let mut m = Measures {
        q_n: measure(&q_n),
        q_v: measure(&q_v),
        s_v: s_v.measure(),
        eta_deg: None,
        q_r: None,
        s_r: None,
    };
    if with_noise {
        let noise = NoiseModel::new(cfg.eta_rad())?;
        let (q_r, s_r) = rec.time("robust", || robust_sets(&g, &q_v, &noise));
        q_r.save(rec.file("qr.mask"))?;
        s_r.save(rec.file("sr.mask"), SetKind::Qr { eta_rad: cfg.eta_rad() })?;
        write_sets_csv(&rec.file("sets.csv"), &[("qn", &q_n), ("qv", &q_v), ("qr", &q_r)])?;
        m.eta_deg = Some(cfg.noise.eta_deg);
        m.q_r = Some(measure(&q_r));
        m.s_r = Some(s_r.measure());
    } else {
        write_sets_csv(&rec.file("sets.csv"), &[("qn", &q_n), ("qv", &q_v)])?;
    }
    write_json(&rec.file("measures.json"), &m)?;
    println!("{}", serde_json::to_string(&m)?);
    rec.finish()
}

pub fn bifurcate(cfg: &RunConfig) -> Result<PathBuf> {
    let mut rec = Recorder::new("bifurcate", cfg)?;
    let b = &cfg.bifurcation;
    let p = cfg.params()?;
    let d = rec.time("bifurcation", || {
        bifurcation_sweep(&p, cfg.energy, b.alpha_deg.map(f64::to_radians), b.n_alpha, b.n_s, &cfg.integrator)
    })?;
    d.fixed_points_artifact()?.save(rec.file("fixed_points.sma"))?;
    d.basins_artifact()?.save(rec.file("basins.sma"))?;
    let mut w = csv_writer(&rec.file("fixed_points.csv"))?;
    w.write_record(["alpha_deg", "s_star", "stable", "derivative"])?;
    for f in d.slices.iter().flat_map(|s| &s.fixed_points) {
        w.write_record([
            f.alpha.to_degrees().to_string(),
            f.s_star.to_string(),
            u8::from(f.stability == Stability::Stable).to_string(),
            f.derivative.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv_writer(&rec.file("basins.csv"))?;
    w.write_record(["alpha_deg", "s_star", "lo", "hi"])?;
    for s in &d.slices {
        for bs in &s.basins {
            w.write_record([
                s.alpha.to_degrees().to_string(),
                bs.s_star.to_string(),
                bs.lo.to_string(),
                bs.hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    rec.finish()
}

pub fn sweep_noise(cfg: &RunConfig) -> Result<PathBuf> {
    let mut rec = Recorder::new("sweep-noise", cfg)?;
    let models = if cfg.sweeps.both_models { vec![ModelKind::Slip, ModelKind::Nslip] } else { vec![cfg.model] };
    let etas: Vec<f64> = cfg.sweeps.eta_deg.iter().map(|e| e.to_radians()).collect();
    let spec = cfg.grid_spec();
    let mut w = csv_writer(&rec.file("noise_sweep.csv"))?;
    w.write_record(["model", "eta_deg", "q_r", "s_r"])?;
    for kind in models {
        let g = rec.time("grid", || build(cfg, kind, &spec))?;
        let (q_v, _) = viable_sets(&g);
        let r = rec.time("sweep", || noise_sweep(&g, &q_v, &etas))?;
        r.to_artifact()?.save(rec.file(&format!("noise_sweep_{kind}.sma")))?;
        for (k, eta) in cfg.sweeps.eta_deg.iter().enumerate() {
            w.write_record([
                kind.to_string(),
                eta.to_string(),
                r.qr_measures[k].to_string(),
                r.sr_measures[k].to_string(),
            ])?;
            r.state_masks[k].save(rec.file(&format!("sr_{kind}_{k}.mask")), SetKind::Qr { eta_rad: etas[k] })?;
        }
    }
    w.flush()?;
    rec.finish()
}

pub fn sweep_energy(cfg: &RunConfig) -> Result<PathBuf> {
    let mut rec = Recorder::new("sweep-energy", cfg)?;
    let p = cfg.params()?;
    let eta = cfg.eta_rad();
    let e = rec.time("sweep", || energy_sweep(&p, &cfg.sweeps.energies, eta, &cfg.grid_spec(), &cfg.integrator))?;
    e.sweep.to_artifact()?.save(rec.file("energy_sweep.sma"))?;
    e.points_artifact(eta)?.save(rec.file("energy_points.sma"))?;
    e.isolines_artifact(eta)?.save(rec.file("isolines.sma"))?;
    let mut w = csv_writer(&rec.file("energy_sweep.csv"))?;
    w.write_record(["energy", "q_r", "s_r"])?;
    for (k, en) in e.sweep.values.iter().enumerate() {
        w.write_record([en.to_string(), e.sweep.qr_measures[k].to_string(), e.sweep.sr_measures[k].to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&rec.file("energy_points.csv"))?;
    w.write_record(["energy", "s", "y", "vx", "robust"])?;
    for pt in &e.points {
        w.write_record([
            pt.energy.to_string(),
            pt.s.to_string(),
            pt.y.to_string(),
            pt.vx.to_string(),
            u8::from(pt.robust).to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv_writer(&rec.file("isolines.csv"))?;
    w.write_record(["vx", "energy", "y", "s"])?;
    for q in &e.isolines {
        w.write_record([q.vx.to_string(), q.energy.to_string(), q.y.to_string(), q.s.to_string()])?;
    }
    w.flush()?;
    rec.finish()
}

pub fn optimize(cfg: &RunConfig) -> Result<PathBuf> {
    let mut rec = Recorder::new("optimize", cfg)?;
    let space = cfg.param_space()?;
    let [n, m] = cfg.optimizer.resolution;
    let spec = GridSpec { n_s: n, n_alpha: m, ..cfg.grid_spec() };
    let trace = rec.time("optimize", || {
        pso_optimize(&space, &cfg.pso_config(), |x| fitness_qv(x, &space, &spec, &cfg.integrator, None))
    })?;
    std::fs::write(rec.file("trace.json"), trace.to_json()? + "\n")?;
    let mut w = csv_writer(&rec.file("trace.csv"))?;
    let mut head = vec!["iteration".to_string(), "best_fitness".into(), "fitness_variance".into()];
    head.extend(space.names.iter().cloned());
    w.write_record(&head)?;
    for r in &trace.iterations {
        let mut row = vec![r.iteration.to_string(), r.best_fitness.to_string(), r.fitness_variance.to_string()];
        row.extend(r.best_params.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let best = trace.best();
    println!(
        "best fitness {} at {:?} after {} updates ({:?})",
        best.best_fitness,
        best.best_params,
        trace.updates(),
        trace.verdict
    );
    rec.finish()
}

/// Re-checksums every file a manifest lists and decodes artifact files.
/// Returns the number of problems found.
pub fn verify(manifest: &Path) -> Result<usize> {
    let m = RunManifest::load(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut bad = 0;
    for a in &m.artifacts {
        let path = dir.join(&a.path);
        let problem = match file_sha256(&path) {
            Err(e) => Some(e.to_string()),
            Ok(h) if h != a.sha256 => Some("checksum mismatch".into()),
            Ok(_) if is_artifact(&path) => Artifact::load(&path).err().map(|e| e.to_string()),
            Ok(_) => None,
        };
        match problem {
            Some(p) => {
                bad += 1;
                eprintln!("FAIL {}: {p}", a.path.display());
            }
            None => println!("ok   {}", a.path.display()),
        }
    }
    if m.artifacts.is_empty() {
        bail!("manifest lists no artifacts");
    }
    Ok(bad)
}

fn is_artifact(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("sma" | "mask"))
}
