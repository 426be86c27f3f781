//! Subcommand bodies. Each command expands into independent tasks that run
//! on the worker pool; every task yields report rows, and errors raised by
//! the numerics become failed rows instead of aborting the run.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hnls_core::estimates::{decay_series, decay_series_with, strichartz_norm, DecayNorm, DecaySeries, StrichartzPair, TimeWindow};
use hnls_core::hypgeo::{bilaplacian_r2, radial_laplacian_apply, Dimension, RadialField, RadialGrid};
use hnls_core::kernels::{kernel, kernel_odd, oscillatory_i, KernelRequest, OscQuadConfig};
use hnls_core::nls::{blowup_experiment, write_frame_file, Verdict};
use hnls_core::propagator::{KernelTable, PropagatorPlan, Route};
use hnls_core::specfun::fk::{derivative_oracle, fk_bound_check, fk_table};
use hnls_core::specfun::spherical::{spherical_function, spherical_function_integral};
use hnls_core::specfun::tables::spherical_row;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{format_float, ReportRow};

type TaskResult = hnls_core::Result<Vec<ReportRow>>;

/// A unit of work with the identity used for its failure row.
pub struct Task {
    pub suite: &'static str,
    pub parameters: String,
    run: Box<dyn Fn() -> TaskResult + Send + Sync>,
}

impl Task {
    fn new<F>(suite: &'static str, parameters: String, run: F) -> Self
    where
        F: Fn() -> TaskResult + Send + Sync + 'static,
    {
        Self {
            suite,
            parameters,
            run: Box::new(run),
        }
    }
}

/// Runs tasks in parallel and returns rows in task order.
pub fn execute(tasks: Vec<Task>) -> Vec<ReportRow> {
    tasks
        .into_par_iter()
        .map(|task| {
            let start = Instant::now();
            let mut rows = match (task.run)() {
                Ok(rows) => rows,
                Err(e) => vec![ReportRow::failure(task.suite, task.parameters.clone(), &e.to_string())],
            };
            let secs = start.elapsed().as_secs_f64() / rows.len().max(1) as f64;
            for r in &mut rows {
                r.runtime = secs;
            }
            rows
        })
        .flatten()
        .collect()
}

fn suite_rng(seed: u64, suite: &str) -> ChaCha8Rng {
    let salt = suite.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

fn dim(n: usize) -> hnls_core::Result<Dimension> {
    Dimension::new(n)
}

// ---------------------------------------------------------------- verify

pub fn verify_tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut tasks = Vec::new();
    let n = cfg.dimension;
    let tol = cfg.tolerances.identity;
    let extra = cfg.verify.random_samples;
    for suite in &cfg.verify.suites {
        let mut rng = suite_rng(cfg.seed, suite);
        match suite.as_str() {
            "fk" => {
                let m = cfg.verify.m;
                for &t in &[0.3, 1.0, 3.0] {
                    let mut s_values: Vec<f64> = (0..50).map(|i| 0.1 + 4.9 * i as f64 / 49.0).collect();
                    s_values.extend((0..extra).map(|_| rng.random_range(0.1..5.0)));
                    tasks.push(Task::new("fk-derexp", format!("m={m};t={t}"), move || {
                        let table = fk_table(m)?;
                        let worst = s_values
                            .iter()
                            .map(|&s| {
                                let b = derivative_oracle(m, s, t, 256);
                                (table.expansion(s, t) - b).norm() / b.norm()
                            })
                            .fold(0.0, f64::max);
                        Ok(vec![ReportRow::new("fk-derexp", format!("m={m};t={t}"), worst, tol, worst < tol)])
                    }));
                }
                for alpha in 0..=1usize {
                    tasks.push(Task::new("fk-bound", format!("m={m};alpha={alpha}"), move || {
                        let report = fk_bound_check(m, alpha)?;
                        let largest = report.rows.iter().map(|r| r.constant).fold(0.0, f64::max);
                        let mut rows = vec![ReportRow::new(
                            "fk-bound",
                            format!("m={m};alpha={alpha}"),
                            largest,
                            0.0,
                            report.all_finite(),
                        )];
                        if alpha == 0 {
                            let top = report.rows.iter().find(|r| r.k == m).map_or(f64::NAN, |r| r.constant);
                            let gap = (top - 1.0).abs();
                            rows.push(ReportRow::new("fk-identity", format!("m={m}"), gap, 1e-10, gap < 1e-10));
                        }
                        Ok(rows)
                    }));
                }
            }
            "spherical" => {
                let mut points: Vec<(f64, f64)> = Vec::new();
                for i in 0..20 {
                    for j in 0..20 {
                        points.push((0.05 + 5.0 * i as f64 / 19.0, 0.1 + 7.9 * j as f64 / 19.0));
                    }
                }
                points.extend((0..extra).map(|_| (rng.random_range(0.0..5.0), rng.random_range(0.05..8.0))));
                tasks.push(Task::new("spherical-ratio", format!("n={n}"), move || {
                    let d = dim(n)?;
                    let mut ratios = Vec::with_capacity(points.len());
                    for &(l, r) in &points {
                        let a = spherical_function(d, l, r)?;
                        let b = spherical_function_integral(d, l, r)?;
                        if b.norm() > 1e-5 {
                            ratios.push(a.re / b.re);
                        }
                    }
                    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
                    let spread = ratios.iter().map(|x| (x - mean).abs() / mean.abs()).fold(0.0, f64::max);
                    Ok(vec![ReportRow::new("spherical-ratio", format!("n={n}"), spread, tol, spread < tol)])
                }));
            }
            "eigen" => {
                let lambda = rng.random_range(0.5..2.5);
                let params = format!("n={n};lambda={}", format_float(lambda));
                tasks.push(Task::new("eigen-convergence", params.clone(), move || {
                    let d = dim(n)?;
                    let rho2 = d.rho().powi(2);
                    let residual = |len: usize| -> hnls_core::Result<f64> {
                        let g = Arc::new(RadialGrid::new(d, 5.0, len)?);
                        let row = spherical_row(d, lambda, g.nodes())?;
                        let f = RadialField::new(Arc::clone(&g), row.into_iter().map(|v| Complex64::new(v, 0.0)).collect())?;
                        let l = radial_laplacian_apply(&f)?;
                        Ok(l.values()
                            .iter()
                            .zip(f.values())
                            .map(|(a, b)| (a + b * (lambda * lambda + rho2)).norm())
                            .fold(0.0, f64::max))
                    };
                    let ratio = residual(200)? / residual(400)?;
                    Ok(vec![ReportRow::new("eigen-convergence", params.clone(), ratio, 4.0, (ratio - 4.0).abs() < 0.5)])
                }));
            }
            "kernel-parity" => {
                let samples: Vec<(f64, f64)> =
                    (0..extra.max(4)).map(|_| (rng.random_range(0.05..2.0), rng.random_range(0.01..6.0))).collect();
                tasks.push(Task::new("kernel-parity", format!("n={n}"), move || {
                    let d = dim(n)?;
                    let qc = OscQuadConfig::default();
                    let mut worst: f64 = 0.0;
                    for &(t, rho) in &samples {
                        let a = kernel(&KernelRequest::new(d, t, rho)?, &qc)?;
                        let b = kernel(&KernelRequest::new(d, -t, rho)?, &qc)?;
                        worst = worst.max((a - b.conj()).norm() / a.norm());
                    }
                    let dispatch_ok = d.is_odd() || kernel_odd(&KernelRequest::new(d, 1.0, 1.0)?).is_err();
                    Ok(vec![
                        ReportRow::new("kernel-parity", format!("n={n}"), worst, 1e-12, worst < 1e-12),
                        ReportRow::new(
                            "kernel-dispatch",
                            format!("n={n}"),
                            if dispatch_ok { 1.0 } else { 0.0 },
                            1.0,
                            dispatch_ok,
                        ),
                    ])
                }));
            }
            "bilaplacian" => {
                tasks.push(Task::new("bilaplacian", format!("n={n}"), move || {
                    let d = dim(n)?;
                    let nf = n as f64;
                    let l0 = 4.0 * nf * (nf - 1.0) / 3.0;
                    let linf = 2.0 * (nf - 1.0).powi(2);
                    let g0 = (bilaplacian_r2(d, 1e-5)? - l0).abs() / l0;
                    let ginf = (bilaplacian_r2(d, 40.0)? - linf).abs() / linf;
                    let mut rows = vec![
                        ReportRow::new("bilaplacian-limit-zero", format!("n={n}"), g0, 1e-6, g0 < 1e-6),
                        ReportRow::new("bilaplacian-limit-infinity", format!("n={n}"), ginf, 1e-6, ginf < 1e-6),
                    ];
                    if n == 3 {
                        let mut gap: f64 = 0.0;
                        for i in 1..=20_000 {
                            gap = gap.max((bilaplacian_r2(d, 20.0 * i as f64 / 20_000.0)? - 8.0).abs());
                        }
                        rows.push(ReportRow::new("bilaplacian-constant", "n=3".into(), gap, 1e-10, gap < 1e-10));
                    }
                    Ok(rows)
                }));
            }
            "oscillatory" => {
                tasks.push(Task::new("oscillatory-bound", String::new(), move || {
                    let qc = OscQuadConfig::default();
                    let sup = |nt: usize, nr: usize| -> hnls_core::Result<f64> {
                        let mut best: f64 = 0.0;
                        for i in 1..=nt {
                            for j in 1..=nr {
                                let t = 0.5 * i as f64 / nt as f64;
                                let rho = 10.0 * j as f64 / nr as f64;
                                best = best.max(oscillatory_i(t, rho, &qc)?.bound_ratio);
                            }
                        }
                        Ok(best)
                    };
                    let (coarse, fine) = (sup(10, 20)?, sup(20, 40)?);
                    let ok = fine.is_finite() && (fine - coarse).abs() < 0.05 * coarse;
                    Ok(vec![ReportRow::new("oscillatory-bound", "grid=20x40".into(), fine, coarse, ok)])
                }));
            }
            _ => unreachable!("suite names are validated"),
        }
    }
    tasks
}

// ---------------------------------------------------------------- decay

fn decay_norm(name: &str) -> DecayNorm {
    match name {
        "sup" => DecayNorm::Sup,
        "sup_large_time" => DecayNorm::SupLargeTime,
        "weighted" => DecayNorm::WeightedSup,
        _ => DecayNorm::SinhWeightedSup,
    }
}

pub fn decay_tasks(cfg: &ExperimentConfig) -> Result<Vec<Task>, ConfigError> {
    let grid = cfg.radial_grid()?;
    let profile = cfg.require_profile()?.clone();
    let u0 = Arc::new(profile.sample(&grid));
    let window = TimeWindow::new(cfg.decay.t_min, cfg.decay.t_max, cfg.decay.samples).map_err(|e| ConfigError(e.to_string()))?;
    let plan = if cfg.decay.route == "kernel" {
        let nodes = cfg.decay.calibration_nodes.unwrap_or((cfg.grid.nodes / 4).max(40));
        let coarse = Arc::new(RadialGrid::new(grid.dim(), cfg.grid.r_max, nodes).map_err(|e| ConfigError(e.to_string()))?);
        Some((coarse, Arc::clone(&grid)))
    } else {
        None
    };
    let n = cfg.dimension as f64;
    let tol = cfg.tolerances.exponent;
    let mut tasks = Vec::new();
    for name in &cfg.decay.norms {
        let norm = decay_norm(name);
        let params = format!(
            "n={};norm={name};route={};window={}..{}x{};profile={}",
            cfg.dimension,
            cfg.decay.route,
            cfg.decay.t_min,
            cfg.decay.t_max,
            cfg.decay.samples,
            profile.label()
        );
        let (u0, plan) = (Arc::clone(&u0), plan.clone());
        let p2 = params.clone();
        tasks.push(Task::new("decay", params, move || {
            let series: DecaySeries = match &plan {
                Some((coarse, fine)) => {
                    let c = PropagatorPlan::calibrated(Arc::clone(coarse), Route::Kernel)?.constant();
                    let plan = PropagatorPlan::with_constant(Arc::clone(fine), Route::Kernel, c);
                    decay_series_with(&plan, &u0, norm, &window)?
                }
                None => decay_series(&u0, norm, &window)?,
            };
            let max_ratio = series.max_ratio();
            let ratio_row = ReportRow::new("decay-ratio", p2.clone(), max_ratio, 0.0, max_ratio.is_finite() && max_ratio > 0.0);
            let expected = match norm {
                DecayNorm::Sup => Some(-0.5 * n),
                DecayNorm::SupLargeTime => Some(-1.5),
                _ => None,
            };
            let mut rows = vec![ratio_row];
            if let Some(e) = expected {
                let fit = series.fit()?;
                rows.push(ReportRow::new(
                    "decay-exponent",
                    p2.clone(),
                    fit.exponent,
                    e,
                    (fit.exponent - e).abs() <= tol,
                ));
            }
            Ok(rows)
        }));
    }
    Ok(tasks)
}

// ---------------------------------------------------------------- strichartz

pub fn strichartz_tasks(cfg: &ExperimentConfig) -> Result<Vec<Task>, ConfigError> {
    let grid = cfg.radial_grid()?;
    let dim = grid.dim();
    let profile = cfg.require_profile()?.clone();
    let u0 = Arc::new(profile.sample(&grid));
    let t_end = cfg.strichartz.t_end;
    let bound = cfg.strichartz.bound;
    let tol = cfg.tolerances.identity;
    let mut tasks = Vec::new();
    for &[p, q] in &cfg.strichartz.pairs {
        let pair = StrichartzPair::new(dim, p, q).map_err(|e| ConfigError(e.to_string()))?;
        let params = format!(
            "n={};p={};q={};T={t_end};profile={}",
            dim.n(),
            p,
            q,
            profile.label()
        );
        let u0 = Arc::clone(&u0);
        let p2 = params.clone();
        tasks.push(Task::new("strichartz", params, move || {
            let ratio = strichartz_norm(&u0, pair, t_end)?;
            let row = if p.is_infinite() && q == 2.0 {
                ReportRow::new("strichartz-mass", p2.clone(), ratio, 1.0, (ratio - 1.0).abs() < tol)
            } else {
                ReportRow::new("strichartz", p2.clone(), ratio, bound, ratio.is_finite() && ratio <= bound)
            };
            Ok(vec![row])
        }));
    }
    Ok(tasks)
}

// ---------------------------------------------------------------- nls

/// Runs the NLS experiment, writing diagnostics and optional frames under
/// `out`. Returns rows and the files written.
pub fn nls_rows(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<ReportRow>, Vec<PathBuf>), ConfigError> {
    let grid = cfg.radial_grid()?;
    let profile = cfg.require_profile()?.clone();
    let u0 = profile.sample(&grid);
    let mut ncfg = cfg.nls_config();
    ncfg.keep_snapshots = cfg.nls.frame_stride > 0;
    let p = ncfg.p;
    let base = format!("n={};p={p};profile={}", cfg.dimension, profile.label());
    ncfg.check_data(&u0).map_err(|e| ConfigError(e.to_string()))?;
    if cfg.nls.gradient_threshold.is_none() {
        let g0 = hnls_core::nls::NlsSolver::new(Arc::clone(&grid), ncfg.clone())
            .and_then(|s| s.diagnostics(&u0))
            .map_err(|e| ConfigError(e.to_string()))?
            .gradient_norm;
        ncfg.blowup_gradient_threshold = cfg.nls.gradient_factor * g0;
    }
    let start = Instant::now();
    let exp = match blowup_experiment(&u0, &ncfg) {
        Ok(e) => e,
        Err(hnls_core::Error::Config(msg)) => return Err(ConfigError(msg)),
        Err(e) => return Ok((vec![ReportRow::failure("nls-verdict", base, &e.to_string())], Vec::new())),
    };
    let secs = start.elapsed().as_secs_f64();
    let mut files = Vec::new();
    let series = &exp.series;
    let diag_path = out.join("diagnostics.csv");
    write_diagnostics(&diag_path, series).map_err(|e| ConfigError(format!("cannot write diagnostics: {e}")))?;
    files.push(diag_path);
    if cfg.nls.frame_stride > 0 {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir).map_err(|e| ConfigError(format!("cannot create {}: {e}", dir.display())))?;
        for (k, field) in exp.run.fields.iter().enumerate() {
            let last = k + 1 == exp.run.fields.len();
            if k % cfg.nls.frame_stride == 0 || last {
                let path = dir.join(format!("frame_{k:05}.bin"));
                write_frame_file(&path, series.times[k], field).map_err(|e| ConfigError(e.to_string()))?;
                files.push(path);
            }
        }
    }
    let (verdict_name, t_value) = match exp.verdict {
        Verdict::Blowup { t_est } => ("blowup", t_est),
        Verdict::Global { t_reached } => ("global", t_reached),
        Verdict::Inconclusive => ("inconclusive", f64::NAN),
    };
    let verdict_ok = match cfg.nls.expect.as_str() {
        "any" => verdict_name != "inconclusive",
        want => want == verdict_name,
    };
    let mut rows = vec![ReportRow::new(
        "nls-verdict",
        format!("{base};verdict={verdict_name};expect={}", cfg.nls.expect),
        t_value,
        cfg.nls.t_end,
        verdict_ok,
    )];
    let len = exp.run.snapshots.len();
    let trusted = if verdict_name == "blowup" { len.saturating_sub(2).max(1) } else { len };
    let m0 = exp.run.snapshots[0].mass;
    let e0 = exp.run.snapshots[0].energy;
    let mass_drift = exp.run.snapshots[..trusted].iter().map(|s| (s.mass - m0).abs() / m0).fold(0.0, f64::max);
    let energy_drift = exp.run.snapshots[..trusted]
        .iter()
        .map(|s| (s.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    rows.push(ReportRow::new("nls-mass-drift", base.clone(), mass_drift, cfg.tolerances.mass, mass_drift <= cfg.tolerances.mass));
    rows.push(ReportRow::new(
        "nls-energy-drift",
        base.clone(),
        energy_drift,
        cfg.tolerances.energy,
        energy_drift <= cfg.tolerances.energy,
    ));
    rows.push(ReportRow::new("nls-criterion", base.clone(), exp.criterion_lhs, exp.criterion_rhs, true));
    rows.push(ReportRow::new(
        "nls-uncertainty",
        base.clone(),
        exp.uncertainty_floor,
        0.0,
        exp.uncertainty_floor.is_finite() && exp.uncertainty_floor > 0.0,
    ));
    if verdict_name == "blowup" {
        let worst = exp.run.snapshots.iter().map(|s| s.variance_accel).fold(f64::NEG_INFINITY, f64::max);
        rows.push(ReportRow::new("nls-concavity", base.clone(), worst, 0.0, exp.concave_throughout));
    } else if len >= 5 {
        let gap = series.accel_agreement();
        rows.push(ReportRow::new("nls-virial", base.clone(), gap, cfg.tolerances.virial, gap <= cfg.tolerances.virial));
    }
    for r in &mut rows {
        r.runtime = secs / 6.0;
    }
    Ok((rows, files))
}

fn write_diagnostics(path: &Path, s: &hnls_core::nls::DiagnosticsSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "time",
        "mass",
        "energy",
        "gradient_norm",
        "variance",
        "variance_rate",
        "variance_rate_fd",
        "variance_accel",
        "variance_accel_fd",
    ])?;
    for k in 0..s.times.len() {
        let rec = [
            s.times[k],
            s.mass[k],
            s.energy[k],
            s.gradient_norm[k],
            s.variance[k],
            s.variance_rate[k],
            s.variance_rate_fd[k],
            s.variance_accel[k],
            s.variance_accel_fd[k],
        ]
        .map(format_float);
        w.write_record(&rec)?;
    }
    w.flush()
}

// ---------------------------------------------------------------- kernel-table

pub fn kernel_table_rows(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<ReportRow>, Vec<PathBuf>), ConfigError> {
    let d = cfg.dim()?;
    let k = &cfg.kernel_table;
    let params = format!("n={};t={};y_max={};dy={}", d.n(), k.t, k.y_max, k.dy);
    let qc = OscQuadConfig::default();
    let table = match KernelTable::build(d, k.t, k.y_max, k.dy, &qc) {
        Ok(t) => t,
        Err(e) => return Ok((vec![ReportRow::failure("kernel-table", params, &e.to_string())], Vec::new())),
    };
    let path = out.join("kernel_table.csv");
    let write = || -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["y", "amplitude_re", "amplitude_im", "kernel_re", "kernel_im"])?;
        for (i, a) in table.amplitudes().iter().enumerate() {
            let y = (i as f64 + 0.5) * table.dy();
            let kv = table.eval(y);
            w.write_record([y, a.re, a.im, kv.re, kv.im].map(format_float))?;
        }
        w.flush()
    };
    write().map_err(|e| ConfigError(format!("cannot write kernel table: {e}")))?;
    let mut rng = suite_rng(cfg.seed, "kernel-table");
    let ys: Vec<f64> = (0..cfg.verify.random_samples.max(8)).map(|_| rng.random_range(0.01..k.y_max)).collect();
    let mut worst: f64 = 0.0;
    for &y in &ys {
        let direct = match KernelRequest::new(d, k.t, y).and_then(|r| kernel(&r, &qc)) {
            Ok(v) => v,
            Err(e) => return Ok((vec![ReportRow::failure("kernel-table", params, &e.to_string())], vec![path])),
        };
        worst = worst.max((table.eval(y) - direct).norm() / direct.norm());
    }
    let row = ReportRow::new("kernel-table-interp", params, worst, 1e-6, worst < 1e-6);
    Ok((vec![row], vec![path]))
}
