mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};

use config::{ConfigError, ConfigResult, ExperimentConfig, ProfileSpec};
use report::{checksum_file, sort_rows, write_csv, Manifest, ReportRow, Timing, Versions};

#[derive(Parser, Debug)]
#[command(name = "hnls", version, about = "Dispersive and Schrödinger experiments on hyperbolic space")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for report.csv, run-manifest.json and snapshots.
    #[arg(long, global = true, value_name = "DIR", default_value = "hnls-out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Seed for randomized sample points.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Space dimension n ≥ 2.
    #[arg(long, global = true, value_name = "N")]
    n: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Identity checks for the special functions, kernels and geometry.
    Verify {
        /// Suite to run; repeat for several.
        #[arg(long = "suite", value_name = "NAME")]
        suites: Vec<String>,
        /// Highest derivative order for the fk suite.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Decay exponents of the linear flow.
    Decay {
        /// Norm to measure; repeat for several.
        #[arg(long = "norm", value_name = "NAME")]
        norms: Vec<String>,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// spectral or kernel.
        #[arg(long)]
        route: Option<String>,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Space-time norms of the linear flow relative to the data.
    Strichartz {
        #[arg(long)]
        t_end: Option<f64>,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Power-type nonlinear evolution with conservation and variance diagnostics.
    Nls {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// any, blowup or global.
        #[arg(long)]
        expect: Option<String>,
        /// Write every k-th snapshot as a binary frame (0 disables).
        #[arg(long)]
        frame_stride: Option<usize>,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Tabulate the fixed-time kernel and check its interpolant.
    KernelTable {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        y_max: Option<f64>,
        #[arg(long)]
        dy: Option<f64>,
    },
}

#[derive(clap::Args, Debug)]
struct ProfileArgs {
    /// Initial profile: gaussian, gaussian_poly, cos_gaussian or sech.
    #[arg(long, value_name = "NAME")]
    profile: Option<String>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
}

impl ProfileArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.profile.is_none() && self.amplitude.is_none() && self.width.is_none() {
            return;
        }
        let p = cfg.profile.get_or_insert_with(|| ProfileSpec::gaussian(1.0, 1.0));
        if let Some(name) = &self.profile {
            p.name = name.clone();
        }
        if let Some(a) = self.amplitude {
            p.amplitude = a;
        }
        if let Some(w) = self.width {
            p.width = w;
        }
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn build_config(cli: &Cli) -> ConfigResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, &cli.seed);
    set(&mut cfg.dimension, &cli.n);
    cfg.validate_common()?;
    match &cli.command {
        Command::Verify { suites, m } => {
            if !suites.is_empty() {
                cfg.verify.suites = suites.clone();
            }
            set(&mut cfg.verify.m, m);
            cfg.validate_verify()?;
        }
        Command::Decay {
            norms,
            t_min,
            t_max,
            samples,
            route,
            profile,
        } => {
            if !norms.is_empty() {
                cfg.decay.norms = norms.clone();
            }
            set(&mut cfg.decay.t_min, t_min);
            set(&mut cfg.decay.t_max, t_max);
            set(&mut cfg.decay.samples, samples);
            set(&mut cfg.decay.route, route);
            profile.apply(&mut cfg);
            cfg.validate_decay()?;
        }
        Command::Strichartz { t_end, profile } => {
            set(&mut cfg.strichartz.t_end, t_end);
            profile.apply(&mut cfg);
            cfg.validate_strichartz()?;
        }
        Command::Nls {
            p,
            dt,
            t_end,
            expect,
            frame_stride,
            profile,
        } => {
            if p.is_some() {
                cfg.nls.p = *p;
            }
            set(&mut cfg.nls.dt, dt);
            set(&mut cfg.nls.t_end, t_end);
            set(&mut cfg.nls.expect, expect);
            set(&mut cfg.nls.frame_stride, frame_stride);
            profile.apply(&mut cfg);
            cfg.validate_nls()?;
        }
        Command::KernelTable { t, y_max, dy } => {
            set(&mut cfg.kernel_table.t, t);
            set(&mut cfg.kernel_table.y_max, y_max);
            set(&mut cfg.kernel_table.dy, dy);
            cfg.validate_kernel_table()?;
        }
    }
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Verify { .. } => "verify",
        Command::Decay { .. } => "decay",
        Command::Strichartz { .. } => "strichartz",
        Command::Nls { .. } => "nls",
        Command::KernelTable { .. } => "kernel-table",
    }
}

fn run_command(cli: &Cli, cfg: &ExperimentConfig) -> ConfigResult<(Vec<ReportRow>, Vec<PathBuf>)> {
    match cli.command {
        Command::Verify { .. } => Ok((commands::execute(commands::verify_tasks(cfg)), Vec::new())),
        Command::Decay { .. } => Ok((commands::execute(commands::decay_tasks(cfg)?), Vec::new())),
        Command::Strichartz { .. } => Ok((commands::execute(commands::strichartz_tasks(cfg)?), Vec::new())),
        Command::Nls { .. } => commands::nls_rows(cfg, &cli.out),
        Command::KernelTable { .. } => commands::kernel_table_rows(cfg, &cli.out),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ConfigError {
    ConfigError(format!("cannot write {}: {e}", path.display()))
}

fn write_outputs(cli: &Cli, cfg: &ExperimentConfig, rows: &[ReportRow], extra: &[PathBuf], jobs: usize) -> ConfigResult<()> {
    let report_path = cli.out.join("report.csv");
    let file = std::fs::File::create(&report_path).map_err(|e| io_err(&report_path, e))?;
    write_csv(std::io::BufWriter::new(file), rows).map_err(|e| io_err(&report_path, e))?;
    let config_path = cli.out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| io_err(&config_path, e))?;
    let mut outputs = Vec::new();
    for path in [&report_path, &config_path].into_iter().chain(extra) {
        outputs.push(checksum_file(&cli.out, path).map_err(|e| io_err(path, e))?);
    }
    let manifest = Manifest {
        command: command_name(&cli.command).into(),
        arguments: std::env::args().skip(1).collect(),
        seed: cfg.seed,
        jobs,
        versions: Versions::current(),
        config: serde_json::to_value(cfg).map_err(|e| ConfigError(e.to_string()))?,
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.pass).count(),
        outputs,
        timings: rows
            .iter()
            .map(|r| Timing {
                suite: r.suite.clone(),
                parameters: r.parameters.clone(),
                seconds: r.runtime,
            })
            .collect(),
    };
    let manifest_path = cli.out.join("run-manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ConfigError(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| io_err(&manifest_path, e))
}

fn usage_error(err: &ConfigError) -> ExitCode {
    eprintln!("error: {err}\n");
    eprintln!("{}", Cli::command().render_usage());
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return usage_error(&ConfigError("--jobs must be at least 1".into()));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        return usage_error(&ConfigError(format!("cannot start worker pool: {e}")));
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        return usage_error(&io_err(&cli.out, e));
    }
    let start = Instant::now();
    let (mut rows, files) = match run_command(&cli, &cfg) {
        Ok(r) => r,
        Err(e) => return usage_error(&e),
    };
    sort_rows(&mut rows);
    if let Err(e) = write_outputs(&cli, &cfg, &rows, &files, jobs) {
        return usage_error(&e);
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    for r in &rows {
        let mark = if r.pass { "PASS" } else { "FAIL" };
        println!("{mark} {} [{}] measured={:.6e} reference={:.6e}", r.suite, r.parameters, r.measured, r.reference);
    }
    println!(
        "{} rows, {failed} failed, {:.2}s, report in {}",
        rows.len(),
        start.elapsed().as_secs_f64(),
        cli.out.display()
    );
    if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS }
}
