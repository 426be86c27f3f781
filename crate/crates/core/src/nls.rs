//! Focusing NLS on H^n by Strang splitting, with conserved quantities,
//! virial diagnostics and the blow-up / global-existence experiment.
//!
//! The equation is i∂_t u + Δu + σ|u|^{p−1}u = 0 with σ = +1 (focusing) or
//! σ = −1 (defocusing control runs). The linear substep is exact in the
//! spectral variable and the nonlinear substep is the exact phase rotation
//! u ↦ e^{iστ|u|^{p−1}} u, so mass is conserved up to transform roundoff.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimates::gagliardo_nirenberg_ratio;
use crate::htransform::{spectral_multiplier, HTransform, SpectralField, SpectralGrid};
use crate::hypgeo::{bilaplacian_r2, bilaplacian_r2_bounds, radial_derivative_values, Dimension, RadialField, RadialGrid};

/// Phase-rotation resolution guard: every step keeps τ·max|u|^{p−1} below this.
pub const PHASE_GUARD: f64 = 0.5;

/// Spectral tail fraction above which a snapshot counts as under-resolved.
pub const CONSISTENCY_TAIL_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NlsConfig {
    /// Nonlinearity power p > 1.
    pub p: f64,
    /// Nominal step; the solver shortens it as max|u| grows.
    pub dt: f64,
    pub t_end: f64,
    /// Diagnostics cadence; must be a positive multiple-friendly interval ≥ dt.
    pub snapshot_every: f64,
    /// Coefficient of the nonlinearity; 0 gives the linear flow.
    pub coupling: f64,
    pub focusing: bool,
    /// Gradient L² norm at which a run is declared singular and stopped.
    /// A non-finite value means ten times the initial gradient norm.
    pub blowup_gradient_threshold: f64,
    pub mass_tolerance: f64,
    pub energy_tolerance: f64,
    /// Steps shorter than this end the run as unresolved.
    pub min_dt: f64,
    /// Threshold k in the criterion 16 E(u0) < k ‖u0‖²₂; defaults to inf Δ²r².
    pub criterion_threshold: Option<f64>,
    pub keep_snapshots: bool,
}

impl NlsConfig {
    pub fn new(p: f64, dt: f64, t_end: f64) -> Self {
        Self {
            p,
            dt,
            t_end,
            snapshot_every: dt,
            coupling: 1.0,
            focusing: true,
            blowup_gradient_threshold: f64::INFINITY,
            mass_tolerance: 1e-8,
            energy_tolerance: 1e-4,
            min_dt: 1e-9,
            criterion_threshold: None,
            keep_snapshots: false,
        }
    }

    pub fn with_snapshot_every(mut self, every: f64) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.p > 1.0) || !self.p.is_finite() {
            return bad(format!("nonlinearity power must exceed 1, got {}", self.p));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.snapshot_every >= self.dt * (1.0 - 1e-12)) || self.snapshot_every > self.t_end * (1.0 + 1e-12) {
            return bad(format!(
                "snapshot cadence {} must lie in [dt, T] = [{}, {}]",
                self.snapshot_every, self.dt, self.t_end
            ));
        }
        if !self.coupling.is_finite() || self.coupling < 0.0 {
            return bad(format!("coupling must be finite and nonnegative, got {}", self.coupling));
        }
        if !(self.mass_tolerance > 0.0) || !(self.energy_tolerance > 0.0) {
            return bad("conservation tolerances must be positive".into());
        }
        if !(self.min_dt > 0.0) || self.min_dt > self.dt {
            return bad(format!("min_dt must lie in (0, dt], got {}", self.min_dt));
        }
        Ok(())
    }

    /// Signed nonlinear coefficient σ·coupling.
    pub fn sigma(&self) -> f64 {
        if self.focusing {
            self.coupling
        } else {
            -self.coupling
        }
    }

    fn phase_load(&self, u: &RadialField) -> f64 {
        u.sup_norm().powf(self.p - 1.0) * self.coupling
    }

    /// Step that keeps the phase load τ·max|u|^{p−1} at its initial value
    /// `load0`, which follows the scaling of the equation as the solution
    /// concentrates, and never exceeds the hard guard.
    fn guard_step(&self, u: &RadialField, load0: f64) -> f64 {
        let peak = self.phase_load(u);
        if peak > 0.0 {
            let scaled = if load0 > 0.0 { self.dt * (load0 / peak).min(1.0) } else { self.dt };
            scaled.min(0.99 * PHASE_GUARD / peak)
        } else {
            self.dt
        }
    }

    /// Checks the phase-rotation guard for the nominal step on given data.
    pub fn check_data(&self, u0: &RadialField) -> Result<()> {
        let load = self.dt * self.phase_load(u0);
        if load >= PHASE_GUARD {
            return Err(Error::Config(format!(
                "dt·max|u0|^(p−1) = {load} violates the phase guard {PHASE_GUARD}"
            )));
        }
        Ok(())
    }
}

fn spectral_grid_for(grid: &RadialGrid) -> Arc<SpectralGrid> {
    Arc::new(SpectralGrid::for_radial(grid))
}

/// Exact nonlinear substep u ↦ e^{iστ|u|^{p−1}} u.
pub fn nonlinear_phase(u: &RadialField, sigma: f64, p: f64, tau: f64) -> RadialField {
    let values = u
        .values()
        .iter()
        .map(|&v| v * Complex64::from_polar(1.0, sigma * tau * v.norm().powf(p - 1.0)))
        .collect();
    RadialField::new(Arc::clone(u.grid()), values).expect("same grid")
}

/// Strang splitting integrator bound to one grid.
pub struct NlsSolver {
    cfg: NlsConfig,
    transform: HTransform,
}

impl NlsSolver {
    pub fn new(grid: Arc<RadialGrid>, cfg: NlsConfig) -> Result<Self> {
        cfg.validate()?;
        let sg = spectral_grid_for(&grid);
        Ok(Self {
            cfg,
            transform: HTransform::new(grid, sg)?,
        })
    }

    pub fn config(&self) -> &NlsConfig {
        &self.cfg
    }
    pub fn transform(&self) -> &HTransform {
        &self.transform
    }

    pub fn linear(&self, u: &RadialField, tau: f64) -> Result<RadialField> {
        let fh = self.transform.forward(u)?;
        self.transform.inverse(&spectral_multiplier(&fh, tau))
    }

    /// Half nonlinear phase, full linear step, half nonlinear phase.
    pub fn step(&self, u: &RadialField, tau: f64) -> Result<RadialField> {
        let (sigma, p) = (self.cfg.sigma(), self.cfg.p);
        let half = nonlinear_phase(u, sigma, p, 0.5 * tau);
        let lin = self.linear(&half, tau)?;
        Ok(nonlinear_phase(&lin, sigma, p, 0.5 * tau))
    }

    pub fn diagnostics(&self, u: &RadialField) -> Result<Snapshot> {
        let fh = self.transform.forward(u)?;
        snapshot_from(u, &fh, self.cfg.p, self.cfg.sigma())
    }

    /// Integrates to T, recording diagnostics at the configured cadence.
    pub fn run(&self, u0: &RadialField) -> Result<NlsRun> {
        if u0.grid().as_ref() != self.transform.radial().as_ref() {
            return Err(Error::Grid("initial datum does not live on the solver grid".into()));
        }
        self.cfg.check_data(u0)?;
        let cfg = &self.cfg;
        let first = self.diagnostics(u0)?;
        let threshold = if cfg.blowup_gradient_threshold.is_finite() {
            cfg.blowup_gradient_threshold
        } else {
            10.0 * first.gradient_norm
        };
        let (mass0, energy0) = (first.mass, first.energy);
        let load0 = cfg.phase_load(u0);
        let mut run = NlsRun {
            snapshots: Vec::new(),
            fields: Vec::new(),
            cadence: cfg.snapshot_every,
            t_reached: 0.0,
            stop: StopReason::Completed,
            steps: 0,
            min_step: f64::INFINITY,
            gradient_threshold: threshold,
            first_violation: None,
        };
        run.snapshots.push(first);
        if cfg.keep_snapshots {
            run.fields.push(u0.clone());
        }
        let intervals = (cfg.t_end / cfg.snapshot_every).round().max(1.0) as usize;
        let mut u = u0.clone();
        for k in 0..intervals {
            let target = ((k + 1) as f64 * cfg.snapshot_every).min(cfg.t_end);
            let mut remaining = target - run.t_reached;
            while remaining > 1e-12 * cfg.snapshot_every {
                let guard = cfg.guard_step(&u, load0);
                let count = (remaining / guard).ceil().max(1.0);
                let tau = remaining / count;
                if tau < cfg.min_dt {
                    run.stop = StopReason::StepCollapse;
                    return Ok(run);
                }
                u = self.step(&u, tau)?;
                run.steps += 1;
                run.min_step = run.min_step.min(tau);
                remaining -= tau;
                run.t_reached = target - remaining;
            }
            run.t_reached = target;
            let snap = self.diagnostics(&u)?;
            let mass_drift = (snap.mass - mass0).abs() / mass0.max(f64::MIN_POSITIVE);
            let energy_drift = (snap.energy - energy0).abs() / energy0.abs().max(f64::MIN_POSITIVE);
            let violated = mass_drift > cfg.mass_tolerance
                || energy_drift > cfg.energy_tolerance
                || snap.tail_fraction > CONSISTENCY_TAIL_LIMIT;
            if violated && run.first_violation.is_none() {
                run.first_violation = Some(run.snapshots.len());
            }
            let grad = snap.gradient_norm;
            run.snapshots.push(snap);
            if cfg.keep_snapshots {
                run.fields.push(u.clone());
            }
            if !grad.is_finite() || grad > threshold {
                run.stop = StopReason::GradientThreshold;
                return Ok(run);
            }
        }
        Ok(run)
    }
}

/// One Strang step with a freshly built transform.
pub fn step_strang(u: &RadialField, cfg: &NlsConfig) -> Result<RadialField> {
    NlsSolver::new(Arc::clone(u.grid()), cfg.clone())?.step(u, cfg.dt)
}

/// Quantities recorded at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mass: f64,
    pub energy: f64,
    pub gradient_norm: f64,
    /// ∫|u|^{p+1}
    pub potential: f64,
    /// V = ∫|u|² r²
    pub variance: f64,
    /// V' = 4 Im ∫ ū r ∂_r u
    pub variance_rate: f64,
    /// V'' from the virial identity, and its four terms.
    pub variance_accel: f64,
    pub virial_terms: [f64; 4],
    pub tail_fraction: f64,
}

fn gradient_sq(fh: &SpectralField) -> f64 {
    let rho2 = fh.grid().dim().rho().powi(2);
    fh.values()
        .iter()
        .zip(fh.grid().nodes())
        .zip(fh.grid().plancherel_weights())
        .map(|((v, &l), w)| (l * l + rho2) * v.norm_sqr() * w)
        .sum()
}

fn r_coth_minus_one(r: f64) -> f64 {
    if r < 1e-3 {
        let r2 = r * r;
        r2 / 3.0 - r2 * r2 / 45.0
    } else {
        r / r.tanh() - 1.0
    }
}

fn snapshot_from(u: &RadialField, fh: &SpectralField, p: f64, sigma: f64) -> Result<Snapshot> {
    let grid = u.grid();
    let dim = grid.dim();
    let n = dim.n() as f64;
    let nodes = grid.nodes();
    let w = grid.volume_weights();
    let du = radial_derivative_values(grid, u.values())?;
    let mut mass = 0.0;
    let mut potential = 0.0;
    let mut variance = 0.0;
    let mut rate = 0.0;
    let mut bilap = 0.0;
    let mut curv = 0.0;
    for (((&v, &d), &r), &wj) in u.values().iter().zip(&du).zip(nodes).zip(w) {
        let a2 = v.norm_sqr();
        let ap = v.norm().powf(p + 1.0);
        mass += a2 * wj;
        potential += ap * wj;
        variance += a2 * r * r * wj;
        rate += (v.conj() * d).im * r * wj;
        bilap += a2 * bilaplacian_r2(dim, r)? * wj;
        curv += ap * 2.0 * (n - 1.0) * r_coth_minus_one(r) * wj;
    }
    let grad2 = gradient_sq(fh);
    let energy = 0.5 * grad2 - sigma * potential / (p + 1.0);
    let terms = [
        16.0 * energy,
        -bilap,
        -sigma * 2.0 * (p - 1.0) / (p + 1.0) * curv,
        -sigma * (4.0 * n * (p - 1.0) - 16.0) / (p + 1.0) * potential,
    ];
    Ok(Snapshot {
        mass,
        energy,
        gradient_norm: grad2.sqrt(),
        potential,
        variance,
        variance_rate: 4.0 * rate,
        variance_accel: terms.iter().sum(),
        virial_terms: terms,
        tail_fraction: fh.tail_fraction(),
    })
}

/// Focusing-sign energy ½∫|∇u|² − (1/(p+1))∫|u|^{p+1} with the gradient
/// taken spectrally.
pub fn energy(u: &RadialField, p: f64) -> Result<f64> {
    let tr = HTransform::new(Arc::clone(u.grid()), spectral_grid_for(u.grid()))?;
    let fh = tr.forward(u)?;
    Ok(snapshot_from(u, &fh, p, 1.0)?.energy)
}

/// V(u) = ∫|u|² r².
pub fn variance(u: &RadialField) -> f64 {
    let grid = u.grid();
    u.values()
        .iter()
        .zip(grid.nodes())
        .zip(grid.volume_weights())
        .map(|((v, &r), w)| v.norm_sqr() * r * r * w)
        .sum()
}

/// (∫|u|²)² / (∫|u|²r² · ∫|∇u|²).
pub fn uncertainty_check(u: &RadialField) -> Result<f64> {
    let mass = u.mass();
    let grid = u.grid();
    let du = radial_derivative_values(grid, u.values())?;
    let grad2: f64 = du.iter().zip(grid.volume_weights()).map(|(d, w)| d.norm_sqr() * w).sum();
    let denom = variance(u) * grad2;
    if mass == 0.0 || !(denom > 0.0) {
        return Err(Error::Undefined("uncertainty ratio needs a nonzero, nonconstant field".into()));
    }
    Ok(mass * mass / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    GradientThreshold,
    StepCollapse,
}

/// Output of one integration.
#[derive(Debug, Clone)]
pub struct NlsRun {
    pub snapshots: Vec<Snapshot>,
    /// Stored fields when the configuration asks for them.
    pub fields: Vec<RadialField>,
    pub cadence: f64,
    pub t_reached: f64,
    pub stop: StopReason,
    pub steps: usize,
    pub min_step: f64,
    pub gradient_threshold: f64,
    /// Index of the first snapshot breaking a conservation tolerance or the
    /// spectral consistency limit.
    pub first_violation: Option<usize>,
}

impl NlsRun {
    pub fn times(&self) -> Vec<f64> {
        (0..self.snapshots.len()).map(|k| k as f64 * self.cadence).collect()
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.snapshots[0].mass;
        self.snapshots.iter().map(|s| (s.mass - m0).abs() / m0).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.snapshots[0].energy;
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.snapshots.iter().map(|s| (s.energy - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn diagnostics(&self) -> DiagnosticsSeries {
        virial_series(self)
    }
}

/// Time series of conserved quantities and both virial paths.
/// Finite-difference entries are NaN where the centered stencil is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub gradient_norm: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_rate: Vec<f64>,
    pub variance_rate_fd: Vec<f64>,
    pub variance_accel: Vec<f64>,
    pub variance_accel_fd: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DiagnosticsSeries {
    /// Largest relative gap between the formula and difference values of V''
    /// over interior samples, relative to the largest |V''| there.
    pub fn accel_agreement(&self) -> f64 {
        let idx: Vec<usize> = (0..self.times.len()).filter(|&k| self.variance_accel_fd[k].is_finite()).collect();
        let scale = idx.iter().map(|&k| self.variance_accel[k].abs()).fold(0.0, f64::max);
        idx.iter()
            .map(|&k| (self.variance_accel[k] - self.variance_accel_fd[k]).abs() / scale)
            .fold(0.0, f64::max)
    }
}

pub fn virial_series(run: &NlsRun) -> DiagnosticsSeries {
    let times = run.times();
    let len = times.len();
    let v: Vec<f64> = run.snapshots.iter().map(|s| s.variance).collect();
    let dt = run.cadence;
    let mut rate_fd = vec![f64::NAN; len];
    let mut accel_fd = vec![f64::NAN; len];
    for k in 1..len.saturating_sub(1) {
        rate_fd[k] = (v[k + 1] - v[k - 1]) / (2.0 * dt);
        accel_fd[k] = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (dt * dt);
    }
    let mut warnings = Vec::new();
    if len < 3 {
        warnings.push("fewer than three snapshots: no second differences".into());
    } else {
        let vmax = v.iter().cloned().fold(0.0, f64::max);
        let accel_scale = run.snapshots.iter().map(|s| s.variance_accel.abs()).fold(0.0, f64::max);
        let noise = 4.0 * f64::EPSILON * vmax / (dt * dt);
        if noise > 1e-3 * accel_scale {
            warnings.push(format!(
                "cadence {dt} too fine for stable second differences (roundoff {noise:e} vs |V''| {accel_scale:e})"
            ));
        }
        let jerk = (2..len - 2)
            .map(|k| (accel_fd[k + 1] - accel_fd[k - 1]).abs() / 2.0)
            .fold(0.0, f64::max);
        if jerk * dt > 0.05 * accel_scale {
            warnings.push(format!("cadence {dt} too coarse: V'' changes by {:e} per sample", jerk * dt));
        }
    }
    DiagnosticsSeries {
        times,
        mass: run.snapshots.iter().map(|s| s.mass).collect(),
        energy: run.snapshots.iter().map(|s| s.energy).collect(),
        gradient_norm: run.snapshots.iter().map(|s| s.gradient_norm).collect(),
        variance: v,
        variance_rate: run.snapshots.iter().map(|s| s.variance_rate).collect(),
        variance_rate_fd: rate_fd,
        variance_accel: run.snapshots.iter().map(|s| s.variance_accel).collect(),
        variance_accel_fd: accel_fd,
        warnings,
    }
}

/// k_n = inf Δ²r², the default right-hand constant in 16 E < k ‖u‖².
pub fn criterion_threshold(dim: Dimension) -> f64 {
    bilaplacian_r2_bounds(dim).0
}

/// Largest Gagliardo–Nirenberg ratio at p = 1 + 4/n over a family of
/// Gaussian and Gaussian-times-polynomial profiles of varying width.
pub fn empirical_gn_constant(grid: &Arc<RadialGrid>) -> Result<f64> {
    let p = 1.0 + 4.0 / grid.dim().n() as f64;
    let mut best: f64 = 0.0;
    for k in 0..24 {
        let width = 0.15 * 1.2f64.powi(k);
        if width > grid.r_max() / 8.0 {
            break;
        }
        for bump in [0.0, 1.0] {
            let v = grid.sample(|r| {
                let x = r / width;
                Complex64::new((1.0 + bump * x * x) * (-x * x).exp(), 0.0)
            });
            best = best.max(gagliardo_nirenberg_ratio(&v, p)?);
        }
    }
    if !(best > 0.0) {
        return Err(Error::Fit("no admissible profile for the Gagliardo–Nirenberg scan".into()));
    }
    Ok(best)
}

/// Mass bound ‖u‖₂ below which the small-mass condition
/// ‖u‖₂^{4/n} < (2+4/n)/(2C) holds.
pub fn small_mass_threshold(dim: Dimension, gn_constant: f64) -> f64 {
    let n = dim.n() as f64;
    ((2.0 + 4.0 / n) / (2.0 * gn_constant)).powf(n / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Blowup { t_est: f64 },
    Global { t_reached: f64 },
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Blowup { t_est } => write!(f, "blowup(T_est={t_est})"),
            Verdict::Global { t_reached } => write!(f, "global(T={t_reached})"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub verdict: Verdict,
    /// 16 E(u0) and k ‖u0‖²₂ for the concavity criterion.
    pub criterion_lhs: f64,
    pub criterion_rhs: f64,
    pub run: NlsRun,
    pub series: DiagnosticsSeries,
    /// Whether V'' < 0 at every sample up to the stop.
    pub concave_throughout: bool,
    /// Smallest value of V·∫|∇u|² / mass² along the run.
    pub uncertainty_floor: f64,
}

impl Experiment {
    pub fn criterion_holds(&self) -> bool {
        self.criterion_lhs < self.criterion_rhs
    }
}

/// Least-squares V ≈ a + bt + ct²; returns the first positive zero when the
/// fit is concave.
fn concave_zero(times: &[f64], v: &[f64]) -> Option<f64> {
    let mut m = [[0.0f64; 4]; 3];
    for (&t, &y) in times.iter().zip(v) {
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            m[i][3] += basis[i] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        m.swap(col, piv);
        if m[col][col].abs() < 1e-300 {
            return None;
        }
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let (a, b, c) = (m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]);
    if c >= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    let root = (-b - disc.sqrt()) / (2.0 * c);
    (root.is_finite() && root > 0.0).then_some(root)
}

/// Runs the dichotomy experiment and classifies the outcome.
///
/// A blow-up verdict needs the gradient threshold crossed with accelerating
/// growth, V'' < 0 at every sample, and any conservation or consistency
/// failure confined to the last two samples. A global verdict needs the full
/// horizon reached with no violation and the gradient below threshold.
pub fn blowup_experiment(u0: &RadialField, cfg: &NlsConfig) -> Result<Experiment> {
    let grid = u0.grid();
    let v0 = variance(u0);
    if !v0.is_finite() {
        return Err(Error::Config("initial datum has infinite variance".into()));
    }
    if u0.mass() == 0.0 {
        return Err(Error::Config("initial datum is zero".into()));
    }
    u0.check_boundary_mass(1e-10).map_err(|e| Error::Config(format!("initial datum not contained in grid: {e}")))?;
    let solver = NlsSolver::new(Arc::clone(grid), cfg.clone())?;
    let run = solver.run(u0)?;
    let series = virial_series(&run);
    let first = &run.snapshots[0];
    let k = cfg.criterion_threshold.unwrap_or_else(|| criterion_threshold(grid.dim()));
    let concave = run.snapshots.iter().all(|s| s.variance_accel < 0.0);
    let uncertainty_floor = run
        .snapshots
        .iter()
        .map(|s| s.variance * s.gradient_norm.powi(2) / (s.mass * s.mass))
        .fold(f64::INFINITY, f64::min);
    let len = run.snapshots.len();
    let verdict = match run.stop {
        StopReason::GradientThreshold | StopReason::StepCollapse => {
            let g = &series.gradient_norm;
            let accelerating = len >= 4 && {
                let d1 = g[len - 1] - g[len - 2];
                let d0 = g[len - 2] - g[len - 3];
                d1 > d0 && d0 > 0.0
            };
            let late_failure = run.first_violation.map_or(true, |i| i + 2 >= len);
            if accelerating && concave && late_failure {
                let t_est = concave_zero(&series.times, &series.variance).unwrap_or(run.t_reached);
                Verdict::Blowup { t_est }
            } else {
                Verdict::Inconclusive
            }
        }
        StopReason::Completed => {
            if run.first_violation.is_none() && run.t_reached >= cfg.t_end * (1.0 - 1e-12) {
                Verdict::Global {
                    t_reached: run.t_reached,
                }
            } else {
                Verdict::Inconclusive
            }
        }
    };
    Ok(Experiment {
        verdict,
        criterion_lhs: 16.0 * first.energy,
        criterion_rhs: k * first.mass,
        concave_throughout: concave,
        uncertainty_floor,
        run,
        series,
    })
}

const FRAME_MAGIC: &[u8; 8] = b"HNLSFRM\0";
const FRAME_VERSION: u32 = 1;

/// Writes one snapshot frame: header, grid description, time, samples.
pub fn write_frame<W: Write>(out: &mut W, t: f64, u: &RadialField) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let grid = u.grid();
    let mut buf = Vec::with_capacity(40 + 16 * grid.len());
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim().n() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.len() as u64).to_le_bytes());
    buf.extend_from_slice(&grid.r_max().to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for v in u.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)
}

pub fn write_frame_file(path: &Path, t: f64, u: &RadialField) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_frame(&mut f, t, u)
}

/// Reads a frame back as (t, field) on a freshly built grid.
pub fn read_frame<R: Read>(input: &mut R) -> Result<(f64, RadialField)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::Io(e.to_string()))?;
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 40 || &bytes[..8] != FRAME_MAGIC {
        return Err(bad("not a snapshot frame"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(8) != FRAME_VERSION {
        return Err(bad("unsupported frame version"));
    }
    let n = u32_at(12) as usize;
    let len = u64_at(16) as usize;
    let r_max = f64_at(24);
    let t = f64_at(32);
    if bytes.len() != 40 + 16 * len {
        return Err(bad("frame length does not match header"));
    }
    let values = (0..len)
        .map(|j| Complex64::new(f64_at(40 + 16 * j), f64_at(48 + 16 * j)))
        .collect();
    let grid = Arc::new(RadialGrid::new(Dimension::new(n)?, r_max, len)?);
    Ok((t, RadialField::new(grid, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::propagate_spectral;

    fn grid(n: usize, r_max: f64, len: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(Dimension::new(n).unwrap(), r_max, len).unwrap())
    }

    fn gaussian(g: &Arc<RadialGrid>, amp: f64, width: f64) -> RadialField {
        g.sample(|r| Complex64::new(amp * (-(r / width).powi(2)).exp(), 0.0))
    }

    #[test]
    fn phase_step_preserves_modulus() {
        let g = grid(3, 10.0, 200);
        let u = g.sample(|r| Complex64::new((-r * r).exp(), 0.3 * (-r).exp()));
        let v = nonlinear_phase(&u, 1.0, 7.0 / 3.0, 0.37);
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn linear_limit_matches_propagator() {
        let g = grid(3, 16.0, 400);
        let u0 = gaussian(&g, 1.0, 1.0);
        let mut cfg = NlsConfig::new(2.0, 0.1, 0.1);
        cfg.coupling = 0.0;
        let a = step_strang(&u0, &cfg).unwrap();
        let b = propagate_spectral(&u0, 0.1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn energy_basics() {
        let g = grid(3, 14.0, 700);
        let zero = g.sample(|_| Complex64::new(0.0, 0.0));
        assert_eq!(energy(&zero, 2.0).unwrap(), 0.0);
        let u = gaussian(&g, 0.8, 1.2);
        let rotated = g.sample(|r| Complex64::from_polar(0.8 * (-(r / 1.2).powi(2)).exp(), 0.9));
        let (a, b) = (energy(&u, 2.0).unwrap(), energy(&rotated, 2.0).unwrap());
        assert!((a - b).abs() < 1e-12 * a.abs());
        // Spectral gradient agrees with a direct finite-difference quadrature.
        let du = radial_derivative_values(&g, u.values()).unwrap();
        let grad_fd: f64 = du.iter().zip(g.volume_weights()).map(|(d, w)| d.norm_sqr() * w).sum();
        let pot: f64 = u.values().iter().zip(g.volume_weights()).map(|(v, w)| v.norm().powi(3) * w).sum();
        let fd_energy = 0.5 * grad_fd - pot / 3.0;
        assert!((fd_energy - a).abs() < 1e-3 * a.abs(), "{fd_energy} vs {a}");
    }

    #[test]
    fn config_validation() {
        assert!(matches!(NlsConfig::new(1.0, 0.1, 1.0).validate(), Err(Error::Config(_))));
        assert!(matches!(NlsConfig::new(2.0, 0.0, 1.0).validate(), Err(Error::Config(_))));
        assert!(matches!(
            NlsConfig::new(2.0, 0.1, 1.0).with_snapshot_every(0.01).validate(),
            Err(Error::Config(_))
        ));
        assert!(NlsConfig::new(2.0, 0.1, 1.0).validate().is_ok());
        let g = grid(3, 10.0, 100);
        let cfg = NlsConfig::new(3.0, 0.2, 1.0);
        assert!(matches!(cfg.check_data(&gaussian(&g, 2.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn mass_conserved_and_energy_second_order() {
        let g = grid(3, 20.0, 800);
        let u0 = gaussian(&g, 1.0, 1.0);
        let drift = |dt: f64| {
            let cfg = NlsConfig::new(2.0, dt, 1.0).with_snapshot_every(0.1);
            let run = NlsSolver::new(Arc::clone(&g), cfg).unwrap().run(&u0).unwrap();
            assert!(run.max_mass_drift() < 1e-12, "{}", run.max_mass_drift());
            let e0 = run.snapshots[0].energy;
            (run.snapshots.last().unwrap().energy - e0).abs() / e0.abs()
        };
        let (a, b) = (drift(0.02), drift(0.01));
        assert!(a < 1e-4, "{a}");
        assert!((a / b - 4.0).abs() < 1.0, "{a} {b}");
    }

    #[test]
    fn linear_virial_matches_differences() {
        let g = grid(3, 24.0, 1200);
        let u0 = g.sample(|r| Complex64::new((-(r - 1.0).powi(2)).exp(), 0.0));
        let mut cfg = NlsConfig::new(2.0, 0.01, 1.0).with_snapshot_every(0.05);
        cfg.coupling = 0.0;
        let run = NlsSolver::new(Arc::clone(&g), cfg).unwrap().run(&u0).unwrap();
        let s = run.diagnostics();
        assert!(s.variance.iter().all(|&v| v >= 0.0));
        assert!(s.accel_agreement() < 0.01, "{}", s.accel_agreement());
        for k in 1..s.times.len() - 1 {
            let rel = (s.variance_rate[k] - s.variance_rate_fd[k]).abs() / s.variance_rate[k].abs().max(1.0);
            assert!(rel < 0.01, "k={k} {} {}", s.variance_rate[k], s.variance_rate_fd[k]);
        }
    }

    #[test]
    fn uncertainty_ratio_properties() {
        let g = grid(3, 12.0, 600);
        let u = gaussian(&g, 1.0, 1.0);
        let a = uncertainty_check(&u).unwrap();
        let rotated = g.sample(|r| Complex64::from_polar((-r * r).exp(), 2.0));
        assert!(a.is_finite() && a > 0.0);
        assert!((uncertainty_check(&rotated).unwrap() - a).abs() < 1e-12 * a);
        let zero = g.sample(|_| Complex64::new(0.0, 0.0));
        assert!(matches!(uncertainty_check(&zero), Err(Error::Undefined(_))));
    }

    #[test]
    fn concave_zero_of_exact_parabola() {
        let t: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|&t| 4.0 - t * t).collect();
        assert!((concave_zero(&t, &v).unwrap() - 2.0).abs() < 1e-10);
        let convex: Vec<f64> = t.iter().map(|&t| 1.0 + t * t).collect();
        assert!(concave_zero(&t, &convex).is_none());
    }

    #[test]
    fn frame_roundtrip() {
        let g = grid(4, 9.0, 50);
        let u = g.sample(|r| Complex64::new(r.cos(), r.sin()));
        let mut buf = Vec::new();
        write_frame(&mut buf, 0.25, &u).unwrap();
        let (t, back) = read_frame(&mut buf.as_slice()).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(back.values(), u.values());
        assert_eq!(back.grid().as_ref(), g.as_ref());
        buf[9] ^= 1;
        assert!(matches!(read_frame(&mut buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_frame(&mut &buf[..20]), Err(Error::Format(_))));
    }
}
