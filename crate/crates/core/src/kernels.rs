//! The Schrödinger kernel K^n(t, ρ) on H^n as a function of geodesic
//! distance, up to the dimensional constant fixed in `propagator`.
//!
//! Odd n = 2m+1:
//!   K(t,ρ) = |t|^{-1/2} Σ_{k=1}^m t^{-k} e^{iρ²/4t} F_k^m(ρ).
//! Even n = 2m:
//!   K(t,ρ) = |t|^{-1/2} Σ_{k=1}^m t^{-k}
//!            ∫_ρ^∞ sinh s (cosh s − cosh ρ)^{-1/2} e^{is²/4t} F_k^m(s) ds.
//!
//! The semi-infinite integrals share the form
//!   J = ∫_ρ^∞ e^{is²/4t} w(s) (cosh s − cosh ρ)^{-1/2} ds
//! and are computed one of three ways. The default rotates the path onto
//! s = ρ + e^{iπ/4}u², where the phase turns into a Gaussian decay and the
//! endpoint singularity disappears. The real-axis substitution s = ρ + u²
//! and an ε-regularized integral extrapolated to ε → 0 serve as
//! independent checks.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, LN_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hypgeo::Dimension;
use crate::quad::{integrate_partition, integrate_unchecked, QuadOptions};
use crate::specfun::fk::{fk_prefactor, fk_table, FkTable, FK_MAX_M};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelRequest {
    pub dim: Dimension,
    pub t: f64,
    pub rho: f64,
}

impl KernelRequest {
    pub fn new(dim: Dimension, t: f64, rho: f64) -> Result<Self> {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and nonzero, got {t}")));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("distance must be nonnegative, got {rho}")));
        }
        Ok(Self { dim, t, rho })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscMethod {
    /// Path rotated to s = ρ + e^{iπ/4}u².
    Contour,
    /// Real axis with s = ρ + u², truncated where the envelope is negligible.
    RealAxis,
    /// (cosh s − cosh ρ + ε)^{-1/2} over the ε schedule, extrapolated in √ε.
    EpsRegularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscQuadConfig {
    pub eps_schedule: Vec<f64>,
    /// Number of powers of √ε removed by extrapolation.
    pub singular_order: usize,
    pub tolerance: f64,
    pub max_panels: usize,
    pub method: OscMethod,
}

impl Default for OscQuadConfig {
    fn default() -> Self {
        Self {
            eps_schedule: (0..6).map(|k| 1e-3 / 4f64.powi(k)).collect(),
            singular_order: 5,
            tolerance: 1e-10,
            max_panels: 200_000,
            method: OscMethod::Contour,
        }
    }
}

impl OscQuadConfig {
    pub fn with_method(method: OscMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.method == OscMethod::EpsRegularized {
            if self.eps_schedule.len() < 2 {
                return Err(Error::Config("ε schedule needs at least two entries".into()));
            }
            if self.eps_schedule.iter().any(|&e| !(e > 0.0))
                || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(Error::Config("ε schedule must be positive and strictly decreasing".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscOutcome {
    pub value: Complex64,
    pub error_estimate: f64,
    /// Upper end of the integration variable after truncation.
    pub truncation: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IOutcome {
    pub value: Complex64,
    pub error_estimate: f64,
    /// |I| / (√t √(ρ/sinh ρ)).
    pub bound_ratio: f64,
}

fn fk_cached(m: usize) -> &'static FkTable {
    static CACHE: OnceLock<Vec<FkTable>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        (1..=FK_MAX_M)
            .map(|k| fk_table(k).expect("table in range"))
            .collect()
    });
    &all[m - 1]
}

/// (1 − e^{−2z})/(2z).
fn h_ratio(z: Complex64) -> Complex64 {
    if z.norm() < 0.25 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..24 {
            term *= -2.0 * z / (k as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (1.0 - (-2.0 * z).exp()) / (2.0 * z)
    }
}

/// log((cosh s − cosh ρ)/(s − ρ)), continuous along paths with Re(s − ρ) > 0.
fn log_abel_quotient(s: Complex64, rho: f64) -> Complex64 {
    let z1 = (s + rho) * 0.5;
    let z2 = (s - rho) * 0.5;
    z1 + (1.0 - (-2.0 * z1).exp()).ln() + z2 + h_ratio(z2).ln() - LN_2
}

fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// J = ∫_ρ^∞ e^{is²/4t} w(s) (cosh s − cosh ρ)^{-1/2} ds for t > 0. `decay`
/// is the exponential rate of |w(s)| e^{−s/2} along the real axis.
pub fn abel_oscillatory<W>(t: f64, rho: f64, decay: f64, cfg: &OscQuadConfig, w: W) -> Result<OscOutcome>
where
    W: Fn(Complex64) -> Complex64,
{
    cfg.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("needs t > 0, got {t}")));
    }
    let decay = decay.max(0.05);
    let phase = |s: Complex64| (I * s * s / (4.0 * t)).exp();
    match cfg.method {
        OscMethod::Contour => {
            // |e^{is²/4t}| = exp(−(v² + √2 ρ v)/4t) with v = u²
            let a = 1.0 / (4.0 * t);
            let b = 2f64.sqrt() * rho / (4.0 * t) + decay * FRAC_1_SQRT_2;
            let target = 46.0;
            let v_max = (-b + (b * b + 4.0 * a * target).sqrt()) / (2.0 * a);
            let u_max = v_max.sqrt();
            let rot = Complex64::from_polar(1.0, FRAC_PI_4);
            let pref = Complex64::from_polar(2.0, FRAC_PI_8);
            let f = |u: f64| {
                let s = rot * (u * u) + rho;
                pref * phase(s) * w(s) * (-0.5 * log_abel_quotient(s, rho)).exp()
            };
            finish(f, u_max, 8, cfg)
        }
        OscMethod::RealAxis => {
            let v_max = 46.0 / decay;
            let u_max = v_max.sqrt();
            let f = |u: f64| {
                let u2 = u * u;
                let s = rho + u2;
                let denom = ((rho + 0.5 * u2).sinh() * sinhc(0.5 * u2)).sqrt();
                phase(Complex64::new(s, 0.0)) * w(Complex64::new(s, 0.0)) * (2.0 / denom)
            };
            let s_max = rho + v_max;
            let panels = 16 + (s_max * s_max / (4.0 * t) / PI) as usize;
            finish(f, u_max, panels.min(cfg.max_panels / 4), cfg)
        }
        OscMethod::EpsRegularized => eps_regularized(t, rho, decay, cfg, &phase, &w),
    }
}

fn sample_scale<F: Fn(f64) -> Complex64>(f: &F, hi: f64) -> f64 {
    (1..=64)
        .map(|k| f(hi * k as f64 / 65.0).norm())
        .fold(0.0, f64::max)
        * hi
}

fn finish<F: Fn(f64) -> Complex64>(f: F, hi: f64, panels: usize, cfg: &OscQuadConfig) -> Result<OscOutcome> {
    let scale = sample_scale(&f, hi);
    let opts = QuadOptions {
        abs_tol: cfg.tolerance * 1e-3 * scale,
        rel_tol: cfg.tolerance,
        max_panels: cfg.max_panels,
        initial_panels: panels.max(1),
    };
    let r = integrate_unchecked(f, 0.0, hi, &opts);
    if !r.converged {
        return Err(Error::Accuracy {
            requested: opts.abs_tol.max(opts.rel_tol * r.value.norm()),
            achieved: r.error,
            panels: r.panels,
        });
    }
    Ok(OscOutcome {
        value: r.value,
        error_estimate: r.error,
        truncation: hi,
        panels: r.panels,
    })
}

fn eps_regularized<P, W>(t: f64, rho: f64, decay: f64, cfg: &OscQuadConfig, phase: &P, w: &W) -> Result<OscOutcome>
where
    P: Fn(Complex64) -> Complex64,
    W: Fn(Complex64) -> Complex64,
{
    let s_max = rho + 46.0 / decay;
    let slope = rho.sinh().max(1e-3);
    let oscill = 16 + (s_max * s_max / (4.0 * t) / PI) as usize;
    let mut values = Vec::with_capacity(cfg.eps_schedule.len());
    let mut panels = 0;
    let mut quad_err: f64 = 0.0;
    for &eps in &cfg.eps_schedule {
        let f = |s: f64| {
            let d = 2.0 * (0.5 * (s + rho)).sinh() * (0.5 * (s - rho)).sinh();
            let sc = Complex64::new(s, 0.0);
            phase(sc) * w(sc) / (d + eps).sqrt()
        };
        // geometric breakpoints resolve the width-ε layer at s = ρ
        let mut pts = vec![rho];
        let mut off = 0.25 * eps / slope;
        while rho + off < s_max.min(rho + 1.0) {
            pts.push(rho + off);
            off *= 4.0;
        }
        let start = *pts.last().expect("nonempty");
        for k in 1..=oscill {
            pts.push(start + (s_max - start) * k as f64 / oscill as f64);
        }
        let scale = sample_scale(&|u: f64| f(rho + u), s_max - rho);
        let opts = QuadOptions {
            abs_tol: cfg.tolerance * 1e-3 * scale,
            rel_tol: cfg.tolerance,
            max_panels: cfg.max_panels,
            initial_panels: 1,
        };
        let r = integrate_partition(f, &pts, &opts);
        panels += r.panels;
        quad_err = quad_err.max(r.error);
        values.push((eps.sqrt(), r.value));
    }
    let order = cfg.singular_order.min(values.len() - 1);
    let used = &values[values.len() - order - 1..];
    let (value, diff) = neville_at_zero(used);
    let error_estimate = diff.max(quad_err);
    if error_estimate > cfg.tolerance.max(1e-6) * value.norm().max(1e-300) * 1e3 {
        return Err(Error::Accuracy {
            requested: cfg.tolerance,
            achieved: error_estimate,
            panels,
        });
    }
    Ok(OscOutcome {
        value,
        error_estimate,
        truncation: s_max,
        panels,
    })
}

/// Polynomial extrapolation of (h_k, y_k) to h = 0; returns the value and
/// its change when the coarsest point is dropped.
fn neville_at_zero(points: &[(f64, Complex64)]) -> (Complex64, f64) {
    fn extrapolate(points: &[(f64, Complex64)]) -> Complex64 {
        let n = points.len();
        let mut p: Vec<Complex64> = points.iter().map(|&(_, y)| y).collect();
        for level in 1..n {
            for i in 0..n - level {
                let (hi, hj) = (points[i].0, points[i + level].0);
                p[i] = (p[i + 1] * hi - p[i] * hj) / (hi - hj);
            }
        }
        p[0]
    }
    let full = extrapolate(points);
    let diff = if points.len() > 1 {
        (full - extrapolate(&points[1..])).norm()
    } else {
        f64::INFINITY
    };
    (full, diff)
}

fn odd_m(dim: Dimension) -> Result<usize> {
    if dim.is_even() {
        return Err(Error::Parity(format!("n = {} is even", dim.n())));
    }
    let m = (dim.n() - 1) / 2;
    if m > FK_MAX_M {
        return Err(Error::Unsupported(format!("n = {} exceeds the F_k^m tables", dim.n())));
    }
    Ok(m)
}

fn even_m(dim: Dimension) -> Result<usize> {
    if dim.is_odd() {
        return Err(Error::Parity(format!("n = {} is odd", dim.n())));
    }
    let m = dim.n() / 2;
    if m > FK_MAX_M {
        return Err(Error::Unsupported(format!("n = {} exceeds the F_k^m tables", dim.n())));
    }
    Ok(m)
}

pub fn kernel_odd(req: &KernelRequest) -> Result<Complex64> {
    let m = odd_m(req.dim)?;
    let table = fk_cached(m);
    let t = req.t;
    let rho = req.rho;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut tk = 1.0;
    for k in 1..=m {
        tk /= t;
        acc += fk_prefactor(k) * (table.eval_real(k, rho) * tk);
    }
    let phase = Complex64::from_polar(1.0, rho * rho / (4.0 * t));
    Ok(acc * phase / t.abs().sqrt())
}

/// sinh s · Σ_k t^{-k} F_k^m(s) at complex s.
fn even_weight(m: usize, t: f64) -> impl Fn(Complex64) -> Complex64 {
    let table = fk_cached(m);
    let coef: Vec<Complex64> = (1..=m).map(|k| fk_prefactor(k) * t.powi(-(k as i32))).collect();
    let compiled: Vec<_> = (1..=m).map(|k| table.expr(k).compile(0)).collect();
    move |s: Complex64| {
        let sum: Complex64 = compiled
            .iter()
            .zip(&coef)
            .map(|(c, a)| c.eval_complex(s) * a)
            .sum();
        s.sinh() * sum
    }
}

pub fn kernel_even_detailed(req: &KernelRequest, cfg: &OscQuadConfig) -> Result<OscOutcome> {
    let m = even_m(req.dim)?;
    let t = req.t.abs();
    let mut out = abel_oscillatory(t, req.rho, m as f64 - 0.5, cfg, even_weight(m, t))?;
    out.value /= t.sqrt();
    out.error_estimate /= t.sqrt();
    if req.t < 0.0 {
        out.value = out.value.conj();
    }
    Ok(out)
}

pub fn kernel_even(req: &KernelRequest, cfg: &OscQuadConfig) -> Result<Complex64> {
    kernel_even_detailed(req, cfg).map(|o| o.value)
}

/// K^n(t, ρ) for either parity.
pub fn kernel(req: &KernelRequest, cfg: &OscQuadConfig) -> Result<Complex64> {
    if req.dim.is_odd() {
        kernel_odd(req)
    } else {
        kernel_even(req, cfg)
    }
}

/// I(t,ρ) = ∫_ρ^∞ e^{is²/4t} s (cosh s − cosh ρ)^{-1/2} ds.
pub fn oscillatory_i(t: f64, rho: f64, cfg: &OscQuadConfig) -> Result<IOutcome> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("needs t > 0, got {t}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("needs ρ ≥ 0, got {rho}")));
    }
    let out = abel_oscillatory(t, rho, 0.5, cfg, |s| s)?;
    let weight = if rho == 0.0 { 1.0 } else { (rho / rho.sinh()).sqrt() };
    Ok(IOutcome {
        value: out.value,
        error_estimate: out.error_estimate,
        bound_ratio: out.value.norm() / (t.sqrt() * weight),
    })
}
