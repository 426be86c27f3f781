//! Linear Schrödinger evolution e^{itΔ} of radial data on H^n.
//!
//! Two independent routes are provided. The spectral route multiplies the
//! Helgason–Fourier transform by e^{−it(λ²+ρ²)}. The kernel route convolves
//! with the sphere-averaged kernel
//!
//! ```text
//! K_rad(t, r, r') = ∫_{S^{n−1}} K^n(t, d(r e₀, r' ω)) dω
//!                 = |S^{n−2}| / (sinh r sinh r') ∫_{|r−r'|}^{r+r'} K^n(t, y) sinh y sin^{n−3}α dy,
//! ```
//!
//! where cos α = (cosh r cosh r' − cosh y)/(sinh r sinh r'). The constants
//! that the kernel representation leaves free are absorbed into one complex
//! C_n, calibrated against the spectral route.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::htransform::{spectral_multiplier, HTransform, SpectralGrid};
use crate::hypgeo::{sphere_area, Dimension, RadialField, RadialGrid};
use crate::kernels::{kernel, KernelRequest, OscQuadConfig};
use crate::quad::fixed_panels;

/// Spectral tail fraction above which the spectral route refuses to run.
pub const SPECTRAL_TAIL_LIMIT: f64 = 1e-8;
/// Kernel routes require |t| ≥ KERNEL_TIME_GUARD · h².
pub const KERNEL_TIME_GUARD: f64 = 10.0;
pub const CALIBRATION_TIME: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Spectral,
    Kernel,
    KernelClosed3,
}

/// Closed-form n = 3 two-point kernel t/(sinh r sinh r') e^{i(r²+r'²)/4t} sin(rr'/2t).
pub fn radial_kernel_n3(t: f64, r: f64, r2: f64) -> Result<Complex64> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::TimeRange(format!("closed n = 3 kernel needs t ≠ 0, got {t}")));
    }
    if !(r > 0.0) || !(r2 > 0.0) {
        return Err(Error::Domain(format!("radii must be positive, got {r}, {r2}")));
    }
    Ok(closed3(t, r, r2))
}

fn closed3(t: f64, r: f64, r2: f64) -> Complex64 {
    let amp = t / (r.sinh() * r2.sinh()) * (r * r2 / (2.0 * t)).sin();
    Complex64::from_polar(amp, (r * r + r2 * r2) / (4.0 * t))
}

/// 2 sinh((a+b)/2) sinh((a−b)/2) = cosh a − cosh b, without cancellation.
fn cosh_diff(a: f64, b: f64) -> f64 {
    2.0 * (0.5 * (a + b)).sinh() * (0.5 * (a - b)).sinh()
}

/// Sphere average of a distance kernel k(y) around the point at radius r,
/// over the sphere of radius r2. The substitution
/// y = y₀ + (y₁ − y₀)(1 − cos θ)/2 removes the square-root endpoint
/// behaviour of sin α at both ends.
pub fn sphere_average_with<K>(dim: Dimension, t: f64, r: f64, r2: f64, k: K) -> Complex64
where
    K: Fn(f64) -> Complex64,
{
    let panels = 2 + (r * r2 / (2.0 * PI * t.abs())).ceil() as usize;
    sphere_average_panels(dim, r, r2, panels, k)
}

/// As [`sphere_average_with`] with an explicit number of 21-point panels.
pub fn sphere_average_panels<K>(dim: Dimension, r: f64, r2: f64, panels: usize, k: K) -> Complex64
where
    K: Fn(f64) -> Complex64,
{
    let n = dim.n();
    let y0 = (r - r2).abs();
    let y1 = r + r2;
    let b = r.sinh() * r2.sinh();
    let half = 0.5 * (y1 - y0);
    let integrand = |theta: f64| {
        let (sh, ch) = (0.5 * theta).sin_cos();
        let (omc, opc) = (2.0 * sh * sh, 2.0 * ch * ch);
        let y = y0 + half * omc;
        let weight = if n == 3 {
            half * theta.sin()
        } else {
            let one_minus = cosh_diff(y, y0) / b;
            let one_plus = cosh_diff(y1, y) / b;
            // sin θ / sin α, finite at both ends
            let ratio = ((omc * opc) / (one_minus * one_plus)).sqrt();
            let sin_alpha = (one_minus * one_plus).sqrt();
            half * ratio * sin_alpha.powi(n as i32 - 2)
        };
        k(y) * (y.sinh() / b * weight)
    };
    fixed_panels(integrand, 0.0, PI, panels) * sphere_area(n - 2)
}

/// K_rad(t, r, r2) from direct kernel evaluations.
pub fn sphere_average_kernel(dim: Dimension, t: f64, r: f64, r2: f64) -> Result<Complex64> {
    if !(r > 0.0) || !(r2 > 0.0) {
        return Err(Error::Domain(format!("radii must be positive, got {r}, {r2}")));
    }
    let cfg = OscQuadConfig::default();
    // validate once so the closure may unwrap
    kernel(&KernelRequest::new(dim, t, r + r2)?, &cfg)?;
    let failure = Mutex::new(None);
    let value = sphere_average_with(dim, t, r, r2, |y| {
        match KernelRequest::new(dim, t, y).and_then(|q| kernel(&q, &cfg)) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().expect("lock").get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    });
    match failure.into_inner().expect("lock") {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// K^n(t, y) on a cell-centered y-grid, stored demodulated by e^{−iy²/4t}
/// and interpolated with 4-point Lagrange stencils using evenness in y.
#[derive(Debug, Clone)]
pub struct KernelTable {
    dim: Dimension,
    t: f64,
    dy: f64,
    amplitude: Vec<Complex64>,
}

impl KernelTable {
    pub fn build(dim: Dimension, t: f64, y_max: f64, dy: f64, cfg: &OscQuadConfig) -> Result<Self> {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::TimeRange(format!("kernel table needs t ≠ 0, got {t}")));
        }
        if !(dy > 0.0) || !(y_max > 0.0) {
            return Err(Error::Grid(format!("bad kernel table spacing {dy} or range {y_max}")));
        }
        let len = (y_max / dy).ceil() as usize + 3;
        let amplitude: Result<Vec<Complex64>> = (0..len)
            .into_par_iter()
            .map(|i| {
                let y = (i as f64 + 0.5) * dy;
                let k = kernel(&KernelRequest::new(dim, t, y)?, cfg)?;
                Ok(k * Complex64::from_polar(1.0, -y * y / (4.0 * t)))
            })
            .collect();
        Ok(Self {
            dim,
            t,
            dy,
            amplitude: amplitude?,
        })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn y_max(&self) -> f64 {
        (self.amplitude.len() as f64 - 2.5) * self.dy
    }
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitude
    }

    fn amp_at(&self, i: isize) -> Complex64 {
        // node −1−i mirrors node i
        let idx = if i < 0 { (-1 - i) as usize } else { i as usize };
        self.amplitude[idx.min(self.amplitude.len() - 1)]
    }

    pub fn eval(&self, y: f64) -> Complex64 {
        let x = y / self.dy - 0.5;
        let i = x.floor() as isize;
        let f = x - i as f64;
        let (p0, p1, p2, p3) = (
            self.amp_at(i - 1),
            self.amp_at(i),
            self.amp_at(i + 1),
            self.amp_at(i + 2),
        );
        let w0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let w2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let w3 = (f + 1.0) * f * (f - 1.0) / 6.0;
        let amp = p0 * w0 + p1 * w1 + p2 * w2 + p3 * w3;
        amp * Complex64::from_polar(1.0, y * y / (4.0 * self.t))
    }
}

/// Default table spacing; the demodulated kernel varies on unit scales.
pub const KERNEL_TABLE_DY: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey {
    n: usize,
    t_bits: u64,
    y_max_bits: u64,
}

fn cached_table(dim: Dimension, t: f64, y_max: f64) -> Result<Arc<KernelTable>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<KernelTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = TableKey {
        n: dim.n(),
        t_bits: t.to_bits(),
        y_max_bits: y_max.to_bits(),
    };
    if let Some(tab) = cache.lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(tab));
    }
    let tab = Arc::new(KernelTable::build(dim, t, y_max, KERNEL_TABLE_DY, &OscQuadConfig::default())?);
    let mut guard = cache.lock().expect("cache lock");
    if guard.len() > 64 {
        guard.clear();
    }
    guard.insert(key, Arc::clone(&tab));
    Ok(tab)
}

fn spectral_transform(grid: &Arc<RadialGrid>) -> Result<HTransform> {
    HTransform::new(Arc::clone(grid), Arc::new(SpectralGrid::for_radial(grid)))
}

/// u(t) = inverse ∘ multiplier(t) ∘ forward.
pub fn propagate_spectral(u0: &RadialField, t: f64) -> Result<RadialField> {
    let tr = spectral_transform(u0.grid())?;
    propagate_spectral_with(&tr, u0, t)
}

pub fn propagate_spectral_with(tr: &HTransform, u0: &RadialField, t: f64) -> Result<RadialField> {
    let fh = tr.forward(u0)?;
    fh.check_resolution(SPECTRAL_TAIL_LIMIT)?;
    tr.inverse(&spectral_multiplier(&fh, t))
}

fn check_kernel_time(grid: &RadialGrid, t: f64) -> Result<()> {
    let floor = KERNEL_TIME_GUARD * grid.h() * grid.h();
    if !(t.abs() >= floor) || !t.is_finite() {
        return Err(Error::TimeRange(format!(
            "|t| = {} is below the kernel resolution floor {floor}",
            t.abs()
        )));
    }
    Ok(())
}

/// e^{−itρ²} Σ_{j'} u0(r_{j'}) w_{j'} K_rad(t, r_j, r_{j'}) without C_n.
fn kernel_sum(u0: &RadialField, t: f64, route: Route) -> Result<Vec<Complex64>> {
    let grid = u0.grid();
    let dim = grid.dim();
    check_kernel_time(grid, t)?;
    let nodes = grid.nodes();
    let peak = u0.sup_norm();
    let sources: Vec<(f64, Complex64)> = nodes
        .iter()
        .zip(u0.values())
        .zip(grid.volume_weights())
        .filter(|((_, v), _)| v.norm() > 1e-16 * peak)
        .map(|((&r, v), w)| (r, v * w))
        .collect();
    let out: Vec<Complex64> = match route {
        Route::KernelClosed3 => {
            if dim.n() != 3 {
                return Err(Error::Parity(format!("closed-form kernel is n = 3 only, got n = {}", dim.n())));
            }
            let scale = t.abs().powf(-1.5);
            nodes
                .par_iter()
                .map(|&r| sources.iter().map(|&(r2, c)| c * closed3(t, r, r2)).sum::<Complex64>() * scale)
                .collect()
        }
        Route::Kernel => {
            let tab = cached_table(dim, t, 2.0 * grid.r_max() + 1.0)?;
            nodes
                .par_iter()
                .map(|&r| {
                    sources
                        .iter()
                        .map(|&(r2, c)| c * sphere_average_with(dim, t, r, r2, |y| tab.eval(y)))
                        .sum()
                })
                .collect()
        }
        Route::Spectral => return Err(Error::Unsupported("spectral route has no kernel sum".into())),
    };
    let phase = Complex64::from_polar(1.0, -t * dim.rho().powi(2));
    Ok(out.into_iter().map(|v| v * phase).collect())
}

/// A propagation route with its calibrated constant.
#[derive(Debug, Clone)]
pub struct PropagatorPlan {
    route: Route,
    grid: Arc<RadialGrid>,
    constant: Complex64,
    calibration_spread: f64,
}

fn gaussian_references(grid: &Arc<RadialGrid>) -> [RadialField; 2] {
    [
        grid.sample(|r| Complex64::new((-r * r).exp(), 0.0)),
        grid.sample(|r| Complex64::new((1.0 + r * r) * (-1.5 * r * r).exp(), 0.0)),
    ]
}

impl PropagatorPlan {
    pub fn spectral(grid: Arc<RadialGrid>) -> Self {
        Self {
            route: Route::Spectral,
            grid,
            constant: Complex64::new(1.0, 0.0),
            calibration_spread: 0.0,
        }
    }

    /// Calibrates C_n by least squares against the spectral route at
    /// t = 0.5 on two reference profiles; the spread between the two fits is
    /// kept for inspection.
    pub fn calibrated(grid: Arc<RadialGrid>, route: Route) -> Result<Self> {
        if route == Route::Spectral {
            return Ok(Self::spectral(grid));
        }
        let tr = spectral_transform(&grid)?;
        let mut fits = Vec::with_capacity(2);
        for u0 in gaussian_references(&grid) {
            let raw = RadialField::new(Arc::clone(&grid), kernel_sum(&u0, CALIBRATION_TIME, route)?)?;
            let exact = propagate_spectral_with(&tr, &u0, CALIBRATION_TIME)?;
            let denom = raw.inner(&raw);
            if denom.norm() == 0.0 {
                return Err(Error::Fit("kernel route produced zero output".into()));
            }
            fits.push(raw.inner(&exact) / denom);
        }
        let constant = fits[0];
        let spread = (fits[1] - fits[0]).norm() / fits[0].norm();
        if !constant.is_finite() || constant.norm() == 0.0 {
            return Err(Error::Fit(format!("calibrated constant {constant} is degenerate")));
        }
        Ok(Self {
            route,
            grid,
            constant,
            calibration_spread: spread,
        })
    }

    pub fn with_constant(grid: Arc<RadialGrid>, route: Route, constant: Complex64) -> Self {
        Self {
            route,
            grid,
            constant,
            calibration_spread: 0.0,
        }
    }

    pub fn route(&self) -> Route {
        self.route
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    /// C_n for t > 0; negative times use its conjugate.
    pub fn constant(&self) -> Complex64 {
        self.constant
    }
    pub fn calibration_spread(&self) -> f64 {
        self.calibration_spread
    }

    pub fn propagate(&self, u0: &RadialField, t: f64) -> Result<RadialField> {
        if u0.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Grid("field does not live on the plan's grid".into()));
        }
        match self.route {
            Route::Spectral => propagate_spectral(u0, t),
            route => {
                let c = if t > 0.0 { self.constant } else { self.constant.conj() };
                let raw = kernel_sum(u0, t, route)?;
                RadialField::new(Arc::clone(u0.grid()), raw.into_iter().map(|v| v * c).collect())
            }
        }
    }
}

/// Kernel-route propagation with C_n calibrated on the field's grid.
pub fn propagate_kernel(u0: &RadialField, t: f64) -> Result<RadialField> {
    check_kernel_time(u0.grid(), t)?;
    PropagatorPlan::calibrated(Arc::clone(u0.grid()), Route::Kernel)?.propagate(u0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htransform::SpectralField;
    use crate::quad::{integrate, QuadOptions};

    fn grid(n: usize, r_max: f64, len: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(Dimension::new(n).unwrap(), r_max, len).unwrap())
    }

    fn rel_l2(a: &RadialField, b: &RadialField) -> f64 {
        let diff: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .zip(a.grid().volume_weights())
            .map(|((x, y), w)| (x - y).norm_sqr() * w)
            .sum();
        (diff / b.mass()).sqrt()
    }

    fn gaussian(g: &Arc<RadialGrid>) -> RadialField {
        g.sample(|r| Complex64::new((-r * r).exp(), 0.0))
    }

    #[test]
    fn closed_kernel_bound_and_symmetry() {
        for &(t, r, r2) in &[(0.3, 0.5, 2.0), (-1.0, 3.0, 0.2), (2.0, 4.0, 4.0)] {
            let k = radial_kernel_n3(t, r, r2).unwrap();
            assert!(k.norm() <= t.abs() / (r.sinh() * r2.sinh()) * (1.0 + 1e-15));
            assert!((k - radial_kernel_n3(t, r2, r).unwrap()).norm() < 1e-15 * k.norm().max(1e-300));
        }
        assert!(matches!(radial_kernel_n3(0.0, 1.0, 1.0), Err(Error::TimeRange(_))));
    }

    #[test]
    fn sphere_average_reduces_to_closed_form() {
        let d = Dimension::new(3).unwrap();
        let mut ratios = Vec::new();
        for &(t, r, r2) in &[(0.5, 1.0, 2.0), (0.5, 0.3, 0.4), (0.5, 3.0, 1.5)] {
            let a = sphere_average_kernel(d, t, r, r2).unwrap();
            let b = radial_kernel_n3(t, r, r2).unwrap();
            ratios.push(a / b);
        }
        for q in &ratios[1..] {
            assert!((q - ratios[0]).norm() < 1e-9 * ratios[0].norm(), "{ratios:?}");
        }
    }

    #[test]
    fn sphere_average_symmetry_and_point_limit() {
        for n in [2usize, 4, 5] {
            let d = Dimension::new(n).unwrap();
            let a = sphere_average_kernel(d, 0.7, 1.1, 2.3).unwrap();
            let b = sphere_average_kernel(d, 0.7, 2.3, 1.1).unwrap();
            assert!((a - b).norm() < 1e-8 * a.norm(), "n={n}: {a} vs {b}");
            let cfg = OscQuadConfig::default();
            let k = kernel(&KernelRequest::new(d, 0.7, 1.5).unwrap(), &cfg).unwrap();
            let near = sphere_average_kernel(d, 0.7, 1.5, 1e-4).unwrap();
            let expect = k * d.sphere_area();
            assert!((near - expect).norm() < 1e-3 * expect.norm(), "n={n}: {near} vs {expect}");
        }
    }

    #[test]
    fn kernel_table_interpolates() {
        for n in [2usize, 3] {
            let d = Dimension::new(n).unwrap();
            let cfg = OscQuadConfig::default();
            let tab = KernelTable::build(d, 0.4, 6.0, KERNEL_TABLE_DY, &cfg).unwrap();
            for &y in &[0.001, 0.2345, 1.777, 5.5] {
                let exact = kernel(&KernelRequest::new(d, 0.4, y).unwrap(), &cfg).unwrap();
                let v = tab.eval(y);
                assert!((v - exact).norm() < 1e-8 * exact.norm(), "n={n} y={y}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn spectral_route_basic_properties() {
        let g = grid(3, 20.0, 1000);
        let u0 = gaussian(&g);
        let same = propagate_spectral(&u0, 0.0).unwrap();
        assert!(rel_l2(&same, &u0) < 1e-12);
        for &t in &[0.1, 1.0, 5.0] {
            let u = propagate_spectral(&u0, t).unwrap();
            assert!((u.mass() - u0.mass()).abs() < 1e-8 * u0.mass());
        }
        let a = propagate_spectral(&propagate_spectral(&u0, 0.3).unwrap(), 0.4).unwrap();
        let b = propagate_spectral(&u0, 0.7).unwrap();
        assert!(rel_l2(&a, &b) < 1e-6);
        // time reversal
        let c = g.sample(|r| Complex64::new((-r * r).exp(), 0.5 * r * (-r * r).exp()));
        let fwd = propagate_spectral(&c, 0.6).unwrap();
        let conj_in = RadialField::new(Arc::clone(&g), c.values().iter().map(|v| v.conj()).collect()).unwrap();
        let back = propagate_spectral(&conj_in, -0.6).unwrap();
        for (x, y) in fwd.values().iter().zip(back.values()) {
            assert!((x.conj() - y).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_eigenmode() {
        let g = grid(3, 10.0, 400);
        let sg = Arc::new(SpectralGrid::for_radial(&g));
        let tr = HTransform::new(Arc::clone(&g), Arc::clone(&sg)).unwrap();
        let mut spike = SpectralField::zeros(Arc::clone(&sg));
        let k0 = 5;
        spike.values_mut()[k0] = Complex64::new(1.0, 0.0);
        let u0 = tr.inverse(&spike).unwrap();
        let l0 = sg.nodes()[k0];
        let t = 0.8;
        let fh = tr.forward(&u0).unwrap();
        let u = tr.inverse(&spectral_multiplier(&fh, t)).unwrap();
        let phase = Complex64::from_polar(1.0, -t * (l0 * l0 + 1.0));
        for (a, b) in u.values().iter().zip(u0.values()) {
            assert!((a - phase * b).norm() < 1e-12);
        }
        let mut top = SpectralField::zeros(Arc::clone(&sg));
        *top.values_mut().last_mut().unwrap() = Complex64::new(1.0, 0.0);
        let rough = tr.inverse(&top).unwrap();
        assert!(matches!(
            propagate_spectral_with(&tr, &rough, t),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn closed_route_matches_spectral_and_analytic_constant() {
        let g = grid(3, 24.0, 2400);
        let plan = PropagatorPlan::calibrated(Arc::clone(&g), Route::KernelClosed3).unwrap();
        // free H³ kernel e^{−it}(4πit)^{−3/2}(ρ/sinh ρ)e^{iρ²/4t}, sphere-averaged,
        // divided by the |S²| carried in the volume weights
        let expect = Complex64::from_polar(1.0 / (4.0 * PI.powf(1.5)), -0.75 * PI);
        assert!((plan.constant() - expect).norm() < 1e-6 * expect.norm(), "{}", plan.constant());
        assert!(plan.calibration_spread() < 1e-6);
        let u0 = g.sample(|r| Complex64::new((-r * r).exp() * (2.0 * r).cos(), 0.0));
        for &t in &[0.1, 0.5, 1.0] {
            let a = plan.propagate(&u0, t).unwrap();
            let b = propagate_spectral(&u0, t).unwrap();
            assert!(rel_l2(&a, &b) < 1e-5, "t={t}: {}", rel_l2(&a, &b));
            assert!((a.mass() - u0.mass()).abs() < 1e-4 * u0.mass());
        }
        let a = plan.propagate(&u0, -0.5).unwrap();
        let b = propagate_spectral(&u0, -0.5).unwrap();
        assert!(rel_l2(&a, &b) < 1e-5);
    }

    #[test]
    fn general_route_matches_spectral_n3() {
        let g = grid(3, 16.0, 800);
        let plan = PropagatorPlan::calibrated(Arc::clone(&g), Route::Kernel).unwrap();
        assert!(plan.calibration_spread() < 1e-6, "{}", plan.calibration_spread());
        let u0 = gaussian(&g);
        for &t in &[0.5, 1.0] {
            let a = plan.propagate(&u0, t).unwrap();
            let b = propagate_spectral(&u0, t).unwrap();
            assert!(rel_l2(&a, &b) < 1e-5, "t={t}: {}", rel_l2(&a, &b));
        }
    }

    #[test]
    fn general_route_matches_spectral_n2() {
        let g = grid(2, 14.0, 350);
        let plan = PropagatorPlan::calibrated(Arc::clone(&g), Route::Kernel).unwrap();
        assert!(plan.calibration_spread() < 1e-5, "{}", plan.calibration_spread());
        let u0 = gaussian(&g);
        let a = plan.propagate(&u0, 1.0).unwrap();
        let b = propagate_spectral(&u0, 1.0).unwrap();
        assert!(rel_l2(&a, &b) < 1e-4, "{}", rel_l2(&a, &b));
    }

    #[test]
    fn time_guard() {
        let g = grid(3, 10.0, 100);
        let u0 = gaussian(&g);
        let plan = PropagatorPlan::with_constant(Arc::clone(&g), Route::KernelClosed3, Complex64::new(1.0, 0.0));
        assert!(matches!(plan.propagate(&u0, 1e-4), Err(Error::TimeRange(_))));
        assert!(matches!(plan.propagate(&u0, 0.0), Err(Error::TimeRange(_))));
        let g2 = grid(2, 10.0, 100);
        let plan2 = PropagatorPlan::with_constant(Arc::clone(&g2), Route::KernelClosed3, Complex64::new(1.0, 0.0));
        assert!(matches!(plan2.propagate(&gaussian(&g2), 1.0), Err(Error::Parity(_))));
    }

    /// Euclidean R³ free evolution of a radial profile at radius r.
    fn euclidean_radial(u0: impl Fn(f64) -> f64, support: f64, t: f64, r: f64) -> Complex64 {
        let pref = Complex64::new(0.0, 4.0 * PI * t).powf(-1.5);
        let f = |s: f64| {
            let k = Complex64::from_polar(8.0 * PI * t / (r * s) * (r * s / (2.0 * t)).sin(), (r * r + s * s) / (4.0 * t));
            k * u0(s) * s * s
        };
        let opts = QuadOptions::with_tol(1e-16, 1e-10).initial_panels(64);
        pref * integrate(f, 1e-12, support, &opts).unwrap().value
    }

    #[test]
    fn decay_away_from_support_is_stronger() {
        let bump = |r: f64| if r < 1.0 { (1.0 - r * r).powi(6) } else { 0.0 };
        let g = grid(3, 30.0, 6000);
        let u0 = g.sample(|r| Complex64::new(bump(r), 0.0));
        let t = 0.5;
        let u = propagate_spectral(&u0, t).unwrap();
        let j = g.nodes().partition_point(|&r| r < 5.0);
        let r = g.nodes()[j];
        let hyper = u.values()[j].norm();
        let flat = euclidean_radial(bump, 1.0, t, r).norm();
        let d = r - 1.0;
        assert!(hyper / flat <= d / d.sinh() * 4.0, "ratio {} vs pattern {}", hyper / flat, d / d.sinh());
        assert!(hyper < flat);
    }
}
