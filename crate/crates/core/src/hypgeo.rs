//! Geometry of the hyperboloid model of H^n restricted to what radial
//! computations need: Minkowski products, distances, cell-centered radial
//! grids with volume weights, and the radial Laplace–Beltrami operator.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Spatial dimension `n ≥ 2` of H^n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimension {
    n: usize,
}

impl Dimension {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(format!("n must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn is_odd(self) -> bool {
        self.n % 2 == 1
    }

    pub fn is_even(self) -> bool {
        !self.is_odd()
    }

    /// ρ = (n−1)/2, the shift in the spectrum of −Δ.
    pub fn rho(self) -> f64 {
        (self.n as f64 - 1.0) / 2.0
    }

    /// Surface area |S^{n−1}| of the unit sphere in R^n.
    pub fn sphere_area(self) -> f64 {
        sphere_area(self.n - 1)
    }
}

/// Γ(k/2) for a positive integer `k`.
pub fn gamma_half_int(k: usize) -> f64 {
    assert!(k > 0, "Γ(0) is undefined");
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if k % 2 == 0 { 1.0 } else { 0.5 };
    let target = k as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere S^k ⊂ R^{k+1}; |S^0| = 2.
pub fn sphere_area(k: usize) -> f64 {
    2.0 * PI.powf((k as f64 + 1.0) / 2.0) / gamma_half_int(k + 1)
}

pub fn minkowski_product(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Dimension(format!(
            "need at least 3 coordinates, got {}",
            x.len()
        )));
    }
    let space: f64 = x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum();
    Ok(x[0] * y[0] - space)
}

const POINT_TOL: f64 = 1e-9;

/// A point on the upper sheet {[x,x] = 1, x₀ > 0}.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint {
    coords: Vec<f64>,
}

impl HyperboloidPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let q = minkowski_product(&coords, &coords)?;
        let scale = coords[0] * coords[0];
        if (q - 1.0).abs() > POINT_TOL * scale.max(1.0) {
            return Err(Error::InvalidPoint(format!("[x,x] = {q}")));
        }
        if coords[0] < 1.0 - POINT_TOL {
            return Err(Error::InvalidPoint(format!("x0 = {} < 1", coords[0])));
        }
        Ok(Self { coords })
    }

    pub fn origin(dim: Dimension) -> Self {
        let mut coords = vec![0.0; dim.n() + 1];
        coords[0] = 1.0;
        Self { coords }
    }

    /// The point (cosh r, sinh r ω) with ω normalized to the unit sphere.
    pub fn from_polar(r: f64, direction: &[f64]) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidPoint("zero direction".into()));
        }
        let mut coords = Vec::with_capacity(direction.len() + 1);
        coords.push(r.cosh());
        coords.extend(direction.iter().map(|v| r.sinh() * v / norm));
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

pub fn geodesic_distance(a: &HyperboloidPoint, b: &HyperboloidPoint) -> Result<f64> {
    let p = minkowski_product(&a.coords, &b.coords)?;
    let scale = a.coords[0] * b.coords[0];
    if p < 1.0 - POINT_TOL * scale.max(1.0) {
        return Err(Error::InvalidPoint(format!("[a,b] = {p} < 1")));
    }
    Ok(p.max(1.0).acosh())
}

/// ζ(1−n, ½) = −B_n(½)/n, which vanishes for odd n.
fn hurwitz_zeta_half(n: usize) -> f64 {
    const BERNOULLI: [f64; 6] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    if n % 2 == 1 || n > 12 {
        return 0.0;
    }
    let b = BERNOULLI[n / 2 - 1] * (2f64.powi(1 - n as i32) - 1.0);
    -b / n as f64
}

/// Cell-centered grid r_j = (j + ½)h on [0, r_max] with hyperbolic volume
/// weights |S^{n−1}| sinh^{n−1}(r_j) h.
///
/// For even n the density r^{n−1} is odd at the origin and the plain
/// midpoint rule leaves an error of h^n ζ(1−n, ½) times f(0). That term is
/// removed from the first weight, so even dimensions are accurate to
/// O(h^{n+2}) near the origin instead of O(h^n).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: Dimension,
    r_max: f64,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dim: Dimension, r_max: f64, len: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Grid(format!("r_max must be positive, got {r_max}")));
        }
        if len == 0 {
            return Err(Error::Grid("grid needs at least one node".into()));
        }
        let h = r_max / len as f64;
        let area = dim.sphere_area();
        let p = (dim.n() - 1) as i32;
        let nodes: Vec<f64> = (0..len).map(|j| (j as f64 + 0.5) * h).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|r| area * r.sinh().powi(p) * h).collect();
        weights[0] -= area * h.powi(dim.n() as i32) * hurwitz_zeta_half(dim.n());
        Ok(Self {
            dim,
            r_max,
            h,
            nodes,
            weights,
        })
    }

    /// Grid with spacing as close to `h` as an integer node count allows.
    pub fn with_spacing(dim: Dimension, r_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Grid(format!("spacing must be positive, got {h}")));
        }
        Self::new(dim, r_max, ((r_max / h).round() as usize).max(1))
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn volume_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn sample<F: Fn(f64) -> Complex64>(self: &Arc<Self>, f: F) -> RadialField {
        RadialField {
            grid: Arc::clone(self),
            values: self.nodes.iter().map(|&r| f(r)).collect(),
        }
    }

    /// First node index of the outer 5% shell used for boundary-mass checks.
    pub fn boundary_start(&self) -> usize {
        let cut = 0.95 * self.r_max;
        self.nodes.partition_point(|&r| r < cut)
    }
}

/// Complex samples of a radial function on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "field has {} samples on a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.volume_weights())
            .map(|(u, w)| u.norm_sqr() * w)
            .sum()
    }

    pub fn inner(&self, other: &RadialField) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.volume_weights())
            .map(|((a, b), w)| a.conj() * b * w)
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    /// Fraction of the L² mass carried by the outer 5% of [0, r_max].
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total = self.mass();
        if total == 0.0 {
            return 0.0;
        }
        let start = self.grid.boundary_start();
        let w = self.grid.volume_weights();
        let outer: f64 = (start..self.values.len())
            .map(|j| self.values[j].norm_sqr() * w[j])
            .sum();
        outer / total
    }

    pub fn check_boundary_mass(&self, limit: f64) -> Result<f64> {
        let frac = self.boundary_mass_fraction();
        if frac > limit {
            return Err(Error::Grid(format!(
                "boundary mass fraction {frac:e} exceeds {limit:e}"
            )));
        }
        Ok(frac)
    }
}

/// Second-order discrete Δ = ∂² + (n−1) coth r ∂ on the cell-centered grid.
pub fn radial_laplacian_apply(f: &RadialField) -> Result<RadialField> {
    let grid = f.grid();
    let values = radial_laplacian_values(grid, f.values())?;
    Ok(RadialField {
        grid: Arc::clone(grid),
        values,
    })
}

pub fn radial_laplacian_values(grid: &RadialGrid, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let len = grid.len();
    if len < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {len}")));
    }
    if f.len() != len {
        return Err(Error::Dimension("field and grid lengths differ".into()));
    }
    let h = grid.h();
    let nm1 = (grid.dim().n() - 1) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..len - 1 {
        let left = if j == 0 { f[0] } else { f[j - 1] };
        let right = f[j + 1];
        let r = grid.nodes()[j];
        let d2 = (right - f[j] * 2.0 + left) / (h * h);
        let d1 = (right - left) / (2.0 * h);
        out[j] = d2 + d1 * (nm1 / r.tanh());
    }
    let j = len - 1;
    let (d2, d1) = if len >= 4 {
        (
            (f[j] * 2.0 - f[j - 1] * 5.0 + f[j - 2] * 4.0 - f[j - 3]) / (h * h),
            (f[j] * 3.0 - f[j - 1] * 4.0 + f[j - 2]) / (2.0 * h),
        )
    } else {
        (
            (f[j] - f[j - 1] * 2.0 + f[j - 2]) / (h * h),
            (f[j] * 3.0 - f[j - 1] * 4.0 + f[j - 2]) / (2.0 * h),
        )
    };
    out[j] = d2 + d1 * (nm1 / grid.nodes()[j].tanh());
    Ok(out)
}

/// Second-order ∂_r with even reflection at the origin and a one-sided
/// stencil at r_max.
pub fn radial_derivative_values(grid: &RadialGrid, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let len = grid.len();
    if len < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {len}")));
    }
    if f.len() != len {
        return Err(Error::Dimension("field and grid lengths differ".into()));
    }
    let h = grid.h();
    let mut out: Vec<Complex64> = (0..len - 1)
        .map(|j| {
            let left = if j == 0 { f[0] } else { f[j - 1] };
            (f[j + 1] - left) / (2.0 * h)
        })
        .collect();
    let j = len - 1;
    out.push((f[j] * 3.0 - f[j - 1] * 4.0 + f[j - 2]) / (2.0 * h));
    Ok(out)
}

/// r cosh r − sinh r and cosh r sinh r − r, by series when r is small.
fn bilaplacian_numerators(r: f64) -> (f64, f64) {
    if r < 1.0 {
        let r2 = r * r;
        let mut a = 0.0;
        let mut b = 0.0;
        // term_k = r^{2k+1}/(2k+1)!
        let mut term = r;
        let mut two_pow = 2.0;
        for k in 1..40 {
            let kf = k as f64;
            term *= r2 / ((2.0 * kf) * (2.0 * kf + 1.0));
            two_pow *= 4.0;
            a += term * 2.0 * kf;
            b += term * two_pow / 2.0;
            if term * two_pow < 1e-18 * r2 * r {
                break;
            }
        }
        (a, b)
    } else {
        (r * r.cosh() - r.sinh(), r.cosh() * r.sinh() - r)
    }
}

/// Δ² applied to r² = d(0,·)² on H^n.
pub fn bilaplacian_r2(dim: Dimension, r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
    }
    let n1 = (dim.n() - 1) as f64;
    if r == 0.0 {
        return Ok(4.0 * dim.n() as f64 * n1 / 3.0);
    }
    if r < 1.0 {
        let (a, b) = bilaplacian_numerators(r);
        let s3 = r.sinh().powi(3);
        return Ok(4.0 * n1 * a / s3 + 2.0 * n1 * n1 * r.cosh() * b / s3);
    }
    let c = 1.0 / r.tanh();
    let s = 1.0 / r.sinh();
    let s2 = s * s;
    Ok(4.0 * n1 * s2 * (r * c - 1.0) + 2.0 * n1 * n1 * c * (c - r * s2))
}

/// Infimum and supremum of Δ²r² from a dense scan of (0, 40] together with
/// both analytic limits.
pub fn bilaplacian_r2_bounds(dim: Dimension) -> (f64, f64) {
    let n = dim.n() as f64;
    let lim0 = 4.0 * n * (n - 1.0) / 3.0;
    let lim_inf = 2.0 * (n - 1.0) * (n - 1.0);
    let mut lo = lim0.min(lim_inf);
    let mut hi = lim0.max(lim_inf);
    let samples = 40_000;
    for i in 1..=samples {
        let r = 40.0 * i as f64 / samples as f64;
        let v = bilaplacian_r2(dim, r).expect("r > 0");
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
