//! Radial eigenfunctions φ_λ of the Laplace–Beltrami operator on H^n,
//! normalized by φ_λ(0) = 1, so that −Δφ_λ = (λ² + ρ²)φ_λ.
//!
//! Odd n = 2m+1:
//!   φ_λ(r) = c_n |Γ(iλ)|²/|Γ(iλ+ρ)|² (∂_r / sinh r)^m cos λr.
//! Even n = 2m:
//!   φ_λ(r) = c_n |Γ(iλ)|²/|Γ(iλ+ρ)|² ∫_r^∞ sinh s (cosh s − cosh r)^{-1/2}
//!            (∂_s / sinh s)^m cos λs ds.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use super::hypexpr::{CompiledExpr, HypExpr};
use crate::error::{Error, Result};
use crate::hypgeo::{sphere_area, Dimension};
use crate::quad::{integrate, QuadOptions};

const MAX_M: usize = 8;

fn derivative_of_cos(m: usize) -> Arc<CompiledExpr> {
    static CACHE: OnceLock<Vec<Arc<CompiledExpr>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        let mut out = Vec::with_capacity(MAX_M);
        let mut e = HypExpr::cos_carrier();
        for _ in 0..MAX_M {
            e = e.d_over_sinh();
            out.push(Arc::new(e.compile(2)));
        }
        out
    });
    Arc::clone(&cache[m - 1])
}

/// (∂_s/sinh s)^m cos(λ s) divided by λ², finite at λ = 0.
pub fn reduced_cos_derivative(m: usize, s: f64, lambda: f64) -> Result<f64> {
    if m == 0 || m > MAX_M {
        return Err(Error::Unsupported(format!("derivative order {m}")));
    }
    Ok(derivative_of_cos(m).eval(s, lambda))
}

fn double_factorial(k: i64) -> f64 {
    let mut acc = 1.0;
    let mut i = k;
    while i > 1 {
        acc *= i as f64;
        i -= 2;
    }
    acc
}

/// Constant c_n that makes φ_λ(0) = 1.
pub fn spherical_normalization(dim: Dimension) -> f64 {
    let n = dim.n();
    if dim.is_odd() {
        let m = (n - 1) / 2;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sign * double_factorial(2 * m as i64 - 1)
    } else {
        let m = n / 2;
        let fact: f64 = (1..m).map(|i| i as f64).product();
        (-2.0f64).powi(m as i32) * fact / (2f64.sqrt() * PI)
    }
}

/// λ² |Γ(iλ)|²/|Γ(iλ+ρ)|², finite at λ = 0.
fn reduced_gamma_ratio(dim: Dimension, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    if dim.is_odd() {
        let m = (dim.n() - 1) / 2;
        1.0 / (1..m).map(|j| l2 + (j * j) as f64).product::<f64>()
    } else {
        let m = dim.n() / 2;
        let x = PI * lambda;
        // λ / tanh(πλ)
        let lead = if x.abs() < 1e-6 {
            (1.0 + x * x / 3.0) / PI
        } else {
            lambda / x.tanh()
        };
        lead / (0..m - 1).map(|j| l2 + (j as f64 + 0.5).powi(2)).product::<f64>()
    }
}

/// sinh(x)/x.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// ∫_ρ^∞ sinh s (cosh s − cosh ρ)^{-1/2} g(s) ds after s = ρ + u², which
/// removes the endpoint singularity. `decay` is the exponential rate of the
/// integrand in s, used to truncate.
pub(crate) fn abel_type_integral<G>(rho: f64, decay: f64, oscillation: f64, g: G) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let u_max = (40.0 / decay.max(0.05)).sqrt();
    let integrand = |u: f64| {
        let u2 = u * u;
        let s = rho + u2;
        let denom = ((rho + 0.5 * u2).sinh() * sinhc(0.5 * u2)).sqrt();
        Complex64::new(2.0 * s.sinh() * g(s) / denom, 0.0)
    };
    let panels = 16 + (oscillation * u_max * u_max / PI) as usize;
    let opts = QuadOptions::with_tol(1e-14, 1e-11).initial_panels(panels);
    integrate(integrand, 0.0, u_max, &opts).map(|r| r.value.re)
}

pub fn spherical_function(dim: Dimension, lambda: f64, rho: f64) -> Result<Complex64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "radius must be positive, got {rho}; use spherical_function_origin"
        )));
    }
    let c = spherical_normalization(dim) * reduced_gamma_ratio(dim, lambda);
    let value = if dim.is_odd() {
        let m = (dim.n() - 1) / 2;
        c * reduced_cos_derivative(m, rho, lambda)?
    } else {
        let m = dim.n() / 2;
        let d = derivative_of_cos(m);
        let integral = abel_type_integral(rho, m as f64 - 0.5, lambda, |s| d.eval(s, lambda))?;
        c * integral
    };
    Ok(Complex64::new(value, 0.0))
}

/// Value at the origin, where the radial variable degenerates.
pub fn spherical_function_origin(_dim: Dimension, _lambda: f64) -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Direct quadrature of ∫_{S^{n−1}} (cosh ρ − sinh ρ ⟨γ,θ⟩)^{iλ−ρ_n} dθ,
/// with ρ_n = (n−1)/2, reduced to the polar angle.
pub fn spherical_function_integral(dim: Dimension, lambda: f64, rho: f64) -> Result<Complex64> {
    if rho < 0.0 {
        return Err(Error::Domain(format!("radius must be nonnegative, got {rho}")));
    }
    let area = sphere_area(dim.n() - 2);
    if rho == 0.0 {
        return Ok(Complex64::new(dim.sphere_area(), 0.0));
    }
    let exponent = Complex64::new(-dim.rho(), lambda);
    let p = (dim.n() - 2) as i32;
    let (em, sh) = ((-rho).exp(), rho.sinh());
    let f = |alpha: f64| {
        let half = (0.5 * alpha).sin();
        let base = em + 2.0 * sh * half * half;
        (exponent * base.ln()).exp() * alpha.sin().powi(p)
    };
    let panels = 16 + (lambda.abs() * rho) as usize;
    // Near α = 0 the integrand peaks at about e^{ρ ρ_n} and cancels down to a
    // much smaller value, so the absolute floor follows ∫|f|.
    let magnitude = integrate(
        |a: f64| Complex64::new(f(a).norm(), 0.0),
        0.0,
        PI,
        &QuadOptions::with_tol(0.0, 1e-6).initial_panels(panels),
    )?
    .value
    .re;
    let opts = QuadOptions::with_tol((1e-13 * magnitude).max(1e-15), 1e-12).initial_panels(panels);
    integrate(f, 0.0, PI, &opts).map(|r| r.value * area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn n3_closed_form() {
        for &(l, r) in &[(0.7f64, 0.3f64), (2.0, 1.5), (9.0, 4.0)] {
            let v = spherical_function(dim(3), l, r).unwrap().re;
            assert_relative_eq!(v, (l * r).sin() / (l * r.sinh()), max_relative = 1e-12);
        }
        let v0 = spherical_function(dim(3), 0.0, 1.2).unwrap().re;
        assert_relative_eq!(v0, 1.2 / 1.2f64.sinh(), max_relative = 1e-12);
    }

    #[test]
    fn normalized_at_origin() {
        for n in 2..=9 {
            for &l in &[0.0, 0.5, 3.0] {
                let v = spherical_function(dim(n), l, 1e-3).unwrap().re;
                assert!((v - 1.0).abs() < 1e-4, "n={n} λ={l}: {v}");
            }
        }
    }

    #[test]
    fn integral_at_origin_is_sphere_area() {
        let v = spherical_function_integral(dim(4), 2.0, 0.0).unwrap();
        assert_relative_eq!(v.re, dim(4).sphere_area());
    }

    #[test]
    fn ratio_to_integral_is_constant() {
        for n in 2..=7 {
            let d = dim(n);
            let expect = 1.0 / d.sphere_area();
            for &l in &[0.0, 0.3, 1.0, 4.0] {
                for &r in &[0.2, 1.0, 3.0, 6.0] {
                    let a = spherical_function(d, l, r).unwrap();
                    let b = spherical_function_integral(d, l, r).unwrap();
                    assert!(b.im.abs() < 1e-9 * b.norm().max(1e-300));
                    let ratio = a.re / b.re;
                    assert!(
                        (ratio - expect).abs() < 1e-8 * expect,
                        "n={n} λ={l} r={r}: ratio {ratio} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(spherical_function(dim(3), 1.0, 0.0), Err(Error::Domain(_))));
        assert!(spherical_function_integral(dim(3), 1.0, -1.0).is_err());
    }
}
