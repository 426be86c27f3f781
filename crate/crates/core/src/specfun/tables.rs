//! Fast evaluation of φ_λ on whole radial grids.
//!
//! Odd n uses the closed derivative form directly. For even n the integral
//! representation is too slow to tabulate, so each row is assembled from
//! three pieces:
//!
//! * the hypergeometric series 2F1((ρ+iλ)/2, (ρ−iλ)/2; n/2; −sinh² r) near
//!   the origin,
//! * the Liouville form ψ = sinh^ρ r · φ, ψ'' + (λ² − ρ(ρ−1)/sinh² r) ψ = 0,
//!   integrated by variation of parameters in the transition zone,
//! * the Harish-Chandra expansion φ = 2 Re(c(λ) Φ_λ) once e^{−2r} is small.

use num_complex::Complex64;
use rayon::prelude::*;

use super::gamma::ln_gamma;
use super::spherical::{reduced_cos_derivative, spherical_normalization};
use crate::error::{Error, Result};
use crate::hypgeo::Dimension;

const HC_START: f64 = 0.7;
const SERIES_Z_MAX: f64 = 0.5;
const SERIES_LS_MAX: f64 = 4.0;

/// Harish-Chandra c-function, normalized by c(−iρ) = 1.
pub fn harish_chandra_c(dim: Dimension, lambda: f64) -> Complex64 {
    let rho = dim.rho();
    let il = Complex64::new(0.0, lambda);
    let ln = Complex64::new(rho, -lambda) * std::f64::consts::LN_2
        + ln_gamma(Complex64::new(dim.n() as f64 / 2.0, 0.0))
        + ln_gamma(il)
        - ln_gamma((il + rho) * 0.5)
        - ln_gamma((il + rho + 1.0) * 0.5);
    ln.exp()
}

fn odd_row(dim: Dimension, lambda: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    let m = (dim.n() - 1) / 2;
    let l2 = lambda * lambda;
    let gamma = 1.0 / (1..m).map(|j| l2 + (j * j) as f64).product::<f64>();
    let c = spherical_normalization(dim) * gamma;
    nodes
        .iter()
        .map(|&r| reduced_cos_derivative(m, r, lambda).map(|v| c * v))
        .collect()
}

/// 2F1 series and its r-derivative.
fn series_value(dim: Dimension, lambda: f64, r: f64) -> (f64, f64) {
    let half_rho = dim.rho() / 2.0;
    let c = dim.n() as f64 / 2.0;
    let sh = r.sinh();
    let z = -sh * sh;
    let mut term = 1.0;
    let mut f = 1.0;
    let mut df_dz = 0.0;
    for k in 0..400 {
        let kf = k as f64;
        let ratio = ((half_rho + kf).powi(2) + lambda * lambda / 4.0) / ((kf + 1.0) * (c + kf));
        // d/dz of term_{k+1} z^{k+1} is (k+1) term_{k+1} z^k
        let dterm = term * ratio * (kf + 1.0);
        term *= ratio * z;
        f += term;
        df_dz += dterm;
        if term.abs() < 1e-17 * f.abs() && k > 2 {
            break;
        }
    }
    (f, df_dz * -2.0 * sh * r.cosh())
}

fn hc_value(dim: Dimension, lambda: f64, c: Complex64, r: f64) -> f64 {
    let rho = dim.rho();
    let z = (-2.0 * r).exp();
    let mut g = Complex64::new(1.0, 0.0);
    let mut sum = g;
    let mut zk = 1.0;
    for k in 0..2000 {
        let kf = k as f64;
        g *= (rho + kf) * Complex64::new(rho + kf, -lambda)
            / ((kf + 1.0) * Complex64::new(kf + 1.0, -lambda));
        zk *= z;
        let t = g * zk;
        sum += t;
        if t.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    let phase = Complex64::new(-rho * r, lambda * r).exp();
    2.0 * (c * phase * sum).re
}

fn even_row(dim: Dimension, lambda: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if lambda.abs() < 1e-6 {
        return Err(Error::Domain(format!(
            "fast even-dimensional rows need |λ| ≥ 1e-6, got {lambda}"
        )));
    }
    let lambda = lambda.abs();
    let rho = dim.rho();
    let q_coef = rho * (rho - 1.0);
    let sinh_cap = SERIES_Z_MAX.sqrt().min(SERIES_LS_MAX / lambda);
    let r_series = sinh_cap.asinh().min(HC_START);
    let c = harish_chandra_c(dim, lambda);

    let mut out = Vec::with_capacity(nodes.len());
    // variation-of-parameters state ψ = A cos λr + B sin λr, started lazily
    let mut state: Option<(f64, f64, f64)> = None;
    let rhs = |r: f64, a: f64, b: f64| {
        let (sn, cs) = (lambda * r).sin_cos();
        let q = q_coef / r.sinh().powi(2);
        let psi = a * cs + b * sn;
        (-q * psi * sn / lambda, q * psi * cs / lambda)
    };
    for &r in nodes {
        if r <= r_series {
            out.push(series_value(dim, lambda, r).0);
            continue;
        }
        if r >= HC_START {
            out.push(hc_value(dim, lambda, c, r));
            continue;
        }
        let (mut r0, mut a, mut b) = state.unwrap_or_else(|| {
            let (phi, dphi) = series_value(dim, lambda, r_series);
            let sh = r_series.sinh();
            let psi = sh.powf(rho) * phi;
            let dpsi = sh.powf(rho) * (dphi + rho * r_series.cosh() / sh * phi);
            let (sn, cs) = (lambda * r_series).sin_cos();
            (
                r_series,
                psi * cs - dpsi * sn / lambda,
                psi * sn + dpsi * cs / lambda,
            )
        });
        while r0 < r {
            let h = (0.1 / lambda).min(0.05 * r0).min(0.02).min(r - r0);
            let (k1a, k1b) = rhs(r0, a, b);
            let (k2a, k2b) = rhs(r0 + 0.5 * h, a + 0.5 * h * k1a, b + 0.5 * h * k1b);
            let (k3a, k3b) = rhs(r0 + 0.5 * h, a + 0.5 * h * k2a, b + 0.5 * h * k2b);
            let (k4a, k4b) = rhs(r0 + h, a + h * k3a, b + h * k3b);
            a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            r0 += h;
        }
        r0 = r;
        state = Some((r0, a, b));
        let (sn, cs) = (lambda * r).sin_cos();
        out.push(r.sinh().powf(-rho) * (a * cs + b * sn));
    }
    Ok(out)
}

/// φ_λ at every node; nodes must be positive and ascending.
pub fn spherical_row(dim: Dimension, lambda: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.windows(2).any(|w| w[1] <= w[0]) || nodes.first().is_some_and(|&r| r <= 0.0) {
        return Err(Error::Grid("nodes must be positive and increasing".into()));
    }
    if dim.is_odd() {
        odd_row(dim, lambda, nodes)
    } else {
        even_row(dim, lambda, nodes)
    }
}

/// Row-major table φ_{λ_i}(r_j), computed in parallel over λ.
pub fn spherical_table(dim: Dimension, lambdas: &[f64], nodes: &[f64]) -> Result<Vec<f64>> {
    let rows: Result<Vec<Vec<f64>>> = lambdas
        .par_iter()
        .map(|&l| spherical_row(dim, l, nodes))
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}
