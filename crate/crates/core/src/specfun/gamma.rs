//! Complex Gamma function (Lanczos, g = 7) and the Gamma-ratio that enters
//! the Plancherel density.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::hypgeo::Dimension;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(z) on some branch; only `exp` of the result and its real part are
/// branch independent.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // reflection: Γ(z)Γ(1−z) = π / sin(πz)
        let s = (z * PI).sin();
        return Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma(Complex64::new(1.0, 0.0) - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

pub fn gamma(z: Complex64) -> Complex64 {
    ln_gamma(z).exp()
}

/// |Γ(iλ + ρ)|² / |Γ(iλ)|² with ρ = (n−1)/2, by the closed product forms.
pub fn gamma_ratio_sq(dim: Dimension, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    let n = dim.n();
    if dim.is_odd() {
        let m = (n - 1) / 2;
        (0..m).map(|j| l2 + (j * j) as f64).product()
    } else {
        let m = n / 2;
        let base = lambda * (PI * lambda).tanh();
        (0..m - 1)
            .map(|j| l2 + (j as f64 + 0.5).powi(2))
            .fold(base, |acc, f| acc * f)
    }
}

/// The same ratio through complex log-Gamma, used to cross-check the closed
/// forms away from λ = 0.
pub fn gamma_ratio_sq_lgamma(dim: Dimension, lambda: f64) -> f64 {
    let a = ln_gamma(Complex64::new(dim.rho(), lambda));
    let b = ln_gamma(Complex64::new(0.0, lambda));
    (2.0 * (a.re - b.re)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn real_values() {
        assert_relative_eq!(gamma(Complex64::new(5.0, 0.0)).re, 24.0, max_relative = 1e-13);
        assert_relative_eq!(
            gamma(Complex64::new(0.5, 0.0)).re,
            PI.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            gamma(Complex64::new(-0.5, 0.0)).re,
            -2.0 * PI.sqrt(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn imaginary_axis_modulus() {
        // |Γ(iy)|² = π / (y sinh πy)
        for &y in &[0.1, 1.0, 3.7, 12.0] {
            let g = gamma(Complex64::new(0.0, y)).norm_sqr();
            assert_relative_eq!(g, PI / (y * (PI * y).sinh()), max_relative = 1e-12);
        }
    }

    #[test]
    fn recurrence() {
        let z = Complex64::new(0.3, 2.2);
        let lhs = gamma(z + 1.0);
        let rhs = z * gamma(z);
        assert!((lhs - rhs).norm() < 1e-13 * lhs.norm());
    }

    #[test]
    fn closed_forms_match_lgamma() {
        for n in 2..=9 {
            let d = Dimension::new(n).unwrap();
            for &l in &[0.05, 0.5, 1.0, 2.5, 8.0, 20.0] {
                assert_relative_eq!(
                    gamma_ratio_sq(d, l),
                    gamma_ratio_sq_lgamma(d, l),
                    max_relative = 1e-11
                );
            }
        }
    }
}
