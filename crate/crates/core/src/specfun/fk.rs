//! Coefficient functions F_k^m in
//!
//! ```text
//! (∂_s / sinh s)^m e^{i s²/4t} = Σ_{k=1}^m t^{-k} e^{i s²/4t} F_k^m(s).
//! ```
//!
//! Writing F_k^m = (i/2)^k R_k^m with R real, one more application of
//! ∂_s/sinh s gives R_k^{m+1} = (s/sinh s) R_{k−1}^m + D R_k^m, seeded by
//! R_0^0 = 1. The R_k^m are built symbolically and never need a fitted
//! constant.

use num_complex::Complex64;

use super::hypexpr::{CompiledExpr, HypExpr};
use crate::error::{Error, Result};

pub const FK_MAX_M: usize = 6;

#[derive(Debug, Clone)]
pub struct FkTable {
    m: usize,
    exprs: Vec<HypExpr>,
    compiled: Vec<CompiledExpr>,
}

/// (i/2)^k.
pub fn fk_prefactor(k: usize) -> Complex64 {
    Complex64::new(0.0, 0.5).powu(k as u32)
}

pub fn fk_table(m: usize) -> Result<FkTable> {
    if m == 0 || m > FK_MAX_M {
        return Err(Error::Unsupported(format!(
            "F_k^m tables exist for 1 ≤ m ≤ {FK_MAX_M}, got m = {m}"
        )));
    }
    // rows[k] holds R_k for the current level
    let mut rows = vec![HypExpr::constant(1.0)];
    let sos = HypExpr::s_over_sinh();
    for level in 1..=m {
        let mut next = Vec::with_capacity(level + 1);
        for k in 0..=level {
            let mut e = HypExpr::zero(false);
            if k >= 1 {
                e = e.add(&sos.mul(&rows[k - 1]));
            }
            if k < rows.len() {
                e = e.add(&rows[k].d_over_sinh());
            }
            next.push(e);
        }
        rows = next;
    }
    let exprs: Vec<HypExpr> = rows.into_iter().skip(1).collect();
    let compiled = exprs.iter().map(|e| e.compile(0)).collect();
    Ok(FkTable { m, exprs, compiled })
}

impl FkTable {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Symbolic R_k^m for 1 ≤ k ≤ m.
    pub fn expr(&self, k: usize) -> &HypExpr {
        &self.exprs[k - 1]
    }

    /// Real part R_k^m(s) of F_k^m = (i/2)^k R_k^m.
    pub fn eval_real(&self, k: usize, s: f64) -> f64 {
        self.compiled[k - 1].eval(s, 0.0)
    }

    pub fn eval(&self, k: usize, s: f64) -> Complex64 {
        fk_prefactor(k) * self.eval_real(k, s)
    }

    /// Σ_k t^{-k} e^{i s²/4t} F_k^m(s).
    pub fn expansion(&self, s: f64, t: f64) -> Complex64 {
        let phase = Complex64::new(0.0, s * s / (4.0 * t)).exp();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut tk = 1.0;
        for k in 1..=self.m {
            tk /= t;
            acc += self.eval(k, s) * tk;
        }
        acc * phase
    }
}

/// (∂_s/sinh s)^m e^{i s²/4t} at s by a Cauchy integral in x = cosh s,
/// where the operator becomes d/dx. Independent of the symbolic recursion.
pub fn derivative_oracle(m: usize, s: f64, t: f64, points: usize) -> Complex64 {
    let x0 = s.cosh();
    let radius = (0.5 * (x0 + 1.0)).min(1.0);
    let f = |z: Complex64| {
        let a = z.acosh();
        (Complex64::new(0.0, 1.0) * a * a / (4.0 * t)).exp()
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let w = Complex64::from_polar(1.0, theta);
        acc += f(x0 + w * radius) * Complex64::from_polar(1.0, -(m as f64) * theta);
    }
    let fact: f64 = (1..=m).map(|i| i as f64).product();
    acc * fact / (points as f64 * radius.powi(m as i32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkBoundRow {
    pub k: usize,
    pub alpha: usize,
    /// Smallest c with |∂^α((sinh s/s) R_k^m)| ≤ c s^α (s/sinh s)^{m−1} on the scan.
    pub constant: f64,
    /// sup |∂²((sinh s/s) R_k^m)| on the scan, reported for m ≥ 2.
    pub second_derivative_sup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkBoundReport {
    pub m: usize,
    pub alpha: usize,
    pub s_max: f64,
    pub samples: usize,
    pub rows: Vec<FkBoundRow>,
}

impl FkBoundReport {
    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            r.constant.is_finite() && r.second_derivative_sup.is_none_or(|v| v.is_finite())
        })
    }
}

/// Scans s ∈ (0, 30] for the constants in the bounds on (sinh s/s) F_k^m.
/// Constants refer to the real normalization R_k^m.
pub fn fk_bound_check(m: usize, alpha: usize) -> Result<FkBoundReport> {
    if alpha > 1 {
        return Err(Error::Unsupported(format!("α must be 0 or 1, got {alpha}")));
    }
    let table = fk_table(m)?;
    let s_max = 30.0;
    let samples = 6000;
    let sinh_over_s = HypExpr::monomial(-1, 1, 0, 1.0);
    let mut rows = Vec::with_capacity(m);
    for k in 1..=m {
        let g = sinh_over_s.mul(table.expr(k));
        let g1 = g.ds();
        let target = if alpha == 0 { g.compile(0) } else { g1.compile(0) };
        let second = (m >= 2).then(|| g1.ds().compile(0));
        let mut constant: f64 = 0.0;
        let mut sup2: f64 = 0.0;
        for i in 1..=samples {
            let s = s_max * i as f64 / samples as f64;
            let bound = s.powi(alpha as i32) * (s / s.sinh()).powi(m as i32 - 1);
            let v = target.eval(s, 0.0).abs();
            if bound > 0.0 {
                constant = constant.max(v / bound);
            }
            if let Some(c2) = &second {
                sup2 = sup2.max(c2.eval(s, 0.0).abs());
            }
        }
        rows.push(FkBoundRow {
            k,
            alpha,
            constant,
            second_derivative_sup: second.map(|_| sup2),
        });
    }
    Ok(FkBoundReport {
        m,
        alpha,
        s_max,
        samples,
        rows,
    })
}
