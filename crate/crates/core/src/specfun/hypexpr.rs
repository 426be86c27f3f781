//! Exact symbolic sums of monomials
//!
//! ```text
//! c · s^a · sinh^p(s) · cosh^q(s) · λ^j cos^{(j)}(λ s)
//! ```
//!
//! closed under the operator D = (1/sinh s) d/ds. The cosine carrier is
//! optional; expressions without it represent plain functions of `s`.
//!
//! Near s = 0 individual monomials blow up while their sum stays regular, so
//! evaluation there goes through a Laurent expansion in `s` whose negative
//! powers cancel exactly.

use std::collections::BTreeMap;

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub a: i32,
    pub p: i32,
    pub q: u32,
    pub j: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypExpr {
    carrier: bool,
    terms: BTreeMap<Monomial, f64>,
}

impl HypExpr {
    pub fn zero(carrier: bool) -> Self {
        Self {
            carrier,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut e = Self::zero(false);
        e.insert(Monomial { a: 0, p: 0, q: 0, j: 0 }, c);
        e
    }

    /// cos(λ s).
    pub fn cos_carrier() -> Self {
        let mut e = Self::zero(true);
        e.insert(Monomial { a: 0, p: 0, q: 0, j: 0 }, 1.0);
        e
    }

    /// s / sinh s.
    pub fn s_over_sinh() -> Self {
        let mut e = Self::zero(false);
        e.insert(Monomial { a: 1, p: -1, q: 0, j: 0 }, 1.0);
        e
    }

    /// c · s^a · sinh^p · cosh^q without carrier.
    pub fn monomial(a: i32, p: i32, q: u32, c: f64) -> Self {
        let mut e = Self::zero(false);
        e.insert(Monomial { a, p, q, j: 0 }, c);
        e
    }

    pub fn has_carrier(&self) -> bool {
        self.carrier
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn insert(&mut self, mono: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        if mono.q >= 2 {
            // cosh² = 1 + sinh²
            let lower = Monomial { q: mono.q - 2, ..mono };
            self.insert(lower, c);
            self.insert(Monomial { p: mono.p + 2, ..lower }, c);
            return;
        }
        let entry = self.terms.entry(mono).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&mono);
        }
    }

    pub fn add(&self, other: &HypExpr) -> HypExpr {
        let mut out = self.clone();
        out.carrier |= other.carrier;
        for (m, c) in &other.terms {
            out.insert(*m, *c);
        }
        out
    }

    pub fn scale(&self, f: f64) -> HypExpr {
        let mut out = HypExpr::zero(self.carrier);
        for (m, c) in &self.terms {
            out.insert(*m, c * f);
        }
        out
    }

    /// Product; at most one factor may carry the cosine.
    pub fn mul(&self, other: &HypExpr) -> HypExpr {
        assert!(
            !(self.carrier && other.carrier),
            "cosine carriers cannot be multiplied"
        );
        let mut out = HypExpr::zero(self.carrier || other.carrier);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.insert(
                    Monomial {
                        a: m1.a + m2.a,
                        p: m1.p + m2.p,
                        q: m1.q + m2.q,
                        j: m1.j + m2.j,
                    },
                    c1 * c2,
                );
            }
        }
        out
    }

    /// d/ds.
    pub fn ds(&self) -> HypExpr {
        let mut out = HypExpr::zero(self.carrier);
        for (m, &c) in &self.terms {
            if m.a != 0 {
                out.insert(Monomial { a: m.a - 1, ..*m }, c * m.a as f64);
            }
            if m.p != 0 {
                out.insert(Monomial { p: m.p - 1, q: m.q + 1, ..*m }, c * m.p as f64);
            }
            if m.q > 0 {
                out.insert(Monomial { p: m.p + 1, q: m.q - 1, ..*m }, c * m.q as f64);
            }
            if self.carrier {
                out.insert(Monomial { j: m.j + 1, ..*m }, c);
            }
        }
        out
    }

    /// D = (1/sinh s) d/ds.
    pub fn d_over_sinh(&self) -> HypExpr {
        let d = self.ds();
        let mut out = HypExpr::zero(self.carrier);
        for (m, &c) in &d.terms {
            out.insert(Monomial { p: m.p - 1, ..*m }, c);
        }
        out
    }

    pub fn compile(&self, lambda_shift: u32) -> CompiledExpr {
        CompiledExpr::new(self, lambda_shift)
    }
}

const SERIES_LEN: usize = 48;
const SERIES_S_MAX: f64 = 0.5;
const SERIES_LS_MAX: f64 = 6.0;

/// Laurent coefficients (exponent offset `lo`) of the λ-independent factor
/// belonging to one carrier index.
#[derive(Debug, Clone)]
struct Laurent {
    lo: i32,
    coef: Vec<f64>,
}

/// Evaluation form of a [`HypExpr`], optionally divided by λ^shift. The
/// shift lets callers cancel explicit λ factors analytically, which keeps
/// the λ → 0 limit finite.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    carrier: bool,
    shift: u32,
    terms: Vec<(Monomial, f64)>,
    series: Vec<(u32, Laurent)>,
}

fn series_mul(x: &[f64], y: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &a) in x.iter().enumerate().take(len) {
        if a == 0.0 {
            continue;
        }
        for (k, &b) in y.iter().enumerate().take(len - i) {
            out[i + k] += a * b;
        }
    }
    out
}

fn series_pow(x: &[f64], p: i32, len: usize) -> Vec<f64> {
    let base = if p < 0 { series_inv(x, len) } else { x.to_vec() };
    let mut out = vec![0.0; len];
    out[0] = 1.0;
    for _ in 0..p.unsigned_abs() {
        out = series_mul(&out, &base, len);
    }
    out
}

fn series_inv(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    out[0] = 1.0 / x[0];
    for k in 1..len {
        let mut acc = 0.0;
        for i in 1..=k.min(x.len() - 1) {
            acc += x[i] * out[k - i];
        }
        out[k] = -acc / x[0];
    }
    out
}

fn sinh_over_s_series(len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let mut f = 1.0;
    for k in (0..len).step_by(2) {
        v[k] = 1.0 / f;
        f *= (k + 2) as f64 * (k + 3) as f64;
    }
    v
}

fn cosh_series(len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let mut f = 1.0;
    for k in (0..len).step_by(2) {
        v[k] = 1.0 / f;
        f *= (k + 1) as f64 * (k + 2) as f64;
    }
    v
}

/// cos^{(j)}(x) = cos(x + jπ/2).
fn cos_derivative(j: u32, x: f64) -> f64 {
    match j % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

impl CompiledExpr {
    fn new(e: &HypExpr, shift: u32) -> Self {
        assert!(
            shift == 0 || e.carrier,
            "λ shift only applies to carrier expressions"
        );
        let terms: Vec<(Monomial, f64)> = e.terms.iter().map(|(m, c)| (*m, *c)).collect();
        let lo = terms
            .iter()
            .map(|(m, _)| m.a + m.p)
            .min()
            .unwrap_or(0)
            .min(0);
        let len = SERIES_LEN + (-lo) as usize;
        let sh = sinh_over_s_series(len);
        let ch = cosh_series(len);
        let mut by_j: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut pow_cache: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for (m, c) in &terms {
            let sp = pow_cache
                .entry(m.p)
                .or_insert_with(|| series_pow(&sh, m.p, len))
                .clone();
            let mut ser = if m.q == 1 { series_mul(&sp, &ch, len) } else { sp };
            let offset = (m.a + m.p - lo) as usize;
            let acc = by_j.entry(m.j).or_insert_with(|| vec![0.0; len]);
            for k in 0..len - offset {
                acc[k + offset] += c * ser[k];
            }
            ser.clear();
        }
        let series = by_j
            .into_iter()
            .map(|(j, coef)| (j, Laurent { lo, coef }))
            .collect();
        Self {
            carrier: e.carrier,
            shift,
            terms,
            series,
        }
    }

    /// λ^{j−shift} cos^{(j)}(λ s), stable as λ → 0 for the shifts used here.
    fn carrier_value(&self, j: u32, s: f64, lambda: f64) -> f64 {
        if !self.carrier {
            return 1.0;
        }
        let x = lambda * s;
        let e = j as i32 - self.shift as i32;
        if e >= 0 {
            return lambda.powi(e) * cos_derivative(j, x);
        }
        // only the odd-sine case j = shift − 1 is needed: λ^{-1}(±sin λs)
        assert!(e == -1 && j % 2 == 1, "unsupported carrier/shift combination");
        let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
        let sign = if j % 4 == 1 { -1.0 } else { 1.0 };
        sign * s * sinc
    }

    pub fn eval_direct(&self, s: f64, lambda: f64) -> f64 {
        let (sh, ch) = (s.sinh(), s.cosh());
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = c * sh.powi(m.p) * self.carrier_value(m.j, s, lambda);
                if m.a != 0 {
                    v *= s.powi(m.a);
                }
                if m.q == 1 {
                    v *= ch;
                }
                v
            })
            .sum()
    }

    /// Series coefficients of λ^{j−shift} cos^{(j)}(λs) in powers of s.
    fn carrier_series(&self, j: u32, lambda: f64, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        if !self.carrier {
            v[0] = 1.0;
            return v;
        }
        // λ^{l+j−shift} (−1)^{(l+j)/2} / l!  for l + j even
        let mut inv_fact = 1.0;
        for (l, slot) in v.iter_mut().enumerate() {
            if l > 0 {
                inv_fact /= l as f64;
            }
            let i = l + j as usize;
            if i % 2 == 1 {
                continue;
            }
            let e = i as i32 - self.shift as i32;
            if e < 0 {
                continue;
            }
            let sign = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
            *slot = sign * lambda.powi(e) * inv_fact;
        }
        v
    }

    pub fn eval_series(&self, s: f64, lambda: f64) -> f64 {
        let mut total = 0.0;
        for (j, lau) in &self.series {
            let len = lau.coef.len();
            let cs = self.carrier_series(*j, lambda, len);
            // coefficient of s^e, e = lo + idx, kept only for e ≥ 0
            let start = (-lau.lo) as usize;
            let mut pw = 1.0;
            for idx in start..len {
                let mut c = 0.0;
                for (u, &pu) in lau.coef.iter().enumerate().take(idx + 1) {
                    c += pu * cs[idx - u];
                }
                total += c * pw;
                pw *= s;
            }
        }
        total
    }

    pub fn eval(&self, s: f64, lambda: f64) -> f64 {
        if s.abs() < SERIES_S_MAX && (lambda * s).abs() < SERIES_LS_MAX {
            self.eval_series(s, lambda)
        } else {
            self.eval_direct(s, lambda)
        }
    }

    /// Evaluation at complex s for expressions without the cosine carrier.
    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        assert!(!self.carrier, "complex evaluation needs a carrier-free expression");
        if s.norm() < SERIES_S_MAX {
            let mut total = Complex64::new(0.0, 0.0);
            for (_, lau) in &self.series {
                let start = (-lau.lo) as usize;
                let mut pw = Complex64::new(1.0, 0.0);
                for &c in &lau.coef[start..] {
                    total += pw * c;
                    pw *= s;
                }
            }
            return total;
        }
        let (sh, ch) = (s.sinh(), s.cosh());
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = sh.powi(m.p) * *c;
                if m.a != 0 {
                    v *= s.powi(m.a);
                }
                if m.q == 1 {
                    v *= ch;
                }
                v
            })
            .sum()
    }

    /// Value at s = 0.
    pub fn limit_at_zero(&self, lambda: f64) -> f64 {
        self.eval_series(0.0, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cosh_squared_reduces() {
        let e = HypExpr::constant(1.0).ds();
        assert!(e.is_empty());
        // d/ds (s/sinh s) = 1/sinh − s cosh / sinh²
        let d = HypExpr::s_over_sinh().ds().compile(0);
        let s: f64 = 1.3;
        let exact = 1.0 / s.sinh() - s * s.cosh() / s.sinh().powi(2);
        assert_relative_eq!(d.eval(s, 0.0), exact, max_relative = 1e-14);
    }

    #[test]
    fn spherical_n3_form() {
        // D cos(λs) = −λ sin(λs)/sinh s
        let e = HypExpr::cos_carrier().d_over_sinh();
        let c = e.compile(0);
        let (s, l) = (0.7, 2.3);
        assert_relative_eq!(
            c.eval(s, l),
            -l * (l * s).sin() / s.sinh(),
            max_relative = 1e-14
        );
        let c2 = e.compile(2);
        assert_relative_eq!(c2.eval(0.0, l), -1.0, max_relative = 1e-14);
        assert_relative_eq!(c2.eval(0.3, 0.0), -0.3 / 0.3f64.sinh(), max_relative = 1e-13);
    }

    #[test]
    fn complex_evaluation_is_consistent() {
        let f = HypExpr::s_over_sinh().mul(&HypExpr::s_over_sinh()).d_over_sinh();
        let c = f.compile(0);
        for &x in &[0.2, 0.45, 1.5] {
            let z = c.eval_complex(Complex64::new(x, 0.0));
            assert!((z.re - c.eval_direct(x, 0.0)).abs() < 1e-12 && z.im.abs() < 1e-15);
        }
        // D (s/sinh s)² = (2s/sinh² s − 2s² cosh s/sinh³ s)/sinh s off the real axis
        for &s in &[Complex64::new(0.3, 0.38), Complex64::new(1.1, 0.9)] {
            let (sh, ch) = (s.sinh(), s.cosh());
            let exact = (s * 2.0 / (sh * sh) - s * s * ch * 2.0 / (sh * sh * sh)) / sh;
            assert!((c.eval_complex(s) - exact).norm() < 1e-12 * exact.norm());
        }
    }

    #[test]
    fn series_and_direct_agree() {
        let mut e = HypExpr::cos_carrier();
        for _ in 0..4 {
            e = e.d_over_sinh();
        }
        let c = e.compile(2);
        for &(s, l) in &[(0.45, 1.0), (0.3, 5.0), (0.4, 12.0)] {
            let a = c.eval_series(s, l);
            let b = c.eval_direct(s, l);
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{s} {l}: {a} vs {b}");
        }
        let f = HypExpr::s_over_sinh().mul(&HypExpr::s_over_sinh()).d_over_sinh();
        let cf = f.compile(0);
        assert!((cf.eval_series(0.45, 0.0) - cf.eval_direct(0.45, 0.0)).abs() < 1e-12);
    }
}
