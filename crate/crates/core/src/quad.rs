//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature for complex
//! integrands on finite intervals.
//!
//! Panels are kept in a max-heap keyed by their error estimate; the worst
//! panel is bisected until the summed estimate meets the tolerance or the
//! panel budget is exhausted. Error estimates follow the QUADPACK `qk21`
//! heuristic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_478_398,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Number of equal panels the interval is split into before adapting.
    pub initial_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_panels: 20_000,
            initial_panels: 1,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn initial_panels(mut self, n: usize) -> Self {
        self.initial_panels = n.max(1);
        self
    }

    pub fn max_panels(mut self, n: usize) -> Self {
        self.max_panels = n;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn qk21<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut resabs = fc.norm() * WGK[10];
    let mut fv1 = [Complex64::new(0.0, 0.0); 10];
    let mut fv2 = [Complex64::new(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += (f1 + f2) * WGK[j];
        resabs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[10] * (fc - mean).norm();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
    }
    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((kronrod - gauss) * half).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

/// Adaptive quadrature that always returns its best estimate; inspect
/// `converged` to learn whether the tolerance was met.
pub fn integrate_unchecked<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult
where
    F: Fn(f64) -> Complex64,
{
    if a == b {
        return QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            panels: 0,
            converged: true,
        };
    }
    let n0 = opts.initial_panels.max(1);
    let mut heap = BinaryHeap::with_capacity(n0 * 2);
    let step = (b - a) / n0 as f64;
    for i in 0..n0 {
        let lo = a + step * i as f64;
        let hi = if i + 1 == n0 { b } else { a + step * (i + 1) as f64 };
        let (value, error) = qk21(&f, lo, hi);
        heap.push(Panel {
            a: lo,
            b: hi,
            value,
            error,
        });
    }
    let mut total: Complex64 = heap.iter().map(|p| p.value).sum();
    let mut total_err: f64 = heap.iter().map(|p| p.error).sum();
    let target = |v: Complex64| opts.abs_tol.max(opts.rel_tol * v.norm());
    while total_err > target(total) && heap.len() < opts.max_panels.max(n0) {
        let worst = heap.pop().expect("heap is nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = qk21(&f, worst.a, mid);
        let (v2, e2) = qk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated update round-off
    let value: Complex64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        error,
        panels: heap.len(),
        converged: error <= target(value),
    }
}

/// Adaptive quadrature over consecutive segments of `points`, each segment
/// sharing the panel budget; useful when near-singular features sit at
/// known abscissae.
pub fn integrate_partition<F>(f: F, points: &[f64], opts: &QuadOptions) -> QuadResult
where
    F: Fn(f64) -> Complex64,
{
    let segments = points.len().saturating_sub(1).max(1);
    let per = QuadOptions {
        max_panels: (opts.max_panels / segments).max(opts.initial_panels.max(1) + 8),
        ..*opts
    };
    let mut out = QuadResult {
        value: Complex64::new(0.0, 0.0),
        error: 0.0,
        panels: 0,
        converged: true,
    };
    for w in points.windows(2) {
        let r = integrate_unchecked(&f, w[0], w[1], &per);
        out.value += r.value;
        out.error += r.error;
        out.panels += r.panels;
    }
    out.converged = out.error <= opts.abs_tol.max(opts.rel_tol * out.value.norm());
    out
}

pub fn integrate<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    let res = integrate_unchecked(f, a, b, opts);
    if res.converged {
        Ok(res)
    } else {
        Err(Error::Accuracy {
            requested: opts.abs_tol.max(opts.rel_tol * res.value.norm()),
            achieved: res.error,
            panels: res.panels,
        })
    }
}

pub fn integrate_real<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(f(x), 0.0), a, b, opts).map(|r| r.value.re)
}

/// Non-adaptive composite 21-point Kronrod rule on `panels` equal panels.
pub fn fixed_panels<F>(f: F, a: f64, b: f64, panels: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let panels = panels.max(1);
    let step = (b - a) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..panels {
        let half = 0.5 * step;
        let centre = a + step * i as f64 + half;
        let mut sum = f(centre) * WGK[10];
        for j in 0..10 {
            let dx = half * XGK[j];
            sum += (f(centre - dx) + f(centre + dx)) * WGK[j];
        }
        acc += sum * half;
    }
    acc
}
