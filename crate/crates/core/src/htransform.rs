//! Radial Helgason–Fourier transform.
//!
//! With spherical functions φ_λ normalized by φ_λ(0) = 1 the pair is
//!
//! ```text
//! f̂(λ) = ∫_{H^n} f φ_λ dΩ,
//! f(r) = 2 |S^{n−1}| ∫_0^∞ f̂(λ) φ_λ(r) p(λ) dλ,
//! ```
//!
//! where p is the Plancherel density. Spectral nodes are λ_k = kπ/r_max for
//! k = 1..M. For n = 3 and a matched grid the pair reduces to DST-II/DST-III
//! and is exact on the discrete level; other dimensions use a dense table
//! of φ_λ(r_j), optionally cached on disk.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustdct::DctPlanner;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hypgeo::{Dimension, RadialField, RadialGrid};
use crate::specfun::{plancherel_density, spherical_table};

/// Frequencies λ_k = kΔλ with Plancherel quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    dim: Dimension,
    dlambda: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(dim: Dimension, dlambda: f64, len: usize) -> Result<Self> {
        if !(dlambda > 0.0) || len == 0 {
            return Err(Error::Grid(format!(
                "spectral grid needs Δλ > 0 and nodes, got Δλ = {dlambda}, len = {len}"
            )));
        }
        let nodes: Vec<f64> = (1..=len).map(|k| k as f64 * dlambda).collect();
        let scale = 2.0 * dim.sphere_area() * dlambda;
        let mut weights: Vec<f64> = nodes
            .iter()
            .map(|&l| scale * plancherel_density(dim, l))
            .collect();
        *weights.last_mut().expect("nonempty") *= 0.5;
        Ok(Self {
            dim,
            dlambda,
            nodes,
            weights,
        })
    }

    /// λ_max = π/h with Δλ = π/r_max for odd n.
    ///
    /// For even n the density carries tanh(πλ), whose poles at ±i/2 make the
    /// λ-sum alias with error of order e^{−(2π/Δλ − r)/2}. Halving the step
    /// to π/(2 r_max) pushes that below 1e-9 for r_max ≥ 14.
    pub fn for_radial(rg: &RadialGrid) -> Self {
        let refine = if rg.dim().is_even() { 2 } else { 1 };
        Self::new(rg.dim(), PI / (refine as f64 * rg.r_max()), refine * rg.len())
            .expect("radial grid is valid")
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }
    pub fn dlambda(&self) -> f64 {
        self.dlambda
    }
    pub fn lambda_max(&self) -> f64 {
        *self.nodes.last().expect("nonempty")
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
    pub fn plancherel_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Errors unless the grid resolves functions sampled on `rg`.
    pub fn check_sampling(&self, rg: &RadialGrid) -> Result<()> {
        let need_max = PI / rg.h();
        let need_step = PI / rg.r_max();
        if self.lambda_max() < need_max * (1.0 - 1e-9) {
            return Err(Error::Sampling(format!(
                "λ_max = {} below π/h = {need_max}",
                self.lambda_max()
            )));
        }
        if self.dlambda > need_step * (1.0 + 1e-9) {
            return Err(Error::Sampling(format!(
                "Δλ = {} above π/r_max = {need_step}",
                self.dlambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Arc<SpectralGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values on a spectral grid of {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Σ |F(λ_k)|² π_k.
    pub fn plancherel_norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.plancherel_weights())
            .map(|(v, w)| v.norm_sqr() * w)
            .sum()
    }

    /// Share of the Plancherel mass in the top 10% of frequencies.
    pub fn tail_fraction(&self) -> f64 {
        let total = self.plancherel_norm_sq();
        if total == 0.0 {
            return 0.0;
        }
        let start = self.values.len() - (self.values.len() / 10).max(1);
        let w = self.grid.plancherel_weights();
        let tail: f64 = (start..self.values.len())
            .map(|k| self.values[k].norm_sqr() * w[k])
            .sum();
        tail / total
    }

    pub fn check_resolution(&self, limit: f64) -> Result<f64> {
        let frac = self.tail_fraction();
        if frac > limit {
            return Err(Error::Resolution(format!(
                "spectral tail fraction {frac:e} exceeds {limit:e}"
            )));
        }
        Ok(frac)
    }
}

/// Multiplication by e^{−it(λ² + ρ²)}.
pub fn spectral_multiplier(f: &SpectralField, t: f64) -> SpectralField {
    let rho2 = f.grid.dim().rho().powi(2);
    let values = f
        .values
        .iter()
        .zip(f.grid.nodes())
        .map(|(v, &l)| v * Complex64::from_polar(1.0, -t * (l * l + rho2)))
        .collect();
    SpectralField {
        grid: Arc::clone(&f.grid),
        values,
    }
}

enum Engine {
    Sine {
        dst2: Arc<dyn rustdct::TransformType2And3<f64>>,
    },
    Dense(Arc<DenseOperator>),
}

/// Precomputed transform between one radial and one spectral grid.
pub struct HTransform {
    radial: Arc<RadialGrid>,
    spectral: Arc<SpectralGrid>,
    engine: Engine,
}

impl std::fmt::Debug for HTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HTransform")
            .field("n", &self.radial.dim().n())
            .field("radial_len", &self.radial.len())
            .field("spectral_len", &self.spectral.len())
            .field("fast", &matches!(self.engine, Engine::Sine { .. }))
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey {
    n: usize,
    radial_len: usize,
    spectral_len: usize,
    h_bits: u64,
    dlambda_bits: u64,
}

fn memory_cache() -> &'static Mutex<HashMap<TableKey, Arc<DenseOperator>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<DenseOperator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn compatible(a: &RadialGrid, b: &RadialGrid) -> bool {
    a.dim() == b.dim() && a.len() == b.len() && a.h().to_bits() == b.h().to_bits()
}

impl HTransform {
    pub fn new(radial: Arc<RadialGrid>, spectral: Arc<SpectralGrid>) -> Result<Self> {
        Self::build(radial, spectral, None, true)
    }

    /// Like [`HTransform::new`] but persisting dense tables under `dir`.
    pub fn with_cache_dir(radial: Arc<RadialGrid>, spectral: Arc<SpectralGrid>, dir: &Path) -> Result<Self> {
        Self::build(radial, spectral, Some(dir), true)
    }

    /// Always uses the dense table, even where the sine path applies.
    pub fn dense(radial: Arc<RadialGrid>, spectral: Arc<SpectralGrid>) -> Result<Self> {
        Self::build(radial, spectral, None, false)
    }

    fn build(radial: Arc<RadialGrid>, spectral: Arc<SpectralGrid>, dir: Option<&Path>, allow_fast: bool) -> Result<Self> {
        if radial.dim() != spectral.dim() {
            return Err(Error::Grid(format!(
                "radial grid for n = {} and spectral grid for n = {}",
                radial.dim().n(),
                spectral.dim().n()
            )));
        }
        let matched = spectral.len() == radial.len()
            && (spectral.dlambda() - PI / radial.r_max()).abs() <= 1e-12 * spectral.dlambda();
        let engine = if allow_fast && radial.dim().n() == 3 && matched {
            let mut planner = DctPlanner::new();
            Engine::Sine {
                dst2: planner.plan_dst2(radial.len()),
            }
        } else {
            Engine::Dense(dense_operator(&radial, &spectral, dir)?)
        };
        Ok(Self {
            radial,
            spectral,
            engine,
        })
    }

    pub fn radial(&self) -> &Arc<RadialGrid> {
        &self.radial
    }
    pub fn spectral(&self) -> &Arc<SpectralGrid> {
        &self.spectral
    }
    pub fn is_fast(&self) -> bool {
        matches!(self.engine, Engine::Sine { .. })
    }

    pub fn forward(&self, f: &RadialField) -> Result<SpectralField> {
        if !compatible(f.grid(), &self.radial) {
            return Err(Error::Grid("field does not live on the transform's radial grid".into()));
        }
        let values = self.forward_values(f.values());
        Ok(SpectralField {
            grid: Arc::clone(&self.spectral),
            values,
        })
    }

    pub fn forward_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        let nodes = self.radial.nodes();
        match &self.engine {
            Engine::Sine { dst2 } => {
                let h = self.radial.h();
                let (mut re, mut im): (Vec<f64>, Vec<f64>) = f
                    .iter()
                    .zip(nodes)
                    .map(|(v, r)| (v.re * r.sinh(), v.im * r.sinh()))
                    .unzip();
                dst2.process_dst2(&mut re);
                dst2.process_dst2(&mut im);
                self.spectral
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(k, &l)| Complex64::new(re[k], im[k]) * (4.0 * PI * h / l))
                    .collect()
            }
            Engine::Dense(op) => op.forward(f, self.radial.volume_weights()),
        }
    }

    pub fn inverse(&self, f: &SpectralField) -> Result<RadialField> {
        if f.grid().len() != self.spectral.len() || f.grid().dim() != self.spectral.dim() {
            return Err(Error::Grid("field does not live on the transform's spectral grid".into()));
        }
        self.spectral.check_sampling(&self.radial)?;
        RadialField::new(Arc::clone(&self.radial), self.inverse_values(f.values()))
    }

    pub fn inverse_values(&self, f: &[Complex64]) -> Vec<Complex64> {
        let nodes = self.radial.nodes();
        match &self.engine {
            Engine::Sine { dst2 } => {
                let dl = self.spectral.dlambda();
                let (mut re, mut im): (Vec<f64>, Vec<f64>) = f
                    .iter()
                    .zip(self.spectral.nodes())
                    .map(|(v, &l)| (v.re * l, v.im * l))
                    .unzip();
                dst2.process_dst3(&mut re);
                dst2.process_dst3(&mut im);
                let c = dl / (2.0 * PI * PI);
                nodes
                    .iter()
                    .enumerate()
                    .map(|(j, r)| Complex64::new(re[j], im[j]) * (c / r.sinh()))
                    .collect()
            }
            Engine::Dense(op) => {
                let table = &op.table;
                let n = nodes.len();
                let coef: Vec<Complex64> = f
                    .iter()
                    .zip(self.spectral.plancherel_weights())
                    .map(|(v, w)| v * w)
                    .collect();
                let chunk = 64;
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                out.par_chunks_mut(chunk).enumerate().for_each(|(ci, slot)| {
                    let j0 = ci * chunk;
                    for (k, c) in coef.iter().enumerate() {
                        let row = &table[k * n + j0..k * n + j0 + slot.len()];
                        for (o, p) in slot.iter_mut().zip(row) {
                            *o += c * p;
                        }
                    }
                });
                out
            }
        }
    }
}

pub fn forward_transform(f: &RadialField, sg: &Arc<SpectralGrid>) -> Result<SpectralField> {
    HTransform::new(Arc::clone(f.grid()), Arc::clone(sg))?.forward(f)
}

pub fn inverse_transform(f: &SpectralField, rg: &Arc<RadialGrid>) -> Result<RadialField> {
    HTransform::new(Arc::clone(rg), Arc::clone(f.grid()))?.inverse(f)
}

/// Table φ_{λ_k}(r_j) plus, for even n, the origin correction.
///
/// For even n the integrand f φ_λ sinh^{n−1} is odd at r = 0, so the midpoint
/// sum carries an aliasing defect proportional to the low Taylor
/// coefficients of f that does not decay in λ. Heat kernels p_s have the
/// exact transform e^{−s(λ² + ρ²)}, so their defects D_s(λ) are known. The
/// forward sum subtracts Σ c_i D_{s_i} with c chosen so that f − Σ c_i p_{s_i}
/// vanishes on the first few nodes. This is a rank-K update G = D Q^{−1}
/// acting on f(r_0..r_{K−1}).
struct DenseOperator {
    table: Vec<f64>,
    origin: Option<Vec<f64>>,
}

const HEAT_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

impl DenseOperator {
    fn raw_forward(&self, f: &[Complex64], w: &[f64]) -> Vec<Complex64> {
        let n = w.len();
        let fw: Vec<Complex64> = f.iter().zip(w).map(|(v, w)| v * w).collect();
        self.table
            .par_chunks(n)
            .map(|row| row.iter().zip(&fw).map(|(p, v)| v * p).sum())
            .collect()
    }

    fn forward(&self, f: &[Complex64], w: &[f64]) -> Vec<Complex64> {
        let mut out = self.raw_forward(f, w);
        if let Some(g) = &self.origin {
            let k = HEAT_TIMES.len();
            for (o, row) in out.iter_mut().zip(g.chunks(k)) {
                *o -= row.iter().zip(f).map(|(gi, fi)| fi * gi).sum::<Complex64>();
            }
        }
        out
    }
}

/// Heat kernels p_s at the radial nodes, from the inversion formula on a
/// fine λ-grid where e^{−sλ²} has decayed below round-off.
fn heat_kernels(radial: &RadialGrid, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let dim = radial.dim();
    let s_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let step = 0.01;
    let len = ((40.0 / s_min).sqrt() / step).ceil() as usize;
    let fine = SpectralGrid::new(dim, step, len)?;
    let table = spherical_table(dim, fine.nodes(), radial.nodes())?;
    let n = radial.len();
    let rho2 = dim.rho().powi(2);
    Ok(times
        .iter()
        .map(|&s| {
            let mut p = vec![0.0; n];
            for ((row, &l), &w) in table.chunks(n).zip(fine.nodes()).zip(fine.plancherel_weights()) {
                let c = (-s * (l * l + rho2)).exp() * w;
                for (pj, phi) in p.iter_mut().zip(row) {
                    *pj += c * phi;
                }
            }
            p
        })
        .collect())
}

fn origin_correction(radial: &RadialGrid, spectral: &SpectralGrid, table: Vec<f64>) -> Result<DenseOperator> {
    let k = HEAT_TIMES.len();
    if radial.dim().is_odd() || radial.len() < 2 * k {
        return Ok(DenseOperator { table, origin: None });
    }
    let raw = DenseOperator { table, origin: None };
    let models = heat_kernels(radial, &HEAT_TIMES)?;
    let rho2 = radial.dim().rho().powi(2);
    // defects D[λ][i] of the plain sum on each model
    let mut defect = vec![0.0; spectral.len() * k];
    for (i, (p, &s)) in models.iter().zip(&HEAT_TIMES).enumerate() {
        let pc: Vec<Complex64> = p.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let approx = raw.raw_forward(&pc, radial.volume_weights());
        for (kk, (a, &l)) in approx.iter().zip(spectral.nodes()).enumerate() {
            defect[kk * k + i] = a.re - (-s * (l * l + rho2)).exp();
        }
    }
    // Q[j][i] = p_i(r_j), G = D Q^{-1}
    let q: Vec<Vec<f64>> = (0..k).map(|j| models.iter().map(|p| p[j]).collect()).collect();
    let q_inv = invert_small(&q).ok_or_else(|| Error::Grid("singular origin-correction system".into()))?;
    let mut g = vec![0.0; spectral.len() * k];
    for (grow, drow) in g.chunks_mut(k).zip(defect.chunks(k)) {
        for (j, gj) in grow.iter_mut().enumerate() {
            *gj = (0..k).map(|i| drow[i] * q_inv[i][j]).sum();
        }
    }
    Ok(DenseOperator {
        table: raw.table,
        origin: Some(g),
    })
}

/// Gauss–Jordan inverse with partial pivoting for tiny systems.
fn invert_small(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= d);
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                let pivot_row = m[col].clone();
                m[row].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= factor * p);
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn dense_operator(radial: &RadialGrid, spectral: &SpectralGrid, dir: Option<&Path>) -> Result<Arc<DenseOperator>> {
    let key = TableKey {
        n: radial.dim().n(),
        radial_len: radial.len(),
        spectral_len: spectral.len(),
        h_bits: radial.h().to_bits(),
        dlambda_bits: spectral.dlambda().to_bits(),
    };
    if let Some(t) = memory_cache().lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(t));
    }
    let header = CacheHeader {
        n: key.n as u32,
        radial_len: key.radial_len as u64,
        spectral_len: key.spectral_len as u64,
        h: radial.h(),
        dlambda: spectral.dlambda(),
    };
    let path = dir.map(|d| d.join(header.file_name()));
    let table = match path.as_deref().map(|p| read_table_cache(p, &header)) {
        Some(Ok(t)) => t,
        _ => {
            let t = spherical_table(radial.dim(), spectral.nodes(), radial.nodes())?;
            if let Some(p) = &path {
                write_table_cache(p, &header, &t)?;
            }
            t
        }
    };
    let op = Arc::new(origin_correction(radial, spectral, table)?);
    memory_cache()
        .lock()
        .expect("cache lock")
        .insert(key, Arc::clone(&op));
    Ok(op)
}

const CACHE_MAGIC: &[u8; 8] = b"HNLSPHI\0";
pub const CACHE_VERSION: u32 = 1;

/// Grid description stored in front of a cached φ_λ(r) table.
///
/// File layout, all little endian:
///
/// ```text
/// magic "HNLSPHI\0" | version u32 | n u32 | radial_len u64 | spectral_len u64
/// | h f64 | dlambda f64 | sha256(payload) [u8; 32] | payload f64 × (M·N)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub n: u32,
    pub radial_len: u64,
    pub spectral_len: u64,
    pub h: f64,
    pub dlambda: f64,
}

impl CacheHeader {
    pub fn file_name(&self) -> PathBuf {
        PathBuf::from(format!(
            "phi_n{}_N{}_M{}_{:016x}_{:016x}.bin",
            self.n,
            self.radial_len,
            self.spectral_len,
            self.h.to_bits(),
            self.dlambda.to_bits()
        ))
    }
}

pub fn write_table_cache(path: &Path, header: &CacheHeader, table: &[f64]) -> Result<()> {
    let expected = (header.radial_len * header.spectral_len) as usize;
    if table.len() != expected {
        return Err(Error::Format(format!("table has {} entries, header implies {expected}", table.len())));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut payload = Vec::with_capacity(table.len() * 8);
    for v in table {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&payload);
    let mut file = fs::File::create(path)?;
    file.write_all(CACHE_MAGIC)?;
    file.write_all(&CACHE_VERSION.to_le_bytes())?;
    file.write_all(&header.n.to_le_bytes())?;
    file.write_all(&header.radial_len.to_le_bytes())?;
    file.write_all(&header.spectral_len.to_le_bytes())?;
    file.write_all(&header.h.to_le_bytes())?;
    file.write_all(&header.dlambda.to_le_bytes())?;
    file.write_all(&digest)?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn read_table_cache(path: &Path, expected: &CacheHeader) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fixed = 8 + 4 + 4 + 8 + 8 + 8 + 8 + 32;
    if bytes.len() < fixed || &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Format("not a spherical-table cache file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("cache version {version}, expected {CACHE_VERSION}")));
    }
    let found = CacheHeader {
        n: u32_at(12),
        radial_len: u64_at(16),
        spectral_len: u64_at(24),
        h: f64::from_bits(u64_at(32)),
        dlambda: f64::from_bits(u64_at(40)),
    };
    if found.n != expected.n
        || found.radial_len != expected.radial_len
        || found.spectral_len != expected.spectral_len
        || found.h.to_bits() != expected.h.to_bits()
        || found.dlambda.to_bits() != expected.dlambda.to_bits()
    {
        return Err(Error::Format(format!("cache header {found:?} does not match {expected:?}")));
    }
    let payload = &bytes[fixed..];
    let count = (found.radial_len * found.spectral_len) as usize;
    if payload.len() != count * 8 {
        return Err(Error::Format(format!("payload of {} bytes, expected {}", payload.len(), count * 8)));
    }
    if Sha256::digest(payload).as_slice() != &bytes[48..80] {
        return Err(Error::Format("cache checksum mismatch".into()));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
