//! Synthetic benchmark distributions and the binary dataset format.
//!
//! Values are stored as 32-bit floats on disk; generators quantize through
//! `f32` so that a generated set and its saved copy are identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_oracle::GaussianMixtureSpec;
use crate::rng::substream;
use crate::score_net::{write_atomic, Reader};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    /// `x₁ ~ N(0, base_var)`, `x_i | x₁ ~ N(0, e^{x₁})`.
    Funnel { base_var: f64 },
    /// 25 modes at `[j, k, 0, …]`, `j, k ∈ {−2..2}`, covariance `diag(0.01, 0.01, 0.1, …)`.
    Mg25,
    /// 5×5 lattice rotated by 45°, means `((j−k)/2, (j+k)/2)` scaled by `scale/2`.
    Diamond { std: f64, scale: f64 },
    Gaussian(GaussianMixtureSpec),
    Gmm(GaussianMixtureSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn funnel(d: usize, n: usize, seed: u64) -> Self {
        Self { kind: DatasetKind::Funnel { base_var: 9.0 }, d, n, seed }
    }

    pub fn mg25(d: usize, n: usize, seed: u64) -> Self {
        Self { kind: DatasetKind::Mg25, d, n, seed }
    }

    pub fn diamond(n: usize, seed: u64) -> Self {
        Self { kind: DatasetKind::Diamond { std: 0.05, scale: 2.0 }, d: 2, n, seed }
    }

    pub fn standard_gaussian(d: usize, n: usize, seed: u64) -> Self {
        Self { kind: DatasetKind::Gaussian(GaussianMixtureSpec::standard(d)), d, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidSpec(format!("need d >= 1 and n >= 1, got d={} n={}", self.d, self.n)));
        }
        match &self.kind {
            DatasetKind::Funnel { base_var } => {
                if self.d < 2 || !(*base_var > 0.0) {
                    return Err(Error::InvalidSpec("funnel needs d >= 2 and a positive base variance".into()));
                }
            }
            DatasetKind::Mg25 => {
                if self.d < 2 {
                    return Err(Error::InvalidSpec("mg25 needs d >= 2".into()));
                }
            }
            DatasetKind::Diamond { std, scale } => {
                if self.d != 2 || !(*std > 0.0) || !(*scale > 0.0) {
                    return Err(Error::InvalidSpec("diamond is two-dimensional with positive std and scale".into()));
                }
            }
            DatasetKind::Gaussian(s) | DatasetKind::Gmm(s) => {
                s.validate()?;
                if s.dim() != self.d {
                    return Err(Error::InvalidSpec(format!("mixture dimension {} vs d = {}", s.dim(), self.d)));
                }
                if matches!(self.kind, DatasetKind::Gaussian(_)) && s.n_components() != 1 {
                    return Err(Error::InvalidSpec("gaussian kind takes a single component".into()));
                }
            }
        }
        Ok(())
    }

    /// The equivalent Gaussian mixture, when the distribution is one.
    pub fn mixture(&self) -> Option<GaussianMixtureSpec> {
        match &self.kind {
            DatasetKind::Funnel { .. } => None,
            DatasetKind::Mg25 => Some(mg25_spec(self.d)),
            DatasetKind::Diamond { std, scale } => Some(diamond_spec(*std, *scale)),
            DatasetKind::Gaussian(s) | DatasetKind::Gmm(s) => Some(s.clone()),
        }
    }

    /// `E‖x‖²` of the distribution.
    pub fn second_moment(&self) -> f64 {
        match &self.kind {
            DatasetKind::Funnel { base_var } => base_var + (self.d - 1) as f64 * (0.5 * base_var).exp(),
            _ => self.mixture().map_or(f64::NAN, |m| m.second_moment()),
        }
    }
}

/// Row-major `n × d` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::LengthMismatch { left: data.len(), right: n * d });
        }
        Ok(Self { n, d, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn mg25_spec(d: usize) -> GaussianMixtureSpec {
    let mut means = Vec::with_capacity(25);
    for j in -2..=2 {
        for k in -2..=2 {
            let mut m = vec![0.0; d];
            m[0] = j as f64;
            m[1] = k as f64;
            means.push(m);
        }
    }
    let mut cov = vec![0.1; d];
    cov[0] = 0.01;
    cov[1] = 0.01;
    GaussianMixtureSpec { weights: vec![1.0 / 25.0; 25], means, diag_covs: vec![cov; 25] }
}

pub fn diamond_spec(std: f64, scale: f64) -> GaussianMixtureSpec {
    let mut means = Vec::with_capacity(25);
    for j in -2..=2 {
        for k in -2..=2 {
            let (j, k) = (j as f64, k as f64);
            means.push(vec![(j - k) * scale / 4.0, (j + k) * scale / 4.0]);
        }
    }
    GaussianMixtureSpec { weights: vec![1.0 / 25.0; 25], means, diag_covs: vec![vec![std * std; 2]; 25] }
}

fn gmm_row<R: Rng + ?Sized>(spec: &GaussianMixtureSpec, cum: &[f64], rng: &mut R, out: &mut [f64]) {
    let u: f64 = rng.random();
    let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
    for (i, o) in out.iter_mut().enumerate() {
        *o = spec.means[k][i] + spec.diag_covs[k][i].sqrt() * normal(rng);
    }
}

fn funnel_row<R: Rng + ?Sized>(base_var: f64, rng: &mut R, out: &mut [f64]) {
    let x1 = base_var.sqrt() * normal(rng);
    out[0] = x1;
    let s = (0.5 * x1).exp();
    for o in &mut out[1..] {
        *o = s * normal(rng);
    }
}

/// Rows per RNG stream.
const ROW_BLOCK: usize = 4096;

fn generate_rows(n: usize, d: usize, seed: u64, row: impl Fn(&mut crate::rng::StreamRng, &mut [f64]) + Sync) -> Vec<f64> {
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(ROW_BLOCK * d).enumerate().for_each(|(b, chunk)| {
        let mut rng = substream(seed, b as u64);
        for r in chunk.chunks_exact_mut(d) {
            row(&mut rng, r);
            for x in r.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    });
    data
}

pub fn gen_funnel(d: usize, n: usize, seed: u64) -> Result<Dataset> {
    generate(&DatasetSpec::funnel(d, n, seed))
}

pub fn gen_mg25(d: usize, n: usize, seed: u64) -> Result<Dataset> {
    generate(&DatasetSpec::mg25(d, n, seed))
}

pub fn gen_diamond(n: usize, seed: u64) -> Result<Dataset> {
    generate(&DatasetSpec::diamond(n, seed))
}

pub fn gen_gmm(spec: &GaussianMixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    generate(&DatasetSpec { kind: DatasetKind::Gmm(spec.clone()), d: spec.dim(), n, seed })
}

pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let data = match &spec.kind {
        DatasetKind::Funnel { base_var } => {
            let bv = *base_var;
            generate_rows(n, d, spec.seed, |rng, r| funnel_row(bv, rng, r))
        }
        _ => {
            let mix = spec.mixture().expect("mixture kinds");
            let mut acc = 0.0;
            let cum: Vec<f64> = mix.weights.iter().map(|w| {
                acc += w;
                acc
            }).collect();
            generate_rows(n, d, spec.seed, |rng, r| gmm_row(&mix, &cum, rng, r))
        }
    };
    Dataset::new(n, d, data)
}

const DATA_MAGIC: [u8; 4] = *b"CLDS";
const DATA_VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let n = u32::try_from(ds.n).map_err(|_| Error::InvalidSpec("too many rows for the format".into()))?;
    let d = u32::try_from(ds.d).map_err(|_| Error::InvalidSpec("dimension too large for the format".into()))?;
    let mut buf = Vec::with_capacity(16 + 4 * ds.data.len());
    buf.extend_from_slice(&DATA_MAGIC);
    buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for x in &ds.data {
        buf.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    r.magic(DATA_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATA_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: DATA_VERSION });
    }
    let n = r.u32("n")? as usize;
    let d = r.u32("d")? as usize;
    let len = n.checked_mul(d).ok_or_else(|| Error::CorruptLength("n·d overflows".into()))?;
    let vals = r.f32s(len, "values")?;
    r.finish()?;
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSpec("dataset contains non-finite values".into()));
    }
    Dataset::new(n, d, vals.into_iter().map(f64::from).collect())
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

pub fn to_csv(ds: &Dataset) -> String {
    let mut s = String::new();
    let header: Vec<String> = (0..ds.d).map(|i| format!("x{i}")).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..ds.n {
        let row: Vec<String> = ds.row(i).iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn save_csv(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, to_csv(ds).as_bytes())
}
