//! MLP score model with sinusoidal time embedding.
//!
//! Layout: `h₀ = U W_in + b_in + P₀(e(t))`, `h_k = SiLU(h_{k-1} W_k + b_k) + P_k(e(t))`,
//! `out = h_depth W_out + b_out`. The per-layer time projections `P_k` share a
//! single fused matrix. Parameters live in one flat buffer so that gradients,
//! Adam moments and checkpoints all share the same layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, LinalgScalar};
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::forward_oracle::PhaseEnsemble;

pub trait Scalar: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
fn c<F: Scalar>(x: f64) -> F {
    F::from(x).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetArch {
    pub d: usize,
    pub mid: usize,
    pub depth: usize,
    pub out_dim: usize,
    pub embed_dim: usize,
}

impl NetArch {
    /// `out_dim = 2d` when `position_score` is set, `d` otherwise.
    pub fn new(d: usize, mid: usize, depth: usize, position_score: bool) -> Result<Self> {
        let arch = Self {
            d,
            mid,
            depth,
            out_dim: if position_score { 2 * d } else { d },
            embed_dim: mid + mid % 2,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.mid == 0 || self.depth == 0 {
            return Err(Error::InvalidParams(format!("degenerate architecture {self:?}")));
        }
        if self.out_dim != self.d && self.out_dim != 2 * self.d {
            return Err(Error::InvalidParams(format!("out_dim {} must be d or 2d", self.out_dim)));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::InvalidParams("embedding width must be even".into()));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        2 * self.d
    }

    pub fn has_position_score(&self) -> bool {
        self.out_dim == 2 * self.d
    }

    /// `(rows, cols)` of every tensor in storage order: `W_in, b_in, W_t, b_t,
    /// (W_k, b_k) for k = 1..depth, W_out, b_out`.
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let mut s = vec![
            (self.in_dim(), self.mid),
            (1, self.mid),
            (self.embed_dim, (self.depth + 1) * self.mid),
            (1, (self.depth + 1) * self.mid),
        ];
        for _ in 0..self.depth {
            s.push((self.mid, self.mid));
            s.push((1, self.mid));
        }
        s.push((self.mid, self.out_dim));
        s.push((1, self.out_dim));
        s
    }

    pub fn n_params(&self) -> usize {
        self.tensor_shapes().iter().map(|(r, c)| r * c).sum()
    }

    /// Parameter count with overflow checking, for untrusted headers.
    pub fn checked_n_params(&self) -> Option<usize> {
        let proj = self.depth.checked_add(1)?.checked_mul(self.mid)?;
        let mut n = self.in_dim().checked_add(1)?.checked_mul(self.mid)?;
        n = n.checked_add(self.embed_dim.checked_add(1)?.checked_mul(proj)?)?;
        n = n.checked_add(self.mid.checked_add(1)?.checked_mul(self.mid)?.checked_mul(self.depth)?)?;
        n.checked_add(self.mid.checked_add(1)?.checked_mul(self.out_dim)?)
    }
}

/// Sinusoidal embedding: `[sin(ω_k t)…, cos(ω_k t)…]` with `ω_k` log-spaced in `[1, 1e4]`.
pub fn time_embed(t: f64, embed_dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; embed_dim];
    time_embed_into(t, &mut out);
    out
}

fn time_embed_into<F: Scalar>(t: f64, out: &mut [F]) {
    let half = out.len() / 2;
    for k in 0..half {
        let w = if half > 1 { 10f64.powf(4.0 * k as f64 / (half - 1) as f64) } else { 1.0 };
        let (s, co) = (w * t).sin_cos();
        out[k] = c(s);
        out[half + k] = c(co);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<F> {
    pub arch: NetArch,
    pub data: Vec<F>,
}

/// Offsets into the flat buffer, resolved once per call.
struct Layout {
    w_in: usize,
    b_in: usize,
    w_t: usize,
    b_t: usize,
    hidden: Vec<(usize, usize)>,
    w_out: usize,
    b_out: usize,
}

impl Layout {
    fn of(arch: &NetArch) -> Self {
        let shapes = arch.tensor_shapes();
        let mut offs = Vec::with_capacity(shapes.len());
        let mut o = 0;
        for (r, c) in &shapes {
            offs.push(o);
            o += r * c;
        }
        let hidden = (0..arch.depth).map(|k| (offs[4 + 2 * k], offs[5 + 2 * k])).collect();
        let n = offs.len();
        Self {
            w_in: offs[0],
            b_in: offs[1],
            w_t: offs[2],
            b_t: offs[3],
            hidden,
            w_out: offs[n - 2],
            b_out: offs[n - 1],
        }
    }
}

impl<F: Scalar> NetParams<F> {
    pub fn zeros(arch: NetArch) -> Self {
        Self { arch, data: vec![F::zero(); arch.n_params()] }
    }

    /// Uniform fan-in initialization with variance `1/fan_in`; biases and the
    /// output layer start at zero.
    pub fn init<R: Rng + ?Sized>(arch: NetArch, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let l = Layout::of(&arch);
        let mut fill = |off: usize, rows: usize, cols: usize| {
            let bound = (3.0 / rows as f64).sqrt();
            for w in &mut p.data[off..off + rows * cols] {
                *w = c(rng.random_range(-bound..bound));
            }
        };
        fill(l.w_in, arch.in_dim(), arch.mid);
        fill(l.w_t, arch.embed_dim, (arch.depth + 1) * arch.mid);
        for &(w, _) in &l.hidden {
            fill(w, arch.mid, arch.mid);
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|w| w.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> NetParams<G> {
        NetParams { arch: self.arch, data: self.data.iter().map(|w| G::from(*w).unwrap()).collect() }
    }
}

fn view<F>(data: &[F], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, F> {
    ArrayView2::from_shape((rows, cols), &data[off..off + rows * cols]).unwrap()
}

fn view_mut<F>(data: &mut [F], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, F> {
    ArrayViewMut2::from_shape((rows, cols), &mut data[off..off + rows * cols]).unwrap()
}

/// `out = a · b` (or `out += a · b` when `accumulate`).
fn gemm<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>, out: &mut ArrayViewMut2<F>, accumulate: bool) {
    let beta = if accumulate { F::one() } else { F::zero() };
    general_mat_mul(F::one(), &a, &b, beta, out);
}

fn col_sum_into<F: Scalar>(m: &[F], cols: usize, out: &mut [F]) {
    for r in m.chunks_exact(cols) {
        for (o, x) in out.iter_mut().zip(r) {
            *o = *o + *x;
        }
    }
}

#[inline]
fn sigmoid<F: Scalar>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Time input to the net: one value shared by the batch or one per row.
#[derive(Debug, Clone, Copy)]
pub enum TimeInput<'a> {
    Shared(f64),
    PerRow(&'a [f64]),
}

/// Activations kept for the backward pass.
pub struct ForwardCache<F> {
    batch: usize,
    input: Vec<F>,
    embed: Vec<F>,
    shared_time: bool,
    /// `h_0 … h_depth`, each `batch × mid`.
    hs: Vec<Vec<F>>,
    /// Pre-activations `z_1 … z_depth`.
    zs: Vec<Vec<F>>,
}

/// Row-major `batch × 2d` input block `[x | v]` from a phase ensemble.
pub fn pack_input<F: Scalar>(u: &PhaseEnsemble) -> Vec<F> {
    let d = u.d;
    let mut out = Vec::with_capacity(u.n * 2 * d);
    for r in 0..u.n {
        out.extend(u.row_x(r).iter().map(|z| c::<F>(*z)));
        out.extend(u.row_v(r).iter().map(|z| c::<F>(*z)));
    }
    out
}

/// Forward pass on a packed `batch × 2d` input; returns `batch × out_dim`.
pub fn forward_packed<F: Scalar>(
    params: &NetParams<F>,
    t: TimeInput<'_>,
    input: &[F],
    keep_cache: bool,
) -> Result<(Vec<F>, Option<ForwardCache<F>>)> {
    let arch = &params.arch;
    let (din, mid, depth, e) = (arch.in_dim(), arch.mid, arch.depth, arch.embed_dim);
    if params.data.len() != arch.n_params() {
        return Err(Error::ShapeMismatch(format!(
            "parameter buffer has {} entries, architecture needs {}",
            params.data.len(),
            arch.n_params()
        )));
    }
    if input.len() % din != 0 {
        return Err(Error::ShapeMismatch(format!("input length {} is not a multiple of {din}", input.len())));
    }
    let batch = input.len() / din;
    let l = Layout::of(arch);
    let w = &params.data;
    let pw = (depth + 1) * mid;

    // time projections: one row when shared, `batch` rows otherwise
    let (embed, trows) = match t {
        TimeInput::Shared(t) => {
            let mut em = vec![F::zero(); e];
            time_embed_into(t, &mut em);
            (em, 1)
        }
        TimeInput::PerRow(ts) => {
            if ts.len() != batch {
                return Err(Error::ShapeMismatch(format!("{} times for {batch} rows", ts.len())));
            }
            let mut em = vec![F::zero(); batch * e];
            for (r, &ti) in ts.iter().enumerate() {
                time_embed_into(ti, &mut em[r * e..(r + 1) * e]);
            }
            (em, batch)
        }
    };
    let mut tp = w[l.b_t..l.b_t + pw].repeat(trows);
    gemm(
        view(&embed, 0, trows, e),
        view(w, l.w_t, e, pw),
        &mut view_mut(&mut tp, 0, trows, pw),
        true,
    );
    let add_proj = |h: &mut [F], k: usize| {
        for (r, row) in h.chunks_exact_mut(mid).enumerate() {
            let src = &tp[(r % trows) * pw + k * mid..(r % trows) * pw + (k + 1) * mid];
            for (x, p) in row.iter_mut().zip(src) {
                *x = *x + *p;
            }
        }
    };

    let mut h = w[l.b_in..l.b_in + mid].repeat(batch);
    gemm(view(input, 0, batch, din), view(w, l.w_in, din, mid), &mut view_mut(&mut h, 0, batch, mid), true);
    add_proj(&mut h, 0);

    let mut hs = Vec::new();
    let mut zs = Vec::new();
    for (k, &(wk, bk)) in l.hidden.iter().enumerate() {
        let mut z = w[bk..bk + mid].repeat(batch);
        gemm(view(&h, 0, batch, mid), view(w, wk, mid, mid), &mut view_mut(&mut z, 0, batch, mid), true);
        let mut next: Vec<F> = z.iter().map(|&zi| zi * sigmoid(zi)).collect();
        add_proj(&mut next, k + 1);
        if keep_cache {
            hs.push(std::mem::replace(&mut h, next));
            zs.push(z);
        } else {
            h = next;
        }
    }

    let od = arch.out_dim;
    let mut out = w[l.b_out..l.b_out + od].repeat(batch);
    gemm(view(&h, 0, batch, mid), view(w, l.w_out, mid, od), &mut view_mut(&mut out, 0, batch, od), true);

    let cache = keep_cache.then(|| {
        hs.push(h);
        ForwardCache {
            batch,
            input: input.to_vec(),
            embed,
            shared_time: trows == 1,
            hs,
            zs,
        }
    });
    Ok((out, cache))
}

/// Gradient of `sum(upstream ⊙ output)` with respect to every parameter.
pub fn backward<F: Scalar>(params: &NetParams<F>, cache: &ForwardCache<F>, upstream: &[F]) -> Result<Vec<F>> {
    let arch = &params.arch;
    let (din, mid, depth, e, od) = (arch.in_dim(), arch.mid, arch.depth, arch.embed_dim, arch.out_dim);
    let b = cache.batch;
    if upstream.len() != b * od {
        return Err(Error::ShapeMismatch(format!("upstream has {} entries, expected {}", upstream.len(), b * od)));
    }
    let l = Layout::of(arch);
    let w = &params.data;
    let pw = (depth + 1) * mid;
    let mut g = vec![F::zero(); w.len()];

    let h_last = &cache.hs[depth];
    gemm(view(h_last, 0, b, mid).t(), view(upstream, 0, b, od), &mut view_mut(&mut g, l.w_out, mid, od), false);
    col_sum_into(upstream, od, &mut g[l.b_out..l.b_out + od]);

    let mut gh = vec![F::zero(); b * mid];
    gemm(view(upstream, 0, b, od), view(w, l.w_out, mid, od).t(), &mut view_mut(&mut gh, 0, b, mid), false);

    // gradient w.r.t. the time projections, `b × pw`
    let mut gtp = vec![F::zero(); b * pw];
    let store_gtp = |gtp: &mut [F], gh: &[F], k: usize| {
        for r in 0..b {
            gtp[r * pw + k * mid..r * pw + (k + 1) * mid].copy_from_slice(&gh[r * mid..(r + 1) * mid]);
        }
    };

    for k in (0..depth).rev() {
        store_gtp(&mut gtp, &gh, k + 1);
        let z = &cache.zs[k];
        let gz: Vec<F> = gh
            .iter()
            .zip(z)
            .map(|(&gi, &zi)| {
                let s = sigmoid(zi);
                gi * s * (F::one() + zi * (F::one() - s))
            })
            .collect();
        let (wk, bk) = l.hidden[k];
        gemm(view(&cache.hs[k], 0, b, mid).t(), view(&gz, 0, b, mid), &mut view_mut(&mut g, wk, mid, mid), false);
        col_sum_into(&gz, mid, &mut g[bk..bk + mid]);
        gemm(view(&gz, 0, b, mid), view(w, wk, mid, mid).t(), &mut view_mut(&mut gh, 0, b, mid), false);
    }
    store_gtp(&mut gtp, &gh, 0);
    gemm(view(&cache.input, 0, b, din).t(), view(&gh, 0, b, mid), &mut view_mut(&mut g, l.w_in, din, mid), false);
    col_sum_into(&gh, mid, &mut g[l.b_in..l.b_in + mid]);

    if cache.shared_time {
        let mut colsum = vec![F::zero(); pw];
        col_sum_into(&gtp, pw, &mut colsum);
        gemm(view(&cache.embed, 0, e, 1), view(&colsum, 0, 1, pw), &mut view_mut(&mut g, l.w_t, e, pw), false);
        g[l.b_t..l.b_t + pw].copy_from_slice(&colsum);
    } else {
        gemm(view(&cache.embed, 0, b, e).t(), view(&gtp, 0, b, pw), &mut view_mut(&mut g, l.w_t, e, pw), false);
        col_sum_into(&gtp, pw, &mut g[l.b_t..l.b_t + pw]);
    }
    Ok(g)
}

/// Evaluates the net on a phase ensemble at normalized time `t ∈ [0, 1]`.
pub fn net_forward<F: Scalar>(params: &NetParams<F>, t: f64, u: &PhaseEnsemble) -> Result<Vec<F>> {
    if u.d != params.arch.d {
        return Err(Error::ShapeMismatch(format!("ensemble dimension {} vs net dimension {}", u.d, params.arch.d)));
    }
    Ok(forward_packed(params, TimeInput::Shared(t), &pack_input(u), false)?.0)
}

/// Gradients of `sum(upstream ⊙ net_forward(params, t, u))`.
pub fn net_backward<F: Scalar>(params: &NetParams<F>, t: f64, u: &PhaseEnsemble, upstream: &[F]) -> Result<Vec<F>> {
    if u.d != params.arch.d {
        return Err(Error::ShapeMismatch(format!("ensemble dimension {} vs net dimension {}", u.d, params.arch.d)));
    }
    let (_, cache) = forward_packed(params, TimeInput::Shared(t), &pack_input(u), true)?;
    backward(params, &cache.unwrap(), upstream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![F::zero(); n], v: vec![F::zero(); n], step: 0, lr, beta1: 0.9, beta2: 0.999, eps_stab: 1e-8 }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step<F: Scalar>(state: &mut AdamState<F>, params: &mut [F], grads: &[F]) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let k = state.step as i32;
    let (b1, b2) = (c::<F>(state.beta1), c::<F>(state.beta2));
    let c1 = 1.0 - state.beta1.powi(k);
    let c2 = 1.0 - state.beta2.powi(k);
    let step_size = c::<F>(state.lr / c1);
    let inv_c2 = c::<F>(1.0 / c2);
    let eps = c::<F>(state.eps_stab);
    for i in 0..params.len() {
        let gi = grads[i];
        state.m[i] = b1 * state.m[i] + (F::one() - b1) * gi;
        state.v[i] = b2 * state.v[i] + (F::one() - b2) * gi * gi;
        params[i] = params[i] - step_size * state.m[i] / ((state.v[i] * inv_c2).sqrt() + eps);
    }
    Ok(())
}

const CKPT_MAGIC: [u8; 4] = *b"CLDN";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams<f32>,
    /// Whether the model was trained with position noise (ε > 0).
    pub epsilon_mode: bool,
    pub adam: Option<AdamState<f32>>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let a = &ck.params.arch;
    let mut buf = Vec::with_capacity(64 + 4 * ck.params.data.len() * 3);
    buf.extend_from_slice(&CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    for f in [a.d, a.mid, a.depth, a.out_dim, a.embed_dim] {
        buf.extend_from_slice(&(f as u32).to_le_bytes());
    }
    buf.extend_from_slice(&u32::from(ck.epsilon_mode).to_le_bytes());
    let shapes = a.tensor_shapes();
    let mut off = 0;
    for (r, c) in shapes {
        put_tensor(&mut buf, &ck.params.data[off..off + r * c]);
        off += r * c;
    }
    match &ck.adam {
        None => buf.extend_from_slice(&0u32.to_le_bytes()),
        Some(s) => {
            buf.extend_from_slice(&1u32.to_le_bytes());
            buf.extend_from_slice(&s.step.to_le_bytes());
            for x in [s.lr, s.beta1, s.beta2, s.eps_stab] {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            put_tensor(&mut buf, &s.m);
            put_tensor(&mut buf, &s.v);
        }
    }
    buf
}

fn put_tensor(buf: &mut Vec<u8>, xs: &[f32]) {
    buf.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Byte cursor over an untrusted buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptLength(format!("{what}: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        if self.buf.len() < 4 {
            return Err(Error::CorruptLength("file shorter than its magic bytes".into()));
        }
        if self.take(4, "magic")? != expected {
            return Err(Error::BadMagic { expected });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n.checked_mul(4).ok_or_else(|| Error::CorruptLength(format!("{what}: count overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    fn tensor(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let n = self.u64(what)?;
        if n != expected as u64 {
            return Err(Error::CorruptLength(format!("{what}: {n} elements, architecture implies {expected}")));
        }
        self.f32s(expected, what)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptLength(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(buf);
    r.magic(CKPT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CKPT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CKPT_VERSION });
    }
    let mut f = [0usize; 5];
    for (i, name) in ["d", "mid", "depth", "out_dim", "embed_dim"].iter().enumerate() {
        f[i] = r.u32(name)? as usize;
    }
    let arch = NetArch { d: f[0], mid: f[1], depth: f[2], out_dim: f[3], embed_dim: f[4] };
    arch.validate().map_err(|e| Error::CorruptLength(format!("header: {e}")))?;
    let total = arch
        .checked_n_params()
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= buf.len()))
        .ok_or_else(|| Error::CorruptLength("architecture larger than the file".into()))?;
    let epsilon_mode = match r.u32("epsilon flag")? {
        0 => false,
        1 => true,
        x => return Err(Error::CorruptLength(format!("epsilon flag {x}"))),
    };
    let mut data = Vec::with_capacity(total);
    for (i, (rows, cols)) in arch.tensor_shapes().into_iter().enumerate() {
        data.extend(r.tensor(rows * cols, &format!("tensor {i}"))?);
    }
    let adam = match r.u32("adam flag")? {
        0 => None,
        1 => {
            let step = r.u64("adam step")?;
            let lr = r.f64("lr")?;
            let beta1 = r.f64("beta1")?;
            let beta2 = r.f64("beta2")?;
            let eps_stab = r.f64("eps")?;
            let m = r.tensor(total, "adam m")?;
            let v = r.tensor(total, "adam v")?;
            Some(AdamState { m, v, step, lr, beta1, beta2, eps_stab })
        }
        x => return Err(Error::CorruptLength(format!("adam flag {x}"))),
    };
    r.finish()?;
    Ok(Checkpoint { params: NetParams { arch, data }, epsilon_mode, adam })
}

/// Writes via a temporary sibling file and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
