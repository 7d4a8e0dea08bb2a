//! Exact forward-process sampling and analytic scores for Gaussian-mixture data.
//!
//! Under the linear forward flow each diagonal Gaussian component stays
//! Gaussian with per-coordinate 2×2 covariance, which gives closed-form
//! scores, Hessians and marginals to test the samplers against.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kinetics::{exp_ta, hybrid_sigma_0t, sigma_0t, sigma_infinity, Block2, KineticParams};
use crate::rng::fill_normal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A batch of `n` phase-space states `(x, v) ∈ ℝ^{2d}`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseEnsemble {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, x: vec![0.0; n * d], v: vec![0.0; n * d] }
    }

    pub fn from_parts(n: usize, d: usize, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != n * d || v.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "phase ensemble {n}x{d} needs {} entries per block, got {} and {}",
                n * d,
                x.len(),
                v.len()
            )));
        }
        Ok(Self { n, d, x, v })
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|z| z.is_finite())
    }

    pub fn row_x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn row_v(&self, i: usize) -> &[f64] {
        &self.v[i * self.d..(i + 1) * self.d]
    }

    /// Applies `M ⊗ I_d` to every row.
    pub fn apply_block(&mut self, m: Block2) {
        m.apply_in_place(&mut self.x, &mut self.v);
    }

    /// Keeps rows `lo..hi`.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Self {
        let d = self.d;
        Self {
            n: hi - lo,
            d,
            x: self.x[lo * d..hi * d].to_vec(),
            v: self.v[lo * d..hi * d].to_vec(),
        }
    }

    /// Concatenates ensembles of equal dimension, in order.
    pub fn concat(parts: Vec<PhaseEnsemble>) -> Self {
        let d = parts.first().map_or(0, |p| p.d);
        let n = parts.iter().map(|p| p.n).sum();
        let mut x = Vec::with_capacity(n * d);
        let mut v = Vec::with_capacity(n * d);
        for p in parts {
            x.extend_from_slice(&p.x);
            v.extend_from_slice(&p.v);
        }
        Self { n, d, x, v }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub diag_covs: Vec<Vec<f64>>,
}

impl GaussianMixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, diag_covs: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { weights, means, diag_covs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(mean: Vec<f64>, diag_cov: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![diag_cov])
    }

    pub fn standard(d: usize) -> Self {
        Self { weights: vec![1.0], means: vec![vec![0.0; d]], diag_covs: vec![vec![1.0; d]] }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::InvalidSpec("mixture needs at least one component".into()));
        }
        if self.means.len() != k || self.diag_covs.len() != k {
            return Err(Error::InvalidSpec(format!(
                "{} weights, {} means, {} covariances",
                k,
                self.means.len(),
                self.diag_covs.len()
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSpec("weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}, expected 1")));
        }
        for (m, c) in self.means.iter().zip(&self.diag_covs) {
            if m.len() != d || c.len() != d {
                return Err(Error::InvalidSpec("component dimensions disagree".into()));
            }
            if m.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidSpec("means must be finite".into()));
            }
            if c.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
                return Err(Error::InvalidSpec("covariance entries must be positive".into()));
            }
        }
        Ok(())
    }

    /// Mean of `‖X‖²` under the mixture.
    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.diag_covs))
            .map(|(w, (m, c))| w * m.iter().zip(c).map(|(mi, ci)| mi * mi + ci).sum::<f64>())
            .sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Draws `U_t = e^{tA}(x0, 0) + Σ̃₀,ₜ^{1/2} G` for every row of `x0` (n×d,
/// row-major), conditioning on the initial positions only.
pub fn forward_sample<R: Rng + ?Sized>(
    p: &KineticParams,
    t: f64,
    x0: &[f64],
    d: usize,
    rng: &mut R,
) -> Result<PhaseEnsemble> {
    check_time(t)?;
    if d == 0 || x0.len() % d != 0 {
        return Err(Error::ShapeMismatch(format!("{} positions do not split into rows of {d}", x0.len())));
    }
    let n = x0.len() / d;
    let mut gx = vec![0.0; n * d];
    let mut gv = vec![0.0; n * d];
    fill_normal(rng, &mut gx);
    fill_normal(rng, &mut gv);
    forward_sample_with_noise(p, t, x0, d, &gx, &gv)
}

/// Deterministic core of [`forward_sample`] with the Gaussian draws supplied.
pub fn forward_sample_with_noise(
    p: &KineticParams,
    t: f64,
    x0: &[f64],
    d: usize,
    gx: &[f64],
    gv: &[f64],
) -> Result<PhaseEnsemble> {
    check_time(t)?;
    if gx.len() != x0.len() || gv.len() != x0.len() {
        return Err(Error::ShapeMismatch("noise and data lengths differ".into()));
    }
    let n = x0.len() / d;
    let e = exp_ta(p, t);
    let root = hybrid_sigma_0t(p, t).psd_sqrt()?;
    let mut out = PhaseEnsemble::zeros(n, d);
    for j in 0..x0.len() {
        let (mx, mv) = e.apply(x0[j], 0.0);
        let (nx, nv) = root.apply(gx[j], gv[j]);
        out.x[j] = mx + nx;
        out.v[j] = mv + nv;
    }
    Ok(out)
}

/// Denoising-score-matching variant: conditions on the full initial state and
/// uses `Σ₀,ₜ` instead of the velocity-marginalized covariance.
pub fn forward_sample_full<R: Rng + ?Sized>(
    p: &KineticParams,
    t: f64,
    u0: &PhaseEnsemble,
    rng: &mut R,
) -> Result<PhaseEnsemble> {
    check_time(t)?;
    let mut out = u0.clone();
    out.apply_block(exp_ta(p, t));
    if t == 0.0 {
        return Ok(out);
    }
    let root = sigma_0t(p, t).psd_sqrt()?;
    let len = u0.n * u0.d;
    let mut gx = vec![0.0; len];
    let mut gv = vec![0.0; len];
    fill_normal(rng, &mut gx);
    fill_normal(rng, &mut gv);
    for j in 0..len {
        let (nx, nv) = root.apply(gx[j], gv[j]);
        out.x[j] += nx;
        out.v[j] += nv;
    }
    Ok(out)
}

/// Per-coordinate Gaussian marginal of the forward process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMarginal {
    pub mean: (f64, f64),
    pub cov: Block2,
}

/// Marginal of `(x_i, v_i)` at time `t` for Gaussian data with diagonal
/// covariance: mean `e^{tA}(m_i, 0)`, covariance `Σ₀,ₜ + e^{tA} diag(s_i, v²) e^{tAᵀ}`.
pub fn gaussian_marginal(
    p: &KineticParams,
    t: f64,
    data_mean: &[f64],
    data_diag_cov: &[f64],
) -> Vec<PairMarginal> {
    let e = exp_ta(p, t);
    let s0t = sigma_0t(p, t);
    let v2 = p.v * p.v;
    data_mean
        .iter()
        .zip(data_diag_cov)
        .map(|(&m, &s)| PairMarginal {
            mean: e.apply(m, 0.0),
            cov: (s0t + e.congruence(Block2::diag(s, v2))).symmetrized(),
        })
        .collect()
}

/// Precomputed per-component, per-coordinate Gaussian factors at one time.
struct MixtureAtTime {
    log_weights: Vec<f64>,
    /// `[k * d + i]`
    means: Vec<(f64, f64)>,
    precisions: Vec<Block2>,
    /// Sum over coordinates of `log det C` plus the `2π` constants, per component.
    log_norms: Vec<f64>,
    d: usize,
}

impl MixtureAtTime {
    fn new(spec: &GaussianMixtureSpec, p: &KineticParams, t: f64) -> Result<Self> {
        spec.validate()?;
        check_time(t)?;
        let d = spec.dim();
        let k = spec.n_components();
        let mut means = Vec::with_capacity(k * d);
        let mut precisions = Vec::with_capacity(k * d);
        let mut log_norms = Vec::with_capacity(k);
        for (m, c) in spec.means.iter().zip(&spec.diag_covs) {
            let mut ln = 0.0;
            for pm in gaussian_marginal(p, t, m, c) {
                means.push(pm.mean);
                precisions.push(pm.cov.inv()?.symmetrized());
                ln += -0.5 * (pm.cov.det().ln() + 2.0 * LN_2PI);
            }
            log_norms.push(ln);
        }
        Ok(Self {
            log_weights: spec.weights.iter().map(|w| w.ln()).collect(),
            means,
            precisions,
            log_norms,
            d,
        })
    }

    /// Log density of each component at one row.
    fn component_logs(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (k, o) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for i in 0..d {
                let (mx, mv) = self.means[k * d + i];
                let (dx, dv) = (x[i] - mx, v[i] - mv);
                let pr = self.precisions[k * d + i];
                q += dx * (pr.m00 * dx + pr.m01 * dv) + dv * (pr.m10 * dx + pr.m11 * dv);
            }
            *o = self.log_weights[k] + self.log_norms[k] - 0.5 * q;
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log p_t(u)` for each row of `u`.
pub fn analytic_log_density(
    spec: &GaussianMixtureSpec,
    p: &KineticParams,
    t: f64,
    u: &PhaseEnsemble,
) -> Result<Vec<f64>> {
    let mix = MixtureAtTime::new(spec, p, t)?;
    check_dim(spec, u)?;
    let mut logs = vec![0.0; spec.n_components()];
    Ok((0..u.n)
        .map(|r| {
            mix.component_logs(u.row_x(r), u.row_v(r), &mut logs);
            log_sum_exp(&logs)
        })
        .collect())
}

fn check_dim(spec: &GaussianMixtureSpec, u: &PhaseEnsemble) -> Result<()> {
    if spec.dim() != u.d {
        return Err(Error::DimensionMismatch { left: spec.dim(), right: u.d });
    }
    Ok(())
}

/// `∇ log p_t(u)` for mixture data, as a responsibility-weighted sum of the
/// component scores `−C_k⁻¹(u − μ_k)`.
pub fn analytic_score(
    spec: &GaussianMixtureSpec,
    p: &KineticParams,
    t: f64,
    u: &PhaseEnsemble,
) -> Result<PhaseEnsemble> {
    check_dim(spec, u)?;
    let mix = MixtureAtTime::new(spec, p, t)?;
    let d = u.d;
    let k = spec.n_components();
    let mut out = PhaseEnsemble::zeros(u.n, d);
    let mut logs = vec![0.0; k];
    for r in 0..u.n {
        let (x, v) = (u.row_x(r), u.row_v(r));
        mix.component_logs(x, v, &mut logs);
        let lse = log_sum_exp(&logs);
        for (c, &lc) in logs.iter().enumerate() {
            let resp = (lc - lse).exp();
            if resp == 0.0 {
                continue;
            }
            for i in 0..d {
                let (mx, mv) = mix.means[c * d + i];
                let (sx, sv) = mix.precisions[c * d + i].apply(x[i] - mx, v[i] - mv);
                out.x[r * d + i] -= resp * sx;
                out.v[r * d + i] -= resp * sv;
            }
        }
    }
    Ok(out)
}

/// `∇ log(p_t / p_∞)(u) = ∇ log p_t(u) + Σ∞⁻¹ u`.
pub fn analytic_modified_score(
    spec: &GaussianMixtureSpec,
    p: &KineticParams,
    t: f64,
    u: &PhaseEnsemble,
) -> Result<PhaseEnsemble> {
    let mut s = analytic_score(spec, p, t, u)?;
    let prec = sigma_infinity(p).inv()?;
    for j in 0..s.x.len() {
        let (px, pv) = prec.apply(u.x[j], u.v[j]);
        s.x[j] += px;
        s.v[j] += pv;
    }
    Ok(s)
}

/// Per-coordinate Hessian block of `log p_t` for single-Gaussian data, `−C⁻¹`.
pub fn gaussian_log_hessian(
    p: &KineticParams,
    t: f64,
    data_mean: &[f64],
    data_diag_cov: &[f64],
) -> Result<Vec<Block2>> {
    gaussian_marginal(p, t, data_mean, data_diag_cov)
        .into_iter()
        .map(|pm| Ok(-pm.cov.inv()?.symmetrized()))
        .collect()
}
