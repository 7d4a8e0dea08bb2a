//! Hybrid score matching.
//!
//! Positions are noised through the forward process while the initial
//! velocity is integrated out, so the regression target for each row is
//! `−Σ̃₀,ₜ^{−1/2} G`. The network output `α` is mapped to a score through a
//! configurable [`Parameterization`].

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinetics::{exp_ta, hybrid_sigma_0t, Block2, KineticParams};
use crate::rng::{fill_normal, substream};
use crate::score_net::{adam_step, backward, forward_packed, AdamState, NetArch, NetParams, Scalar, TimeInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    /// `λ(t) = det(Σ̃₀,ₜ)²`
    DetSq,
    Uniform,
}

/// How the raw network output `α` becomes a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// `s = −Σ̃₀,ₜ⁻¹ α`; the position part of `α` is zero for velocity-only nets.
    InverseCov,
    /// `s = α`
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub horizon: f64,
    pub t_cutoff: f64,
    pub lambda_mode: LambdaMode,
    pub parameterization: Parameterization,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 512,
            lr: 1e-4,
            horizon: 8.0,
            t_cutoff: 8e-5,
            lambda_mode: LambdaMode::DetSq,
            parameterization: Parameterization::InverseCov,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.t_cutoff >= 0.0 && self.t_cutoff < self.horizon) {
            return Err(Error::Config(format!("t_cutoff {} must lie in [0, T)", self.t_cutoff)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be nonnegative", self.lr)));
        }
        Ok(())
    }
}

/// Per-row constants of the objective at one sampled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTerms {
    /// Sampled (schedule) time, before normalization.
    pub t: f64,
    pub weight: f64,
    pub flow: Block2,
    pub cov_sqrt: Block2,
    pub cov_inv: Block2,
    pub cov_inv_sqrt: Block2,
}

impl RowTerms {
    pub fn new(p: &KineticParams, t: f64, mode: LambdaMode) -> Result<Self> {
        let tau = p.schedule.tau(t);
        let cov = hybrid_sigma_0t(p, tau);
        let weight = match mode {
            LambdaMode::DetSq => cov.det().powi(2),
            LambdaMode::Uniform => 1.0,
        };
        Ok(Self {
            t,
            weight,
            flow: exp_ta(p, tau),
            cov_sqrt: cov.psd_sqrt()?,
            cov_inv: cov.inv()?.symmetrized(),
            cov_inv_sqrt: cov.inv_sqrt()?,
        })
    }
}

/// Times and Gaussian draws for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct HsmDraws {
    pub t: Vec<f64>,
    pub gx: Vec<f64>,
    pub gv: Vec<f64>,
}

pub fn draw_hsm<R: Rng + ?Sized>(cfg: &TrainConfig, b: usize, d: usize, rng: &mut R) -> HsmDraws {
    let t = (0..b).map(|_| rng.random_range(cfg.t_cutoff..=cfg.horizon)).collect();
    let mut gx = vec![0.0; b * d];
    let mut gv = vec![0.0; b * d];
    fill_normal(rng, &mut gx);
    fill_normal(rng, &mut gv);
    HsmDraws { t, gx, gv }
}

/// Maps raw outputs to scores. `alpha` is `rows × out_dim`; returns `(s_x, s_v)`
/// per coordinate, with `s_x = 0` for velocity-only outputs.
pub fn output_to_score(
    terms: &[RowTerms],
    alpha: &[f64],
    d: usize,
    out_dim: usize,
    param: Parameterization,
) -> Vec<(f64, f64)> {
    let full = out_dim == 2 * d;
    let mut out = Vec::with_capacity(terms.len() * d);
    for (r, rt) in terms.iter().enumerate() {
        let row = &alpha[r * out_dim..(r + 1) * out_dim];
        for i in 0..d {
            let (ax, av) = if full { (row[i], row[d + i]) } else { (0.0, row[i]) };
            out.push(match param {
                Parameterization::Direct => (ax, av),
                Parameterization::InverseCov => {
                    let (px, pv) = rt.cov_inv.apply(ax, av);
                    (-px, -pv)
                }
            });
        }
    }
    out
}

/// `Σ_r λ_r ‖s_r + Σ̃^{−1/2} G_r‖²` over the rows of a chunk, and its gradient
/// with respect to the raw outputs. Velocity-only outputs drop the position
/// residual.
pub fn objective(
    terms: &[RowTerms],
    alpha: &[f64],
    gx: &[f64],
    gv: &[f64],
    d: usize,
    out_dim: usize,
    param: Parameterization,
) -> (f64, Vec<f64>) {
    let full = out_dim == 2 * d;
    let scores = output_to_score(terms, alpha, d, out_dim, param);
    let mut total = 0.0;
    let mut grad = vec![0.0; alpha.len()];
    for (r, rt) in terms.iter().enumerate() {
        let mut row_sum = 0.0;
        for i in 0..d {
            let j = r * d + i;
            let (qx, qv) = rt.cov_inv_sqrt.apply(gx[j], gv[j]);
            let (sx, sv) = scores[j];
            let rx = if full { sx + qx } else { 0.0 };
            let rv = sv + qv;
            row_sum += rx * rx + rv * rv;
            // d/dα of λ‖r‖²
            let (gax, gav) = match param {
                Parameterization::Direct => (2.0 * rx, 2.0 * rv),
                Parameterization::InverseCov => {
                    let (ux, uv) = rt.cov_inv.apply(rx, rv);
                    (-2.0 * ux, -2.0 * uv)
                }
            };
            let row = &mut grad[r * out_dim..(r + 1) * out_dim];
            if full {
                row[i] = rt.weight * gax;
                row[d + i] = rt.weight * gav;
            } else {
                row[i] = rt.weight * gav;
            }
        }
        total += rt.weight * row_sum;
    }
    (total, grad)
}

/// Rows per parallel work unit; fixed so the reduction order never depends on
/// the thread count.
const CHUNK: usize = 64;

/// Weighted HSM loss and its parameter gradient for given draws.
pub fn hsm_loss_with<F: Scalar>(
    p: &KineticParams,
    params: &NetParams<F>,
    x0: &[f64],
    draws: &HsmDraws,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<F>)> {
    let arch = params.arch;
    let d = arch.d;
    let b = draws.t.len();
    if b == 0 || x0.len() != b * d || draws.gx.len() != b * d || draws.gv.len() != b * d {
        return Err(Error::ShapeMismatch(format!("batch of {b} rows does not match {} data values", x0.len())));
    }
    let terms = draws
        .t
        .iter()
        .map(|&t| RowTerms::new(p, t, cfg.lambda_mode))
        .collect::<Result<Vec<_>>>()?;

    let chunks: Vec<(usize, usize)> = (0..b).step_by(CHUNK).map(|lo| (lo, (lo + CHUNK).min(b))).collect();
    let partials = chunks
        .par_iter()
        .map(|&(lo, hi)| -> Result<(f64, Vec<F>)> {
            let rows = hi - lo;
            let mut input = Vec::with_capacity(rows * 2 * d);
            let mut vel = Vec::with_capacity(d);
            for r in lo..hi {
                let rt = &terms[r];
                vel.clear();
                for i in 0..d {
                    let j = r * d + i;
                    let (mx, mv) = rt.flow.apply(x0[j], 0.0);
                    let (nx, nv) = rt.cov_sqrt.apply(draws.gx[j], draws.gv[j]);
                    input.push(F::from(mx + nx).unwrap());
                    vel.push(F::from(mv + nv).unwrap());
                }
                input.extend_from_slice(&vel);
            }
            let tn: Vec<f64> = (lo..hi).map(|r| draws.t[r] / cfg.horizon).collect();
            let (out, cache) = forward_packed(params, TimeInput::PerRow(&tn), &input, true)?;
            let alpha: Vec<f64> = out.iter().map(|z| z.to_f64().unwrap()).collect();
            let (sum, g_alpha) = objective(
                &terms[lo..hi],
                &alpha,
                &draws.gx[lo * d..hi * d],
                &draws.gv[lo * d..hi * d],
                d,
                arch.out_dim,
                cfg.parameterization,
            );
            let scale = 1.0 / b as f64;
            let up: Vec<F> = g_alpha.iter().map(|g| F::from(g * scale).unwrap()).collect();
            Ok((sum, backward(params, &cache.unwrap(), &up)?))
        })
        .collect::<Vec<_>>();

    let mut loss = 0.0;
    let mut grads = vec![F::zero(); params.data.len()];
    for part in partials {
        let (s, g) = part?;
        loss += s;
        for (a, gi) in grads.iter_mut().zip(g) {
            *a = *a + gi;
        }
    }
    Ok((loss / b as f64, grads))
}

pub fn hsm_loss<F: Scalar, R: Rng + ?Sized>(
    p: &KineticParams,
    params: &NetParams<F>,
    x0: &[f64],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(f64, Vec<F>)> {
    let d = params.arch.d;
    let draws = draw_hsm(cfg, x0.len() / d, d, rng);
    hsm_loss_with(p, params, x0, &draws, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: NetParams<f32>,
    pub adam: AdamState<f32>,
    pub trace: Vec<EpochLoss>,
}

/// Architecture matching the ε mode of `p`.
pub fn arch_for(p: &KineticParams, d: usize, mid: usize, depth: usize) -> Result<NetArch> {
    NetArch::new(d, mid, depth, p.epsilon > 0.0)
}

/// Adam over shuffled minibatches; the last partial batch of each epoch is dropped.
pub fn train(p: &KineticParams, arch: NetArch, data: &[f64], cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(p, NetParams::init(arch, &mut substream(cfg.seed, 0)), data, cfg, |_| {})
}

/// [`train`] from given initial parameters, with a per-epoch callback.
pub fn train_with(
    p: &KineticParams,
    init: NetParams<f32>,
    data: &[f64],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainOutput> {
    p.validate()?;
    cfg.validate()?;
    let arch = init.arch;
    let d = arch.d;
    if data.len() % d != 0 {
        return Err(Error::ShapeMismatch(format!("{} values do not split into rows of {d}", data.len())));
    }
    let n = data.len() / d;
    if n < cfg.batch_size {
        return Err(Error::Config(format!("dataset has {n} rows, fewer than batch_size {}", cfg.batch_size)));
    }
    let mut params = init;
    let mut adam = AdamState::new(params.data.len(), cfg.lr);
    let mut shuffle_rng = substream(cfg.seed, 1);
    let mut noise_rng = substream(cfg.seed, 2);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = vec![0.0; cfg.batch_size * d];
    let steps = n / cfg.batch_size;
    let start = Instant::now();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut acc = 0.0;
        for step in 0..steps {
            for (k, &row) in order[step * cfg.batch_size..(step + 1) * cfg.batch_size].iter().enumerate() {
                batch[k * d..(k + 1) * d].copy_from_slice(&data[row * d..(row + 1) * d]);
            }
            let (loss, grads) = hsm_loss(p, &params, &batch, cfg, &mut noise_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            adam_step(&mut adam, &mut params.data, &grads)?;
            acc += loss;
        }
        let rec = EpochLoss { epoch, mean_loss: acc / steps as f64, wall_seconds: start.elapsed().as_secs_f64() };
        on_epoch(&rec);
        trace.push(rec);
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs, step: steps, loss: f64::NAN });
    }
    Ok(TrainOutput { params, adam, trace })
}

pub fn write_loss_trace(path: &Path, trace: &[EpochLoss]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "epoch,mean_loss,wall_seconds")?;
    for r in trace {
        writeln!(buf, "{},{:.9e},{:.3}", r.epoch, r.mean_loss, r.wall_seconds)?;
    }
    crate::score_net::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn p() -> KineticParams {
        KineticParams::new(1.0, 2.0, 0.25, 1.0).unwrap()
    }

    #[test]
    fn weight_is_positive_on_the_time_range() {
        let cfg = TrainConfig::default();
        for k in 0..=100 {
            let t = cfg.t_cutoff + (cfg.horizon - cfg.t_cutoff) * k as f64 / 100.0;
            assert!(RowTerms::new(&p(), t, LambdaMode::DetSq).unwrap().weight > 0.0);
        }
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        let pp = p();
        let terms: Vec<RowTerms> =
            [0.1, 1.0, 4.0].iter().map(|&t| RowTerms::new(&pp, t, LambdaMode::DetSq).unwrap()).collect();
        let d = 2;
        let mut rng = seeded(9);
        let gx = crate::rng::normal_vec(&mut rng, 6);
        let gv = crate::rng::normal_vec(&mut rng, 6);
        // α = Σ̃^{1/2} G gives s = −Σ̃^{−1/2} G
        let mut alpha = vec![0.0; 12];
        for r in 0..3 {
            for i in 0..d {
                let (ax, av) = terms[r].cov_sqrt.apply(gx[r * d + i], gv[r * d + i]);
                alpha[r * 4 + i] = ax;
                alpha[r * 4 + d + i] = av;
            }
        }
        let (loss, grad) = objective(&terms, &alpha, &gx, &gv, d, 4, Parameterization::InverseCov);
        assert!(loss.abs() < 1e-20, "{loss}");
        assert!(grad.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let pp = p();
        let terms: Vec<RowTerms> =
            [0.3, 2.0].iter().map(|&t| RowTerms::new(&pp, t, LambdaMode::DetSq).unwrap()).collect();
        let mut rng = seeded(5);
        let gx = crate::rng::normal_vec(&mut rng, 2);
        let gv = crate::rng::normal_vec(&mut rng, 2);
        for (out_dim, param) in [(2, Parameterization::InverseCov), (1, Parameterization::InverseCov), (2, Parameterization::Direct)] {
            let alpha = crate::rng::normal_vec(&mut rng, 2 * out_dim);
            let (_, g) = objective(&terms, &alpha, &gx, &gv, 1, out_dim, param);
            for k in 0..alpha.len() {
                let h = 1e-6;
                let mut ap = alpha.clone();
                ap[k] += h;
                let mut am = alpha.clone();
                am[k] -= h;
                let fd = (objective(&terms, &ap, &gx, &gv, 1, out_dim, param).0
                    - objective(&terms, &am, &gx, &gv, 1, out_dim, param).0)
                    / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.t_cutoff = cfg.horizon;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
