//! Backward-process samplers.
//!
//! Chains start from `π∞ = N(0, Σ∞ ⊗ I_d)` and run `N` uniform steps of either
//! Euler–Maruyama or a Strang splitting (exact OU half-flow, score kick, exact
//! OU half-flow). Chains are processed in fixed blocks, each with its own RNG
//! stream, so the output is independent of the number of threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_oracle::{analytic_score, GaussianMixtureSpec, PhaseEnsemble};
use crate::kinetics::{drift_matrix, hybrid_sigma_0t, sigma_infinity, Block2, KineticParams};
use crate::rng::{fill_normal, substream};
use crate::score_net::{forward_packed, pack_input, NetParams, TimeInput};
use crate::training::Parameterization;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Splitting,
}

/// Drift used by Euler–Maruyama: `−A` with the plain score, or `Ã` with
/// `s̃ = s + Σ∞⁻¹u`. The splitting integrator always uses the modified form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreForm {
    Plain,
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub horizon: f64,
    pub integrator: Integrator,
    pub score_form: ScoreForm,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: 1000, horizon: 8.0, integrator: Integrator::Euler, score_form: ScoreForm::Modified, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        Ok(())
    }
}

/// Plain score `∇ log p` of the forward marginal.
pub trait ScoreSource: Sync {
    fn dim(&self) -> usize;

    /// Score at schedule time `t` (physical time `tau`).
    fn score(&self, t: f64, tau: f64, u: &PhaseEnsemble) -> Result<PhaseEnsemble>;
}

/// Identically zero score.
pub struct ZeroScore(pub usize);

impl ScoreSource for ZeroScore {
    fn dim(&self) -> usize {
        self.0
    }

    fn score(&self, _t: f64, _tau: f64, u: &PhaseEnsemble) -> Result<PhaseEnsemble> {
        Ok(PhaseEnsemble::zeros(u.n, u.d))
    }
}

/// Exact score of Gaussian-mixture data.
pub struct AnalyticScore {
    pub spec: GaussianMixtureSpec,
    pub params: KineticParams,
}

impl ScoreSource for AnalyticScore {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn score(&self, _t: f64, tau: f64, u: &PhaseEnsemble) -> Result<PhaseEnsemble> {
        analytic_score(&self.spec, &self.params, tau, u)
    }
}

/// Trained network score.
pub struct NetworkScore {
    pub net: NetParams<f32>,
    pub params: KineticParams,
    pub horizon: f64,
    pub parameterization: Parameterization,
}

impl NetworkScore {
    pub fn new(net: NetParams<f32>, params: KineticParams, horizon: f64, parameterization: Parameterization) -> Result<Self> {
        if net.arch.has_position_score() != (params.epsilon > 0.0) {
            return Err(Error::CheckpointMismatch(format!(
                "network output width {} does not fit epsilon = {}",
                net.arch.out_dim, params.epsilon
            )));
        }
        Ok(Self { net, params, horizon, parameterization })
    }
}

impl ScoreSource for NetworkScore {
    fn dim(&self) -> usize {
        self.net.arch.d
    }

    fn score(&self, t: f64, tau: f64, u: &PhaseEnsemble) -> Result<PhaseEnsemble> {
        let arch = self.net.arch;
        if u.d != arch.d {
            return Err(Error::CheckpointMismatch(format!("network dimension {} vs state dimension {}", arch.d, u.d)));
        }
        let (out, _) = forward_packed(&self.net, TimeInput::Shared(t / self.horizon), &pack_input::<f32>(u), false)?;
        let d = u.d;
        let od = arch.out_dim;
        let full = arch.has_position_score();
        let cov_inv = match self.parameterization {
            Parameterization::InverseCov => Some(hybrid_sigma_0t(&self.params, tau).inv()?.symmetrized()),
            Parameterization::Direct => None,
        };
        let mut s = PhaseEnsemble::zeros(u.n, d);
        for r in 0..u.n {
            let row = &out[r * od..(r + 1) * od];
            for i in 0..d {
                let (ax, av) = if full { (row[i] as f64, row[d + i] as f64) } else { (0.0, row[i] as f64) };
                let (sx, sv) = match cov_inv {
                    Some(p) => {
                        let (px, pv) = p.apply(ax, av);
                        (-px, -pv)
                    }
                    None => (ax, av),
                };
                // the position score of a velocity-only net is treated as zero
                s.x[r * d + i] = if full { sx } else { 0.0 };
                s.v[r * d + i] = sv;
            }
        }
        Ok(s)
    }
}

/// `Ã = −A − Σ_ε² Σ∞⁻¹`.
pub fn modified_drift(p: &KineticParams) -> Result<Block2> {
    Ok(-drift_matrix(p) - p.diffusion_sq() * sigma_infinity(p).inv()?)
}

/// Exact transition covariance of `dU = ÃU dt + Σ_ε dB` over time `delta`,
/// `∫₀^δ e^{sÃ} Σ_ε² e^{sÃᵀ} ds`.
pub fn modified_ou_covariance(p: &KineticParams, delta: f64) -> Result<Block2> {
    let at = modified_drift(p)?;
    let s2 = p.diffusion_sq();
    if delta * (at.spectral_norm() + 1.0) <= 0.5 {
        // Taylor series Σ_k δ^{k+1}/(k+1)! L^k(Σ²), L(X) = ÃX + XÃᵀ
        let mut term = s2;
        let mut coef = delta;
        let mut acc = s2.scale(delta);
        for k in 1..60 {
            term = at * term + term * at.transpose();
            coef *= delta / (k + 1) as f64;
            let inc = term.scale(coef);
            acc = acc + inc;
            if inc.max_abs() <= 1e-18 * acc.max_abs() {
                break;
            }
        }
        return Ok(acc.symmetrized());
    }
    // Ã Σ∞ + Σ∞ Ãᵀ = −Σ_ε², so the integral telescopes
    let sinf = sigma_infinity(p);
    Ok((sinf - (at.scale(delta)).expm().congruence(sinf)).symmetrized())
}

/// Per-run constants shared by all steps.
pub struct Stepper {
    pub params: KineticParams,
    pub horizon: f64,
    pub h: f64,
    pub form: ScoreForm,
    neg_a: Block2,
    a_tilde: Block2,
    prec_inf: Block2,
    /// Half-flow map and noise factor, when the schedule is the identity.
    fixed_half: Option<(Block2, Block2)>,
}

impl Stepper {
    pub fn new(p: &KineticParams, cfg: &SamplerConfig) -> Result<Self> {
        p.validate()?;
        cfg.validate()?;
        let h = cfg.horizon / cfg.steps as f64;
        let a_tilde = modified_drift(p)?;
        let fixed_half = match p.schedule {
            crate::kinetics::Schedule::Identity => Some(half_flow(p, a_tilde, 0.5 * h)?),
            _ => None,
        };
        Ok(Self {
            params: *p,
            horizon: cfg.horizon,
            h,
            form: cfg.score_form,
            neg_a: -drift_matrix(p),
            a_tilde,
            prec_inf: sigma_infinity(p).inv()?,
            fixed_half,
        })
    }

    fn score_at(&self, score: &dyn ScoreSource, t: f64, state: &PhaseEnsemble) -> Result<PhaseEnsemble> {
        score.score(t, self.params.schedule.tau(t), state)
    }

    /// One Euler–Maruyama step from grid index `k` with standard normal `z`.
    pub fn em_step(&self, state: &mut PhaseEnsemble, k: usize, score: &dyn ScoreSource, z: &PhaseEnsemble) -> Result<()> {
        let t = self.horizon - k as f64 * self.h;
        let beta = self.params.schedule.beta(t);
        let s = self.score_at(score, t, state)?;
        let (drift, add_prec) = match self.form {
            ScoreForm::Plain => (self.neg_a, false),
            ScoreForm::Modified => (self.a_tilde, true),
        };
        let hb = self.h * beta;
        let (ex, sv) = (self.params.epsilon * self.params.epsilon, self.params.sigma * self.params.sigma);
        let rh = hb.sqrt();
        let (nx, nv) = (rh * self.params.epsilon, rh * self.params.sigma);
        for j in 0..state.x.len() {
            let (x, v) = (state.x[j], state.v[j]);
            let (mut sx, mut svv) = (s.x[j], s.v[j]);
            if add_prec {
                let (px, pv) = self.prec_inf.apply(x, v);
                sx += px;
                svv += pv;
            }
            let (dx, dv) = drift.apply(x, v);
            state.x[j] = x + hb * (dx + ex * sx) + nx * z.x[j];
            state.v[j] = v + hb * (dv + sv * svv) + nv * z.v[j];
        }
        check_finite(state, k)
    }

    /// One Strang splitting step with two independent standard normal draws.
    pub fn splitting_step(
        &self,
        state: &mut PhaseEnsemble,
        k: usize,
        score: &dyn ScoreSource,
        z1: &PhaseEnsemble,
        z2: &PhaseEnsemble,
    ) -> Result<()> {
        let t_mid = self.horizon - (k as f64 + 0.5) * self.h;
        let beta = self.params.schedule.beta(t_mid);
        let (flow, noise) = match self.fixed_half {
            Some(fh) => fh,
            None => half_flow(&self.params, self.a_tilde, 0.5 * self.h * beta)?,
        };
        ou_move(state, flow, noise, z1);
        let s = self.score_at(score, t_mid, state)?;
        let hb = self.h * beta;
        let (ex, sv) = (self.params.epsilon * self.params.epsilon, self.params.sigma * self.params.sigma);
        for j in 0..state.x.len() {
            let (px, pv) = self.prec_inf.apply(state.x[j], state.v[j]);
            state.x[j] += hb * ex * (s.x[j] + px);
            state.v[j] += hb * sv * (s.v[j] + pv);
        }
        ou_move(state, flow, noise, z2);
        check_finite(state, k)
    }
}

fn half_flow(p: &KineticParams, a_tilde: Block2, delta: f64) -> Result<(Block2, Block2)> {
    Ok((a_tilde.scale(delta).expm(), modified_ou_covariance(p, delta)?.cholesky()?))
}

fn ou_move(state: &mut PhaseEnsemble, flow: Block2, noise: Block2, z: &PhaseEnsemble) {
    for j in 0..state.x.len() {
        let (mx, mv) = flow.apply(state.x[j], state.v[j]);
        let (nx, nv) = noise.apply(z.x[j], z.v[j]);
        state.x[j] = mx + nx;
        state.v[j] = mv + nv;
    }
}

fn check_finite(state: &PhaseEnsemble, k: usize) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step: k })
    }
}

/// Single Euler–Maruyama step at grid index `k` with step `h = T/N`.
pub fn em_step(
    p: &KineticParams,
    cfg: &SamplerConfig,
    state: &PhaseEnsemble,
    k: usize,
    score: &dyn ScoreSource,
    z: &PhaseEnsemble,
) -> Result<PhaseEnsemble> {
    let mut out = state.clone();
    Stepper::new(p, cfg)?.em_step(&mut out, k, score, z)?;
    Ok(out)
}

/// Single splitting step at grid index `k`.
pub fn splitting_step(
    p: &KineticParams,
    cfg: &SamplerConfig,
    state: &PhaseEnsemble,
    k: usize,
    score: &dyn ScoreSource,
    z1: &PhaseEnsemble,
    z2: &PhaseEnsemble,
) -> Result<PhaseEnsemble> {
    let mut out = state.clone();
    Stepper::new(p, cfg)?.splitting_step(&mut out, k, score, z1, z2)?;
    Ok(out)
}

/// Chains per RNG stream.
pub const CHAIN_BLOCK: usize = 256;

fn normal_ensemble(rng: &mut crate::rng::StreamRng, n: usize, d: usize) -> PhaseEnsemble {
    let mut z = PhaseEnsemble::zeros(n, d);
    fill_normal(rng, &mut z.x);
    fill_normal(rng, &mut z.v);
    z
}

/// Runs all chains and returns the terminal phase-space states.
pub fn sample_full(
    p: &KineticParams,
    cfg: &SamplerConfig,
    score: &dyn ScoreSource,
    n_samples: usize,
) -> Result<PhaseEnsemble> {
    let stepper = Stepper::new(p, cfg)?;
    let d = score.dim();
    let init = sigma_infinity(p).cholesky()?;
    let blocks: Vec<(usize, usize)> =
        (0..n_samples).step_by(CHAIN_BLOCK).map(|lo| (lo, (lo + CHAIN_BLOCK).min(n_samples))).collect();
    let parts = blocks
        .par_iter()
        .enumerate()
        .map(|(b, &(lo, hi))| -> Result<PhaseEnsemble> {
            let mut rng = substream(cfg.seed, b as u64);
            let n = hi - lo;
            let mut state = normal_ensemble(&mut rng, n, d);
            state.apply_block(init);
            for k in 0..cfg.steps {
                match cfg.integrator {
                    Integrator::Euler => {
                        let z = normal_ensemble(&mut rng, n, d);
                        stepper.em_step(&mut state, k, score, &z)?;
                    }
                    Integrator::Splitting => {
                        let z1 = normal_ensemble(&mut rng, n, d);
                        let z2 = normal_ensemble(&mut rng, n, d);
                        stepper.splitting_step(&mut state, k, score, &z1, &z2)?;
                    }
                }
            }
            Ok(state)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseEnsemble::concat(parts))
}

/// Generated positions, `n_samples × d` row-major; velocities are discarded.
pub fn sample(p: &KineticParams, cfg: &SamplerConfig, score: &dyn ScoreSource, n_samples: usize) -> Result<Vec<f64>> {
    Ok(sample_full(p, cfg, score, n_samples)?.x)
}
