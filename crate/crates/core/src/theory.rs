//! Computable constants of the Wasserstein error bounds and numerical checks
//! of the covariance eigenvalue bounds.
//!
//! Time grids follow the sampler: `t_k = kT/N` for `k = 0..=N`.

use crate::error::{Error, Result};
use crate::kinetics::{drift_matrix, exp_ta, sigma_0t, Block2, KineticParams};

/// Regularity of the data: `α₀ I ≼ ∇²V ≼ L₀ I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityParams {
    pub kinetic: KineticParams,
    pub alpha0: f64,
    pub l0: f64,
}

impl RegularityParams {
    pub fn new(kinetic: KineticParams, alpha0: f64, l0: f64) -> Result<Self> {
        kinetic.validate()?;
        if !(alpha0 > 0.0 && alpha0 <= l0 && l0.is_finite()) {
            return Err(Error::InvalidParams(format!("need 0 < alpha0 <= L0, got {alpha0}, {l0}")));
        }
        Ok(Self { kinetic, alpha0, l0 })
    }
}

fn min_max_a(a: f64) -> (f64, f64) {
    (a.min(1.0 / a), a.max(1.0 / a))
}

/// Strong log-concavity constant of `p_t`:
/// `(1/((α₀ ∧ v⁻²) σ_min²(e^{−tA})) + λ_max(Σ₀,ₜ))⁻¹`.
pub fn alpha_t(rp: &RegularityParams, t: f64) -> f64 {
    let p = &rp.kinetic;
    let base = rp.alpha0.min(1.0 / (p.v * p.v));
    // σ_min(e^{−tA}) = 1/σ_max(e^{tA})
    let smax = exp_ta(p, t).singular_values().1;
    let smin = 1.0 / smax;
    let lmax = sigma_0t(p, t).sym_eigenvalues().1.max(0.0);
    1.0 / (1.0 / (base * smin * smin) + lmax)
}

/// First branch of the smoothness bound, `(1 + (a+1)² t)² e^{2at} max{L₀, v⁻²}`.
pub fn lipschitz_h1(rp: &RegularityParams, t: f64) -> f64 {
    let p = &rp.kinetic;
    let a = p.a;
    (1.0 + (a + 1.0).powi(2) * t).powi(2) * (2.0 * a * t).exp() * rp.l0.max(1.0 / (p.v * p.v))
}

/// Second branch, `4 / ⌊σ² min{a,1/a} − (σ² max{a,1/a} + 5ε²/a) e^{−2at}⌋₊`;
/// infinite when the bracket is not positive.
pub fn lipschitz_h2(p: &KineticParams, t: f64) -> f64 {
    let (lo, hi) = min_max_a(p.a);
    let s2 = p.sigma * p.sigma;
    let den = s2 * lo - (s2 * hi + 5.0 * p.epsilon * p.epsilon / p.a) * (-2.0 * p.a * t).exp();
    if den > 0.0 {
        4.0 / den
    } else {
        f64::INFINITY
    }
}

/// Log-smoothness constant `L_t = min{𝔥₁, 𝔥₂}`.
pub fn lipschitz_lt(rp: &RegularityParams, t: f64) -> f64 {
    lipschitz_h1(rp, t).min(lipschitz_h2(&rp.kinetic, t))
}

fn grid(horizon: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |k| horizon * k as f64 / n as f64)
}

/// Right-hand side of the admissible step-size condition. Nonpositive values
/// mean no step size satisfies the sufficient condition.
pub fn admissible_h(rp: &RegularityParams, horizon: f64, n_grid: usize) -> f64 {
    let p = &rp.kinetic;
    let (s, e, a) = (p.sigma, p.epsilon, p.a);
    let min_alpha = grid(horizon, n_grid).map(|t| alpha_t(rp, t)).fold(f64::INFINITY, f64::min);
    let max_l = grid(horizon, n_grid).map(|t| lipschitz_lt(rp, t)).fold(0.0, f64::max);
    let na = drift_matrix(p).spectral_norm();
    let num = 2.0 * min_alpha * (s * s).min(e * e) - (s - e).powi(2) * max_l - (a + 1.0).powi(2);
    let den = na * na + (e.powi(4) + s.powi(4)) * max_l * max_l + 2.0 * (s * s).max(e * e) * na * max_l;
    num / den
}

/// `K_T = 1 + max{a+1, a(a+1)} T`.
pub fn contraction_kt(p: &KineticParams, horizon: f64) -> f64 {
    1.0 + (p.a + 1.0).max(p.a * (p.a + 1.0)) * horizon
}

/// `Λ*_ε(T)`, the minimum of its two branches. The second branch uses the
/// same `5ε²/a` term as the smoothness bound and is infinite when its
/// denominator is not positive.
pub fn lambda_star(p: &KineticParams, horizon: f64) -> f64 {
    let (a, s, e) = (p.a, p.sigma, p.epsilon);
    let m = (e * e).min(s * s);
    let first = if m > 0.0 { 2.0 * a * (1.0 + (a + 1.0).powi(2) * horizon).powi(2) / m } else { f64::INFINITY };
    let (lo, hi) = min_max_a(a);
    let den = s * s * lo - (s * s * hi + 5.0 * e * e / a) * (-2.0 * a * horizon).exp();
    let second = if den > 0.0 { 4.0 / den } else { f64::INFINITY };
    first.min(second)
}

/// `B_ε = max_{s∈[0,T]} (1 + (a+1)² s)² e^{−2as} E‖U₀‖² + (d/2)(σ² max{a,1/a} + 5ε²/a)`
/// with `E‖U₀‖² = data_second_moment + d v²`.
pub fn b_epsilon(p: &KineticParams, horizon: f64, d: usize, data_second_moment: f64) -> f64 {
    let a = p.a;
    let c = (a + 1.0).powi(2);
    let f = |s: f64| (1.0 + c * s).powi(2) * (-2.0 * a * s).exp();
    // f' vanishes at s* = 1/a − 1/c; f increases before it and decreases after
    let s_star = (1.0 / a - 1.0 / c).clamp(0.0, horizon);
    let u0 = data_second_moment + d as f64 * p.v * p.v;
    let (_, hi) = min_max_a(a);
    f(s_star) * u0 + 0.5 * d as f64 * (p.sigma * p.sigma * hi + 5.0 * p.epsilon * p.epsilon / a)
}

/// Terms of the Wasserstein bound: mixing factor, approximation and
/// discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub mixing: f64,
    pub approx: f64,
    pub discretization: f64,
    pub c_a: f64,
    pub b_eps: f64,
    pub lambda_star: f64,
    pub sup_l: f64,
}

/// Grid used for `sup_t L_t` in `C_a(ε)`.
pub const SUP_GRID: usize = 4096;

/// Evaluates `K_T e^{−aT}`, `σ² M` and `√h C_a(ε)` with
/// `C_a(ε) = (2‖A‖⁴ B_ε + 4d(a²σ² + ε)² Λ*) h + 4d(‖A‖² + σ⁴ sup L²)`.
pub fn wasserstein_bound_terms(
    rp: &RegularityParams,
    horizon: f64,
    h: f64,
    m: f64,
    d: usize,
    data_second_moment: f64,
) -> BoundTerms {
    let p = &rp.kinetic;
    let na = drift_matrix(p).spectral_norm();
    let b_eps = b_epsilon(p, horizon, d, data_second_moment);
    let ls = lambda_star(p, horizon);
    let sup_l = grid(horizon, SUP_GRID).map(|t| lipschitz_lt(rp, t)).fold(0.0, f64::max);
    let df = d as f64;
    let s2 = p.sigma * p.sigma;
    let c_a = (2.0 * na.powi(4) * b_eps + 4.0 * df * (p.a * p.a * s2 + p.epsilon).powi(2) * ls) * h
        + 4.0 * df * (na * na + s2 * s2 * sup_l * sup_l);
    BoundTerms {
        mixing: contraction_kt(p, horizon) * (-p.a * horizon).exp(),
        approx: s2 * m,
        discretization: h.sqrt() * c_a,
        c_a,
        b_eps,
        lambda_star: ls,
        sup_l,
    }
}

/// Eigenvalue bounds of `Σ₀,ₜ` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBoundCheck {
    pub t: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lower_decay: f64,
    pub lower_growth: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl SigmaBoundCheck {
    pub fn ok(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

/// Relative slack for the comparisons, to absorb rounding in exact ties.
const BOUND_SLACK: f64 = 1e-12;

/// Compares the exact eigenvalues of `Σ₀,ₜ` with
/// `λ_min ≥ max{σ²/4 min{a,1/a} − (σ²/4 max{a,1/a} + 5ε²/(4a)) e^{−2at},
///              min{ε²,σ²}(1 − e^{−2at}) / (2a(1 + (a+1)²t)²)}` and
/// `λ_max ≤ σ²/4 max{a,1/a} + 5ε²/(4a)`.
pub fn verify_sigma_bounds(p: &KineticParams, t_grid: &[f64]) -> Vec<SigmaBoundCheck> {
    let (a, s2, e2) = (p.a, p.sigma * p.sigma, p.epsilon * p.epsilon);
    let (lo, hi) = min_max_a(a);
    let upper = 0.25 * s2 * hi + 1.25 * e2 / a;
    t_grid
        .iter()
        .map(|&t| {
            let (lmin, lmax) = sigma_0t(p, t).sym_eigenvalues();
            let decay = (-2.0 * a * t).exp();
            let lower_decay = 0.25 * s2 * lo - (0.25 * s2 * hi + 1.25 * e2 / a) * decay;
            let lower_growth = e2.min(s2) * (1.0 - decay) / (2.0 * a * (1.0 + (a + 1.0).powi(2) * t).powi(2));
            let lower = lower_decay.max(lower_growth);
            let tol = BOUND_SLACK * upper;
            SigmaBoundCheck {
                t,
                lambda_min: lmin,
                lambda_max: lmax,
                lower_decay,
                lower_growth,
                upper,
                lower_ok: lower <= lmin + tol,
                upper_ok: lmax <= upper + tol,
            }
        })
        .collect()
}

/// Squared Bures–Wasserstein distance between two 2-D Gaussians.
pub fn bures_w2_sq(m1: (f64, f64), c1: Block2, m2: (f64, f64), c2: Block2) -> Result<f64> {
    let r1 = c1.psd_sqrt()?;
    let cross = r1.congruence(c2).symmetrized();
    let cross_root = if cross.trace() > 0.0 { cross.psd_sqrt()?.trace() } else { 0.0 };
    let dm = (m1.0 - m2.0).powi(2) + (m1.1 - m2.1).powi(2);
    Ok((dm + c1.trace() + c2.trace() - 2.0 * cross_root).max(0.0))
}

/// All constants at one parameter point, as reported by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPoint {
    pub a: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub v: f64,
    pub alpha0: f64,
    pub l0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub admissible_h: f64,
    pub k_t: f64,
    pub terms: BoundTerms,
    pub sigma_bounds_ok: bool,
    pub sigma_bound_violations: usize,
}

pub fn evaluate_point(
    rp: &RegularityParams,
    horizon: f64,
    steps: usize,
    m: f64,
    d: usize,
    data_second_moment: f64,
) -> TheoryPoint {
    let p = rp.kinetic;
    let h = horizon / steps as f64;
    let ts: Vec<f64> = grid(horizon, steps).collect();
    // the eigenvalue bounds only apply for ε > 0
    let checks = if p.epsilon > 0.0 { verify_sigma_bounds(&p, &ts) } else { Vec::new() };
    let violations = checks.iter().filter(|c| !c.ok()).count();
    TheoryPoint {
        a: p.a,
        sigma: p.sigma,
        epsilon: p.epsilon,
        v: p.v,
        alpha0: rp.alpha0,
        l0: rp.l0,
        horizon,
        steps,
        admissible_h: admissible_h(rp, horizon, steps),
        k_t: contraction_kt(&p, horizon),
        terms: wasserstein_bound_terms(rp, horizon, h, m, d, data_second_moment),
        sigma_bounds_ok: violations == 0,
        sigma_bound_violations: violations,
    }
}
