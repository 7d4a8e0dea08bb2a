//! Closed-form linear algebra of the regularized kinetic Ornstein–Uhlenbeck
//! process.
//!
//! Every phase-space operator in this crate has the form `M ⊗ I_d` for a 2×2
//! matrix `M` whose first index is position and second is velocity. [`Block2`]
//! stores `M` and applies it coordinate-by-coordinate, so nothing here ever
//! materializes a `2d × 2d` matrix.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// A 2×2 real matrix standing for the operator `M ⊗ I_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block2 {
    pub m00: f64,
    pub m01: f64,
    pub m10: f64,
    pub m11: f64,
}

impl Block2 {
    pub const ZERO: Block2 = Block2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Block2 = Block2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self { m00, m01, m10, m11 }
    }

    pub const fn diag(p: f64, q: f64) -> Self {
        Self::new(p, 0.0, 0.0, q)
    }

    pub fn transpose(self) -> Self {
        Self::new(self.m00, self.m10, self.m01, self.m11)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.m00 * s, self.m01 * s, self.m10 * s, self.m11 * s)
    }

    pub fn trace(self) -> f64 {
        self.m00 + self.m11
    }

    pub fn det(self) -> f64 {
        self.m00 * self.m11 - self.m01 * self.m10
    }

    /// `M S Mᵀ`.
    pub fn congruence(self, s: Block2) -> Block2 {
        self * s * self.transpose()
    }

    /// Averages the off-diagonal entries. Used to scrub rounding asymmetry from
    /// products that are symmetric in exact arithmetic.
    pub fn symmetrized(self) -> Self {
        let off = 0.5 * (self.m01 + self.m10);
        Self::new(self.m00, off, off, self.m11)
    }

    pub fn is_finite(self) -> bool {
        self.m00.is_finite() && self.m01.is_finite() && self.m10.is_finite() && self.m11.is_finite()
    }

    pub fn max_abs_diff(self, other: Block2) -> f64 {
        (self.m00 - other.m00)
            .abs()
            .max((self.m01 - other.m01).abs())
            .max((self.m10 - other.m10).abs())
            .max((self.m11 - other.m11).abs())
    }

    pub fn max_abs(self) -> f64 {
        self.max_abs_diff(Block2::ZERO)
    }

    /// Applies the block to a single `(x, v)` pair.
    #[inline]
    pub fn apply(self, x: f64, v: f64) -> (f64, f64) {
        (self.m00 * x + self.m01 * v, self.m10 * x + self.m11 * v)
    }

    /// Applies `M ⊗ I_d` to a phase vector stored as separate position and
    /// velocity slices, in place.
    pub fn apply_in_place(self, x: &mut [f64], v: &mut [f64]) {
        debug_assert_eq!(x.len(), v.len());
        for (xi, vi) in x.iter_mut().zip(v.iter_mut()) {
            let (nx, nv) = self.apply(*xi, *vi);
            *xi = nx;
            *vi = nv;
        }
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(self) -> (f64, f64) {
        let s = self.symmetrized();
        let mean = 0.5 * (s.m00 + s.m11);
        let rad = (0.5 * (s.m00 - s.m11)).hypot(s.m01);
        (mean - rad, mean + rad)
    }

    /// Singular values `(σ_min, σ_max)`.
    pub fn singular_values(self) -> (f64, f64) {
        let e = 0.5 * (self.m00 + self.m11);
        let f = 0.5 * (self.m00 - self.m11);
        let g = 0.5 * (self.m10 + self.m01);
        let h = 0.5 * (self.m10 - self.m01);
        let q = e.hypot(h);
        let r = f.hypot(g);
        ((q - r).abs(), q + r)
    }

    pub fn spectral_norm(self) -> f64 {
        self.singular_values().1
    }

    pub fn inv(self) -> Result<Block2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularMatrix { det });
        }
        Ok(Block2::new(self.m11 / det, -self.m01 / det, -self.m10 / det, self.m00 / det))
    }

    /// Principal square root of a symmetric positive-definite block.
    pub fn sqrt(self) -> Result<Block2> {
        let det = self.det();
        if !(det > 0.0) || !(self.trace() > 0.0) {
            return Err(Error::SingularMatrix { det });
        }
        Ok(self.psd_sqrt_unchecked(det))
    }

    /// Square root that also accepts singular positive-semidefinite blocks
    /// (`det == 0`, `trace > 0`), e.g. `diag(0, v²)`.
    pub fn psd_sqrt(self) -> Result<Block2> {
        let det = self.det();
        if det < 0.0 || !(self.trace() > 0.0) {
            return Err(Error::SingularMatrix { det });
        }
        Ok(self.psd_sqrt_unchecked(det))
    }

    fn psd_sqrt_unchecked(self, det: f64) -> Block2 {
        let s = self.symmetrized();
        let root_det = det.sqrt();
        let denom = (s.trace() + 2.0 * root_det).sqrt();
        Block2::new(
            (s.m00 + root_det) / denom,
            s.m01 / denom,
            s.m10 / denom,
            (s.m11 + root_det) / denom,
        )
    }

    pub fn inv_sqrt(self) -> Result<Block2> {
        self.sqrt()?.inv()
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = self`. Accepts a zero leading
    /// entry when the whole first row vanishes.
    pub fn cholesky(self) -> Result<Block2> {
        let s = self.symmetrized();
        if s.m00 < 0.0 {
            return Err(Error::SingularMatrix { det: s.det() });
        }
        let l00 = s.m00.sqrt();
        let l10 = if l00 > 0.0 { s.m10 / l00 } else { 0.0 };
        let rem = s.m11 - l10 * l10;
        if rem < 0.0 {
            if rem > -1e-14 * s.m11.abs().max(1.0) {
                return Ok(Block2::new(l00, 0.0, l10, 0.0));
            }
            return Err(Error::SingularMatrix { det: s.det() });
        }
        Ok(Block2::new(l00, 0.0, l10, rem.sqrt()))
    }

    /// Matrix exponential of an arbitrary 2×2 block, via the
    /// Cayley–Hamilton form `e^{μ}(c·I + s·(M − μI))`.
    pub fn expm(self) -> Block2 {
        let mu = 0.5 * self.trace();
        let n = Block2::new(self.m00 - mu, self.m01, self.m10, self.m11 - mu);
        let delta_sq = n.m00 * n.m00 + n.m01 * n.m10;
        let (c, s) = if delta_sq.abs() < 1e-8 {
            let d2 = delta_sq;
            (1.0 + d2 / 2.0 + d2 * d2 / 24.0, 1.0 + d2 / 6.0 + d2 * d2 / 120.0)
        } else if delta_sq > 0.0 {
            let d = delta_sq.sqrt();
            (d.cosh(), d.sinh() / d)
        } else {
            let w = (-delta_sq).sqrt();
            (w.cos(), w.sin() / w)
        };
        let e = mu.exp();
        Block2::new(
            e * (c + s * n.m00),
            e * s * n.m01,
            e * s * n.m10,
            e * (c + s * n.m11),
        )
    }
}

impl Add for Block2 {
    type Output = Block2;
    fn add(self, o: Block2) -> Block2 {
        Block2::new(self.m00 + o.m00, self.m01 + o.m01, self.m10 + o.m10, self.m11 + o.m11)
    }
}

impl Sub for Block2 {
    type Output = Block2;
    fn sub(self, o: Block2) -> Block2 {
        Block2::new(self.m00 - o.m00, self.m01 - o.m01, self.m10 - o.m10, self.m11 - o.m11)
    }
}

impl Neg for Block2 {
    type Output = Block2;
    fn neg(self) -> Block2 {
        self.scale(-1.0)
    }
}

impl Mul for Block2 {
    type Output = Block2;
    fn mul(self, o: Block2) -> Block2 {
        Block2::new(
            self.m00 * o.m00 + self.m01 * o.m10,
            self.m00 * o.m01 + self.m01 * o.m11,
            self.m10 * o.m00 + self.m11 * o.m10,
            self.m10 * o.m01 + self.m11 * o.m11,
        )
    }
}

/// Time change of the forward process.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Schedule {
    #[default]
    Identity,
    /// `β(t) = β₁ t + β₀`, `τ(t) = β₁ t²/2 + β₀ t`.
    Affine { beta0: f64, beta1: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Identity => Ok(()),
            Schedule::Affine { beta0, beta1 } => {
                if beta0 >= 0.0 && beta1 >= 0.0 && beta0 + beta1 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!(
                        "affine schedule needs beta0, beta1 >= 0 with a positive sum, got ({beta0}, {beta1})"
                    )))
                }
            }
        }
    }

    /// Integrated rate `τ(t)`.
    pub fn tau(&self, t: f64) -> f64 {
        match *self {
            Schedule::Identity => t,
            Schedule::Affine { beta0, beta1 } => 0.5 * beta1 * t * t + beta0 * t,
        }
    }

    /// Instantaneous rate `β(t) = τ'(t)`.
    pub fn beta(&self, t: f64) -> f64 {
        match *self {
            Schedule::Identity => 1.0,
            Schedule::Affine { beta0, beta1 } => beta1 * t + beta0,
        }
    }
}

/// Free-function form of [`Schedule::tau`].
pub fn tau_of(schedule: &Schedule, t: f64) -> f64 {
    schedule.tau(t)
}

/// Scalar parameters of the forward diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    /// Drift scale.
    pub a: f64,
    /// Velocity noise amplitude.
    pub sigma: f64,
    /// Position noise amplitude; zero recovers the classical degenerate process.
    pub epsilon: f64,
    /// Standard deviation of the initial velocity.
    pub v: f64,
    pub schedule: Schedule,
}

impl KineticParams {
    pub fn new(a: f64, sigma: f64, epsilon: f64, v: f64) -> Result<Self> {
        Self::with_schedule(a, sigma, epsilon, v, Schedule::Identity)
    }

    pub fn with_schedule(a: f64, sigma: f64, epsilon: f64, v: f64, schedule: Schedule) -> Result<Self> {
        let p = Self { a, sigma, epsilon, v, schedule };
        p.validate()?;
        Ok(p)
    }

    /// Critically damped parameterization `σ = 2/√a`.
    pub fn critically_damped(a: f64, epsilon: f64, v: f64) -> Result<Self> {
        Self::new(a, 2.0 / a.sqrt(), epsilon, v)
    }

    /// The variance-controlled family `a(ε) = 1 − ε²/2`, `σ(ε) = √(4 + ε²)`,
    /// whose stationary law stays close to the standard Gaussian for small ε.
    pub fn controlled(epsilon: f64, v: f64) -> Result<Self> {
        let a = 1.0 - epsilon * epsilon / 2.0;
        if !(a > 0.0) {
            return Err(Error::Config(format!(
                "controlled setting needs epsilon^2 < 2, got epsilon = {epsilon} (a = {a})"
            )));
        }
        Self::new(a, (4.0 + epsilon * epsilon).sqrt(), epsilon, v)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.sigma > 0.0
            && self.epsilon >= 0.0
            && self.v > 0.0
            && self.a.is_finite()
            && self.sigma.is_finite()
            && self.epsilon.is_finite()
            && self.v.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!(
                "need a > 0, sigma > 0, epsilon >= 0, v > 0; got a={}, sigma={}, epsilon={}, v={}",
                self.a, self.sigma, self.epsilon, self.v
            )));
        }
        self.schedule.validate()
    }

    /// `Σ_ε = diag(ε, σ)`.
    pub fn diffusion(&self) -> Block2 {
        Block2::diag(self.epsilon, self.sigma)
    }

    /// `Σ_ε² = diag(ε², σ²)`.
    pub fn diffusion_sq(&self) -> Block2 {
        Block2::diag(self.epsilon * self.epsilon, self.sigma * self.sigma)
    }
}

/// Drift block `[[0, a²], [−1, −2a]]`.
pub fn drift_matrix(p: &KineticParams) -> Block2 {
    Block2::new(0.0, p.a * p.a, -1.0, -2.0 * p.a)
}

/// Closed-form `e^{tA}`.
pub fn exp_ta(p: &KineticParams, t: f64) -> Block2 {
    let a = p.a;
    let e = (-a * t).exp();
    Block2::new(e * (1.0 + a * t), e * a * a * t, -e * t, e * (1.0 - a * t))
}

/// Stationary covariance block of the forward process.
pub fn sigma_infinity(p: &KineticParams) -> Block2 {
    let (a, s2, e2) = (p.a, p.sigma * p.sigma, p.epsilon * p.epsilon);
    let off = -2.0 * e2 / (a * a);
    Block2::new(
        0.25 * (5.0 * e2 / a + a * s2),
        0.25 * off,
        0.25 * off,
        0.25 * (e2 + a * a * s2) / (a * a * a),
    )
}

/// `∫₀ᵗ sⁿ e^{−κs} ds` for `n ∈ {0, 1, 2}`, accurate for small `κt`.
fn exp_moment(n: u32, kappa: f64, t: f64) -> f64 {
    let x = kappa * t;
    let fact = [1.0, 1.0, 2.0][n as usize];
    // n!/κ^{n+1} · P(n+1, x) with P the regularized lower incomplete gamma.
    let scale = fact / kappa.powi(n as i32 + 1);
    let p = if x < 1.0 {
        // P(n+1, x) = e^{−x} Σ_{k>n} x^k / k!
        let mut term = 1.0;
        for k in 1..=(n + 1) {
            term *= x / k as f64;
        }
        let mut sum = term;
        let mut k = n + 1;
        loop {
            k += 1;
            term *= x / k as f64;
            if term <= 1e-17 * sum {
                break;
            }
            sum += term;
        }
        (-x).exp() * sum
    } else {
        let mut term = 1.0;
        let mut partial = 1.0;
        for k in 1..=n {
            term *= x / k as f64;
            partial += term;
        }
        1.0 - (-x).exp() * partial
    };
    scale * p
}

/// Transition covariance block `Σ₀,ₜ = ∫₀ᵗ e^{sA} Σ_ε² e^{sAᵀ} ds`.
///
/// Equal to `Σ∞ − e^{tA} Σ∞ e^{tAᵀ}`; evaluated here from the exact moments
/// of the integrand so that the `O(t³)` position variance of the `ε = 0`
/// process keeps full relative precision at small `t`. Exactly zero at `t = 0`.
pub fn sigma_0t(p: &KineticParams, t: f64) -> Block2 {
    if t <= 0.0 {
        return Block2::ZERO;
    }
    if !t.is_finite() {
        return sigma_infinity(p);
    }
    let (a, s2, e2) = (p.a, p.sigma * p.sigma, p.epsilon * p.epsilon);
    let kappa = 2.0 * a;
    let i0 = exp_moment(0, kappa, t);
    let i1 = exp_moment(1, kappa, t);
    let i2 = exp_moment(2, kappa, t);
    let a2 = a * a;
    let xx = a2 * a2 * s2 * i2 + e2 * (i0 + 2.0 * a * i1 + a2 * i2);
    let xv = a2 * s2 * (i1 - a * i2) - e2 * (i1 + a * i2);
    let vv = s2 * (i0 - 2.0 * a * i1 + a2 * i2) + e2 * i2;
    Block2::new(xx, xv, xv, vv)
}

/// `Σ∞ − e^{tA} Σ∞ e^{tAᵀ}`, the difference form of [`sigma_0t`].
pub fn sigma_0t_difference(p: &KineticParams, t: f64) -> Block2 {
    let s_inf = sigma_infinity(p);
    (s_inf - exp_ta(p, t).congruence(s_inf)).symmetrized()
}

/// Covariance of `U_t` given only the initial position:
/// `Σ₀,ₜ + e^{tA} diag(0, v²) e^{tAᵀ}`.
pub fn hybrid_sigma_0t(p: &KineticParams, t: f64) -> Block2 {
    let e = exp_ta(p, t);
    (sigma_0t(p, t) + e.congruence(Block2::diag(0.0, p.v * p.v))).symmetrized()
}

pub fn block_inv(b: Block2) -> Result<Block2> {
    b.inv()
}

pub fn block_sqrt(b: Block2) -> Result<Block2> {
    b.sqrt()
}

pub fn block_inv_sqrt(b: Block2) -> Result<Block2> {
    b.inv_sqrt()
}

pub fn block_det(b: Block2) -> f64 {
    b.det()
}
