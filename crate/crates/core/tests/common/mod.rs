//! Independent reference implementations used by the integration tests.
//!
//! Everything here works on plain `[[f64; 2]; 2]` arrays and shares no code
//! with the library's closed forms.

#![allow(dead_code)]

pub type M2 = [[f64; 2]; 2];

pub fn mul(a: M2, b: M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn add(a: M2, b: M2) -> M2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn scale(a: M2, s: f64) -> M2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn transpose(a: M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn max_abs(a: M2) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: M2, b: M2) -> f64 {
    max_abs(add(a, scale(b, -1.0)))
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: M2) -> M2 {
    let norm = max_abs(a) * 2.0;
    let mut s = 0;
    while norm / f64::powi(2.0, s) > 0.25 {
        s += 1;
    }
    let b = scale(a, 1.0 / f64::powi(2.0, s));
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for k in 1..30 {
        term = scale(mul(term, b), 1.0 / k as f64);
        sum = add(sum, term);
    }
    for _ in 0..s {
        sum = mul(sum, sum);
    }
    sum
}

pub fn drift(a: f64) -> M2 {
    [[0.0, a * a], [-1.0, -2.0 * a]]
}

/// Integrand `e^{sA} Σ² e^{sAᵀ}`.
pub fn cov_integrand(a: f64, sigma: f64, eps: f64, s: f64) -> M2 {
    let e = expm(scale(drift(a), s));
    mul(mul(e, [[eps * eps, 0.0], [0.0, sigma * sigma]]), transpose(e))
}

const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Composite 5-point Gauss–Legendre quadrature of a matrix-valued function.
pub fn integrate(f: impl Fn(f64) -> M2, lo: f64, hi: f64, panels: usize) -> M2 {
    let w = (hi - lo) / panels as f64;
    let mut acc = [[0.0; 2]; 2];
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * w;
        for (x, wt) in GL_X.iter().zip(GL_W) {
            acc = add(acc, scale(f(mid + 0.5 * w * x), 0.5 * w * wt));
        }
    }
    acc
}

/// `∫₀ᵗ e^{sA} Σ² e^{sAᵀ} ds` by quadrature.
pub fn sigma_0t_quad(a: f64, sigma: f64, eps: f64, t: f64) -> M2 {
    let panels = ((t * (1.0 + 2.0 * a + a * a)) / 0.05).ceil().max(4.0) as usize;
    integrate(|s| cov_integrand(a, sigma, eps, s), 0.0, t, panels)
}

/// Stationary covariance by quadrature over a horizon where the integrand
/// has decayed below machine precision.
pub fn sigma_inf_quad(a: f64, sigma: f64, eps: f64) -> M2 {
    let horizon = 40.0 / a;
    sigma_0t_quad(a, sigma, eps, horizon)
}

/// Eigenvalues of a symmetric 2×2, ascending.
pub fn sym_eig(m: M2) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    let off = 0.5 * (m[0][1] + m[1][0]);
    let r = (0.25 * diff * diff + off * off).sqrt();
    (0.5 * tr - r, 0.5 * tr + r)
}

/// Minimum over all permutations of `(1/n) Σ (x_i − y_π(i))²`, then `√`.
pub fn brute_force_w2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| xs.iter().zip(p).map(|(x, &j)| (x - ys[j]).powi(2)).sum::<f64>();
    let mut best = cost(&perm);
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (best / n as f64).sqrt()
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64)).collect()
}

/// Straight-line dense evaluation of the score MLP for a single row, written
/// independently of the library's batched gemm path.
pub fn dense_mlp(
    w: &[f64],
    d: usize,
    mid: usize,
    depth: usize,
    out_dim: usize,
    t: f64,
    u: &[f64],
) -> Vec<f64> {
    let e = mid + mid % 2;
    let half = e / 2;
    let mut emb = vec![0.0; e];
    for k in 0..half {
        let f = if half > 1 { 10f64.powf(4.0 * k as f64 / (half - 1) as f64) } else { 1.0 };
        emb[k] = (f * t).sin();
        emb[half + k] = (f * t).cos();
    }
    let mut off = 0;
    let mut take = |n: usize| {
        let s = off;
        off += n;
        s
    };
    let w_in = take(2 * d * mid);
    let b_in = take(mid);
    let pw = (depth + 1) * mid;
    let w_t = take(e * pw);
    let b_t = take(pw);
    let hidden: Vec<(usize, usize)> = (0..depth).map(|_| (take(mid * mid), take(mid))).collect();
    let w_out = take(mid * out_dim);
    let b_out = take(out_dim);

    let proj = |k: usize, j: usize| -> f64 {
        let col = k * mid + j;
        b_t_val(w, b_t, col) + (0..e).map(|q| emb[q] * w[w_t + q * pw + col]).sum::<f64>()
    };
    fn b_t_val(w: &[f64], b: usize, col: usize) -> f64 {
        w[b + col]
    }
    let mut h: Vec<f64> = (0..mid)
        .map(|j| w[b_in + j] + (0..2 * d).map(|i| u[i] * w[w_in + i * mid + j]).sum::<f64>() + proj(0, j))
        .collect();
    for (k, &(wk, bk)) in hidden.iter().enumerate() {
        h = (0..mid)
            .map(|j| {
                let z = w[bk + j] + (0..mid).map(|i| h[i] * w[wk + i * mid + j]).sum::<f64>();
                z / (1.0 + (-z).exp()) + proj(k + 1, j)
            })
            .collect();
    }
    (0..out_dim)
        .map(|j| w[b_out + j] + (0..mid).map(|i| h[i] * w[w_out + i * out_dim + j]).sum::<f64>())
        .collect()
}
