//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's solvers or variance formulas.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Plain bisection on a sign change; no polishing.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cubic whose root in `(0, c/(c+2))` is the optimal zero-output probability, `c = e^ε`.
pub fn p00_cubic(eps: f64, a: f64) -> f64 {
    let c = eps.exp();
    2.0 * a.powi(3)
        + a * a * (-c * c - 5.0 - 4.0 * c)
        + a * (7.0 * c - 4.0 * c * c - c.powi(3))
        + (2.0 * c.powi(3) - 4.0 * c * c)
}

/// Trigonometric closed form of the middle-regime root.
pub fn p00_trig(eps: f64) -> f64 {
    let c = eps.exp();
    let d0 = c.powi(4) + 14.0 * c.powi(3) + 50.0 * c * c - 2.0 * c + 25.0;
    let d1 =
        -2.0 * c.powi(6) - 42.0 * c.powi(5) - 270.0 * c.powi(4) - 404.0 * c.powi(3) - 918.0 * c * c
            + 30.0 * c
            - 250.0;
    let angle = (-d1 / (2.0 * d0.powf(1.5))).acos();
    -(1.0 / 6.0) * (-c * c - 4.0 * c - 5.0 + 2.0 * d0.sqrt() * (PI / 3.0 + angle / 3.0).cos())
}

pub fn t_quartic(eps: f64, t: f64) -> f64 {
    let c = eps.exp();
    t.powi(4) + 2.0 * c * t.powi(3) - 2.0 * c * t - c * c
}

/// Radical root of the quartic at `ε = ln √2`.
pub fn t_opt_at_ln_sqrt2() -> f64 {
    ((3.0 + 2.0 * 3f64.sqrt()).sqrt() - 1.0) / 2f64.sqrt()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Variance of the piecewise mechanism at `x`, integrating its density piece by piece.
pub fn piecewise_variance_by_quadrature(eps: f64, t: f64, x: f64) -> f64 {
    let c = eps.exp();
    let big_a = (c + t) * (t + 1.0) / (t * (c - 1.0));
    let left = (c + t) * (x * t - 1.0) / (t * (c - 1.0));
    let right = (c + t) * (x * t + 1.0) / (t * (c - 1.0));
    let tail = t * (c - 1.0) / (2.0 * (t + c) * (t + c));
    let center = c * tail;
    let sq = |y: f64| y * y;
    let n = 2000;
    let mass = center * (right - left) + tail * (2.0 * big_a - (right - left));
    assert!(
        (mass - 1.0).abs() < 1e-12,
        "density does not integrate to one: {mass}"
    );
    let second = center * simpson(sq, left, right, n)
        + tail * simpson(sq, -big_a, left, n)
        + tail * simpson(sq, right, big_a, n);
    second - x * x
}

/// Atom probabilities `(P[−C], P[0], P[+C])` and `C` of the three-output mechanism,
/// derived from unbiasedness and the zero-output rule `P[0|x] = a − a(1 − e^{−ε})|x|`.
pub fn three_outputs_law(eps: f64, a: f64, x: f64) -> ([f64; 3], f64) {
    let c = eps.exp();
    let big_c = (c + 1.0) / ((c - 1.0) * (1.0 - a / c));
    let zero = a - a * (1.0 - 1.0 / c) * x.abs();
    let nonzero = 1.0 - zero;
    let pos = 0.5 * (nonzero + x / big_c);
    let neg = 0.5 * (nonzero - x / big_c);
    ([neg, zero, pos], big_c)
}

pub fn three_outputs_variance(eps: f64, a: f64, x: f64) -> f64 {
    let ([neg, _, pos], big_c) = three_outputs_law(eps, a, x);
    big_c * big_c * (neg + pos) - x * x
}

pub fn duchi_variance(eps: f64, x: f64) -> f64 {
    let c = eps.exp();
    let m = (c + 1.0) / (c - 1.0);
    m * m - x * x
}

/// `max` over a uniform grid of `f` on `[-1, 1]` with spacing `step`.
pub fn grid_max(f: impl Fn(f64) -> f64, step: f64) -> f64 {
    let n = (2.0 / step).round() as usize;
    (0..=n)
        .map(|i| f(-1.0 + i as f64 * step))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean of `N(mu, sigma²)` truncated to `[-1, 1]`, by quadrature.
pub fn truncated_normal_mean(mu: f64, sigma: f64) -> f64 {
    let pdf = |x: f64| (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp();
    simpson(|x| x * pdf(x), -1.0, 1.0, 20_000) / simpson(pdf, -1.0, 1.0, 20_000)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least-squares fit of `y ≈ wᵀx + bias` via the normal equations; returns `(w, bias)`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = rows[0].len() + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in rows.iter().zip(y) {
        let aug: Vec<f64> = r.iter().copied().chain([1.0]).collect();
        for i in 0..p {
            xty[i] += aug[i] * yi;
            for j in 0..p {
                xtx[i][j] += aug[i] * aug[j];
            }
        }
    }
    let mut sol = solve_linear(xtx, xty);
    let bias = sol.pop().unwrap();
    (sol, bias)
}

/// Sample mean, variance, and their standard errors.
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    Moments {
        mean,
        var,
        se_mean: (var / n).sqrt(),
        se_var: ((m4 - var * var) / n).max(0.0).sqrt(),
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
