//! Bracketed scalar root isolation.

const MAX_STEPS: usize = 400;

/// Bisects `f` on `[lo, hi]` until the bracket is narrower than `1e-13`
/// (relative once the root exceeds 1), then takes one Newton step with `df`
/// and keeps it only if it stays inside the bracket and does not increase `|f|`.
///
/// Without a sign change the endpoint with the smaller `|f|` is returned.
pub(crate) fn bisect_polish(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return lo;
    }
    if f_hi == 0.0 {
        return hi;
    }
    if f_lo.signum() == f_hi.signum() {
        return if f_lo.abs() <= f_hi.abs() { lo } else { hi };
    }
    for _ in 0..MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let f_mid = f(mid);
    let slope = df(mid);
    if slope != 0.0 && slope.is_finite() {
        let step = mid - f_mid / slope;
        if step >= lo && step <= hi && f(step).abs() <= f_mid.abs() {
            return step;
        }
    }
    mid
}

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub(crate) fn golden_section_min(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The endpoints are candidates too: a max of linear pieces can be minimized at a boundary.
    [lo, mid, hi]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}
