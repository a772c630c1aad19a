//! Scalar search primitives: golden-section minimization and a bisection
//! for the edge of a one-sided feasible interval.

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Stops once the bracket is narrower than `tol_x` (or after `max_evals`
/// function evaluations) and returns `(x_min, f_min)`.
pub fn golden_section_min(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol_x: f64,
    max_evals: usize,
) -> (f64, f64) {
    const PHI: f64 = 1.618_033_988_749_895;
    const RESP: f64 = 2.0 - PHI;

    if b <= a {
        return (a, f(a));
    }
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;

    while evals < max_evals && (b - a).abs() > tol_x {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }

    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Largest `x` in `[lo, hi]` with `feasible(x)` true, assuming the feasible
/// set is an interval containing `lo`. Returns `lo` if even `lo` fails.
pub fn bisect_feasible_edge(
    feasible: impl Fn(f64) -> bool,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> f64 {
    if !feasible(lo) {
        return lo;
    }
    if feasible(hi) {
        return hi;
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
