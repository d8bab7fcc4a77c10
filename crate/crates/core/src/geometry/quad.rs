//! Gauss–Legendre quadrature, fixed and adaptive.

// 7-point rule on [-1, 1].
const GL7_X: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_W: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// Fixed 7-point Gauss–Legendre estimate of the integral of `f` over `[a, b]`.
pub fn gauss7<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for k in 0..7 {
        sum += GL7_W[k] * f(mid + half * GL7_X[k]);
    }
    sum * half
}

/// Adaptive Gauss–Legendre: bisect until the two halves agree with the
/// whole-interval estimate to within `rel_tol` (relative) or `abs_floor`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    let whole = gauss7(f, a, b);
    refine(f, a, b, whole, rel_tol, abs_floor, 0)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    abs_floor: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss7(f, a, m);
    let right = gauss7(f, m, b);
    let split = left + right;
    let err = (split - whole).abs();
    if depth >= 40 || err <= (rel_tol * split.abs()).max(abs_floor) {
        return split;
    }
    refine(f, a, m, left, rel_tol, abs_floor * 0.5, depth + 1)
        + refine(f, m, b, right, rel_tol, abs_floor * 0.5, depth + 1)
}
