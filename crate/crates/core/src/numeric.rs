//! Small numerical helpers shared by the solvers.

/// Largest magnitude passed to `atanh` in reporting code paths.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-15;

/// `log(exp(a) + exp(b))` without overflow. Either argument may be `-∞`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

/// `-p log p` with `0 log 0 = 0`.
#[inline]
pub fn xlogx_neg(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// Entropy of a ±1 variable with mean `m`, i.e. `H(Ber((1 + m) / 2))`.
#[inline]
pub fn spin_entropy(m: f64) -> f64 {
    xlogx_neg(0.5 * (1.0 + m)) + xlogx_neg(0.5 * (1.0 - m))
}

/// Entropy of a pair of ±1 variables with means `(a, b)` and correlation `c`.
#[inline]
pub fn pair_entropy(a: f64, b: f64, c: f64) -> f64 {
    pair_cells(a, b, c).iter().map(|&p| xlogx_neg(p)).sum()
}

/// Cell masses `p(x, y) = (1 + a x + b y + c x y) / 4` ordered
/// `(+,+), (+,-), (-,+), (-,-)`.
#[inline]
pub fn pair_cells(a: f64, b: f64, c: f64) -> [f64; 4] {
    [
        0.25 * (1.0 + a + b + c),
        0.25 * (1.0 + a - b - c),
        0.25 * (1.0 - a + b - c),
        0.25 * (1.0 - a - b + c),
    ]
}

#[inline]
pub fn clamped_atanh(x: f64) -> f64 {
    x.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh()
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Least-squares slope of `ln y` against `ln x` over points with `x, y > 0`.
/// Returns `None` with fewer than two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
