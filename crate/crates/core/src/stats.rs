//! Small population statistics with a zero-denominator convention: an empty
//! input or a zero denominator yields 0, never NaN.

pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    ratio(xs.iter().sum(), xs.len() as f64)
}

pub fn min(xs: &[f64]) -> f64 {
    xs.iter().copied().reduce(f64::min).unwrap_or(0.0)
}

pub fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().reduce(f64::max).unwrap_or(0.0)
}

pub fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()).sqrt()
}

/// Shannon entropy (nats) of a frequency vector.
pub fn shannon_entropy(freqs: &[f64]) -> f64 {
    let total: f64 = freqs.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let h: f64 = freqs
        .iter()
        .filter(|&&f| f > 0.0)
        .map(|&f| {
            let p = f / total;
            -p * p.ln()
        })
        .sum();
    // a single bucket gives -1·ln 1 = -0.0
    h.max(0.0)
}

/// Gini coefficient `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n Σ xᵢ)` of non-negative values,
/// evaluated in O(n log n) via the sorted-rank identity
/// `Σᵢ (2i − n − 1) x₍ᵢ₎ / (n Σ x)`.
pub fn gini(xs: &[f64]) -> f64 {
    let n = xs.len();
    let total: f64 = xs.iter().sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x)
        .sum();
    (weighted / (n as f64 * total)).max(0.0)
}
