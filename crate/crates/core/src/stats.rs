//! Small numeric helpers shared by the sampler, detector and tests.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn normal_ln_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

#[inline]
pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed credible interval at `level`.
pub fn credible_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
}

/// Monte Carlo standard error of the mean from non-overlapping batch means,
/// which stays honest for autocorrelated chains.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.clamp(2, xs.len().max(2));
    let size = xs.len() / n_batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(n_batches).map(mean).collect();
    (variance(&means) / means.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_pdf_at_mean() {
        let v = normal_ln_pdf(0.0, 0.0, 1.0);
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
        assert!((LN_2PI - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert_eq!(quantile_sorted(&v, 0.125), 1.5);
        let (lo, hi) = credible_interval(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5);
        assert_eq!((lo, hi), (2.0, 4.0));
    }
}
