//! Small numeric helpers shared across modules.

/// Arithmetic mean. Returns NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator). Zero for n < 2.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Sample variance (n-1 denominator). Zero for n < 2.
pub fn sample_var(xs: &[f64]) -> f64 {
    let s = sample_sd(xs);
    s * s
}

/// Median of a sample. NaN on empty input.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linearly interpolated quantile (numpy's default convention).
/// `q` in [0, 1]; input need not be sorted.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    quantile_sorted(&v, q)
}

/// Quantile of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the Abramowitz-Stegun 26.2.17 polynomial
/// (absolute error below 7.5e-8, ample for Wald p-values and the Huber
/// consistency constant).
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    let t = 1.0 / (1.0 + 0.2316419 * x);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    1.0 - normal_pdf(x) * poly
}

/// Ordinary least squares of y on x: returns (intercept, slope,
/// slope standard error). Requires at least two distinct x values.
pub fn ols_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if n > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - (intercept + slope * a);
                r * r
            })
            .sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some((intercept, slope, se))
}

/// Gaussian kernel density estimate on an evenly spaced grid.
/// Bandwidth is Silverman's rule; returns (grid, density).
pub fn kde(xs: &[f64], n_grid: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(!xs.is_empty());
    let n = xs.len() as f64;
    let sd = sample_sd(xs);
    let iqr = quantile(xs, 0.75) - quantile(xs, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = if spread > 0.0 {
        0.9 * spread * n.powf(-0.2)
    } else {
        // Degenerate sample: a narrow bump around the single value.
        1e-3 * (1.0 + xs[0].abs())
    };
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let step = (hi - lo) / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| lo + i as f64 * step).collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|&g| xs.iter().map(|&x| normal_pdf((g - x) / bw)).sum::<f64>() / (n * bw))
        .collect();
    (grid, dens)
}

/// Two-sided Kolmogorov-Smirnov distance between a sample and the uniform
/// distribution on [0, 1].
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in ks_uniform"));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let ecdf_hi = (i + 1) as f64 / n;
        let ecdf_lo = i as f64 / n;
        d = d.max((ecdf_hi - x).abs()).max((x - ecdf_lo).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_cdf_reference_values() {
        // Reference values to full displayed precision.
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(1.5), 0.9331927987311419, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(-2.0), 0.022750131948179195, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_cdf(3.5), 0.9997673709209645, epsilon = 1e-7);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&xs, 0.0), 1.0);
        assert_abs_diff_eq!(quantile(&xs, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&xs, 0.5), 2.5);
        assert_abs_diff_eq!(quantile(&xs, 0.25), 1.75);
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let (b0, b1, se) = ols_line(&x, &y).unwrap();
        assert_abs_diff_eq!(b0, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(se, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_detects_nonuniform() {
        let uniformish: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&uniformish) < 0.01);
        let clumped = vec![0.5; 100];
        assert!(ks_uniform(&clumped) > 0.4);
    }

    #[test]
    fn median_even_odd() {
        assert_abs_diff_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_abs_diff_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
