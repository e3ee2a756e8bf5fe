//! Frequentist toolbox: logistic regression, permutation tests, bootstrap
//! confidence intervals.
//!
//! Resampling loops draw from fixed-size chunk substreams of the caller's
//! seed, so p-values and intervals are reproducible and independent of the
//! thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{mean, normal_cdf, quantile_sorted};
use crate::rng;
use crate::{Error, Result};

/// Standard logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Maximum-likelihood logistic fit of a binary outcome on one predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
    /// Two-sided Wald p-values.
    pub intercept_p: f64,
    pub slope_p: f64,
    pub converged: bool,
    pub n: usize,
    pub iterations: usize,
    /// Present when the fit is unreliable (e.g. complete separation).
    pub diagnostic: Option<String>,
}

impl LogisticFit {
    /// Fitted probability at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        predict_probability(self.intercept, self.slope, x)
    }
}

/// `Pr(y = 1 | x)` under coefficients `(intercept, slope)`.
pub fn predict_probability(intercept: f64, slope: f64, x: f64) -> f64 {
    sigmoid(intercept + slope * x)
}

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;

fn log_likelihood(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let eta = b0 + b1 * xi;
            // log sigma(eta) and log(1 - sigma(eta)) in a stable form
            let log_p = -(1.0 + (-eta).exp()).ln();
            let log_q = -eta + log_p;
            if yi {
                log_p
            } else {
                log_q
            }
        })
        .sum()
}

/// Iteratively reweighted least squares for `Pr(y=1|x) = sigmoid(b0 + b1 x)`,
/// with step-halving on likelihood decrease. Standard errors come from the
/// inverse observed information; p-values are two-sided Wald tests.
///
/// Complete separation yields `converged = false` with a diagnostic; a
/// single-class outcome is an error.
pub fn fit_logistic(x: &[f64], y: &[bool]) -> Result<LogisticFit> {
    if x.len() != y.len() {
        return Err(Error::Config("logistic fit needs x and y of equal length".into()));
    }
    let n = x.len();
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Data("logistic fit needs both outcome classes present".into()));
    }

    // Complete separation is detectable directly with one predictor.
    let max_neg =
        x.iter().zip(y).filter(|(_, &b)| !b).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
    let min_neg =
        x.iter().zip(y).filter(|(_, &b)| !b).map(|(&v, _)| v).fold(f64::INFINITY, f64::min);
    let max_pos =
        x.iter().zip(y).filter(|(_, &b)| b).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
    let min_pos =
        x.iter().zip(y).filter(|(_, &b)| b).map(|(&v, _)| v).fold(f64::INFINITY, f64::min);
    let separated = max_neg < min_pos || max_pos < min_neg;

    let base_rate = n_pos as f64 / n as f64;
    let mut b0 = (base_rate / (1.0 - base_rate)).ln();
    let mut b1 = 0.0;
    let mut ll = log_likelihood(x, y, b0, b1);
    let mut info = [[0.0f64; 2]; 2];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=IRLS_MAX_ITER {
        iterations = iter;
        // Weighted normal equations for the working response.
        let mut a00 = 0.0;
        let mut a01 = 0.0;
        let mut a11 = 0.0;
        let mut r0 = 0.0;
        let mut r1 = 0.0;
        for (&xi, &yi) in x.iter().zip(y) {
            let eta = b0 + b1 * xi;
            let mu = sigmoid(eta);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let z = eta + ((yi as u8 as f64) - mu) / w;
            a00 += w;
            a01 += w * xi;
            a11 += w * xi * xi;
            r0 += w * z;
            r1 += w * z * xi;
        }
        let det = a00 * a11 - a01 * a01;
        if det.abs() < 1e-300 {
            return Err(Error::Numerical("singular information matrix in logistic fit".into()));
        }
        info = [[a00, a01], [a01, a11]];
        let nb0 = (a11 * r0 - a01 * r1) / det;
        let nb1 = (a00 * r1 - a01 * r0) / det;

        // Step-halving keeps the likelihood non-decreasing.
        let mut step = 1.0;
        let mut best = (b0, b1, ll);
        for _ in 0..30 {
            let c0 = b0 + step * (nb0 - b0);
            let c1 = b1 + step * (nb1 - b1);
            let cll = log_likelihood(x, y, c0, c1);
            if cll.is_finite() && cll >= ll {
                best = (c0, c1, cll);
                break;
            }
            step *= 0.5;
        }
        let (c0, c1, cll) = best;
        let improved = cll - ll;
        b0 = c0;
        b1 = c1;
        ll = cll;
        if improved.abs() < IRLS_TOL {
            converged = true;
            break;
        }
    }

    let det = info[0][0] * info[1][1] - info[0][1] * info[0][1];
    let var0 = info[1][1] / det;
    let var1 = info[0][0] / det;
    let intercept_se = var0.max(0.0).sqrt();
    let slope_se = var1.max(0.0).sqrt();
    let wald_p = |b: f64, se: f64| {
        if se > 0.0 {
            2.0 * (1.0 - normal_cdf((b / se).abs()))
        } else {
            f64::NAN
        }
    };

    let diagnostic = if separated {
        Some("complete separation: coefficients diverge and the fit is unreliable".to_string())
    } else if !converged {
        Some(format!("no convergence after {IRLS_MAX_ITER} iterations"))
    } else {
        None
    };

    Ok(LogisticFit {
        intercept: b0,
        slope: b1,
        intercept_se,
        slope_se,
        intercept_p: wald_p(b0, intercept_se),
        slope_p: wald_p(b1, slope_se),
        converged: converged && !separated,
        n,
        iterations,
        diagnostic,
    })
}

/// Result of a two-sided permutation test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Two-sided permutation test for the difference of means.
///
/// `p = (1 + #{permuted |stat| >= |observed|}) / (n_permutations + 1)`,
/// never below `1 / (n_permutations + 1)`.
pub fn permutation_test(
    group_a: &[f64],
    group_b: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Data("permutation test needs both groups non-empty".into()));
    }
    let observed = mean(group_a) - mean(group_b);
    let pool: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let na = group_a.len();

    let n_chunks = n_permutations.div_ceil(rng::CHUNK);
    let exceed: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = rng::chunk_stream(seed, "perm", chunk);
            let lo = chunk * rng::CHUNK;
            let hi = ((chunk + 1) * rng::CHUNK).min(n_permutations);
            let mut scratch = pool.clone();
            let mut count = 0u64;
            for _ in lo..hi {
                scratch.shuffle(&mut stream);
                let stat = mean(&scratch[..na]) - mean(&scratch[na..]);
                if stat.abs() >= observed.abs() {
                    count += 1;
                }
            }
            count
        })
        .sum();

    let p_value = (1 + exceed) as f64 / (n_permutations + 1) as f64;
    Ok(PermutationResult { observed, p_value, n_permutations })
}

/// Permutation test where whole researcher blocks (not single years) are
/// reassigned between groups; the statistic is the difference of pooled
/// means.
pub fn permutation_test_blocked(
    blocks_a: &[Vec<f64>],
    blocks_b: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if blocks_a.is_empty() || blocks_b.is_empty() {
        return Err(Error::Data("permutation test needs both groups non-empty".into()));
    }
    let flat = |blocks: &[Vec<f64>]| -> Vec<f64> { blocks.iter().flatten().copied().collect() };
    let observed = mean(&flat(blocks_a)) - mean(&flat(blocks_b));
    let pool: Vec<Vec<f64>> = blocks_a.iter().chain(blocks_b).cloned().collect();
    let na = blocks_a.len();

    let n_chunks = n_permutations.div_ceil(rng::CHUNK);
    let exceed: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = rng::chunk_stream(seed, "perm-blocked", chunk);
            let lo = chunk * rng::CHUNK;
            let hi = ((chunk + 1) * rng::CHUNK).min(n_permutations);
            let mut order: Vec<usize> = (0..pool.len()).collect();
            let mut count = 0u64;
            for _ in lo..hi {
                order.shuffle(&mut stream);
                let mut sum_a = 0.0;
                let mut n_a = 0usize;
                let mut sum_b = 0.0;
                let mut n_b = 0usize;
                for (slot, &idx) in order.iter().enumerate() {
                    let block = &pool[idx];
                    if slot < na {
                        sum_a += block.iter().sum::<f64>();
                        n_a += block.len();
                    } else {
                        sum_b += block.iter().sum::<f64>();
                        n_b += block.len();
                    }
                }
                let stat = sum_a / n_a as f64 - sum_b / n_b as f64;
                if stat.abs() >= observed.abs() {
                    count += 1;
                }
            }
            count
        })
        .sum();

    let p_value = (1 + exceed) as f64 / (n_permutations + 1) as f64;
    Ok(PermutationResult { observed, p_value, n_permutations })
}

/// Percentile bootstrap interval of `statistic` over with-replacement
/// resamples.
pub fn bootstrap_ci_stat<F>(
    values: &[f64],
    n_resamples: usize,
    level: f64,
    seed: u64,
    statistic: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if values.is_empty() {
        return Err(Error::Data("bootstrap needs a non-empty sample".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config("bootstrap level must be in (0, 1)".into()));
    }
    let n = values.len();
    let n_chunks = n_resamples.div_ceil(rng::CHUNK);
    let mut stats: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut stream = rng::chunk_stream(seed, "bootstrap", chunk);
            let lo = chunk * rng::CHUNK;
            let hi = ((chunk + 1) * rng::CHUNK).min(n_resamples);
            let mut out = Vec::with_capacity(hi - lo);
            let mut resample = vec![0.0; n];
            for _ in lo..hi {
                for slot in resample.iter_mut() {
                    *slot = values[stream.random_range(0..n)];
                }
                out.push(statistic(&resample));
            }
            out
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).expect("non-finite bootstrap statistic"));
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(
    values: &[f64],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    bootstrap_ci_stat(values, n_resamples, level, seed, mean)
}
