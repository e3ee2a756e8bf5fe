//! Huber joint robust estimation of location and scale.
//!
//! Both normalizations in the pipeline replace plain mean/SD with the
//! Huber Proposal-2 estimates: location `m` solves `sum(psi_c((x-m)/s)) = 0`
//! and scale `s` solves `sum(psi_c((x-m)/s)^2) = (n-1) * kappa(c)`, where
//! `psi_c` clamps to `[-c, c]` and `kappa(c) = E[psi_c(Z)^2]` for standard
//! normal `Z` keeps the scale consistent at the normal.

use crate::numeric::{mean, median, normal_cdf, normal_pdf, sample_sd};
use crate::{Error, Result};

/// Consistency factor for the median absolute deviation at the normal.
pub const MAD_NORMAL: f64 = 0.674_489_75;

/// Default Huber tuning constant.
pub const DEFAULT_TUNING: f64 = 1.5;
/// Default convergence tolerance on location/scale change.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 30;

/// Joint robust location and scale of a sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LocationScale {
    pub location: f64,
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `kappa(c) = E[psi_c(Z)^2]` for standard normal `Z`.
///
/// Closed form: `2*Phi(c) - 1 - 2*c*phi(c) + 2*c^2*(1 - Phi(c))`.
pub fn consistency_constant(c: f64) -> f64 {
    let cdf = normal_cdf(c);
    2.0 * cdf - 1.0 - 2.0 * c * normal_pdf(c) + 2.0 * c * c * (1.0 - cdf)
}

/// Median absolute deviation scaled to be consistent at the normal.
pub fn normalized_mad(values: &[f64]) -> f64 {
    let m = median(values);
    let devs: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&devs) / MAD_NORMAL
}

/// Huber joint location/scale with the default settings.
pub fn huber(values: &[f64]) -> Result<LocationScale> {
    huber_location_scale(values, DEFAULT_TUNING, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Huber Proposal-2 joint fixed point, iterated from the median and the
/// normalized MAD until the largest coordinate change drops below `tol`.
///
/// A constant sample (or a single value) returns `(value, 0)` immediately.
/// If the iteration has not settled after `max_iter` sweeps the start
/// values are returned with `converged = false`.
pub fn huber_location_scale(
    values: &[f64],
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LocationScale> {
    if values.is_empty() {
        return Err(Error::Data("huber estimator needs a non-empty sample".into()));
    }
    if !(c > 0.0) || !(tol > 0.0) {
        return Err(Error::Config("huber tuning constant and tolerance must be positive".into()));
    }
    let n = values.len();
    let start_location = median(values);
    let start_scale = normalized_mad(values);

    let constant = values.iter().all(|&x| x == values[0]);
    if constant || n == 1 {
        return Ok(LocationScale {
            location: start_location,
            scale: 0.0,
            converged: true,
            iterations: 0,
        });
    }

    // A sample like {0,0,0,0,100} has MAD 0 without being constant; the
    // fixed point is still well defined, so start from the sample SD.
    let start_scale = if start_scale > 0.0 { start_scale } else { sample_sd(values) };

    let kappa = consistency_constant(c);
    let target = (n - 1) as f64 * kappa;

    let mut location = start_location;
    let mut scale = start_scale;
    for iter in 1..=max_iter {
        // Location step: winsorized mean at the current scale.
        let lo = location - c * scale;
        let hi = location + c * scale;
        let new_location = mean(&values.iter().map(|&x| x.clamp(lo, hi)).collect::<Vec<_>>());

        // Scale step: rearranged scale equation over the unclipped subset.
        let mut inside_ss = 0.0;
        let mut clipped = 0usize;
        for &x in values {
            if (x - location).abs() <= c * scale {
                let d = x - new_location;
                inside_ss += d * d;
            } else {
                clipped += 1;
            }
        }
        let denom = target - clipped as f64 * c * c;
        let new_scale = if denom > 0.0 {
            (inside_ss / denom).sqrt()
        } else {
            // Too many points beyond c at this scale: the closed-form step
            // is invalid, so expand and keep iterating toward the root.
            scale * 2.0
        };

        let delta = (new_location - location).abs().max((new_scale - scale).abs());
        location = new_location;
        scale = new_scale;
        if delta < tol {
            return Ok(LocationScale { location, scale, converged: true, iterations: iter });
        }
    }

    Ok(LocationScale {
        location: start_location,
        scale: start_scale,
        converged: false,
        iterations: max_iter,
    })
}
