//! Career-age aggregation: sliding-window trends of the standard scores
//! and sector-occupancy matrices over 5-year career intervals.
//!
//! Only career ages >= 1 (the year after the PhD) enter these analyses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::normalize::CareerYear;
use crate::plane::{CareerRecord, Sector, SECTORS};
use crate::stats::{bootstrap_ci, fit_logistic, LogisticFit};
use crate::{Error, Result};

/// Window alignment for the career-age trends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAlignment {
    /// Ages in `[center - 2, center + 2]` (truncated at career edges).
    Centered,
    /// Ages in `[center - 4, center]`.
    Trailing,
}

/// One window of the career-age trend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendPoint {
    pub age: i32,
    pub mean_productivity_z: f64,
    pub productivity_lo: f64,
    pub productivity_hi: f64,
    pub mean_prestige_z: f64,
    pub prestige_lo: f64,
    pub prestige_hi: f64,
    pub n: usize,
}

/// Sliding-window trend for one discipline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendSeries {
    pub discipline: String,
    pub window: u32,
    pub alignment: WindowAlignment,
    pub points: Vec<TrendPoint>,
}

/// Settings for [`sliding_window_trends`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrendOptions {
    pub window: u32,
    pub alignment: WindowAlignment,
    /// Windows with fewer observations are omitted.
    pub min_observations: usize,
    pub n_resamples: usize,
    pub level: f64,
}

impl Default for TrendOptions {
    fn default() -> Self {
        TrendOptions {
            window: 5,
            alignment: WindowAlignment::Centered,
            min_observations: 5,
            n_resamples: 1000,
            level: 0.95,
        }
    }
}

/// Mean `P` and `I` within sliding career-age windows, with bootstrap
/// confidence intervals, per discipline.
pub fn sliding_window_trends(
    years: &[CareerYear],
    options: &TrendOptions,
    seed: u64,
) -> Result<Vec<TrendSeries>> {
    if options.window == 0 {
        return Err(Error::Config("trend window must be positive".into()));
    }
    let half_back = match options.alignment {
        WindowAlignment::Centered => (options.window as i32 - 1) / 2,
        WindowAlignment::Trailing => options.window as i32 - 1,
    };
    let half_fwd = match options.alignment {
        WindowAlignment::Centered => options.window as i32 / 2,
        WindowAlignment::Trailing => 0,
    };

    let mut by_discipline: BTreeMap<String, Vec<&CareerYear>> = BTreeMap::new();
    for cy in years {
        if cy.career_age >= 1 {
            by_discipline.entry(cy.discipline.clone()).or_default().push(cy);
        }
    }

    let mut out = Vec::new();
    for (discipline, ys) in by_discipline {
        let max_age = ys.iter().map(|cy| cy.career_age).max().unwrap_or(0);
        let mut points = Vec::new();
        for age in 1..=max_age {
            let lo_age = age - half_back;
            let hi_age = age + half_fwd;
            let mut p_values: Vec<f64> = ys
                .iter()
                .filter(|cy| (lo_age..=hi_age).contains(&cy.career_age))
                .map(|cy| cy.productivity_z)
                .collect();
            if p_values.len() < options.min_observations.max(1) {
                continue;
            }
            let mut i_values: Vec<f64> = ys
                .iter()
                .filter(|cy| (lo_age..=hi_age).contains(&cy.career_age))
                .map(|cy| cy.prestige_z)
                .collect();
            // Sorting makes the bootstrap independent of researcher order.
            p_values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite score"));
            i_values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite score"));
            let (plo, phi) = bootstrap_ci(
                &p_values,
                options.n_resamples,
                options.level,
                crate::rng::derive_seed(seed, &["trend", &discipline, "p", &age.to_string()]),
            )?;
            let (ilo, ihi) = bootstrap_ci(
                &i_values,
                options.n_resamples,
                options.level,
                crate::rng::derive_seed(seed, &["trend", &discipline, "i", &age.to_string()]),
            )?;
            points.push(TrendPoint {
                age,
                mean_productivity_z: crate::numeric::mean(&p_values),
                productivity_lo: plo,
                productivity_hi: phi,
                mean_prestige_z: crate::numeric::mean(&i_values),
                prestige_lo: ilo,
                prestige_hi: ihi,
                n: p_values.len(),
            });
        }
        out.push(TrendSeries {
            discipline,
            window: options.window,
            alignment: options.alignment,
            points,
        });
    }
    Ok(out)
}

/// Mean sector-occupation fractions by 5-year career interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyMatrix {
    pub discipline: String,
    pub interval: u32,
    /// Interval index `m` covers ages `interval*m + 1 ..= interval*(m+1)`.
    pub columns: Vec<OccupancyColumn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyColumn {
    pub interval_index: u32,
    pub age_lo: i32,
    pub age_hi: i32,
    /// Mean fraction per sector in canonical order; sums to 1.
    pub fractions: [f64; 7],
    pub n_researchers: usize,
}

/// Settings for [`occupancy_matrix`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OccupancyOptions {
    pub interval: u32,
    /// Columns with fewer contributing researchers are omitted.
    pub min_researchers: usize,
}

impl Default for OccupancyOptions {
    fn default() -> Self {
        OccupancyOptions { interval: 5, min_researchers: 20 }
    }
}

/// For each researcher and interval, the researcher's sector fractions
/// within the interval; the column is the mean over researchers with at
/// least one year in the interval.
pub fn occupancy_matrix(
    careers: &[CareerRecord],
    options: &OccupancyOptions,
) -> Result<Vec<OccupancyMatrix>> {
    if options.interval == 0 {
        return Err(Error::Config("occupancy interval must be positive".into()));
    }
    let width = options.interval as i32;
    let mut by_discipline: BTreeMap<String, Vec<&CareerRecord>> = BTreeMap::new();
    for c in careers {
        by_discipline.entry(c.discipline.clone()).or_default().push(c);
    }

    let mut out = Vec::new();
    for (discipline, group) in by_discipline {
        // interval index -> per-researcher fraction vectors
        let mut per_interval: BTreeMap<u32, Vec<[f64; 7]>> = BTreeMap::new();
        for career in group {
            let mut counts: BTreeMap<u32, [usize; 7]> = BTreeMap::new();
            for (cy, sector) in &career.years {
                if cy.career_age < 1 {
                    continue;
                }
                let m = ((cy.career_age - 1) / width) as u32;
                counts.entry(m).or_insert([0; 7])[sector.index()] += 1;
            }
            for (m, sector_counts) in counts {
                let n: usize = sector_counts.iter().sum();
                let mut fractions = [0.0; 7];
                for (k, &c) in sector_counts.iter().enumerate() {
                    fractions[k] = c as f64 / n as f64;
                }
                per_interval.entry(m).or_default().push(fractions);
            }
        }
        let mut columns = Vec::new();
        for (m, rows) in per_interval {
            if rows.len() < options.min_researchers {
                continue;
            }
            let mut fractions = [0.0; 7];
            for row in &rows {
                for k in 0..7 {
                    fractions[k] += row[k];
                }
            }
            for f in fractions.iter_mut() {
                *f /= rows.len() as f64;
            }
            columns.push(OccupancyColumn {
                interval_index: m,
                age_lo: width * m as i32 + 1,
                age_hi: width * (m as i32 + 1),
                fractions,
                n_researchers: rows.len(),
            });
        }
        out.push(OccupancyMatrix { discipline, interval: options.interval, columns });
    }
    Ok(out)
}

/// Logistic fit of being a perfectionist on career length, over outlier
/// researchers only.
pub fn perfectionist_vs_length(careers: &[CareerRecord]) -> Result<LogisticFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for c in careers {
        if c.category.is_outlier() {
            x.push(c.career_length as f64);
            y.push(c.category.perfectionist);
        }
    }
    if x.len() < 2 {
        return Err(Error::Data("need at least 2 outlier researchers".into()));
    }
    fit_logistic(&x, &y)
}

/// Logistic fit of being a perfectionist on the number of hyperprolific
/// career years, over outlier researchers.
pub fn perfectionist_vs_hyperprolific_years(careers: &[CareerRecord]) -> Result<LogisticFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for c in careers {
        if c.category.is_outlier() {
            x.push(c.hyperprolific_years() as f64);
            y.push(c.category.perfectionist);
        }
    }
    if x.len() < 2 {
        return Err(Error::Data("need at least 2 outlier researchers".into()));
    }
    fit_logistic(&x, &y)
}

/// Sector helper for tests and exports: all sectors in canonical order.
pub fn sector_order() -> [Sector; 7] {
    SECTORS
}
