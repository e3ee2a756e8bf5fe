//! Standard scores for productivity and journal prestige.
//!
//! Productivity is scored against the Huber location/scale of all
//! researchers' article counts in the same discipline and year. Journal
//! prestige is scored against a resampling null: the mean metric of `p`
//! articles drawn from the discipline-year pool, whose location and scale
//! over many realizations give the centering and the size-dependent unit.
//! Scoring against the null at the researcher's own productivity level
//! removes the central-limit shrinkage of mean prestige at high `p`.
//!
//! Null construction draws from a per-`(discipline, year, p)` substream of
//! the master seed, so tables are bit-identical across runs, iteration
//! orders, and thread counts.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_without_replacement;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CareerYearRaw, Corpus};
use crate::numeric::{mean, sample_sd};
use crate::robust::{huber_location_scale, LocationScale};
use crate::{rng, Error, Result};

/// How null realizations draw from the article pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSampling {
    /// Default: keeps the null well defined even when `p` approaches the
    /// pool size.
    WithReplacement,
    WithoutReplacement,
}

/// Estimator used for the null location and scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMoments {
    /// Default: consistent with the Huber estimators used everywhere else.
    Huber,
    /// Plain mean/SD, available for sensitivity analysis.
    Plain,
}

/// Settings for [`normalize_corpus`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalizeOptions {
    pub n_realizations: usize,
    pub sampling: NullSampling,
    pub moments: NullMoments,
    pub huber_c: f64,
    pub huber_tol: f64,
    pub huber_max_iter: usize,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            n_realizations: 1000,
            sampling: NullSampling::WithReplacement,
            moments: NullMoments::Huber,
            huber_c: crate::robust::DEFAULT_TUNING,
            huber_tol: crate::robust::DEFAULT_TOL,
            huber_max_iter: crate::robust::DEFAULT_MAX_ITER,
        }
    }
}

/// Null location/scale of the mean metric of `p` sampled articles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullStats {
    pub location: f64,
    pub scale: f64,
    pub n_realizations: usize,
}

/// Huber location/scale of researcher productivity per discipline-year.
pub type ProductivityNormTable = BTreeMap<(String, i32), LocationScale>;

/// Resampling null per `(discipline, year, productivity)`.
pub type PrestigeNullTable = BTreeMap<(String, i32, u32), NullStats>;

/// Career year with both standard scores attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerYear {
    pub researcher_id: String,
    pub discipline: String,
    pub year: i32,
    pub p: u32,
    pub i: f64,
    pub career_age: i32,
    /// Productivity standard score (`P`).
    pub productivity_z: f64,
    /// Journal prestige standard score (`I`).
    pub prestige_z: f64,
}

/// What was excluded and why.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NormalizeReport {
    pub n_input: usize,
    pub n_normalized: usize,
    /// Cells with fewer than 2 researchers or zero productivity scale.
    pub degenerate_productivity_cells: Vec<(String, i32)>,
    /// Null cells with zero scale.
    pub degenerate_null_cells: Vec<(String, i32, u32)>,
    pub excluded_career_years: usize,
}

/// `P = (p - location) / scale`; a zero-scale cell is a degenerate-cell error.
pub fn productivity_zscore(p: u32, norm: &LocationScale) -> Result<f64> {
    if norm.scale <= 0.0 {
        return Err(Error::Numerical("degenerate productivity cell (zero scale)".into()));
    }
    Ok((p as f64 - norm.location) / norm.scale)
}

/// `I = (i - null location) / null scale`; a zero-scale null is a
/// degenerate-null error and the career year is excluded upstream.
pub fn prestige_zscore(i: f64, null: &NullStats) -> Result<f64> {
    if null.scale <= 0.0 {
        return Err(Error::Numerical("degenerate prestige null (zero scale)".into()));
    }
    Ok((i - null.location) / null.scale)
}

/// Location and scale of the mean metric of `p` articles sampled from
/// `pool`, over `n_realizations` independent draws from `rng`.
///
/// Each realization draws exactly `p` values (sequentially, with
/// replacement by default) and records their mean; the location and scale
/// of those means are estimated per `moments`.
pub fn prestige_null<R: Rng>(
    pool: &[f64],
    p: u32,
    options: &NormalizeOptions,
    rng: &mut R,
) -> Result<NullStats> {
    if pool.is_empty() {
        return Err(Error::Data("prestige null needs a non-empty article pool".into()));
    }
    if p < 1 {
        return Err(Error::Config("prestige null needs p >= 1".into()));
    }
    if options.n_realizations < 2 {
        return Err(Error::Config("prestige null needs at least 2 realizations".into()));
    }
    if options.sampling == NullSampling::WithoutReplacement && p as usize > pool.len() {
        return Err(Error::Data(format!(
            "cannot draw {p} articles without replacement from a pool of {}",
            pool.len()
        )));
    }

    let mut means = Vec::with_capacity(options.n_realizations);
    for _ in 0..options.n_realizations {
        let m = match options.sampling {
            NullSampling::WithReplacement => {
                let mut acc = 0.0;
                for _ in 0..p {
                    acc += pool[rng.random_range(0..pool.len())];
                }
                acc / p as f64
            }
            NullSampling::WithoutReplacement => {
                let idx = sample_without_replacement(rng, pool.len(), p as usize);
                idx.iter().map(|k| pool[k]).sum::<f64>() / p as f64
            }
        };
        means.push(m);
    }

    let (location, scale) = match options.moments {
        NullMoments::Huber => {
            let ls = huber_location_scale(
                &means,
                options.huber_c,
                options.huber_tol,
                options.huber_max_iter,
            )?;
            (ls.location, ls.scale)
        }
        NullMoments::Plain => (mean(&means), sample_sd(&means)),
    };
    Ok(NullStats { location, scale, n_realizations: options.n_realizations })
}

/// Productivity and prestige null tables plus the normalized career years.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub career_years: Vec<CareerYear>,
    pub productivity: ProductivityNormTable,
    pub prestige_null: PrestigeNullTable,
    pub report: NormalizeReport,
}

/// Build both norm tables and attach `(P, I)` to every career year that
/// falls in non-degenerate cells.
///
/// Null cells are sampled once per `(discipline, year, p)` triple from the
/// substream `["null", discipline, year, p]` of `seed`, in parallel; the
/// result is independent of researcher order and thread count.
pub fn normalize_corpus(
    corpus: &Corpus,
    options: &NormalizeOptions,
    seed: u64,
) -> Result<Normalized> {
    normalize_career_years(&corpus.career_years, &corpus.pools, options, seed)
}

/// Same as [`normalize_corpus`] but over explicit parts, used by the
/// generator while a corpus is still being assembled.
pub fn normalize_career_years(
    career_years: &[CareerYearRaw],
    pools: &BTreeMap<(String, i32), Vec<f64>>,
    options: &NormalizeOptions,
    seed: u64,
) -> Result<Normalized> {
    normalize_with_tables(career_years, pools, options, seed, None)
}

/// Normalization with an optional precomputed prestige-null table (e.g.
/// from the on-disk cache). Missing triples are sampled as usual.
pub fn normalize_with_tables(
    career_years: &[CareerYearRaw],
    pools: &BTreeMap<(String, i32), Vec<f64>>,
    options: &NormalizeOptions,
    seed: u64,
    cached_null: Option<PrestigeNullTable>,
) -> Result<Normalized> {
    let mut report = NormalizeReport { n_input: career_years.len(), ..Default::default() };

    // Productivity cells: Huber over researchers' p values per (k, y).
    let mut cells: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for cy in career_years {
        cells.entry((cy.discipline.clone(), cy.year)).or_default().push(cy.p as f64);
    }
    let mut productivity: ProductivityNormTable = BTreeMap::new();
    for (key, ps) in &cells {
        if ps.len() < 2 {
            report.degenerate_productivity_cells.push(key.clone());
            continue;
        }
        let ls =
            huber_location_scale(ps, options.huber_c, options.huber_tol, options.huber_max_iter)?;
        if ls.scale <= 0.0 {
            report.degenerate_productivity_cells.push(key.clone());
            continue;
        }
        productivity.insert(key.clone(), ls);
    }

    // Null cells: every (k, y, p) that actually occurs, each on its own
    // substream so the table does not depend on evaluation order.
    let mut triples: Vec<(String, i32, u32)> = career_years
        .iter()
        .filter(|cy| productivity.contains_key(&(cy.discipline.clone(), cy.year)))
        .map(|cy| (cy.discipline.clone(), cy.year, cy.p))
        .collect();
    triples.sort();
    triples.dedup();

    let cache = cached_null.unwrap_or_default();
    let computed: Result<Vec<((String, i32, u32), NullStats)>> = triples
        .par_iter()
        .map(|(k, y, p)| {
            if let Some(stats) = cache.get(&(k.clone(), *y, *p)) {
                return Ok(((k.clone(), *y, *p), *stats));
            }
            let pool = pools
                .get(&(k.clone(), *y))
                .ok_or_else(|| Error::Data(format!("no article pool for ({k}, {y})")))?;
            let mut stream =
                rng::substream(seed, &["null", k, &y.to_string(), &p.to_string()]);
            let stats = prestige_null(pool, *p, options, &mut stream)?;
            Ok(((k.clone(), *y, *p), stats))
        })
        .collect();
    let prestige_null_table: PrestigeNullTable = computed?.into_iter().collect();

    for (key, stats) in &prestige_null_table {
        if stats.scale <= 0.0 {
            report.degenerate_null_cells.push(key.clone());
        }
    }

    let mut out = Vec::with_capacity(career_years.len());
    for cy in career_years {
        let Some(norm) = productivity.get(&(cy.discipline.clone(), cy.year)) else {
            report.excluded_career_years += 1;
            continue;
        };
        let null = &prestige_null_table[&(cy.discipline.clone(), cy.year, cy.p)];
        if null.scale <= 0.0 {
            report.excluded_career_years += 1;
            continue;
        }
        let productivity_z = productivity_zscore(cy.p, norm)?;
        let prestige_z = prestige_zscore(cy.i, null)?;
        out.push(CareerYear {
            researcher_id: cy.researcher_id.clone(),
            discipline: cy.discipline.clone(),
            year: cy.year,
            p: cy.p,
            i: cy.i,
            career_age: cy.career_age,
            productivity_z,
            prestige_z,
        });
    }
    report.n_normalized = out.len();

    Ok(Normalized { career_years: out, productivity, prestige_null: prestige_null_table, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::JoinReport;
    use approx::assert_abs_diff_eq;

    fn opts(n: usize) -> NormalizeOptions {
        NormalizeOptions { n_realizations: n, ..NormalizeOptions::default() }
    }

    #[test]
    fn productivity_zscore_centering_and_unit() {
        let norm = LocationScale { location: 4.0, scale: 2.0, converged: true, iterations: 1 };
        assert_abs_diff_eq!(productivity_zscore(4, &norm).unwrap(), 0.0);
        assert_abs_diff_eq!(productivity_zscore(6, &norm).unwrap(), 1.0);
        let degenerate = LocationScale { location: 4.0, scale: 0.0, converged: true, iterations: 0 };
        assert!(productivity_zscore(4, &degenerate).is_err());
    }

    #[test]
    fn prestige_zscore_trivials() {
        let null = NullStats { location: 2.0, scale: 0.5, n_realizations: 100 };
        assert_abs_diff_eq!(prestige_zscore(2.0, &null).unwrap(), 0.0);
        assert_abs_diff_eq!(prestige_zscore(3.0, &null).unwrap(), 2.0);
        let degenerate = NullStats { location: 2.0, scale: 0.0, n_realizations: 100 };
        assert!(prestige_zscore(2.0, &degenerate).is_err());
    }

    #[test]
    fn constant_pool_null_is_degenerate_point() {
        let mut stream = rng::substream(1, &["t"]);
        let stats = prestige_null(&[2.0], 5, &opts(100), &mut stream).unwrap();
        assert_abs_diff_eq!(stats.location, 2.0);
        assert_abs_diff_eq!(stats.scale, 0.0);
    }

    #[test]
    fn single_article_null_approaches_pool_location() {
        let pool: Vec<f64> = (1..=200).map(|k| (k as f64).sqrt()).collect();
        let mut stream = rng::substream(2, &["t"]);
        let stats = prestige_null(&pool, 1, &opts(20_000), &mut stream).unwrap();
        let direct = crate::robust::huber(&pool).unwrap();
        assert_abs_diff_eq!(stats.location, direct.location, epsilon = 0.05);
    }

    #[test]
    fn null_matches_independent_reimplementation_on_same_stream() {
        // Straightforward re-implementation of the documented sampling
        // contract, consuming the identical substream.
        let pool: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let p = 4u32;
        let options = opts(500);

        let mut stream = rng::substream(77, &["null", "k", "2005", "4"]);
        let got = prestige_null(&pool, p, &options, &mut stream).unwrap();

        let mut stream = rng::substream(77, &["null", "k", "2005", "4"]);
        let mut means = Vec::new();
        for _ in 0..options.n_realizations {
            let mut acc = 0.0;
            for _ in 0..p {
                let idx: usize = stream.random_range(0..pool.len());
                acc += pool[idx];
            }
            means.push(acc / p as f64);
        }
        let ls = crate::robust::huber(&means).unwrap();
        assert_abs_diff_eq!(got.location, ls.location, epsilon = 1e-12);
        assert_abs_diff_eq!(got.scale, ls.scale, epsilon = 1e-12);
    }

    #[test]
    fn empty_pool_errors() {
        let mut stream = rng::substream(1, &["t"]);
        assert!(prestige_null(&[], 1, &opts(10), &mut stream).is_err());
    }

    #[test]
    fn without_replacement_rejects_oversized_draw() {
        let mut stream = rng::substream(1, &["t"]);
        let options = NormalizeOptions {
            sampling: NullSampling::WithoutReplacement,
            n_realizations: 10,
            ..NormalizeOptions::default()
        };
        assert!(prestige_null(&[1.0, 2.0], 3, &options, &mut stream).is_err());
    }

    fn toy_corpus(identical: bool) -> Corpus {
        // One discipline-year; either everyone identical or spread out.
        let mut career_years = Vec::new();
        let mut pool = Vec::new();
        for k in 0..20u32 {
            let p = if identical { 3 } else { 1 + (k % 7) };
            let i = if identical { 2.0 } else { 1.0 + 0.3 * (k % 5) as f64 };
            for _ in 0..p {
                pool.push(i);
            }
            career_years.push(CareerYearRaw {
                researcher_id: format!("r{k:02}"),
                discipline: "d".into(),
                year: 2005,
                p,
                i,
                career_age: 5,
            });
        }
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut pools = BTreeMap::new();
        pools.insert(("d".to_string(), 2005), pool);
        Corpus {
            career_years,
            pools,
            meta: BTreeMap::new(),
            join: JoinReport::default(),
            dropped_missing_meta: 0,
            phd_inconsistencies: Vec::new(),
        }
    }

    #[test]
    fn zero_variance_corpus_reports_degenerate_cells() {
        let corpus = toy_corpus(true);
        let normalized = normalize_corpus(&corpus, &opts(50), 3).unwrap();
        assert!(normalized.career_years.is_empty());
        assert_eq!(normalized.report.degenerate_productivity_cells, vec![("d".to_string(), 2005)]);
        assert_eq!(normalized.report.excluded_career_years, 20);
    }

    #[test]
    fn researcher_order_does_not_matter() {
        let corpus = toy_corpus(false);
        let mut reversed = corpus.clone();
        reversed.career_years.reverse();
        let a = normalize_corpus(&corpus, &opts(200), 9).unwrap();
        let b = normalize_corpus(&reversed, &opts(200), 9).unwrap();
        let mut ay = a.career_years.clone();
        let mut by = b.career_years.clone();
        ay.sort_by(|x, y| x.researcher_id.cmp(&y.researcher_id));
        by.sort_by(|x, y| x.researcher_id.cmp(&y.researcher_id));
        assert_eq!(ay, by);
        assert_eq!(a.prestige_null, b.prestige_null);
    }

    #[test]
    fn identical_seed_gives_bit_identical_tables() {
        let corpus = toy_corpus(false);
        let a = normalize_corpus(&corpus, &opts(200), 11).unwrap();
        let b = normalize_corpus(&corpus, &opts(200), 11).unwrap();
        assert_eq!(a.prestige_null, b.prestige_null);
        let c = normalize_corpus(&corpus, &opts(200), 12).unwrap();
        assert_ne!(a.prestige_null, c.prestige_null);
    }

    #[test]
    fn zscore_recomputation_from_cell_values() {
        let corpus = toy_corpus(false);
        let normalized = normalize_corpus(&corpus, &opts(200), 5).unwrap();
        let ps: Vec<f64> = corpus.career_years.iter().map(|cy| cy.p as f64).collect();
        let ls = crate::robust::huber(&ps).unwrap();
        for cy in &normalized.career_years {
            let expect = (cy.p as f64 - ls.location) / ls.scale;
            assert_abs_diff_eq!(cy.productivity_z, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn planted_productivity_outlier_recovers_high_score() {
        let mut corpus = toy_corpus(false);
        // Baseline cell stats, then plant a count at location + 6*scale.
        let ps: Vec<f64> = corpus.career_years.iter().map(|cy| cy.p as f64).collect();
        let ls = crate::robust::huber(&ps).unwrap();
        let planted = (ls.location + 6.0 * ls.scale).round() as u32;
        corpus.career_years.push(CareerYearRaw {
            researcher_id: "outlier".into(),
            discipline: "d".into(),
            year: 2005,
            p: planted,
            i: 1.5,
            career_age: 9,
        });
        let normalized = normalize_corpus(&corpus, &opts(200), 5).unwrap();
        let z = normalized
            .career_years
            .iter()
            .find(|cy| cy.researcher_id == "outlier")
            .unwrap()
            .productivity_z;
        assert!(z > 3.5, "planted outlier scored {z}");
    }

    #[test]
    fn null_scale_decreases_with_p() {
        let pool: Vec<f64> = (0..500).map(|k| (1.0 + (k % 37) as f64 * 0.2).ln().exp()).collect();
        let options = opts(4000);
        let mut prev = f64::INFINITY;
        for p in [1u32, 2, 4, 8, 16] {
            let mut stream = rng::substream(4, &["mono", &p.to_string()]);
            let stats = prestige_null(&pool, p, &options, &mut stream).unwrap();
            assert!(
                stats.scale < prev * 1.02,
                "null scale did not shrink at p={p}: {} vs {prev}",
                stats.scale
            );
            prev = stats.scale;
        }
    }
}
