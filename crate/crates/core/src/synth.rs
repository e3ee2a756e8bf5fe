//! Synthetic corpora with planted ground truth.
//!
//! Every quantity the pipeline estimates is planted here with known
//! values: inflation drifts enter through yearly article-count and metric
//! means, outlier career years are planted by inflating counts or routing
//! articles to high-metric journals until the intended standard-score
//! region is reached, and non-outlier prestige scores follow a planted
//! hierarchical linear model. Sector targets are hit by routing articles
//! against the generator's own null computation; because the null tables
//! depend on the article pool that routing itself produces, the generator
//! iterates pool -> null -> routing a few times and then repairs any
//! residual stragglers, so the emitted corpus is consistent by
//! construction.
//!
//! Productivity counts use a shifted binomial with bounded support, which
//! keeps baseline years safely inside the non-outlier band.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{CareerYearRaw, PublicationRecord, ResearcherMeta};
use crate::normalize::NormalizeOptions;
use crate::plane::{classify_sector, Sector};
use crate::robust::huber;
use crate::stats::sigmoid;
use crate::{rng, Error, Result};

/// Minimum binomial trials behind each baseline article count; the count
/// is `1 + Binomial(trials, q)` with `q <= 0.5`, bounding baseline p.
const P_TRIALS_MIN: u32 = 8;

/// Planted z target for outlier career years.
const OUTLIER_Z: f64 = 6.0;

/// Mild z magnitude used to steer the sign of non-outlier targets.
const SIGN_Z: f64 = 0.9;

/// Generator-side guard: non-planted years must stay below this |z| so
/// that pipeline-side Monte-Carlo jitter cannot push them past 3.5.
const SAFE_Z: f64 = 3.0;

/// Exact counts of planted outlier researchers per discipline.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct OutlierPlan {
    pub exclusively_perfectionist: usize,
    pub exclusively_hyperprolific: usize,
    pub both_non_simultaneous: usize,
    pub hyperprolific_perfectionist: usize,
}

impl OutlierPlan {
    pub fn total(&self) -> usize {
        self.exclusively_perfectionist
            + self.exclusively_hyperprolific
            + self.both_non_simultaneous
            + self.hyperprolific_perfectionist
    }
}

/// Group-level truth of the hierarchical prestige model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HierarchicalTruth {
    pub mu_c: f64,
    pub sigma_c: f64,
    pub mu_p: f64,
    pub sigma_p: f64,
    pub mu_a: f64,
    pub sigma_a: f64,
    pub eps: f64,
}

impl Default for HierarchicalTruth {
    fn default() -> Self {
        HierarchicalTruth {
            mu_c: 0.1,
            sigma_c: 0.3,
            mu_p: -0.2,
            sigma_p: 0.1,
            mu_a: -0.01,
            sigma_a: 0.005,
            eps: 0.6,
        }
    }
}

/// Planted length -> perfectionist logistic relation among extra outlier
/// researchers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogisticPlan {
    pub theta0: f64,
    pub theta1: f64,
    pub n_researchers: usize,
}

/// Markov sector plan: replaces hierarchical targeting with sector
/// sequences drawn from a transition kernel (canonical sector order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovPlan {
    pub kernel: [[f64; 7]; 7],
    pub initial: [f64; 7],
}

impl MarkovPlan {
    /// Sticky kernel: stay with probability `stay`, otherwise move
    /// according to `initial` (renormalized off the current sector).
    pub fn sticky(stay: f64, occupancy: [f64; 7]) -> Self {
        let mut kernel = [[0.0; 7]; 7];
        for a in 0..7 {
            let off: f64 = (0..7).filter(|&b| b != a).map(|b| occupancy[b]).sum();
            for b in 0..7 {
                kernel[a][b] = if a == b {
                    stay
                } else {
                    (1.0 - stay) * occupancy[b] / off
                };
            }
        }
        MarkovPlan { kernel, initial: occupancy }
    }

    /// Independent draws from `occupancy` each year.
    pub fn iid(occupancy: [f64; 7]) -> Self {
        let kernel = [occupancy; 7];
        MarkovPlan { kernel, initial: occupancy }
    }
}

/// One synthetic discipline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisciplineConfig {
    pub name: String,
    /// Full-span researchers carrying the hierarchical (or Markov) plant.
    pub n_core: usize,
    /// Short-career researchers providing untargeted pool volume.
    pub n_background: usize,
    pub n_journals: usize,
    /// Mean journal metric at the first year.
    pub metric_mean_base: f64,
    /// SD of the log metric (log-normal shape).
    pub metric_log_sd: f64,
    /// Mean articles per researcher-year at the first year.
    pub p_base: f64,
    /// Planted inflation of yearly mean productivity, papers per decade.
    pub p_drift_per_decade: f64,
    /// Planted inflation of yearly mean metric, units per decade.
    pub i_drift_per_decade: f64,
    /// Planted outlier researchers.
    pub outliers: OutlierPlan,
    /// Background researchers publish more to stabilize the pool.
    pub background_p_mean: f64,
}

/// Full generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub disciplines: Vec<DisciplineConfig>,
    pub year_min: i32,
    pub year_max: i32,
    /// Probability an article's journal-year has a metric value.
    pub coverage: f64,
    pub hierarchical: HierarchicalTruth,
    pub logistic: Option<LogisticPlan>,
    /// When set, core researchers follow sector sequences from this kernel
    /// instead of the hierarchical plant.
    pub markov: Option<MarkovPlan>,
    pub master_seed: u64,
    /// Null realizations used for generator-side targeting.
    pub target_realizations: usize,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disciplines.is_empty() {
            return Err(Error::Config("need at least one discipline".into()));
        }
        if self.year_min >= self.year_max {
            return Err(Error::Config("year_min must precede year_max".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::Config("coverage must be in [0, 1]".into()));
        }
        for d in &self.disciplines {
            if d.metric_mean_base <= 0.0
                || d.metric_mean_base + d.i_drift_per_decade * self.span_decades() <= 0.0
            {
                return Err(Error::Config(format!(
                    "discipline {}: metric mean must stay positive over the window",
                    d.name
                )));
            }
            let p_end = d.p_base + d.p_drift_per_decade * self.span_decades();
            for p in [d.p_base, p_end] {
                if p < 1.0 {
                    return Err(Error::Config(format!(
                        "discipline {}: mean productivity {p} must stay at or above 1",
                        d.name
                    )));
                }
            }
            if d.n_journals < 50 {
                return Err(Error::Config("need at least 50 journals per discipline".into()));
            }
        }
        let h = &self.hierarchical;
        if h.sigma_c < 0.0 || h.sigma_p < 0.0 || h.sigma_a < 0.0 || h.eps <= 0.0 {
            return Err(Error::Config("hierarchical spreads must be non-negative, eps positive".into()));
        }
        Ok(())
    }

    fn span_decades(&self) -> f64 {
        (self.year_max - self.year_min) as f64 / 10.0
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        let disciplines = vec![
            DisciplineConfig {
                name: "astrodynamics".into(),
                n_core: 40,
                n_background: 35,
                n_journals: 400,
                metric_mean_base: 2.4,
                metric_log_sd: 0.5,
                p_base: 3.4,
                p_drift_per_decade: 1.57,
                i_drift_per_decade: 0.72,
                outliers: OutlierPlan {
                    exclusively_perfectionist: 4,
                    exclusively_hyperprolific: 3,
                    both_non_simultaneous: 1,
                    hyperprolific_perfectionist: 1,
                },
                background_p_mean: 7.0,
            },
            DisciplineConfig {
                name: "biometrics".into(),
                n_core: 40,
                n_background: 35,
                n_journals: 400,
                metric_mean_base: 3.1,
                metric_log_sd: 0.6,
                p_base: 4.2,
                p_drift_per_decade: 3.5,
                i_drift_per_decade: 0.4,
                outliers: OutlierPlan {
                    exclusively_perfectionist: 3,
                    exclusively_hyperprolific: 4,
                    both_non_simultaneous: 2,
                    hyperprolific_perfectionist: 1,
                },
                background_p_mean: 7.0,
            },
            DisciplineConfig {
                name: "chronometry".into(),
                n_core: 40,
                n_background: 35,
                n_journals: 400,
                metric_mean_base: 1.6,
                metric_log_sd: 0.45,
                p_base: 2.8,
                p_drift_per_decade: 0.3,
                i_drift_per_decade: 0.2,
                outliers: OutlierPlan {
                    exclusively_perfectionist: 3,
                    exclusively_hyperprolific: 3,
                    both_non_simultaneous: 1,
                    hyperprolific_perfectionist: 1,
                },
                background_p_mean: 7.0,
            },
        ];
        SynthConfig {
            disciplines,
            year_min: 1997,
            year_max: 2015,
            coverage: 0.95,
            hierarchical: HierarchicalTruth::default(),
            logistic: Some(LogisticPlan { theta0: 1.849, theta1: -0.051, n_researchers: 30 }),
            markov: None,
            master_seed: 20170501,
            target_realizations: 300,
        }
    }
}

/// Per-researcher planted coefficients.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResearcherCoefficients {
    pub intercept: f64,
    pub slope_p: f64,
    pub slope_a: f64,
}

/// Everything the generator planted, for downstream assertions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_articles: usize,
    pub n_matched: usize,
    /// Exact matched/total ratio counted during generation.
    pub match_rate: f64,
    /// Per-discipline planted (p, i) drifts per decade.
    pub drifts: BTreeMap<String, (f64, f64)>,
    /// Intended category per researcher: `non_outlier`,
    /// `exclusively_perfectionist`, `exclusively_hyperprolific`,
    /// `both_non_simultaneous`, or `hyperprolific_perfectionist`.
    pub intended_categories: BTreeMap<String, String>,
    /// Planted `(year, sector label)` pairs for researchers with targeted
    /// sector years.
    pub intended_sectors: BTreeMap<String, Vec<(i32, String)>>,
    /// Group-level hierarchical truth (when the corpus is hierarchical).
    pub hierarchical: Option<HierarchicalTruth>,
    pub coefficients: BTreeMap<String, ResearcherCoefficients>,
    /// Researchers that should enter the Bayesian sample.
    pub bayes_eligible: BTreeSet<String>,
    /// Planted logistic truth (theta0, theta1) when present.
    pub logistic: Option<(f64, f64)>,
    /// Intended perfectionist flag of each logistic-plan researcher.
    pub logistic_flags: BTreeMap<String, bool>,
    /// Fraction of Markov-targeted years that landed in the intended
    /// sector during generator verification.
    pub markov_match_fraction: Option<f64>,
    /// Per-discipline researcher counts.
    pub researchers_per_discipline: BTreeMap<String, usize>,
}

/// Generated corpus: in-memory tables plus the ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub publications: Vec<PublicationRecord>,
    /// Rows of the journal metric table: (journal, year, value).
    pub metric_rows: Vec<(String, i32, f64)>,
    pub meta: Vec<ResearcherMeta>,
    pub ground_truth: GroundTruth,
}

/// Paths written by [`SynthOutput::write_files`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthPaths {
    pub publications: PathBuf,
    pub metrics: PathBuf,
    pub meta: PathBuf,
    pub ground_truth: PathBuf,
}

impl SynthOutput {
    /// Write `publications.csv`, `metrics.csv`, `meta.csv` and
    /// `ground_truth.json` under `dir`. Output is byte-deterministic.
    pub fn write_files(&self, dir: &Path) -> Result<SynthPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            publications: dir.join("publications.csv"),
            metrics: dir.join("metrics.csv"),
            meta: dir.join("meta.csv"),
            ground_truth: dir.join("ground_truth.json"),
        };

        let mut out = String::from("researcher_id,discipline,year,journal_id,doi\n");
        for r in &self.publications {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.researcher_id,
                r.discipline,
                r.year,
                r.journal_id,
                r.doi.as_deref().unwrap_or("")
            ));
        }
        write_atomic(&paths.publications, out.as_bytes())?;

        let mut out = String::from("journal_id,year,value\n");
        for (journal, year, value) in &self.metric_rows {
            out.push_str(&format!("{journal},{year},{value}\n"));
        }
        write_atomic(&paths.metrics, out.as_bytes())?;

        let mut out = String::from("researcher_id,discipline,phd_year\n");
        for m in &self.meta {
            out.push_str(&format!("{},{},{}\n", m.researcher_id, m.discipline, m.phd_year));
        }
        write_atomic(&paths.meta, out.as_bytes())?;

        let json = serde_json::to_string_pretty(&self.ground_truth)
            .map_err(|e| Error::Data(format!("ground truth serialization: {e}")))?;
        write_atomic(&paths.ground_truth, json.as_bytes())?;
        Ok(paths)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// What a researcher-year is steered toward.
#[derive(Debug, Clone, Copy, PartialEq)]
enum YearTarget {
    /// Prestige score target in z units (non-outlier range).
    Score(f64),
    /// Outlier sector plant.
    Sector(Sector),
}

/// Working record for one researcher-year during generation.
#[derive(Debug, Clone)]
struct WorkYear {
    researcher: usize,
    year: i32,
    p: u32,
    target: YearTarget,
    /// Indices into the per-year journal value list; filled by routing.
    journals: Vec<usize>,
    routed: bool,
}

#[derive(Debug, Clone)]
struct WorkResearcher {
    id: String,
    phd_year: i32,
    intended_category: &'static str,
    bayes_eligible: bool,
    coeffs: Option<ResearcherCoefficients>,
}

/// Generate a corpus; fails before emission when the configuration cannot
/// reach its targets (e.g. a prestige plant beyond the journal pool).
pub fn generate_corpus(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let seed = config.master_seed;
    let mut truth = GroundTruth {
        seed,
        drifts: config
            .disciplines
            .iter()
            .map(|d| (d.name.clone(), (d.p_drift_per_decade, d.i_drift_per_decade)))
            .collect(),
        hierarchical: if config.markov.is_none() { Some(config.hierarchical) } else { None },
        logistic: config.logistic.map(|l| (l.theta0, l.theta1)),
        ..GroundTruth::default()
    };

    let mut publications: Vec<PublicationRecord> = Vec::new();
    let mut metric_rows: Vec<(String, i32, f64)> = Vec::new();
    let mut meta: Vec<ResearcherMeta> = Vec::new();
    let mut n_articles = 0usize;
    let mut n_matched = 0usize;

    for disc in &config.disciplines {
        let (disc_pubs, disc_metrics, disc_meta, counts) =
            generate_discipline(config, disc, &mut truth)?;
        n_articles += counts.0;
        n_matched += counts.1;
        publications.extend(disc_pubs);
        metric_rows.extend(disc_metrics);
        meta.extend(disc_meta);
    }

    truth.n_articles = n_articles;
    truth.n_matched = n_matched;
    truth.match_rate = if n_articles > 0 { n_matched as f64 / n_articles as f64 } else { 0.0 };

    Ok(SynthOutput { publications, metric_rows, meta, ground_truth: truth })
}

type DisciplineTables =
    (Vec<PublicationRecord>, Vec<(String, i32, f64)>, Vec<ResearcherMeta>, (usize, usize));

fn generate_discipline(
    config: &SynthConfig,
    disc: &DisciplineConfig,
    truth: &mut GroundTruth,
) -> Result<DisciplineTables> {
    let seed = config.master_seed;
    let years: Vec<i32> = (config.year_min..=config.year_max).collect();
    let n_years = years.len();

    // --- Journal metric table -------------------------------------------
    // Per-year log-normal values whose mean follows the planted drift.
    let mut journal_values: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut metric_rows = Vec::new();
    {
        let mut stream = rng::substream(seed, &["synth", &disc.name, "journals"]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for &year in &years {
            let decades = (year - config.year_min) as f64 / 10.0;
            let target_mean = disc.metric_mean_base + disc.i_drift_per_decade * decades;
            let s = disc.metric_log_sd;
            let m = target_mean.ln() - s * s / 2.0;
            let mut values = Vec::with_capacity(disc.n_journals);
            for j in 0..disc.n_journals {
                let v = (m + s * normal.sample(&mut stream)).exp();
                values.push(v);
                metric_rows.push((format!("{}-j{j:04}", disc.name), year, v));
            }
            journal_values.insert(year, values);
        }
    }
    // Sorted copies for routing lookups: (value, journal index).
    let sorted_values: BTreeMap<i32, Vec<(f64, usize)>> = journal_values
        .iter()
        .map(|(&y, vs)| {
            let mut sv: Vec<(f64, usize)> = vs.iter().copied().zip(0..).collect();
            sv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            (y, sv)
        })
        .collect();

    // --- Researchers ------------------------------------------------------
    let mut researchers: Vec<WorkResearcher> = Vec::new();
    let mut work_years: Vec<WorkYear> = Vec::new();
    let logistic_n = config.logistic.map(|l| l.n_researchers).unwrap_or(0);

    let mut coeff_stream = rng::substream(seed, &["synth", &disc.name, "coeffs"]);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let h = &config.hierarchical;

    // Core researchers: full-span, staggered PhD years, hierarchical (or
    // Markov) targets.
    for k in 0..disc.n_core {
        let id = format!("{}-core{k:03}", disc.name);
        // PhD between 20 years before the window and 6 years before its
        // end, so careers stay Bayes-eligible while ages vary widely.
        let phd_span = (config.year_max - 6) - (config.year_min - 20);
        let phd_year = config.year_min - 20 + (k as i32 * 7) % phd_span.max(1);
        let coeffs = ResearcherCoefficients {
            intercept: h.mu_c + h.sigma_c * normal.sample(&mut coeff_stream),
            slope_p: h.mu_p + h.sigma_p * normal.sample(&mut coeff_stream),
            slope_a: h.mu_a + h.sigma_a * normal.sample(&mut coeff_stream),
        };
        researchers.push(WorkResearcher {
            id,
            phd_year,
            intended_category: "non_outlier",
            bayes_eligible: config.markov.is_none(),
            coeffs: Some(coeffs),
        });
    }
    // Background researchers: 5-year careers staggered uniformly over the
    // window (ramp-up and ramp-down at the edges are symmetric, so they
    // do not tilt the planted inflation slope). Career length is exactly
    // 5, which keeps them out of the Bayesian sample.
    for k in 0..disc.n_background {
        let id = format!("{}-bg{k:03}", disc.name);
        let start = config.year_min + ((k * (n_years - 4)) / disc.n_background.max(1)) as i32;
        researchers.push(WorkResearcher {
            id,
            phd_year: start - 1,
            intended_category: "non_outlier",
            bayes_eligible: false,
            coeffs: None,
        });
    }
    // Outlier-plan researchers.
    let plan = &disc.outliers;
    for k in 0..plan.total() {
        let id = format!("{}-out{k:03}", disc.name);
        let category = if k < plan.exclusively_perfectionist {
            "exclusively_perfectionist"
        } else if k < plan.exclusively_perfectionist + plan.exclusively_hyperprolific {
            "exclusively_hyperprolific"
        } else if k < plan.total() - plan.hyperprolific_perfectionist {
            "both_non_simultaneous"
        } else {
            "hyperprolific_perfectionist"
        };
        researchers.push(WorkResearcher {
            id,
            phd_year: config.year_min - 10 + (k as i32 * 5) % 15,
            intended_category: category,
            bayes_eligible: false,
            coeffs: None,
        });
    }
    // Logistic-plan researchers: outliers whose perfectionist flag follows
    // the planted length model.
    let mut logistic_stream = rng::substream(seed, &["synth", &disc.name, "logistic"]);
    for k in 0..logistic_n {
        let plan = config.logistic.unwrap();
        let id = format!("{}-len{k:03}", disc.name);
        // Career length = year_max - phd; stagger lengths over 6..=38.
        let length = 6 + (k as i32 * 11) % 33;
        let phd_year = config.year_max - length;
        let is_perfectionist =
            logistic_stream.random::<f64>() < sigmoid(plan.theta0 + plan.theta1 * length as f64);
        truth.logistic_flags.insert(id.clone(), is_perfectionist);
        researchers.push(WorkResearcher {
            id,
            phd_year,
            intended_category: if is_perfectionist {
                "exclusively_perfectionist"
            } else {
                "exclusively_hyperprolific"
            },
            bayes_eligible: false,
            coeffs: None,
        });
    }

    // --- Baseline article counts -----------------------------------------
    // Bounded-support counts: p = 1 + Binomial(trials, q(year)), with
    // trials sized so q stays at or below one half.
    let p_end = disc.p_base + disc.p_drift_per_decade * config.span_decades();
    let core_trials = (((disc.p_base.max(p_end) - 1.0) * 2.0).ceil() as u32).max(P_TRIALS_MIN);
    let bg_end = disc.background_p_mean + disc.p_drift_per_decade * config.span_decades();
    let bg_trials =
        (((disc.background_p_mean.max(bg_end) - 1.0) * 2.0).ceil() as u32).max(P_TRIALS_MIN);
    let mut p_stream = rng::substream(seed, &["synth", &disc.name, "counts"]);
    let researcher_is_background =
        |idx: usize| -> bool { (disc.n_core..disc.n_core + disc.n_background).contains(&idx) };
    for (idx, r) in researchers.iter().enumerate() {
        for (yi, &year) in years.iter().enumerate() {
            // Background researchers publish a 5-year slice, wrapped
            // around the window so every year carries the same number of
            // background careers.
            if researcher_is_background(idx) {
                let k = idx - disc.n_core;
                let start = (k * (n_years - 4)) / disc.n_background.max(1);
                if yi < start || yi >= start + 5 {
                    continue;
                }
            }
            let decades = (year - config.year_min) as f64 / 10.0;
            let mean_p = if researcher_is_background(idx) {
                // Drifted like everyone else so the planted inflation
                // survives pooling.
                disc.background_p_mean + disc.p_drift_per_decade * decades
            } else {
                disc.p_base + disc.p_drift_per_decade * decades
            };
            let trials = if researcher_is_background(idx) { bg_trials } else { core_trials };
            let q = ((mean_p - 1.0) / trials as f64).clamp(0.0, 1.0);
            let mut p = 1u32;
            for _ in 0..trials {
                if p_stream.random::<f64>() < q {
                    p += 1;
                }
            }
            work_years.push(WorkYear {
                researcher: idx,
                year,
                p,
                target: YearTarget::Score(f64::NAN),
                journals: Vec::new(),
                routed: false,
            });
        }
        let _ = r;
    }

    // Index work years per researcher for target assignment.
    let mut years_of: Vec<Vec<usize>> = vec![Vec::new(); researchers.len()];
    for (w, wy) in work_years.iter().enumerate() {
        years_of[wy.researcher].push(w);
    }

    // --- Productivity cell statistics (pre-plant) --------------------------
    let cell_stats = |work: &[WorkYear]| -> BTreeMap<i32, crate::robust::LocationScale> {
        let mut per_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for wy in work {
            per_year.entry(wy.year).or_default().push(wy.p as f64);
        }
        per_year
            .into_iter()
            .map(|(y, ps)| (y, huber(&ps).expect("non-empty cell")))
            .collect()
    };
    let baseline_stats = cell_stats(&work_years);

    // --- Assign sector / score targets -------------------------------------
    let mut target_stream = rng::substream(seed, &["synth", &disc.name, "targets"]);
    if let Some(markov) = &config.markov {
        // Markov mode: every core researcher follows a sector chain.
        for idx in 0..disc.n_core {
            let draw = |probs: &[f64; 7], stream: &mut rand_chacha::ChaCha8Rng| -> usize {
                let u: f64 = stream.random();
                let mut acc = 0.0;
                for (k, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                6
            };
            let mut current = draw(&markov.initial, &mut target_stream);
            let mut intended = Vec::new();
            for &w in &years_of[idx] {
                let sector = crate::plane::SECTORS[current];
                work_years[w].target = YearTarget::Sector(sector);
                intended.push((work_years[w].year, sector.label().to_string()));
                current = draw(&markov.kernel[current], &mut target_stream);
            }
            truth
                .intended_sectors
                .insert(researchers[idx].id.clone(), intended);
        }
        // Everyone else: neutral targets.
        for wy in work_years.iter_mut() {
            if wy.researcher >= disc.n_core {
                wy.target = YearTarget::Score(0.0);
            }
        }
    } else {
        // Hierarchical mode: core years follow the planted linear model.
        for idx in 0..researchers.len() {
            let r = &researchers[idx];
            if let Some(c) = r.coeffs {
                for &w in &years_of[idx] {
                    let wy = &work_years[w];
                    let stats = &baseline_stats[&wy.year];
                    let p_z = (wy.p as f64 - stats.location) / stats.scale.max(1e-9);
                    let age = (wy.year - r.phd_year) as f64;
                    let noise = h.eps * normal.sample(&mut target_stream);
                    let target = (c.intercept + c.slope_p * p_z + c.slope_a * age + noise)
                        .clamp(-3.2, 3.2);
                    work_years[w].target = YearTarget::Score(target);
                }
            } else {
                for &w in &years_of[idx] {
                    // Mild centered noise keeps untargeted researchers
                    // clear of the outlier band.
                    let target = (0.8 * normal.sample(&mut target_stream)).clamp(-2.0, 2.0);
                    work_years[w].target = YearTarget::Score(target);
                }
            }
        }
    }

    // Outlier plants override the score targets on chosen years.
    let plant_base = disc.n_core + disc.n_background;
    for k in 0..plan.total() {
        let idx = plant_base + k;
        let ys = &years_of[idx];
        // Stagger planted years across the window so plant articles never
        // concentrate in one discipline-year pool (which would inflate
        // that pool's own null scale).
        let pick = |frac: f64| {
            let shifted = (frac + 0.13 * k as f64) % 1.0;
            ys[(shifted * (ys.len() - 1) as f64) as usize]
        };
        let mut intended = Vec::new();
        match researchers[idx].intended_category {
            "exclusively_perfectionist" => {
                let w = pick(0.3);
                work_years[w].target = YearTarget::Sector(Sector::PrestigeOutlier);
                intended.push((work_years[w].year, Sector::PrestigeOutlier.label().to_string()));
            }
            "exclusively_hyperprolific" => {
                let w = pick(0.6);
                work_years[w].target = YearTarget::Sector(Sector::ProductivityOutlier);
                intended
                    .push((work_years[w].year, Sector::ProductivityOutlier.label().to_string()));
            }
            "both_non_simultaneous" => {
                let w1 = pick(0.25);
                let w2 = pick(0.75);
                work_years[w1].target = YearTarget::Sector(Sector::PrestigeOutlier);
                work_years[w2].target = YearTarget::Sector(Sector::ProductivityOutlier);
                intended.push((work_years[w1].year, Sector::PrestigeOutlier.label().to_string()));
                intended
                    .push((work_years[w2].year, Sector::ProductivityOutlier.label().to_string()));
            }
            "hyperprolific_perfectionist" => {
                let w = pick(0.5);
                work_years[w].target = YearTarget::Sector(Sector::BothOutlier);
                intended.push((work_years[w].year, Sector::BothOutlier.label().to_string()));
            }
            _ => {}
        }
        truth.intended_sectors.insert(researchers[idx].id.clone(), intended);
    }
    // Logistic-plan researchers: one planted outlier year each.
    for k in 0..logistic_n {
        let idx = plant_base + plan.total() + k;
        let ys = &years_of[idx];
        let w = ys[(k * 7) % ys.len()];
        let sector = if truth.logistic_flags[&researchers[idx].id] {
            Sector::PrestigeOutlier
        } else {
            Sector::ProductivityOutlier
        };
        work_years[w].target = YearTarget::Sector(sector);
        truth
            .intended_sectors
            .insert(researchers[idx].id.clone(), vec![(work_years[w].year, sector.label().to_string())]);
    }

    // --- Productivity plants -----------------------------------------------
    // Inflate counts for productivity-outlier years using baseline stats.
    for wy in work_years.iter_mut() {
        if let YearTarget::Sector(s) = wy.target {
            let stats = &baseline_stats[&wy.year];
            match s {
                Sector::ProductivityOutlier | Sector::BothOutlier => {
                    wy.p = (stats.location + OUTLIER_Z * stats.scale).ceil() as u32;
                }
                Sector::PrestigeOutlier => {
                    // Slightly above-center p: still firmly non-outlier,
                    // but the tighter null lowers the mean metric the
                    // prestige plant must reach.
                    wy.p = (stats.location + 1.2 * stats.scale).round().max(1.0) as u32;
                }
                // Markov non-outlier sectors steer the sign of P.
                Sector::HighHigh | Sector::HighLow | Sector::LowHigh | Sector::LowLow => {
                    let sign = match s {
                        Sector::HighHigh | Sector::LowHigh => 1.0,
                        _ => -1.0,
                    };
                    let target = stats.location + sign * SIGN_Z * stats.scale;
                    wy.p = target.round().max(1.0) as u32;
                }
            }
        }
    }
    // --- Route articles to prestige targets --------------------------------
    // The null tables depend on the pool that routing produces, so iterate
    // pool -> nulls -> routing to a fixed point, then repair stragglers.
    let norm_options = NormalizeOptions {
        n_realizations: config.target_realizations,
        ..NormalizeOptions::default()
    };

    let mut route_stream = rng::substream(seed, &["synth", &disc.name, "route"]);
    // Initial assignment: uniform journal picks.
    for wy in work_years.iter_mut() {
        wy.journals = (0..wy.p)
            .map(|_| route_stream.random_range(0..disc.n_journals))
            .collect();
    }

    let pool_of = |work: &[WorkYear]| -> BTreeMap<i32, Vec<f64>> {
        let mut pools: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for wy in work {
            let values = &journal_values[&wy.year];
            for &j in &wy.journals {
                pools.entry(wy.year).or_default().push(values[j]);
            }
        }
        for v in pools.values_mut() {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        pools
    };

    for pass in 0..3 {
        let pools = pool_of(&work_years);
        // Null stats for every (year, p) that needs routing.
        let mut needed: BTreeSet<(i32, u32)> = BTreeSet::new();
        for wy in &work_years {
            needed.insert((wy.year, wy.p));
        }
        let mut nulls: BTreeMap<(i32, u32), (f64, f64)> = BTreeMap::new();
        for (year, p) in needed {
            let mut stream = rng::substream(
                seed,
                &["synth", &disc.name, "gen-null", &pass.to_string(), &year.to_string(), &p.to_string()],
            );
            let stats =
                crate::normalize::prestige_null(&pools[&year], p, &norm_options, &mut stream)?;
            nulls.insert((year, p), (stats.location, stats.scale));
        }

        for wy in work_years.iter_mut() {
            let (loc, scale) = nulls[&(wy.year, wy.p)];
            let sv = &sorted_values[&wy.year];
            let is_prestige_plant = matches!(
                wy.target,
                YearTarget::Sector(Sector::PrestigeOutlier | Sector::BothOutlier)
            );
            let z_target = match wy.target {
                YearTarget::Score(z) => z,
                YearTarget::Sector(s) => match s {
                    Sector::PrestigeOutlier | Sector::BothOutlier => {
                        // Cap at what the journal pool can host, with a
                        // floor that keeps a wide margin above tau.
                        let reachable = 0.88 * (sv[sv.len() - 1].0 - loc) / scale.max(1e-12);
                        let z = OUTLIER_Z.min(reachable);
                        if z < 4.8 {
                            return Err(Error::Config(format!(
                                "discipline {}: journal pool in {} can host a prestige plant of \
                                 at most z={reachable:.2}",
                                disc.name, wy.year
                            )));
                        }
                        z
                    }
                    Sector::HighHigh | Sector::HighLow => SIGN_Z,
                    Sector::LowHigh | Sector::LowLow => -SIGN_Z,
                    Sector::ProductivityOutlier => 0.0,
                },
            };
            let mean_target = loc + z_target * scale;
            route_to_mean(wy, sv, mean_target, is_prestige_plant);
            wy.routed = true;
        }
    }

    // --- Repair passes -------------------------------------------------------
    // Recompute achieved scores and fix any non-planted straggler beyond
    // the safe band; verify planted years reach their sectors.
    let mut repairs = 0usize;
    let mut markov_hits = 0usize;
    let mut markov_total = 0usize;
    const REPAIR_ROUNDS: usize = 4;
    for round in 0..REPAIR_ROUNDS {
        let pools = pool_of(&work_years);
        let mut needed: BTreeSet<(i32, u32)> = BTreeSet::new();
        for wy in &work_years {
            needed.insert((wy.year, wy.p));
        }
        // The verify stream is not keyed by round: stable Monte-Carlo
        // noise lets repairs settle instead of chasing jitter.
        let mut nulls: BTreeMap<(i32, u32), (f64, f64)> = BTreeMap::new();
        for (year, p) in needed {
            let mut stream = rng::substream(
                seed,
                &["synth", &disc.name, "verify-null", &year.to_string(), &p.to_string()],
            );
            let stats =
                crate::normalize::prestige_null(&pools[&year], p, &norm_options, &mut stream)?;
            nulls.insert((year, p), (stats.location, stats.scale));
        }

        let round_stats = cell_stats(&work_years);
        let mut violations = 0usize;
        markov_hits = 0;
        markov_total = 0;
        for wy in work_years.iter_mut() {
            let stats = &round_stats[&wy.year];
            let p_z = (wy.p as f64 - stats.location) / stats.scale.max(1e-9);
            let (loc, scale) = nulls[&(wy.year, wy.p)];
            let values = &journal_values[&wy.year];
            let i_mean =
                wy.journals.iter().map(|&j| values[j]).sum::<f64>() / wy.journals.len() as f64;
            let i_z = if scale > 0.0 { (i_mean - loc) / scale } else { 0.0 };
            match wy.target {
                YearTarget::Score(t) => {
                    if p_z.abs() > SAFE_Z {
                        // A binomial-tail accident: recenter the count and
                        // re-route its articles at the new size.
                        wy.p = stats.location.round().max(1.0) as u32;
                        route_to_mean(wy, &sorted_values[&wy.year], loc, false);
                        violations += 1;
                    } else if i_z.abs() > SAFE_Z {
                        if std::env::var("CAREERPLANE_SYNTH_DEBUG").is_ok() {
                            eprintln!(
                                "round={round} violation year={} p={} target={t:.2} achieved={i_z:.2} loc={loc:.3} scale={scale:.3} mean={i_mean:.3}",
                                wy.year, wy.p
                            );
                        }
                        route_to_mean(wy, &sorted_values[&wy.year], loc, false);
                        violations += 1;
                    }
                }
                YearTarget::Sector(s) => {
                    let achieved = classify_sector(i_z, p_z, 3.5);
                    if s.is_outlier() {
                        // Planted outliers must land with a wide margin.
                        let need_i = matches!(s, Sector::PrestigeOutlier | Sector::BothOutlier);
                        let need_p = matches!(s, Sector::ProductivityOutlier | Sector::BothOutlier);
                        if need_i && i_z < 4.5 {
                            if std::env::var("CAREERPLANE_SYNTH_DEBUG").is_ok() {
                                eprintln!(
                                    "plant fail round={round} year={} p={} i_mean={i_mean:.3} loc={loc:.3} scale={scale:.3}",
                                    wy.year, wy.p
                                );
                            }
                            return Err(Error::Config(format!(
                                "discipline {}: planted prestige outlier reached only z={i_z:.2}",
                                disc.name
                            )));
                        }
                        if need_p && p_z < 4.5 {
                            return Err(Error::Config(format!(
                                "discipline {}: planted productivity outlier reached only z={p_z:.2}",
                                disc.name
                            )));
                        }
                        if !need_i && i_z.abs() > SAFE_Z {
                            route_to_mean(wy, &sorted_values[&wy.year], loc, false);
                            violations += 1;
                        }
                    } else {
                        markov_total += 1;
                        if achieved == s {
                            markov_hits += 1;
                        }
                    }
                }
            }
        }
        repairs += violations;
        if violations == 0 || round == REPAIR_ROUNDS - 1 {
            if violations > 0 {
                return Err(Error::Config(format!(
                    "discipline {}: {violations} career years still outside the safe band after repairs",
                    disc.name
                )));
            }
            break;
        }
    }
    let _ = repairs;

    if config.markov.is_some() && markov_total > 0 {
        let frac = markov_hits as f64 / markov_total as f64;
        if frac < 0.85 {
            return Err(Error::Config(format!(
                "discipline {}: only {:.1}% of Markov sector targets achieved",
                disc.name,
                100.0 * frac
            )));
        }
        let pooled = truth.markov_match_fraction.unwrap_or(1.0).min(frac);
        truth.markov_match_fraction = Some(pooled);
    }

    // --- Emit rows -----------------------------------------------------------
    // The routed articles are the matched ones (their count IS the p the
    // pipeline will see). Unmatched coverage loss is modeled by extra
    // ghost articles in journals absent from the metric table; they never
    // touch counts, means, or pools.
    let mut publications = Vec::new();
    let mut n_articles = 0usize;
    let mut n_matched = 0usize;
    let mut coverage_stream = rng::substream(seed, &["synth", &disc.name, "coverage"]);
    let ghost_rate = if config.coverage > 0.0 {
        (1.0 - config.coverage) / config.coverage
    } else {
        0.0
    };
    for wy in &work_years {
        let researcher = &researchers[wy.researcher];
        for (k, &j) in wy.journals.iter().enumerate() {
            n_articles += 1;
            n_matched += 1;
            publications.push(PublicationRecord {
                researcher_id: researcher.id.clone(),
                discipline: disc.name.clone(),
                year: wy.year,
                journal_id: format!("{}-j{j:04}", disc.name),
                doi: Some(format!("10.5555/{}.{}.{}", researcher.id, wy.year, k)),
            });
        }
        if ghost_rate > 0.0 {
            let mut n_ghost = 0usize;
            for _ in 0..wy.p {
                if coverage_stream.random::<f64>() < ghost_rate.min(1.0) {
                    n_ghost += 1;
                }
            }
            for g in 0..n_ghost {
                n_articles += 1;
                publications.push(PublicationRecord {
                    researcher_id: researcher.id.clone(),
                    discipline: disc.name.clone(),
                    year: wy.year,
                    journal_id: format!("{}-unlisted{:03}", disc.name, (wy.year as usize + g) % 100),
                    doi: Some(format!("10.5555/{}.{}.g{}", researcher.id, wy.year, g)),
                });
            }
        }
    }

    let meta: Vec<ResearcherMeta> = researchers
        .iter()
        .map(|r| ResearcherMeta {
            researcher_id: r.id.clone(),
            discipline: disc.name.clone(),
            phd_year: r.phd_year,
        })
        .collect();

    for r in &researchers {
        truth.intended_categories.insert(r.id.clone(), r.intended_category.to_string());
        if r.bayes_eligible {
            truth.bayes_eligible.insert(r.id.clone());
        }
        if let Some(c) = r.coeffs {
            truth.coefficients.insert(r.id.clone(), c);
        }
    }
    truth
        .researchers_per_discipline
        .insert(disc.name.clone(), researchers.len());

    Ok((publications, metric_rows, meta, (n_articles, n_matched)))
}

/// Pick `wy.p` journal indices whose mean metric approximates `target`.
///
/// `tight` picks adjacent ranks around the target (outlier plants routed
/// into the top journals). Otherwise picks straddle the anchor in wide
/// rank pairs, which keeps genuine value spread in the article pool --
/// without it, routed articles collapse onto point masses and the robust
/// null scale of the pool degenerates. The last pick corrects the
/// residual so the mean lands on the target.
fn route_to_mean(wy: &mut WorkYear, sorted: &[(f64, usize)], target: f64, tight: bool) {
    let n = sorted.len();
    let p = wy.p as usize;
    let rank_of = |value: f64| -> usize {
        match sorted.binary_search_by(|probe| probe.0.partial_cmp(&value).unwrap()) {
            Ok(k) => k,
            Err(k) => k.min(n - 1),
        }
    };
    let anchor = rank_of(target);
    let mut picks: Vec<usize> = Vec::with_capacity(p);
    let mut sum = 0.0;
    if tight {
        // Adjacent ranks around the anchor: top-journal routing.
        for offset in 0..p.saturating_sub(1) {
            let pair = (offset as i64 + 2) / 2;
            let delta = pair * if offset % 2 == 0 { 1 } else { -1 };
            let k = (anchor as i64 + delta).clamp(0, n as i64 - 1) as usize;
            picks.push(sorted[k].1);
            sum += sorted[k].0;
        }
    } else {
        // Value-mirrored pairs around the target: each pair's mean sits
        // near the target regardless of the pool's skew, and the picks
        // keep genuine value spread in the article pool.
        let spread = 0.5 * (sorted[(0.84 * (n - 1) as f64) as usize].0
            - sorted[(0.16 * (n - 1) as f64) as usize].0);
        let m = p - 1;
        let mut offset = 0usize;
        while picks.len() < m {
            let pair = (offset / 2 + 1) as f64;
            let delta = pair * spread / ((m as f64 / 2.0) + 1.0);
            let value = if offset % 2 == 0 { target + delta } else { target - delta };
            let k = rank_of(value);
            picks.push(sorted[k].1);
            sum += sorted[k].0;
            offset += 1;
        }
    }
    // Final pick corrects the residual toward the exact target mean.
    let needed = target * p as f64 - sum;
    let k = rank_of(needed);
    picks.push(sorted[k].1);
    wy.journals = picks;
}

/// Build the raw career years the pipeline would compute from this output
/// (used by tests that bypass file I/O).
pub fn to_career_years(output: &SynthOutput) -> (Vec<CareerYearRaw>, BTreeMap<(String, i32), Vec<f64>>) {
    let table: BTreeMap<(String, i32), f64> = output
        .metric_rows
        .iter()
        .map(|(j, y, v)| ((j.clone(), *y), *v))
        .collect();
    let meta: BTreeMap<String, i32> = output
        .meta
        .iter()
        .map(|m| (m.researcher_id.clone(), m.phd_year))
        .collect();
    let mut grouped: BTreeMap<(String, String, i32), Vec<f64>> = BTreeMap::new();
    let mut pools: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for r in &output.publications {
        if let Some(&v) = table.get(&(r.journal_id.clone(), r.year)) {
            grouped
                .entry((r.researcher_id.clone(), r.discipline.clone(), r.year))
                .or_default()
                .push(v);
            pools.entry((r.discipline.clone(), r.year)).or_default().push(v);
        }
    }
    for v in pools.values_mut() {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let career_years = grouped
        .into_iter()
        .map(|((researcher_id, discipline, year), vs)| CareerYearRaw {
            career_age: year - meta[&researcher_id],
            researcher_id,
            discipline,
            year,
            p: vs.len() as u32,
            i: vs.iter().sum::<f64>() / vs.len() as f64,
        })
        .collect();
    (career_years, pools)
}

/// Standalone i.i.d. or Markov sector sequences (no raw corpus), used for
/// transition-null calibration at scale.
pub fn sector_sequences(
    plan: &MarkovPlan,
    n_researchers: usize,
    n_years: usize,
    start_year: i32,
    seed: u64,
) -> Vec<Vec<(i32, Sector)>> {
    let mut out = Vec::with_capacity(n_researchers);
    for r in 0..n_researchers {
        let mut stream = rng::substream(seed, &["sector-seq", &r.to_string()]);
        let draw = |probs: &[f64; 7], stream: &mut rand_chacha::ChaCha8Rng| -> usize {
            let u: f64 = stream.random();
            let mut acc = 0.0;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            6
        };
        let mut current = draw(&plan.initial, &mut stream);
        let mut seq = Vec::with_capacity(n_years);
        for t in 0..n_years {
            seq.push((start_year + t as i32, crate::plane::SECTORS[current]));
            current = draw(&plan.kernel[current], &mut stream);
        }
        out.push(seq);
    }
    out
}
