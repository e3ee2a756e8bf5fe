//! Pipeline orchestration: configuration, subcommands, artifacts.
//!
//! Each subcommand reads its upstream artifacts from the output directory,
//! writes versioned outputs under `<out>/<stage>/`, and records a
//! provenance manifest. Data outputs are byte-deterministic for a given
//! configuration and seed; only manifests (timings) and SVG plots are
//! exempt from byte identity.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{self, HierarchicalModelSpec};
use crate::career::{OccupancyOptions, TrendOptions, WindowAlignment};
use crate::corpus::{self, YearWindow};
use crate::manifest::ManifestBuilder;
use crate::normalize::{self, CareerYear, NormalizeOptions, NullMoments, NullSampling};
use crate::plane::{self, Sector, NON_OUTLIER_SECTORS, OUTLIER_SECTORS, SECTORS};
use crate::rng;
use crate::stats;
use crate::synth;
use crate::transitions::{self, GapPolicy};
use crate::{Error, Result};

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    1
}
fn default_realizations() -> usize {
    1000
}
fn default_shuffles() -> usize {
    10_000
}
fn default_tau() -> f64 {
    3.5
}
fn default_chains() -> usize {
    8
}
fn default_iters() -> usize {
    10_000
}
fn default_burn_in() -> usize {
    5_000
}
fn default_min_researchers() -> usize {
    50
}
fn default_year_min() -> i32 {
    1997
}
fn default_year_max() -> i32 {
    2015
}
fn default_occupancy_interval() -> u32 {
    5
}
fn default_occupancy_min() -> usize {
    20
}
fn default_trend_window() -> u32 {
    5
}
fn default_trend_min_obs() -> usize {
    5
}
fn default_trend_resamples() -> usize {
    1000
}
fn default_extreme_threshold() -> f64 {
    27.7
}
fn default_huber_c() -> f64 {
    crate::robust::DEFAULT_TUNING
}
fn default_huber_tol() -> f64 {
    crate::robust::DEFAULT_TOL
}
fn default_huber_max_iter() -> usize {
    crate::robust::DEFAULT_MAX_ITER
}
fn default_min_career_length() -> i32 {
    5
}
fn default_permutations() -> usize {
    100_000
}
fn default_null_sampling() -> NullSampling {
    NullSampling::WithReplacement
}
fn default_null_moments() -> NullMoments {
    NullMoments::Huber
}
fn default_gap_policy() -> GapPolicy {
    GapPolicy::Break
}
fn default_window_alignment() -> WindowAlignment {
    WindowAlignment::Centered
}

/// Full run configuration. Defaults reproduce the reference settings:
/// 1,000 null realizations, 10,000 shuffle realizations, tau = 3.5, and
/// 8 chains of 10,000 iterations with 5,000 burn-in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input files; default to the synth stage's outputs under `out`.
    pub publications: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub realizations: usize,
    pub shuffles: usize,
    pub tau: f64,
    pub chains: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub threads: Option<usize>,
    pub null_replacement: NullSampling,
    pub null_moments: NullMoments,
    pub gap_policy: GapPolicy,
    pub window: WindowAlignment,
    pub filter_min_researchers: usize,
    pub year_min: i32,
    pub year_max: i32,
    pub occupancy_interval: u32,
    pub occupancy_min_researchers: usize,
    pub trend_window: u32,
    pub trend_min_observations: usize,
    pub trend_resamples: usize,
    pub extreme_p_threshold: f64,
    pub huber_c: f64,
    pub huber_tol: f64,
    pub huber_max_iter: usize,
    /// Careers must be strictly longer than this to enter the Bayesian
    /// sample.
    pub min_career_length: i32,
    pub permutations: usize,
    /// Use the per-researcher null-table cache when present.
    pub use_null_cache: bool,
    /// Include researcher-level draws in the Bayesian draw export.
    pub export_researcher_draws: bool,
    /// Synthetic-corpus settings for the `synth` subcommand.
    pub synth: synth::SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            publications: None,
            metrics: None,
            meta: None,
            out: default_out(),
            seed: default_seed(),
            realizations: default_realizations(),
            shuffles: default_shuffles(),
            tau: default_tau(),
            chains: default_chains(),
            iters: default_iters(),
            burn_in: default_burn_in(),
            threads: None,
            null_replacement: default_null_sampling(),
            null_moments: default_null_moments(),
            gap_policy: default_gap_policy(),
            window: default_window_alignment(),
            filter_min_researchers: default_min_researchers(),
            year_min: default_year_min(),
            year_max: default_year_max(),
            occupancy_interval: default_occupancy_interval(),
            occupancy_min_researchers: default_occupancy_min(),
            trend_window: default_trend_window(),
            trend_min_observations: default_trend_min_obs(),
            trend_resamples: default_trend_resamples(),
            extreme_p_threshold: default_extreme_threshold(),
            huber_c: default_huber_c(),
            huber_tol: default_huber_tol(),
            huber_max_iter: default_huber_max_iter(),
            min_career_length: default_min_career_length(),
            permutations: default_permutations(),
            use_null_cache: false,
            export_researcher_draws: false,
            synth: synth::SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    pub fn normalize_options(&self) -> NormalizeOptions {
        NormalizeOptions {
            n_realizations: self.realizations,
            sampling: self.null_replacement,
            moments: self.null_moments,
            huber_c: self.huber_c,
            huber_tol: self.huber_tol,
            huber_max_iter: self.huber_max_iter,
        }
    }

    fn year_window(&self) -> YearWindow {
        YearWindow { min: self.year_min, max: self.year_max }
    }

    fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }

    fn corpus_paths(&self) -> (PathBuf, PathBuf, PathBuf) {
        let base = self.stage_dir("corpus");
        (
            self.publications.clone().unwrap_or_else(|| base.join("publications.csv")),
            self.metrics.clone().unwrap_or_else(|| base.join("metrics.csv")),
            self.meta.clone().unwrap_or_else(|| base.join("meta.csv")),
        )
    }

    fn settings_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serialization for {}: {e}", path.display())))?;
    write_file(path, &json)
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { path: path.into(), producer: producer.into() })
    }
}

// ---------------------------------------------------------------------
// Artifact readers/writers
// ---------------------------------------------------------------------

fn write_career_years(path: &Path, years: &[corpus::CareerYearRaw]) -> Result<()> {
    let mut out = String::from("researcher_id,discipline,year,p,i,career_age\n");
    for cy in years {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cy.researcher_id, cy.discipline, cy.year, cy.p, cy.i, cy.career_age
        ));
    }
    write_file(path, &out)
}

fn read_career_years(path: &Path) -> Result<Vec<corpus::CareerYearRaw>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedFile {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<corpus::CareerYearRaw>() {
        out.push(row.map_err(|e| Error::MalformedFile { path: path.into(), reason: e.to_string() })?);
    }
    Ok(out)
}

fn write_pools(path: &Path, pools: &BTreeMap<(String, i32), Vec<f64>>) -> Result<()> {
    let mut out = String::from("discipline,year,value\n");
    for ((discipline, year), values) in pools {
        for v in values {
            out.push_str(&format!("{discipline},{year},{v}\n"));
        }
    }
    write_file(path, &out)
}

fn read_pools(path: &Path) -> Result<BTreeMap<(String, i32), Vec<f64>>> {
    #[derive(Deserialize)]
    struct Row {
        discipline: String,
        year: i32,
        value: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedFile {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let mut pools: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::MalformedFile { path: path.into(), reason: e.to_string() })?;
        pools.entry((row.discipline, row.year)).or_default().push(row.value);
    }
    Ok(pools)
}

fn write_normalized(path: &Path, years: &[CareerYear]) -> Result<()> {
    let mut out =
        String::from("researcher_id,discipline,year,p,i,career_age,productivity_z,prestige_z\n");
    for cy in years {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cy.researcher_id,
            cy.discipline,
            cy.year,
            cy.p,
            cy.i,
            cy.career_age,
            cy.productivity_z,
            cy.prestige_z
        ));
    }
    write_file(path, &out)
}

fn read_normalized(path: &Path) -> Result<Vec<CareerYear>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedFile {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<CareerYear>() {
        out.push(row.map_err(|e| Error::MalformedFile { path: path.into(), reason: e.to_string() })?);
    }
    Ok(out)
}

fn read_phd_years(path: &Path) -> Result<BTreeMap<String, i32>> {
    let (meta, _) = corpus::load_researcher_meta(path)?;
    Ok(meta.into_iter().map(|m| (m.researcher_id, m.phd_year)).collect())
}

fn matrix_csv(matrix: &[[f64; 7]; 7], mask: Option<&[[bool; 7]; 7]>) -> String {
    let mut out = String::from("from\\to");
    for s in SECTORS {
        out.push(',');
        out.push_str(s.label());
    }
    out.push('\n');
    for (a, row) in matrix.iter().enumerate() {
        out.push_str(SECTORS[a].label());
        for (b, v) in row.iter().enumerate() {
            out.push(',');
            let defined = mask.map(|m| m[a][b]).unwrap_or(true);
            if defined {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

fn counts_csv(matrix: &[[u64; 7]; 7]) -> String {
    let mut out = String::from("from\\to");
    for s in SECTORS {
        out.push(',');
        out.push_str(s.label());
    }
    out.push('\n');
    for (a, row) in matrix.iter().enumerate() {
        out.push_str(SECTORS[a].label());
        for v in row.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

/// `synth`: write the synthetic corpus and its ground truth.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.stage_dir("corpus");
    ensure_dir(&dir)?;
    let mut synth_config = cfg.synth.clone();
    synth_config.master_seed = cfg.seed;
    let output = synth::generate_corpus(&synth_config)?;
    let paths = output.write_files(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "synth", cfg.seed, cfg.settings_json());
    for p in [&paths.publications, &paths.metrics, &paths.meta, &paths.ground_truth] {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!(
        "synth: {} publications, {} researchers, match rate {:.4}",
        output.publications.len(),
        output.meta.len(),
        output.ground_truth.match_rate
    );
    Ok(())
}

/// `ingest`: load, validate, dedup, join, build career series, filter
/// disciplines, and report inflation trends.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let (pubs_path, metrics_path, meta_path) = cfg.corpus_paths();
    require(&pubs_path, "synth")?;
    require(&metrics_path, "synth")?;
    require(&meta_path, "synth")?;

    let dir = cfg.stage_dir("ingest");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "ingest", cfg.seed, cfg.settings_json());
    manifest.input(&pubs_path)?;
    manifest.input(&metrics_path)?;
    manifest.input(&meta_path)?;

    let window = cfg.year_window();
    let (mut pubs, pub_report) = corpus::load_publications(&pubs_path, Some(window))?;
    let deduped = corpus::dedup_by_doi(&mut pubs);
    let (table, metric_report) = corpus::load_metric_table(&metrics_path)?;
    let (meta, meta_report) = corpus::load_researcher_meta(&meta_path)?;

    let (annotated, join) = corpus::join_metrics(&pubs, &table);
    let full = corpus::build_career_years(&annotated, &meta, join);
    let (filtered, filter_report) =
        corpus::filter_disciplines(&full, cfg.filter_min_researchers, window)?;
    if filtered.career_years.is_empty() {
        eprintln!("warning: no discipline passed the coverage filter");
    }
    let trends = if filtered.career_years.is_empty() {
        Vec::new()
    } else {
        let mut t = corpus::inflation_trend(&filtered, corpus::TrendGroup::Discipline)?;
        t.extend(corpus::inflation_trend(&filtered, corpus::TrendGroup::All)?);
        t
    };

    let career_path = dir.join("career_years.csv");
    write_career_years(&career_path, &filtered.career_years)?;
    let pools_path = dir.join("pools.csv");
    write_pools(&pools_path, &filtered.pools)?;

    let validation_path = dir.join("validation.json");
    write_json(
        &validation_path,
        &serde_json::json!({
            "publications": pub_report,
            "metrics": metric_report,
            "meta": meta_report,
            "deduplicated_rows": deduped,
            "join": {
                "total": filtered.join.total,
                "matched": filtered.join.matched,
                "match_rate": filtered.join.match_rate(),
            },
            "dropped_missing_meta": filtered.dropped_missing_meta,
            "phd_inconsistencies": filtered.phd_inconsistencies,
            "filter": filter_report,
        }),
    )?;

    let inflation_path = dir.join("inflation.csv");
    {
        let mut out =
            String::from("group,p_per_decade,p_se_per_decade,i_per_decade,i_se_per_decade,n_years\n");
        for t in &trends {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.group, t.p_per_decade, t.p_se_per_decade, t.i_per_decade, t.i_se_per_decade, t.n_years
            ));
        }
        write_file(&inflation_path, &out)?;
    }

    for p in [&career_path, &pools_path, &validation_path, &inflation_path] {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!(
        "ingest: {} career years in {} disciplines (match rate {:.4})",
        filtered.career_years.len(),
        filter_report.kept.len(),
        filtered.join.match_rate()
    );
    Ok(())
}

/// `normalize`: attach productivity and prestige standard scores.
pub fn cmd_normalize(cfg: &RunConfig) -> Result<()> {
    let ingest_dir = cfg.stage_dir("ingest");
    let career_path = ingest_dir.join("career_years.csv");
    let pools_path = ingest_dir.join("pools.csv");
    require(&career_path, "ingest")?;
    require(&pools_path, "ingest")?;

    let dir = cfg.stage_dir("normalize");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "normalize", cfg.seed, cfg.settings_json());
    manifest.input(&career_path)?;
    manifest.input(&pools_path)?;

    let career_years = read_career_years(&career_path)?;
    let pools = read_pools(&pools_path)?;
    let options = cfg.normalize_options();

    // Null-table cache: keyed by corpus content, seed, realizations and
    // sampling settings.
    let cache_key = format!(
        "{}-{}-{}-{:?}-{:?}",
        crate::manifest::sha256_file(&career_path)?,
        cfg.seed,
        options.n_realizations,
        options.sampling,
        options.moments,
    );
    let cache_path = dir.join("null_cache.json");

    #[derive(Serialize, Deserialize)]
    struct NullCache {
        key: String,
        entries: Vec<(String, i32, u32, normalize::NullStats)>,
    }

    let cached: Option<normalize::PrestigeNullTable> = if cfg.use_null_cache && cache_path.exists()
    {
        let bytes = std::fs::read(&cache_path).map_err(|e| Error::io(&cache_path, e))?;
        match serde_json::from_slice::<NullCache>(&bytes) {
            Ok(c) if c.key == cache_key => {
                Some(c.entries.into_iter().map(|(d, y, p, s)| ((d, y, p), s)).collect())
            }
            _ => None,
        }
    } else {
        None
    };

    let normalized = match cached {
        Some(table) => {
            normalize::normalize_with_tables(&career_years, &pools, &options, cfg.seed, Some(table))?
        }
        None => normalize::normalize_career_years(&career_years, &pools, &options, cfg.seed)?,
    };

    if cfg.use_null_cache {
        let cache = NullCache {
            key: cache_key,
            entries: normalized
                .prestige_null
                .iter()
                .map(|((d, y, p), s)| (d.clone(), *y, *p, *s))
                .collect(),
        };
        write_json(&cache_path, &cache)?;
    }

    let norm_path = dir.join("career_norm.csv");
    write_normalized(&norm_path, &normalized.career_years)?;

    let prod_path = dir.join("productivity_table.csv");
    {
        let mut out = String::from("discipline,year,location,scale,converged,iterations\n");
        for ((d, y), ls) in &normalized.productivity {
            out.push_str(&format!(
                "{d},{y},{},{},{},{}\n",
                ls.location, ls.scale, ls.converged, ls.iterations
            ));
        }
        write_file(&prod_path, &out)?;
    }
    let null_path = dir.join("null_table.csv");
    {
        let mut out = String::from("discipline,year,p,location,scale,n_realizations\n");
        for ((d, y, p), s) in &normalized.prestige_null {
            out.push_str(&format!("{d},{y},{p},{},{},{}\n", s.location, s.scale, s.n_realizations));
        }
        write_file(&null_path, &out)?;
    }
    let report_path = dir.join("normalize_report.json");
    write_json(&report_path, &normalized.report)?;

    for p in [&norm_path, &prod_path, &null_path, &report_path] {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!(
        "normalize: {} of {} career years scored ({} degenerate cells)",
        normalized.report.n_normalized,
        normalized.report.n_input,
        normalized.report.degenerate_productivity_cells.len()
            + normalized.report.degenerate_null_cells.len()
    );
    Ok(())
}

fn load_careers(cfg: &RunConfig) -> Result<Vec<plane::CareerRecord>> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let years = read_normalized(&norm_path)?;
    let (_, _, meta_path) = cfg.corpus_paths();
    let phd = if meta_path.exists() { read_phd_years(&meta_path)? } else { BTreeMap::new() };
    Ok(plane::assemble_careers(&years, &phd, cfg.tau))
}

/// `classify`: sector labels, researcher categories, Venn counts, and the
/// extreme-productivity listing.
pub fn cmd_classify(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("classify");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "classify", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let careers = load_careers(cfg)?;

    let sectors_path = dir.join("sectors.csv");
    {
        let mut out = String::from("researcher_id,discipline,year,prestige_z,productivity_z,sector\n");
        for c in &careers {
            for (cy, sector) in &c.years {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    cy.researcher_id,
                    cy.discipline,
                    cy.year,
                    cy.prestige_z,
                    cy.productivity_z,
                    sector.label()
                ));
            }
        }
        write_file(&sectors_path, &out)?;
    }

    let categories_path = dir.join("categories.csv");
    {
        let mut out = String::from(
            "researcher_id,discipline,phd_year,career_length,non_outlier,perfectionist,hyperprolific,hyperprolific_perfectionist\n",
        );
        for c in &careers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.researcher_id,
                c.discipline,
                c.phd_year,
                c.career_length,
                c.category.non_outlier,
                c.category.perfectionist,
                c.category.hyperprolific,
                c.category.hyperprolific_perfectionist
            ));
        }
        write_file(&categories_path, &out)?;
    }

    let venn = plane::venn_counts(&careers);
    let venn_path = dir.join("venn.json");
    write_json(&venn_path, &venn)?;

    let extreme = plane::extreme_hyperprolific(&careers, cfg.extreme_p_threshold);
    let extreme_path = dir.join("extreme_hyperprolific.csv");
    {
        let mut out = String::from("researcher_id,discipline,year,productivity_z,prestige_z,sector\n");
        for e in &extreme {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.researcher_id, e.discipline, e.year, e.productivity_z, e.prestige_z, e.sector
            ));
        }
        write_file(&extreme_path, &out)?;
    }

    // Sector summary for plotting: counts per sector.
    let mut sector_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &careers {
        for (_, s) in &c.years {
            *sector_counts.entry(s.label()).or_default() += 1;
        }
    }
    let summary_path = dir.join("sector_summary.json");
    write_json(
        &summary_path,
        &serde_json::json!({
            "tau": cfg.tau,
            "sector_year_counts": sector_counts,
            "venn": venn,
        }),
    )?;

    for p in [&sectors_path, &categories_path, &venn_path, &extreme_path, &summary_path] {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!(
        "classify: {} researchers ({} outliers), {} extreme years",
        venn.total,
        venn.outlier,
        extreme.len()
    );
    Ok(())
}

/// `transitions`: observed counts, shuffle-null moments, and relative
/// excess per researcher group.
pub fn cmd_transitions(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("transitions");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "transitions", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let careers = load_careers(cfg)?;
    let (outlier, non_outlier) = transitions::split_groups(&careers);

    let mut written = Vec::new();
    for (label, seqs) in [("outlier", &outlier), ("non_outlier", &non_outlier)] {
        if seqs.is_empty() {
            eprintln!("warning: no researchers in the {label} group");
            continue;
        }
        let observed = transitions::pooled_transitions(seqs, cfg.gap_policy);
        let null =
            transitions::shuffle_null(seqs, cfg.shuffles, cfg.gap_policy, cfg.seed, label)?;
        let excess = transitions::excess_matrix(&observed, &null);

        let obs_path = dir.join(format!("observed_{label}.csv"));
        write_file(&obs_path, &counts_csv(&observed.matrix))?;
        let mean_path = dir.join(format!("null_mean_{label}.csv"));
        write_file(&mean_path, &matrix_csv(&null.mean, None))?;
        let sd_path = dir.join(format!("null_sd_{label}.csv"));
        write_file(&sd_path, &matrix_csv(&null.sd, None))?;
        let excess_path = dir.join(format!("excess_{label}.csv"));
        write_file(&excess_path, &matrix_csv(&excess.excess, Some(&excess.defined)))?;
        written.extend([obs_path, mean_path, sd_path, excess_path]);
    }

    for p in &written {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!("transitions: {} shuffle realizations per group", cfg.shuffles);
    Ok(())
}

/// `entropy`: normalized sector-occupation entropy distributions.
pub fn cmd_entropy(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("entropy");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "entropy", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let careers = load_careers(cfg)?;
    let two_outlier: Vec<Sector> = vec![Sector::PrestigeOutlier, Sector::ProductivityOutlier];
    let variants: [(&str, &[Sector], bool); 3] = [
        ("outlier_all", &OUTLIER_SECTORS, true),
        ("outlier_no_both", &two_outlier, true),
        ("non_outlier", &NON_OUTLIER_SECTORS, false),
    ];

    let entropy_path = dir.join("entropy.csv");
    let mut out =
        String::from("researcher_id,discipline,variant,n_years_in_subset,n_sectors_occupied,entropy\n");
    let mut summaries: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &careers {
        let profile = plane::occupation_profile(c);
        for (variant, subset, outlier_group) in &variants {
            if c.category.is_outlier() != *outlier_group {
                continue;
            }
            let Ok(h) = plane::sector_entropy(&profile, subset) else { continue };
            let n_in: usize = c.years.iter().filter(|(_, s)| subset.contains(s)).count();
            let occupied = subset
                .iter()
                .filter(|s| profile.fractions[s.index()] > 0.0)
                .count();
            out.push_str(&format!(
                "{},{},{variant},{n_in},{occupied},{h}\n",
                c.researcher_id, c.discipline
            ));
            if occupied >= 2 || !*outlier_group {
                summaries.entry(variant.to_string()).or_default().push(h);
            }
        }
    }
    write_file(&entropy_path, &out)?;

    let summary_path = dir.join("entropy_summary.json");
    let summary: BTreeMap<String, serde_json::Value> = summaries
        .iter()
        .map(|(variant, hs)| {
            (
                variant.clone(),
                serde_json::json!({
                    "n": hs.len(),
                    "mean": crate::numeric::mean(hs),
                    "median": crate::numeric::median(hs),
                }),
            )
        })
        .collect();
    write_json(&summary_path, &summary)?;

    manifest.output(&entropy_path)?;
    manifest.output(&summary_path)?;
    manifest.write(&dir)?;
    println!("entropy: {} researchers", careers.len());
    Ok(())
}

/// `logistic`: perfectionist probability against hyperprolific years (per
/// discipline and pooled) and against career length.
pub fn cmd_logistic(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("logistic");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "logistic", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let careers = load_careers(cfg)?;

    let mut per_discipline: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut by_disc: BTreeMap<String, Vec<&plane::CareerRecord>> = BTreeMap::new();
    for c in &careers {
        by_disc.entry(c.discipline.clone()).or_default().push(c);
    }
    for (disc, group) in &by_disc {
        let owned: Vec<plane::CareerRecord> = group.iter().map(|c| (*c).clone()).collect();
        match crate::career::perfectionist_vs_hyperprolific_years(&owned) {
            Ok(fit) => {
                per_discipline.insert(disc.clone(), serde_json::to_value(&fit).unwrap());
            }
            Err(e) => {
                per_discipline.insert(disc.clone(), serde_json::json!({"error": e.to_string()}));
            }
        }
    }
    let pooled_yp = crate::career::perfectionist_vs_hyperprolific_years(&careers);
    let length_fit = crate::career::perfectionist_vs_length(&careers);

    let fits_path = dir.join("logistic_fits.json");
    write_json(
        &fits_path,
        &serde_json::json!({
            "hyperprolific_years_pooled": pooled_yp.as_ref().map(|f| serde_json::to_value(f).unwrap()).unwrap_or_else(|e| serde_json::json!({"error": e.to_string()})),
            "hyperprolific_years_per_discipline": per_discipline,
            "career_length": length_fit.as_ref().map(|f| serde_json::to_value(f).unwrap()).unwrap_or_else(|e| serde_json::json!({"error": e.to_string()})),
        }),
    )?;

    // Group mean comparisons with permutation tests: both-category
    // researchers against exclusive ones on mean P and mean I.
    let mut both_p = Vec::new();
    let mut both_i = Vec::new();
    let mut hyper_p = Vec::new();
    let mut hyper_i = Vec::new();
    let mut perf_p = Vec::new();
    let mut perf_i = Vec::new();
    for c in &careers {
        for (cy, _) in &c.years {
            if c.category.perfectionist && c.category.hyperprolific {
                both_p.push(cy.productivity_z);
                both_i.push(cy.prestige_z);
            } else if c.category.exclusively_hyperprolific() {
                hyper_p.push(cy.productivity_z);
                hyper_i.push(cy.prestige_z);
            } else if c.category.exclusively_perfectionist() {
                perf_p.push(cy.productivity_z);
                perf_i.push(cy.prestige_z);
            }
        }
    }
    let mut comparisons = serde_json::Map::new();
    for (name, a, b) in [
        ("both_vs_hyperprolific_productivity", &both_p, &hyper_p),
        ("both_vs_perfectionist_productivity", &both_p, &perf_p),
        ("both_vs_hyperprolific_prestige", &both_i, &hyper_i),
        ("both_vs_perfectionist_prestige", &both_i, &perf_i),
    ] {
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let seed = rng::derive_seed(cfg.seed, &["perm", name]);
        let result = stats::permutation_test(a, b, cfg.permutations, seed)?;
        comparisons.insert(name.to_string(), serde_json::to_value(result).unwrap());
    }
    let comparisons_path = dir.join("group_comparisons.json");
    write_json(&comparisons_path, &serde_json::Value::Object(comparisons))?;

    manifest.output(&fits_path)?;
    manifest.output(&comparisons_path)?;
    manifest.write(&dir)?;
    println!("logistic: fits for {} disciplines", by_disc.len());
    Ok(())
}

/// `career`: sliding-window trends and occupancy matrices.
pub fn cmd_career(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("career");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "career", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let years = read_normalized(&norm_path)?;
    let careers = load_careers(cfg)?;

    let trend_options = TrendOptions {
        window: cfg.trend_window,
        alignment: cfg.window,
        min_observations: cfg.trend_min_observations,
        n_resamples: cfg.trend_resamples,
        level: 0.95,
    };
    let trends = crate::career::sliding_window_trends(
        &years,
        &trend_options,
        rng::derive_seed(cfg.seed, &["trend"]),
    )?;
    let trends_path = dir.join("trends.csv");
    {
        let mut out = String::from(
            "discipline,age,mean_productivity_z,productivity_lo,productivity_hi,mean_prestige_z,prestige_lo,prestige_hi,n\n",
        );
        for series in &trends {
            for pt in &series.points {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    series.discipline,
                    pt.age,
                    pt.mean_productivity_z,
                    pt.productivity_lo,
                    pt.productivity_hi,
                    pt.mean_prestige_z,
                    pt.prestige_lo,
                    pt.prestige_hi,
                    pt.n
                ));
            }
        }
        write_file(&trends_path, &out)?;
    }

    let occupancy = crate::career::occupancy_matrix(
        &careers,
        &OccupancyOptions {
            interval: cfg.occupancy_interval,
            min_researchers: cfg.occupancy_min_researchers,
        },
    )?;
    let occupancy_path = dir.join("occupancy.csv");
    {
        let mut out =
            String::from("discipline,interval_index,age_lo,age_hi,sector,fraction,n_researchers\n");
        for matrix in &occupancy {
            for column in &matrix.columns {
                for (k, sector) in SECTORS.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        matrix.discipline,
                        column.interval_index,
                        column.age_lo,
                        column.age_hi,
                        sector.label(),
                        column.fractions[k],
                        column.n_researchers
                    ));
                }
            }
        }
        write_file(&occupancy_path, &out)?;
    }

    manifest.output(&trends_path)?;
    manifest.output(&occupancy_path)?;
    manifest.write(&dir)?;
    println!(
        "career: {} trend series, {} occupancy matrices",
        trends.len(),
        occupancy.len()
    );
    Ok(())
}

/// `bayes`: hierarchical fits per discipline, with and without the career
/// age term.
pub fn cmd_bayes(cfg: &RunConfig) -> Result<()> {
    let norm_path = cfg.stage_dir("normalize").join("career_norm.csv");
    require(&norm_path, "normalize")?;
    let dir = cfg.stage_dir("bayes");
    ensure_dir(&dir)?;
    let mut manifest = ManifestBuilder::new(&cfg.out, "bayes", cfg.seed, cfg.settings_json());
    manifest.input(&norm_path)?;

    let careers = load_careers(cfg)?;
    let selection = bayes::select_bayes_sample(&careers, cfg.min_career_length);
    for (disc, n) in &selection.skipped {
        eprintln!("warning: discipline {disc} skipped ({n} eligible researchers)");
    }

    let mut written = Vec::new();
    let mut all_summaries: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut density_rows = String::from("discipline,model,parameter,x,density\n");

    for (disc, data) in &selection.by_discipline {
        for include_age in [false, true] {
            let model = if include_age { "with_age" } else { "without_age" };
            let spec = HierarchicalModelSpec {
                include_age,
                chains: cfg.chains,
                iterations: cfg.iters,
                burn_in: cfg.burn_in,
                ..HierarchicalModelSpec::default()
            };
            let samples = bayes::fit_hierarchical(data, &spec, cfg.seed, &format!("{disc}-{model}"))?;
            let summary = bayes::posterior_summary(&samples);
            all_summaries
                .insert(format!("{disc}/{model}"), serde_json::to_value(&summary).unwrap());

            // Group-level draw export.
            let draws_path = dir.join(format!("draws_{disc}_{model}.csv"));
            {
                let mut out = String::from("chain,iteration,parameter,value\n");
                for (chain_idx, chain) in samples.chains.iter().enumerate() {
                    for name in samples.group_param_names() {
                        let draws = samples.group_param(name).unwrap()[chain_idx];
                        for (iter, v) in draws.iter().enumerate() {
                            out.push_str(&format!("{chain_idx},{iter},{name},{v}\n"));
                        }
                    }
                    if cfg.export_researcher_draws {
                        for (j, id) in samples.researcher_ids.iter().enumerate() {
                            for (iter, v) in chain.intercepts[j].iter().enumerate() {
                                out.push_str(&format!("{chain_idx},{iter},intercept[{id}],{v}\n"));
                            }
                            for (iter, v) in chain.slopes_p[j].iter().enumerate() {
                                out.push_str(&format!("{chain_idx},{iter},slope_p[{id}],{v}\n"));
                            }
                            if include_age {
                                for (iter, v) in chain.slopes_a[j].iter().enumerate() {
                                    out.push_str(&format!("{chain_idx},{iter},slope_a[{id}],{v}\n"));
                                }
                            }
                        }
                    }
                }
                write_file(&draws_path, &out)?;
            }
            written.push(draws_path);

            for param in ["mu_p", "mu_a"] {
                if let Some((grid, density)) = bayes::density_export(&samples, param, 201) {
                    for (x, d) in grid.iter().zip(&density) {
                        density_rows.push_str(&format!("{disc},{model},{param},{x},{d}\n"));
                    }
                }
            }
        }
    }

    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &all_summaries)?;
    let density_path = dir.join("density.csv");
    write_file(&density_path, &density_rows)?;
    written.push(summary_path);
    written.push(density_path);

    for p in &written {
        manifest.output(p)?;
    }
    manifest.write(&dir)?;
    println!(
        "bayes: {} disciplines fitted ({} chains x {} iterations)",
        selection.by_discipline.len(),
        cfg.chains,
        cfg.iters
    );
    Ok(())
}

/// `report`: collect tables and render the figures.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    crate::report::write_report(cfg)
}

/// Names of all subcommands in dependency order.
pub const STAGES: [&str; 10] = [
    "synth",
    "ingest",
    "normalize",
    "classify",
    "transitions",
    "entropy",
    "logistic",
    "career",
    "bayes",
    "report",
];

/// Dispatch one subcommand.
pub fn run_subcommand(name: &str, cfg: &RunConfig) -> Result<()> {
    if let Some(threads) = cfg.threads {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match name {
        "synth" => cmd_synth(cfg),
        "ingest" => cmd_ingest(cfg),
        "normalize" => cmd_normalize(cfg),
        "classify" => cmd_classify(cfg),
        "transitions" => cmd_transitions(cfg),
        "entropy" => cmd_entropy(cfg),
        "logistic" => cmd_logistic(cfg),
        "career" => cmd_career(cfg),
        "bayes" => cmd_bayes(cfg),
        "report" => cmd_report(cfg),
        other => Err(Error::Config(format!("unknown subcommand {other}"))),
    }
}
