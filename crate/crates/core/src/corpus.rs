//! Ingestion: load, validate, join and filter publication data into
//! per-researcher yearly career series.
//!
//! File schemas (CSV with header row, or JSON Lines with the same field
//! names when the extension is `.jsonl`):
//!
//! - publications: `researcher_id,discipline,year,journal_id,doi`
//! - journal metrics: `journal_id,year,value`
//! - researcher meta: `researcher_id,discipline,phd_year`
//!
//! Duplicate `(researcher_id, doi)` rows are dropped before counting, so
//! productivity counts distinct articles. Articles whose journal has no
//! metric value for the publication year are excluded from both the count
//! and the mean; the match rate is reported so the loss is visible.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::ols_line;
use crate::{Error, Result};

/// One article: the atom of ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub researcher_id: String,
    pub discipline: String,
    pub year: i32,
    pub journal_id: String,
    #[serde(default)]
    pub doi: Option<String>,
}

/// Researcher metadata carrying the career-age origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearcherMeta {
    pub researcher_id: String,
    pub discipline: String,
    pub phd_year: i32,
}

/// Time-varying journal metric table keyed by `(journal_id, year)`.
#[derive(Debug, Clone, Default)]
pub struct JournalMetricTable {
    entries: BTreeMap<(String, i32), f64>,
}

impl JournalMetricTable {
    pub fn insert(&mut self, journal_id: String, year: i32, value: f64) -> Result<()> {
        if value < 0.0 {
            return Err(Error::Data(format!(
                "negative metric value {value} for journal {journal_id} in {year}"
            )));
        }
        if self.entries.insert((journal_id.clone(), year), value).is_some() {
            return Err(Error::Data(format!(
                "duplicate metric entry for journal {journal_id} in {year}"
            )));
        }
        Ok(())
    }

    /// Exact-year lookup: a value for another year never matches.
    pub fn get(&self, journal_id: &str, year: i32) -> Option<f64> {
        self.entries.get(&(journal_id.to_string(), year)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One researcher-year with raw productivity and mean journal metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareerYearRaw {
    pub researcher_id: String,
    pub discipline: String,
    pub year: i32,
    /// Count of matched articles in the year (at least 1 by construction).
    pub p: u32,
    /// Arithmetic mean metric of the matched articles.
    pub i: f64,
    /// Career age: year minus PhD year.
    pub career_age: i32,
}

/// Row-level rejection collected during loading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowRejection {
    pub line: usize,
    pub reason: String,
}

/// Validation outcome of one loaded file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub path: String,
    pub accepted: usize,
    pub rejections: Vec<RowRejection>,
}

/// Inclusive calendar window applied during validation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct YearWindow {
    pub min: i32,
    pub max: i32,
}

impl YearWindow {
    pub fn contains(&self, year: i32) -> bool {
        (self.min..=self.max).contains(&year)
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut buf = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().map(|e| e == "jsonl").unwrap_or(false)
}

/// Generic loader: parses each row of a CSV (or JSONL) file into `T`, then
/// runs `validate`; invalid rows become line-numbered rejections.
fn load_rows<T, F>(path: &Path, validate: F) -> Result<(Vec<T>, ValidationReport)>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    let mut report = ValidationReport {
        path: path.display().to_string(),
        ..ValidationReport::default()
    };

    if is_jsonl(path) {
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<T>(line) {
                Ok(row) => match validate(&row) {
                    Ok(()) => {
                        report.accepted += 1;
                        rows.push(row);
                    }
                    Err(reason) => report.rejections.push(RowRejection { line: lineno, reason }),
                },
                Err(e) => report
                    .rejections
                    .push(RowRejection { line: lineno, reason: format!("parse error: {e}") }),
            }
        }
    } else {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::MalformedFile { path: path.into(), reason: e.to_string() })?
            .clone();
        if headers.is_empty() {
            return Err(Error::MalformedFile { path: path.into(), reason: "missing header row".into() });
        }
        for (idx, record) in reader.into_records().enumerate() {
            let lineno = idx + 2; // header is line 1
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    report
                        .rejections
                        .push(RowRejection { line: lineno, reason: format!("csv error: {e}") });
                    continue;
                }
            };
            match record.deserialize::<T>(Some(&headers)) {
                Ok(row) => match validate(&row) {
                    Ok(()) => {
                        report.accepted += 1;
                        rows.push(row);
                    }
                    Err(reason) => report.rejections.push(RowRejection { line: lineno, reason }),
                },
                Err(e) => report
                    .rejections
                    .push(RowRejection { line: lineno, reason: format!("parse error: {e}") }),
            }
        }
    }
    Ok((rows, report))
}

/// Load publication records; malformed rows are collected, an unreadable or
/// headerless file is fatal. `window`, when given, rejects out-of-range years.
pub fn load_publications(
    path: &Path,
    window: Option<YearWindow>,
) -> Result<(Vec<PublicationRecord>, ValidationReport)> {
    let (mut rows, report) = load_rows::<PublicationRecord, _>(path, |r| {
        if r.researcher_id.is_empty() {
            return Err("empty researcher_id".into());
        }
        if r.discipline.is_empty() {
            return Err("empty discipline".into());
        }
        if r.journal_id.is_empty() {
            return Err("empty journal_id".into());
        }
        if let Some(w) = window {
            if !w.contains(r.year) {
                return Err(format!("year {} outside window {}..={}", r.year, w.min, w.max));
            }
        }
        Ok(())
    })?;
    // Normalize empty-string DOIs from CSV to None.
    for r in &mut rows {
        if r.doi.as_deref() == Some("") {
            r.doi = None;
        }
    }
    Ok((rows, report))
}

/// Load researcher metadata.
pub fn load_researcher_meta(path: &Path) -> Result<(Vec<ResearcherMeta>, ValidationReport)> {
    load_rows::<ResearcherMeta, _>(path, |r| {
        if r.researcher_id.is_empty() {
            return Err("empty researcher_id".into());
        }
        if r.discipline.is_empty() {
            return Err("empty discipline".into());
        }
        Ok(())
    })
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    journal_id: String,
    year: i32,
    value: f64,
}

/// Load the journal metric table; duplicate `(journal, year)` keys and
/// negative values are row-level rejections.
pub fn load_metric_table(path: &Path) -> Result<(JournalMetricTable, ValidationReport)> {
    let (rows, mut report) = load_rows::<MetricRow, _>(path, |r| {
        if r.journal_id.is_empty() {
            return Err("empty journal_id".into());
        }
        if !(r.value >= 0.0) {
            return Err(format!("metric value {} is not a non-negative number", r.value));
        }
        Ok(())
    })?;
    let mut table = JournalMetricTable::default();
    let mut seen_dup = 0usize;
    for (k, row) in rows.into_iter().enumerate() {
        if table.insert(row.journal_id.clone(), row.year, row.value).is_err() {
            seen_dup += 1;
            report.rejections.push(RowRejection {
                line: k + 2,
                reason: format!("duplicate key ({}, {})", row.journal_id, row.year),
            });
        }
    }
    report.accepted -= seen_dup;
    Ok((table, report))
}

/// Drop exact `(researcher_id, doi)` duplicates, keeping first occurrence.
/// Rows without a DOI are kept as-is. Returns the number removed.
pub fn dedup_by_doi(records: &mut Vec<PublicationRecord>) -> usize {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let before = records.len();
    records.retain(|r| match &r.doi {
        Some(doi) => seen.insert((r.researcher_id.clone(), doi.clone())),
        None => true,
    });
    before - records.len()
}

/// Join outcome summary.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct JoinReport {
    pub total: usize,
    pub matched: usize,
}

impl JoinReport {
    pub fn match_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

/// Annotate each record with its exact `(journal, year)` metric value.
/// A missing metric is a reported outcome, not an error.
pub fn join_metrics(
    records: &[PublicationRecord],
    table: &JournalMetricTable,
) -> (Vec<(PublicationRecord, Option<f64>)>, JoinReport) {
    let mut out = Vec::with_capacity(records.len());
    let mut matched = 0usize;
    for r in records {
        let v = table.get(&r.journal_id, r.year);
        if v.is_some() {
            matched += 1;
        }
        out.push((r.clone(), v));
    }
    let report = JoinReport { total: records.len(), matched };
    (out, report)
}

/// Tolerance for the PhD-year sanity check: a PhD year more than this
/// many years after the researcher's first publication is flagged.
pub const PHD_YEAR_TOLERANCE: i32 = 5;

/// Career series plus the per-discipline-year article metric pools the
/// prestige null samples from.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub career_years: Vec<CareerYearRaw>,
    /// All matched article metric values per `(discipline, year)`.
    pub pools: BTreeMap<(String, i32), Vec<f64>>,
    pub meta: BTreeMap<String, ResearcherMeta>,
    pub join: JoinReport,
    /// Matched records dropped because the researcher has no metadata.
    pub dropped_missing_meta: usize,
    /// Researchers whose PhD year trails their first publication by more
    /// than [`PHD_YEAR_TOLERANCE`] years; flagged, never fatal.
    pub phd_inconsistencies: Vec<String>,
}

/// Aggregate annotated records into one `CareerYearRaw` per
/// `(researcher, year)` with at least one matched article.
///
/// Unmatched records are excluded. Records of researchers absent from
/// `meta` are dropped and counted. Output ordering and the metric pools
/// are independent of input row order.
pub fn build_career_years(
    annotated: &[(PublicationRecord, Option<f64>)],
    meta: &[ResearcherMeta],
    join: JoinReport,
) -> Corpus {
    let meta_map: BTreeMap<String, ResearcherMeta> =
        meta.iter().map(|m| (m.researcher_id.clone(), m.clone())).collect();

    let mut groups: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    let mut disciplines: BTreeMap<(String, i32), String> = BTreeMap::new();
    let mut pools: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    let mut dropped_missing_meta = 0usize;

    for (rec, metric) in annotated {
        let Some(metric) = metric else { continue };
        if !meta_map.contains_key(&rec.researcher_id) {
            dropped_missing_meta += 1;
            continue;
        }
        groups
            .entry((rec.researcher_id.clone(), rec.year))
            .or_default()
            .push(*metric);
        disciplines
            .entry((rec.researcher_id.clone(), rec.year))
            .or_insert_with(|| rec.discipline.clone());
        pools.entry((rec.discipline.clone(), rec.year)).or_default().push(*metric);
    }

    // Within-pool order must not depend on input row order.
    for pool in pools.values_mut() {
        pool.sort_by(|a, b| a.partial_cmp(b).expect("non-finite metric"));
    }

    let mut career_years = Vec::with_capacity(groups.len());
    let mut first_pub: BTreeMap<String, i32> = BTreeMap::new();
    for ((researcher_id, year), metrics) in groups {
        let discipline = disciplines[&(researcher_id.clone(), year)].clone();
        let phd_year = meta_map[&researcher_id].phd_year;
        let p = metrics.len() as u32;
        let i = metrics.iter().sum::<f64>() / metrics.len() as f64;
        first_pub
            .entry(researcher_id.clone())
            .and_modify(|y| *y = (*y).min(year))
            .or_insert(year);
        career_years.push(CareerYearRaw {
            researcher_id,
            discipline,
            year,
            p,
            i,
            career_age: year - phd_year,
        });
    }

    let phd_inconsistencies: Vec<String> = first_pub
        .iter()
        .filter(|(id, &first)| meta_map[*id].phd_year > first + PHD_YEAR_TOLERANCE)
        .map(|(id, _)| id.clone())
        .collect();

    Corpus { career_years, pools, meta: meta_map, join, dropped_missing_meta, phd_inconsistencies }
}

/// Outcome of the discipline coverage filter.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    /// Dropped disciplines with the first failing year and its count.
    pub dropped: Vec<(String, i32, usize)>,
    pub min_researchers: usize,
    pub year_min: i32,
    pub year_max: i32,
}

/// Keep only disciplines with at least `min_researchers` distinct
/// researchers having a career year in every year of `years`.
pub fn filter_disciplines(
    corpus: &Corpus,
    min_researchers: usize,
    years: YearWindow,
) -> Result<(Corpus, FilterReport)> {
    if min_researchers < 1 {
        return Err(Error::Config("min_researchers must be at least 1".into()));
    }
    // discipline -> year -> distinct researcher count
    let mut coverage: BTreeMap<&str, BTreeMap<i32, BTreeSet<&str>>> = BTreeMap::new();
    for cy in &corpus.career_years {
        coverage
            .entry(&cy.discipline)
            .or_default()
            .entry(cy.year)
            .or_default()
            .insert(&cy.researcher_id);
    }

    let mut report = FilterReport {
        min_researchers,
        year_min: years.min,
        year_max: years.max,
        ..FilterReport::default()
    };
    for (disc, by_year) in &coverage {
        let mut failing = None;
        for year in years.min..=years.max {
            let n = by_year.get(&year).map(|s| s.len()).unwrap_or(0);
            if n < min_researchers {
                failing = Some((year, n));
                break;
            }
        }
        match failing {
            None => report.kept.push(disc.to_string()),
            Some((year, n)) => report.dropped.push((disc.to_string(), year, n)),
        }
    }

    let kept: BTreeSet<&str> = report.kept.iter().map(|s| s.as_str()).collect();
    let filtered = Corpus {
        career_years: corpus
            .career_years
            .iter()
            .filter(|cy| kept.contains(cy.discipline.as_str()))
            .cloned()
            .collect(),
        pools: corpus
            .pools
            .iter()
            .filter(|((d, _), _)| kept.contains(d.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        meta: corpus
            .meta
            .iter()
            .filter(|(_, m)| kept.contains(m.discipline.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        join: corpus.join,
        dropped_missing_meta: corpus.dropped_missing_meta,
        phd_inconsistencies: corpus.phd_inconsistencies.clone(),
    };
    Ok((filtered, report))
}

/// Which career years feed a trend computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendGroup {
    All,
    Discipline,
}

/// Per-decade drift of yearly mean productivity and mean journal metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InflationTrend {
    pub group: String,
    /// Slope of yearly mean p against calendar year, in papers per decade.
    pub p_per_decade: f64,
    pub p_se_per_decade: f64,
    /// Slope of yearly mean i against calendar year, in metric units per decade.
    pub i_per_decade: f64,
    pub i_se_per_decade: f64,
    pub n_years: usize,
}

/// OLS slope of the yearly means of `p` and `i` against calendar year,
/// scaled to units per decade. Needs at least two distinct years.
pub fn inflation_trend(corpus: &Corpus, group: TrendGroup) -> Result<Vec<InflationTrend>> {
    let mut grouped: BTreeMap<String, BTreeMap<i32, (Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    for cy in &corpus.career_years {
        let key = match group {
            TrendGroup::All => "all".to_string(),
            TrendGroup::Discipline => cy.discipline.clone(),
        };
        let cell = grouped.entry(key).or_default().entry(cy.year).or_default();
        cell.0.push(cy.p as f64);
        cell.1.push(cy.i);
    }

    let mut out = Vec::new();
    for (key, by_year) in grouped {
        if by_year.len() < 2 {
            return Err(Error::Data(format!(
                "inflation trend for {key} needs at least 2 distinct years, found {}",
                by_year.len()
            )));
        }
        let years: Vec<f64> = by_year.keys().map(|&y| y as f64).collect();
        let mean_p: Vec<f64> =
            by_year.values().map(|(ps, _)| ps.iter().sum::<f64>() / ps.len() as f64).collect();
        let mean_i: Vec<f64> =
            by_year.values().map(|(_, is)| is.iter().sum::<f64>() / is.len() as f64).collect();
        let (_, slope_p, se_p) = ols_line(&years, &mean_p)
            .ok_or_else(|| Error::Numerical(format!("degenerate year axis for {key}")))?;
        let (_, slope_i, se_i) = ols_line(&years, &mean_i)
            .ok_or_else(|| Error::Numerical(format!("degenerate year axis for {key}")))?;
        out.push(InflationTrend {
            group: key,
            p_per_decade: slope_p * 10.0,
            p_se_per_decade: se_p * 10.0,
            i_per_decade: slope_i * 10.0,
            i_se_per_decade: se_i * 10.0,
            n_years: by_year.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_tmp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("careerplane-corpus-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_well_formed_publications() {
        let path = write_tmp(
            "pubs_ok.csv",
            "researcher_id,discipline,year,journal_id,doi\n\
             r1,phys,2005,j1,10.1/a\n\
             r1,phys,2005,j2,\n\
             r2,chem,2006,j1,10.1/b\n",
        );
        let (rows, report) = load_publications(&path, None).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(report.rejections.is_empty());
        assert_eq!(rows[1].doi, None);
    }

    #[test]
    fn empty_researcher_id_is_rejected_not_fatal() {
        let path = write_tmp(
            "pubs_bad.csv",
            "researcher_id,discipline,year,journal_id,doi\n\
             ,phys,2005,j1,\n\
             r2,phys,2005,j1,\n",
        );
        let (rows, report) = load_publications(&path, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].line, 2);
    }

    #[test]
    fn year_window_is_enforced() {
        let path = write_tmp(
            "pubs_window.csv",
            "researcher_id,discipline,year,journal_id,doi\n\
             r1,phys,1990,j1,\n\
             r1,phys,2005,j1,\n",
        );
        let (rows, report) =
            load_publications(&path, Some(YearWindow { min: 1997, max: 2015 })).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.rejections.len(), 1);
    }

    #[test]
    fn malformed_file_is_fatal() {
        let missing = std::path::Path::new("/nonexistent/nope.csv");
        assert!(load_publications(missing, None).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let path = write_tmp(
            "pubs.jsonl",
            "{\"researcher_id\":\"r1\",\"discipline\":\"phys\",\"year\":2005,\"journal_id\":\"j1\",\"doi\":null}\n",
        );
        let (rows, report) = load_publications(&path, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(report.rejections.is_empty());
    }

    #[test]
    fn join_is_exact_on_year() {
        let mut table = JournalMetricTable::default();
        table.insert("J".into(), 2004, 2.0).unwrap();
        let rec = PublicationRecord {
            researcher_id: "r".into(),
            discipline: "d".into(),
            year: 2005,
            journal_id: "J".into(),
            doi: None,
        };
        let (out, report) = join_metrics(&[rec.clone()], &table);
        assert_eq!(out[0].1, None);
        assert_eq!(report.matched, 0);

        table.insert("J".into(), 2005, 3.0).unwrap();
        let (out, report) = join_metrics(&[rec], &table);
        assert_eq!(out[0].1, Some(3.0));
        assert_abs_diff_eq!(report.match_rate(), 1.0);
    }

    fn sample_corpus() -> Corpus {
        let meta = vec![ResearcherMeta {
            researcher_id: "r1".into(),
            discipline: "phys".into(),
            phd_year: 2000,
        }];
        let recs: Vec<(PublicationRecord, Option<f64>)> = vec![1.0, 2.0, 3.0]
            .into_iter()
            .enumerate()
            .map(|(k, v)| {
                (
                    PublicationRecord {
                        researcher_id: "r1".into(),
                        discipline: "phys".into(),
                        year: 2010,
                        journal_id: format!("j{k}"),
                        doi: None,
                    },
                    Some(v),
                )
            })
            .collect();
        build_career_years(&recs, &meta, JoinReport { total: 3, matched: 3 })
    }

    #[test]
    fn career_year_mean_and_age() {
        let corpus = sample_corpus();
        assert_eq!(corpus.career_years.len(), 1);
        let cy = &corpus.career_years[0];
        assert_eq!(cy.p, 3);
        assert_abs_diff_eq!(cy.i, 2.0);
        assert_eq!(cy.career_age, 10);
    }

    #[test]
    fn first_career_year_is_year_after_phd() {
        let meta = vec![ResearcherMeta {
            researcher_id: "r".into(),
            discipline: "d".into(),
            phd_year: 2000,
        }];
        let recs = vec![(
            PublicationRecord {
                researcher_id: "r".into(),
                discipline: "d".into(),
                year: 2001,
                journal_id: "j".into(),
                doi: None,
            },
            Some(1.0),
        )];
        let corpus = build_career_years(&recs, &meta, JoinReport::default());
        assert_eq!(corpus.career_years[0].career_age, 1);
    }

    #[test]
    fn missing_meta_drops_records() {
        let recs = vec![(
            PublicationRecord {
                researcher_id: "ghost".into(),
                discipline: "d".into(),
                year: 2001,
                journal_id: "j".into(),
                doi: None,
            },
            Some(1.0),
        )];
        let corpus = build_career_years(&recs, &[], JoinReport::default());
        assert!(corpus.career_years.is_empty());
        assert_eq!(corpus.dropped_missing_meta, 1);
    }

    #[test]
    fn dedup_drops_repeated_doi() {
        let mk = |doi: Option<&str>| PublicationRecord {
            researcher_id: "r".into(),
            discipline: "d".into(),
            year: 2001,
            journal_id: "j".into(),
            doi: doi.map(String::from),
        };
        let mut recs = vec![mk(Some("10.1/x")), mk(Some("10.1/x")), mk(None), mk(None)];
        let removed = dedup_by_doi(&mut recs);
        assert_eq!(removed, 1);
        assert_eq!(recs.len(), 3);
    }

    #[test]
    fn row_order_does_not_change_career_years() {
        let meta = vec![
            ResearcherMeta { researcher_id: "a".into(), discipline: "d".into(), phd_year: 1999 },
            ResearcherMeta { researcher_id: "b".into(), discipline: "d".into(), phd_year: 1998 },
        ];
        let mut recs = Vec::new();
        for (rid, year, journal, v) in [
            ("a", 2001, "j1", 1.0),
            ("a", 2001, "j2", 3.0),
            ("b", 2001, "j3", 2.0),
            ("a", 2002, "j1", 5.0),
        ] {
            recs.push((
                PublicationRecord {
                    researcher_id: rid.into(),
                    discipline: "d".into(),
                    year,
                    journal_id: journal.into(),
                    doi: None,
                },
                Some(v),
            ));
        }
        let forward = build_career_years(&recs, &meta, JoinReport::default());
        recs.reverse();
        let backward = build_career_years(&recs, &meta, JoinReport::default());
        assert_eq!(forward.career_years, backward.career_years);
        assert_eq!(forward.pools, backward.pools);
    }

    #[test]
    fn total_p_equals_matched_articles() {
        let corpus = sample_corpus();
        let total_p: u32 = corpus.career_years.iter().map(|cy| cy.p).sum();
        assert_eq!(total_p as usize, corpus.join.matched);
    }

    fn coverage_corpus(n_researchers: usize, gap: Option<(i32, usize)>) -> Corpus {
        // Researchers publishing every year 1997..=2015, with an optional
        // year where only `gap.1` of them publish.
        let meta: Vec<ResearcherMeta> = (0..n_researchers)
            .map(|k| ResearcherMeta {
                researcher_id: format!("r{k}"),
                discipline: "d".into(),
                phd_year: 1990,
            })
            .collect();
        let mut recs = Vec::new();
        for year in 1997..=2015 {
            let limit = match gap {
                Some((gap_year, n)) if gap_year == year => n,
                _ => n_researchers,
            };
            for k in 0..limit {
                recs.push((
                    PublicationRecord {
                        researcher_id: format!("r{k}"),
                        discipline: "d".into(),
                        year,
                        journal_id: "j".into(),
                        doi: None,
                    },
                    Some(1.0),
                ));
            }
        }
        build_career_years(&recs, &meta, JoinReport::default())
    }

    #[test]
    fn discipline_with_full_coverage_is_kept() {
        let corpus = coverage_corpus(50, None);
        let (_, report) =
            filter_disciplines(&corpus, 50, YearWindow { min: 1997, max: 2015 }).unwrap();
        assert_eq!(report.kept, vec!["d".to_string()]);
    }

    #[test]
    fn single_gap_year_drops_discipline() {
        let corpus = coverage_corpus(50, Some((2003, 49)));
        let (filtered, report) =
            filter_disciplines(&corpus, 50, YearWindow { min: 1997, max: 2015 }).unwrap();
        assert!(report.kept.is_empty());
        assert_eq!(report.dropped[0].0, "d");
        assert_eq!(report.dropped[0].1, 2003);
        assert!(filtered.career_years.is_empty());
    }

    #[test]
    fn filter_is_monotone_in_threshold() {
        let corpus = coverage_corpus(50, Some((2003, 30)));
        let mut previous = usize::MAX;
        for threshold in [1, 10, 30, 31, 50] {
            let (_, report) =
                filter_disciplines(&corpus, threshold, YearWindow { min: 1997, max: 2015 })
                    .unwrap();
            assert!(report.kept.len() <= previous);
            previous = report.kept.len();
        }
    }

    #[test]
    fn career_age_is_translation_consistent() {
        let base = coverage_corpus(3, None);
        let shifted = {
            let meta: Vec<ResearcherMeta> = base
                .meta
                .values()
                .map(|m| ResearcherMeta {
                    researcher_id: m.researcher_id.clone(),
                    discipline: m.discipline.clone(),
                    phd_year: m.phd_year + 7,
                })
                .collect();
            let recs: Vec<(PublicationRecord, Option<f64>)> = base
                .career_years
                .iter()
                .map(|cy| {
                    (
                        PublicationRecord {
                            researcher_id: cy.researcher_id.clone(),
                            discipline: cy.discipline.clone(),
                            year: cy.year + 7,
                            journal_id: "j".into(),
                            doi: None,
                        },
                        Some(1.0),
                    )
                })
                .collect();
            build_career_years(&recs, &meta, JoinReport::default())
        };
        let base_ages: Vec<i32> = base.career_years.iter().map(|c| c.career_age).collect();
        let shifted_ages: Vec<i32> = shifted.career_years.iter().map(|c| c.career_age).collect();
        assert_eq!(base_ages, shifted_ages);
    }

    #[test]
    fn inflation_trend_exact_linear() {
        // Yearly means exactly 0.157*(y-1997) + 2 in p and constant in i.
        let meta: Vec<ResearcherMeta> = (0..1000)
            .map(|k| ResearcherMeta {
                researcher_id: format!("r{k}"),
                discipline: "d".into(),
                phd_year: 1990,
            })
            .collect();
        let mut career_years = Vec::new();
        for year in 1997..=2015 {
            // Build mean p = 2 + 0.157*(year-1997) out of 1000 researchers:
            // the fractional part is carried by researcher counts.
            let target = 2.0 + 0.157 * (year - 1997) as f64;
            let whole = target.floor() as u32;
            let frac_thousandths = ((target - whole as f64) * 1000.0).round() as usize;
            for k in 0..1000 {
                let p = if k < frac_thousandths { whole + 1 } else { whole };
                career_years.push(CareerYearRaw {
                    researcher_id: format!("r{k}"),
                    discipline: "d".into(),
                    year,
                    p,
                    i: 1.5,
                    career_age: year - 1990,
                });
            }
        }
        let corpus = Corpus {
            career_years,
            pools: BTreeMap::new(),
            meta: meta.into_iter().map(|m| (m.researcher_id.clone(), m)).collect(),
            join: JoinReport::default(),
            dropped_missing_meta: 0,
            phd_inconsistencies: Vec::new(),
        };
        let trends = inflation_trend(&corpus, TrendGroup::All).unwrap();
        assert_eq!(trends.len(), 1);
        assert_abs_diff_eq!(trends[0].p_per_decade, 1.57, epsilon = 1e-9);
        assert_abs_diff_eq!(trends[0].i_per_decade, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn inflation_trend_single_year_errors() {
        let corpus = Corpus {
            career_years: vec![CareerYearRaw {
                researcher_id: "r".into(),
                discipline: "d".into(),
                year: 2000,
                p: 1,
                i: 1.0,
                career_age: 1,
            }],
            ..Corpus::default()
        };
        assert!(inflation_trend(&corpus, TrendGroup::All).is_err());
    }
}
