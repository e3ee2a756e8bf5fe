//! The journal-prestige versus productivity plane.
//!
//! Finite `(I, P)` pairs partition into seven sectors: three outlier
//! sectors beyond the threshold `tau` (default 3.5, strict inequality) and
//! four non-outlier quadrant sectors split at zero. The "+" half-planes
//! are closed at zero (a score of exactly 0 counts as above average);
//! outlier membership is open at `tau`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::normalize::CareerYear;
use crate::{Error, Result};

/// Outlier threshold on the standard scores.
pub const DEFAULT_TAU: f64 = 3.5;

/// Productivity threshold beyond which a career year counts as extremely
/// hyperprolific.
pub const EXTREME_P_THRESHOLD: f64 = 27.7;

/// One of the seven plane sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    /// Outlier in both prestige and productivity (`I > tau`, `P > tau`).
    BothOutlier,
    /// Outlier in prestige only (`I > tau`, `P <= tau`).
    PrestigeOutlier,
    /// Outlier in productivity only (`P > tau`, `I <= tau`).
    ProductivityOutlier,
    /// Non-outlier, both above average (`0 <= I <= tau`, `0 <= P <= tau`).
    HighHigh,
    /// Non-outlier, prestige above and productivity below (`I >= 0`, `P < 0`).
    HighLow,
    /// Non-outlier, prestige below and productivity above (`I < 0`, `P >= 0`).
    LowHigh,
    /// Non-outlier, both below average (`I < 0`, `P < 0`).
    LowLow,
}

/// All sectors in canonical order (outliers first, then quadrants).
pub const SECTORS: [Sector; 7] = [
    Sector::BothOutlier,
    Sector::PrestigeOutlier,
    Sector::ProductivityOutlier,
    Sector::HighHigh,
    Sector::HighLow,
    Sector::LowHigh,
    Sector::LowLow,
];

/// The three outlier sectors.
pub const OUTLIER_SECTORS: [Sector; 3] =
    [Sector::BothOutlier, Sector::PrestigeOutlier, Sector::ProductivityOutlier];

/// The four non-outlier sectors.
pub const NON_OUTLIER_SECTORS: [Sector; 4] =
    [Sector::HighHigh, Sector::HighLow, Sector::LowHigh, Sector::LowLow];

impl Sector {
    /// Compact label used in exports: `I+P+*`, `I+*`, `P+*`, `I+P+`,
    /// `I+P-`, `I-P+`, `I-P-`.
    pub fn label(&self) -> &'static str {
        match self {
            Sector::BothOutlier => "I+P+*",
            Sector::PrestigeOutlier => "I+*",
            Sector::ProductivityOutlier => "P+*",
            Sector::HighHigh => "I+P+",
            Sector::HighLow => "I+P-",
            Sector::LowHigh => "I-P+",
            Sector::LowLow => "I-P-",
        }
    }

    pub fn from_label(label: &str) -> Option<Sector> {
        SECTORS.iter().copied().find(|s| s.label() == label)
    }

    /// Index into the canonical [`SECTORS`] order.
    pub fn index(&self) -> usize {
        SECTORS.iter().position(|s| s == self).expect("sector in canonical list")
    }

    pub fn is_outlier(&self) -> bool {
        matches!(
            self,
            Sector::BothOutlier | Sector::PrestigeOutlier | Sector::ProductivityOutlier
        )
    }
}

impl std::fmt::Display for Sector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Classify a finite `(I, P)` pair.
pub fn classify_sector(prestige_z: f64, productivity_z: f64, tau: f64) -> Sector {
    let i = prestige_z;
    let p = productivity_z;
    debug_assert!(i.is_finite() && p.is_finite());
    if i > tau && p > tau {
        Sector::BothOutlier
    } else if i > tau {
        Sector::PrestigeOutlier
    } else if p > tau {
        Sector::ProductivityOutlier
    } else if i >= 0.0 && p >= 0.0 {
        Sector::HighHigh
    } else if i >= 0.0 {
        Sector::HighLow
    } else if p >= 0.0 {
        Sector::LowHigh
    } else {
        Sector::LowLow
    }
}

/// Researcher category flags derived from sector membership.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearcherCategory {
    /// No career year in any outlier sector.
    pub non_outlier: bool,
    /// At least one year with `I > tau` (sectors `I+*` or `I+P+*`).
    pub perfectionist: bool,
    /// At least one year with `P > tau` (sectors `P+*` or `I+P+*`).
    pub hyperprolific: bool,
    /// At least one year in `I+P+*`.
    pub hyperprolific_perfectionist: bool,
}

impl ResearcherCategory {
    pub fn exclusively_perfectionist(&self) -> bool {
        self.perfectionist && !self.hyperprolific
    }

    pub fn exclusively_hyperprolific(&self) -> bool {
        self.hyperprolific && !self.perfectionist
    }

    /// Outlier in both categories but never in the same year.
    pub fn both_non_simultaneous(&self) -> bool {
        self.perfectionist && self.hyperprolific && !self.hyperprolific_perfectionist
    }

    pub fn is_outlier(&self) -> bool {
        !self.non_outlier
    }
}

/// Categorize from the sector sequence of one career.
pub fn categorize_researcher(sectors: &[Sector]) -> ResearcherCategory {
    assert!(!sectors.is_empty(), "career must have at least one year");
    let mut cat = ResearcherCategory::default();
    for s in sectors {
        match s {
            Sector::BothOutlier => {
                cat.hyperprolific_perfectionist = true;
                cat.perfectionist = true;
                cat.hyperprolific = true;
            }
            Sector::PrestigeOutlier => cat.perfectionist = true,
            Sector::ProductivityOutlier => cat.hyperprolific = true,
            _ => {}
        }
    }
    cat.non_outlier = !(cat.perfectionist || cat.hyperprolific);
    cat
}

/// One researcher's career assembled from normalized years.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CareerRecord {
    pub researcher_id: String,
    pub discipline: String,
    pub phd_year: i32,
    /// Career years sorted by calendar year, with sector labels.
    pub years: Vec<(CareerYear, Sector)>,
    pub category: ResearcherCategory,
    /// Last publication year minus PhD year.
    pub career_length: i32,
}

impl CareerRecord {
    pub fn sectors(&self) -> Vec<Sector> {
        self.years.iter().map(|(_, s)| *s).collect()
    }

    /// Count of career years in the productivity-outlier sector `P+*`.
    pub fn hyperprolific_years(&self) -> usize {
        self.years.iter().filter(|(_, s)| *s == Sector::ProductivityOutlier).count()
    }
}

/// Group normalized career years into per-researcher careers with sector
/// labels and categories. `phd_years` maps researcher to PhD year.
pub fn assemble_careers(
    years: &[CareerYear],
    phd_years: &BTreeMap<String, i32>,
    tau: f64,
) -> Vec<CareerRecord> {
    let mut grouped: BTreeMap<String, Vec<(CareerYear, Sector)>> = BTreeMap::new();
    for cy in years {
        let sector = classify_sector(cy.prestige_z, cy.productivity_z, tau);
        grouped.entry(cy.researcher_id.clone()).or_default().push((cy.clone(), sector));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for (researcher_id, mut ys) in grouped {
        ys.sort_by_key(|(cy, _)| cy.year);
        let sectors: Vec<Sector> = ys.iter().map(|(_, s)| *s).collect();
        let category = categorize_researcher(&sectors);
        let discipline = ys[0].0.discipline.clone();
        let phd_year = phd_years.get(&researcher_id).copied().unwrap_or_else(|| {
            // Fall back to the earliest observed year minus its career age.
            ys[0].0.year - ys[0].0.career_age
        });
        let last_year = ys.last().map(|(cy, _)| cy.year).unwrap_or(phd_year);
        out.push(CareerRecord {
            researcher_id,
            discipline,
            phd_year,
            years: ys,
            category,
            career_length: last_year - phd_year,
        });
    }
    out
}

/// Counts for every region of the researcher-category Venn diagram plus
/// summary fractions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VennCounts {
    pub total: usize,
    pub non_outlier: usize,
    pub outlier: usize,
    pub perfectionist: usize,
    pub hyperprolific: usize,
    pub hyperprolific_perfectionist: usize,
    pub exclusively_perfectionist: usize,
    pub exclusively_hyperprolific: usize,
    pub both_non_simultaneous: usize,
    /// Share of all career years that sit in outlier sectors.
    pub outlier_year_fraction: f64,
    /// Share of outlier researchers with exactly one outlier career year.
    pub single_outlier_year_fraction: f64,
    /// Share of outlier researchers with more than half their years outlier.
    pub majority_outlier_fraction: f64,
}

/// Tally category intersections over all researchers.
pub fn venn_counts(careers: &[CareerRecord]) -> VennCounts {
    let mut v = VennCounts { total: careers.len(), ..VennCounts::default() };
    let mut total_years = 0usize;
    let mut outlier_years_total = 0usize;
    let mut single = 0usize;
    let mut majority = 0usize;
    for c in careers {
        let cat = &c.category;
        if cat.non_outlier {
            v.non_outlier += 1;
        } else {
            v.outlier += 1;
        }
        if cat.perfectionist {
            v.perfectionist += 1;
        }
        if cat.hyperprolific {
            v.hyperprolific += 1;
        }
        if cat.hyperprolific_perfectionist {
            v.hyperprolific_perfectionist += 1;
        }
        if cat.exclusively_perfectionist() {
            v.exclusively_perfectionist += 1;
        }
        if cat.exclusively_hyperprolific() {
            v.exclusively_hyperprolific += 1;
        }
        if cat.both_non_simultaneous() {
            v.both_non_simultaneous += 1;
        }
        let outlier_years = c.years.iter().filter(|(_, s)| s.is_outlier()).count();
        total_years += c.years.len();
        outlier_years_total += outlier_years;
        if cat.is_outlier() {
            if outlier_years == 1 {
                single += 1;
            }
            if 2 * outlier_years > c.years.len() {
                majority += 1;
            }
        }
    }
    if total_years > 0 {
        v.outlier_year_fraction = outlier_years_total as f64 / total_years as f64;
    }
    if v.outlier > 0 {
        v.single_outlier_year_fraction = single as f64 / v.outlier as f64;
        v.majority_outlier_fraction = majority as f64 / v.outlier as f64;
    }
    v
}

/// Per-researcher occupation fractions over the seven sectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationProfile {
    pub researcher_id: String,
    /// Fractions in canonical sector order; they sum to 1.
    pub fractions: [f64; 7],
    pub career_years: usize,
    pub career_length: i32,
}

/// Occupation fractions of one career.
pub fn occupation_profile(career: &CareerRecord) -> OccupationProfile {
    let mut counts = [0usize; 7];
    for (_, s) in &career.years {
        counts[s.index()] += 1;
    }
    let n = career.years.len();
    let mut fractions = [0.0; 7];
    for (k, &c) in counts.iter().enumerate() {
        fractions[k] = c as f64 / n as f64;
    }
    OccupationProfile {
        researcher_id: career.researcher_id.clone(),
        fractions,
        career_years: n,
        career_length: career.career_length,
    }
}

/// Normalized Shannon entropy of the occupation restricted to `subset`.
///
/// Fractions are renormalized within the subset; `H` is in `[0, 1]` with
/// the convention `0 * ln 0 = 0`. Returns an error when the researcher has
/// no year in the subset (such researchers are skipped by callers).
pub fn sector_entropy(profile: &OccupationProfile, subset: &[Sector]) -> Result<f64> {
    if subset.len() < 2 {
        return Err(Error::Config("entropy needs a subset of at least 2 sectors".into()));
    }
    let mass: f64 = subset.iter().map(|s| profile.fractions[s.index()]).sum();
    if mass <= 0.0 {
        return Err(Error::Data(format!(
            "researcher {} has no career year in the sector subset",
            profile.researcher_id
        )));
    }
    let mut h = 0.0;
    for s in subset {
        let f = profile.fractions[s.index()] / mass;
        if f > 0.0 {
            h -= f * f.ln();
        }
    }
    Ok(h / (subset.len() as f64).ln())
}

/// A career year exceeding the extreme productivity threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremeYear {
    pub researcher_id: String,
    pub discipline: String,
    pub year: i32,
    pub productivity_z: f64,
    pub prestige_z: f64,
    pub sector: Sector,
}

/// Researchers with at least one career year with `P` above `threshold`,
/// with every such year reported.
pub fn extreme_hyperprolific(careers: &[CareerRecord], threshold: f64) -> Vec<ExtremeYear> {
    let mut out = Vec::new();
    for c in careers {
        for (cy, sector) in &c.years {
            if cy.productivity_z > threshold {
                out.push(ExtremeYear {
                    researcher_id: c.researcher_id.clone(),
                    discipline: c.discipline.clone(),
                    year: cy.year,
                    productivity_z: cy.productivity_z,
                    prestige_z: cy.prestige_z,
                    sector: *sector,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn year(researcher: &str, y: i32, i_z: f64, p_z: f64) -> CareerYear {
        CareerYear {
            researcher_id: researcher.into(),
            discipline: "d".into(),
            year: y,
            p: 1,
            i: 1.0,
            career_age: y - 2000,
            productivity_z: p_z,
            prestige_z: i_z,
        }
    }

    #[test]
    fn classify_paper_cases() {
        assert_eq!(classify_sector(4.0, 4.0, 3.5), Sector::BothOutlier);
        assert_eq!(classify_sector(0.0, 0.0, 3.5), Sector::HighHigh);
        assert_eq!(classify_sector(3.5, 3.5, 3.5), Sector::HighHigh); // closed at tau
        assert_eq!(classify_sector(4.0, -1.0, 3.5), Sector::PrestigeOutlier);
        assert_eq!(classify_sector(-1.0, 4.0, 3.5), Sector::ProductivityOutlier);
    }

    /// Brute-force truth table over the boundary grid.
    #[test]
    fn classify_matches_truth_table_on_grid() {
        let grid = [-5.0, -0.1, 0.0, 0.1, 3.5, 3.6];
        for &i in &grid {
            for &p in &grid {
                // Independent spelling of the partition.
                let expected = match (i > 3.5, p > 3.5) {
                    (true, true) => Sector::BothOutlier,
                    (true, false) => Sector::PrestigeOutlier,
                    (false, true) => Sector::ProductivityOutlier,
                    (false, false) => match (i >= 0.0, p >= 0.0) {
                        (true, true) => Sector::HighHigh,
                        (true, false) => Sector::HighLow,
                        (false, true) => Sector::LowHigh,
                        (false, false) => Sector::LowLow,
                    },
                };
                assert_eq!(classify_sector(i, p, 3.5), expected, "at ({i}, {p})");
            }
        }
    }

    proptest! {
        /// Exactly one sector predicate matches any finite pair.
        #[test]
        fn partition_is_exclusive_and_exhaustive(i in -50.0f64..50.0, p in -50.0f64..50.0) {
            let tau = 3.5;
            let predicates = [
                i > tau && p > tau,
                i > tau && p <= tau,
                p > tau && i <= tau,
                (0.0..=tau).contains(&i) && (0.0..=tau).contains(&p),
                (0.0..=tau).contains(&i) && p < 0.0,
                i < 0.0 && (0.0..=tau).contains(&p),
                i < 0.0 && p < 0.0,
            ];
            let matches = predicates.iter().filter(|&&b| b).count();
            prop_assert_eq!(matches, 1);
            let sector = classify_sector(i, p, tau);
            prop_assert!(predicates[sector.index()]);
        }

        /// Category flags equal a direct set-membership recomputation and
        /// do not depend on year order.
        #[test]
        fn categorize_matches_membership_oracle(seq in proptest::collection::vec(0usize..7, 1..20)) {
            let sectors: Vec<Sector> = seq.iter().map(|&k| SECTORS[k]).collect();
            let cat = categorize_researcher(&sectors);
            let has = |s: Sector| sectors.contains(&s);
            prop_assert_eq!(cat.perfectionist, has(Sector::PrestigeOutlier) || has(Sector::BothOutlier));
            prop_assert_eq!(cat.hyperprolific, has(Sector::ProductivityOutlier) || has(Sector::BothOutlier));
            prop_assert_eq!(cat.hyperprolific_perfectionist, has(Sector::BothOutlier));
            prop_assert_eq!(cat.non_outlier, !sectors.iter().any(|s| s.is_outlier()));

            let mut rev = sectors.clone();
            rev.reverse();
            prop_assert_eq!(categorize_researcher(&rev), cat);
        }
    }

    #[test]
    fn categorize_trivials() {
        let all_low = vec![Sector::LowLow; 4];
        assert!(categorize_researcher(&all_low).non_outlier);

        let mixed = vec![Sector::PrestigeOutlier, Sector::LowLow];
        let cat = categorize_researcher(&mixed);
        assert!(cat.perfectionist && !cat.hyperprolific && !cat.hyperprolific_perfectionist);

        // A single both-outlier year nests inside both supersets.
        let both = vec![Sector::BothOutlier];
        let cat = categorize_researcher(&both);
        assert!(cat.perfectionist && cat.hyperprolific && cat.hyperprolific_perfectionist);
    }

    #[test]
    fn venn_counts_all_non_outlier() {
        let years: Vec<CareerYear> = (0..5)
            .flat_map(|r| {
                (2000..2004).map(move |y| year(&format!("r{r}"), y, -0.5, -0.5))
            })
            .collect();
        let careers = assemble_careers(&years, &BTreeMap::new(), 3.5);
        let v = venn_counts(&careers);
        assert_eq!(v.non_outlier, 5);
        assert_eq!(v.outlier, 0);
        assert_eq!(v.perfectionist + v.hyperprolific + v.hyperprolific_perfectionist, 0);
        assert_abs_diff_eq!(v.outlier_year_fraction, 0.0);
    }

    #[test]
    fn venn_counts_planted_mix() {
        let mut years = Vec::new();
        // 10 exclusively perfectionist, 5 exclusively hyperprolific,
        // 2 both (non-simultaneous), 3 non-outlier.
        for r in 0..10 {
            years.push(year(&format!("perf{r}"), 2001, 5.0, 0.5));
            years.push(year(&format!("perf{r}"), 2002, 0.5, 0.5));
        }
        for r in 0..5 {
            years.push(year(&format!("hyper{r}"), 2001, 0.5, 5.0));
        }
        for r in 0..2 {
            years.push(year(&format!("both{r}"), 2001, 5.0, 0.5));
            years.push(year(&format!("both{r}"), 2002, 0.5, 5.0));
        }
        for r in 0..3 {
            years.push(year(&format!("none{r}"), 2001, -0.5, 0.5));
        }
        let careers = assemble_careers(&years, &BTreeMap::new(), 3.5);
        let v = venn_counts(&careers);
        assert_eq!(v.exclusively_perfectionist, 10);
        assert_eq!(v.exclusively_hyperprolific, 5);
        assert_eq!(v.both_non_simultaneous, 2);
        assert_eq!(v.non_outlier, 3);
        assert_eq!(v.hyperprolific_perfectionist, 0);
        assert_eq!(v.outlier, 17);
    }

    #[test]
    fn entropy_trivials() {
        let profile = OccupationProfile {
            researcher_id: "r".into(),
            fractions: {
                let mut f = [0.0; 7];
                f[Sector::PrestigeOutlier.index()] = 1.0;
                f
            },
            career_years: 4,
            career_length: 4,
        };
        let h = sector_entropy(&profile, &OUTLIER_SECTORS).unwrap();
        assert_abs_diff_eq!(h, 0.0);

        let profile = OccupationProfile {
            researcher_id: "r".into(),
            fractions: {
                let mut f = [0.0; 7];
                f[Sector::PrestigeOutlier.index()] = 0.5;
                f[Sector::ProductivityOutlier.index()] = 0.5;
                f
            },
            career_years: 4,
            career_length: 4,
        };
        let h = sector_entropy(
            &profile,
            &[Sector::PrestigeOutlier, Sector::ProductivityOutlier],
        )
        .unwrap();
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_half_quarter_quarter() {
        let profile = OccupationProfile {
            researcher_id: "r".into(),
            fractions: {
                let mut f = [0.0; 7];
                f[Sector::BothOutlier.index()] = 0.5;
                f[Sector::PrestigeOutlier.index()] = 0.25;
                f[Sector::ProductivityOutlier.index()] = 0.25;
                f
            },
            career_years: 4,
            career_length: 4,
        };
        let h = sector_entropy(&profile, &OUTLIER_SECTORS).unwrap();
        // Direct evaluation: -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) / ln 3
        let expect = -(0.5 * 0.5f64.ln() + 0.5 * 0.25f64.ln()) / 3.0f64.ln();
        assert_abs_diff_eq!(h, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(h, 0.946, epsilon = 1e-3);
    }

    #[test]
    fn entropy_outside_subset_errors() {
        let profile = OccupationProfile {
            researcher_id: "r".into(),
            fractions: {
                let mut f = [0.0; 7];
                f[Sector::LowLow.index()] = 1.0;
                f
            },
            career_years: 2,
            career_length: 2,
        };
        assert!(sector_entropy(&profile, &OUTLIER_SECTORS).is_err());
        assert!(sector_entropy(&profile, &[Sector::LowLow]).is_err());
    }

    proptest! {
        #[test]
        fn entropy_bounds(fracs in proptest::collection::vec(0.0f64..1.0, 7)) {
            let total: f64 = fracs.iter().sum();
            prop_assume!(total > 0.0);
            let mut fractions = [0.0; 7];
            for (k, f) in fracs.iter().enumerate() {
                fractions[k] = f / total;
            }
            let profile = OccupationProfile {
                researcher_id: "r".into(),
                fractions,
                career_years: 10,
                career_length: 10,
            };
            if let Ok(h) = sector_entropy(&profile, &SECTORS) {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
            }
        }
    }

    #[test]
    fn occupation_fractions_sum_to_one() {
        let years: Vec<CareerYear> = vec![
            year("r", 2001, 5.0, 0.5),
            year("r", 2002, -0.5, -0.5),
            year("r", 2003, 0.5, 0.5),
        ];
        let careers = assemble_careers(&years, &BTreeMap::new(), 3.5);
        let profile = occupation_profile(&careers[0]);
        let total: f64 = profile.fractions.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn extreme_hyperprolific_listing() {
        let years = vec![
            year("quiet", 2001, 0.5, 3.0),
            year("extreme_both", 2001, 5.0, 30.0),
            year("extreme_p", 2002, 1.0, 28.0),
        ];
        let careers = assemble_careers(&years, &BTreeMap::new(), 3.5);
        let none = extreme_hyperprolific(&careers, 100.0);
        assert!(none.is_empty());

        let hits = extreme_hyperprolific(&careers, 27.7);
        assert_eq!(hits.len(), 2);
        let both = hits.iter().find(|h| h.researcher_id == "extreme_both").unwrap();
        assert_eq!(both.sector, Sector::BothOutlier);
        let ponly = hits.iter().find(|h| h.researcher_id == "extreme_p").unwrap();
        assert_eq!(ponly.sector, Sector::ProductivityOutlier);
    }

    #[test]
    fn career_length_is_span_from_phd() {
        let years = vec![year("r", 2001, 0.0, 0.0), year("r", 2010, 0.0, 0.0)];
        let mut phd = BTreeMap::new();
        phd.insert("r".to_string(), 1998);
        let careers = assemble_careers(&years, &phd, 3.5);
        assert_eq!(careers[0].career_length, 12);
    }
}
