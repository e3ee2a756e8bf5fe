//! Sector transitions across consecutive career years, compared against a
//! career-shuffle null model.
//!
//! A transition is a pair of records in consecutive calendar years; by
//! default a publication-gap year breaks the chain (`GapPolicy::Break`),
//! with `Bridge` available as a robustness check. The null model permutes
//! each researcher's own sector labels across that researcher's observed
//! years (the year skeleton stays fixed), so per-researcher sector
//! multisets are preserved exactly.
//!
//! Realizations are accumulated in integer arithmetic, which makes the
//! mean/SD reduction exact and order-insensitive; with per-chunk
//! substreams the result is independent of the thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plane::{CareerRecord, Sector};
use crate::rng;
use crate::{Error, Result};

/// Number of sectors; transition matrices are `N_SECTORS` square.
pub const N_SECTORS: usize = 7;

/// How publication gaps are treated when pairing consecutive records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Only records in consecutive calendar years form a transition.
    Break,
    /// Consecutive records form a transition regardless of the gap.
    Bridge,
}

/// One researcher's year-ordered sector sequence.
pub type SectorSequence = Vec<(i32, Sector)>;

/// Pooled transition counts for a researcher group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub matrix: [[u64; N_SECTORS]; N_SECTORS],
}

impl TransitionCounts {
    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    fn add_sequence(&mut self, seq: &[(i32, Sector)], policy: GapPolicy) {
        for window in seq.windows(2) {
            let (y0, from) = window[0];
            let (y1, to) = window[1];
            let counts = match policy {
                GapPolicy::Break => y1 == y0 + 1,
                GapPolicy::Bridge => true,
            };
            if counts {
                self.matrix[from.index()][to.index()] += 1;
            }
        }
    }
}

/// Transitions contributed by one year-ordered career.
pub fn count_transitions(seq: &[(i32, Sector)], policy: GapPolicy) -> TransitionCounts {
    debug_assert!(seq.windows(2).all(|w| w[0].0 < w[1].0), "career must be sorted by year");
    let mut counts = TransitionCounts::default();
    counts.add_sequence(seq, policy);
    counts
}

/// Pooled transitions over a group of careers.
pub fn pooled_transitions(seqs: &[SectorSequence], policy: GapPolicy) -> TransitionCounts {
    let mut counts = TransitionCounts::default();
    for seq in seqs {
        counts.add_sequence(seq, policy);
    }
    counts
}

/// Element-wise mean and SD of pooled transition counts over shuffle
/// realizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShuffleNull {
    pub mean: [[f64; N_SECTORS]; N_SECTORS],
    pub sd: [[f64; N_SECTORS]; N_SECTORS],
    pub n_shuffles: usize,
}

/// Run the career-shuffle null: per realization, independently permute
/// each researcher's sector labels across that researcher's observed
/// years, recount pooled transitions, and reduce element-wise.
///
/// `label` keys the substream so different groups draw independent noise.
pub fn shuffle_null(
    seqs: &[SectorSequence],
    n_shuffles: usize,
    policy: GapPolicy,
    seed: u64,
    label: &str,
) -> Result<ShuffleNull> {
    if n_shuffles < 2 {
        return Err(Error::Config("shuffle null needs at least 2 realizations".into()));
    }

    let n_chunks = n_shuffles.div_ceil(rng::CHUNK);
    let (sum, sumsq) = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = rng::chunk_stream(seed, &format!("shuffle-{label}"), chunk);
            let lo = chunk * rng::CHUNK;
            let hi = ((chunk + 1) * rng::CHUNK).min(n_shuffles);
            let mut sum = [[0u64; N_SECTORS]; N_SECTORS];
            let mut sumsq = [[0u128; N_SECTORS]; N_SECTORS];
            let mut labels: Vec<Sector> = Vec::new();
            let mut shuffled: SectorSequence = Vec::new();
            for _ in lo..hi {
                let mut counts = TransitionCounts::default();
                for seq in seqs {
                    labels.clear();
                    labels.extend(seq.iter().map(|(_, s)| *s));
                    labels.shuffle(&mut stream);
                    shuffled.clear();
                    shuffled.extend(seq.iter().map(|(y, _)| *y).zip(labels.iter().copied()));
                    counts.add_sequence(&shuffled, policy);
                }
                for a in 0..N_SECTORS {
                    for b in 0..N_SECTORS {
                        let c = counts.matrix[a][b];
                        sum[a][b] += c;
                        sumsq[a][b] += (c as u128) * (c as u128);
                    }
                }
            }
            (sum, sumsq)
        })
        .reduce(
            || ([[0u64; N_SECTORS]; N_SECTORS], [[0u128; N_SECTORS]; N_SECTORS]),
            |(mut s1, mut q1), (s2, q2)| {
                for a in 0..N_SECTORS {
                    for b in 0..N_SECTORS {
                        s1[a][b] += s2[a][b];
                        q1[a][b] += q2[a][b];
                    }
                }
                (s1, q1)
            },
        );

    let n = n_shuffles as f64;
    let mut mean = [[0.0; N_SECTORS]; N_SECTORS];
    let mut sd = [[0.0; N_SECTORS]; N_SECTORS];
    for a in 0..N_SECTORS {
        for b in 0..N_SECTORS {
            let m = sum[a][b] as f64 / n;
            mean[a][b] = m;
            let var = (sumsq[a][b] as f64 - n * m * m) / (n - 1.0);
            sd[a][b] = var.max(0.0).sqrt();
        }
    }
    Ok(ShuffleNull { mean, sd, n_shuffles })
}

/// Relative excess of observed transitions over the shuffle null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionExcessMatrix {
    /// `(observed - null_mean) / null_mean`; only meaningful where
    /// `defined` is true.
    pub excess: [[f64; N_SECTORS]; N_SECTORS],
    /// False where the null mean is zero.
    pub defined: [[bool; N_SECTORS]; N_SECTORS],
    pub observed: [[u64; N_SECTORS]; N_SECTORS],
    pub null_mean: [[f64; N_SECTORS]; N_SECTORS],
    pub null_sd: [[f64; N_SECTORS]; N_SECTORS],
    pub n_shuffles: usize,
}

/// Element-wise relative excess; cells with zero null mean are flagged
/// undefined.
pub fn excess_matrix(observed: &TransitionCounts, null: &ShuffleNull) -> TransitionExcessMatrix {
    let mut excess = [[0.0; N_SECTORS]; N_SECTORS];
    let mut defined = [[false; N_SECTORS]; N_SECTORS];
    for a in 0..N_SECTORS {
        for b in 0..N_SECTORS {
            let m = null.mean[a][b];
            if m > 0.0 {
                excess[a][b] = (observed.matrix[a][b] as f64 - m) / m;
                defined[a][b] = true;
            }
        }
    }
    TransitionExcessMatrix {
        excess,
        defined,
        observed: observed.matrix,
        null_mean: null.mean,
        null_sd: null.sd,
        n_shuffles: null.n_shuffles,
    }
}

/// Split careers into the outlier and non-outlier groups and extract the
/// year-ordered sector sequences of each.
pub fn split_groups(careers: &[CareerRecord]) -> (Vec<SectorSequence>, Vec<SectorSequence>) {
    let mut outlier = Vec::new();
    let mut non_outlier = Vec::new();
    for c in careers {
        let seq: SectorSequence = c.years.iter().map(|(cy, s)| (cy.year, *s)).collect();
        if c.category.is_outlier() {
            outlier.push(seq);
        } else {
            non_outlier.push(seq);
        }
    }
    (outlier, non_outlier)
}
