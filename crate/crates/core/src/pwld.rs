//! Phonologically weighted Levenshtein distance.
//!
//! Per-phone distance is the share of differing features: `p / 15` for
//! consonants and `(p / 4)^2` for vowels, the square easing the coarse
//! four-feature vowel space. Sequence distance is the usual edit-distance
//! DP with those values as substitution costs.

use serde::Serialize;
use thiserror::Error;

use crate::phoneme::{feature_diff_count, ClassMismatch, PhoneClass, Phoneme, PhonemeSequence};

/// Upper bound accepted for any configured cost.
pub const MAX_CONFIG_COST: f64 = 10.0;
/// Longest sequence [`brute_force_pwld`] will enumerate.
pub const BRUTE_FORCE_MAX_LEN: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostConfigError {
    #[error("{name} must lie in [0, {MAX_CONFIG_COST}], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Costs the per-phone distance does not define.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostConfig {
    indel_cost: f64,
    cross_class_substitution_cost: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            indel_cost: 1.0,
            cross_class_substitution_cost: 1.0,
        }
    }
}

impl CostConfig {
    pub fn new(
        indel_cost: f64,
        cross_class_substitution_cost: f64,
    ) -> Result<Self, CostConfigError> {
        check_cost("indel_cost", indel_cost)?;
        check_cost(
            "cross_class_substitution_cost",
            cross_class_substitution_cost,
        )?;
        Ok(CostConfig {
            indel_cost,
            cross_class_substitution_cost,
        })
    }

    pub fn indel_cost(&self) -> f64 {
        self.indel_cost
    }

    pub fn cross_class_substitution_cost(&self) -> f64 {
        self.cross_class_substitution_cost
    }

    /// Cost of replacing `a` with `b`.
    pub fn substitution_cost(&self, a: &Phoneme, b: &Phoneme) -> f64 {
        phone_distance(a, b).unwrap_or(self.cross_class_substitution_cost)
    }
}

fn check_cost(name: &'static str, value: f64) -> Result<(), CostConfigError> {
    if (0.0..=MAX_CONFIG_COST).contains(&value) {
        Ok(())
    } else {
        Err(CostConfigError::OutOfRange { name, value })
    }
}

/// Distance in `[0, 1]` between two phones of the same class.
pub fn phone_distance(a: &Phoneme, b: &Phoneme) -> Result<f64, ClassMismatch> {
    let differing = f64::from(feature_diff_count(a, b)?);
    let share = differing / a.class().feature_count() as f64;
    Ok(match a.class() {
        PhoneClass::Consonant => share,
        PhoneClass::Vowel => share * share,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// One step of an edit script turning `w` into `u`.
///
/// `source` indexes `w`, `target` indexes `u`; an insertion has no source
/// and a deletion no target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditStep {
    pub op: EditOp,
    pub source: Option<usize>,
    pub target: Option<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwldResult {
    pub total_cost: f64,
    pub normalized_cost: f64,
    pub alignment: Vec<EditStep>,
}

impl PwldResult {
    /// Applies the alignment to `w`, producing the phones of `u`.
    pub fn replay(&self, w: &PhonemeSequence, u: &PhonemeSequence) -> PhonemeSequence {
        let mut out = Vec::with_capacity(u.len());
        for step in &self.alignment {
            match step.op {
                EditOp::Match => out.push(w.phones()[step.source.unwrap()].clone()),
                EditOp::Substitute | EditOp::Insert => {
                    out.push(u.phones()[step.target.unwrap()].clone())
                }
                EditOp::Delete => {}
            }
        }
        PhonemeSequence::from_phones(out)
    }
}

#[derive(Clone, Copy)]
enum Back {
    Diagonal,
    Up,
    Left,
}

/// Minimum-cost edit script from `w` to `u`.
///
/// Ties resolve to match/substitute, then delete, then insert, chosen per
/// cell while tracing back from the end, so the alignment is reproducible.
pub fn sequence_pwld(w: &PhonemeSequence, u: &PhonemeSequence, cfg: &CostConfig) -> PwldResult {
    let (a, b) = (w.phones(), u.phones());
    let (n, m) = (a.len(), b.len());
    let cols = m + 1;
    let mut cost = vec![0.0f64; (n + 1) * cols];
    let mut back = vec![Back::Diagonal; (n + 1) * cols];

    for j in 1..=m {
        cost[j] = cost[j - 1] + cfg.indel_cost;
        back[j] = Back::Left;
    }
    for i in 1..=n {
        let row = i * cols;
        cost[row] = cost[row - cols] + cfg.indel_cost;
        back[row] = Back::Up;
        for j in 1..=m {
            let diag = cost[row - cols + j - 1] + cfg.substitution_cost(&a[i - 1], &b[j - 1]);
            let up = cost[row - cols + j] + cfg.indel_cost;
            let left = cost[row + j - 1] + cfg.indel_cost;
            let (c, dir) = if diag <= up && diag <= left {
                (diag, Back::Diagonal)
            } else if up <= left {
                (up, Back::Up)
            } else {
                (left, Back::Left)
            };
            cost[row + j] = c;
            back[row + j] = dir;
        }
    }

    let mut alignment = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let step = match back[i * cols + j] {
            Back::Diagonal => {
                i -= 1;
                j -= 1;
                let op = if a[i] == b[j] {
                    EditOp::Match
                } else {
                    EditOp::Substitute
                };
                EditStep {
                    op,
                    source: Some(i),
                    target: Some(j),
                    cost: cfg.substitution_cost(&a[i], &b[j]),
                }
            }
            Back::Up => {
                i -= 1;
                EditStep {
                    op: EditOp::Delete,
                    source: Some(i),
                    target: None,
                    cost: cfg.indel_cost,
                }
            }
            Back::Left => {
                j -= 1;
                EditStep {
                    op: EditOp::Insert,
                    source: None,
                    target: Some(j),
                    cost: cfg.indel_cost,
                }
            }
        };
        alignment.push(step);
    }
    alignment.reverse();

    let total_cost = cost[n * cols + m];
    let longest = n.max(m);
    PwldResult {
        total_cost,
        normalized_cost: if longest == 0 {
            0.0
        } else {
            total_cost / longest as f64
        },
        alignment,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("brute-force enumeration supports at most {BRUTE_FORCE_MAX_LEN} phones per side, got {left} and {right}")]
pub struct TooLong {
    pub left: usize,
    pub right: usize,
}

/// Exhaustive minimum over every edit script from `w` to `u`.
///
/// Exponential; meant as a verification oracle for [`sequence_pwld`].
/// Costs are summed in script order so the result is bit-identical to the
/// DP whenever both find the same optimum.
pub fn brute_force_pwld(
    w: &PhonemeSequence,
    u: &PhonemeSequence,
    cfg: &CostConfig,
) -> Result<f64, TooLong> {
    if w.len() > BRUTE_FORCE_MAX_LEN || u.len() > BRUTE_FORCE_MAX_LEN {
        return Err(TooLong {
            left: w.len(),
            right: u.len(),
        });
    }
    let mut best = f64::INFINITY;
    enumerate(w.phones(), u.phones(), cfg, 0.0, &mut best);
    Ok(best)
}

fn enumerate(a: &[Phoneme], b: &[Phoneme], cfg: &CostConfig, acc: f64, best: &mut f64) {
    match (a.split_first(), b.split_first()) {
        (None, None) => *best = best.min(acc),
        (Some((x, rest_a)), Some((y, rest_b))) => {
            enumerate(rest_a, rest_b, cfg, acc + cfg.substitution_cost(x, y), best);
            enumerate(rest_a, b, cfg, acc + cfg.indel_cost, best);
            enumerate(a, rest_b, cfg, acc + cfg.indel_cost, best);
        }
        (Some((_, rest_a)), None) => enumerate(rest_a, b, cfg, acc + cfg.indel_cost, best),
        (None, Some((_, rest_b))) => enumerate(a, rest_b, cfg, acc + cfg.indel_cost, best),
    }
}
