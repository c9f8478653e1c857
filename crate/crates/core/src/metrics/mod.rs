//! Coreference and linking scores.
//!
//! Scores over a split are pooled across documents: B³ averages over every
//! mention of the split, CEAF sums the aligned similarity and the cluster
//! counts, BLANC counts links within each document only.

mod assignment;
mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Clustering;
use crate::error::{Error, Result};

pub use assignment::max_weight_assignment;
pub use report::{aggregate_runs, coref_table, linking_table, CharacterScore, MetricsReport, RunSpread};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PRF {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }

    pub fn perfect() -> Self {
        Self::new(1.0, 1.0)
    }
}

/// `num / den`, or 0 when the denominator is 0.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn check_same_mentions(gold: &Clustering, pred: &Clustering) -> Result<()> {
    if gold.num_mentions() != pred.num_mentions() {
        return Err(Error::MentionSetMismatch(format!(
            "gold has {} mentions, prediction has {}",
            gold.num_mentions(),
            pred.num_mentions()
        )));
    }
    Ok(())
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    // both sorted
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct B3Counts {
    pub precision_sum: f64,
    pub recall_sum: f64,
    pub mentions: usize,
}

impl B3Counts {
    pub fn add(&mut self, other: &B3Counts) {
        self.precision_sum += other.precision_sum;
        self.recall_sum += other.recall_sum;
        self.mentions += other.mentions;
    }

    pub fn prf(&self) -> PRF {
        if self.mentions == 0 {
            return PRF::perfect();
        }
        let n = self.mentions as f64;
        PRF::new(self.precision_sum / n, self.recall_sum / n)
    }
}

pub fn b3_counts(gold: &Clustering, pred: &Clustering) -> Result<B3Counts> {
    check_same_mentions(gold, pred)?;
    let ga = gold.assignment();
    let pa = pred.assignment();
    let mut c = B3Counts {
        mentions: gold.num_mentions(),
        ..B3Counts::default()
    };
    for m in 0..gold.num_mentions() {
        let k = &gold.clusters()[ga[m]];
        let r = &pred.clusters()[pa[m]];
        let both = overlap(k, r) as f64;
        c.precision_sum += both / r.len() as f64;
        c.recall_sum += both / k.len() as f64;
    }
    Ok(c)
}

pub fn b_cubed(gold: &Clustering, pred: &Clustering) -> Result<PRF> {
    Ok(b3_counts(gold, pred)?.prf())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CeafCounts {
    pub similarity: f64,
    pub gold_clusters: usize,
    pub pred_clusters: usize,
}

impl CeafCounts {
    pub fn add(&mut self, other: &CeafCounts) {
        self.similarity += other.similarity;
        self.gold_clusters += other.gold_clusters;
        self.pred_clusters += other.pred_clusters;
    }

    pub fn prf(&self) -> PRF {
        if self.gold_clusters == 0 && self.pred_clusters == 0 {
            return PRF::perfect();
        }
        PRF::new(
            ratio(self.similarity, self.pred_clusters as f64),
            ratio(self.similarity, self.gold_clusters as f64),
        )
    }
}

/// φ4(K, R) = 2|K ∩ R| / (|K| + |R|).
pub fn phi4(k: &[usize], r: &[usize]) -> f64 {
    2.0 * overlap(k, r) as f64 / (k.len() + r.len()) as f64
}

pub fn ceaf_counts(gold: &Clustering, pred: &Clustering) -> Result<CeafCounts> {
    check_same_mentions(gold, pred)?;
    let weights: Vec<Vec<f64>> = gold
        .clusters()
        .iter()
        .map(|k| pred.clusters().iter().map(|r| phi4(k, r)).collect())
        .collect();
    let (similarity, _) = max_weight_assignment(&weights);
    Ok(CeafCounts {
        similarity,
        gold_clusters: gold.clusters().len(),
        pred_clusters: pred.clusters().len(),
    })
}

pub fn ceaf_phi4(gold: &Clustering, pred: &Clustering) -> Result<PRF> {
    Ok(ceaf_counts(gold, pred)?.prf())
}

/// Counts for one link class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounts {
    pub correct: u64,
    pub gold: u64,
    pub pred: u64,
}

impl LinkCounts {
    fn add(&mut self, o: &LinkCounts) {
        self.correct += o.correct;
        self.gold += o.gold;
        self.pred += o.pred;
    }

    fn is_empty(&self) -> bool {
        self.gold == 0 && self.pred == 0
    }

    fn prf(&self) -> PRF {
        PRF::new(
            ratio(self.correct as f64, self.pred as f64),
            ratio(self.correct as f64, self.gold as f64),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlancCounts {
    pub coref: LinkCounts,
    pub non_coref: LinkCounts,
}

impl BlancCounts {
    pub fn add(&mut self, other: &BlancCounts) {
        self.coref.add(&other.coref);
        self.non_coref.add(&other.non_coref);
    }

    /// Mean of the two link classes; a class absent from both gold and
    /// prediction is left out. No links at all scores 1.
    pub fn prf(&self) -> PRF {
        match (self.coref.is_empty(), self.non_coref.is_empty()) {
            (true, true) => PRF::perfect(),
            (true, false) => self.non_coref.prf(),
            (false, true) => self.coref.prf(),
            (false, false) => {
                let c = self.coref.prf();
                let n = self.non_coref.prf();
                PRF {
                    precision: (c.precision + n.precision) / 2.0,
                    recall: (c.recall + n.recall) / 2.0,
                    f1: (c.f1 + n.f1) / 2.0,
                }
            }
        }
    }
}

pub fn blanc_counts(gold: &Clustering, pred: &Clustering) -> Result<BlancCounts> {
    check_same_mentions(gold, pred)?;
    let n = gold.num_mentions();
    let total = (n * n.saturating_sub(1) / 2) as u64;
    let pairs = |c: &Clustering| c.clusters().iter().map(|k| (k.len() * (k.len() - 1) / 2) as u64).sum::<u64>();
    let gold_coref = pairs(gold);
    let pred_coref = pairs(pred);
    // coreferent in both: pairs inside every gold/pred cluster intersection
    let pa = pred.assignment();
    let mut both = 0u64;
    for k in gold.clusters() {
        let mut per_pred = std::collections::BTreeMap::<usize, u64>::new();
        for &m in k {
            *per_pred.entry(pa[m]).or_default() += 1;
        }
        both += per_pred.values().map(|&c| c * (c.saturating_sub(1)) / 2).sum::<u64>();
    }
    let gold_non = total - gold_coref;
    let pred_non = total - pred_coref;
    // non-coreferent in both, by inclusion-exclusion over all pairs
    let non_both = total + both - gold_coref - pred_coref;
    Ok(BlancCounts {
        coref: LinkCounts {
            correct: both,
            gold: gold_coref,
            pred: pred_coref,
        },
        non_coref: LinkCounts {
            correct: non_both,
            gold: gold_non,
            pred: pred_non,
        },
    })
}

/// BLANC for one document. Under two mentions there are no links, and the
/// partitions (already checked to cover the same mentions) must be equal.
pub fn blanc(gold: &Clustering, pred: &Clustering) -> Result<PRF> {
    check_same_mentions(gold, pred)?;
    if gold.num_mentions() < 2 {
        return if gold == pred {
            Ok(PRF::perfect())
        } else {
            Err(Error::MentionSetMismatch("partitions of under two mentions differ".into()))
        };
    }
    Ok(blanc_counts(gold, pred)?.prf())
}

/// Pooled coreference counts over a split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorefCounts {
    pub b3: B3Counts,
    pub ceaf: CeafCounts,
    pub blanc: BlancCounts,
}

impl CorefCounts {
    pub fn add_document(&mut self, gold: &Clustering, pred: &Clustering) -> Result<()> {
        self.b3.add(&b3_counts(gold, pred)?);
        self.ceaf.add(&ceaf_counts(gold, pred)?);
        self.blanc.add(&blanc_counts(gold, pred)?);
        Ok(())
    }

    pub fn scores(&self) -> CorefScores {
        let (b3, ceaf, blanc) = (self.b3.prf(), self.ceaf.prf(), self.blanc.prf());
        CorefScores {
            b3,
            ceaf,
            blanc,
            avg_f1: (b3.f1 + ceaf.f1 + blanc.f1) / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorefScores {
    pub b3: PRF,
    pub ceaf: PRF,
    pub blanc: PRF,
    pub avg_f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    pub fn prf(&self) -> PRF {
        let tp = self.true_pos as f64;
        PRF::new(
            ratio(tp, tp + self.false_pos as f64),
            ratio(tp, tp + self.false_neg as f64),
        )
    }
}

/// Pooled confusion counts for character linking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingCounts {
    pub classes: Vec<ClassCounts>,
    pub correct: u64,
    pub total: u64,
}

impl LinkingCounts {
    pub fn new(num_classes: usize) -> Self {
        Self {
            classes: vec![ClassCounts::default(); num_classes],
            correct: 0,
            total: 0,
        }
    }

    pub fn add_document(&mut self, gold: &[usize], pred: &[usize]) -> Result<()> {
        if gold.len() != pred.len() {
            return Err(Error::MentionSetMismatch(format!(
                "{} gold labels, {} predicted",
                gold.len(),
                pred.len()
            )));
        }
        let m = self.classes.len();
        if let Some(bad) = gold.iter().chain(pred).find(|&&c| c >= m) {
            return Err(Error::InvalidArgument(format!("class {bad} outside 0..{m}")));
        }
        for (&g, &p) in gold.iter().zip(pred) {
            self.total += 1;
            if g == p {
                self.correct += 1;
                self.classes[g].true_pos += 1;
            } else {
                self.classes[g].false_neg += 1;
                self.classes[p].false_pos += 1;
            }
        }
        Ok(())
    }

    pub fn scores(&self) -> LinkingScores {
        if self.total == 0 {
            return LinkingScores {
                micro_f1: 1.0,
                macro_f1: 1.0,
                per_class: self.classes.iter().map(ClassCounts::prf).collect(),
                support: vec![0; self.classes.len()],
            };
        }
        let tp: u64 = self.classes.iter().map(|c| c.true_pos).sum();
        let fp: u64 = self.classes.iter().map(|c| c.false_pos).sum();
        let fneg: u64 = self.classes.iter().map(|c| c.false_neg).sum();
        let micro = ClassCounts {
            true_pos: tp,
            false_pos: fp,
            false_neg: fneg,
        }
        .prf();
        debug_assert!((micro.f1 - self.correct as f64 / self.total as f64).abs() < 1e-12);
        let supported: Vec<&ClassCounts> = self.classes.iter().filter(|c| c.support() > 0).collect();
        let macro_f1 = supported.iter().map(|c| c.prf().f1).sum::<f64>() / supported.len() as f64;
        LinkingScores {
            micro_f1: micro.f1,
            macro_f1,
            per_class: self.classes.iter().map(ClassCounts::prf).collect(),
            support: self.classes.iter().map(ClassCounts::support).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<PRF>,
    pub support: Vec<u64>,
}

pub fn linking_f1(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<LinkingScores> {
    let mut c = LinkingCounts::new(num_classes);
    c.add_document(gold, pred)?;
    Ok(c.scores())
}

/// Classes that occur in either sequence; handy for sizing ad-hoc calls.
pub fn class_span(gold: &[usize], pred: &[usize]) -> usize {
    let seen: BTreeSet<usize> = gold.iter().chain(pred).copied().collect();
    seen.last().map_or(0, |&m| m + 1)
}
