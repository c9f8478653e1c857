//! Inference-time decoding of both heads and the cross-task consistency
//! diagnostic.

use serde::{Deserialize, Serialize};

use crate::corpus::Clustering;
use crate::heads::AntecedentScores;

/// Chosen antecedent per mention; `None` is the dummy antecedent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntecedentAssignment(pub Vec<Option<usize>>);

impl AntecedentAssignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    pub fn into_clustering(mut self) -> Clustering {
        let roots: Vec<usize> = (0..self.parent.len()).map(|i| self.find(i)).collect();
        Clustering::from_keys(&roots)
    }
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Argmax antecedent per mention, then connected components of the
/// antecedent links. The dummy sits at position 0 of each row, so ties
/// go to it first and then to the lowest mention index.
pub fn decode_clusters(scores: &AntecedentScores) -> (AntecedentAssignment, Clustering) {
    let n = scores.num_mentions();
    let mut uf = UnionFind::new(n);
    let chosen: Vec<Option<usize>> = scores
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let best = argmax_first(row);
            (best > 0).then(|| {
                uf.union(i, best - 1);
                best - 1
            })
        })
        .collect();
    (AntecedentAssignment(chosen), uf.into_clustering())
}

/// Argmax class per mention, ties toward the lowest class.
pub fn decode_characters(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().map(|row| argmax_first(row)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub scene_id: String,
    pub antecedents: AntecedentAssignment,
    pub clusters: Clustering,
    pub labels: Vec<usize>,
    /// Antecedent distributions per mention (dummy first).
    pub antecedent_probs: Vec<Vec<f64>>,
    /// Character distributions per mention.
    pub label_probs: Vec<Vec<f64>>,
}

impl PredictionBundle {
    /// Decodes both heads from their distributions. Either task may be
    /// absent: missing coreference gives singletons, missing linking gives
    /// an empty label list.
    pub fn decode(
        scene_id: impl Into<String>,
        num_mentions: usize,
        scores: Option<&AntecedentScores>,
        label_probs: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let (antecedents, clusters, antecedent_probs) = match scores {
            Some(s) => {
                let (a, c) = decode_clusters(s);
                (a, c, crate::heads::antecedent_distribution(s))
            }
            None => (
                AntecedentAssignment(vec![None; num_mentions]),
                Clustering::singletons(num_mentions),
                Vec::new(),
            ),
        };
        let label_probs = label_probs.unwrap_or_default();
        Self {
            scene_id: scene_id.into(),
            antecedents,
            clusters,
            labels: decode_characters(&label_probs),
            antecedent_probs,
            label_probs,
        }
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.num_mentions()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.len() == self.num_mentions()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub cluster: Vec<usize>,
    /// Predicted class of each member, in member order.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub violations: Vec<ConsistencyViolation>,
    pub non_singleton_clusters: usize,
    pub uniform_clusters: usize,
    /// Uniform / non-singleton clusters; 1.0 when there are none.
    pub ratio: f64,
}

impl ConsistencyReport {
    /// Pools several per-document reports.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a ConsistencyReport>) -> Self {
        let mut out = ConsistencyReport {
            violations: Vec::new(),
            non_singleton_clusters: 0,
            uniform_clusters: 0,
            ratio: 1.0,
        };
        for r in reports {
            out.violations.extend(r.violations.iter().cloned());
            out.non_singleton_clusters += r.non_singleton_clusters;
            out.uniform_clusters += r.uniform_clusters;
        }
        if out.non_singleton_clusters > 0 {
            out.ratio = out.uniform_clusters as f64 / out.non_singleton_clusters as f64;
        }
        out
    }
}

/// Predicted clusters whose members received more than one distinct label.
/// Without labels every cluster counts as uniform.
pub fn consistency_report(bundle: &PredictionBundle) -> ConsistencyReport {
    let mut violations = Vec::new();
    let mut non_singleton = 0;
    for cluster in bundle.clusters.clusters().iter().filter(|c| c.len() > 1) {
        non_singleton += 1;
        if !bundle.has_labels() {
            continue;
        }
        let labels: Vec<usize> = cluster.iter().map(|&m| bundle.labels[m]).collect();
        if labels.iter().any(|&l| l != labels[0]) {
            violations.push(ConsistencyViolation {
                cluster: cluster.clone(),
                labels,
            });
        }
    }
    let uniform = non_singleton - violations.len();
    ConsistencyReport {
        ratio: if non_singleton == 0 {
            1.0
        } else {
            uniform as f64 / non_singleton as f64
        },
        violations,
        non_singleton_clusters: non_singleton,
        uniform_clusters: uniform,
    }
}

/// Optional analysis mode: relabel every cluster member with the cluster's
/// most frequent predicted label (ties toward the lowest class).
pub fn majority_vote_labels(bundle: &PredictionBundle) -> Vec<usize> {
    let mut labels = bundle.labels.clone();
    if !bundle.has_labels() {
        return labels;
    }
    for cluster in bundle.clusters.clusters() {
        let mut counts = std::collections::BTreeMap::new();
        for &m in cluster {
            *counts.entry(bundle.labels[m]).or_insert(0usize) += 1;
        }
        let best = counts
            .iter()
            .fold((usize::MAX, 0), |acc, (&l, &c)| if c > acc.1 { (l, c) } else { acc })
            .0;
        for &m in cluster {
            labels[m] = best;
        }
    }
    labels
}

/// JSON dump of one document's predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDump {
    pub scene_id: String,
    pub antecedents: Vec<Option<usize>>,
    pub clusters: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub consistency: ConsistencyReport,
}

impl PredictionDump {
    pub fn new(bundle: &PredictionBundle, class_names: &[String]) -> Self {
        Self {
            scene_id: bundle.scene_id.clone(),
            antecedents: bundle.antecedents.0.clone(),
            clusters: bundle.clusters.clusters().to_vec(),
            labels: bundle.labels.clone(),
            label_names: bundle
                .labels
                .iter()
                .map(|&l| class_names.get(l).cloned().unwrap_or_else(|| l.to_string()))
                .collect(),
            consistency: consistency_report(bundle),
        }
    }
}
