//! Task heads over refined mention vectors and the losses that train them.
//!
//! Coreference is antecedent ranking: mention i scores every earlier mention
//! j with s(i, j) = s_m(i) + s_m(j) + s_a(i, j) and the dummy antecedent with
//! a fixed 0. Linking is a softmax classifier over the character inventory.

use serde::{Deserialize, Serialize};

use crate::autograd::{antecedent_pairs, pair_offset, softmax, Tape, Var};
use crate::corpus::Clustering;
use crate::encoder::MentionRepr;
use crate::error::{Error, Result};
use crate::nn::{Ffnn, Initializer, Linear, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadsConfig {
    pub hidden_width: usize,
    pub use_mention_score: bool,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            use_mention_score: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorefHead {
    /// FFNN_m: d -> hidden -> 1.
    pub mention: Ffnn,
    /// First layer of FFNN_a over [g_i, g_j]; weight is 2d x hidden.
    pub pair_hidden: Linear,
    pub pair_output: Linear,
    pub use_mention_score: bool,
}

impl CorefHead {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, dim: usize, cfg: &HeadsConfig) -> Self {
        Self {
            mention: Ffnn::new(store, init, "coref.mention", dim, cfg.hidden_width, 1),
            pair_hidden: Linear::new(store, init, "coref.pair.0", 2 * dim, cfg.hidden_width),
            pair_output: Linear::new(store, init, "coref.pair.1", cfg.hidden_width, 1),
            use_mention_score: cfg.use_mention_score,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkHead {
    /// FFNN_l: d -> hidden -> m.
    pub classifier: Ffnn,
    pub num_classes: usize,
}

impl LinkHead {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        dim: usize,
        num_classes: usize,
        cfg: &HeadsConfig,
    ) -> Self {
        Self {
            classifier: Ffnn::new(store, init, "link", dim, cfg.hidden_width, num_classes),
            num_classes,
        }
    }
}

/// Antecedent scores of one document as a P x 1 column on the tape, laid
/// out by [`antecedent_pairs`].
#[derive(Debug, Clone, Copy)]
pub struct ScoreColumn {
    pub scores: Var,
    pub num_mentions: usize,
}

/// s(i, j) for every j < i. The concatenation [g_i, g_j] puts the later
/// mention first; the first layer of FFNN_a is applied as
/// `g_i W_top + g_j W_bottom`, which equals multiplying the concatenation.
pub fn score_antecedents(t: &mut Tape, reprs: &MentionRepr, head: &CorefHead) -> ScoreColumn {
    let g = reprs.vectors;
    let (k, d) = t.value(g).dim();
    let pairs = antecedent_pairs(k);
    let pair_var = if pairs.is_empty() {
        t.constant(ndarray::Array2::zeros((0, 1)))
    } else {
        let w = t.param(head.pair_hidden.weight);
        let w_later = t.slice_rows(w, 0, d);
        let w_earlier = t.slice_rows(w, d, d);
        let a = t.matmul(g, w_later);
        let b = t.matmul(g, w_earlier);
        let h = t.pair_add(a, b, pairs.clone());
        let bias = t.param(head.pair_hidden.bias);
        let h = t.add_row(h, bias);
        let h = t.relu(h);
        head.pair_output.forward(t, h)
    };
    let mention = head.use_mention_score.then(|| head.mention.forward(t, g));
    let scores = t.pair_score(mention, pair_var, pairs);
    ScoreColumn {
        scores,
        num_mentions: k,
    }
}

/// Per-mention candidate scores; row i has i + 1 entries, the dummy
/// antecedent first (always 0) followed by mentions 0..i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntecedentScores {
    pub rows: Vec<Vec<f64>>,
}

impl AntecedentScores {
    pub fn from_column(num_mentions: usize, column: &[f64]) -> Self {
        assert_eq!(column.len(), pair_offset(num_mentions));
        let rows = (0..num_mentions)
            .map(|i| {
                let off = pair_offset(i);
                std::iter::once(0.0).chain(column[off..off + i].iter().copied()).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn from_tape(t: &Tape, col: &ScoreColumn) -> Self {
        let values: Vec<f64> = t.value(col.scores).iter().copied().collect();
        Self::from_column(col.num_mentions, &values)
    }

    pub fn num_mentions(&self) -> usize {
        self.rows.len()
    }
}

/// Softmax over each mention's candidate set.
pub fn antecedent_distribution(scores: &AntecedentScores) -> Vec<Vec<f64>> {
    scores.rows.iter().map(|r| softmax(r)).collect()
}

/// Class logits FFNN_l(g_i) for every mention (k x m).
pub fn link_logits(t: &mut Tape, reprs: &MentionRepr, head: &LinkHead) -> Var {
    head.classifier.forward(t, reprs.vectors)
}

/// Per-mention class distribution Q from a logit matrix.
pub fn linking_distribution(logits: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    logits.rows().into_iter().map(|r| softmax(&r.to_vec())).collect()
}

/// Gold antecedents of every mention: the earlier members of its gold
/// cluster. Empty means the dummy antecedent.
pub fn gold_antecedents(gold: &Clustering) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); gold.num_mentions()];
    for cluster in gold.clusters() {
        for (pos, &m) in cluster.iter().enumerate() {
            out[m] = cluster[..pos].to_vec();
        }
    }
    out
}

/// L_c = -sum_i log sum_{y in GOLD(i)} P(y), from antecedent distributions.
pub fn coref_loss(distributions: &[Vec<f64>], gold: &Clustering) -> Result<f64> {
    if distributions.len() != gold.num_mentions() {
        return Err(Error::MentionSetMismatch(format!(
            "{} distributions for {} gold mentions",
            distributions.len(),
            gold.num_mentions()
        )));
    }
    let mut loss = 0.0;
    for (i, (p, g)) in distributions.iter().zip(gold_antecedents(gold)).enumerate() {
        assert_eq!(p.len(), i + 1, "mention {i} must have {} candidates", i + 1);
        let mass: f64 = if g.is_empty() {
            p[0]
        } else {
            g.iter().map(|&j| p[j + 1]).sum()
        };
        loss -= mass.ln();
    }
    Ok(loss)
}

/// L_l = -sum_i log Q_i(z_i).
pub fn linking_loss(q: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if q.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} distributions for {} gold labels",
            q.len(),
            gold.len()
        )));
    }
    q.iter().zip(gold).try_fold(0.0, |acc, (row, &z)| {
        let p = row.get(z).ok_or_else(|| {
            Error::InvalidArgument(format!("gold class {z} outside 0..{}", row.len()))
        })?;
        Ok(acc - p.ln())
    })
}

/// L = (L_c + L_l) / 2.
pub fn joint_loss(coref: f64, linking: f64) -> f64 {
    (coref + linking) / 2.0
}

/// Coreference loss on the tape.
pub fn coref_loss_var(t: &mut Tape, col: &ScoreColumn, gold: &Clustering, normalize: bool) -> Var {
    assert_eq!(col.num_mentions, gold.num_mentions());
    t.antecedent_nll(col.scores, &gold_antecedents(gold), normalize)
}

/// Linking loss on the tape.
pub fn linking_loss_var(t: &mut Tape, logits: Var, gold: &[usize], normalize: bool) -> Result<Var> {
    let m = t.value(logits).ncols();
    if let Some(&z) = gold.iter().find(|&&z| z >= m) {
        return Err(Error::InvalidArgument(format!("gold class {z} outside 0..{m}")));
    }
    Ok(t.softmax_nll(logits, gold, normalize))
}

pub fn joint_loss_var(t: &mut Tape, coref: Var, linking: Var) -> Var {
    let both = t.add(coref, linking);
    t.scale(both, 0.5)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub coref: f64,
    pub linking: f64,
    pub joint: f64,
    /// (scene id, L_c, L_l) per document.
    pub per_document: Vec<(String, f64, f64)>,
}

impl LossReport {
    pub fn push(&mut self, scene: &str, coref: f64, linking: f64) {
        self.coref += coref;
        self.linking += linking;
        self.joint = joint_loss(self.coref, self.linking);
        self.per_document.push((scene.to_string(), coref, linking));
    }
}
