//! The joint model: token encoder, speaker embeddings, mention
//! self-attention and the two task heads sharing one parameter store.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::corpus::{
    build_inventories, derive_gold_clusters, CharacterInventory, SceneDocument, SpeakerInventory,
};
use crate::decode::PredictionBundle;
use crate::encoder::{
    initial_mention_reprs, segment_document, BuiltinEncoder, BuiltinEncoderConfig, MentionRepr,
    PrecomputedEncoder, SpeakerEmbeddingTable, SpeakerMode, TokenEncoder, Vocabulary,
};
use crate::error::{Error, Result};
use crate::heads::{
    coref_loss_var, joint_loss_var, link_logits, linking_distribution, linking_loss_var, score_antecedents,
    AntecedentScores, CorefHead, HeadsConfig, LinkHead, ScoreColumn,
};
use crate::mlsa::{MlsaConfig, MlsaStack};
use crate::nn::{Initializer, ParamStore};

/// Which losses are trained and which heads are decoded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    #[default]
    Joint,
    CorefOnly,
    LinkOnly,
}

impl TaskMode {
    pub fn coref(self) -> bool {
        self != TaskMode::LinkOnly
    }

    pub fn linking(self) -> bool {
        self != TaskMode::CorefOnly
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Builtin,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// `0` means four times `dim`.
    pub ff_width: usize,
    pub max_positions: usize,
    pub embedding_std: f64,
    /// Segment length cap in tokens.
    pub max_segment_tokens: usize,
    /// Token vectors file for the precomputed encoder.
    pub vectors: Option<PathBuf>,
    pub speaker_mode: SpeakerMode,
    pub speaker_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Builtin,
            dim: 32,
            layers: 1,
            heads: 4,
            ff_width: 0,
            max_positions: 128,
            embedding_std: 0.1,
            max_segment_tokens: 128,
            vectors: None,
            speaker_mode: SpeakerMode::First,
            speaker_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointModel {
    pub store: ParamStore,
    pub encoder: TokenEncoder,
    pub speakers: SpeakerInventory,
    pub characters: CharacterInventory,
    pub speaker_table: SpeakerEmbeddingTable,
    pub mlsa: MlsaStack,
    pub coref: CorefHead,
    pub link: LinkHead,
    pub task: TaskMode,
    pub speaker_mode: SpeakerMode,
    pub max_segment_tokens: usize,
}

/// Tape handles for one document's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub mentions: MentionRepr,
    pub scores: Option<ScoreColumn>,
    pub logits: Option<crate::autograd::Var>,
}

/// Per-document loss: the tape scalar to differentiate plus plain values.
#[derive(Debug, Clone, Copy)]
pub struct DocumentLoss {
    pub total: crate::autograd::Var,
    pub coref: Option<f64>,
    pub linking: Option<f64>,
}

impl JointModel {
    /// Builds inventories from the training documents and initialises every
    /// parameter from `seed`, or to zero when `zero_init` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        encoder_cfg: &EncoderConfig,
        mlsa_cfg: &MlsaConfig,
        heads_cfg: &HeadsConfig,
        task: TaskMode,
        train_docs: &[SceneDocument],
        min_mentions: usize,
        seed: u64,
        zero_init: bool,
    ) -> Result<Self> {
        let (characters, speakers) = build_inventories(train_docs, min_mentions)?;
        let dim = encoder_cfg.dim;
        if dim == 0 {
            return Err(Error::Config("encoder.dim must be positive".into()));
        }
        let mut init = if zero_init {
            Initializer::zeros()
        } else {
            Initializer::random(ChaCha8Rng::seed_from_u64(seed))
        };
        let mut store = ParamStore::default();
        let encoder = match encoder_cfg.kind {
            EncoderKind::Builtin => {
                if encoder_cfg.layers > 0 && (encoder_cfg.heads == 0 || !dim.is_multiple_of(encoder_cfg.heads)) {
                    return Err(Error::Config(format!(
                        "encoder.heads = {} does not divide d = {dim}",
                        encoder_cfg.heads
                    )));
                }
                let cfg = BuiltinEncoderConfig {
                    layers: encoder_cfg.layers,
                    heads: encoder_cfg.heads,
                    ff_width: if encoder_cfg.ff_width == 0 { 4 * dim } else { encoder_cfg.ff_width },
                    max_positions: encoder_cfg.max_positions.max(1),
                    embedding_std: encoder_cfg.embedding_std,
                };
                TokenEncoder::Builtin(BuiltinEncoder::new(
                    &mut store,
                    &mut init,
                    Vocabulary::build(train_docs),
                    dim,
                    &cfg,
                ))
            }
            EncoderKind::Precomputed => {
                let path = encoder_cfg
                    .vectors
                    .as_ref()
                    .ok_or_else(|| Error::Config("encoder.vectors is required for the precomputed encoder".into()))?;
                TokenEncoder::Precomputed(PrecomputedEncoder::load(path, dim)?)
            }
        };
        let speaker_table =
            SpeakerEmbeddingTable::new(&mut store, &mut init, &speakers, dim, encoder_cfg.speaker_std);
        let mlsa = MlsaStack::new(&mut store, &mut init, dim, mlsa_cfg)?;
        let coref = CorefHead::new(&mut store, &mut init, dim, heads_cfg);
        let link = LinkHead::new(&mut store, &mut init, dim, characters.len(), heads_cfg);
        Ok(Self {
            store,
            encoder,
            speakers,
            characters,
            speaker_table,
            mlsa,
            coref,
            link,
            task,
            speaker_mode: encoder_cfg.speaker_mode,
            max_segment_tokens: encoder_cfg.max_segment_tokens,
        })
    }

    /// Restores state that is not serialised (precomputed vectors).
    pub fn after_load(&mut self) -> Result<()> {
        if let TokenEncoder::Precomputed(e) = &mut self.encoder {
            e.reload()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    /// Refined mention vectors g(n) for one document; every segment of the
    /// document is encoded in the same pass.
    pub fn mention_vectors(&self, t: &mut Tape, doc: &SceneDocument) -> Result<MentionRepr> {
        let segments = segment_document(doc, self.max_segment_tokens)?;
        let encodings = segments
            .iter()
            .map(|s| self.encoder.encode_tokens(t, doc, s))
            .collect::<Result<Vec<_>>>()?;
        let g0 = initial_mention_reprs(t, doc, &encodings, &self.speaker_table, &self.speakers, self.speaker_mode)?;
        self.mlsa.refine_mentions(t, g0)
    }

    pub fn forward(&self, t: &mut Tape, doc: &SceneDocument) -> Result<Forward> {
        let mentions = self.mention_vectors(t, doc)?;
        let scores = self.task.coref().then(|| score_antecedents(t, &mentions, &self.coref));
        let logits = self.task.linking().then(|| link_logits(t, &mentions, &self.link));
        Ok(Forward {
            mentions,
            scores,
            logits,
        })
    }

    /// Training loss of one document under the model's task mode: the
    /// average of both losses for the joint model, a single loss otherwise.
    pub fn loss(&self, t: &mut Tape, doc: &SceneDocument, normalize: bool) -> Result<DocumentLoss> {
        let f = self.forward(t, doc)?;
        let coref = match f.scores {
            Some(col) => Some(coref_loss_var(t, &col, &derive_gold_clusters(doc)?, normalize)),
            None => None,
        };
        let linking = match f.logits {
            Some(logits) => Some(linking_loss_var(t, logits, &self.characters.gold_classes(doc)?, normalize)?),
            None => None,
        };
        let total = match (coref, linking) {
            (Some(c), Some(l)) => joint_loss_var(t, c, l),
            (Some(c), None) => c,
            (None, Some(l)) => l,
            (None, None) => unreachable!("every task mode trains at least one head"),
        };
        Ok(DocumentLoss {
            total,
            coref: coref.map(|v| t.scalar(v)),
            linking: linking.map(|v| t.scalar(v)),
        })
    }
}

/// Anything that can decode a document into predictions.
pub trait Predictor {
    fn predict(&self, doc: &SceneDocument) -> Result<PredictionBundle>;
    fn characters(&self) -> &CharacterInventory;
    fn task(&self) -> TaskMode;
}

impl Predictor for JointModel {
    fn predict(&self, doc: &SceneDocument) -> Result<PredictionBundle> {
        let mut t = Tape::new(&self.store);
        let f = self.forward(&mut t, doc)?;
        let scores = f.scores.map(|c| AntecedentScores::from_tape(&t, &c));
        let probs = f.logits.map(|l| linking_distribution(t.value(l)));
        Ok(PredictionBundle::decode(
            doc.scene_id.clone(),
            doc.num_mentions(),
            scores.as_ref(),
            probs,
        ))
    }

    fn characters(&self) -> &CharacterInventory {
        &self.characters
    }

    fn task(&self) -> TaskMode {
        self.task
    }
}

/// Returns the gold annotation as its prediction.
pub struct PerfectOracle {
    pub characters: CharacterInventory,
    pub task: TaskMode,
}

impl Predictor for PerfectOracle {
    fn predict(&self, doc: &SceneDocument) -> Result<PredictionBundle> {
        let n = doc.num_mentions();
        let clusters = derive_gold_clusters(doc)?;
        let classes = self.characters.gold_classes(doc)?;
        let m = self.characters.len();
        let mut antecedents = vec![None; n];
        for c in clusters.clusters() {
            for w in c.windows(2) {
                antecedents[w[1]] = Some(w[0]);
            }
        }
        let label_probs: Vec<Vec<f64>> = classes
            .iter()
            .map(|&z| (0..m).map(|k| if k == z { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(PredictionBundle {
            scene_id: doc.scene_id.clone(),
            antecedents: crate::decode::AntecedentAssignment(if self.task.coref() {
                antecedents
            } else {
                vec![None; n]
            }),
            clusters: if self.task.coref() {
                clusters
            } else {
                crate::corpus::Clustering::singletons(n)
            },
            labels: if self.task.linking() { classes } else { Vec::new() },
            antecedent_probs: Vec::new(),
            label_probs: if self.task.linking() { label_probs } else { Vec::new() },
        })
    }

    fn characters(&self) -> &CharacterInventory {
        &self.characters
    }

    fn task(&self) -> TaskMode {
        self.task
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, Split, SynthSpec};

    fn docs() -> Vec<SceneDocument> {
        generate_synthetic_corpus(&SynthSpec::default(), 1).unwrap()[&Split::Train].clone()
    }

    fn small() -> (EncoderConfig, MlsaConfig, HeadsConfig) {
        (
            EncoderConfig {
                dim: 8,
                heads: 2,
                max_positions: 64,
                ..EncoderConfig::default()
            },
            MlsaConfig {
                heads: 2,
                ..MlsaConfig::default()
            },
            HeadsConfig {
                hidden_width: 6,
                use_mention_score: true,
            },
        )
    }

    #[test]
    fn forward_shapes_and_prediction() {
        let d = docs();
        let (e, m, h) = small();
        let model = JointModel::new(&e, &m, &h, TaskMode::Joint, &d, 1, 0, false).unwrap();
        let doc = &d[0];
        let b = model.predict(doc).unwrap();
        assert_eq!(b.num_mentions(), doc.num_mentions());
        assert_eq!(b.labels.len(), doc.num_mentions());
        let mut t = Tape::new(&model.store);
        let loss = model.loss(&mut t, doc, false).unwrap();
        let (c, l) = (loss.coref.unwrap(), loss.linking.unwrap());
        assert_eq!(t.scalar(loss.total), (c + l) / 2.0);
    }

    #[test]
    fn single_task_modes_skip_heads() {
        let d = docs();
        let (e, m, h) = small();
        let coref = JointModel::new(&e, &m, &h, TaskMode::CorefOnly, &d, 1, 0, false).unwrap();
        let b = coref.predict(&d[0]).unwrap();
        assert!(b.labels.is_empty());
        let link = JointModel::new(&e, &m, &h, TaskMode::LinkOnly, &d, 1, 0, false).unwrap();
        let b = link.predict(&d[0]).unwrap();
        assert_eq!(b.clusters, crate::corpus::Clustering::singletons(d[0].num_mentions()));

        let mut t = Tape::new(&link.store);
        let loss = link.loss(&mut t, &d[0], false).unwrap();
        let g = t.backward(loss.total);
        for id in link.store.with_prefix("coref.") {
            assert!(g.get(id).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_init_predicts_class_zero() {
        let d = docs();
        let (e, m, h) = small();
        let model = JointModel::new(&e, &m, &h, TaskMode::Joint, &d, 1, 0, true).unwrap();
        let b = model.predict(&d[0]).unwrap();
        assert!(b.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn oracle_reproduces_gold() {
        let d = docs();
        let (characters, _) = build_inventories(&d, 1).unwrap();
        let oracle = PerfectOracle {
            characters,
            task: TaskMode::Joint,
        };
        let b = oracle.predict(&d[0]).unwrap();
        assert_eq!(b.clusters, derive_gold_clusters(&d[0]).unwrap());
    }
}
