//! Token encoding and initial mention representations.
//!
//! A mention starts as the sum of the contextual vectors of its first and
//! last tokens plus the embedding of the utterance's speaker. Token vectors
//! come from a pluggable backend: the built-in trainable encoder, or frozen
//! vectors precomputed by an external pretrained model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::corpus::{SceneDocument, SpeakerInventory};
use crate::error::{Error, Result};
use crate::nn::{Initializer, ParamId, ParamStore, TransformerLayer};

/// A run of whole sentences encoded together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    /// (utterance, sentence) pairs in document order.
    pub sentences: Vec<(usize, usize)>,
    /// Document-level position of the segment's first token.
    pub token_offset: usize,
    pub num_tokens: usize,
}

/// Splits a document into non-overlapping segments of at most `max_tokens`
/// tokens. Whole utterances are packed greedily; an utterance longer than
/// the cap is split between sentences. Segments never cut a sentence, so no
/// mention straddles a boundary.
pub fn segment_document(doc: &SceneDocument, max_tokens: usize) -> Result<Vec<Segment>> {
    if max_tokens == 0 {
        return Err(Error::Config("max_tokens must be positive".into()));
    }
    let mut segments = Vec::new();
    let mut sentences: Vec<(usize, usize)> = Vec::new();
    let mut seg_start = 0;
    let mut seg_len = 0;

    let mut flush = |sentences: &mut Vec<(usize, usize)>, seg_start: &mut usize, seg_len: &mut usize| {
        if !sentences.is_empty() {
            segments.push(Segment {
                sentences: std::mem::take(sentences),
                token_offset: *seg_start,
                num_tokens: *seg_len,
            });
        }
        *seg_start += *seg_len;
        *seg_len = 0;
    };

    for (u, utt) in doc.utterances.iter().enumerate() {
        if seg_len + utt.token_count() > max_tokens {
            flush(&mut sentences, &mut seg_start, &mut seg_len);
        }
        for (s, sent) in utt.sentences.iter().enumerate() {
            if sent.len() > max_tokens {
                return Err(Error::SentenceTooLong {
                    len: sent.len(),
                    cap: max_tokens,
                });
            }
            if sent.is_empty() {
                continue;
            }
            if seg_len + sent.len() > max_tokens {
                flush(&mut sentences, &mut seg_start, &mut seg_len);
            }
            sentences.push((u, s));
            seg_len += sent.len();
        }
    }
    flush(&mut sentences, &mut seg_start, &mut seg_len);
    Ok(segments)
}

impl Segment {
    pub fn tokens<'d>(&self, doc: &'d SceneDocument) -> Vec<&'d str> {
        self.sentences
            .iter()
            .flat_map(|&(u, s)| doc.utterances[u].sentences[s].iter().map(String::as_str))
            .collect()
    }

    /// Document positions of the segment's tokens.
    pub fn doc_positions(&self) -> std::ops::Range<usize> {
        self.token_offset..self.token_offset + self.num_tokens
    }

    pub fn num_mentions(&self, doc: &SceneDocument) -> usize {
        doc.mentions
            .iter()
            .filter(|m| self.sentences.contains(&(m.utterance_index, m.sentence_index)))
            .count()
    }
}

/// Contextual vectors of one segment (rows follow the segment's tokens).
#[derive(Debug, Clone, Copy)]
pub struct TokenEncoding {
    pub vectors: Var,
    pub token_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub const UNK: &'static str = "[UNK]";
    pub const UNK_INDEX: usize = 0;

    pub fn build<'a>(docs: impl IntoIterator<Item = &'a SceneDocument>) -> Self {
        let mut seen = BTreeMap::new();
        for doc in docs {
            for tok in doc.utterances.iter().flat_map(|u| u.sentences.iter().flatten()) {
                seen.entry(tok.clone()).or_insert(());
            }
        }
        let mut tokens = vec![Self::UNK.to_string()];
        tokens.extend(seen.into_keys().filter(|t| t != Self::UNK));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Out-of-vocabulary tokens map to `[UNK]`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_INDEX)
    }
}

/// Token embeddings plus learned absolute positions, followed by a few
/// self-attention layers over the segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuiltinEncoder {
    pub vocab: Vocabulary,
    pub dim: usize,
    pub max_positions: usize,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<TransformerLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltinEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_positions: usize,
    pub embedding_std: f64,
}

impl BuiltinEncoder {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        vocab: Vocabulary,
        dim: usize,
        cfg: &BuiltinEncoderConfig,
    ) -> Self {
        let token_embedding = store.add(
            "encoder.token_embedding",
            init.normal(vocab.len(), dim, cfg.embedding_std),
        );
        let position_embedding = store.add(
            "encoder.position_embedding",
            init.normal(cfg.max_positions, dim, cfg.embedding_std),
        );
        let layers = (0..cfg.layers)
            .map(|l| {
                TransformerLayer::new(store, init, &format!("encoder.layer{l}"), dim, cfg.heads, cfg.ff_width)
            })
            .collect();
        Self {
            vocab,
            dim,
            max_positions: cfg.max_positions,
            token_embedding,
            position_embedding,
            layers,
        }
    }

    fn encode(&self, t: &mut Tape, tokens: &[&str]) -> Var {
        let ids: Vec<usize> = tokens.iter().map(|tok| self.vocab.id(tok)).collect();
        let positions: Vec<usize> = (0..tokens.len()).map(|p| p.min(self.max_positions - 1)).collect();
        let table = t.param(self.token_embedding);
        let emb = t.gather_rows(table, &ids);
        let pos_table = t.param(self.position_embedding);
        let pos = t.gather_rows(pos_table, &positions);
        let mut x = t.add(emb, pos);
        for layer in &self.layers {
            x = layer.forward(t, x);
        }
        x
    }
}

/// Frozen token vectors produced offline by an external contextual encoder.
///
/// File layout: `{"dim": d, "scenes": {"<scene_id>": [[f64; d], ...]}}` with
/// one row per document token in document order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecomputedEncoder {
    pub path: PathBuf,
    pub dim: usize,
    #[serde(skip)]
    scenes: BTreeMap<String, Array2<f64>>,
}

#[derive(Deserialize)]
struct PrecomputedFile {
    dim: usize,
    scenes: BTreeMap<String, Vec<Vec<f64>>>,
}

impl PrecomputedEncoder {
    pub fn load(path: &Path, expected_dim: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PrecomputedFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            record: format!("line {}", e.line()),
            message: e.to_string(),
        })?;
        if file.dim != expected_dim {
            return Err(Error::Config(format!(
                "precomputed vectors have dimension {}, model expects {expected_dim}",
                file.dim
            )));
        }
        let mut scenes = BTreeMap::new();
        for (id, rows) in file.scenes {
            let n = rows.len();
            let flat: Vec<f64> = rows
                .into_iter()
                .map(|r| {
                    if r.len() == expected_dim {
                        Ok(r)
                    } else {
                        Err(Error::Config(format!(
                            "scene {id}: row of length {} in a {expected_dim}-d file",
                            r.len()
                        )))
                    }
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            let arr = Array2::from_shape_vec((n, expected_dim), flat).expect("validated row lengths");
            scenes.insert(id, arr);
        }
        Ok(Self {
            path: path.to_path_buf(),
            dim: expected_dim,
            scenes,
        })
    }

    /// Reloads vectors after deserialisation.
    pub fn reload(&mut self) -> Result<()> {
        *self = Self::load(&self.path.clone(), self.dim)?;
        Ok(())
    }

    fn encode(&self, t: &mut Tape, doc: &SceneDocument, segment: &Segment) -> Result<Var> {
        let vectors = self.scenes.get(&doc.scene_id).ok_or_else(|| {
            Error::Config(format!("no precomputed vectors for scene {}", doc.scene_id))
        })?;
        let range = segment.doc_positions();
        if range.end > vectors.nrows() {
            return Err(Error::Config(format!(
                "scene {} has {} precomputed rows, needs {}",
                doc.scene_id,
                vectors.nrows(),
                range.end
            )));
        }
        Ok(t.constant(vectors.slice(ndarray::s![range, ..]).to_owned()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TokenEncoder {
    Builtin(BuiltinEncoder),
    Precomputed(PrecomputedEncoder),
}

impl TokenEncoder {
    pub fn dim(&self) -> usize {
        match self {
            TokenEncoder::Builtin(e) => e.dim,
            TokenEncoder::Precomputed(e) => e.dim,
        }
    }

    /// Contextual vectors for one segment.
    pub fn encode_tokens(&self, t: &mut Tape, doc: &SceneDocument, segment: &Segment) -> Result<TokenEncoding> {
        let vectors = match self {
            TokenEncoder::Builtin(e) => e.encode(t, &segment.tokens(doc)),
            TokenEncoder::Precomputed(e) => e.encode(t, doc, segment)?,
        };
        let got = t.value(vectors).dim();
        if got != (segment.num_tokens, self.dim()) {
            return Err(Error::Config(format!(
                "encoder produced {got:?} for a segment of {} tokens at d = {}",
                segment.num_tokens,
                self.dim()
            )));
        }
        Ok(TokenEncoding {
            vectors,
            token_offset: segment.token_offset,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerMode {
    /// Embedding of the first listed speaker.
    #[default]
    First,
    /// Mean of the embeddings of all listed speakers.
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerEmbeddingTable {
    pub table: ParamId,
    pub dim: usize,
    pub init_std: f64,
}

impl SpeakerEmbeddingTable {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        speakers: &SpeakerInventory,
        dim: usize,
        init_std: f64,
    ) -> Self {
        Self {
            table: store.add("speaker_embedding", init.normal(speakers.len(), dim, init_std)),
            dim,
            init_std,
        }
    }
}

/// Mention vectors for one document at a given refinement depth; row i is
/// mention i.
#[derive(Debug, Clone, Copy)]
pub struct MentionRepr {
    pub vectors: Var,
    pub depth: usize,
}

/// g(0) = t_start + t_end + e_speaker for every mention.
pub fn initial_mention_reprs(
    t: &mut Tape,
    doc: &SceneDocument,
    encodings: &[TokenEncoding],
    table: &SpeakerEmbeddingTable,
    speakers: &SpeakerInventory,
    mode: SpeakerMode,
) -> Result<MentionRepr> {
    let mut parts: Vec<TokenEncoding> = encodings.to_vec();
    parts.sort_by_key(|e| e.token_offset);
    let mut expected = 0;
    for e in &parts {
        if e.token_offset != expected {
            return Err(Error::InvalidArgument(format!(
                "token encodings leave a gap at document position {expected}"
            )));
        }
        expected += t.value(e.vectors).nrows();
    }
    let vars: Vec<Var> = parts.iter().map(|e| e.vectors).collect();
    let tokens = match vars.as_slice() {
        [] => t.constant(Array2::zeros((0, table.dim))),
        [single] => *single,
        many => t.concat_rows(many),
    };
    let positions = doc.mention_token_positions();
    if let Some(&(_, end)) = positions.iter().find(|&&(_, end)| end >= expected) {
        return Err(Error::InvalidArgument(format!(
            "mention endpoint {end} not covered by the {expected} encoded tokens"
        )));
    }
    let spans = t.row_mix(
        tokens,
        positions.iter().map(|&(s, e)| vec![(s, 1.0), (e, 1.0)]).collect(),
    );

    let speaker_rows: Vec<Vec<(usize, f64)>> = doc
        .mentions
        .iter()
        .map(|m| {
            let names: Vec<&str> = match mode {
                SpeakerMode::First => vec![m.speaker_id.as_str()],
                SpeakerMode::Mean => doc.utterances[m.utterance_index]
                    .speaker_ids
                    .iter()
                    .map(String::as_str)
                    .collect(),
            };
            let w = 1.0 / names.len() as f64;
            names
                .into_iter()
                .map(|name| {
                    if !speakers.contains(name) {
                        log::warn!(
                            "scene {}: speaker {name:?} not in the speaker table, using UNK",
                            doc.scene_id
                        );
                    }
                    (speakers.index_of(name), w)
                })
                .collect()
        })
        .collect();
    let table_var = t.param(table.table);
    let spk = t.row_mix(table_var, speaker_rows);
    let vectors = t.add(spans, spk);
    Ok(MentionRepr { vectors, depth: 0 })
}
