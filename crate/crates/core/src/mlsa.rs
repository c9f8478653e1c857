//! Mention-level self-attention: a stack of transformer encoder layers run
//! over the mentions of a whole document, refining g(i) into g(i+1).

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::encoder::MentionRepr;
use crate::error::{Error, Result};
use crate::nn::{Initializer, ParamId, ParamStore, TransformerLayer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlsaConfig {
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width; `0` means four times the model dimension.
    pub ff_width: usize,
    /// Adds a learned embedding of each mention's ordinal before the stack.
    pub positional: bool,
    pub max_mentions: usize,
}

impl Default for MlsaConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 4,
            ff_width: 0,
            positional: false,
            max_mentions: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlsaStack {
    pub dim: usize,
    pub layers: Vec<TransformerLayer>,
    pub ordinal: Option<ParamId>,
}

impl MlsaStack {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, dim: usize, cfg: &MlsaConfig) -> Result<Self> {
        if cfg.layers > 0 && (cfg.heads == 0 || !dim.is_multiple_of(cfg.heads)) {
            return Err(Error::Config(format!(
                "mlsa.heads = {} does not divide d = {dim}",
                cfg.heads
            )));
        }
        let ff = if cfg.ff_width == 0 { 4 * dim } else { cfg.ff_width };
        let layers = (0..cfg.layers)
            .map(|l| TransformerLayer::new(store, init, &format!("mlsa.layer{l}"), dim, cfg.heads, ff))
            .collect();
        let ordinal = cfg
            .positional
            .then(|| store.add("mlsa.ordinal", init.normal(cfg.max_mentions, dim, 0.02)));
        Ok(Self { dim, layers, ordinal })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Applies every layer with unmasked attention across the document's
    /// mentions. With zero layers (and no ordinal embedding) the input is
    /// returned unchanged.
    pub fn refine_mentions(&self, t: &mut Tape, reprs: MentionRepr) -> Result<MentionRepr> {
        let (k, d) = t.value(reprs.vectors).dim();
        if d != self.dim {
            return Err(Error::Config(format!(
                "mention vectors have d = {d}, mention self-attention expects {}",
                self.dim
            )));
        }
        if k == 0 {
            return Ok(MentionRepr {
                vectors: reprs.vectors,
                depth: reprs.depth + self.layers.len(),
            });
        }
        let mut x = reprs.vectors;
        if let Some(table) = self.ordinal {
            let rows = t.params().get(table).value.nrows();
            let idx: Vec<usize> = (0..k).map(|i| i.min(rows - 1)).collect();
            let tv = t.param(table);
            let pos = t.gather_rows(tv, &idx);
            x = t.add(x, pos);
        }
        for layer in &self.layers {
            x = layer.forward(t, x);
        }
        Ok(MentionRepr {
            vectors: x,
            depth: reprs.depth + self.layers.len(),
        })
    }
}
