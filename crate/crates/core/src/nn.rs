//! Parameter storage and the small set of layers the model is built from.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Parameters whose name starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }
}

/// Source of initial parameter values. `zeros()` sets every parameter,
/// including normalisation gains, to zero.
pub struct Initializer {
    rng: Option<ChaCha8Rng>,
}

impl Initializer {
    pub fn random(rng: ChaCha8Rng) -> Self {
        Self { rng: Some(rng) }
    }

    pub fn zeros() -> Self {
        Self { rng: None }
    }

    /// Glorot-uniform weight matrix.
    pub fn weight(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        match &mut self.rng {
            None => Array2::zeros((rows, cols)),
            Some(rng) => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
            }
        }
    }

    pub fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Array2<f64> {
        match &mut self.rng {
            None => Array2::zeros((rows, cols)),
            Some(rng) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
            }
        }
    }

    pub fn ones(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        match self.rng {
            None => Array2::zeros((rows, cols)),
            Some(_) => Array2::ones((rows, cols)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, inp: usize, out: usize) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), init.weight(inp, out)),
            bias: store.add(format!("{name}.bias"), Array2::zeros((1, out))),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        let h = t.matmul(x, w);
        t.add_row(h, b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), init.ones(1, dim)),
            bias: store.add(format!("{name}.bias"), Array2::zeros((1, dim))),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let n = t.standardize(x, Self::EPS);
        let g = t.param(self.gain);
        let b = t.param(self.bias);
        let n = t.mul_row(n, g);
        t.add_row(n, b)
    }
}

/// Two fully connected layers with a rectified-linear hidden layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ffnn {
    pub hidden: Linear,
    pub output: Linear,
}

impl Ffnn {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        inp: usize,
        hidden: usize,
        out: usize,
    ) -> Self {
        Self {
            hidden: Linear::new(store, init, &format!("{name}.0"), inp, hidden),
            output: Linear::new(store, init, &format!("{name}.1"), hidden, out),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let h = self.hidden.forward(t, x);
        let h = t.relu(h);
        self.output.forward(t, h)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "dim {dim} not divisible by {heads} heads");
        Self {
            heads,
            query: Linear::new(store, init, &format!("{name}.query"), dim, dim),
            key: Linear::new(store, init, &format!("{name}.key"), dim, dim),
            value: Linear::new(store, init, &format!("{name}.value"), dim, dim),
            output: Linear::new(store, init, &format!("{name}.output"), dim, dim),
        }
    }

    /// Full bidirectional attention of every row over every row.
    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let dim = t.value(x).ncols();
        let head_dim = dim / self.heads;
        let q = self.query.forward(t, x);
        let k = self.key.forward(t, x);
        let v = self.value.forward(t, x);
        let scale = 1.0 / (head_dim as f64).sqrt();
        let contexts: Vec<Var> = (0..self.heads)
            .map(|h| {
                let qh = t.slice_cols(q, h * head_dim, head_dim);
                let kh = t.slice_cols(k, h * head_dim, head_dim);
                let vh = t.slice_cols(v, h * head_dim, head_dim);
                let kt = t.transpose(kh);
                let scores = t.matmul(qh, kt);
                let scores = t.scale(scores, scale);
                let weights = t.softmax_rows(scores);
                t.matmul(weights, vh)
            })
            .collect();
        let ctx = if contexts.len() == 1 {
            contexts[0]
        } else {
            t.concat_cols(&contexts)
        };
        self.output.forward(t, ctx)
    }
}

/// Pre-norm transformer encoder layer:
/// `x + attn(norm(x))`, then `y + ffn(norm(y))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerLayer {
    pub attn_norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ff_norm: LayerNorm,
    pub ff: Ffnn,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        ff_width: usize,
    ) -> Self {
        Self {
            attn_norm: LayerNorm::new(store, init, &format!("{name}.attn_norm"), dim),
            attn: MultiHeadAttention::new(store, init, &format!("{name}.attn"), dim, heads),
            ff_norm: LayerNorm::new(store, init, &format!("{name}.ff_norm"), dim),
            ff: Ffnn::new(store, init, &format!("{name}.ff"), dim, ff_width, dim),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let n = self.attn_norm.forward(t, x);
        let a = self.attn.forward(t, n);
        let x = t.add(x, a);
        let n = self.ff_norm.forward(t, x);
        let f = self.ff.forward(t, n);
        t.add(x, f)
    }
}
