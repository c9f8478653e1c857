//! Minimal reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Tape`] records a forward computation as a list of nodes; every node
//! owns its value. [`Tape::backward`] walks the list in reverse and returns
//! the gradient of a scalar output with respect to every parameter leaf.
//!
//! Besides generic matrix ops, the tape has fused ops for the pieces of the
//! model whose gradients are cheaper to write directly: sparse row mixing,
//! pairwise sums over antecedent pairs, mention-pair scores and the two
//! negative log-likelihood losses.

use ndarray::{s, Array1, Array2, Axis};

use crate::nn::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    /// Adds a 1 x c row to every row.
    AddRow(Var, Var),
    /// Multiplies every row elementwise by a 1 x c row.
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Transpose(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SoftmaxRows(Var),
    /// Row standardisation; caches the normalised rows and 1/std.
    Standardize {
        src: Var,
        inv_std: Vec<f64>,
    },
    /// Each output row is a weighted sum of source rows.
    RowMix {
        src: Var,
        rows: Vec<Vec<(usize, f64)>>,
    },
    /// Output row p = a[i] + b[j] for pairs[p] = (i, j).
    PairAdd {
        a: Var,
        b: Var,
        pairs: Vec<(usize, usize)>,
    },
    /// Output row p = m[i] + m[j] + pair[p] (mention term optional).
    PairScore {
        mention: Option<Var>,
        pair: Var,
        pairs: Vec<(usize, usize)>,
    },
    /// Sum over mentions of -log sum_{gold} softmax([0, s(i, 0..i)]).
    AntecedentNll {
        scores: Var,
        grad: Array2<f64>,
    },
    /// Sum over rows of -log softmax(row)[target]; `grad` is d loss / d logits.
    SoftmaxNll {
        logits: Var,
        grad: Array2<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Gradients indexed by parameter; parameters not on the tape stay zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            grads: params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.index()]
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            g.scaled_add(scale, o);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Layout of the antecedent candidates of a document with `k` mentions:
/// pairs (i, j) for every j < i, ordered by i then j.
pub fn antecedent_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (0..i).map(move |j| (i, j))).collect()
}

/// Offset of mention i's first pair in [`antecedent_pairs`].
pub fn pair_offset(i: usize) -> usize {
    i * i.saturating_sub(1) / 2
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax_row_in_place(mut row: ndarray::ArrayViewMut1<f64>) {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    row.mapv_inplace(|v| (v - max).exp());
    let sum = row.sum();
    row /= sum;
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(id).value,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Array2::zeros((0, 0)), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a 1 x c row");
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "mul_row expects a 1 x c row");
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for row in v.rows_mut() {
            softmax_row_in_place(row);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// (x - mean) / sqrt(var + eps) per row, population variance.
    pub fn standardize(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in out.rows_mut() {
            let mean = row.mean().unwrap_or(0.0);
            row.mapv_inplace(|v| v - mean);
            let var = row.mapv(|v| v * v).mean().unwrap_or(0.0);
            let inv = 1.0 / (var + eps).sqrt();
            row *= inv;
            inv_std.push(inv);
        }
        self.push(out, Op::Standardize { src: a, inv_std })
    }

    pub fn row_mix(&mut self, src: Var, rows: Vec<Vec<(usize, f64)>>) -> Var {
        let x = self.value(src);
        let mut out = Array2::zeros((rows.len(), x.ncols()));
        for (r, terms) in rows.iter().enumerate() {
            let mut o = out.row_mut(r);
            for &(i, w) in terms {
                o.scaled_add(w, &x.row(i));
            }
        }
        self.push(out, Op::RowMix { src, rows })
    }

    /// Plain row gather (embedding lookup).
    pub fn gather_rows(&mut self, src: Var, indices: &[usize]) -> Var {
        self.row_mix(src, indices.iter().map(|&i| vec![(i, 1.0)]).collect())
    }

    pub fn pair_add(&mut self, a: Var, b: Var, pairs: Vec<(usize, usize)>) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Array2::zeros((pairs.len(), av.ncols()));
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let mut o = out.row_mut(p);
            o.assign(&av.row(i));
            o += &bv.row(j);
        }
        self.push(out, Op::PairAdd { a, b, pairs })
    }

    /// s(i, j) = m(i) + m(j) + pair(i, j) as a P x 1 column.
    pub fn pair_score(&mut self, mention: Option<Var>, pair: Var, pairs: Vec<(usize, usize)>) -> Var {
        let mut out = self.value(pair).clone();
        if let Some(m) = mention {
            let mv = self.value(m);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                out[[p, 0]] += mv[[i, 0]] + mv[[j, 0]];
            }
        }
        self.push(out, Op::PairScore { mention, pair, pairs })
    }

    /// Coreference negative log-likelihood.
    ///
    /// `scores` is the P x 1 column laid out by [`antecedent_pairs`] for `k`
    /// mentions. `gold[i]` lists the gold antecedents of mention i (all
    /// earlier mentions of its cluster); an empty list means the dummy
    /// antecedent, whose score is fixed at zero.
    pub fn antecedent_nll(&mut self, scores: Var, gold: &[Vec<usize>], normalize: bool) -> Var {
        let k = gold.len();
        let sv = self.value(scores);
        assert_eq!(sv.nrows(), pair_offset(k), "score layout does not match mention count");
        let mut grad = Array2::zeros(sv.raw_dim());
        let mut loss = 0.0;
        let norm = if normalize && k > 0 { 1.0 / k as f64 } else { 1.0 };
        for (i, gold_i) in gold.iter().enumerate() {
            let off = pair_offset(i);
            // candidates: index 0 = dummy, 1 + j = mention j
            let cand = |c: usize| if c == 0 { 0.0 } else { sv[[off + c - 1, 0]] };
            let all = log_sum_exp((0..=i).map(cand));
            let gold_c: Vec<usize> = if gold_i.is_empty() {
                vec![0]
            } else {
                gold_i.iter().map(|&j| j + 1).collect()
            };
            let gold_lse = log_sum_exp(gold_c.iter().map(|&c| cand(c)));
            loss += all - gold_lse;
            for c in 1..=i {
                let mut g = (cand(c) - all).exp();
                if gold_c.contains(&c) {
                    g -= (cand(c) - gold_lse).exp();
                }
                grad[[off + c - 1, 0]] = g * norm;
            }
        }
        let out = Array2::from_elem((1, 1), loss * norm);
        self.push(out, Op::AntecedentNll { scores, grad })
    }

    /// Multi-class negative log-likelihood summed (or averaged) over rows.
    pub fn softmax_nll(&mut self, logits: Var, targets: &[usize], normalize: bool) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len());
        let mut grad = lv.clone();
        let mut loss = 0.0;
        let norm = if normalize && !targets.is_empty() {
            1.0 / targets.len() as f64
        } else {
            1.0
        };
        for (mut row, &t) in grad.rows_mut().into_iter().zip(targets) {
            let lse = log_sum_exp(row.iter().copied());
            loss += lse - row[t];
            row.mapv_inplace(|v| (v - lse).exp() * norm);
            row[t] -= norm;
        }
        let out = Array2::from_elem((1, 1), loss * norm);
        self.push(out, Op::SoftmaxNll { logits, grad })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Gradients of the scalar `output` with respect to every parameter.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(output, &mut grads);
        grads
    }

    pub fn backward_into(&self, output: Var, param_grads: &mut Gradients) {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar output");
        let mut adj: Vec<Option<Array2<f64>>> = (0..=output.0).map(|_| None).collect();
        adj[output.0] = Some(Array2::ones((1, 1)));

        fn acc(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut adj[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => param_grads.grads[id.index()] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ga = &g * self.value(*row);
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, ga);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g * *s),
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.t().to_owned()),
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut adj, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut adj, *p, g.slice(s![.., c..c + w]).to_owned());
                        c += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut r = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut adj, *p, g.slice(s![r..r + h, ..]).to_owned());
                        r += h;
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.raw_dim());
                    for ((mut out, gy), yr) in ga.rows_mut().into_iter().zip(g.rows()).zip(y.rows()) {
                        let dot = gy.dot(&yr);
                        out.assign(&((&gy - dot) * yr));
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Standardize { src, inv_std } => {
                    let y = &node.value;
                    let n = y.ncols() as f64;
                    let mut ga = Array2::zeros(y.raw_dim());
                    for (r, mut out) in ga.rows_mut().into_iter().enumerate() {
                        let gy = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gy.sum() / n;
                        let mean_gy = gy.dot(&yr) / n;
                        let inv = inv_std[r];
                        out.assign(&((&gy - mean_g - &yr * mean_gy) * inv));
                    }
                    acc(&mut adj, *src, ga);
                }
                Op::RowMix { src, rows } => {
                    let mut ga = Array2::zeros(self.value(*src).raw_dim());
                    for (r, terms) in rows.iter().enumerate() {
                        for &(i, w) in terms {
                            ga.row_mut(i).scaled_add(w, &g.row(r));
                        }
                    }
                    acc(&mut adj, *src, ga);
                }
                Op::PairAdd { a, b, pairs } => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    let mut gb = Array2::zeros(self.value(*b).raw_dim());
                    for (p, &(i, j)) in pairs.iter().enumerate() {
                        ga.row_mut(i).scaled_add(1.0, &g.row(p));
                        gb.row_mut(j).scaled_add(1.0, &g.row(p));
                    }
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::PairScore { mention, pair, pairs } => {
                    if let Some(m) = mention {
                        let mut gm = Array2::zeros(self.value(*m).raw_dim());
                        for (p, &(i, j)) in pairs.iter().enumerate() {
                            gm[[i, 0]] += g[[p, 0]];
                            gm[[j, 0]] += g[[p, 0]];
                        }
                        acc(&mut adj, *m, gm);
                    }
                    acc(&mut adj, *pair, g);
                }
                Op::AntecedentNll { scores, grad } => {
                    acc(&mut adj, *scores, grad * g[[0, 0]]);
                }
                Op::SoftmaxNll { logits, grad } => {
                    acc(&mut adj, *logits, grad * g[[0, 0]]);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).raw_dim();
                    acc(&mut adj, *a, Array2::from_elem(shape, g[[0, 0]]));
                }
            }
        }
    }
}

/// Row-wise softmax of plain values (no tape).
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut a = Array1::from(values.to_vec());
    softmax_row_in_place(a.view_mut());
    a.to_vec()
}
