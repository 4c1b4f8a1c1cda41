//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Forward ops compute eagerly and record just enough to run the chain
//! rule backwards. One tape covers one forward/backward pair; calling
//! [`Tape::backward`] twice without a fresh forward is a [`GraphReuse`]
//! error.

use super::store::{ParamId, ParameterStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("backward called twice on the same tape")]
pub struct GraphReuse;

enum Op {
    Leaf { param: Option<usize> },
    Add { a: usize, b: usize },
    AddBias { a: usize, bias: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Matmul { a: usize, b: usize },
    MatmulNT { a: usize, b: usize },
    Relu { a: usize },
    SoftmaxRows { a: usize },
    LogSoftmaxRows { a: usize },
    LayerNorm { a: usize, gamma: usize, beta: usize },
    Embed { table: usize, ids: Vec<usize> },
    SliceCols { a: usize, start: usize, len: usize },
    ConcatCols { parts: Vec<usize> },
    ConcatRows { parts: Vec<usize> },
    SumAll { a: usize },
    GatherNll { a: usize, picks: Vec<(usize, usize)>, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Per-row (mean, inv_std) for layer norm.
    aux: Vec<f64>,
}

/// The recording tape. All shapes are rank-2; scalars are 1x1.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new(), consumed: false }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.push_aux(value, op, Vec::new())
    }

    fn push_aux(&mut self, value: Tensor, op: Op, aux: Vec<f64>) -> Var {
        assert!(value.all_finite(), "non-finite value produced by a tape op");
        self.nodes.push(Node { value, op, aux });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; gradients stop here.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// A trainable input; backward accumulates into the store's gradient.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Leaf { param: Some(id.0) })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("finite add");
        self.push(t, Op::Add { a: a.0, b: b.0 })
    }

    /// Adds a 1 x n bias row to every row of a.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!(tb.rows(), 1, "bias must be a row vector");
        assert_eq!(ta.cols(), tb.cols(), "bias width mismatch");
        let n = ta.cols();
        let mut data = ta.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % n];
        }
        let t = Tensor::new(ta.shape().to_vec(), data).expect("finite add_bias");
        self.push(t, Op::AddBias { a: a.0, bias: bias.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("finite mul");
        self.push(t, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("finite scale");
        self.push(t, Op::Scale { a: a.0, c })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = matmul(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(t, Op::Matmul { a: a.0, b: b.0 })
    }

    /// a * b^T without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let t = matmul_nt(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(t, Op::MatmulNT { a: a.0, b: b.0 })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x.max(0.0)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("finite relu");
        self.push(t, Op::Relu { a: a.0 })
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = softmax(&self.nodes[a.0].value);
        self.push(t, Op::SoftmaxRows { a: a.0 })
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &ta.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for c in 0..cols {
                data[r * cols + c] = row[c] - log_z;
            }
        }
        let t = Tensor::new(vec![rows, cols], data).expect("finite log_softmax");
        self.push(t, Op::LogSoftmaxRows { a: a.0 })
    }

    /// Row-wise layer normalization with learned gain and bias
    /// (gamma, beta are 1 x n).
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let ta = &self.nodes[a.0].value;
        let tg = &self.nodes[gamma.0].value;
        let tb = &self.nodes[beta.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        assert_eq!(tg.cols(), cols);
        assert_eq!(tb.cols(), cols);
        let mut data = vec![0.0; rows * cols];
        let mut aux = Vec::with_capacity(rows * 2);
        for r in 0..rows {
            let row = &ta.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv_std = 1.0 / (var + EPS).sqrt();
            for c in 0..cols {
                let xhat = (row[c] - mean) * inv_std;
                data[r * cols + c] = tg.data()[c] * xhat + tb.data()[c];
            }
            aux.push(mean);
            aux.push(inv_std);
        }
        let t = Tensor::new(vec![rows, cols], data).expect("finite layer_norm");
        self.push_aux(t, Op::LayerNorm { a: a.0, gamma: gamma.0, beta: beta.0 }, aux)
    }

    /// Gathers rows of an embedding table: output row i is table[ids[i]].
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let tt = &self.nodes[table.0].value;
        let d = tt.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < tt.rows(), "embedding id {id} out of range");
            data.extend_from_slice(&tt.data()[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(vec![ids.len(), d], data).expect("finite embed");
        self.push(t, Op::Embed { table: table.0, ids: ids.to_vec() })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        assert!(start + len <= cols);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&ta.data()[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data).expect("finite slice");
        self.push(t, Op::SliceCols { a: a.0, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let tp = &self.nodes[p.0].value;
                assert_eq!(tp.rows(), rows);
                let c = tp.cols();
                data.extend_from_slice(&tp.data()[r * c..(r + 1) * c]);
            }
        }
        let t = Tensor::new(vec![rows, total], data).expect("finite concat");
        self.push(t, Op::ConcatCols { parts: parts.iter().map(|p| p.0).collect() })
    }

    /// Stacks sequences vertically; all parts must share a column count.
    /// Parts with zero rows are allowed and contribute nothing.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols();
        let rows: usize = parts.iter().map(|p| self.nodes[p.0].value.rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            let tp = &self.nodes[p.0].value;
            if tp.len() > 0 {
                assert_eq!(tp.cols(), cols, "concat_rows width mismatch");
            }
            data.extend_from_slice(tp.data());
        }
        let t = Tensor::new(vec![rows, cols], data).expect("finite concat_rows");
        self.push(t, Op::ConcatRows { parts: parts.iter().map(|p| p.0).collect() })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll { a: a.0 })
    }

    /// Negative weighted sum of picked entries: -sum_k w_k * a[r_k, c_k].
    /// With unit weights over target positions of a log-prob matrix this is
    /// exactly the sequence negative log-likelihood.
    pub fn gather_nll(&mut self, a: Var, picks: &[(usize, usize)], weights: &[f64]) -> Var {
        assert_eq!(picks.len(), weights.len());
        let ta = &self.nodes[a.0].value;
        let mut s = 0.0;
        for (&(r, c), &w) in picks.iter().zip(weights) {
            s -= w * ta.at(r, c);
        }
        self.push(
            Tensor::scalar(s),
            Op::GatherNll { a: a.0, picks: picks.to_vec(), weights: weights.to_vec() },
        )
    }

    /// Runs the chain rule from a scalar loss, accumulating parameter
    /// gradients into the store.
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore) -> Result<(), GraphReuse> {
        if self.consumed {
            return Err(GraphReuse);
        }
        self.consumed = true;
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        store.accumulate_grad(*pid, &g);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::AddBias { a, bias } => {
                    let (a, bias) = (*a, *bias);
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for (j, v) in g.data().iter().enumerate() {
                        db[j % n] += v;
                    }
                    accumulate(&mut grads, bias, Tensor::new(vec![1, n], db).expect("finite"));
                    accumulate(&mut grads, a, g);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = hadamard(&g, &self.nodes[b].value);
                    let db = hadamard(&g, &self.nodes[a].value);
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::Scale { a, c } => {
                    let (a, c) = (*a, *c);
                    let data = g.data().iter().map(|x| x * c).collect();
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(g.shape().to_vec(), data).expect("finite"),
                    );
                }
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = matmul_nt(&g, &self.nodes[b].value);
                    let db = matmul_tn(&self.nodes[a].value, &g);
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::MatmulNT { a, b } => {
                    let (a, b) = (*a, *b);
                    // C = A B^T: dA = dC B ; dB = dC^T A
                    let da = matmul(&g, &self.nodes[b].value);
                    let db = matmul_tn(&g, &self.nodes[a].value);
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let mask = &self.nodes[a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(mask.data())
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(g.shape().to_vec(), data).expect("finite"),
                    );
                }
                Op::SoftmaxRows { a } => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut data = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for c in 0..cols {
                            data[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(vec![rows, cols], data).expect("finite"),
                    );
                }
                Op::LogSoftmaxRows { a } => {
                    let a = *a;
                    let y = &self.nodes[i].value; // log-probs
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut data = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let gsum: f64 = gr.iter().sum();
                        for c in 0..cols {
                            data[r * cols + c] = gr[c] - yr[c].exp() * gsum;
                        }
                    }
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(vec![rows, cols], data).expect("finite"),
                    );
                }
                Op::LayerNorm { a, gamma, beta } => {
                    let (a, gamma, beta) = (*a, *gamma, *beta);
                    let x = &self.nodes[a].value;
                    let tg = &self.nodes[gamma].value;
                    let aux = &self.nodes[i].aux;
                    let (rows, cols) = (x.rows(), x.cols());
                    let n = cols as f64;
                    let mut dx = vec![0.0; rows * cols];
                    let mut dgamma = vec![0.0; cols];
                    let mut dbeta = vec![0.0; cols];
                    for r in 0..rows {
                        let (mean, inv_std) = (aux[2 * r], aux[2 * r + 1]);
                        let xr = &x.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let mut sum_ggamma = 0.0;
                        let mut sum_ggamma_xhat = 0.0;
                        for c in 0..cols {
                            let xhat = (xr[c] - mean) * inv_std;
                            let ggamma = gr[c] * tg.data()[c];
                            sum_ggamma += ggamma;
                            sum_ggamma_xhat += ggamma * xhat;
                            dgamma[c] += gr[c] * xhat;
                            dbeta[c] += gr[c];
                        }
                        for c in 0..cols {
                            let xhat = (xr[c] - mean) * inv_std;
                            let ggamma = gr[c] * tg.data()[c];
                            dx[r * cols + c] = inv_std
                                * (ggamma - sum_ggamma / n - xhat * sum_ggamma_xhat / n);
                        }
                    }
                    accumulate(&mut grads, a, Tensor::new(vec![rows, cols], dx).expect("finite"));
                    accumulate(
                        &mut grads,
                        gamma,
                        Tensor::new(vec![1, cols], dgamma).expect("finite"),
                    );
                    accumulate(
                        &mut grads,
                        beta,
                        Tensor::new(vec![1, cols], dbeta).expect("finite"),
                    );
                }
                Op::Embed { table, ids } => {
                    let table = *table;
                    let tt = &self.nodes[table].value;
                    let d = tt.cols();
                    let mut dt = vec![0.0; tt.len()];
                    for (row, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            dt[id * d + c] += g.data()[row * d + c];
                        }
                    }
                    accumulate(
                        &mut grads,
                        table,
                        Tensor::new(tt.shape().to_vec(), dt).expect("finite"),
                    );
                }
                Op::SliceCols { a, start, len } => {
                    let (a, start, len) = (*a, *start, *len);
                    let ta = &self.nodes[a].value;
                    let (rows, cols) = (ta.rows(), ta.cols());
                    let mut da = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..len {
                            da[r * cols + start + c] = g.data()[r * len + c];
                        }
                    }
                    accumulate(&mut grads, a, Tensor::new(vec![rows, cols], da).expect("finite"));
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let rows = g.rows();
                    let mut offset = 0;
                    for p in parts {
                        let c = self.nodes[p].value.cols();
                        let mut dp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            dp.extend_from_slice(
                                &g.data()[r * g.cols() + offset..r * g.cols() + offset + c],
                            );
                        }
                        accumulate(&mut grads, p, Tensor::new(vec![rows, c], dp).expect("finite"));
                        offset += c;
                    }
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let cols = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let r = self.nodes[p].value.rows();
                        if r == 0 {
                            continue;
                        }
                        let dp = g.data()[offset * cols..(offset + r) * cols].to_vec();
                        accumulate(&mut grads, p, Tensor::new(vec![r, cols], dp).expect("finite"));
                        offset += r;
                    }
                }
                Op::SumAll { a } => {
                    let a = *a;
                    let ta = &self.nodes[a].value;
                    let gv = g.item();
                    let data = vec![gv; ta.len()];
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(ta.shape().to_vec(), data).expect("finite"),
                    );
                }
                Op::GatherNll { a, picks, weights } => {
                    let a = *a;
                    let picks = picks.clone();
                    let weights = weights.clone();
                    let ta = &self.nodes[a].value;
                    let cols = ta.cols();
                    let gv = g.item();
                    let mut da = vec![0.0; ta.len()];
                    for (&(r, c), &w) in picks.iter().zip(&weights) {
                        da[r * cols + c] -= w * gv;
                    }
                    accumulate(
                        &mut grads,
                        a,
                        Tensor::new(ta.shape().to_vec(), da).expect("finite"),
                    );
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], index: usize, delta: Tensor) {
    match &mut grads[index] {
        Some(g) => {
            debug_assert_eq!(g.shape(), delta.shape());
            for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                *gv += dv;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("finite hadamard")
}

/// Numerically stable row softmax.
pub fn softmax(t: &Tensor) -> Tensor {
    let (rows, cols) = (t.rows(), t.cols());
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &t.data()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for c in 0..cols {
            let e = (row[c] - max).exp();
            data[r * cols + c] = e;
            z += e;
        }
        for c in 0..cols {
            data[r * cols + c] /= z;
        }
    }
    Tensor::new(vec![rows, cols], data).expect("finite softmax")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_param_has_unit_gradient() {
        let mut store = ParameterStore::new();
        let w = store.register("w", Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum_all(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[1.0; 6]);
    }

    #[test]
    fn zero_scale_gives_zero_gradient() {
        let mut store = ParameterStore::new();
        let w = store.register("w", Tensor::new(vec![1, 3], vec![1., 2., 3.]).unwrap());
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let z = tape.scale(wv, 0.0);
        let loss = tape.sum_all(z);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[0.0; 3]);
    }

    #[test]
    fn graph_reuse_rejected() {
        let mut store = ParameterStore::new();
        let w = store.register("w", Tensor::scalar(1.0));
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum_all(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(tape.backward(loss, &mut store), Err(GraphReuse));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 4], vec![0.1, -3.0, 2.5, 0.0, 9.0, 9.0, 9.0, 9.0]).unwrap());
        let s = tape.softmax_rows(x);
        for r in 0..2 {
            let sum: f64 = (0..4).map(|c| tape.value(s).at(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    /// Central finite differences against autodiff for a composite graph
    /// touching every op kind.
    #[test]
    fn finite_difference_agreement_on_composite_graph() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);

        let build_store = || {
            let mut store = ParameterStore::new();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            let mut t = |shape: Vec<usize>| {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
                Tensor::new(shape, data).unwrap()
            };
            let names = ["table", "w1", "b1", "gamma", "beta", "w2"];
            let shapes: Vec<Vec<usize>> = vec![
                vec![5, 4],
                vec![4, 6],
                vec![1, 6],
                vec![1, 6],
                vec![1, 6],
                vec![3, 6],
            ];
            for (name, shape) in names.iter().zip(shapes) {
                store.register(name, t(shape));
            }
            store
        };

        let loss_of = |store: &ParameterStore, with_grads: Option<&mut ParameterStore>| -> f64 {
            let mut tape = Tape::new();
            let ids = [0usize, 2, 4, 1];
            let table = tape.param(store, store.id_of("table").unwrap());
            let w1 = tape.param(store, store.id_of("w1").unwrap());
            let b1 = tape.param(store, store.id_of("b1").unwrap());
            let gamma = tape.param(store, store.id_of("gamma").unwrap());
            let beta = tape.param(store, store.id_of("beta").unwrap());
            let w2 = tape.param(store, store.id_of("w2").unwrap());

            let x = tape.embed(table, &ids); // 4 x 4
            let h = tape.matmul(x, w1); // 4 x 6
            let h = tape.add_bias(h, b1);
            let h = tape.relu(h);
            let h = tape.layer_norm(h, gamma, beta);
            let s = tape.matmul_nt(h, w2); // 4 x 3
            let lp = tape.log_softmax_rows(s);
            let left = tape.slice_cols(lp, 0, 2);
            let right = tape.slice_cols(lp, 2, 1);
            let joined = tape.concat_cols(&[left, right]);
            let sm = tape.softmax_rows(joined);
            let prod = tape.mul(sm, joined);
            let scaled = tape.scale(prod, 0.7);
            let partial = tape.sum_all(scaled);
            let nll = tape.gather_nll(lp, &[(0, 1), (1, 2), (2, 0)], &[1.0, 1.0, 0.5]);
            let loss = tape.add(partial, nll);
            let value = tape.value(loss).item();
            if let Some(store_mut) = with_grads {
                tape.backward(loss, store_mut).unwrap();
            }
            value
        };

        let mut store = build_store();
        store.zero_grads();
        let mut grad_store = build_store();
        loss_of(&store, Some(&mut grad_store));

        let h = 1e-5;
        for pid in store.ids() {
            let len = store.value(pid).len();
            for _ in 0..6 {
                let idx = rng.random_range(0..len);
                store.perturb(pid, idx, h);
                let plus = loss_of(&store, None);
                store.perturb(pid, idx, -2.0 * h);
                let minus = loss_of(&store, None);
                store.perturb(pid, idx, h);
                let fd = (plus - minus) / (2.0 * h);
                let ad = grad_store.grad(pid).data()[idx];
                let denom = fd.abs().max(ad.abs()).max(1e-8);
                assert!(
                    (fd - ad).abs() / denom < 1e-4,
                    "param {} idx {}: fd {} vs ad {}",
                    store.name(pid),
                    idx,
                    fd,
                    ad
                );
            }
        }
    }
}
