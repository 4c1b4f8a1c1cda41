//! Transformer building blocks on top of the tape: linear layers, layer
//! norm, multi-head attention, and pre-norm encoder/decoder blocks.

use super::store::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters shared by both sequence models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_mult: usize,
    pub dropout_rate: f64,
    pub max_seq: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ffn_mult: 4,
            dropout_rate: 0.1,
            max_seq: 48,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_model % self.n_heads != 0 {
            return Err(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_model == 0 || self.n_layers == 0 || self.max_seq == 0 {
            return Err("zero-sized model dimension".to_string());
        }
        Ok(())
    }
}

/// Per-forward mode: training applies seeded dropout, eval is a pure
/// function of the inputs.
pub enum Mode<'r> {
    Train { rng: &'r mut ChaCha8Rng, dropout_rate: f64 },
    Eval,
}

impl Mode<'_> {
    fn dropout(&mut self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Mode::Eval => x,
            Mode::Train { rng, dropout_rate } => {
                let rate = *dropout_rate;
                if rate <= 0.0 {
                    return x;
                }
                let shape = tape.value(x).shape().to_vec();
                let n: usize = shape.iter().product();
                let keep = 1.0 - rate;
                let data: Vec<f64> = (0..n)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = tape.leaf(Tensor::new(shape, data).expect("finite mask"));
                tape.mul(x, mask)
            }
        }
    }
}

pub fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("finite init")
}

pub fn embedding_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-0.1..0.1)).collect();
    Tensor::new(vec![rows, cols], data).expect("finite init")
}

pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Linear {
        let w = store.register(&format!("{name}.w"), xavier(rng, d_in, d_out));
        let b = store.register(&format!("{name}.b"), Tensor::zeros(vec![1, d_out]));
        Linear { w, b }
    }

    /// Like `new` but with the weight zero-initialized; used for output
    /// projections so an untrained model emits a uniform distribution.
    pub fn new_zeroed(
        store: &mut ParameterStore,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Linear {
        let w = store.register(&format!("{name}.w"), Tensor::zeros(vec![d_in, d_out]));
        let b = store.register(&format!("{name}.b"), Tensor::zeros(vec![1, d_out]));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let h = tape.matmul(x, w);
        tape.add_bias(h, b)
    }
}

pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParameterStore, name: &str, d: usize) -> LayerNorm {
        let gamma = store.register(
            &format!("{name}.gamma"),
            Tensor::new(vec![1, d], vec![1.0; d]).expect("finite"),
        );
        let beta = store.register(&format!("{name}.beta"), Tensor::zeros(vec![1, d]));
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        tape.layer_norm(x, gamma, beta)
    }
}

/// Multi-head attention; queries may come from a different sequence than
/// keys/values (cross-attention).
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    n_heads: usize,
    head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &ModelConfig,
    ) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, rng, &format!("{name}.q"), cfg.d_model, cfg.d_model),
            k: Linear::new(store, rng, &format!("{name}.k"), cfg.d_model, cfg.d_model),
            v: Linear::new(store, rng, &format!("{name}.v"), cfg.d_model, cfg.d_model),
            o: Linear::new(store, rng, &format!("{name}.o"), cfg.d_model, cfg.d_model),
            n_heads: cfg.n_heads,
            head_dim: cfg.d_model / cfg.n_heads,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x_q: Var,
        x_kv: Var,
        causal: bool,
        mode: &mut Mode,
    ) -> Var {
        let q = self.q.forward(tape, store, x_q);
        let k = self.k.forward(tape, store, x_kv);
        let v = self.v.forward(tape, store, x_kv);
        let t_q = tape.value(q).rows();
        let t_kv = tape.value(k).rows();

        let mask = causal.then(|| {
            let mut data = vec![0.0; t_q * t_kv];
            for r in 0..t_q {
                for c in 0..t_kv {
                    if c > r {
                        data[r * t_kv + c] = -1e30;
                    }
                }
            }
            tape.leaf(Tensor::new(vec![t_q, t_kv], data).expect("finite mask"))
        });

        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let start = h * self.head_dim;
            let qh = tape.slice_cols(q, start, self.head_dim);
            let kh = tape.slice_cols(k, start, self.head_dim);
            let vh = tape.slice_cols(v, start, self.head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, scale);
            let scores = match mask {
                Some(m) => tape.add(scores, m),
                None => scores,
            };
            let attn = tape.softmax_rows(scores);
            let attn = mode.dropout(tape, attn);
            heads.push(tape.matmul(attn, vh));
        }
        let merged = tape.concat_cols(&heads);
        self.o.forward(tape, store, merged)
    }
}

pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &ModelConfig,
    ) -> Self {
        let hidden = cfg.d_model * cfg.ffn_mult;
        FeedForward {
            up: Linear::new(store, rng, &format!("{name}.up"), cfg.d_model, hidden),
            down: Linear::new(store, rng, &format!("{name}.down"), hidden, cfg.d_model),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var, mode: &mut Mode) -> Var {
        let h = self.up.forward(tape, store, x);
        let h = tape.relu(h);
        let h = mode.dropout(tape, h);
        self.down.forward(tape, store, h)
    }
}

/// Pre-norm encoder block: x + attn(ln(x)), then x + ffn(ln(x)).
pub struct EncoderBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &ModelConfig,
    ) -> Self {
        EncoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), cfg.d_model),
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), cfg),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), cfg.d_model),
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), cfg),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var, mode: &mut Mode) -> Var {
        let normed = self.ln1.forward(tape, store, x);
        let attn = self.attn.forward(tape, store, normed, normed, false, mode);
        let attn = mode.dropout(tape, attn);
        let x = tape.add(x, attn);
        let normed = self.ln2.forward(tape, store, x);
        let ffn = self.ffn.forward(tape, store, normed, mode);
        let ffn = mode.dropout(tape, ffn);
        tape.add(x, ffn)
    }
}

/// Pre-norm decoder block with causal self-attention and cross-attention
/// into the encoder memory.
pub struct DecoderBlock {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ffn: FeedForward,
}

impl DecoderBlock {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &ModelConfig,
    ) -> Self {
        DecoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), cfg.d_model),
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self"), cfg),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), cfg.d_model),
            cross_attn: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), cfg),
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), cfg.d_model),
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), cfg),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        memory: Var,
        mode: &mut Mode,
    ) -> Var {
        let normed = self.ln1.forward(tape, store, x);
        let attn = self.self_attn.forward(tape, store, normed, normed, true, mode);
        let attn = mode.dropout(tape, attn);
        let x = tape.add(x, attn);

        let normed = self.ln2.forward(tape, store, x);
        let cross = self.cross_attn.forward(tape, store, normed, memory, false, mode);
        let cross = mode.dropout(tape, cross);
        let x = tape.add(x, cross);

        let normed = self.ln3.forward(tape, store, x);
        let ffn = self.ffn.forward(tape, store, normed, mode);
        let ffn = mode.dropout(tape, ffn);
        tape.add(x, ffn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_config_is_valid() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { d_model: 65, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn causal_attention_ignores_future_positions() {
        let cfg = ModelConfig { d_model: 8, n_heads: 2, n_layers: 1, ..Default::default() };
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let attn = MultiHeadAttention::new(&mut store, &mut rng, "attn", &cfg);

        let seq = |suffix: [f64; 8]| {
            let mut data = vec![0.25; 16];
            data.extend_from_slice(&suffix);
            Tensor::new(vec![3, 8], data).unwrap()
        };
        let a = seq([1.0; 8]);
        let b = seq([-2.0; 8]);

        let run = |input: Tensor| {
            let mut tape = Tape::new();
            let x = tape.leaf(input);
            let out = attn.forward(&mut tape, &store, x, x, true, &mut Mode::Eval);
            let v = tape.value(out);
            (0..v.cols()).map(|c| v.at(1, c)).collect::<Vec<f64>>()
        };
        // row 1 must not see row 2
        assert_eq!(run(a), run(b));
    }

    #[test]
    fn dropout_disabled_in_eval() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap());
        let y = Mode::Eval.dropout(&mut tape, x);
        assert_eq!(tape.value(y).data(), &[1.0; 4]);
    }
}
