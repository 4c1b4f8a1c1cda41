//! The scene-understanding model (SUM): an encoder over raster cells and
//! an autoregressive caption decoder.

use super::ModelError;
use crate::langtext::{Caption, Vocab, BOS, EOS};
use crate::neuralcore::{
    checkpoint, decode, embedding_init, DecodeConfig, DecoderBlock, EncoderBlock, LayerNorm,
    Linear, Mode, ModelConfig, ParamId, ParameterStore, Tape, Tensor, Var,
};
use crate::worldsim::{Raster, View, ViewDims};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

/// Tile-code embedding rows; covers the reserved tiles and every glyph.
pub const TILE_VOCAB: usize = 64;
/// Modifier-plane rows: open, powered, agent, sitting.
const MOD_PLANES: usize = 4;

pub struct SumModel {
    pub store: ParameterStore,
    pub cfg: ModelConfig,
    pub view: View,
    pub vocab: Vocab,
    tile_table: ParamId,
    mod_table: ParamId,
    enc_pos: ParamId,
    enc_blocks: Vec<EncoderBlock>,
    ln_enc: LayerNorm,
    dec_tok: ParamId,
    dec_pos: ParamId,
    dec_blocks: Vec<DecoderBlock>,
    ln_f: LayerNorm,
    proj: Linear,
}

impl SumModel {
    pub fn new(cfg: ModelConfig, view: View, vocab: Vocab, seed: u64) -> Result<SumModel, ModelError> {
        cfg.validate().map_err(ModelError::ShapeMismatch)?;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = ViewDims::of(view);
        let n_cells = w * h;
        let d = cfg.d_model;

        let tile_table = store.register("enc.tiles", embedding_init(&mut rng, TILE_VOCAB, d));
        let mod_table = store.register("enc.mods", embedding_init(&mut rng, MOD_PLANES, d));
        let enc_pos = store.register("enc.pos", embedding_init(&mut rng, n_cells, d));
        let enc_blocks = (0..cfg.n_layers)
            .map(|i| EncoderBlock::new(&mut store, &mut rng, &format!("enc.block{i}"), &cfg))
            .collect();
        let ln_enc = LayerNorm::new(&mut store, "enc.ln", d);

        let dec_tok = store.register("dec.tokens", embedding_init(&mut rng, vocab.len(), d));
        let dec_pos = store.register("dec.pos", embedding_init(&mut rng, cfg.max_seq, d));
        let dec_blocks = (0..cfg.n_layers)
            .map(|i| DecoderBlock::new(&mut store, &mut rng, &format!("dec.block{i}"), &cfg))
            .collect();
        let ln_f = LayerNorm::new(&mut store, "dec.ln", d);
        let proj = Linear::new_zeroed(&mut store, "dec.proj", d, vocab.len());

        Ok(SumModel {
            store,
            cfg,
            view,
            vocab,
            tile_table,
            mod_table,
            enc_pos,
            enc_blocks,
            ln_enc,
            dec_tok,
            dec_pos,
            dec_blocks,
            ln_f,
            proj,
        })
    }

    fn check_raster(&self, raster: &Raster) -> Result<(), ModelError> {
        let (w, h) = ViewDims::of(self.view);
        if raster.view != self.view || raster.width != w || raster.height != h {
            return Err(ModelError::ShapeMismatch(format!(
                "raster is {:?} {}x{}, model expects {:?} {}x{}",
                raster.view, raster.width, raster.height, self.view, w, h
            )));
        }
        Ok(())
    }

    /// Embeds a raster and runs the encoder; the result is the cross
    /// attention memory, one token per cell.
    pub fn encode(&self, tape: &mut Tape, raster: &Raster, mode: &mut Mode) -> Result<Var, ModelError> {
        self.check_raster(raster)?;
        let n = raster.cells.len();

        let ids: Vec<usize> = raster.cells.iter().map(|&c| (c as usize).min(TILE_VOCAB - 1)).collect();
        let tiles = tape.param(&self.store, self.tile_table);
        let mut x = tape.embed(tiles, &ids);

        let pos_ids: Vec<usize> = (0..n).collect();
        let pos_table = tape.param(&self.store, self.enc_pos);
        let pos = tape.embed(pos_table, &pos_ids);
        x = tape.add(x, pos);

        // modifier bits enter as a multi-hot matmul against their table
        let mut mod_hot = vec![0.0; n * MOD_PLANES];
        for (i, &m) in raster.modifiers.iter().enumerate() {
            for plane in 0..MOD_PLANES {
                if m & (1 << plane) != 0 {
                    mod_hot[i * MOD_PLANES + plane] = 1.0;
                }
            }
        }
        let mod_hot = tape.leaf(Tensor::new(vec![n, MOD_PLANES], mod_hot).expect("finite"));
        let mods = tape.param(&self.store, self.mod_table);
        let mod_emb = tape.matmul(mod_hot, mods);
        x = tape.add(x, mod_emb);

        // held glyphs contribute their tile embedding at the agent cell
        if !raster.held.is_empty() {
            if let Some(agent_idx) = raster.modifiers.iter().position(|&m| m & 4 != 0) {
                let mut held_hot = vec![0.0; n * TILE_VOCAB];
                for &glyph in &raster.held {
                    held_hot[agent_idx * TILE_VOCAB + (glyph as usize).min(TILE_VOCAB - 1)] += 1.0;
                }
                let held_hot = tape.leaf(Tensor::new(vec![n, TILE_VOCAB], held_hot).expect("finite"));
                let held_emb = tape.matmul(held_hot, tiles);
                x = tape.add(x, held_emb);
            }
        }

        for block in &self.enc_blocks {
            x = block.forward(tape, &self.store, x, mode);
        }
        Ok(self.ln_enc.forward(tape, &self.store, x))
    }

    /// Decoder hidden states (after the final layer norm) for a caption
    /// prefix; rows align with prefix positions.
    pub fn decode_hidden(
        &self,
        tape: &mut Tape,
        memory: Var,
        prefix: &[u32],
        mode: &mut Mode,
    ) -> Result<Var, ModelError> {
        if prefix.is_empty() || prefix[0] != BOS {
            return Err(ModelError::ShapeMismatch("target prefix must start with BOS".into()));
        }
        if prefix.len() > self.cfg.max_seq {
            return Err(ModelError::ShapeMismatch(format!(
                "prefix length {} exceeds max_seq {}",
                prefix.len(),
                self.cfg.max_seq
            )));
        }
        let ids: Vec<usize> = prefix.iter().map(|&t| (t as usize).min(self.vocab.len() - 1)).collect();
        let tok_table = tape.param(&self.store, self.dec_tok);
        let mut x = tape.embed(tok_table, &ids);
        let pos_ids: Vec<usize> = (0..ids.len()).collect();
        let pos_table = tape.param(&self.store, self.dec_pos);
        let pos = tape.embed(pos_table, &pos_ids);
        x = tape.add(x, pos);

        for block in &self.dec_blocks {
            x = block.forward(tape, &self.store, x, memory, mode);
        }
        Ok(self.ln_f.forward(tape, &self.store, x))
    }

    /// Per-position log-distribution over the caption vocabulary for a
    /// teacher-forced prefix: row i conditions on prefix[..=i] and the
    /// raster.
    pub fn forward_logprobs(
        &self,
        tape: &mut Tape,
        raster: &Raster,
        prefix: &[u32],
        mode: &mut Mode,
    ) -> Result<Var, ModelError> {
        let memory = self.encode(tape, raster, mode)?;
        let hidden = self.decode_hidden(tape, memory, prefix, mode)?;
        let logits = self.proj.forward(tape, &self.store, hidden);
        Ok(tape.log_softmax_rows(logits))
    }

    /// Decodes a caption for the raster. Deterministic for Greedy/Beam;
    /// Sample follows the config seed.
    pub fn sum_caption(
        &self,
        raster: &Raster,
        cfg: &DecodeConfig,
    ) -> Result<(Caption, f64), ModelError> {
        let mut tape = Tape::new();
        let memory_var = self.encode(&mut tape, raster, &mut Mode::Eval)?;
        let memory = tape.value(memory_var).clone();

        let max_len = cfg.max_len.min(self.cfg.max_seq.saturating_sub(1));
        let cfg = DecodeConfig { max_len, ..*cfg };
        let step_fn = |prefix: &[u32]| -> Vec<f64> {
            let mut tape = Tape::new();
            let memory = tape.leaf(memory.clone());
            let hidden = self
                .decode_hidden(&mut tape, memory, prefix, &mut Mode::Eval)
                .expect("prefix stays within max_seq");
            let logits = self.proj.forward(&mut tape, &self.store, hidden);
            let lp = tape.log_softmax_rows(logits);
            let t = tape.value(lp);
            let last = t.rows() - 1;
            (0..t.cols()).map(|c| t.at(last, c)).collect()
        };
        let mut results = decode(step_fn, &cfg, BOS, EOS);
        let best = results.remove(0);
        Ok((Caption::from_decoded(best.tokens), best.logprob))
    }

    /// Decoder hidden states for an already-decoded caption, used by the
    /// hidden-coupling mode of the action model.
    pub fn caption_hidden(&self, raster: &Raster, caption: &Caption) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, raster, &mut Mode::Eval)?;
        let prefix: Vec<u32> = caption.tokens[..caption.tokens.len() - 1].to_vec();
        let hidden = self.decode_hidden(&mut tape, memory, &prefix, &mut Mode::Eval)?;
        Ok(tape.value(hidden).clone())
    }

    pub fn save(&self, path: &Path) -> Result<(), checkpoint::CheckpointError> {
        let mut extra = BTreeMap::new();
        extra.insert("caption_vocab_hash".to_string(), self.vocab.content_hash());
        extra.insert("view".to_string(), self.view.as_str().to_string());
        let meta = checkpoint::CheckpointMeta {
            kind: "sum".to_string(),
            config: self.cfg,
            extra,
        };
        checkpoint::save(path, &meta, &self.store)
    }

    /// Loads a checkpoint, verifying the vocabulary hash and view.
    pub fn load(path: &Path, vocab: Vocab) -> Result<SumModel, checkpoint::CheckpointError> {
        let (meta, params) = checkpoint::load(path)?;
        if meta.kind != "sum" {
            return Err(checkpoint::CheckpointError::Corrupt(format!(
                "expected a sum checkpoint, found `{}`",
                meta.kind
            )));
        }
        meta.verify_hash("caption_vocab_hash", &vocab.content_hash())?;
        let view: View = meta
            .extra
            .get("view")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| checkpoint::CheckpointError::Corrupt("missing view".into()))?;
        let mut model = SumModel::new(meta.config, view, vocab, 0)
            .map_err(|e| checkpoint::CheckpointError::Corrupt(e.to_string()))?;
        checkpoint::restore_into(&mut model.store, params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langtext::PAD;
    use crate::neuralcore::DecodeMode;
    use crate::worldsim::{gen_layout, render, AgentState};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { d_model: 16, n_heads: 2, n_layers: 1, ffn_mult: 2, dropout_rate: 0.0, max_seq: 24 }
    }

    fn fixture() -> (SumModel, Raster) {
        let vocab = Vocab::from_corpus(["the agent stands in the kitchen near the closed fridge"]);
        let model = SumModel::new(tiny_cfg(), View::Auto, vocab, 7).unwrap();
        let world = gen_layout(1, 42).unwrap();
        let raster = render(&world, &AgentState::spawn(), View::Auto);
        (model, raster)
    }

    #[test]
    fn logprob_rows_normalize() {
        let (model, raster) = fixture();
        let mut tape = Tape::new();
        let lp = model
            .forward_logprobs(&mut tape, &raster, &[BOS, 6, 7], &mut Mode::Eval)
            .unwrap();
        let t = tape.value(lp);
        for r in 0..t.rows() {
            let sum: f64 = (0..t.cols()).map(|c| t.at(r, c).exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn zero_projection_is_uniform() {
        let (model, raster) = fixture();
        let mut tape = Tape::new();
        let lp = model
            .forward_logprobs(&mut tape, &raster, &[BOS], &mut Mode::Eval)
            .unwrap();
        let t = tape.value(lp);
        let expected = -(model.vocab.len() as f64).ln();
        for c in 0..t.cols() {
            assert!((t.at(0, c) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn untrained_greedy_repeats_lowest_id_token() {
        let (model, raster) = fixture();
        let cfg = DecodeConfig { mode: DecodeMode::Greedy, max_len: 5, seed: 0 };
        let (caption, _) = model.sum_caption(&raster, &cfg).unwrap();
        // uniform distribution, ties to lowest id = PAD, cut off at max_len
        assert!(caption.tokens[1..caption.tokens.len() - 1].iter().all(|&t| t == PAD));
    }

    #[test]
    fn future_tokens_do_not_affect_earlier_positions() {
        let (model, raster) = fixture();
        let run = |prefix: &[u32]| {
            let mut tape = Tape::new();
            let lp = model
                .forward_logprobs(&mut tape, &raster, prefix, &mut Mode::Eval)
                .unwrap();
            let t = tape.value(lp);
            (0..t.cols()).map(|c| t.at(1, c)).collect::<Vec<f64>>()
        };
        assert_eq!(run(&[BOS, 6, 7, 8]), run(&[BOS, 6, 8, 7]));
    }

    #[test]
    fn wrong_view_is_shape_mismatch() {
        let (model, _) = fixture();
        let world = gen_layout(1, 42).unwrap();
        let raster = render(&world, &AgentState::spawn(), View::FirstPerson);
        assert!(matches!(
            model.sum_caption(&raster, &DecodeConfig::default()),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn caption_decode_is_deterministic() {
        let (model, raster) = fixture();
        let cfg = DecodeConfig { mode: DecodeMode::Greedy, max_len: 8, seed: 0 };
        assert_eq!(
            model.sum_caption(&raster, &cfg).unwrap().0,
            model.sum_caption(&raster, &cfg).unwrap().0
        );
    }

    #[test]
    fn checkpoint_round_trip() {
        let (model, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sum.ckpt");
        model.save(&path).unwrap();
        let loaded = SumModel::load(&path, model.vocab.clone()).unwrap();
        assert_eq!(loaded.store.content_hash(), model.store.content_hash());

        let other_vocab = Vocab::from_corpus(["different words entirely"]);
        assert!(SumModel::load(&path, other_vocab).is_err());
    }
}
