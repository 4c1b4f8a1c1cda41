//! The action-prediction model (APM): encodes the caption (optionally
//! prefixed with task tokens) together with the previous action, and
//! decodes one action step in program-token form.

use super::ModelError;
use crate::actiondsl::{self, ActionStep, Verb};
use crate::langtext::{Caption, Vocab, BOS, EOS, SEP};
use crate::neuralcore::{
    checkpoint, decode, embedding_init, xavier, DecodeConfig, DecoderBlock, EncoderBlock,
    LayerNorm, Linear, Mode, ModelConfig, ParamId, ParameterStore, Tape, Tensor, Var,
};
use crate::worldsim::CLASSES;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// How the captioner's output reaches the action model: as decoded tokens
/// re-embedded by the APM, or as the captioner's hidden states through a
/// learned adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Text,
    Hidden,
}

/// The closed program-token vocabulary: verbs, object names, ids up to
/// `max_id`, and the unknown-id token.
pub fn program_vocab(max_id: u32) -> Vocab {
    let mut tokens: Vec<String> = Verb::ALL.iter().map(|v| actiondsl::verb_token(*v)).collect();
    tokens.extend(CLASSES.iter().map(|c| actiondsl::name_token(c.name)));
    tokens.extend((1..=max_id).map(|id| actiondsl::id_token(id, max_id)));
    tokens.push(actiondsl::UNK_ID_TOKEN.to_string());
    Vocab::from_token_list(tokens)
}

/// Encoder vocabulary: the caption vocabulary extended with the program
/// tokens. Caption token ids stay unchanged.
pub fn apm_input_vocab(caption_vocab: &Vocab, prog_vocab: &Vocab) -> Vocab {
    let mut tokens: Vec<String> = caption_vocab.payload_tokens().to_vec();
    tokens.extend(prog_vocab.payload_tokens().iter().cloned());
    Vocab::from_token_list(tokens)
}

/// One decoded action attempt. Malformed output is data, not an error;
/// `Stop` is the immediate end-of-sequence ("EOS-action").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecodedAction {
    Step(ActionStep),
    Malformed { tokens: Vec<String> },
    Stop,
}

/// Everything the APM conditions on for one prediction.
pub struct ApmInput<'a> {
    /// Task words, prepended when the model was built with task tokens.
    pub task_text: Option<&'a str>,
    pub caption: &'a Caption,
    pub prev_action: Option<&'a ActionStep>,
    /// Captioner hidden states for the caption, required iff the model
    /// couples on hidden states.
    pub caption_hidden: Option<&'a Tensor>,
}

pub struct ApmModel {
    pub store: ParameterStore,
    pub cfg: ModelConfig,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
    pub use_task_tokens: bool,
    pub coupling: Coupling,
    pub max_id: u32,
    enc_tok: ParamId,
    enc_pos: ParamId,
    hidden_adapter: ParamId,
    enc_blocks: Vec<EncoderBlock>,
    ln_enc: LayerNorm,
    dec_tok: ParamId,
    dec_pos: ParamId,
    dec_blocks: Vec<DecoderBlock>,
    ln_f: LayerNorm,
    proj: Linear,
}

impl ApmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cfg: ModelConfig,
        caption_vocab: &Vocab,
        max_id: u32,
        use_task_tokens: bool,
        coupling: Coupling,
        seed: u64,
    ) -> Result<ApmModel, ModelError> {
        cfg.validate().map_err(ModelError::ShapeMismatch)?;
        let output_vocab = program_vocab(max_id);
        let input_vocab = apm_input_vocab(caption_vocab, &output_vocab);
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;

        let enc_tok = store.register("enc.tokens", embedding_init(&mut rng, input_vocab.len(), d));
        let enc_pos = store.register("enc.pos", embedding_init(&mut rng, cfg.max_seq, d));
        let hidden_adapter = store.register("enc.adapter", xavier(&mut rng, d, d));
        let enc_blocks = (0..cfg.n_layers)
            .map(|i| EncoderBlock::new(&mut store, &mut rng, &format!("enc.block{i}"), &cfg))
            .collect();
        let ln_enc = LayerNorm::new(&mut store, "enc.ln", d);

        let dec_tok = store.register("dec.tokens", embedding_init(&mut rng, output_vocab.len(), d));
        let dec_pos = store.register("dec.pos", embedding_init(&mut rng, cfg.max_seq, d));
        let dec_blocks = (0..cfg.n_layers)
            .map(|i| DecoderBlock::new(&mut store, &mut rng, &format!("dec.block{i}"), &cfg))
            .collect();
        let ln_f = LayerNorm::new(&mut store, "dec.ln", d);
        let proj = Linear::new_zeroed(&mut store, "dec.proj", d, output_vocab.len());

        Ok(ApmModel {
            store,
            cfg,
            input_vocab,
            output_vocab,
            use_task_tokens,
            coupling,
            max_id,
            enc_tok,
            enc_pos,
            hidden_adapter,
            enc_blocks,
            ln_enc,
            dec_tok,
            dec_pos,
            dec_blocks,
            ln_f,
            proj,
        })
    }

    /// Target token ids for a step: `[BOS] verb name id ... [EOS]` in the
    /// program vocabulary.
    pub fn step_target_ids(&self, step: &ActionStep) -> Vec<u32> {
        let mut ids = vec![BOS];
        for tok in actiondsl::step_to_tokens(step, self.max_id) {
            ids.push(self.output_vocab.id_or_unk(&tok));
        }
        ids.push(EOS);
        ids
    }

    fn prev_action_ids(&self, prev: Option<&ActionStep>) -> Vec<usize> {
        match prev {
            None => Vec::new(),
            Some(step) => actiondsl::step_to_tokens(step, self.max_id)
                .iter()
                .map(|t| self.input_vocab.id_or_unk(t) as usize)
                .collect(),
        }
    }

    fn task_ids(&self, task_text: Option<&str>) -> Vec<usize> {
        match (self.use_task_tokens, task_text) {
            (true, Some(text)) => text
                .split_whitespace()
                .map(|w| self.input_vocab.id_or_unk(&w.to_lowercase()) as usize)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Builds the encoder memory over `[task, SEP, caption, SEP, prev]`.
    pub fn encode(
        &self,
        tape: &mut Tape,
        input: &ApmInput,
        mode: &mut Mode,
    ) -> Result<Var, ModelError> {
        if self.coupling == Coupling::Hidden && input.caption_hidden.is_none() {
            return Err(ModelError::ShapeMismatch(
                "hidden coupling needs caption hidden states".into(),
            ));
        }
        let task_ids = self.task_ids(input.task_text);
        let prev_ids = self.prev_action_ids(input.prev_action);
        let caption_ids: Vec<usize> = input
            .caption
            .interior()
            .iter()
            .map(|&t| (t as usize).min(self.input_vocab.len() - 1))
            .collect();

        let caption_rows = match self.coupling {
            Coupling::Text => caption_ids.len(),
            Coupling::Hidden => input.caption_hidden.unwrap().rows(),
        };
        let total = task_ids.len() + 1 + caption_rows + 1 + prev_ids.len();
        if total > self.cfg.max_seq {
            return Err(ModelError::ShapeMismatch(format!(
                "encoder input length {total} exceeds max_seq {}",
                self.cfg.max_seq
            )));
        }

        let tok_table = tape.param(&self.store, self.enc_tok);
        let sep = vec![SEP as usize];

        let head_ids: Vec<usize> = task_ids.iter().copied().chain(sep.iter().copied()).collect();
        let head = tape.embed(tok_table, &head_ids);

        let caption_part = match self.coupling {
            Coupling::Text => tape.embed(tok_table, &caption_ids),
            Coupling::Hidden => {
                let hidden = tape.leaf(input.caption_hidden.unwrap().clone());
                let adapter = tape.param(&self.store, self.hidden_adapter);
                tape.matmul(hidden, adapter)
            }
        };

        let tail_ids: Vec<usize> = sep.iter().copied().chain(prev_ids.iter().copied()).collect();
        let tail = tape.embed(tok_table, &tail_ids);

        let mut x = tape.concat_rows(&[head, caption_part, tail]);
        let pos_ids: Vec<usize> = (0..total).collect();
        let pos_table = tape.param(&self.store, self.enc_pos);
        let pos = tape.embed(pos_table, &pos_ids);
        x = tape.add(x, pos);

        for block in &self.enc_blocks {
            x = block.forward(tape, &self.store, x, mode);
        }
        Ok(self.ln_enc.forward(tape, &self.store, x))
    }

    fn decode_hidden(
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
        let ids: Vec<usize> =
            prefix.iter().map(|&t| (t as usize).min(self.output_vocab.len() - 1)).collect();
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

    /// Log-distributions for a prefix against a precomputed encoder
    /// memory; decode loops call this once per generated token.
    pub fn decode_step_logprobs(
        &self,
        tape: &mut Tape,
        memory: Var,
        prefix: &[u32],
    ) -> Result<Var, ModelError> {
        let hidden = self.decode_hidden(tape, memory, prefix, &mut Mode::Eval)?;
        let logits = self.proj.forward(tape, &self.store, hidden);
        Ok(tape.log_softmax_rows(logits))
    }

    /// Per-position log-distribution over program tokens for a
    /// teacher-forced prefix.
    pub fn forward_logprobs(
        &self,
        tape: &mut Tape,
        input: &ApmInput,
        prefix: &[u32],
        mode: &mut Mode,
    ) -> Result<Var, ModelError> {
        let memory = self.encode(tape, input, mode)?;
        let hidden = self.decode_hidden(tape, memory, prefix, mode)?;
        let logits = self.proj.forward(tape, &self.store, hidden);
        Ok(tape.log_softmax_rows(logits))
    }

    /// Decodes one action step and parses it through the token grammar.
    /// Returns the decoded form plus its total log-probability.
    pub fn next_action(
        &self,
        input: &ApmInput,
        cfg: &DecodeConfig,
    ) -> Result<(DecodedAction, f64), ModelError> {
        let mut tape = Tape::new();
        let memory_var = self.encode(&mut tape, input, &mut Mode::Eval)?;
        let memory = tape.value(memory_var).clone();

        let max_len = cfg.max_len.min(self.cfg.max_seq.saturating_sub(1));
        let cfg = DecodeConfig { max_len, ..*cfg };
        let step_fn = |prefix: &[u32]| -> Vec<f64> {
            let mut tape = Tape::new();
            let memory = tape.leaf(memory.clone());
            let lp = self
                .decode_step_logprobs(&mut tape, memory, prefix)
                .expect("prefix stays within max_seq");
            let t = tape.value(lp);
            let last = t.rows() - 1;
            (0..t.cols()).map(|c| t.at(last, c)).collect()
        };
        let mut results = decode(step_fn, &cfg, BOS, EOS);
        let best = results.remove(0);
        Ok((self.parse_decoded(&best.tokens), best.logprob))
    }

    /// Maps decoded output-vocab ids through the token grammar.
    pub fn parse_decoded(&self, generated: &[u32]) -> DecodedAction {
        let body: Vec<u32> = generated.iter().copied().filter(|&t| t != EOS).collect();
        if body.is_empty() {
            return DecodedAction::Stop;
        }
        let tokens: Vec<String> = body
            .iter()
            .map(|&t| self.output_vocab.token(t).unwrap_or("<unk>").to_string())
            .collect();
        match actiondsl::step_from_tokens(&tokens) {
            Ok(step) => DecodedAction::Step(step),
            Err(_) => DecodedAction::Malformed { tokens },
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), checkpoint::CheckpointError> {
        let mut extra = BTreeMap::new();
        extra.insert("input_vocab_hash".to_string(), self.input_vocab.content_hash());
        extra.insert("output_vocab_hash".to_string(), self.output_vocab.content_hash());
        extra.insert("max_id".to_string(), self.max_id.to_string());
        extra.insert("use_task_tokens".to_string(), self.use_task_tokens.to_string());
        extra.insert(
            "coupling".to_string(),
            match self.coupling {
                Coupling::Text => "text".to_string(),
                Coupling::Hidden => "hidden".to_string(),
            },
        );
        let meta =
            checkpoint::CheckpointMeta { kind: "apm".to_string(), config: self.cfg, extra };
        checkpoint::save(path, &meta, &self.store)
    }

    pub fn load(path: &Path, caption_vocab: &Vocab) -> Result<ApmModel, checkpoint::CheckpointError> {
        let (meta, params) = checkpoint::load(path)?;
        if meta.kind != "apm" {
            return Err(checkpoint::CheckpointError::Corrupt(format!(
                "expected an apm checkpoint, found `{}`",
                meta.kind
            )));
        }
        let max_id: u32 = meta
            .extra
            .get("max_id")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| checkpoint::CheckpointError::Corrupt("missing max_id".into()))?;
        let use_task_tokens = meta.extra.get("use_task_tokens").map(|v| v == "true").unwrap_or(true);
        let coupling = match meta.extra.get("coupling").map(String::as_str) {
            Some("hidden") => Coupling::Hidden,
            _ => Coupling::Text,
        };
        let mut model = ApmModel::new(meta.config, caption_vocab, max_id, use_task_tokens, coupling, 0)
            .map_err(|e| checkpoint::CheckpointError::Corrupt(e.to_string()))?;
        meta.verify_hash("input_vocab_hash", &model.input_vocab.content_hash())?;
        meta.verify_hash("output_vocab_hash", &model.output_vocab.content_hash())?;
        checkpoint::restore_into(&mut model.store, params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langtext::{tokenize, OverlongPolicy};
    use crate::neuralcore::DecodeMode;

    fn caption_vocab() -> Vocab {
        Vocab::from_corpus(["the agent walks to the closed fridge in the kitchen put groceries"])
    }

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { d_model: 16, n_heads: 2, n_layers: 1, ffn_mult: 2, dropout_rate: 0.0, max_seq: 48 }
    }

    fn fixture() -> (ApmModel, Caption) {
        let cv = caption_vocab();
        let model = ApmModel::new(tiny_cfg(), &cv, 8, true, Coupling::Text, 3).unwrap();
        let caption = tokenize(
            "the agent walks to the closed fridge in the kitchen",
            &cv,
            24,
            OverlongPolicy::Error,
        )
        .unwrap();
        (model, caption)
    }

    #[test]
    fn program_vocab_is_closed_and_stable() {
        let v = program_vocab(8);
        assert_eq!(v.id("[Walk]").is_some(), true);
        assert_eq!(v.id("<fridge>").is_some(), true);
        assert_eq!(v.id("(8)").is_some(), true);
        assert_eq!(v.id("(9)"), None);
        assert_eq!(v.id("(?)").is_some(), true);
        assert_eq!(program_vocab(8), program_vocab(8));
    }

    #[test]
    fn caption_ids_are_stable_across_vocab_extension() {
        let cv = caption_vocab();
        let iv = apm_input_vocab(&cv, &program_vocab(8));
        for tok in cv.payload_tokens() {
            assert_eq!(cv.id(tok), iv.id(tok));
        }
    }

    #[test]
    fn target_ids_round_trip_through_parse() {
        let (model, _) = fixture();
        let step = ActionStep::binary(Verb::PutIn, "groceries", 2, "fridge", 1);
        let ids = model.step_target_ids(&step);
        let generated: Vec<u32> = ids[1..].to_vec(); // decoder output excludes BOS
        assert_eq!(model.parse_decoded(&generated), DecodedAction::Step(step));
    }

    #[test]
    fn empty_decode_is_stop_and_garbage_is_malformed() {
        let (model, _) = fixture();
        assert_eq!(model.parse_decoded(&[EOS]), DecodedAction::Stop);
        let name_first = vec![model.output_vocab.id("<fridge>").unwrap(), EOS];
        assert!(matches!(model.parse_decoded(&name_first), DecodedAction::Malformed { .. }));
    }

    #[test]
    fn untrained_model_decodes_deterministically() {
        let (model, caption) = fixture();
        let input = ApmInput {
            task_text: Some("put groceries in the fridge"),
            caption: &caption,
            prev_action: None,
            caption_hidden: None,
        };
        let cfg = DecodeConfig { mode: DecodeMode::Greedy, max_len: 8, seed: 0 };
        let a = model.next_action(&input, &cfg).unwrap();
        let b = model.next_action(&input, &cfg).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn logprob_rows_normalize() {
        let (model, caption) = fixture();
        let input = ApmInput {
            task_text: None,
            caption: &caption,
            prev_action: Some(&ActionStep::unary(Verb::Walk, "fridge", 1)),
            caption_hidden: None,
        };
        let mut tape = Tape::new();
        let prefix = model.step_target_ids(&ActionStep::unary(Verb::Open, "fridge", 1));
        let lp = model
            .forward_logprobs(&mut tape, &input, &prefix[..prefix.len() - 1], &mut Mode::Eval)
            .unwrap();
        let t = tape.value(lp);
        for r in 0..t.rows() {
            let sum: f64 = (0..t.cols()).map(|c| t.at(r, c).exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hidden_coupling_requires_hidden_states() {
        let cv = caption_vocab();
        let model = ApmModel::new(tiny_cfg(), &cv, 8, false, Coupling::Hidden, 3).unwrap();
        let caption = tokenize("the agent walks", &cv, 24, OverlongPolicy::Error).unwrap();
        let input = ApmInput {
            task_text: None,
            caption: &caption,
            prev_action: None,
            caption_hidden: None,
        };
        assert!(model.next_action(&input, &DecodeConfig::default()).is_err());

        let hidden = Tensor::zeros(vec![caption.len() - 1, 16]);
        let input = ApmInput { caption_hidden: Some(&hidden), ..input };
        assert!(model.next_action(&input, &DecodeConfig::default()).is_ok());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (model, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("apm.ckpt");
        model.save(&path).unwrap();
        let loaded = ApmModel::load(&path, &caption_vocab()).unwrap();
        assert_eq!(loaded.store.content_hash(), model.store.content_hash());
        assert_eq!(loaded.coupling, Coupling::Text);
        assert!(loaded.use_task_tokens);
    }
}
