//! Decoding strategies over any autoregressive next-token distribution:
//! greedy, temperature sampling, and beam search with a retirement pool.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
    Beam { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    #[serde(flatten)]
    pub mode: DecodeMode,
    /// Maximum number of generated tokens (the EOS, when produced, counts).
    pub max_len: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { mode: DecodeMode::Greedy, max_len: 24, seed: 0 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_len < 1 {
            return Err("max_len must be at least 1".into());
        }
        match self.mode {
            DecodeMode::Beam { k } if k < 1 => Err("beam width must be at least 1".into()),
            DecodeMode::Sample { temperature } if temperature <= 0.0 => {
                Err("temperature must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// One decoded sequence: generated tokens (without BOS, including the EOS
/// when one was produced) and its total log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<u32>,
    pub logprob: f64,
}

/// Greedy argmax with ties broken toward the lowest token id.
fn argmax_lowest(logprobs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logprobs.iter().enumerate() {
        if v > logprobs[best] {
            best = i;
        }
    }
    best
}

/// Decodes from a next-token distribution function.
///
/// `step_fn` receives the prefix (starting with BOS) and returns the
/// log-probability vector of the next token. Greedy/Sample return a single
/// sequence; Beam(k) returns the retirement pool plus the final beams,
/// sorted by total log-probability, best first. Every sequence ends with
/// EOS or at `max_len` tokens.
pub fn decode<F>(mut step_fn: F, cfg: &DecodeConfig, bos: u32, eos: u32) -> Vec<Decoded>
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    cfg.validate().expect("valid decode config");
    match cfg.mode {
        DecodeMode::Greedy => vec![greedy(&mut step_fn, cfg.max_len, bos, eos)],
        DecodeMode::Sample { temperature } => {
            vec![sample(&mut step_fn, cfg.max_len, temperature, cfg.seed, bos, eos)]
        }
        DecodeMode::Beam { k } => beam(&mut step_fn, cfg.max_len, k, bos, eos),
    }
}

fn greedy<F>(step_fn: &mut F, max_len: usize, bos: u32, eos: u32) -> Decoded
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    let mut prefix = vec![bos];
    let mut logprob = 0.0;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let dist = step_fn(&prefix);
        let next = argmax_lowest(&dist) as u32;
        logprob += dist[next as usize];
        tokens.push(next);
        prefix.push(next);
        if next == eos {
            break;
        }
    }
    Decoded { tokens, logprob }
}

fn sample<F>(step_fn: &mut F, max_len: usize, temperature: f64, seed: u64, bos: u32, eos: u32) -> Decoded
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefix = vec![bos];
    let mut logprob = 0.0;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let dist = step_fn(&prefix);
        // temperature-scaled probabilities, renormalized
        let scaled: Vec<f64> = dist.iter().map(|lp| (lp / temperature).exp()).collect();
        let z: f64 = scaled.iter().sum();
        let mut u = rng.random::<f64>() * z;
        let mut next = scaled.len() - 1;
        for (i, p) in scaled.iter().enumerate() {
            if u < *p {
                next = i;
                break;
            }
            u -= p;
        }
        logprob += dist[next];
        tokens.push(next as u32);
        prefix.push(next as u32);
        if next as u32 == eos {
            break;
        }
    }
    Decoded { tokens, logprob }
}

struct BeamEntry {
    tokens: Vec<u32>,
    logprob: f64,
}

fn beam<F>(step_fn: &mut F, max_len: usize, k: usize, bos: u32, eos: u32) -> Vec<Decoded>
where
    F: FnMut(&[u32]) -> Vec<f64>,
{
    let mut live = vec![BeamEntry { tokens: Vec::new(), logprob: 0.0 }];
    let mut pool: Vec<Decoded> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // (cumulative logprob, parent index, token)
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (parent, entry) in live.iter().enumerate() {
            let mut prefix = Vec::with_capacity(entry.tokens.len() + 1);
            prefix.push(bos);
            prefix.extend_from_slice(&entry.tokens);
            let dist = step_fn(&prefix);
            for (tok, lp) in dist.iter().enumerate() {
                candidates.push((entry.logprob + lp, parent, tok as u32));
            }
        }
        // Highest cumulative log-prob first; ties resolve toward earlier
        // parents then lower token ids, which makes Beam(1) match greedy.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut next_live = Vec::with_capacity(k);
        for &(logprob, parent, tok) in candidates.iter().take(k) {
            let mut tokens = live[parent].tokens.clone();
            tokens.push(tok);
            if tok == eos {
                pool.push(Decoded { tokens, logprob });
            } else {
                next_live.push(BeamEntry { tokens, logprob });
            }
        }
        live = next_live;
    }

    // Unfinished beams retire at the length cap.
    pool.extend(live.into_iter().map(|e| Decoded { tokens: e.tokens, logprob: e.logprob }));
    pool.sort_by(|a, b| b.logprob.partial_cmp(&a.logprob).unwrap_or(std::cmp::Ordering::Equal));
    pool
}
