//! Corpus-level caption metrics (BLEU, ROUGE-L, METEOR-lite, CIDEr,
//! SPICE-lite) and the two task metrics (execution rate, episode success
//! rate).
//!
//! METEOR-lite matches on exact tokens then on a fixed suffix-stripping
//! stem, with no synonym resource. SPICE-lite extracts semantic tuples
//! through the closed caption template grammar instead of open-domain
//! parsing.

mod spice;

pub use spice::{caption_tuples, spice_lite, Tuple};

use crate::models::Trajectory;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus needs at least {need} items, got {got}")]
    CorpusTooSmall { need: usize, got: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("n-gram order {0} unsupported (1..=4)")]
    BadOrder(usize),
}

/// One evaluation item: a candidate against one or more references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// A nonempty list of evaluation items with pre-normalized (lowercase)
/// tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Corpus {
        Corpus {
            items: pairs
                .iter()
                .map(|(c, r)| CorpusItem {
                    candidate: tokenize(c),
                    references: vec![tokenize(r)],
                })
                .collect(),
        }
    }

    fn check_nonempty(&self) -> Result<(), MetricError> {
        if self.items.is_empty() {
            Err(MetricError::EmptyCorpus)
        } else {
            Ok(())
        }
    }
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(|w| w.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for i in 0..=tokens.len() - n {
        *counts.entry(&tokens[i..i + n]).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU-n: the geometric mean of clipped modified i-gram
/// precisions for i = 1..n, times the brevity penalty. `smooth_add_one`
/// applies +1 smoothing to orders above 1 for tiny corpora.
pub fn bleu_n(corpus: &Corpus, n: usize, smooth_add_one: bool) -> Result<f64, MetricError> {
    corpus.check_nonempty()?;
    if n < 1 || n > 4 {
        return Err(MetricError::BadOrder(n));
    }

    let mut log_sum = 0.0;
    for order in 1..=n {
        let mut clipped = 0usize;
        let mut total = 0usize;
        for item in &corpus.items {
            let cand = ngram_counts(&item.candidate, order);
            let refs: Vec<_> = item.references.iter().map(|r| ngram_counts(r, order)).collect();
            for (gram, &count) in &cand {
                let max_ref = refs.iter().map(|r| r.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                clipped += count.min(max_ref);
                total += count;
            }
        }
        let (num, den) = if smooth_add_one && order > 1 {
            (clipped + 1, total + 1)
        } else {
            (clipped, total)
        };
        if num == 0 || den == 0 {
            return Ok(0.0);
        }
        log_sum += (num as f64 / den as f64).ln();
    }
    let precision_part = (log_sum / n as f64).exp();

    // brevity penalty over effective lengths: reference length closest to
    // the candidate's, ties toward the shorter reference
    let mut c_total = 0usize;
    let mut r_total = 0usize;
    for item in &corpus.items {
        let c = item.candidate.len();
        c_total += c;
        let closest = item
            .references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&rl| (rl.abs_diff(c), rl))
            .unwrap_or(0);
        r_total += closest;
    }
    if c_total == 0 {
        return Ok(0.0);
    }
    let bp = if c_total < r_total {
        (1.0 - r_total as f64 / c_total as f64).exp()
    } else {
        1.0
    };
    Ok(bp * precision_part)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Default recall weight of the ROUGE-L F measure.
pub const ROUGE_BETA: f64 = 1.2;

/// Corpus-mean ROUGE-L: per item the best LCS-based F score over the
/// references.
pub fn rouge_l(corpus: &Corpus, beta: f64) -> Result<f64, MetricError> {
    corpus.check_nonempty()?;
    let b2 = beta * beta;
    let mut sum = 0.0;
    for item in &corpus.items {
        let mut best: f64 = 0.0;
        for reference in &item.references {
            let lcs = lcs_len(&item.candidate, reference) as f64;
            if lcs == 0.0 || item.candidate.is_empty() || reference.is_empty() {
                continue;
            }
            let p = lcs / item.candidate.len() as f64;
            let r = lcs / reference.len() as f64;
            let f = ((1.0 + b2) * p * r) / (r + b2 * p);
            best = best.max(f);
        }
        sum += best;
    }
    Ok(sum / corpus.items.len() as f64)
}

/// Fixed suffix-stripping stemmer used by the METEOR-lite stem stage.
pub fn stem(word: &str) -> &str {
    const SUFFIXES: [&str; 6] = ["ings", "ing", "ed", "es", "ly", "s"];
    for suffix in SUFFIXES {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.len() >= 3 {
                return base;
            }
        }
    }
    word
}

/// Greedy left-to-right unigram alignment: exact stage then stem stage.
/// Returns matched (candidate index, reference index) pairs.
fn align(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut matched_ref = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut matched_cand = vec![false; cand.len()];

    for exact in [true, false] {
        for (i, c) in cand.iter().enumerate() {
            if matched_cand[i] {
                continue;
            }
            for (j, r) in reference.iter().enumerate() {
                if matched_ref[j] {
                    continue;
                }
                let hit = if exact { c == r } else { stem(c) == stem(r) };
                if hit {
                    matched_cand[i] = true;
                    matched_ref[j] = true;
                    pairs.push((i, j));
                    break;
                }
            }
        }
    }
    pairs.sort();
    pairs
}

fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        let contiguous = matches!(prev, Some((pi, pj)) if i == pi + 1 && j == pj + 1);
        if !contiguous {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    chunks
}

/// METEOR without synonymy: exact + stem alignment, harmonic mean
/// F = 10PR/(R+9P), fragmentation penalty 0.5*(chunks/matches)^3.
pub fn meteor_lite(corpus: &Corpus) -> Result<f64, MetricError> {
    corpus.check_nonempty()?;
    let mut sum = 0.0;
    for item in &corpus.items {
        let mut best: f64 = 0.0;
        for reference in &item.references {
            if item.candidate.is_empty() || reference.is_empty() {
                continue;
            }
            let pairs = align(&item.candidate, reference);
            let m = pairs.len() as f64;
            if m == 0.0 {
                continue;
            }
            let p = m / item.candidate.len() as f64;
            let r = m / reference.len() as f64;
            let f_mean = 10.0 * p * r / (r + 9.0 * p);
            let chunks = chunk_count(&pairs) as f64;
            let penalty = 0.5 * (chunks / m).powi(3);
            best = best.max(f_mean * (1.0 - penalty));
        }
        sum += best;
    }
    Ok(sum / corpus.items.len() as f64)
}

/// CIDEr (base variant): mean over n = 1..4 of ten times the average
/// TF-IDF cosine between the candidate and each reference. IDF comes from
/// the evaluation corpus itself: ln(N / df) with df counted over reference
/// sets and clamped to at least 1.
pub fn cider(corpus: &Corpus) -> Result<f64, MetricError> {
    if corpus.items.len() < 2 {
        return Err(MetricError::CorpusTooSmall { need: 2, got: corpus.items.len() });
    }
    let n_items = corpus.items.len() as f64;
    let mut total = 0.0;
    for order in 1..=4usize {
        // document frequency over reference sets
        let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
        for item in &corpus.items {
            let mut seen: Vec<&[String]> = Vec::new();
            for reference in &item.references {
                for gram in ngram_counts(reference, order).keys() {
                    if !seen.contains(gram) {
                        seen.push(gram);
                    }
                }
            }
            for gram in seen {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        let idf = |gram: &[String]| {
            let d = df.get(gram).copied().unwrap_or(0).max(1) as f64;
            (n_items / d).ln()
        };

        let tfidf = |tokens: &[String]| -> BTreeMap<Vec<String>, f64> {
            let counts = ngram_counts(tokens, order);
            let total: usize = counts.values().sum();
            counts
                .iter()
                .map(|(gram, &c)| {
                    (gram.to_vec(), (c as f64 / total.max(1) as f64) * idf(gram))
                })
                .collect()
        };

        let mut order_sum = 0.0;
        for item in &corpus.items {
            let cand_vec = tfidf(&item.candidate);
            let cand_norm: f64 = cand_vec.values().map(|v| v * v).sum::<f64>().sqrt();
            let mut item_sum = 0.0;
            for reference in &item.references {
                let ref_vec = tfidf(reference);
                let ref_norm: f64 = ref_vec.values().map(|v| v * v).sum::<f64>().sqrt();
                if cand_norm == 0.0 || ref_norm == 0.0 {
                    continue;
                }
                let dot: f64 = cand_vec
                    .iter()
                    .filter_map(|(gram, v)| ref_vec.get(gram).map(|w| v * w))
                    .sum();
                item_sum += dot / (cand_norm * ref_norm);
            }
            order_sum += 10.0 * item_sum / item.references.len() as f64;
        }
        total += order_sum / n_items;
    }
    Ok(total / 4.0)
}

/// Pooled fraction of predicted steps the simulator executed; malformed
/// decodes count as failed steps.
pub fn execution_rate(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let predicted: usize = trajectories.iter().map(|t| t.predicted_steps()).sum();
    let executed: usize = trajectories.iter().map(|t| t.executed_steps()).sum();
    Ok(executed as f64 / predicted.max(1) as f64)
}

/// Fraction of trajectories that ended with the task goal satisfied.
pub fn episode_success_rate(trajectories: &[Trajectory]) -> Result<f64, MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let successes = trajectories.iter().filter(|t| t.goal_reached).count();
    Ok(successes as f64 / trajectories.len() as f64)
}

/// Every caption metric at once; the row layout of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionMetrics {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub spice: f64,
}

pub fn caption_metrics(corpus: &Corpus) -> Result<CaptionMetrics, MetricError> {
    Ok(CaptionMetrics {
        bleu_1: bleu_n(corpus, 1, false)?,
        bleu_2: bleu_n(corpus, 2, false)?,
        bleu_3: bleu_n(corpus, 3, false)?,
        bleu_4: bleu_n(corpus, 4, false)?,
        rouge_l: rouge_l(corpus, ROUGE_BETA)?,
        meteor: meteor_lite(corpus)?,
        cider: if corpus.items.len() >= 2 { cider(corpus)? } else { 0.0 },
        spice: spice_lite(corpus)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(pairs: &[(&str, &str)]) -> Corpus {
        Corpus::from_pairs(pairs)
    }

    #[test]
    fn bleu_identity_is_one() {
        let c = corpus_of(&[("the agent walks to the fridge", "the agent walks to the fridge")]);
        for n in 1..=4 {
            assert!((bleu_n(&c, n, false).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_clipping_hand_example() {
        // candidate "the the the" vs reference "the cat": clipped count 1
        // of 3, BP = 1 because 3 > 2
        let c = corpus_of(&[("the the the", "the cat")]);
        let got = bleu_n(&c, 1, false).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        let c = corpus_of(&[("alpha beta gamma delta", "epsilon zeta eta theta")]);
        for n in 1..=4 {
            assert_eq!(bleu_n(&c, n, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn bleu_brevity_penalty_applies_to_short_candidates() {
        let c = corpus_of(&[("the cat", "the cat sat on the mat")]);
        // p1 = 1, c = 2, r = 6 -> BLEU-1 = exp(1 - 3)
        let got = bleu_n(&c, 1, false).unwrap();
        assert!((got - (1.0f64 - 3.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn bleu_rejects_bad_order_and_empty() {
        let c = corpus_of(&[("a", "a")]);
        assert!(matches!(bleu_n(&c, 5, false), Err(MetricError::BadOrder(5))));
        let empty = Corpus { items: vec![] };
        assert!(matches!(bleu_n(&empty, 1, false), Err(MetricError::EmptyCorpus)));
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        let c = corpus_of(&[("the cat sat", "the cat sat")]);
        assert!((rouge_l(&c, ROUGE_BETA).unwrap() - 1.0).abs() < 1e-12);
        let d = corpus_of(&[("aa bb", "cc dd")]);
        assert_eq!(rouge_l(&d, ROUGE_BETA).unwrap(), 0.0);
    }

    #[test]
    fn rouge_hand_example() {
        // cand "the cat", ref "the cat sat": LCS=2, P=1, R=2/3,
        // F = ((1+1.44)*1*(2/3)) / ((2/3) + 1.44) = 0.77215...
        let c = corpus_of(&[("the cat", "the cat sat")]);
        let p: f64 = 1.0;
        let r: f64 = 2.0 / 3.0;
        let b2 = ROUGE_BETA * ROUGE_BETA;
        let expected = ((1.0 + b2) * p * r) / (r + b2 * p);
        assert!((rouge_l(&c, ROUGE_BETA).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.7721518987341772).abs() < 1e-12);
    }

    #[test]
    fn meteor_identity_penalty_formula() {
        let c = corpus_of(&[("the agent walks home", "the agent walks home")]);
        let len = 4.0f64;
        let expected = 1.0 - 0.5 * (1.0 / len).powi(3);
        assert!((meteor_lite(&c).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn meteor_stem_stage_matches_morphology() {
        assert_eq!(stem("walks"), "walk");
        assert_eq!(stem("walking"), "walk");
        let c = corpus_of(&[("walks", "walking")]);
        assert!(meteor_lite(&c).unwrap() > 0.0);
        let none = corpus_of(&[("fridge", "table")]);
        assert_eq!(meteor_lite(&none).unwrap(), 0.0);
    }

    #[test]
    fn cider_identity_with_unique_ngrams_scores_ten() {
        let c = corpus_of(&[
            ("the agent opens the fridge door", "the agent opens the fridge door"),
            ("a cat sleeps on a warm mat", "a cat sleeps on a warm mat"),
        ]);
        let got = cider(&c).unwrap();
        assert!((got - 10.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn cider_disjoint_is_zero_and_small_corpus_rejected() {
        let c = corpus_of(&[
            ("aa bb cc dd", "ee ff gg hh"),
            ("ii jj kk ll", "mm nn oo pp"),
        ]);
        assert_eq!(cider(&c).unwrap(), 0.0);
        let one = corpus_of(&[("a b", "a b")]);
        assert!(matches!(cider(&one), Err(MetricError::CorpusTooSmall { .. })));
    }

    #[test]
    fn cider_is_order_invariant() {
        let a = corpus_of(&[
            ("the agent walks", "the agent walks"),
            ("a cat sat", "a cat sleeps"),
            ("open the door", "close the door"),
        ]);
        let mut b = a.clone();
        b.items.rotate_left(1);
        assert!((cider(&a).unwrap() - cider(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reference_permutation_invariance() {
        let item = CorpusItem {
            candidate: tokenize("the agent walks to the fridge"),
            references: vec![
                tokenize("the agent walks to the closed fridge"),
                tokenize("an agent moves toward a fridge"),
            ],
        };
        let mut flipped = item.clone();
        flipped.references.reverse();
        let a = Corpus { items: vec![item, CorpusItem { candidate: tokenize("x y"), references: vec![tokenize("x y")] }] };
        let b = Corpus { items: vec![flipped, a.items[1].clone()] };
        assert_eq!(bleu_n(&a, 4, false).unwrap(), bleu_n(&b, 4, false).unwrap());
        assert_eq!(rouge_l(&a, ROUGE_BETA).unwrap(), rouge_l(&b, ROUGE_BETA).unwrap());
        assert_eq!(meteor_lite(&a).unwrap(), meteor_lite(&b).unwrap());
        assert_eq!(cider(&a).unwrap(), cider(&b).unwrap());
        assert_eq!(spice_lite(&a).unwrap(), spice_lite(&b).unwrap());
    }

    #[test]
    fn rouge_recall_monotonicity_smoke() {
        // appending a matching token never decreases the recall term
        let reference = tokenize("the agent walks to the fridge in the kitchen");
        let mut cand = tokenize("the agent");
        let mut last_recall = 0.0;
        for extra in ["walks", "to", "the", "fridge"] {
            cand.push(extra.to_string());
            let lcs = lcs_len(&cand, &reference) as f64;
            let recall = lcs / reference.len() as f64;
            assert!(recall >= last_recall);
            last_recall = recall;
        }
    }
}
