//! Vocabulary, word-level tokenizer, the templated caption oracle, and the
//! two-word caption expander.
//!
//! The caption language is closed by construction: a caption is an
//! agent-activity clause derived from the last action, an optional
//! salient-objects clause ("near the open fridge and the table"), and the
//! room ("in the kitchen"). Everything is lowercase words.

use crate::actiondsl::{ActionStep, Verb};
use crate::worldsim::{
    agent_cell, class_by_name, object_anchor_cell, AgentState, Placement, SceneGraph, View,
    ViewDims,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SEP: u32 = 4;
pub const MASK: u32 = 5;

/// Special token strings occupying the first six ids.
pub const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>", "<mask>"];

/// Default caption length cap (including BOS and EOS).
pub const DEFAULT_MAX_CAPTION: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LangError {
    #[error("caption has {len} tokens, max is {max}")]
    CaptionTooLong { len: usize, max: usize },
    #[error("no expansion template for verb `{verb}`")]
    UnknownVerbTemplate { verb: String },
    #[error("expected `<verb> <noun>`, got `{input}`")]
    MalformedTwoWord { input: String },
}

/// A bijection between token strings and ids, with the fixed specials
/// block at ids 0..6.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    fn build(words: Vec<String>) -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// Deterministic vocabulary: the sorted unique words of the corpus
    /// after the specials block.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut words: Vec<String> = texts
            .into_iter()
            .flat_map(|t| t.split_whitespace())
            .map(|w| w.to_lowercase())
            .filter(|w| !SPECIALS.contains(&w.as_str()))
            .collect();
        words.sort();
        words.dedup();
        Vocab::build(words)
    }

    /// Vocabulary from an explicit, already-ordered token list (used for
    /// the closed program-token vocabulary).
    pub fn from_token_list(words: Vec<String>) -> Vocab {
        let mut seen = std::collections::BTreeSet::new();
        let words = words
            .into_iter()
            .filter(|w| !SPECIALS.contains(&w.as_str()) && seen.insert(w.clone()))
            .collect();
        Vocab::build(words)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the specials block is always present
    }

    /// All non-special tokens in id order.
    pub fn payload_tokens(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }

    /// On-disk form: one non-special token per line; the line number is the
    /// id offset past the specials block.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in self.payload_tokens() {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Vocab {
        Vocab::build(text.lines().map(|l| l.to_string()).filter(|l| !l.is_empty()).collect())
    }

    /// Hex SHA-256 of the file form; checkpoints pin this.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A token-id sequence starting with BOS and ending with EOS, no interior
/// padding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Caption {
    pub tokens: Vec<u32>,
}

impl Caption {
    /// Wraps raw ids, checking the frame invariants.
    pub fn new(tokens: Vec<u32>) -> Option<Caption> {
        let ok = tokens.len() >= 2
            && tokens.first() == Some(&BOS)
            && tokens.last() == Some(&EOS)
            && tokens[1..tokens.len() - 1]
                .iter()
                .all(|&t| t != BOS && t != EOS && t != PAD);
        ok.then_some(Caption { tokens })
    }

    /// Frames raw decoded tokens (no leading BOS) as a caption. Decoded
    /// model output is data: interior specials are kept verbatim, only the
    /// BOS/EOS frame is enforced.
    pub fn from_decoded(mut generated: Vec<u32>) -> Caption {
        if generated.last() != Some(&EOS) {
            generated.push(EOS);
        }
        let mut tokens = Vec::with_capacity(generated.len() + 1);
        tokens.push(BOS);
        tokens.extend(generated);
        Caption { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // BOS and EOS are always present
    }

    /// The ids between BOS and EOS.
    pub fn interior(&self) -> &[u32] {
        &self.tokens[1..self.tokens.len() - 1]
    }
}

/// What to do with captions longer than the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlongPolicy {
    Error,
    TruncateWithEos,
}

/// Whitespace tokenization onto the vocabulary: lowercase, unknowns map to
/// UNK, BOS/EOS frame the result.
pub fn tokenize(
    s: &str,
    vocab: &Vocab,
    max_len: usize,
    policy: OverlongPolicy,
) -> Result<Caption, LangError> {
    let mut ids = vec![BOS];
    for word in s.split_whitespace() {
        ids.push(vocab.id_or_unk(&word.to_lowercase()));
    }
    ids.push(EOS);
    if ids.len() > max_len {
        match policy {
            OverlongPolicy::Error => {
                return Err(LangError::CaptionTooLong { len: ids.len(), max: max_len })
            }
            OverlongPolicy::TruncateWithEos => {
                ids.truncate(max_len - 1);
                ids.push(EOS);
            }
        }
    }
    Ok(Caption { tokens: ids })
}

/// Inverse of [`tokenize`] up to normalization: specials are dropped,
/// unknown ids render as the UNK string.
pub fn detokenize(caption: &Caption, vocab: &Vocab) -> String {
    caption
        .interior()
        .iter()
        .filter(|&&id| id != PAD && id != SEP && id != MASK)
        .map(|&id| vocab.token(id).unwrap_or(SPECIALS[UNK as usize]))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercased, whitespace-normalized text; the fixpoint of
/// `detokenize . tokenize` for in-vocabulary input.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The state adjective for an object, if its class has one: open/closed
/// for openables, powered/unpowered for switchables.
fn state_adjective(world: &SceneGraph, id: u32) -> Option<&'static str> {
    let obj = world.objects.get(&id)?;
    let class = class_by_name(&obj.class)?;
    if class.affordances.openable {
        Some(if obj.state.open { "open" } else { "closed" })
    } else if class.affordances.switchable {
        Some(if obj.state.powered { "powered" } else { "unpowered" })
    } else {
        None
    }
}

fn noun_phrase(world: &SceneGraph, id: u32) -> String {
    let name = world.objects.get(&id).map(|o| o.class.as_str()).unwrap_or("object");
    match state_adjective(world, id) {
        Some(adj) => format!("the {adj} {name}"),
        None => format!("the {name}"),
    }
}

fn activity_clause(world: &SceneGraph, last_action: Option<&ActionStep>) -> String {
    let Some(action) = last_action else {
        return "the agent stands".to_string();
    };
    let np = |i: usize| noun_phrase(world, action.args[i].id);
    match action.verb {
        Verb::Walk => format!("the agent walks to {}", np(0)),
        Verb::Run => format!("the agent runs to {}", np(0)),
        Verb::Grab => {
            let name = world
                .objects
                .get(&action.args[0].id)
                .map(|o| o.class.as_str())
                .unwrap_or("object");
            format!("the agent grabs the {name}")
        }
        Verb::Open => format!("the agent opens the {}", object_name(world, action, 0)),
        Verb::Close => format!("the agent closes the {}", object_name(world, action, 0)),
        Verb::SwitchOn => format!("the agent switches on the {}", object_name(world, action, 0)),
        Verb::SwitchOff => format!("the agent switches off the {}", object_name(world, action, 0)),
        Verb::PutOn => format!("the agent puts the {} on {}", object_name(world, action, 0), np(1)),
        Verb::PutIn => format!("the agent puts the {} in {}", object_name(world, action, 0), np(1)),
        Verb::Sit => format!("the agent sits on the {}", object_name(world, action, 0)),
        Verb::StandUp => "the agent stands up".to_string(),
    }
}

fn object_name<'w>(world: &'w SceneGraph, action: &ActionStep, i: usize) -> &'w str {
    world
        .objects
        .get(&action.args[i].id)
        .map(|o| o.class.as_str())
        .unwrap_or("object")
}

/// Cells a view covers, for salient-object filtering.
fn view_covers(world: &SceneGraph, agent: &AgentState, view: View, cell: (i64, i64)) -> bool {
    let (ax, ay) = agent_cell(world, agent);
    match view {
        View::Auto => {
            // the agent's whole room
            let room = agent.room as i64;
            let (w, h) = (6i64, 6i64);
            let ox = room * (w + 1) + 1;
            cell.0 >= ox && cell.0 < ox + w && cell.1 >= 1 && cell.1 <= h
        }
        View::FirstPerson => {
            let (w, h) = ViewDims::of(view);
            (cell.0 - ax).abs() <= 1 + w as i64 / 2 && (cell.1 - ay).abs() <= 1 + h as i64 / 2
        }
        View::FrontPerson => {
            (cell.0 - ax).abs() <= 4 && (cell.1 - ay).abs() <= 4 && cell != (ax, ay)
        }
    }
}

/// Number of salient objects mentioned per caption.
pub const SALIENT_K: usize = 2;

/// Deterministic ground-truth caption for one timestep:
/// `<agent-activity clause> <salient-objects clause> in the <room>`.
pub fn caption_oracle(
    world: &SceneGraph,
    agent: &AgentState,
    view: View,
    last_action: Option<&ActionStep>,
) -> String {
    let mut caption = activity_clause(world, last_action);

    // Salient clause: nearest visible objects in view, excluding whatever
    // the activity clause already mentions.
    let mentioned: Vec<u32> = last_action.map(|a| a.args.iter().map(|x| x.id).collect()).unwrap_or_default();
    let (ax, ay) = agent_cell(world, agent);
    let mut candidates: Vec<(i64, u32)> = world
        .objects
        .iter()
        .filter(|(id, obj)| {
            obj.room == agent.room
                && obj.placement.is_some()
                && !mentioned.contains(id)
                && !inside_anything(world, **id)
                && !agent.holding.contains(id)
        })
        .filter_map(|(id, _)| {
            let cell = object_anchor_cell(world, *id)?;
            if !view_covers(world, agent, view, cell) {
                return None;
            }
            Some(((cell.0 - ax).abs() + (cell.1 - ay).abs(), *id))
        })
        .collect();
    candidates.sort();
    let salient: Vec<String> = candidates
        .iter()
        .take(SALIENT_K)
        .map(|&(_, id)| noun_phrase(world, id))
        .collect();
    if !salient.is_empty() {
        caption.push_str(" near ");
        caption.push_str(&salient.join(" and "));
    }

    caption.push_str(" in the ");
    caption.push_str(world.room_name(agent.room));
    caption
}

fn inside_anything(world: &SceneGraph, id: u32) -> bool {
    let mut cur = id;
    for _ in 0..world.objects.len() + 1 {
        match world.objects.get(&cur).and_then(|o| o.placement) {
            Some(Placement::Inside(_)) => return true,
            Some(Placement::On(p)) => cur = p,
            _ => return false,
        }
    }
    false
}

/// Per-verb expansion templates for two-word captions; `{}` takes the noun.
/// The seed picks among synonymous templates.
const EXPANSION_TEMPLATES: &[(&str, &[&str])] = &[
    ("walk", &["the agent walks to the {}", "the agent is walking to the {}"]),
    ("run", &["the agent runs on the {}", "the agent is running on the {}"]),
    ("sit", &["the agent sits on the {}", "the agent is sitting on the {}"]),
    ("sitting", &["the agent is sitting on the {}", "the agent sits on the {}"]),
    ("grab", &["the agent grabs the {}", "the agent picks up the {}"]),
    ("open", &["the agent opens the {}"]),
    ("close", &["the agent closes the {}"]),
    ("switch", &["the agent switches on the {}"]),
    ("stand", &["the agent stands near the {}"]),
    ("put", &["the agent puts away the {}"]),
    ("read", &["the agent reads the {}", "the agent is reading the {}"]),
];

/// Rule-based stand-in for fill-mask caption expansion: turns raw two-word
/// descriptions ("walk bathroom") into full sentences.
pub fn expand_caption(two_word: &str, seed: u64) -> Result<String, LangError> {
    let words: Vec<&str> = two_word.split_whitespace().collect();
    let [verb, noun] = words.as_slice() else {
        return Err(LangError::MalformedTwoWord { input: two_word.to_string() });
    };
    let verb = verb.to_lowercase();
    let noun = noun.to_lowercase();
    let templates = EXPANSION_TEMPLATES
        .iter()
        .find(|(v, _)| *v == verb)
        .map(|(_, t)| *t)
        .ok_or(LangError::UnknownVerbTemplate { verb: verb.clone() })?;
    let template = templates[(seed % templates.len() as u64) as usize];
    Ok(template.replace("{}", &noun))
}
