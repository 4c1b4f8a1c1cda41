//! SPICE-lite: semantic tuples extracted through the closed caption
//! template grammar, scored by tuple-set F1.

use super::{Corpus, MetricError};
use std::collections::BTreeSet;

/// A semantic proposition: an object, an attributed object, or a
/// subject-relation-object triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tuple {
    Obj(String),
    Attr(String, String),
    Rel(String, String, String),
}

const ADJECTIVES: [&str; 4] = ["open", "closed", "powered", "unpowered"];
const RESERVED: [&str; 11] =
    ["the", "agent", "near", "and", "in", "on", "to", "up", "walks", "runs", "puts"];

struct Parser<'a> {
    tokens: &'a [String],
    pos: usize,
    tuples: BTreeSet<Tuple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unparseable;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(|s| s.as_str())
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), Unparseable> {
        if self.eat(word) {
            Ok(())
        } else {
            Err(Unparseable)
        }
    }

    /// `["the"] [ADJ] NOUN`; records the object and its attribute.
    fn noun_phrase(&mut self) -> Result<String, Unparseable> {
        self.eat("the");
        let adj = match self.peek() {
            Some(w) if ADJECTIVES.contains(&w) => {
                let adj = w.to_string();
                self.pos += 1;
                Some(adj)
            }
            _ => None,
        };
        let noun = match self.peek() {
            Some(w) if !RESERVED.contains(&w) => w.to_string(),
            _ => return Err(Unparseable),
        };
        self.pos += 1;
        self.tuples.insert(Tuple::Obj(noun.clone()));
        if let Some(adj) = adj {
            self.tuples.insert(Tuple::Attr(noun.clone(), adj));
        }
        Ok(noun)
    }

    fn rel(&mut self, subject: &str, relation: &str, object: &str) {
        self.tuples.insert(Tuple::Rel(
            subject.to_string(),
            relation.to_string(),
            object.to_string(),
        ));
    }

    fn verb_phrase(&mut self) -> Result<(), Unparseable> {
        let verb = self.peek().ok_or(Unparseable)?.to_string();
        self.pos += 1;
        match verb.as_str() {
            "walks" | "runs" => {
                self.expect("to")?;
                let obj = self.noun_phrase()?;
                self.rel("agent", &format!("{verb} to"), &obj);
            }
            "grabs" | "opens" | "closes" => {
                let obj = self.noun_phrase()?;
                self.rel("agent", &verb, &obj);
            }
            "switches" => {
                let dir = match self.peek() {
                    Some("on") => "on",
                    Some("off") => "off",
                    _ => return Err(Unparseable),
                };
                self.pos += 1;
                let obj = self.noun_phrase()?;
                self.rel("agent", &format!("switches {dir}"), &obj);
            }
            "puts" => {
                let item = self.noun_phrase()?;
                let prep = match self.peek() {
                    Some("on") => "on",
                    Some("in") => "in",
                    _ => return Err(Unparseable),
                };
                self.pos += 1;
                let dest = self.noun_phrase()?;
                self.rel("agent", "puts", &item);
                self.rel(&item, prep, &dest);
            }
            "sits" => {
                self.expect("on")?;
                let obj = self.noun_phrase()?;
                self.rel("agent", "sits on", &obj);
            }
            "stands" => {
                self.eat("up");
            }
            _ => return Err(Unparseable),
        }
        Ok(())
    }

    fn caption(&mut self) -> Result<(), Unparseable> {
        if self.eat("the") {
            if !self.eat("agent") {
                // bare noun phrase that happened to start with "the"
                self.pos -= 1;
                self.noun_phrase()?;
                return if self.pos == self.tokens.len() { Ok(()) } else { Err(Unparseable) };
            }
            self.tuples.insert(Tuple::Obj("agent".to_string()));
            self.verb_phrase()?;
            if self.eat("near") {
                loop {
                    let obj = self.noun_phrase()?;
                    self.rel("agent", "near", &obj);
                    if !self.eat("and") {
                        break;
                    }
                }
            }
            if self.eat("in") {
                self.expect("the")?;
                let room = match self.peek() {
                    Some(w) if !RESERVED.contains(&w) => w.to_string(),
                    _ => return Err(Unparseable),
                };
                self.pos += 1;
                self.tuples.insert(Tuple::Obj(room.clone()));
                self.rel("agent", "in", &room);
            }
        } else {
            self.noun_phrase()?;
        }
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(Unparseable)
        }
    }
}

/// Parses a caption into its tuple set; unparseable captions yield the
/// empty set (they score zero, by definition, not by exception).
pub fn caption_tuples(tokens: &[String]) -> BTreeSet<Tuple> {
    if tokens.is_empty() {
        return BTreeSet::new();
    }
    let mut parser = Parser { tokens, pos: 0, tuples: BTreeSet::new() };
    match parser.caption() {
        Ok(()) => parser.tuples,
        Err(Unparseable) => BTreeSet::new(),
    }
}

/// Corpus-mean tuple F1, best reference per item.
pub fn spice_lite(corpus: &Corpus) -> Result<f64, MetricError> {
    corpus.check_nonempty()?;
    let mut sum = 0.0;
    for item in &corpus.items {
        let cand = caption_tuples(&item.candidate);
        let mut best: f64 = 0.0;
        for reference in &item.references {
            let refs = caption_tuples(reference);
            if cand.is_empty() || refs.is_empty() {
                continue;
            }
            let overlap = cand.intersection(&refs).count() as f64;
            let f1 = 2.0 * overlap / (cand.len() + refs.len()) as f64;
            best = best.max(f1);
        }
        sum += best;
    }
    Ok(sum / corpus.items.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalmetrics::tokenize;

    #[test]
    fn full_template_caption_parses() {
        let toks = tokenize("the agent walks to the closed fridge near the table and the cup in the kitchen");
        let tuples = caption_tuples(&toks);
        assert!(tuples.contains(&Tuple::Obj("agent".into())));
        assert!(tuples.contains(&Tuple::Obj("fridge".into())));
        assert!(tuples.contains(&Tuple::Attr("fridge".into(), "closed".into())));
        assert!(tuples.contains(&Tuple::Rel("agent".into(), "walks to".into(), "fridge".into())));
        assert!(tuples.contains(&Tuple::Rel("agent".into(), "near".into(), "table".into())));
        assert!(tuples.contains(&Tuple::Rel("agent".into(), "near".into(), "cup".into())));
        assert!(tuples.contains(&Tuple::Rel("agent".into(), "in".into(), "kitchen".into())));
    }

    #[test]
    fn puts_in_caption_keeps_room_clause_separate() {
        let toks = tokenize("the agent puts the cup in the open cabinet in the kitchen");
        let tuples = caption_tuples(&toks);
        assert!(tuples.contains(&Tuple::Rel("cup".into(), "in".into(), "cabinet".into())));
        assert!(tuples.contains(&Tuple::Attr("cabinet".into(), "open".into())));
        assert!(tuples.contains(&Tuple::Rel("agent".into(), "in".into(), "kitchen".into())));
    }

    #[test]
    fn attribute_mismatch_scores_half() {
        // object tuple matches, attribute tuple differs: F1 = 0.5
        let corpus = Corpus::from_pairs(&[("open fridge", "closed fridge")]);
        assert!((spice_lite(&corpus).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_scores_one_and_free_text_zero() {
        let identical = Corpus::from_pairs(&[(
            "the agent sits on the sofa in the livingroom",
            "the agent sits on the sofa in the livingroom",
        )]);
        assert!((spice_lite(&identical).unwrap() - 1.0).abs() < 1e-12);

        let junk = Corpus::from_pairs(&[(
            "colorless green ideas sleep furiously and and and",
            "the agent stands in the kitchen",
        )]);
        assert_eq!(spice_lite(&junk).unwrap(), 0.0);
    }

    #[test]
    fn stands_and_switches_forms() {
        assert!(!caption_tuples(&tokenize("the agent stands in the gym")).is_empty());
        assert!(!caption_tuples(&tokenize("the agent stands up in the gym")).is_empty());
        let t = caption_tuples(&tokenize("the agent switches on the tv in the livingroom"));
        assert!(t.contains(&Tuple::Rel("agent".into(), "switches on".into(), "tv".into())));
    }
}
