//! Parser, validator, and canonical formatter for the bracketed
//! action-program script format.
//!
//! A program is a list of steps, one per line (or comma-separated, with an
//! optional surrounding bracket pair around the whole list):
//!
//! ```text
//! [Walk] <groceries> (1)
//! [Grab] <groceries> (1)
//! [PutIn] <groceries> (1) <fridge> (2)
//! ```
//!
//! The canonical form produced by [`format_program`] is one step per line
//! with exactly one space between token groups; [`parse_program`] accepts a
//! superset (any inter-token whitespace, case-insensitive verbs, comma
//! separators, an outer bracket pair).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::worldsim::SceneGraph;

/// The closed verb set of the action DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verb {
    Walk,
    Run,
    Grab,
    Open,
    Close,
    SwitchOn,
    SwitchOff,
    PutOn,
    PutIn,
    Sit,
    StandUp,
}

impl Verb {
    pub const ALL: [Verb; 11] = [
        Verb::Walk,
        Verb::Run,
        Verb::Grab,
        Verb::Open,
        Verb::Close,
        Verb::SwitchOn,
        Verb::SwitchOff,
        Verb::PutOn,
        Verb::PutIn,
        Verb::Sit,
        Verb::StandUp,
    ];

    /// Canonical capitalization used by the on-disk format.
    pub fn canonical(&self) -> &'static str {
        match self {
            Verb::Walk => "Walk",
            Verb::Run => "Run",
            Verb::Grab => "Grab",
            Verb::Open => "Open",
            Verb::Close => "Close",
            Verb::SwitchOn => "SwitchOn",
            Verb::SwitchOff => "SwitchOff",
            Verb::PutOn => "PutOn",
            Verb::PutIn => "PutIn",
            Verb::Sit => "Sit",
            Verb::StandUp => "StandUp",
        }
    }

    /// Number of object arguments the verb takes.
    pub fn arity(&self) -> usize {
        match self {
            Verb::StandUp => 0,
            Verb::PutOn | Verb::PutIn => 2,
            _ => 1,
        }
    }

    /// Case-insensitive lookup against the canonical names.
    pub fn from_ident(ident: &str) -> Option<Verb> {
        let lower = ident.to_ascii_lowercase();
        Verb::ALL
            .iter()
            .copied()
            .find(|v| v.canonical().to_ascii_lowercase() == lower)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

/// One `<name> (id)` argument group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptArg {
    pub name: String,
    pub id: u32,
}

impl ScriptArg {
    pub fn new(name: impl Into<String>, id: u32) -> Self {
        ScriptArg { name: name.into(), id }
    }
}

/// A single `[Verb] <name> (id) ...` step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionStep {
    pub verb: Verb,
    pub args: Vec<ScriptArg>,
}

impl ActionStep {
    pub fn new(verb: Verb, args: Vec<ScriptArg>) -> Self {
        ActionStep { verb, args }
    }

    pub fn nullary(verb: Verb) -> Self {
        ActionStep { verb, args: Vec::new() }
    }

    pub fn unary(verb: Verb, name: impl Into<String>, id: u32) -> Self {
        ActionStep { verb, args: vec![ScriptArg::new(name, id)] }
    }

    pub fn binary(
        verb: Verb,
        name_a: impl Into<String>,
        id_a: u32,
        name_b: impl Into<String>,
        id_b: u32,
    ) -> Self {
        ActionStep {
            verb,
            args: vec![ScriptArg::new(name_a, id_a), ScriptArg::new(name_b, id_b)],
        }
    }
}

impl fmt::Display for ActionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.verb)?;
        for arg in &self.args {
            write!(f, " <{}> ({})", arg.name, arg.id)?;
        }
        Ok(())
    }
}

/// An ordered list of action steps. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub steps: Vec<ActionStep>,
}

impl Program {
    pub fn new(steps: Vec<ActionStep>) -> Self {
        Program { steps }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
}

/// What the parser was looking for when it failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// A token other than the expected one was found.
    Unexpected { expected: String, found: String },
    /// A bracketed identifier that is not a registered verb.
    UnknownVerb { found: String },
    /// A registered verb used with the wrong number of argument groups.
    WrongArity { verb: Verb, expected: usize, found: usize },
}

/// Positioned parse failure; line and column are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {line}:{col}: {}", self.describe())]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn describe(&self) -> String {
        match &self.kind {
            ParseErrorKind::Unexpected { expected, found } => {
                format!("expected {expected}, found {found}")
            }
            ParseErrorKind::UnknownVerb { found } => format!("unknown verb `{found}`"),
            ParseErrorKind::WrongArity { verb, expected, found } => {
                format!("verb {verb} takes {expected} argument(s), found {found}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LBracket,
    RBracket,
    LAngle,
    RAngle,
    LParen,
    RParen,
    Sep,
    Ident(String),
    Int(u64),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LAngle => "`<`".into(),
            Tok::RAngle => "`>`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Sep => "separator".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    /// Tokenizes the whole input; newlines and commas both lex to [`Tok::Sep`].
    fn tokenize(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some(c) if *c == ' ' || *c == '\t' || *c == '\r') {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(&c) = self.chars.peek() else { break };
            let tok = match c {
                '[' => {
                    self.bump();
                    Tok::LBracket
                }
                ']' => {
                    self.bump();
                    Tok::RBracket
                }
                '<' => {
                    self.bump();
                    Tok::LAngle
                }
                '>' => {
                    self.bump();
                    Tok::RAngle
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ',' | '\n' => {
                    self.bump();
                    Tok::Sep
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while matches!(self.chars.peek(), Some(c) if c.is_ascii_alphanumeric() || *c == '_')
                    {
                        s.push(self.bump().unwrap());
                    }
                    Tok::Ident(s)
                }
                c if c.is_ascii_digit() => {
                    let mut n: u64 = 0;
                    while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                        let d = self.bump().unwrap().to_digit(10).unwrap() as u64;
                        n = n.saturating_mul(10).saturating_add(d);
                    }
                    Tok::Int(n)
                }
                other => {
                    return Err(ParseError {
                        line,
                        col,
                        kind: ParseErrorKind::Unexpected {
                            expected: "`[`, `<`, `(` or separator".into(),
                            found: format!("`{other}`"),
                        },
                    })
                }
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|&(_, l, c)| (l, c)).unwrap_or(self.end)
    }

    fn err(&self, expected: &str) -> ParseError {
        let (line, col) = self.here();
        let found = self
            .peek()
            .map(|t| t.describe())
            .unwrap_or_else(|| "end of input".into());
        ParseError {
            line,
            col,
            kind: ParseErrorKind::Unexpected { expected: expected.into(), found },
        }
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    fn skip_seps(&mut self) {
        while self.peek() == Some(&Tok::Sep) {
            self.pos += 1;
        }
    }

    fn parse_ident(&mut self, expected: &str) -> Result<(String, usize, usize), ParseError> {
        let (line, col) = self.here();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok((s, line, col))
            }
            _ => Err(self.err(expected)),
        }
    }

    fn parse_step(&mut self) -> Result<ActionStep, ParseError> {
        self.expect(Tok::LBracket, "`[`")?;
        let (ident, vline, vcol) = self.parse_ident("verb name")?;
        let verb = Verb::from_ident(&ident).ok_or(ParseError {
            line: vline,
            col: vcol,
            kind: ParseErrorKind::UnknownVerb { found: ident },
        })?;
        self.expect(Tok::RBracket, "`]`")?;

        let mut args = Vec::new();
        while self.peek() == Some(&Tok::LAngle) && args.len() < 2 {
            self.pos += 1;
            let (name, _, _) = self.parse_ident("object name")?;
            self.expect(Tok::RAngle, "`>`")?;
            self.expect(Tok::LParen, "`(`")?;
            let (line, col) = self.here();
            let id = match self.peek() {
                Some(&Tok::Int(n)) if n >= 1 && n <= u32::MAX as u64 => {
                    self.pos += 1;
                    n as u32
                }
                _ => return Err(self.err("positive object id")),
            };
            self.expect(Tok::RParen, "`)`")?;
            let _ = (line, col);
            args.push(ScriptArg { name: name.to_ascii_lowercase(), id });
        }

        if args.len() != verb.arity() {
            // A third `<` group after a binary verb also lands here as extra input.
            return Err(ParseError {
                line: vline,
                col: vcol,
                kind: ParseErrorKind::WrongArity { verb, expected: verb.arity(), found: args.len() },
            });
        }
        Ok(ActionStep { verb, args })
    }
}

/// Parses program text into a [`Program`].
///
/// Empty (or whitespace-only) input is the empty program. Errors carry the
/// 1-based line/column of the offending token.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let end_line = text.lines().count().max(1);
    let end_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let toks = Lexer::new(text).tokenize()?;
    let mut p = Parser { toks, pos: 0, end: (end_line, end_col) };

    p.skip_seps();
    if p.peek().is_none() {
        return Ok(Program::default());
    }

    // An outer `[ ... ]` wrapper around the whole list is optional; it is
    // recognized by `[` followed by another `[` (or immediately closed).
    let wrapped = p.peek() == Some(&Tok::LBracket)
        && matches!(p.peek2(), Some(Tok::LBracket) | Some(Tok::RBracket));
    if wrapped {
        p.pos += 1;
        p.skip_seps();
    }

    let mut steps = Vec::new();
    loop {
        match p.peek() {
            None => break,
            Some(Tok::RBracket) if wrapped => break,
            _ => {}
        }
        steps.push(p.parse_step()?);
        let saw_sep = p.peek() == Some(&Tok::Sep);
        p.skip_seps();
        if !saw_sep {
            break;
        }
    }

    if wrapped {
        p.expect(Tok::RBracket, "`]` closing the program list")?;
        p.skip_seps();
    }
    if p.peek().is_some() {
        return Err(p.err("separator or end of input"));
    }
    Ok(Program { steps })
}

/// Formats a program in canonical form: one step per line, exactly
/// `[Verb] <name> (id)` spacing, no outer brackets. The empty program
/// formats to the empty string.
pub fn format_program(p: &Program) -> String {
    p.steps
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// A step argument that does not name an existing (name, id) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingError {
    pub step_index: usize,
    pub arg_index: usize,
    pub name: String,
    pub id: u32,
    pub reason: BindingErrorReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BindingErrorReason {
    /// No object with this id exists in the scene.
    NoSuchId,
    /// The object with this id has a different class name.
    NameMismatch { actual: String },
}

/// Checks every argument of every step against the scene graph without
/// executing anything. An empty result means all bindings resolve.
pub fn validate_against(p: &Program, world: &SceneGraph) -> Vec<BindingError> {
    let mut errors = Vec::new();
    for (step_index, step) in p.steps.iter().enumerate() {
        for (arg_index, arg) in step.args.iter().enumerate() {
            match world.objects.get(&arg.id) {
                None => errors.push(BindingError {
                    step_index,
                    arg_index,
                    name: arg.name.clone(),
                    id: arg.id,
                    reason: BindingErrorReason::NoSuchId,
                }),
                Some(obj) if obj.class != arg.name => errors.push(BindingError {
                    step_index,
                    arg_index,
                    name: arg.name.clone(),
                    id: arg.id,
                    reason: BindingErrorReason::NameMismatch { actual: obj.class.clone() },
                }),
                Some(_) => {}
            }
        }
    }
    errors
}

/// Token string for a verb, e.g. `[Walk]`.
pub fn verb_token(verb: Verb) -> String {
    format!("[{}]", verb.canonical())
}

/// Token string for an object name, e.g. `<fridge>`.
pub fn name_token(name: &str) -> String {
    format!("<{name}>")
}

/// Token string for an object id. Ids above `max_id` collapse to the
/// unknown-id token `(?)` so the decoder vocabulary stays closed.
pub fn id_token(id: u32, max_id: u32) -> String {
    if id > max_id {
        "(?)".to_string()
    } else {
        format!("({id})")
    }
}

/// The unknown-id token produced for out-of-range ids.
pub const UNK_ID_TOKEN: &str = "(?)";

/// Default ceiling for representable object ids in token form.
pub const DEFAULT_MAX_ID: u32 = 8;

/// Serializes one step to its token form: verb token, then name/id token
/// pairs in argument order.
pub fn step_to_tokens(step: &ActionStep, max_id: u32) -> Vec<String> {
    let mut toks = vec![verb_token(step.verb)];
    for arg in &step.args {
        toks.push(name_token(&arg.name));
        toks.push(id_token(arg.id, max_id));
    }
    toks
}

/// Why a decoded token sequence does not form a well-shaped step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenShapeError {
    Empty,
    NotAVerb { found: String },
    ExpectedName { found: String },
    ExpectedId { found: String },
    UnknownId,
    TrailingTokens { count: usize },
}

/// Parses a decoded token sequence back into an [`ActionStep`].
///
/// The sequence must be exactly `[Verb]` followed by the verb's arity of
/// `<name>` `(id)` pairs. Any deviation is reported, not panicked on:
/// malformed model output is data.
pub fn step_from_tokens(tokens: &[String]) -> Result<ActionStep, TokenShapeError> {
    let mut it = tokens.iter();
    let head = it.next().ok_or(TokenShapeError::Empty)?;
    let verb = head
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .and_then(Verb::from_ident)
        .ok_or_else(|| TokenShapeError::NotAVerb { found: head.clone() })?;

    let mut args = Vec::new();
    for _ in 0..verb.arity() {
        let name_tok = it
            .next()
            .ok_or_else(|| TokenShapeError::ExpectedName { found: "end of sequence".into() })?;
        let name = name_tok
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .ok_or_else(|| TokenShapeError::ExpectedName { found: name_tok.clone() })?;
        let id_tok = it
            .next()
            .ok_or_else(|| TokenShapeError::ExpectedId { found: "end of sequence".into() })?;
        if id_tok == UNK_ID_TOKEN {
            return Err(TokenShapeError::UnknownId);
        }
        let id = id_tok
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .and_then(|s| s.parse::<u32>().ok())
            .filter(|&id| id >= 1)
            .ok_or_else(|| TokenShapeError::ExpectedId { found: id_tok.clone() })?;
        args.push(ScriptArg { name: name.to_string(), id });
    }
    let rest = it.count();
    if rest > 0 {
        return Err(TokenShapeError::TrailingTokens { count: rest });
    }
    Ok(ActionStep { verb, args })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_step() {
        let p = parse_program("[Walk] <groceries> (1)").unwrap();
        assert_eq!(p.steps, vec![ActionStep::unary(Verb::Walk, "groceries", 1)]);
    }

    #[test]
    fn empty_input_is_empty_program() {
        assert_eq!(parse_program("").unwrap(), Program::default());
        assert_eq!(parse_program("  \n \n").unwrap(), Program::default());
    }

    #[test]
    fn missing_id_group_is_an_error() {
        let err = parse_program("[Grab] <cup>").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::WrongArity { verb: Verb::Grab, expected: 1, found: 0 })
            || matches!(err.kind, ParseErrorKind::Unexpected { .. }));
    }

    #[test]
    fn outer_brackets_and_commas() {
        let text = "[[Walk] <groceries> (1), [Grab] <groceries> (1), [Close] <fridge> (2)]";
        let p = parse_program(text).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.steps[2], ActionStep::unary(Verb::Close, "fridge", 2));
    }

    #[test]
    fn two_argument_step() {
        let p = parse_program("[PutIn] <groceries> (1) <fridge> (2)").unwrap();
        assert_eq!(
            p.steps,
            vec![ActionStep::binary(Verb::PutIn, "groceries", 1, "fridge", 2)]
        );
    }

    #[test]
    fn verbs_match_case_insensitively() {
        let p = parse_program("[walk] <sofa> (3)\n[STANDUP]").unwrap();
        assert_eq!(p.steps[0].verb, Verb::Walk);
        assert_eq!(p.steps[1].verb, Verb::StandUp);
    }

    #[test]
    fn unknown_verb_is_positioned() {
        let err = parse_program("[Walk] <sofa> (3)\n[Fly] <sofa> (3)").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::UnknownVerb { found: "Fly".into() });
    }

    #[test]
    fn wrong_arity_reported() {
        let err = parse_program("[StandUp] <chair> (1)").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::WrongArity { verb: Verb::StandUp, expected: 0, found: 1 }
        );
    }

    #[test]
    fn id_zero_rejected() {
        let err = parse_program("[Walk] <sofa> (0)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unexpected { .. }));
    }

    #[test]
    fn formats_canonically() {
        let p = Program::new(vec![ActionStep::unary(Verb::Close, "fridge", 1)]);
        assert_eq!(format_program(&p), "[Close] <fridge> (1)");
        assert_eq!(format_program(&Program::default()), "");
    }

    #[test]
    fn token_round_trip_for_steps() {
        let step = ActionStep::binary(Verb::PutOn, "cup", 3, "table", 4);
        let toks = step_to_tokens(&step, DEFAULT_MAX_ID);
        assert_eq!(toks, vec!["[PutOn]", "<cup>", "(3)", "<table>", "(4)"]);
        assert_eq!(step_from_tokens(&toks).unwrap(), step);
    }

    #[test]
    fn oversized_id_becomes_unknown_token() {
        let step = ActionStep::unary(Verb::Walk, "fridge", 999);
        let toks = step_to_tokens(&step, DEFAULT_MAX_ID);
        assert_eq!(toks[2], UNK_ID_TOKEN);
        assert_eq!(step_from_tokens(&toks), Err(TokenShapeError::UnknownId));
    }

    #[test]
    fn malformed_token_shapes() {
        let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(step_from_tokens(&toks(&[])), Err(TokenShapeError::Empty));
        assert!(matches!(
            step_from_tokens(&toks(&["<cup>"])),
            Err(TokenShapeError::NotAVerb { .. })
        ));
        assert!(matches!(
            step_from_tokens(&toks(&["[Grab]"])),
            Err(TokenShapeError::ExpectedName { .. })
        ));
        assert!(matches!(
            step_from_tokens(&toks(&["[StandUp]", "<cup>"])),
            Err(TokenShapeError::TrailingTokens { .. })
        ));
    }

    fn arb_verb() -> impl Strategy<Value = Verb> {
        prop::sample::select(Verb::ALL.to_vec())
    }

    fn arb_step() -> impl Strategy<Value = ActionStep> {
        (arb_verb(), prop::collection::vec(("[a-z][a-z_]{0,8}", 1u32..999), 2)).prop_map(
            |(verb, raw)| {
                let args = raw
                    .into_iter()
                    .take(verb.arity())
                    .map(|(name, id)| ScriptArg { name, id })
                    .collect();
                ActionStep { verb, args }
            },
        )
    }

    proptest! {
        /// parse . format is the identity on valid programs.
        #[test]
        fn format_parse_round_trip(steps in prop::collection::vec(arb_step(), 0..12)) {
            let p = Program::new(steps);
            let text = format_program(&p);
            prop_assert_eq!(parse_program(&text).unwrap(), p);
        }

        /// Canonicalization is idempotent on anything parseable.
        #[test]
        fn canonicalization_idempotent(steps in prop::collection::vec(arb_step(), 0..8)) {
            let messy = {
                let p = Program::new(steps);
                // re-render with commas and scattered whitespace
                let parts: Vec<String> = p.steps.iter().map(|s| {
                    let mut t = format!("[ {} ]", s.verb.canonical().to_ascii_uppercase());
                    // lexer treats `[ Walk ]` as LBracket Ident RBracket, fine
                    for a in &s.args {
                        t.push_str(&format!("  <{}>   ({})", a.name, a.id));
                    }
                    t
                }).collect();
                parts.join(" ,\n ")
            };
            let once = format_program(&parse_program(&messy).unwrap());
            let twice = format_program(&parse_program(&once).unwrap());
            prop_assert_eq!(once, twice);
        }

        /// The parser never panics: every input yields a program or an error.
        #[test]
        fn parser_totality(text in ".{0,200}") {
            let _ = parse_program(&text);
        }
    }
}
