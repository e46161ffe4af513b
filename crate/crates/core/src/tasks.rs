//! Synthetic, rule-verifiable tasks.
//!
//! Two task families are provided:
//!
//! * `chain_sum_mod10`: the question is `x1+x2+...+xn=` with `n = tier + 1`
//!   operands. The reasoning trace lists the running sums modulo ten, one per
//!   step and `;`-terminated (`3;7;2;` for `3+4+5=`), and the answer is
//!   `=s EOS` where `s` is the final running sum.
//! * `copy`: the question is a payload of `tier` digits followed by `|`. The
//!   trace is the first half of the echoed payload and the answer is
//!   `=payload EOS`.
//!
//! Rewards are binary and depend only on the final answer segment.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const MIN_TIER: u8 = 1;
pub const MAX_TIER: u8 = 5;

/// A vocabulary symbol, stored as its index in [`Vocab::standard`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(pub u8);

impl Token {
    pub const PLUS: Token = Token(10);
    pub const EQ: Token = Token(11);
    pub const SEP: Token = Token(12);
    pub const BAR: Token = Token(13);
    pub const BOS: Token = Token(14);
    pub const EOS: Token = Token(15);
    pub const PAD: Token = Token(16);

    pub fn digit(d: u8) -> Token {
        assert!(d < 10, "digit out of range: {d}");
        Token(d)
    }

    pub fn as_digit(self) -> Option<u8> {
        (self.0 < 10).then_some(self.0)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const STANDARD_SYMBOLS: [&str; 17] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "=", ";", "|", "BOS", "EOS", "PAD",
];

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match STANDARD_SYMBOLS.get(self.index()) {
            Some(s) => f.write_str(s),
            None => write!(f, "<{}>", self.0),
        }
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        STANDARD_SYMBOLS
            .iter()
            .position(|sym| *sym == s)
            .map(|i| Token(i as u8))
            .ok_or_else(|| Error::invalid(format!("unknown token text {s:?}")))
    }
}

/// Ordered token alphabet shared by questions, traces and completions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
}

impl Vocab {
    pub const MAX_SIZE: usize = 32;

    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() || symbols.len() > Self::MAX_SIZE {
            return Err(Error::invalid(format!(
                "vocabulary size {} outside 1..={}",
                symbols.len(),
                Self::MAX_SIZE
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::invalid(format!("duplicate symbol {s:?}")));
            }
        }
        if !symbols.iter().any(|s| s == "EOS") {
            return Err(Error::invalid("vocabulary must contain EOS"));
        }
        Ok(Self { symbols })
    }

    /// Digits, `+ = ; |`, then BOS, EOS and PAD.
    pub fn standard() -> Self {
        Self {
            symbols: STANDARD_SYMBOLS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn contains(&self, token: Token) -> bool {
        token.index() < self.size()
    }
}

pub fn format_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_tokens(s: &str) -> Result<Vec<Token>> {
    s.split_whitespace().map(Token::from_str).collect()
}

/// Compact rendering without spaces, e.g. `3+4+5=`.
pub fn render(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    ChainSumMod10,
    Copy,
}

impl TaskKind {
    /// Operand count (chain sum) or payload length (copy) for a tier.
    pub fn size_for_tier(self, tier: u8) -> usize {
        match self {
            TaskKind::ChainSumMod10 => tier as usize + 1,
            TaskKind::Copy => tier as usize,
        }
    }

    /// Longest trace any prompt of this kind can carry.
    pub fn max_trace_len(self) -> usize {
        match self {
            TaskKind::ChainSumMod10 => 2 * self.size_for_tier(MAX_TIER),
            TaskKind::Copy => self.size_for_tier(MAX_TIER) / 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ChainSumMod10 => "chain_sum_mod10",
            TaskKind::Copy => "copy",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain_sum_mod10" | "chain_sum" => Ok(TaskKind::ChainSumMod10),
            "copy" => Ok(TaskKind::Copy),
            other => Err(Error::invalid(format!("unknown task kind {other:?}"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub id: u64,
    pub tier: u8,
    pub question: Vec<Token>,
    pub trace: Vec<Token>,
    pub answer: Vec<Token>,
}

impl Prompt {
    /// Tokens after the last `=` of the answer, up to its EOS.
    pub fn answer_payload(&self) -> &[Token] {
        final_segment(&self.answer).unwrap_or(&[])
    }

    /// The trace followed by the answer: a completion the verifier accepts.
    pub fn reference_completion(&self) -> Vec<Token> {
        let mut out = self.trace.clone();
        out.extend_from_slice(&self.answer);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.is_empty() {
            return Err(Error::invalid(format!("prompt {}: empty question", self.id)));
        }
        if self.answer.last() != Some(&Token::EOS) {
            return Err(Error::invalid(format!(
                "prompt {}: answer must end with EOS",
                self.id
            )));
        }
        if self.trace.contains(&Token::EOS) {
            return Err(Error::invalid(format!("prompt {}: trace contains EOS", self.id)));
        }
        if !(MIN_TIER..=MAX_TIER).contains(&self.tier) {
            return Err(Error::invalid(format!(
                "prompt {}: tier {} outside [{MIN_TIER},{MAX_TIER}]",
                self.id, self.tier
            )));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.id,
            self.tier,
            format_tokens(&self.question),
            format_tokens(&self.trace),
            format_tokens(&self.answer)
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::invalid(format!(
                "expected 5 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let id = fields[0]
            .parse()
            .map_err(|e| Error::invalid(format!("bad id {:?}: {e}", fields[0])))?;
        let tier = fields[1]
            .parse()
            .map_err(|e| Error::invalid(format!("bad tier {:?}: {e}", fields[1])))?;
        let prompt = Prompt {
            id,
            tier,
            question: parse_tokens(fields[2])?,
            trace: parse_tokens(fields[3])?,
            answer: parse_tokens(fields[4])?,
        };
        prompt.validate()?;
        Ok(prompt)
    }
}

/// Tokens after the last `=` and before the first EOS, if both exist.
fn final_segment(tokens: &[Token]) -> Option<&[Token]> {
    let eos = tokens.iter().position(|&t| t == Token::EOS)?;
    let body = &tokens[..eos];
    let eq = body.iter().rposition(|&t| t == Token::EQ)?;
    Some(&body[eq + 1..])
}

/// Binary outcome reward: 1 iff the completion's final answer segment equals
/// the prompt's answer payload. Anything before the last `=` is ignored.
pub fn verify(prompt: &Prompt, completion: &[Token]) -> f64 {
    match final_segment(completion) {
        Some(seg) if seg == prompt.answer_payload() => 1.0,
        _ => 0.0,
    }
}

pub fn trace_of(prompt: &Prompt) -> &[Token] {
    &prompt.trace
}

fn make_prompt(kind: TaskKind, tier: u8, id: u64, rng: &mut impl Rng) -> Prompt {
    let n = kind.size_for_tier(tier);
    let digits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..10)).collect();
    match kind {
        TaskKind::ChainSumMod10 => {
            let mut question = Vec::with_capacity(2 * n);
            let mut trace = Vec::with_capacity(2 * n);
            let mut sum = 0u8;
            for (i, &d) in digits.iter().enumerate() {
                question.push(Token::digit(d));
                question.push(if i + 1 == n { Token::EQ } else { Token::PLUS });
                sum = (sum + d) % 10;
                trace.push(Token::digit(sum));
                trace.push(Token::SEP);
            }
            Prompt {
                id,
                tier,
                question,
                trace,
                answer: vec![Token::EQ, Token::digit(sum), Token::EOS],
            }
        }
        TaskKind::Copy => {
            let payload: Vec<Token> = digits.iter().map(|&d| Token::digit(d)).collect();
            let mut question = payload.clone();
            question.push(Token::BAR);
            let mut answer = vec![Token::EQ];
            answer.extend_from_slice(&payload);
            answer.push(Token::EOS);
            Prompt {
                id,
                tier,
                question,
                trace: payload[..n / 2].to_vec(),
                answer,
            }
        }
    }
}

/// `count` prompts of a single tier with ids starting at `first_id`.
pub fn generate_tier(kind: TaskKind, tier: u8, count: usize, seed: u64, first_id: u64) -> Vec<Prompt> {
    let stream = RngStream::new(seed).derive(kind as u64).derive(tier as u64);
    (0..count as u64)
        .map(|i| {
            let id = first_id + i;
            make_prompt(kind, tier, id, &mut stream.derive(id).rng())
        })
        .collect()
}

/// `per_tier` prompts at every tier, ordered by tier, ids `0..5*per_tier`.
pub fn generate_dataset(kind: TaskKind, per_tier: usize, seed: u64) -> Result<Vec<Prompt>> {
    if per_tier == 0 {
        return Err(Error::invalid("per_tier must be at least 1"));
    }
    let mut out = Vec::with_capacity(per_tier * MAX_TIER as usize);
    for tier in MIN_TIER..=MAX_TIER {
        let first_id = out.len() as u64;
        out.extend(generate_tier(kind, tier, per_tier, seed, first_id));
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, prompts: &[Prompt]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in prompts {
        writeln!(w, "{}", p.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Prompt>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Prompt::from_line(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
