//! Tabular autoregressive categorical policy.
//!
//! The next-token distribution is a softmax over a row of logits selected by a
//! [`Context`]: the last `order` tokens of the running sequence
//! (question ++ thinking so far), left-padded with BOS, optionally preceded by
//! the *aligned question token*: the question token whose index equals the
//! number of thinking tokens produced so far (PAD once the question is
//! exhausted). Rows that were never written are all-zero, i.e. uniform.
//!
//! Every logit is an independent parameter, so log-probabilities and their
//! derivatives are exact.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tasks::{parse_tokens, Token, Vocab};

pub const MAX_CONTEXT: usize = 15;

/// Default context order.
pub const DEFAULT_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub order: usize,
    pub aligned_read: bool,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            aligned_read: true,
        }
    }
}

impl PolicyShape {
    pub fn validate(&self) -> Result<()> {
        let width = self.order + usize::from(self.aligned_read);
        if self.order == 0 || width > MAX_CONTEXT {
            return Err(Error::invalid(format!(
                "policy order {} (aligned_read={}) outside 1..={MAX_CONTEXT}",
                self.order, self.aligned_read
            )));
        }
        Ok(())
    }
}

/// Key of one logit row.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    len: u8,
    toks: [u8; MAX_CONTEXT],
}

impl Context {
    pub fn from_tokens(tokens: &[Token]) -> Self {
        assert!(tokens.len() <= MAX_CONTEXT, "context too long");
        let mut toks = [0u8; MAX_CONTEXT];
        for (slot, t) in toks.iter_mut().zip(tokens) {
            *slot = t.0;
        }
        Self {
            len: tokens.len() as u8,
            toks,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.toks[..self.len as usize].iter().map(|&t| Token(t))
    }
}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.tokens().map(|t| t.to_string()).collect();
        write!(f, "Context[{}]", parts.join(" "))
    }
}

/// Dense per-row values over the touched contexts; used both for gradients
/// and for raw logit tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    rows: BTreeMap<Context, Vec<f64>>,
    width: usize,
}

impl Gradient {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            rows: BTreeMap::new(),
            width: vocab_size,
        }
    }

    pub fn row_mut(&mut self, ctx: Context) -> &mut [f64] {
        let width = self.width;
        self.rows.entry(ctx).or_insert_with(|| vec![0.0; width])
    }

    pub fn get(&self, ctx: &Context, symbol: usize) -> f64 {
        self.rows.get(ctx).map_or(0.0, |r| r[symbol])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Context, &[f64])> {
        self.rows.iter().map(|(c, r)| (c, r.as_slice()))
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.rows.keys()
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (ctx, row) in &other.rows {
            for (a, b) in self.row_mut(*ctx).iter_mut().zip(row) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flat_map(|r| r.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    shape: PolicyShape,
    vocab_size: usize,
    logits: BTreeMap<Context, Vec<f64>>,
    step_count: u64,
}

/// Sampled continuation and the policy's log-probability of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

impl Policy {
    pub fn new(shape: PolicyShape, vocab_size: usize) -> Result<Self> {
        shape.validate()?;
        if vocab_size == 0 || vocab_size > Vocab::MAX_SIZE {
            return Err(Error::invalid(format!("vocab size {vocab_size}")));
        }
        Ok(Self {
            shape,
            vocab_size,
            logits: BTreeMap::new(),
            step_count: 0,
        })
    }

    /// Uniform policy over the standard vocabulary.
    pub fn standard(shape: PolicyShape) -> Result<Self> {
        Self::new(shape, Vocab::standard().size())
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Number of materialized rows.
    pub fn num_contexts(&self) -> usize {
        self.logits.len()
    }

    /// Context for the next thinking token after `thinking` tokens.
    pub fn context(&self, question: &[Token], thinking: &[Token]) -> Context {
        let mut toks = [Token::BOS; MAX_CONTEXT];
        let mut n = 0;
        if self.shape.aligned_read {
            toks[0] = question.get(thinking.len()).copied().unwrap_or(Token::PAD);
            n = 1;
        }
        let total = question.len() + thinking.len();
        for k in (1..=self.shape.order).rev() {
            toks[n] = if k > total {
                Token::BOS
            } else {
                let i = total - k;
                if i < question.len() {
                    question[i]
                } else {
                    thinking[i - question.len()]
                }
            };
            n += 1;
        }
        Context::from_tokens(&toks[..n])
    }

    pub fn logit(&self, ctx: &Context, symbol: usize) -> f64 {
        self.logits.get(ctx).map_or(0.0, |r| r[symbol])
    }

    pub fn set_logit(&mut self, ctx: Context, symbol: usize, value: f64) {
        let v = self.vocab_size;
        self.logits.entry(ctx).or_insert_with(|| vec![0.0; v])[symbol] = value;
    }

    pub fn logits_row(&self, ctx: &Context) -> Vec<f64> {
        self.logits
            .get(ctx)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.vocab_size])
    }

    pub fn log_probs_row(&self, ctx: &Context) -> Vec<f64> {
        match self.logits.get(ctx) {
            Some(row) => log_softmax(row),
            None => vec![-(self.vocab_size as f64).ln(); self.vocab_size],
        }
    }

    pub fn probs_row(&self, ctx: &Context) -> Vec<f64> {
        self.log_probs_row(ctx).into_iter().map(f64::exp).collect()
    }

    fn check_token(&self, t: Token) -> Result<()> {
        if t.index() < self.vocab_size {
            Ok(())
        } else {
            Err(Error::UnknownToken(t.0))
        }
    }

    /// Autoregressively samples up to `max_new` tokens after `question ++
    /// prefix`, stopping after EOS. Temperature 0 is greedy decoding with ties
    /// broken toward the lowest symbol index. Recorded log-probabilities are
    /// those of the policy itself (temperature 1).
    pub fn sample_tokens(
        &self,
        question: &[Token],
        prefix: &[Token],
        max_new: usize,
        temperature: f64,
        stream: RngStream,
    ) -> Result<Sample> {
        if max_new == 0 {
            return Err(Error::invalid("max_new must be at least 1"));
        }
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(Error::invalid(format!("temperature {temperature} must be finite and >= 0")));
        }
        let mut rng = stream.rng();
        let mut thinking = prefix.to_vec();
        let mut out = Sample {
            tokens: Vec::new(),
            logprobs: Vec::new(),
        };
        for _ in 0..max_new {
            let ctx = self.context(question, &thinking);
            let lp = self.log_probs_row(&ctx);
            let symbol = if temperature == 0.0 {
                let mut best = 0;
                for (i, v) in lp.iter().enumerate() {
                    if *v > lp[best] {
                        best = i;
                    }
                }
                best
            } else {
                let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = lp.iter().map(|v| ((v - max) / temperature).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            };
            let tok = Token(symbol as u8);
            thinking.push(tok);
            out.tokens.push(tok);
            out.logprobs.push(lp[symbol]);
            if tok == Token::EOS {
                break;
            }
        }
        Ok(out)
    }

    /// Teacher-forced log-probabilities of `tokens` following `question ++ prefix`.
    pub fn sequence_log_probs(&self, question: &[Token], prefix: &[Token], tokens: &[Token]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::invalid("tokens must be nonempty"));
        }
        let mut thinking = prefix.to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            self.check_token(t)?;
            let ctx = self.context(question, &thinking);
            out.push(self.log_probs_row(&ctx)[t.index()]);
            thinking.push(t);
        }
        Ok(out)
    }

    /// Contexts visited while teacher-forcing `tokens` after `question`.
    pub fn contexts_along(&self, question: &[Token], tokens: &[Token]) -> Vec<Context> {
        (0..tokens.len())
            .map(|t| self.context(question, &tokens[..t]))
            .collect()
    }

    /// `logits -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &Gradient, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::invalid(format!("learning rate {lr} must be finite and > 0")));
        }
        if !grad.is_finite() {
            return Err(Error::invalid("gradient has non-finite entries"));
        }
        if grad.width != self.vocab_size && !grad.rows.is_empty() {
            return Err(Error::invalid("gradient width does not match vocabulary"));
        }
        let v = self.vocab_size;
        for (ctx, g) in &grad.rows {
            let row = self.logits.entry(*ctx).or_insert_with(|| vec![0.0; v]);
            for (l, d) in row.iter_mut().zip(g) {
                *l -= lr * d;
            }
        }
        self.step_count += 1;
        Ok(())
    }

    /// Gradient of the summed negative log-likelihood of `tokens` after `question`.
    pub fn nll_gradient(&self, question: &[Token], tokens: &[Token]) -> Result<Gradient> {
        let mut grad = Gradient::new(self.vocab_size);
        for (t, &tok) in tokens.iter().enumerate() {
            self.check_token(tok)?;
            let ctx = self.context(question, &tokens[..t]);
            let probs = self.probs_row(&ctx);
            let row = grad.row_mut(ctx);
            for (v, p) in probs.iter().enumerate() {
                row[v] += p - if v == tok.index() { 1.0 } else { 0.0 };
            }
        }
        Ok(grad)
    }

    pub fn snapshot(&self, role: SnapshotRole) -> PolicySnapshot {
        PolicySnapshot {
            role,
            params: Arc::new(self.clone()),
        }
    }

    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_records(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Header line, then one `context<TAB>symbol<TAB>logit` record per entry.
    /// Logits use the shortest round-trip decimal form, so reading back is exact.
    pub fn write_records(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "#policy order={} aligned_read={} vocab={} steps={}",
            self.shape.order, self.shape.aligned_read, self.vocab_size, self.step_count
        )?;
        for (ctx, row) in &self.logits {
            let ctx_text: Vec<String> = ctx.tokens().map(|t| t.to_string()).collect();
            let ctx_text = ctx_text.join(" ");
            for (sym, v) in row.iter().enumerate() {
                writeln!(w, "{ctx_text}\t{sym}\t{v:?}")?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_records(BufReader::new(file))
    }

    pub fn read_records(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty checkpoint".into(),
        })?;
        let header = header.map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        let mut shape = PolicyShape::default();
        let mut vocab = 0;
        let mut steps = 0;
        let body = header.strip_prefix("#policy").ok_or(Error::Parse {
            line: 1,
            msg: "missing #policy header".into(),
        })?;
        for kv in body.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or(Error::Parse {
                line: 1,
                msg: format!("bad header field {kv:?}"),
            })?;
            let bad = |e: &dyn fmt::Display| Error::Parse {
                line: 1,
                msg: format!("{k}: {e}"),
            };
            match k {
                "order" => shape.order = v.parse().map_err(|e| bad(&e))?,
                "aligned_read" => shape.aligned_read = v.parse().map_err(|e| bad(&e))?,
                "vocab" => vocab = v.parse().map_err(|e| bad(&e))?,
                "steps" => steps = v.parse().map_err(|e| bad(&e))?,
                _ => return Err(bad(&"unknown header field")),
            }
        }
        let mut policy = Policy::new(shape, vocab)?;
        policy.step_count = steps;
        let width = shape.order + usize::from(shape.aligned_read);
        for (i, line) in lines {
            let lineno = i + 1;
            let err = |msg: String| Error::Parse { line: lineno, msg };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let ctx_tokens = parse_tokens(fields[0]).map_err(|e| err(e.to_string()))?;
            if ctx_tokens.len() != width {
                return Err(err(format!("context width {} != {width}", ctx_tokens.len())));
            }
            let sym: usize = fields[1].parse().map_err(|e| err(format!("{e}")))?;
            if sym >= vocab {
                return Err(err(format!("symbol {sym} outside vocabulary")));
            }
            let value: f64 = fields[2].parse().map_err(|e| err(format!("{e}")))?;
            if !value.is_finite() {
                return Err(err("non-finite logit".into()));
            }
            policy.set_logit(Context::from_tokens(&ctx_tokens), sym, value);
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotRole {
    Old,
    Ref,
}

/// Frozen copy of a policy. Cloning shares the underlying parameters.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    role: SnapshotRole,
    params: Arc<Policy>,
}

impl PolicySnapshot {
    pub fn role(&self) -> SnapshotRole {
        self.role
    }

    pub fn policy(&self) -> &Policy {
        &self.params
    }
}

impl std::ops::Deref for PolicySnapshot {
    type Target = Policy;

    fn deref(&self) -> &Policy {
        &self.params
    }
}
