//! Token-level edit attacks: random insertion, deletion, substitution at a
//! fixed proportion of sequence length.
//!
//! Tokenization here is whitespace splitting, a deliberately dependency-free
//! stand-in for a subword tokenizer; the edit semantics over the token
//! sequence are identical either way. Every attack is deterministic given
//! its seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edit operation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Insert,
    Delete,
    Substitute,
}

impl EditKind {
    fn name(self) -> &'static str {
        match self {
            EditKind::Insert => "insert",
            EditKind::Delete => "delete",
            EditKind::Substitute => "substitute",
        }
    }
}

impl std::fmt::Display for EditKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// One attack configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditAttackSpec {
    pub kind: EditKind,
    /// Fraction of tokens to edit; the realized count is
    /// `max(1, floor(rate * n))`.
    pub rate: f64,
    /// Candidate tokens for insert/substitute draws.
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl EditAttackSpec {
    fn validate(&self, n_tokens: usize) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "edit rate must be in (0, 1), got {}",
                self.rate
            )));
        }
        match self.kind {
            EditKind::Delete | EditKind::Substitute if n_tokens == 0 => Err(Error::EmptyTokens {
                kind: self.kind.name(),
            }),
            EditKind::Insert | EditKind::Substitute if self.vocabulary.is_empty() => {
                Err(Error::EmptyVocabulary {
                    kind: self.kind.name(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Split on maximal whitespace runs.
pub fn tokenize_ws(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Join tokens with single spaces; the round trip through
/// [`tokenize_ws`] normalizes whitespace only.
pub fn detokenize_ws(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Number of edits for a sequence of `n` tokens: at least one, so an attack
/// is never a no-op. The tiny nudge keeps `rate * n` products that are
/// integers in exact arithmetic from flooring one short.
fn edit_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64 + 1e-9).floor() as usize).max(1)
}

/// Apply one edit attack to a token sequence.
///
/// Positions are sampled uniformly without replacement. Insertion grows the
/// sequence by `m` (gap positions in `[0, n]`), deletion shrinks it by `m`
/// capped at `n - 1` so the output stays non-empty, substitution preserves
/// length and may redraw the original token.
pub fn apply_edit_attack(tokens: &[String], spec: &EditAttackSpec) -> Result<Vec<String>> {
    let n = tokens.len();
    spec.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = edit_count(spec.rate, n);

    let draw = |rng: &mut ChaCha8Rng| -> String {
        spec.vocabulary[rng.gen_range(0..spec.vocabulary.len())].clone()
    };

    match spec.kind {
        EditKind::Insert => {
            let mut gaps = rand::seq::index::sample(&mut rng, n + 1, m).into_vec();
            gaps.sort_unstable_by(|a, b| b.cmp(a));
            let mut out = tokens.to_vec();
            for gap in gaps {
                let token = draw(&mut rng);
                out.insert(gap, token);
            }
            Ok(out)
        }
        EditKind::Delete => {
            let m = m.min(n - 1);
            let mut positions = rand::seq::index::sample(&mut rng, n, m).into_vec();
            positions.sort_unstable_by(|a, b| b.cmp(a));
            let mut out = tokens.to_vec();
            for pos in positions {
                out.remove(pos);
            }
            Ok(out)
        }
        EditKind::Substitute => {
            let mut positions = rand::seq::index::sample(&mut rng, n, m).into_vec();
            positions.sort_unstable();
            let mut out = tokens.to_vec();
            for pos in positions {
                out[pos] = draw(&mut rng);
            }
            Ok(out)
        }
    }
}
