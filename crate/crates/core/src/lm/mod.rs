//! The next-token-probability contract all decoders consume.
//!
//! Decoders treat tokens opaquely: they work over whatever unit the model
//! emits, identified by dense ids. The built-in [`NGramModel`] tokenizes on
//! whitespace with the structural tags and `;` as standalone tokens; a
//! [`RemoteModel`] forwards contexts to an HTTP endpoint serving its own
//! tokenizer's units.

mod ngram;
mod remote;

pub use ngram::{NGramModel, Vocabulary};
pub use remote::RemoteModel;

use crate::corpus::TAGS;
use thiserror::Error;

pub type TokenId = u32;

/// Distributions must sum to one within this.
pub const DIST_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("transport error for endpoint {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("malformed response from {endpoint}: {message}")]
    MalformedResponse { endpoint: String, message: String },
    #[error("token id {0} has no probability in the model's support")]
    TokenNotInSupport(TokenId),
    #[error("model file error: {0}")]
    ModelFile(String),
}

/// Probability mass over next tokens given a context.
///
/// Invariants: probabilities strictly positive, token ids unique, total mass
/// within `1e-9` of one.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub support: Vec<(TokenId, f64)>,
}

impl TokenDistribution {
    pub fn new(support: Vec<(TokenId, f64)>) -> Result<Self, LmError> {
        let dist = TokenDistribution { support };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.support.is_empty() {
            return Err(LmError::InvalidDistribution("empty support".into()));
        }
        let mut sum = 0.0;
        let mut seen = std::collections::HashSet::new();
        for &(id, p) in &self.support {
            if !(p > 0.0) || !p.is_finite() {
                return Err(LmError::InvalidDistribution(format!(
                    "probability {p} for token {id} is not strictly positive"
                )));
            }
            if !seen.insert(id) {
                return Err(LmError::InvalidDistribution(format!(
                    "duplicate token id {id}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
            return Err(LmError::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(())
    }

    /// Rescales the support to sum to one.
    pub fn renormalized(mut self) -> Self {
        let sum: f64 = self.support.iter().map(|&(_, p)| p).sum();
        for (_, p) in &mut self.support {
            *p /= sum;
        }
        self
    }

    pub fn prob(&self, id: TokenId) -> Option<f64> {
        self.support.iter().find(|&&(t, _)| t == id).map(|&(_, p)| p)
    }

    /// Inverse-CDF sample in support order; deterministic for a fixed RNG
    /// stream.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> TokenId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(id, p) in &self.support {
            acc += p;
            if u < acc {
                return id;
            }
        }
        self.support.last().expect("non-empty support").0
    }
}

/// Next-token-probability contract. Implementations are immutable after
/// construction and safe to query concurrently.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Id for a token string; unknown strings map to the unknown token (or
    /// are interned, for models that own an open vocabulary).
    fn token_id(&self, token: &str) -> TokenId;

    fn token_str(&self, id: TokenId) -> String;

    /// Splits text into this model's token units.
    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&id| self.token_str(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Full-support distribution for the next token; deterministic for a
    /// fixed model and context.
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError>;

    /// Top-k tokens renormalized to sum to one, used as expansion priors.
    fn top_k_priors(&self, context: &[TokenId], k: usize) -> Result<TokenDistribution, LmError> {
        let dist = self.next_token_distribution(context)?;
        let mut support = dist.support;
        support.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        support.truncate(k.max(1));
        Ok(TokenDistribution { support }.renormalized())
    }

    /// Log-probability of each token at positions `>= prompt_len`, feeding
    /// the perplexity metric.
    fn sequence_log_probs(
        &self,
        tokens: &[TokenId],
        prompt_len: usize,
    ) -> Result<Vec<f64>, LmError> {
        let mut out = Vec::with_capacity(tokens.len().saturating_sub(prompt_len));
        for i in prompt_len..tokens.len() {
            let dist = self.next_token_distribution(&tokens[..i])?;
            let p = dist
                .prob(tokens[i])
                .ok_or(LmError::TokenNotInSupport(tokens[i]))?;
            out.push(p.ln());
        }
        Ok(out)
    }
}

/// Whitespace tokenization with the six structural tags and `;` split out as
/// standalone tokens.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest = text;
    'outer: while !rest.is_empty() {
        // earliest structural marker
        let mut earliest: Option<(usize, &str)> = None;
        for tag in TAGS.iter().copied().chain(std::iter::once(";")) {
            if let Some(at) = rest.find(tag) {
                if earliest.map_or(true, |(best, _)| at < best) {
                    earliest = Some((at, tag));
                }
            }
        }
        match earliest {
            Some((at, tag)) => {
                tokens.extend(rest[..at].split_whitespace().map(|s| s.to_string()));
                tokens.push(tag.to_string());
                rest = &rest[at + tag.len()..];
            }
            None => {
                tokens.extend(rest.split_whitespace().map(|s| s.to_string()));
                break 'outer;
            }
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_tags_and_separator() {
        let toks = tokenize_text("<|startofname|>Beef Stew<|endofname|><|startofingr|>1 cup rice; 2 eggs");
        assert_eq!(
            toks,
            vec![
                "<|startofname|>",
                "Beef",
                "Stew",
                "<|endofname|>",
                "<|startofingr|>",
                "1",
                "cup",
                "rice",
                ";",
                "2",
                "eggs"
            ]
        );
    }

    #[test]
    fn distribution_validation() {
        assert!(TokenDistribution::new(vec![(0, 0.5), (1, 0.5)]).is_ok());
        assert!(TokenDistribution::new(vec![(0, 0.5), (1, 0.6)]).is_err());
        assert!(TokenDistribution::new(vec![(0, 1.0), (0, 0.0)]).is_err());
        assert!(TokenDistribution::new(vec![(0, -0.5), (1, 1.5)]).is_err());
        assert!(TokenDistribution::new(vec![]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        use rand::SeedableRng;
        let dist = TokenDistribution::new(vec![(0, 0.25), (1, 0.25), (2, 0.5)]).unwrap();
        let mut a = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut b = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<_> = (0..50).map(|_| dist.sample(&mut a)).collect();
        let ys: Vec<_> = (0..50).map(|_| dist.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }
}
