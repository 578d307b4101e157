//! Decoders: three baseline samplers and the MCTS generator.

mod filters;
mod mcts;
mod sampler;

pub use filters::{apply_no_ngram_repeat, apply_repetition_penalty, top_p_filter};
pub use mcts::{mcts_generate, MctsSearch, SearchNode, TraceSink};
pub use sampler::{sample_sequence, GenerationOutput};

use crate::lm::TokenId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodingError {
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("prompt is empty")]
    EmptyPrompt,
}

/// Knobs shared by every generator. Defaults are the reference operating
/// point: Z=20 iterations, c=1, k=50, p=0.9, t=30.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// MCTS iterations per emitted token (Z).
    pub iterations: usize,
    /// Exploration constant (c).
    pub exploration_c: f64,
    /// Children added per expansion (k).
    pub expansion_k: usize,
    /// Nucleus size for top-p sampling and rollouts (p).
    pub nucleus_p: f64,
    /// Rollout length in tokens (t).
    pub rollout_t: usize,
    /// Hard cap on generated tokens per sample.
    pub max_tokens: usize,
    pub rng_seed: u64,
    /// Token string that terminates generation.
    pub stop_tag: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            iterations: 20,
            exploration_c: 1.0,
            expansion_k: 50,
            nucleus_p: 0.9,
            rollout_t: 30,
            max_tokens: 200,
            rng_seed: 0,
            stop_tag: crate::corpus::END_INGR.to_string(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), DecodingError> {
        if self.iterations < 1 {
            return Err(DecodingError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.expansion_k < 1 {
            return Err(DecodingError::InvalidConfig("expansion_k must be >= 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(DecodingError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(DecodingError::InvalidConfig(
                "nucleus_p must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Baseline sampling method selection with per-method parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SamplingMethod {
    /// Plain nucleus sampling.
    TopP,
    /// Nucleus sampling with n-gram repeats forbidden.
    NoNgram { n: usize },
    /// Nucleus sampling with an exponential repetition penalty.
    RepPenalty { theta: f64 },
}

impl SamplingMethod {
    pub fn no_ngram_default() -> Self {
        SamplingMethod::NoNgram { n: 4 }
    }

    pub fn rep_penalty_default() -> Self {
        SamplingMethod::RepPenalty { theta: 1.2 }
    }
}

/// Scalar reward over decoded text, total by contract.
pub trait RewardFunction: Sync {
    fn evaluate(&self, decoded_text: &str) -> f64;
}

impl<F: Fn(&str) -> f64 + Sync> RewardFunction for F {
    fn evaluate(&self, decoded_text: &str) -> f64 {
        self(decoded_text)
    }
}

/// Reward over a parsed reward spec and lexicon.
pub struct SpecReward<'a> {
    pub spec: &'a crate::rewards::RewardSpec,
    pub lexicon: &'a crate::lexicon::ConstituentLexicon,
}

impl RewardFunction for SpecReward<'_> {
    fn evaluate(&self, decoded_text: &str) -> f64 {
        self.spec.combine(decoded_text, self.lexicon)
    }
}

pub(crate) fn resolve_stop_tag(
    model: &dyn crate::lm::LanguageModel,
    config: &GenerationConfig,
) -> TokenId {
    model.token_id(&config.stop_tag)
}
