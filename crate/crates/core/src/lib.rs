//! Search-guided recipe text generation.
//!
//! The library generates recipe ingredient lists and instructions by running
//! Monte Carlo Tree Search over a pluggable next-token-probability model,
//! steered by weighted soft-constraint reward functions. Three baseline
//! samplers (top-p, no-n-gram-repeat, repetition penalty) and an automatic
//! evaluation suite (coherence, F1, perplexity, ROUGE, BLEU, repetition,
//! output length) are included for comparison runs.
//!
//! Modules:
//! - [`corpus`] — recipe text format, parsing, dataset cleaning
//! - [`lexicon`] — base ingredient names ("constituents") and longest-match lookup
//! - [`lm`] — next-token-probability contract, built-in n-gram model, remote client
//! - [`decoding`] — baseline samplers and the MCTS generator
//! - [`rewards`] — soft-constraint reward functions and their weighted combination
//! - [`eval`] — automatic metrics and report aggregation
//! - [`manifest`] — reproducible run manifests
//! - [`synth`] — deterministic toy corpus generator for desk-scale runs

pub mod corpus;
pub mod decoding;
pub mod eval;
pub mod lexicon;
pub mod lm;
pub mod manifest;
pub mod rewards;
pub mod synth;

pub use corpus::{CleaningRules, Completeness, ParsedRecipe, Recipe, Section, TaskKind};
pub use decoding::{GenerationConfig, SamplingMethod};
pub use lexicon::ConstituentLexicon;
pub use lm::{LanguageModel, NGramModel, RemoteModel, TokenDistribution, TokenId};
pub use rewards::RewardSpec;
