//! Built-in backoff-interpolated n-gram language model.
//!
//! A desk-scale stand-in for a fine-tuned transformer: maximum-likelihood
//! estimates per order are mixed with fixed interpolation weights, and a
//! uniform floor of `1e-6` total mass keeps every distribution full-support.

use super::{tokenize_text, LanguageModel, LmError, TokenDistribution, TokenId};
use crate::corpus::TAGS;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::path::Path;

pub const UNK_TOKEN: &str = "<|unk|>";

/// Total probability mass spread uniformly over the vocabulary.
pub const UNIFORM_FLOOR: f64 = 1e-6;

const MODEL_FILE_HEADER: &str = "recipegen-ngram v1";

/// Dense token-string table. Id 0 is the unknown token, ids 1..=6 the
/// structural tags, the rest the corpus tokens in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, LmError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(LmError::InvalidParameter(format!("duplicate token {t:?}")));
            }
        }
        if !ids.contains_key(UNK_TOKEN) {
            return Err(LmError::InvalidParameter("missing unknown token".into()));
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Builds from corpus token strings; tags and the unknown token are
    /// always present.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(corpus_tokens: I) -> Self {
        let mut fixed: Vec<String> = vec![UNK_TOKEN.to_string()];
        fixed.extend(TAGS.iter().map(|t| t.to_string()));
        let mut rest: Vec<String> = corpus_tokens
            .into_iter()
            .filter(|t| !fixed.iter().any(|f| f == t))
            .map(|t| t.to_string())
            .collect();
        rest.sort();
        rest.dedup();
        fixed.extend(rest);
        Self::from_tokens(fixed).expect("construction is duplicate-free")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .unwrap_or(UNK_TOKEN)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    order: usize,
    /// weights[k] mixes the (k+1)-gram estimate; they sum to one
    weights: Vec<f64>,
    vocab: Vocabulary,
    /// counts[k]: context of length k -> next-token counts
    #[serde(with = "counts_serde")]
    counts: Vec<BTreeMap<Vec<TokenId>, ContextCounts>>,
}

/// JSON object keys must be strings, so each count table is stored as a
/// sorted entry list; BTreeMap iteration order keeps files byte-stable.
mod counts_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    type Tables = Vec<BTreeMap<Vec<TokenId>, ContextCounts>>;

    pub fn serialize<S: Serializer>(tables: &Tables, ser: S) -> Result<S::Ok, S::Error> {
        let listed: Vec<Vec<(&Vec<TokenId>, &ContextCounts)>> =
            tables.iter().map(|t| t.iter().collect()).collect();
        serde::Serialize::serialize(&listed, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Tables, D::Error> {
        let listed: Vec<Vec<(Vec<TokenId>, ContextCounts)>> =
            serde::Deserialize::deserialize(de)?;
        Ok(listed.into_iter().map(|t| t.into_iter().collect()).collect())
    }
}

impl NGramModel {
    /// Trains on serialized recipe texts. `weights[k]` is the interpolation
    /// weight of the (k+1)-gram estimate; they must be positive and sum to
    /// one.
    pub fn train(corpus: &[String], order: usize, weights: &[f64]) -> Result<Self, LmError> {
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        if order < 1 {
            return Err(LmError::InvalidParameter("order must be >= 1".into()));
        }
        if weights.len() != order {
            return Err(LmError::InvalidParameter(format!(
                "need {order} interpolation weights, got {}",
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(LmError::InvalidParameter(
                "interpolation weights must be positive and sum to 1".into(),
            ));
        }

        let tokenized: Vec<Vec<String>> = corpus.iter().map(|t| tokenize_text(t)).collect();
        let vocab = Vocabulary::build(tokenized.iter().flatten().map(|s| s.as_str()));
        let mut counts: Vec<BTreeMap<Vec<TokenId>, ContextCounts>> =
            (0..order).map(|_| BTreeMap::new()).collect();
        for text in &tokenized {
            let ids: Vec<TokenId> = text.iter().map(|t| vocab.id(t)).collect();
            for (k, table) in counts.iter_mut().enumerate() {
                // windows fully inside the text: context of length k, then the token
                if ids.len() <= k {
                    continue;
                }
                for i in k..ids.len() {
                    let entry = table.entry(ids[i - k..i].to_vec()).or_default();
                    entry.total += 1;
                    *entry.next.entry(ids[i]).or_insert(0) += 1;
                }
            }
        }
        Ok(NGramModel {
            order,
            weights: weights.to_vec(),
            vocab,
            counts,
        })
    }

    /// Uniform interpolation weights for a given order.
    pub fn uniform_weights(order: usize) -> Vec<f64> {
        vec![1.0 / order as f64; order]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let body = serde_json::to_string(self)
            .map_err(|e| LmError::ModelFile(format!("serialize: {e}")))?;
        std::fs::write(path, format!("{MODEL_FILE_HEADER}\n{body}\n"))
            .map_err(|e| LmError::ModelFile(format!("write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::ModelFile(format!("read {}: {e}", path.display())))?;
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| LmError::ModelFile("missing header line".into()))?;
        if header != MODEL_FILE_HEADER {
            return Err(LmError::ModelFile(format!(
                "unsupported model file header {header:?}"
            )));
        }
        let mut model: NGramModel = serde_json::from_str(body)
            .map_err(|e| LmError::ModelFile(format!("parse: {e}")))?;
        model.vocab = Vocabulary::from_tokens(std::mem::take(&mut model.vocab.tokens))?;
        Ok(model)
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token_id(&self, token: &str) -> TokenId {
        self.vocab.id(token)
    }

    fn token_str(&self, id: TokenId) -> String {
        self.vocab.token(id).to_string()
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        tokenize_text(text).iter().map(|t| self.vocab.id(t)).collect()
    }

    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        let v = self.vocab.len();
        let mut probs = vec![0.0f64; v];

        // Per-order ML estimates; orders whose context was never seen drop
        // out and their weight is redistributed over the seen ones.
        let mut seen_weight = 0.0;
        let mut contributions: Vec<(f64, &ContextCounts)> = Vec::with_capacity(self.order);
        for k in 0..self.order {
            if context.len() < k {
                continue;
            }
            let ctx = &context[context.len() - k..];
            if let Some(cc) = self.counts[k].get(ctx) {
                if cc.total > 0 {
                    seen_weight += self.weights[k];
                    contributions.push((self.weights[k], cc));
                }
            }
        }
        if seen_weight > 0.0 {
            for (w, cc) in contributions {
                let w = w / seen_weight;
                for (&tok, &n) in &cc.next {
                    probs[tok as usize] += w * n as f64 / cc.total as f64;
                }
            }
        } else {
            // nothing observed at all: uniform
            for p in &mut probs {
                *p = 1.0 / v as f64;
            }
        }

        let floor_each = UNIFORM_FLOOR / v as f64;
        let support: Vec<(TokenId, f64)> = probs
            .into_iter()
            .enumerate()
            .map(|(id, p)| (id as TokenId, (1.0 - UNIFORM_FLOOR) * p + floor_each))
            .collect();
        Ok(TokenDistribution { support })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(corpus: &[&str], order: usize, weights: &[f64]) -> NGramModel {
        let corpus: Vec<String> = corpus.iter().map(|s| s.to_string()).collect();
        NGramModel::train(&corpus, order, weights).unwrap()
    }

    #[test]
    fn bigram_deterministic_continuation() {
        // corpus [a,b,a,b]: after "a", "b" always follows
        let m = toy_model(&["a b a b"], 2, &[0.0001, 0.9999]);
        let ctx = vec![m.token_id("a")];
        let dist = m.next_token_distribution(&ctx).unwrap();
        dist.validate().unwrap();
        let pb = dist.prob(m.token_id("b")).unwrap();
        assert!(pb > 0.99, "P(b|a) = {pb}");
    }

    #[test]
    fn interpolated_bigram_matches_hand_computation() {
        let m = toy_model(&["a b a b"], 2, &[0.1, 0.9]);
        let v = m.vocab_size() as f64;
        let ctx = vec![m.token_id("a")];
        let dist = m.next_token_distribution(&ctx).unwrap();
        // bigram ML: P(b|a)=1.0 (contexts "a" -> b twice)
        // unigram ML: P(b)=2/4
        let interp = 0.9 * 1.0 + 0.1 * (2.0 / 4.0);
        let expected = (1.0 - UNIFORM_FLOOR) * interp + UNIFORM_FLOOR / v;
        let got = dist.prob(m.token_id("b")).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn distributions_sum_to_one_at_any_context_length() {
        let m = toy_model(&["a b c a b", "b c a"], 3, &[0.2, 0.3, 0.5]);
        for ctx_len in 0..4 {
            let ctx: Vec<TokenId> = (0..ctx_len).map(|_| m.token_id("a")).collect();
            let dist = m.next_token_distribution(&ctx).unwrap();
            dist.validate().unwrap();
        }
    }

    #[test]
    fn unigram_proportional_to_counts_plus_floor() {
        let m = toy_model(&["a a a b"], 1, &[1.0]);
        let dist = m.next_token_distribution(&[]).unwrap();
        let v = m.vocab_size() as f64;
        let pa = dist.prob(m.token_id("a")).unwrap();
        let pb = dist.prob(m.token_id("b")).unwrap();
        assert!((pa - ((1.0 - UNIFORM_FLOOR) * 0.75 + UNIFORM_FLOOR / v)).abs() < 1e-12);
        assert!((pb - ((1.0 - UNIFORM_FLOOR) * 0.25 + UNIFORM_FLOOR / v)).abs() < 1e-12);
    }

    #[test]
    fn sequence_log_probs_match_hand_count() {
        // bigram-only-ish model; check conditionals directly
        let m = toy_model(&["a b a c"], 2, &[0.5, 0.5]);
        let tokens: Vec<TokenId> = ["a", "b"].iter().map(|t| m.token_id(t)).collect();
        let lps = m.sequence_log_probs(&tokens, 1).unwrap();
        assert_eq!(lps.len(), 1);
        let v = m.vocab_size() as f64;
        // P(b|a): bigram ML 1/2 (a->b once, a->c once), unigram ML 1/4
        let expected = (1.0 - UNIFORM_FLOOR) * (0.5 * 0.5 + 0.5 * 0.25) + UNIFORM_FLOOR / v;
        assert!((lps[0] - expected.ln()).abs() < 1e-12);
        assert!(lps.iter().all(|lp| lp.is_finite()));
    }

    #[test]
    fn increasing_count_never_decreases_probability() {
        let base = toy_model(&["a b a c"], 2, &[0.5, 0.5]);
        let more = toy_model(&["a b a c a b"], 2, &[0.5, 0.5]);
        let ctx_base = vec![base.token_id("a")];
        let ctx_more = vec![more.token_id("a")];
        let pb_base = base
            .next_token_distribution(&ctx_base)
            .unwrap()
            .prob(base.token_id("b"))
            .unwrap();
        let pb_more = more
            .next_token_distribution(&ctx_more)
            .unwrap()
            .prob(more.token_id("b"))
            .unwrap();
        assert!(pb_more >= pb_base);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(matches!(
            NGramModel::train(&[], 2, &[0.5, 0.5]),
            Err(LmError::EmptyCorpus)
        ));
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let m = toy_model(&["a b c a b", "c c a"], 3, &[0.2, 0.3, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        m.save(&p1).unwrap();
        let loaded = NGramModel::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let ctx = vec![m.token_id("a")];
        assert_eq!(
            m.next_token_distribution(&ctx).unwrap(),
            loaded.next_token_distribution(&ctx).unwrap()
        );
    }
}
