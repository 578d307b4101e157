//! HTTP client for a remote next-token-probability server.
//!
//! Protocol: `POST /v1/next_token` with body
//! `{"context": ["token", ...], "top_k": K}`; the server answers
//! `{"tokens": ["token", ...], "probs": [f64, ...]}` with probabilities in
//! descending order, at most K entries. The client renormalizes the top-k
//! mass to one before handing it to a decoder, and surfaces malformed
//! responses as typed errors rather than substituting anything.

use super::{tokenize_text, LanguageModel, LmError, TokenDistribution, TokenId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

#[derive(Debug, Serialize)]
struct NextTokenRequest<'a> {
    context: Vec<&'a str>,
    top_k: usize,
}

#[derive(Debug, Deserialize)]
struct NextTokenResponse {
    tokens: Vec<String>,
    probs: Vec<f64>,
}

/// Remote model speaking the `/v1/next_token` protocol.
///
/// The remote server owns its tokenizer; this client just interns the token
/// strings it sees so decoders can keep working with dense ids.
pub struct RemoteModel {
    endpoint: String,
    top_k: usize,
    client: reqwest::blocking::Client,
    interner: RwLock<Interner>,
}

#[derive(Default)]
struct Interner {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Interner {
    fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }
}

impl RemoteModel {
    /// `top_k` is the candidate count requested per context.
    pub fn new(endpoint: &str, top_k: usize) -> Result<Self, LmError> {
        if top_k < 1 {
            return Err(LmError::InvalidParameter("top_k must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| LmError::Transport {
                endpoint: endpoint.to_string(),
                message: e.to_string(),
            })?;
        Ok(RemoteModel {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            top_k,
            client,
            interner: RwLock::new(Interner::default()),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// One request for one context; returns the top-k candidates with their
    /// probabilities renormalized to sum to one.
    pub fn query(&self, context: &[TokenId], top_k: usize) -> Result<TokenDistribution, LmError> {
        let interner = self.interner.read().expect("interner lock");
        let context_strs: Vec<&str> = context
            .iter()
            .map(|&id| {
                interner
                    .tokens
                    .get(id as usize)
                    .map(|s| s.as_str())
                    .ok_or(LmError::TokenNotInSupport(id))
            })
            .collect::<Result<_, _>>()?;
        let request = NextTokenRequest {
            context: context_strs,
            top_k,
        };
        let url = format!("{}/v1/next_token", self.endpoint);
        let response = self
            .client
            .post(&url)
            .json(&request)
            .send()
            .map_err(|e| LmError::Transport {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        drop(interner);

        if !response.status().is_success() {
            return Err(LmError::Transport {
                endpoint: self.endpoint.clone(),
                message: format!("server returned status {}", response.status()),
            });
        }
        let body: NextTokenResponse =
            response.json().map_err(|e| LmError::MalformedResponse {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        self.validate_and_intern(body, top_k)
    }

    fn validate_and_intern(
        &self,
        body: NextTokenResponse,
        top_k: usize,
    ) -> Result<TokenDistribution, LmError> {
        let malformed = |message: String| LmError::MalformedResponse {
            endpoint: self.endpoint.clone(),
            message,
        };
        if body.tokens.len() != body.probs.len() {
            return Err(malformed(format!(
                "{} tokens but {} probs",
                body.tokens.len(),
                body.probs.len()
            )));
        }
        if body.tokens.is_empty() {
            return Err(malformed("empty candidate list".into()));
        }
        if body.tokens.len() > top_k {
            return Err(malformed(format!(
                "{} candidates exceed top_k={top_k}",
                body.tokens.len()
            )));
        }
        let mut sum = 0.0;
        for window in body.probs.windows(2) {
            if window[1] > window[0] {
                return Err(malformed("probs are not in descending order".into()));
            }
        }
        for &p in &body.probs {
            if !(p > 0.0) || !p.is_finite() {
                return Err(malformed(format!("probability {p} is not strictly positive")));
            }
            sum += p;
        }
        if sum > 1.0 + super::DIST_SUM_TOLERANCE {
            return Err(malformed(format!("probabilities sum to {sum} > 1")));
        }

        let mut interner = self.interner.write().expect("interner lock");
        let support: Vec<(TokenId, f64)> = body
            .tokens
            .iter()
            .zip(&body.probs)
            .map(|(t, &p)| (interner.intern(t), p))
            .collect();
        let dist = TokenDistribution { support }.renormalized();
        dist.validate()?;
        Ok(dist)
    }
}

impl LanguageModel for RemoteModel {
    fn vocab_size(&self) -> usize {
        self.interner.read().expect("interner lock").tokens.len()
    }

    fn token_id(&self, token: &str) -> TokenId {
        self.interner.write().expect("interner lock").intern(token)
    }

    fn token_str(&self, id: TokenId) -> String {
        self.interner
            .read()
            .expect("interner lock")
            .tokens
            .get(id as usize)
            .cloned()
            .unwrap_or_default()
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut interner = self.interner.write().expect("interner lock");
        tokenize_text(text)
            .iter()
            .map(|t| interner.intern(t))
            .collect()
    }

    /// The remote protocol only ever exposes top-k candidates, so the
    /// "full" distribution is the renormalized top-k at the configured
    /// request size.
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, LmError> {
        self.query(context, self.top_k)
    }

    fn top_k_priors(&self, context: &[TokenId], k: usize) -> Result<TokenDistribution, LmError> {
        self.query(context, k)
    }
}
