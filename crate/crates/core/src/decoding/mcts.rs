//! Monte Carlo Tree Search token generation.
//!
//! For each emitted token the search runs a fixed number of iterations, each
//! with four phases:
//!
//! 1. Selection — descend from the root maximizing
//!    `PUCB(i) = Q(i) + c * prior(i) * sqrt(N) / (n_i + 1)` where `N` is the
//!    parent's visit count. Cold-start ties (all zero) break by lowest visit
//!    count, then highest prior, then lowest token id.
//! 2. Expansion — add children for the model's top-k next tokens with priors
//!    renormalized over the k.
//! 3. Simulation — top-p rollout from the freshly selected child for up to
//!    `t` tokens, stopping early at the stop tag.
//! 4. Backpropagation — score the rolled-out text with the reward function
//!    and fold the scalar into the running mean `Q` of every node on the
//!    path, root included.
//!
//! After the iterations the root child with the highest `Q` is committed and
//! becomes the new root (subtree reuse), until the stop tag or the token
//! budget ends the sequence.

use super::{resolve_stop_tag, DecodingError, GenerationConfig, GenerationOutput, RewardFunction};
use crate::decoding::filters::top_p_filter;
use crate::lm::{LanguageModel, TokenId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-iteration trace consumer; receives one line-delimited JSON record.
pub type TraceSink<'a> = &'a mut dyn FnMut(&str);

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub token: TokenId,
    pub prior: f64,
    /// Completed backpropagations through this node.
    pub visits: u64,
    /// Backpropagations that ended here (this node was the rollout start).
    pub terminal_visits: u64,
    pub value_sum: f64,
    /// `None` until expanded.
    pub children: Option<Vec<SearchNode>>,
}

impl SearchNode {
    fn fresh(token: TokenId, prior: f64) -> Self {
        SearchNode {
            token,
            prior,
            visits: 0,
            terminal_visits: 0,
            value_sum: 0.0,
            children: None,
        }
    }

    /// Mean of backpropagated rewards; zero while unvisited.
    pub fn q(&self) -> f64 {
        if self.visits > 0 {
            self.value_sum / self.visits as f64
        } else {
            0.0
        }
    }

    pub fn is_expanded(&self) -> bool {
        self.children.is_some()
    }
}

fn pucb(node: &SearchNode, parent_visits: u64, c: f64) -> f64 {
    node.q() + c * node.prior * (parent_visits as f64).sqrt() / (node.visits as f64 + 1.0)
}

/// Index of the child maximizing PUCB; ties break by lowest visit count,
/// then highest prior, then lowest token id.
fn select_child(children: &[SearchNode], parent_visits: u64, c: f64) -> usize {
    let mut best = 0;
    let mut best_score = pucb(&children[0], parent_visits, c);
    for (i, child) in children.iter().enumerate().skip(1) {
        let score = pucb(child, parent_visits, c);
        let current = &children[best];
        let better = score > best_score
            || (score == best_score
                && (child.visits < current.visits
                    || (child.visits == current.visits
                        && (child.prior > current.prior
                            || (child.prior == current.prior && child.token < current.token)))));
        if better {
            best = i;
            best_score = score;
        }
    }
    best
}

/// One MCTS generation job: a single tree over one prompt.
pub struct MctsSearch<'a> {
    model: &'a dyn LanguageModel,
    reward: &'a dyn RewardFunction,
    config: GenerationConfig,
    stop: TokenId,
    rng: ChaCha8Rng,
    /// Prompt plus committed tokens.
    context: Vec<TokenId>,
    prompt_len: usize,
    root: SearchNode,
    step_index: usize,
}

impl<'a> MctsSearch<'a> {
    pub fn new(
        model: &'a dyn LanguageModel,
        prompt: &[TokenId],
        reward: &'a dyn RewardFunction,
        config: GenerationConfig,
    ) -> Result<Self, DecodingError> {
        config.validate()?;
        if prompt.is_empty() {
            return Err(DecodingError::EmptyPrompt);
        }
        let stop = resolve_stop_tag(model, &config);
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(MctsSearch {
            model,
            reward,
            config,
            stop,
            rng,
            context: prompt.to_vec(),
            prompt_len: prompt.len(),
            root: SearchNode::fresh(TokenId::MAX, 1.0),
            step_index: 0,
        })
    }

    pub fn root(&self) -> &SearchNode {
        &self.root
    }

    /// Generated tokens committed so far.
    pub fn generated(&self) -> &[TokenId] {
        &self.context[self.prompt_len..]
    }

    fn expand(&mut self, context: &[TokenId]) -> Result<Vec<SearchNode>, DecodingError> {
        let priors = self.model.top_k_priors(context, self.config.expansion_k)?;
        Ok(priors
            .support
            .into_iter()
            .map(|(token, prior)| SearchNode::fresh(token, prior))
            .collect())
    }

    /// One selection/expansion/simulation/backpropagation cycle. Returns the
    /// reward that was backpropagated.
    pub fn run_iteration(&mut self, trace: &mut Option<TraceSink>) -> Result<f64, DecodingError> {
        if !self.root.is_expanded() {
            self.root.children = Some(self.expand(&self.context.clone())?);
        }

        // Selection: walk expanded nodes, then expand the leaf and step into
        // one of its fresh children as the rollout start. Stop-tag nodes are
        // never expanded; a path may end on one.
        let mut path: Vec<usize> = Vec::new();
        let mut text_path: Vec<TokenId> = Vec::new();
        {
            let c = self.config.exploration_c;
            let mut node = &mut self.root;
            loop {
                if node.token == self.stop && !path.is_empty() {
                    break;
                }
                if node.children.is_none() {
                    let ctx: Vec<TokenId> = self
                        .context
                        .iter()
                        .copied()
                        .chain(text_path.iter().copied())
                        .collect();
                    let children = {
                        let priors =
                            self.model.top_k_priors(&ctx, self.config.expansion_k)?;
                        priors
                            .support
                            .into_iter()
                            .map(|(token, prior)| SearchNode::fresh(token, prior))
                            .collect::<Vec<_>>()
                    };
                    node.children = Some(children);
                    let idx = select_child(node.children.as_ref().unwrap(), node.visits, c);
                    path.push(idx);
                    let child = &node.children.as_ref().unwrap()[idx];
                    text_path.push(child.token);
                    break;
                }
                let idx = select_child(node.children.as_ref().unwrap(), node.visits, c);
                path.push(idx);
                node = &mut node.children.as_mut().unwrap()[idx];
                text_path.push(node.token);
            }
        }

        // Simulation: top-p rollout unless the path ended on the stop tag.
        let mut rollout: Vec<TokenId> = Vec::new();
        if *text_path.last().expect("non-empty path") != self.stop {
            let mut ctx: Vec<TokenId> = self
                .context
                .iter()
                .copied()
                .chain(text_path.iter().copied())
                .collect();
            for _ in 0..self.config.rollout_t {
                let dist = self.model.next_token_distribution(&ctx)?;
                let nucleus = top_p_filter(&dist, self.config.nucleus_p);
                let token = nucleus.sample(&mut self.rng);
                ctx.push(token);
                rollout.push(token);
                if token == self.stop {
                    break;
                }
            }
        }

        // Backpropagation: reward on the full decoded text, running-mean Q
        // update for every node on the path including the root.
        let full: Vec<TokenId> = self
            .context
            .iter()
            .copied()
            .chain(text_path.iter().copied())
            .chain(rollout.iter().copied())
            .collect();
        let reward = self.reward.evaluate(&self.model.detokenize(&full));

        self.root.visits += 1;
        self.root.value_sum += reward;
        let mut node = &mut self.root;
        for (depth, &idx) in path.iter().enumerate() {
            node = &mut node.children.as_mut().unwrap()[idx];
            node.visits += 1;
            node.value_sum += reward;
            if depth + 1 == path.len() {
                node.terminal_visits += 1;
            }
        }

        if let Some(sink) = trace.as_deref_mut() {
            let record = serde_json::json!({
                "step": self.step_index,
                "path": text_path,
                "rollout_len": rollout.len(),
                "reward": reward,
            });
            sink(&record.to_string());
        }
        Ok(reward)
    }

    /// Root child with the highest Q; ties break by highest prior, then
    /// lowest token id.
    pub fn best_child_index(&self) -> Option<usize> {
        let children = self.root.children.as_ref()?;
        if children.is_empty() {
            return None;
        }
        let mut best = 0;
        for (i, child) in children.iter().enumerate().skip(1) {
            let current = &children[best];
            let better = child.q() > current.q()
                || (child.q() == current.q()
                    && (child.prior > current.prior
                        || (child.prior == current.prior && child.token < current.token)));
            if better {
                best = i;
            }
        }
        Some(best)
    }

    /// Runs Z iterations and commits the best root child, which becomes the
    /// new root with its statistics intact.
    pub fn step(&mut self, trace: &mut Option<TraceSink>) -> Result<TokenId, DecodingError> {
        for _ in 0..self.config.iterations {
            self.run_iteration(trace)?;
        }
        let idx = self
            .best_child_index()
            .expect("root expanded with non-empty children after iterations");
        let committed = self.root.children.as_mut().unwrap().swap_remove(idx);
        self.root = committed;
        self.context.push(self.root.token);
        self.step_index += 1;
        Ok(self.root.token)
    }
}

/// Generates a full sequence with MCTS; deterministic given the seed.
pub fn mcts_generate(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    reward: &dyn RewardFunction,
    config: &GenerationConfig,
    mut trace: Option<TraceSink>,
) -> Result<GenerationOutput, DecodingError> {
    let mut search = MctsSearch::new(model, prompt, reward, config.clone())?;
    let stop = resolve_stop_tag(model, config);
    while search.generated().len() < config.max_tokens {
        let token = search.step(&mut trace)?;
        if token == stop {
            break;
        }
    }
    Ok(GenerationOutput {
        tokens: search.generated().to_vec(),
        ngram_filter_bypassed: 0,
    })
}
