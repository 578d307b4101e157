//! Distribution filters used by the baseline samplers.

use crate::lm::{TokenDistribution, TokenId};

/// Keeps the smallest prefix of tokens, sorted by descending probability,
/// whose cumulative mass reaches `p`, then renormalizes. Probability ties
/// break by ascending token id.
pub fn top_p_filter(dist: &TokenDistribution, p: f64) -> TokenDistribution {
    let mut support = dist.support.clone();
    support.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut cumulative = 0.0;
    let mut cutoff = support.len();
    for (i, &(_, prob)) in support.iter().enumerate() {
        cumulative += prob;
        if cumulative >= p {
            cutoff = i + 1;
            break;
        }
    }
    support.truncate(cutoff.max(1));
    TokenDistribution { support }.renormalized()
}

/// Zeroes every token that would complete an n-gram already present in the
/// history, then renormalizes. When the whole support would be banned the
/// unfiltered distribution comes back with the bypass flag set, so generation
/// stays total.
pub fn apply_no_ngram_repeat(
    dist: &TokenDistribution,
    history: &[TokenId],
    n: usize,
) -> (TokenDistribution, bool) {
    assert!(n >= 2, "no-ngram-repeat needs n >= 2");
    if history.len() < n {
        return (dist.clone(), false);
    }
    let suffix = &history[history.len() - (n - 1)..];
    let mut banned: Vec<TokenId> = Vec::new();
    for i in 0..=history.len() - n {
        if &history[i..i + n - 1] == suffix {
            banned.push(history[i + n - 1]);
        }
    }
    if banned.is_empty() {
        return (dist.clone(), false);
    }
    let support: Vec<(TokenId, f64)> = dist
        .support
        .iter()
        .filter(|(id, _)| !banned.contains(id))
        .cloned()
        .collect();
    if support.is_empty() {
        (dist.clone(), true)
    } else {
        (TokenDistribution { support }.renormalized(), false)
    }
}

/// Sign-aware exponential penalty on tokens already in the history: each
/// penalized token's log-probability is multiplied by `theta` (log
/// probabilities are non-positive, so mass always shrinks), then the
/// distribution is renormalized.
pub fn apply_repetition_penalty(
    dist: &TokenDistribution,
    history: &[TokenId],
    theta: f64,
) -> TokenDistribution {
    assert!(theta > 1.0, "repetition penalty needs theta > 1");
    let seen: std::collections::HashSet<TokenId> = history.iter().copied().collect();
    let support: Vec<(TokenId, f64)> = dist
        .support
        .iter()
        .map(|&(id, p)| {
            if seen.contains(&id) {
                let score = p.ln();
                let penalized = if score > 0.0 { score / theta } else { score * theta };
                (id, penalized.exp())
            } else {
                (id, p)
            }
        })
        .collect();
    TokenDistribution { support }.renormalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(TokenId, f64)]) -> TokenDistribution {
        TokenDistribution::new(pairs.to_vec()).unwrap()
    }

    #[test]
    fn top_p_keeps_smallest_sufficient_prefix() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let f = top_p_filter(&d, 0.7);
        assert_eq!(f.support.len(), 2);
        assert!((f.prob(0).unwrap() - 0.625).abs() < 1e-12);
        assert!((f.prob(1).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn top_p_one_is_identity_mass() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let f = top_p_filter(&d, 1.0);
        assert_eq!(f.support.len(), 3);
        for (id, p) in &d.support {
            assert!((f.prob(*id).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn top_p_half_keeps_single_token() {
        let d = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let f = top_p_filter(&d, 0.5);
        assert_eq!(f.support, vec![(0, 1.0)]);
    }

    #[test]
    fn top_p_breaks_ties_by_token_id() {
        let d = dist(&[(3, 0.25), (1, 0.25), (2, 0.25), (0, 0.25)]);
        let f = top_p_filter(&d, 0.5);
        assert_eq!(f.support.iter().map(|&(id, _)| id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn no_ngram_bans_completing_token() {
        // history [a,b,c,d,a,b,c]: next d would repeat the 4-gram a b c d
        let (a, b, c, d) = (0, 1, 2, 3);
        let history = vec![a, b, c, d, a, b, c];
        let base = dist(&[(a, 0.25), (b, 0.25), (c, 0.25), (d, 0.25)]);
        let (f, bypassed) = apply_no_ngram_repeat(&base, &history, 4);
        assert!(!bypassed);
        assert!(f.prob(d).is_none());
        assert_eq!(f.support.len(), 3);
        f.validate().unwrap();
    }

    #[test]
    fn no_ngram_short_history_is_unchanged() {
        let base = dist(&[(0, 0.5), (1, 0.5)]);
        let (f, bypassed) = apply_no_ngram_repeat(&base, &[0, 1], 4);
        assert!(!bypassed);
        assert_eq!(f, base);
    }

    #[test]
    fn no_ngram_all_banned_bypasses_with_flag() {
        // degenerate single-token vocabulary: everything gets banned
        let base = dist(&[(0, 1.0)]);
        let history = vec![0, 0, 0, 0, 0];
        let (f, bypassed) = apply_no_ngram_repeat(&base, &history, 4);
        assert!(bypassed);
        assert_eq!(f, base);
    }

    #[test]
    fn repetition_penalty_theta_two() {
        // {a:0.5, b:0.5}, a in history, theta=2: a -> 0.25 pre-norm -> 1/3
        let base = dist(&[(0, 0.5), (1, 0.5)]);
        let f = apply_repetition_penalty(&base, &[0], 2.0);
        assert!((f.prob(0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.prob(1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn repetition_penalty_empty_history_is_identity() {
        let base = dist(&[(0, 0.5), (1, 0.5)]);
        let f = apply_repetition_penalty(&base, &[], 1.2);
        assert_eq!(f, base);
    }

    #[test]
    fn repetition_penalty_matches_hand_computation() {
        // theta = 1.2 over a 3-token distribution, tokens 0 and 2 in history
        let base = dist(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let theta = 1.2;
        let w0 = (0.5f64.ln() * theta).exp();
        let w1 = 0.3;
        let w2 = (0.2f64.ln() * theta).exp();
        let z = w0 + w1 + w2;
        let f = apply_repetition_penalty(&base, &[0, 2], theta);
        assert!((f.prob(0).unwrap() - w0 / z).abs() < 1e-12);
        assert!((f.prob(1).unwrap() - w1 / z).abs() < 1e-12);
        assert!((f.prob(2).unwrap() - w2 / z).abs() < 1e-12);
    }
}
