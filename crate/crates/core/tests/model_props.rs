use std::sync::Arc;

use proptest::prelude::*;
use rankmark::model::mock::MockModel;
use rankmark::model::{
    build_candidate_set, logits_rank, published_loss_rank, rank_order, AccessMode, CandidateSet, LogitsProvider,
    LogitsView, ModelError, ModelHandle, TokenId, Tokenizer,
};

/// A mock whose every score is shifted by `c`.
struct Shifted {
    inner: MockModel,
    c: f64,
}

impl LogitsProvider for Shifted {
    fn handle(&self) -> &ModelHandle {
        self.inner.handle()
    }

    fn tokenizer(&self) -> Arc<dyn Tokenizer> {
        self.inner.tokenizer()
    }

    fn full_logits(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<LogitsView>, ModelError> {
        let views = self.inner.full_logits(tokens, positions)?;
        Ok(views
            .into_iter()
            .map(|v| match v {
                LogitsView::Full(s) => LogitsView::Full(s.into_iter().map(|x| x + self.c).collect()),
                other => other,
            })
            .collect())
    }

    fn top_logprobs(&self, prefix: &[TokenId], bias: &[(TokenId, f64)], k: usize) -> Result<LogitsView, ModelError> {
        self.inner.top_logprobs(prefix, bias, k)
    }
}

/// Candidates around a token of oracle rank `rank` (shifted to fit `m`).
fn candidates(oracle: &MockModel, prefix: &[TokenId], m: usize, rank: usize) -> CandidateSet {
    let view = oracle.next_logits(prefix).unwrap();
    let order = rank_order(&view).unwrap();
    let rank = rank.clamp(m, order.len() - m);
    build_candidate_set(oracle, prefix, order[rank - 1], m, &|_| true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ranks_are_a_bijection_even_with_ties(scores in prop::collection::vec(0u8..4, 1..300)) {
        let view = LogitsView::Full(scores.iter().map(|&s| s as f64).collect());
        let mut ranks: Vec<usize> = (0..scores.len()).map(|t| logits_rank(&view, t as TokenId).unwrap()).collect();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (1..=scores.len()).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_shift_keeps_the_loss_rank(
        seed in any::<u64>(),
        prefix in prop::collection::vec(0u32..500, 0..40),
        m in 2usize..=100,
        rank in 1usize..2000,
        pick in any::<prop::sample::Index>(),
        c in -64i32..64,
    ) {
        let oracle = MockModel::new(seed);
        let cands = candidates(&oracle, &prefix, m, rank);
        let published = cands.tokens[pick.index(cands.m())];
        let target = MockModel::new(seed ^ 0x5eed);
        let shifted = Shifted { inner: MockModel::new(seed ^ 0x5eed), c: c as f64 / 4.0 };
        prop_assert_eq!(
            published_loss_rank(&target, &prefix, &cands, published).unwrap(),
            published_loss_rank(&shifted, &prefix, &cands, published).unwrap()
        );
    }

    #[test]
    fn restricted_access_gives_the_full_rank(
        seed in any::<u64>(),
        prefix in prop::collection::vec(0u32..500, 0..40),
        m in 2usize..=20,
        rank in 1usize..2000,
        pick in any::<prop::sample::Index>(),
    ) {
        let oracle = MockModel::new(seed);
        let cands = candidates(&oracle, &prefix, m, rank);
        let published = cands.tokens[pick.index(cands.m())];
        let full = MockModel::new(seed.rotate_left(7));
        let restricted = MockModel::new(seed.rotate_left(7)).with_access(AccessMode::RestrictedTopk { k: 20, supports_bias: true });
        prop_assert_eq!(
            published_loss_rank(&full, &prefix, &cands, published).unwrap(),
            published_loss_rank(&restricted, &prefix, &cands, published).unwrap()
        );
    }

    #[test]
    fn candidate_sets_rebuild_identically(
        seed in any::<u64>(),
        prefix in prop::collection::vec(0u32..500, 0..40),
        m in 2usize..=100,
        rank in 1usize..2000,
    ) {
        let a = candidates(&MockModel::new(seed), &prefix, m, rank);
        let b = candidates(&MockModel::new(seed), &prefix, m, rank);
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
        prop_assert_eq!(a.m(), m);
    }
}
