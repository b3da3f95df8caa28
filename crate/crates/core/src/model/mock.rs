//! Deterministic in-process models.
//!
//! The score of token `t` after context `c` under seed `s` is
//!
//! ```text
//! unit_interval(splitmix64(splitmix64(s ^ fnv1a(c)) ^ t))
//! ```
//!
//! where `fnv1a(c)` is [`ContextDigest`] over the context ids. Nothing else
//! enters the score, so two mocks with different seeds are independent and
//! the same mock reproduces bit-for-bit on every platform.

use std::collections::HashMap;
use std::sync::Arc;

use super::{AccessMode, LogitsProvider, LogitsView, ModelError, ModelHandle, TokenId, Tokenizer, VocabTokenizer};
use crate::hash::{splitmix64, unit_interval, ContextDigest};

/// Something that scores the whole vocabulary given a context digest.
pub trait Scorer: Send + Sync {
    fn scores(&self, digest: ContextDigest, vocab: usize) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct HashScorer {
    pub seed: u64,
}

impl HashScorer {
    pub fn score(&self, digest: ContextDigest, token: TokenId) -> f64 {
        let ctx = splitmix64(self.seed ^ digest.value());
        unit_interval(splitmix64(ctx ^ token as u64))
    }
}

impl Scorer for HashScorer {
    fn scores(&self, digest: ContextDigest, vocab: usize) -> Vec<f64> {
        let ctx = splitmix64(self.seed ^ digest.value());
        (0..vocab as u64).map(|t| unit_interval(splitmix64(ctx ^ t))).collect()
    }
}

/// A hash model plus a boost of `delta` on the token that followed the
/// same context in a training corpus. Each memorized context is boosted
/// with probability `q`, decided by a hash coin on the digest.
pub struct MemorizingScorer {
    base: HashScorer,
    memory: HashMap<u64, TokenId>,
    delta: f64,
    q: f64,
    coin_seed: u64,
}

impl MemorizingScorer {
    pub fn new(base_seed: u64, delta: f64, q: f64) -> Self {
        Self {
            base: HashScorer { seed: base_seed },
            memory: HashMap::new(),
            delta,
            q,
            coin_seed: splitmix64(base_seed ^ 0x6d65_6d6f),
        }
    }

    /// Records every (context, next token) pair of a training document.
    pub fn train(&mut self, tokens: &[TokenId]) {
        let mut d = ContextDigest::empty();
        for &t in tokens {
            self.memory.insert(d.value(), t);
            d.push(t);
        }
    }

    pub fn memorized(&self) -> usize {
        self.memory.len()
    }
}

impl Scorer for MemorizingScorer {
    fn scores(&self, digest: ContextDigest, vocab: usize) -> Vec<f64> {
        let mut s = self.base.scores(digest, vocab);
        if let Some(&t) = self.memory.get(&digest.value()) {
            if unit_interval(splitmix64(self.coin_seed ^ digest.value())) < self.q {
                if let Some(v) = s.get_mut(t as usize) {
                    *v += self.delta;
                }
            }
        }
        s
    }
}

/// A [`LogitsProvider`] over a [`Scorer`], supporting both access modes.
pub struct MockModel<S = HashScorer> {
    scorer: S,
    tokenizer: Arc<VocabTokenizer>,
    handle: ModelHandle,
}

impl MockModel<HashScorer> {
    pub fn new(seed: u64) -> Self {
        Self::with_scorer(HashScorer { seed }, format!("mock:{seed}"))
    }
}

impl MockModel<MemorizingScorer> {
    pub fn memorizing(scorer: MemorizingScorer) -> Self {
        let id = format!("mock-memorizing:{}", scorer.base.seed);
        Self::with_scorer(scorer, id)
    }
}

impl<S: Scorer> MockModel<S> {
    pub fn with_scorer(scorer: S, model_id: String) -> Self {
        let tokenizer = VocabTokenizer::builtin();
        let handle = ModelHandle {
            model_id,
            tokenizer_id: tokenizer.id().to_string(),
            access_mode: AccessMode::FullLogits,
        };
        Self {
            scorer,
            tokenizer,
            handle,
        }
    }

    pub fn with_access(mut self, mode: AccessMode) -> Self {
        self.handle.access_mode = mode;
        self
    }

    pub fn scorer(&self) -> &S {
        &self.scorer
    }

    fn vocab(&self) -> usize {
        self.tokenizer.vocab_size()
    }
}

/// Log-softmax top-k over `scores + bias`, sorted by descending log-prob
/// then ascending id.
pub fn top_k_logprobs(mut scores: Vec<f64>, bias: &[(TokenId, f64)], k: usize) -> Vec<(TokenId, f64)> {
    for &(t, b) in bias {
        if let Some(v) = scores.get_mut(t as usize) {
            *v += b;
        }
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
    let mut all: Vec<(TokenId, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as TokenId, s - lse))
        .collect();
    all.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

impl<S: Scorer> LogitsProvider for MockModel<S> {
    fn handle(&self) -> &ModelHandle {
        &self.handle
    }

    fn tokenizer(&self) -> Arc<dyn Tokenizer> {
        self.tokenizer.clone()
    }

    fn full_logits(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<LogitsView>, ModelError> {
        if let Some(&bad) = positions.iter().find(|&&p| p > tokens.len()) {
            return Err(ModelError::Argument(format!(
                "position {bad} is past the end of a {}-token context",
                tokens.len()
            )));
        }
        let mut digests = Vec::with_capacity(tokens.len() + 1);
        let mut d = ContextDigest::empty();
        digests.push(d);
        for &t in tokens {
            d.push(t);
            digests.push(d);
        }
        Ok(positions
            .iter()
            .map(|&p| LogitsView::Full(self.scorer.scores(digests[p], self.vocab())))
            .collect())
    }

    fn top_logprobs(
        &self,
        prefix: &[TokenId],
        bias: &[(TokenId, f64)],
        k: usize,
    ) -> Result<LogitsView, ModelError> {
        let scores = self.scorer.scores(ContextDigest::of(prefix), self.vocab());
        Ok(LogitsView::Partial(top_k_logprobs(scores, bias, k)))
    }
}
