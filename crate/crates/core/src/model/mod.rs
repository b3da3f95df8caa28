//! Logits providers, token ranks and candidate sets.

pub mod http;
pub mod mock;
pub mod mock_server;
pub mod tokenizer;
mod vocab;

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use tokenizer::{Token, TokenId, Tokenizer, VocabTokenizer, BUILTIN_TOKENIZER_ID};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid provider response: {0}")]
    Response(String),
    #[error("provider returned {returned} of {requested} biased tokens (top-k truncated)")]
    Truncated { requested: usize, returned: usize },
    #[error("position ineligible: {0}")]
    Ineligible(String),
}

impl ModelError {
    /// Failures that may succeed on retry and that map to the transport exit code.
    pub fn is_transport(&self) -> bool {
        matches!(self, ModelError::Transport(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessMode {
    FullLogits,
    RestrictedTopk { k: usize, supports_bias: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub model_id: String,
    pub tokenizer_id: String,
    pub access_mode: AccessMode,
}

impl ModelHandle {
    /// Identity used for oracle matching; the access mode is not part of it.
    pub fn same_model(&self, other: &ModelHandle) -> bool {
        self.model_id == other.model_id && self.tokenizer_id == other.tokenizer_id
    }
}

/// Scores for the token following a prefix.
#[derive(Clone, Debug, PartialEq)]
pub enum LogitsView {
    /// One score per vocabulary id.
    Full(Vec<f64>),
    /// Scores for a requested subset, as returned by a top-k endpoint.
    Partial(Vec<(TokenId, f64)>),
}

impl LogitsView {
    pub fn len(&self) -> usize {
        match self {
            LogitsView::Full(s) => s.len(),
            LogitsView::Partial(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn score(&self, token: TokenId) -> Option<f64> {
        match self {
            LogitsView::Full(s) => s.get(token as usize).copied(),
            LogitsView::Partial(s) => s.iter().find(|(t, _)| *t == token).map(|&(_, v)| v),
        }
    }
}

/// A model that scores next tokens. Implementations must be shareable across
/// threads; retries and throttling are their own business.
pub trait LogitsProvider: Send + Sync {
    fn handle(&self) -> &ModelHandle;
    fn tokenizer(&self) -> Arc<dyn Tokenizer>;

    /// Full-vocabulary scores for the token after `tokens[..pos]`, for each
    /// `pos` in `positions`.
    fn full_logits(&self, tokens: &[TokenId], positions: &[usize]) -> Result<Vec<LogitsView>, ModelError>;

    /// Top-`k` log-probabilities for the token after `prefix`, with `bias`
    /// added to the listed tokens' logits before normalization.
    fn top_logprobs(
        &self,
        prefix: &[TokenId],
        bias: &[(TokenId, f64)],
        k: usize,
    ) -> Result<LogitsView, ModelError>;

    fn next_logits(&self, prefix: &[TokenId]) -> Result<LogitsView, ModelError> {
        let mut views = self.full_logits(prefix, &[prefix.len()])?;
        views
            .pop()
            .ok_or_else(|| ModelError::Response("no logits returned".into()))
    }
}

/// Strict order of vocabulary ranks: higher score first, then lower id.
fn rank_cmp(a: (TokenId, f64), b: (TokenId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn full_scores(view: &LogitsView) -> Result<&[f64], ModelError> {
    match view {
        LogitsView::Full(s) => Ok(s),
        LogitsView::Partial(_) => Err(ModelError::Argument("a full-vocabulary view is required".into())),
    }
}

/// Rank of `token` in a full view: 1 is the highest score, ties go to the
/// smaller token id.
pub fn logits_rank(view: &LogitsView, token: TokenId) -> Result<usize, ModelError> {
    let scores = full_scores(view)?;
    let own = *scores
        .get(token as usize)
        .ok_or_else(|| ModelError::Argument(format!("token {token} is outside the vocabulary")))?;
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(id, &s)| rank_cmp((id as TokenId, s), (token, own)) == Ordering::Less)
        .count();
    Ok(ahead + 1)
}

/// All vocabulary ids sorted by rank; `order[r - 1]` has rank `r`.
pub fn rank_order(view: &LogitsView) -> Result<Vec<TokenId>, ModelError> {
    let scores = full_scores(view)?;
    let mut pairs: Vec<(TokenId, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as TokenId, s)).collect();
    pairs.sort_unstable_by(|&a, &b| rank_cmp(a, b));
    Ok(pairs.into_iter().map(|(t, _)| t).collect())
}

/// The `m` interchangeable tokens for one mark position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ascending oracle rank.
    pub tokens: Vec<TokenId>,
    pub original_index: usize,
    pub oracle_rank_of_original: usize,
}

impl CandidateSet {
    pub fn m(&self) -> usize {
        self.tokens.len()
    }

    pub fn original(&self) -> TokenId {
        self.tokens[self.original_index]
    }

    pub fn index_of(&self, token: TokenId) -> Option<usize> {
        self.tokens.iter().position(|&t| t == token)
    }

    /// Hex SHA-256 over `m`, `P` and the token ids, all little-endian u64.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"rankmark-candidates-v1");
        h.update((self.tokens.len() as u64).to_le_bytes());
        h.update((self.oracle_rank_of_original as u64).to_le_bytes());
        for &t in &self.tokens {
            h.update((t as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Builds the candidate set from a full oracle view.
///
/// The starting window holds ranks `P - m/2 ..= P + ceil(m/2) - 1`. Tokens
/// rejected by `valid` are dropped (the original never is) and the window
/// grows one rank at a time, lower side first, alternating, until `m`
/// tokens are held.
pub fn candidate_set_from_view(
    view: &LogitsView,
    original: TokenId,
    m: usize,
    valid: &dyn Fn(TokenId) -> bool,
) -> Result<CandidateSet, ModelError> {
    if m < 2 {
        return Err(ModelError::Argument(format!("m must be at least 2, got {m}")));
    }
    let scores = full_scores(view)?;
    let vocab = scores.len();
    let p = logits_rank(view, original)?;
    if p <= m / 2 {
        return Err(ModelError::Ineligible(format!(
            "oracle rank {p} leaves no room for a window of {m}"
        )));
    }
    let lo = p - m / 2;
    let hi = (p + m.div_ceil(2) - 1).min(vocab);
    // Only ranks near the window are ever looked at, so order a band around
    // it and widen the band if the filter still wants more.
    let mut margin = m;
    loop {
        let band = RankBand::new(scores, lo.saturating_sub(margin).max(1), (hi + margin).min(vocab));
        match select_window(&band, original, p, lo, hi, m, vocab, valid)? {
            Some(ranks) => {
                let tokens: Vec<TokenId> = ranks.iter().map(|&r| band.at(r)).collect();
                let original_index = ranks.iter().position(|&r| r == p).expect("original retained");
                return Ok(CandidateSet {
                    tokens,
                    original_index,
                    oracle_rank_of_original: p,
                });
            }
            None => margin *= 4,
        }
    }
}

/// Token ids holding ranks `first..=last`, in rank order.
struct RankBand {
    first: usize,
    ids: Vec<TokenId>,
}

impl RankBand {
    fn new(scores: &[f64], first: usize, last: usize) -> Self {
        let mut pairs: Vec<(TokenId, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as TokenId, s)).collect();
        if last < pairs.len() {
            pairs.select_nth_unstable_by(last - 1, |&a, &b| rank_cmp(a, b));
            pairs.truncate(last);
        }
        if first > 1 {
            pairs.select_nth_unstable_by(first - 2, |&a, &b| rank_cmp(a, b));
        }
        let mut band = pairs.split_off(first - 1);
        band.sort_unstable_by(|&a, &b| rank_cmp(a, b));
        RankBand {
            first,
            ids: band.into_iter().map(|(t, _)| t).collect(),
        }
    }

    fn contains(&self, rank: usize) -> bool {
        rank >= self.first && rank < self.first + self.ids.len()
    }

    fn at(&self, rank: usize) -> TokenId {
        self.ids[rank - self.first]
    }
}

/// Accepted ranks in ascending order, or `None` when the band is too narrow.
#[allow(clippy::too_many_arguments)]
fn select_window(
    band: &RankBand,
    original: TokenId,
    p: usize,
    lo: usize,
    hi: usize,
    m: usize,
    vocab: usize,
    valid: &dyn Fn(TokenId) -> bool,
) -> Result<Option<Vec<usize>>, ModelError> {
    debug_assert_eq!(band.at(p), original);
    let accept = |rank: usize| {
        let t = band.at(rank);
        t == original || valid(t)
    };
    let mut ranks: Vec<usize> = (lo..=hi).filter(|&r| accept(r)).collect();
    let (mut below, mut above) = (lo - 1, hi + 1);
    let mut low_turn = true;
    while ranks.len() < m {
        let low_open = below >= 1;
        let high_open = above <= vocab;
        if !low_open && !high_open {
            return Err(ModelError::Ineligible(format!(
                "only {} valid candidates in the whole vocabulary, need {m}",
                ranks.len()
            )));
        }
        if (low_turn && low_open) || !high_open {
            if !band.contains(below) {
                return Ok(None);
            }
            if accept(below) {
                ranks.push(below);
            }
            below -= 1;
        } else {
            if !band.contains(above) {
                return Ok(None);
            }
            if accept(above) {
                ranks.push(above);
            }
            above += 1;
        }
        low_turn = !low_turn;
    }
    ranks.sort_unstable();
    Ok(Some(ranks))
}

/// Queries the oracle on `prefix` and builds the candidate set there.
pub fn build_candidate_set(
    oracle: &dyn LogitsProvider,
    prefix: &[TokenId],
    original: TokenId,
    m: usize,
    valid: &dyn Fn(TokenId) -> bool,
) -> Result<CandidateSet, ModelError> {
    let view = oracle.next_logits(prefix)?;
    candidate_set_from_view(&view, original, m, valid)
}

/// Rank of candidate `published` among `scores` (one per candidate, in
/// candidate order) by descending score; ties go to the earlier candidate.
pub fn loss_rank(scores: &[f64], published: usize) -> usize {
    let own = scores[published];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > own || (s == own && i < published))
        .count()
}

/// The additive bias applied to every candidate in restricted mode.
pub const RESTRICTED_BIAS: f64 = 90.0;

/// Rank of the published token's loss among the candidates under `target`,
/// in `[1, m]`.
pub fn published_loss_rank(
    target: &dyn LogitsProvider,
    prefix: &[TokenId],
    candidates: &CandidateSet,
    published: TokenId,
) -> Result<usize, ModelError> {
    let idx = candidates
        .index_of(published)
        .ok_or_else(|| ModelError::Argument(format!("published token {published} is not a candidate")))?;
    let scores = match target.handle().access_mode {
        AccessMode::FullLogits => {
            let view = target.next_logits(prefix)?;
            candidate_scores(&view, candidates)?
        }
        AccessMode::RestrictedTopk { k, supports_bias } => {
            restricted_scores(target, prefix, candidates, k, supports_bias)?
        }
    };
    Ok(loss_rank(&scores, idx))
}

/// Reads the candidates' scores out of a full view.
pub fn candidate_scores(view: &LogitsView, candidates: &CandidateSet) -> Result<Vec<f64>, ModelError> {
    let scores = full_scores(view)?;
    candidates
        .tokens
        .iter()
        .map(|&t| {
            let s = *scores
                .get(t as usize)
                .ok_or_else(|| ModelError::Response(format!("no score for token {t}")))?;
            if s.is_nan() {
                return Err(ModelError::Response(format!("NaN score for token {t}")));
            }
            Ok(s)
        })
        .collect()
}

/// Biases every candidate by the same constant so all enter the top-k,
/// then reads their log-probabilities. A uniform shift keeps their order.
pub fn restricted_scores(
    target: &dyn LogitsProvider,
    prefix: &[TokenId],
    candidates: &CandidateSet,
    k: usize,
    supports_bias: bool,
) -> Result<Vec<f64>, ModelError> {
    let m = candidates.m();
    if !supports_bias {
        return Err(ModelError::Config("restricted access needs logit bias support".into()));
    }
    if m > k {
        return Err(ModelError::Config(format!(
            "restricted access returns top-{k}, which cannot hold m = {m} candidates"
        )));
    }
    let bias: Vec<(TokenId, f64)> = candidates.tokens.iter().map(|&t| (t, RESTRICTED_BIAS)).collect();
    let view = target.top_logprobs(prefix, &bias, k)?;
    let mut out = Vec::with_capacity(m);
    let mut missing = 0;
    for &t in &candidates.tokens {
        match view.score(t) {
            Some(s) if s.is_nan() => return Err(ModelError::Response(format!("NaN logprob for token {t}"))),
            Some(s) => out.push(s),
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(ModelError::Truncated {
            requested: m,
            returned: m - missing,
        });
    }
    Ok(out)
}
