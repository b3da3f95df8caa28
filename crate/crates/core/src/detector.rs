//! Repository-level detection.
//!
//! For every recorded mark the detector rebuilds the candidate set from the
//! published file and the oracle, checks it against the manifest's
//! fingerprint, and asks the target model where the published token's loss
//! ranks among the candidates. The rank sum is tested against the exact
//! null threshold computed for the marks that survived.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astmark::{extract_local_variables, identifier_universe, FileView};
use crate::hash::sha256_hex;
use crate::marker::{candidates_for, mark_universe, CandidateContext, FileManifest, MarkError, RepoManifest};
use crate::model::{
    candidate_scores, loss_rank, published_loss_rank, AccessMode, CandidateSet, LogitsProvider, ModelError,
    ModelHandle, TokenId,
};
use crate::nulldist::{self, NullDistError, Probability};

pub const REPORT_NOTICE: &str = "The false-detection bound holds for this single test at the stated p, fixed \
before the audit. It does not cover repeated audits of the same repository or a p chosen after seeing the \
p-value.";

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("oracle mismatch: manifest was made with {expected}, supplied oracle is {actual}")]
    OracleMismatch { expected: String, actual: String },
    #[error("tokenizer mismatch: target uses {target}, oracle uses {oracle}")]
    TokenizerMismatch { target: String, oracle: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Manifest(#[from] MarkError),
    #[error(transparent)]
    NullDist(#[from] NullDistError),
}

impl DetectError {
    /// Violated preconditions the caller can fix, as opposed to failures
    /// while running.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            DetectError::OracleMismatch { .. } | DetectError::TokenizerMismatch { .. } | DetectError::Model(ModelError::Config(_))
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Detected,
    NotDetected,
    Undetectable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub model_id: String,
    pub tokenizer_id: String,
}

impl From<&ModelHandle> for ModelRef {
    fn from(h: &ModelHandle) -> Self {
        Self {
            model_id: h.model_id.clone(),
            tokenizer_id: h.tokenizer_id.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkRank {
    pub file: String,
    pub token_index: usize,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedMark {
    pub file: String,
    pub token_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub notice: String,
    pub oracle: ModelRef,
    pub target: ModelRef,
    pub n: usize,
    pub m: usize,
    pub p: Probability,
    /// `None` when no threshold exists at this `n`, `m`, `p`.
    pub threshold: Option<u64>,
    /// Exact `Pr(S <= T)` under the null, as `count/m^n`.
    pub cdf_at_threshold: Option<String>,
    pub rank_sum: u64,
    pub decision: Decision,
    /// Exact `Pr(S' <= S)` under the null; absent when `n == 0`.
    pub p_value: Option<String>,
    pub marks: Vec<MarkRank>,
    pub dropped: Vec<DroppedMark>,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Exact p-value `Pr(S' <= s)` for `n` marks of `m` versions.
pub fn pvalue(n: u64, m: u64, s: u64) -> Result<nulldist::ExactProb, NullDistError> {
    nulldist::pvalue(n, m, s)
}

/// Threshold, rank sum, decision and p-value for a list of surviving ranks.
pub fn decide(ranks: &[usize], m: usize, p: &Probability) -> Result<(Option<u64>, Option<String>, u64, Decision, Option<String>), NullDistError> {
    let s: u64 = ranks.iter().map(|&r| r as u64).sum();
    if ranks.is_empty() {
        return Ok((None, None, 0, Decision::Undetectable, None));
    }
    let n = ranks.len() as u64;
    let dist = nulldist::shared_pdf(n, m as u64)?;
    let threshold = dist.threshold(p);
    let pv = dist.pvalue(s)?;
    let decision = match threshold.t() {
        None => Decision::Undetectable,
        Some(t) if s <= t => Decision::Detected,
        Some(_) => Decision::NotDetected,
    };
    Ok((
        threshold.t(),
        threshold.exact_cdf_at_t.map(|c| c.to_string()),
        s,
        decision,
        Some(pv.to_string()),
    ))
}

struct Rebuilt {
    token_index: usize,
    published: TokenId,
    candidates: CandidateSet,
}

/// Per-file result: surviving marks with their candidate sets, in order,
/// plus the drops.
fn rebuild_file(
    entry: &FileManifest,
    published: Option<&[u8]>,
    oracle: &dyn LogitsProvider,
) -> Result<(Vec<TokenId>, Vec<Rebuilt>, Vec<DroppedMark>), DetectError> {
    let drop_all = |reason: &str| {
        entry
            .marks
            .iter()
            .map(|mk| DroppedMark {
                file: entry.path.clone(),
                token_index: mk.token_index,
                reason: reason.to_string(),
            })
            .collect::<Vec<_>>()
    };
    if entry.marks.is_empty() {
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    }
    let Some(src) = published else {
        log::warn!("{}: file missing from the published repository; its marks are dropped", entry.path);
        return Ok((Vec::new(), Vec::new(), drop_all("file missing")));
    };
    if sha256_hex(src) != entry.marked_sha256 {
        log::warn!("{}: content differs from the published digest; its marks are dropped", entry.path);
        return Ok((Vec::new(), Vec::new(), drop_all("digest mismatch")));
    }
    let tokenizer = oracle.tokenizer();
    let tokens = tokenizer.encode(src);
    let sites = match extract_local_variables(src, entry.language, &tokens) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: cannot analyze the published file ({e}); its marks are dropped", entry.path);
            return Ok((Vec::new(), Vec::new(), drop_all("analysis failed")));
        }
    };
    let file = FileView {
        src,
        tokens: &tokens,
        tokenizer: &*tokenizer,
    };
    let ids: Vec<TokenId> = tokens.iter().map(|t| t.id).collect();

    // The original file's universe: published names out, original names in.
    let mut base: HashSet<String> = identifier_universe(&file);
    for mk in &entry.marks {
        base.remove(&mk.published_token.name);
    }
    for mk in &entry.marks {
        base.insert(mk.original_token.name.clone());
    }

    let mut dropped = Vec::new();
    let mut drop = |token_index: usize, reason: String| {
        log::warn!("{} mark at token {token_index}: {reason}; dropped", entry.path);
        dropped.push(DroppedMark {
            file: entry.path.clone(),
            token_index,
            reason,
        });
    };
    let in_range: Vec<usize> = entry
        .marks
        .iter()
        .map(|mk| mk.token_index)
        .filter(|&d| d < ids.len())
        .collect();
    let views = oracle.full_logits(&ids, &in_range)?;
    let mut views = views.into_iter();
    let mut rebuilt = Vec::new();
    let mut earlier: Vec<String> = Vec::new();
    for mk in &entry.marks {
        let delta = mk.token_index;
        let published_name = mk.published_token.name.clone();
        if delta >= ids.len() {
            drop(delta, "position past the end of the file".into());
            earlier.push(published_name);
            continue;
        }
        let view = views.next().expect("one view per in-range mark");
        if ids[delta] != mk.published_token.id {
            drop(delta, "published token not found at the recorded position".into());
            earlier.push(published_name);
            continue;
        }
        let Some(site) = sites.iter().find(|s| s.first_occurrence_token_index == delta) else {
            drop(delta, "no variable starts at the recorded position".into());
            earlier.push(published_name);
            continue;
        };
        let universe = mark_universe(&base, &earlier);
        earlier.push(published_name);
        let ctx = CandidateContext {
            file,
            site,
            universe: &universe,
            m: mk.m,
        };
        let candidates = match candidates_for(&view, mk.original_token.id, &ctx) {
            Ok(c) => c,
            Err(ModelError::Ineligible(why)) => {
                drop(delta, format!("candidate set cannot be rebuilt: {why}"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if candidates.fingerprint() != mk.candidate_fingerprint {
            drop(delta, "candidate fingerprint mismatch".into());
            continue;
        }
        rebuilt.push(Rebuilt {
            token_index: delta,
            published: mk.published_token.id,
            candidates,
        });
    }
    Ok((ids, rebuilt, dropped))
}

fn target_ranks(target: &dyn LogitsProvider, ids: &[TokenId], marks: &[Rebuilt]) -> Result<Vec<usize>, ModelError> {
    if marks.is_empty() {
        return Ok(Vec::new());
    }
    match target.handle().access_mode {
        AccessMode::FullLogits => {
            let positions: Vec<usize> = marks.iter().map(|r| r.token_index).collect();
            let views = target.full_logits(ids, &positions)?;
            marks
                .iter()
                .zip(&views)
                .map(|(r, view)| {
                    let scores = candidate_scores(view, &r.candidates)?;
                    let idx = r.candidates.index_of(r.published).expect("published token is a candidate");
                    Ok(loss_rank(&scores, idx))
                })
                .collect()
        }
        AccessMode::RestrictedTopk { .. } => marks
            .iter()
            .map(|r| published_loss_rank(target, &ids[..r.token_index], &r.candidates, r.published))
            .collect(),
    }
}

fn check_models(manifest: &RepoManifest, oracle: &dyn LogitsProvider, target: &dyn LogitsProvider) -> Result<(), DetectError> {
    let o = oracle.handle();
    if !manifest.oracle.same_model(o) {
        return Err(DetectError::OracleMismatch {
            expected: format!("{} (tokenizer {})", manifest.oracle.model_id, manifest.oracle.tokenizer_id),
            actual: format!("{} (tokenizer {})", o.model_id, o.tokenizer_id),
        });
    }
    let t = target.handle();
    if t.tokenizer_id != o.tokenizer_id {
        return Err(DetectError::TokenizerMismatch {
            target: t.tokenizer_id.clone(),
            oracle: o.tokenizer_id.clone(),
        });
    }
    Ok(())
}

/// Detection over an in-memory published repository keyed by relative path.
pub fn detect_sources(
    published: &BTreeMap<String, Vec<u8>>,
    manifest: &RepoManifest,
    oracle: &dyn LogitsProvider,
    target: &dyn LogitsProvider,
    p: &Probability,
) -> Result<DetectionReport, DetectError> {
    check_models(manifest, oracle, target)?;
    let per_file: Vec<Result<(Vec<MarkRank>, Vec<DroppedMark>), DetectError>> = manifest
        .files
        .par_iter()
        .map(|entry| {
            let (ids, rebuilt, dropped) = rebuild_file(entry, published.get(&entry.path).map(|v| v.as_slice()), oracle)?;
            let ranks = target_ranks(target, &ids, &rebuilt)?;
            let marks = rebuilt
                .iter()
                .zip(ranks)
                .map(|(r, rank)| MarkRank {
                    file: entry.path.clone(),
                    token_index: r.token_index,
                    rank,
                })
                .collect();
            Ok((marks, dropped))
        })
        .collect();
    let mut marks = Vec::new();
    let mut dropped = Vec::new();
    for r in per_file {
        let (mk, dr) = r?;
        marks.extend(mk);
        dropped.extend(dr);
    }
    let m = manifest.params.m;
    let ranks: Vec<usize> = marks.iter().map(|r| r.rank).collect();
    let (threshold, cdf_at_threshold, rank_sum, decision, p_value) = decide(&ranks, m, p)?;
    Ok(DetectionReport {
        notice: REPORT_NOTICE.to_string(),
        oracle: oracle.handle().into(),
        target: target.handle().into(),
        n: marks.len(),
        m,
        p: p.clone(),
        threshold,
        cdf_at_threshold,
        rank_sum,
        decision,
        p_value,
        marks,
        dropped,
    })
}

/// Detection over a published repository on disk.
pub fn detect(
    root: &Path,
    manifest: &RepoManifest,
    oracle: &dyn LogitsProvider,
    target: &dyn LogitsProvider,
    p: &Probability,
) -> Result<DetectionReport, DetectError> {
    let mut published = BTreeMap::new();
    for entry in &manifest.files {
        let path = root.join(&entry.path);
        match fs::read(&path) {
            Ok(bytes) => {
                published.insert(entry.path.clone(), bytes);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(MarkError::io(&path, e).into()),
        }
    }
    detect_sources(&published, manifest, oracle, target, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::{mark_sources, MarkParams};
    use crate::model::mock::{MemorizingScorer, MockModel};

    const SAMPLE: &str = include_str!("../tests/fixtures/corpus/inventory.py");

    fn p05() -> Probability {
        "0.05".parse().unwrap()
    }

    #[test]
    fn pvalue_examples() {
        assert!(pvalue(1, 2, 1).unwrap().equals_ratio(1, 2));
        assert!(pvalue(3, 6, 3).unwrap().equals_ratio(1, 216));
        assert!(pvalue(2, 3, 6).unwrap().equals_ratio(1, 1));
        assert!(pvalue(3, 6, 2).is_err());
    }

    #[test]
    fn three_dice_decision() {
        let (t, cdf, s, decision, pv) = decide(&[1, 2, 1], 6, &p05()).unwrap();
        assert_eq!(t, Some(5));
        assert_eq!(cdf.as_deref(), Some("10/216"));
        assert_eq!(s, 4);
        assert_eq!(decision, Decision::Detected);
        assert_eq!(pv.as_deref(), Some("4/216"));
        let (_, _, _, decision, _) = decide(&[1], 2, &p05()).unwrap();
        assert_eq!(decision, Decision::Undetectable);
        let (_, _, _, decision, _) = decide(&[], 2, &p05()).unwrap();
        assert_eq!(decision, Decision::Undetectable);
    }

    fn marked(m: usize) -> (BTreeMap<String, Vec<u8>>, RepoManifest, MockModel) {
        let oracle = MockModel::new(5);
        let files = vec![("inventory.py".to_string(), SAMPLE.as_bytes().to_vec())];
        let (out, manifest) = mark_sources(&files, &oracle, &MarkParams { m, k: 10, r: 50 }, 8, vec![]).unwrap();
        (out.into_iter().collect(), manifest, oracle)
    }

    #[test]
    fn fingerprints_round_trip() {
        let (published, manifest, oracle) = marked(20);
        assert!(manifest.mark_count >= 3);
        let target = MockModel::new(77);
        let report = detect_sources(&published, &manifest, &oracle, &target, &p05()).unwrap();
        assert!(report.dropped.is_empty(), "{:?}", report.dropped);
        assert_eq!(report.n, manifest.mark_count);
        assert_eq!(report.rank_sum, report.marks.iter().map(|r| r.rank as u64).sum::<u64>());
    }

    #[test]
    fn memorizing_target_ranks_first() {
        let (published, manifest, oracle) = marked(20);
        let mut scorer = MemorizingScorer::new(77, 1e6, 1.0);
        let tok = oracle.tokenizer();
        scorer.train(&tok.encode(&published["inventory.py"]).iter().map(|t| t.id).collect::<Vec<_>>());
        let target = MockModel::memorizing(scorer);
        let report = detect_sources(&published, &manifest, &oracle, &target, &p05()).unwrap();
        assert!(report.marks.iter().all(|r| r.rank == 1));
        assert_eq!(report.decision, Decision::Detected);
    }

    #[test]
    fn tampering_drops_marks_before_the_threshold() {
        let (mut published, manifest, oracle) = marked(20);
        published.get_mut("inventory.py").unwrap().push(b'\n');
        let report = detect_sources(&published, &manifest, &oracle, &MockModel::new(1), &p05()).unwrap();
        assert_eq!(report.n, 0);
        assert_eq!(report.dropped.len(), manifest.mark_count);
        assert_eq!(report.decision, Decision::Undetectable);
        published.clear();
        let report = detect_sources(&published, &manifest, &oracle, &MockModel::new(1), &p05()).unwrap();
        assert!(report.dropped.iter().all(|d| d.reason == "file missing"));
    }

    #[test]
    fn forged_fingerprint_is_dropped() {
        let (published, mut manifest, oracle) = marked(20);
        manifest.files[0].marks[0].candidate_fingerprint = "00".repeat(32);
        let report = detect_sources(&published, &manifest, &oracle, &MockModel::new(1), &p05()).unwrap();
        assert_eq!(report.n, manifest.mark_count - 1);
        assert_eq!(report.dropped[0].reason, "candidate fingerprint mismatch");
    }

    #[test]
    fn wrong_oracle_is_refused() {
        let (published, manifest, _) = marked(20);
        let err = detect_sources(&published, &manifest, &MockModel::new(6), &MockModel::new(1), &p05()).unwrap_err();
        assert!(matches!(err, DetectError::OracleMismatch { .. }));
        assert!(err.is_precondition());
    }
}
