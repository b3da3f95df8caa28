//! Mark placement over files and repositories.
//!
//! Per file: screen local variables by the oracle rank of their first
//! occurrence on the original text, keep those ranked at least `R`, draw at
//! most `floor(L / K)` of them, then visit the chosen ones in file order.
//! Each chosen variable gets its candidate set from the oracle on the
//! *already marked* prefix, one candidate is drawn uniformly and every
//! occurrence is renamed to it. The detector repeats the same construction
//! on the published file, so both sides see identical prefixes.

pub mod manifest;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::astmark::{
    candidate_name, count_lines, identifier_universe, python, rebase_sites, rename_parsed, sites_from_tree,
    validity_filter, AstError, FileView, Language, RenamePlan, VariableSite,
};
use crate::hash::{derive_seed, sha256_hex};
use crate::model::{candidate_set_from_view, logits_rank, LogitsProvider, ModelError, Token, TokenId, Tokenizer};
pub use manifest::{FileManifest, MarkRecord, RepoManifest, TokenRecord, PRIVATE_NOTICE, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum MarkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid include pattern: {0}")]
    Glob(String),
    #[error("output: {0}")]
    Output(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl MarkError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        MarkError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkParams {
    /// Versions per mark.
    pub m: usize,
    /// Sparsity: at most one mark per `k` lines.
    #[serde(rename = "K")]
    pub k: usize,
    /// Minimum oracle rank of an eligible first occurrence.
    #[serde(rename = "R")]
    pub r: usize,
}

impl Default for MarkParams {
    fn default() -> Self {
        Self { m: 100, k: 100, r: 500 }
    }
}

impl MarkParams {
    pub fn validate(&self) -> Result<(), MarkError> {
        if self.m < 2 {
            return Err(MarkError::Params(format!("m must be at least 2, got {}", self.m)));
        }
        if self.k == 0 {
            return Err(MarkError::Params("K must be positive".into()));
        }
        if self.r == 0 {
            return Err(MarkError::Params("R must be positive".into()));
        }
        Ok(())
    }
}

/// Independent random streams for one file.
pub struct FileRng {
    pub subsample: ChaCha20Rng,
    pub publish: ChaCha20Rng,
}

impl FileRng {
    /// Streams keyed by the repository seed and the file's relative path, so
    /// one file's draws do not depend on which other files exist.
    pub fn for_file(seed: u64, path: &str) -> Self {
        Self {
            subsample: ChaCha20Rng::from_seed(derive_seed(seed, &format!("subsample:{path}"))),
            publish: ChaCha20Rng::from_seed(derive_seed(seed, &format!("publish:{path}"))),
        }
    }
}

fn token_record(tokenizer: &dyn Tokenizer, id: TokenId) -> TokenRecord {
    let text = tokenizer.token_text(id);
    TokenRecord {
        id,
        name: text.trim_start().to_string(),
        text,
    }
}

fn ids(tokens: &[Token]) -> Vec<TokenId> {
    tokens.iter().map(|t| t.id).collect()
}

/// Universe for mark `j`: the original file's names plus the names already
/// published for marks before `j`.
pub fn mark_universe(original: &HashSet<String>, earlier_published: &[String]) -> HashSet<String> {
    let mut u = original.clone();
    u.extend(earlier_published.iter().cloned());
    u
}

/// Everything the detector needs to rebuild a mark's candidate set.
pub struct CandidateContext<'a> {
    pub file: FileView<'a>,
    pub site: &'a VariableSite,
    pub universe: &'a HashSet<String>,
    pub m: usize,
}

/// Candidate set for a site from the full oracle view at its position.
pub fn candidates_for(
    view: &crate::model::LogitsView,
    original: TokenId,
    ctx: &CandidateContext,
) -> Result<crate::model::CandidateSet, ModelError> {
    let filter = |t: TokenId| validity_filter(t, ctx.site, ctx.universe, &ctx.file);
    candidate_set_from_view(view, original, ctx.m, &filter)
}

/// Renaming preserved the token stream except at the renamed occurrences.
fn aligned(before: &[Token], after: &[Token], site: &VariableSite, published: TokenId) -> bool {
    if before.len() != after.len() {
        return false;
    }
    let renamed: HashSet<usize> = site.occurrences.iter().map(|o| o.token_index).collect();
    before.iter().zip(after).enumerate().all(|(i, (b, a))| {
        if i == site.first_occurrence_token_index {
            a.id == published
        } else {
            renamed.contains(&i) || a.id == b.id
        }
    })
}

/// Marks one file. Returns the marked bytes and the file's manifest entry
/// (with `path` left for the caller to fill in).
pub fn mark_file(
    src: &[u8],
    language: Language,
    oracle: &dyn LogitsProvider,
    params: &MarkParams,
    rng: &mut FileRng,
) -> Result<(Vec<u8>, FileManifest), MarkError> {
    params.validate()?;
    let Language::Python = language;
    let tokenizer = oracle.tokenizer();
    let lines = count_lines(src);
    let budget = lines / params.k;
    let mut entry = FileManifest {
        path: String::new(),
        language,
        original_sha256: sha256_hex(src),
        marked_sha256: sha256_hex(src),
        lines,
        budget,
        eligible_sites: 0,
        marks: Vec::new(),
        skipped: None,
    };
    let tokens = tokenizer.encode(src);
    let parsed = std::str::from_utf8(src)
        .map_err(|_| AstError::Encoding)
        .and_then(|_| python::parse(src))
        .and_then(|tree| sites_from_tree(src, &tree, &tokens).map(|s| (tree, s)));
    let (mut tree, mut sites) = match parsed {
        Ok(p) => p,
        Err(e @ (AstError::Syntax(_) | AstError::Encoding)) => {
            entry.skipped = Some(e.to_string());
            return Ok((src.to_vec(), entry));
        }
        Err(e) => return Err(MarkError::Internal(e.to_string())),
    };
    if sites.is_empty() || tokens.is_empty() {
        return Ok((src.to_vec(), entry));
    }

    let token_ids = ids(&tokens);
    let positions: Vec<usize> = sites.iter().map(|s| s.first_occurrence_token_index).collect();
    let views = oracle.full_logits(&token_ids, &positions)?;
    let mut eligible = Vec::new();
    for (site, view) in sites.iter().zip(&views) {
        if logits_rank(view, tokens[site.first_occurrence_token_index].id)? >= params.r {
            eligible.push(site.first_occurrence_token_index);
        }
    }
    entry.eligible_sites = eligible.len();
    let mut chosen: Vec<usize> = if eligible.len() > budget {
        sample(&mut rng.subsample, eligible.len(), budget)
            .into_iter()
            .map(|i| eligible[i])
            .collect()
    } else {
        eligible
    };
    chosen.sort_unstable();

    let original_universe = identifier_universe(&FileView {
        src,
        tokens: &tokens,
        tokenizer: &*tokenizer,
    });
    let mut current = src.to_vec();
    let mut current_tokens = tokens;
    let mut published_names: Vec<String> = Vec::new();
    let mut marks = Vec::new();
    for delta in chosen {
        let site = sites
            .iter()
            .find(|s| s.first_occurrence_token_index == delta)
            .expect("chosen sites come from the site list")
            .clone();
        let site = &site;
        let original = current_tokens[delta].id;
        let prefix = ids(&current_tokens[..delta]);
        let view = oracle.next_logits(&prefix)?;
        if logits_rank(&view, original)? < params.r {
            log::debug!("site {} at token {delta}: rank fell below R on the marked prefix", site.name);
            continue;
        }
        let universe = mark_universe(&original_universe, &published_names);
        let ctx = CandidateContext {
            file: FileView {
                src: &current,
                tokens: &current_tokens,
                tokenizer: &*tokenizer,
            },
            site,
            universe: &universe,
            m: params.m,
        };
        let candidates = match candidates_for(&view, original, &ctx) {
            Ok(c) => c,
            Err(ModelError::Ineligible(why)) => {
                log::debug!("site {} at token {delta}: {why}", site.name);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let drawn = rng.publish.random_range(0..candidates.m());
        let published = candidates.tokens[drawn];
        let new_name = candidate_name(&*tokenizer, published)
            .ok_or_else(|| MarkError::Internal(format!("candidate {published} is not an identifier")))?;
        let plan = RenamePlan {
            site: site.clone(),
            new_name: new_name.clone(),
        };
        let (next, next_tree) = match rename_parsed(&current, &tree, &plan) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("rename {} -> {new_name} at token {delta} refused: {e}", site.name);
                continue;
            }
        };
        let next_tokens = tokenizer.encode(&next);
        if !aligned(&current_tokens, &next_tokens, site, published) {
            log::warn!("rename {} -> {new_name} at token {delta} shifts tokenization; skipped", site.name);
            continue;
        }
        let changed = published != original;
        marks.push(MarkRecord {
            token_index: delta,
            byte_span: 0..0,
            original_token: token_record(&*tokenizer, original),
            published_token: token_record(&*tokenizer, published),
            m: candidates.m(),
            oracle_rank_p: candidates.oracle_rank_of_original,
            candidate_fingerprint: candidates.fingerprint(),
            occurrences: site.occurrences.len(),
            occurrences_renamed: if changed { site.occurrences.len() } else { 0 },
        });
        published_names.push(new_name);
        rebase_sites(&mut sites, &plan);
        current = next;
        current_tokens = next_tokens;
        tree = next_tree;
    }
    for mark in &mut marks {
        let t = current_tokens[mark.token_index];
        let start = if current[t.start] == b' ' { t.start + 1 } else { t.start };
        mark.byte_span = start..t.end;
    }
    entry.marked_sha256 = sha256_hex(&current);
    entry.marks = marks;
    Ok((current, entry))
}

/// A marked repository held in memory.
#[derive(Debug)]
pub struct MarkedRepo {
    /// Marked candidate files, by relative path, in manifest order.
    pub marked: Vec<(String, Vec<u8>)>,
    /// Files outside the include patterns, copied verbatim.
    pub copied: Vec<String>,
    pub manifest: RepoManifest,
}

pub fn build_globset(include: &[String]) -> Result<globset::GlobSet, MarkError> {
    let mut b = globset::GlobSetBuilder::new();
    for pat in include {
        let g = globset::GlobBuilder::new(pat)
            .literal_separator(true)
            .build()
            .map_err(|e| MarkError::Glob(format!("{pat}: {e}")))?;
        b.add(g);
    }
    b.build().map_err(|e| MarkError::Glob(e.to_string()))
}

pub const DEFAULT_INCLUDE: &str = "**/*.py";

/// Relative `/`-separated paths of all regular files under `root`, sorted,
/// skipping `.git`.
pub fn list_files(root: &Path) -> Result<Vec<String>, MarkError> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git")
    {
        let entry = entry.map_err(|e| {
            let p = e.path().unwrap_or(root).to_path_buf();
            MarkError::io(&p, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(|e| MarkError::Internal(e.to_string()))?;
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        out.push(parts.join("/"));
    }
    out.sort();
    Ok(out)
}

/// Marks a set of in-memory files, in parallel, in path order.
pub fn mark_sources(
    files: &[(String, Vec<u8>)],
    oracle: &dyn LogitsProvider,
    params: &MarkParams,
    seed: u64,
    include: Vec<String>,
) -> Result<(Vec<(String, Vec<u8>)>, RepoManifest), MarkError> {
    params.validate()?;
    let mut sorted: Vec<&(String, Vec<u8>)> = files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let results: Vec<Result<(String, Vec<u8>, FileManifest), MarkError>> = sorted
        .par_iter()
        .map(|(path, src)| {
            let language = Language::from_path(Path::new(path)).unwrap_or(Language::Python);
            let mut rng = FileRng::for_file(seed, path);
            let (bytes, mut entry) = mark_file(src, language, oracle, params, &mut rng)?;
            entry.path = path.clone();
            Ok((path.clone(), bytes, entry))
        })
        .collect();
    let mut marked = Vec::with_capacity(results.len());
    let mut entries = Vec::with_capacity(results.len());
    for r in results {
        let (path, bytes, entry) = r?;
        marked.push((path, bytes));
        entries.push(entry);
    }
    let manifest = RepoManifest::new(oracle.handle().clone(), *params, seed, include, entries);
    Ok((marked, manifest))
}

/// Reads and marks every file under `root` matching `include`.
pub fn mark_repository(
    root: &Path,
    include: &[String],
    oracle: &dyn LogitsProvider,
    params: &MarkParams,
    seed: u64,
) -> Result<MarkedRepo, MarkError> {
    let globs = build_globset(include)?;
    let mut sources = Vec::new();
    let mut copied = Vec::new();
    for rel in list_files(root)? {
        if globs.is_match(&rel) {
            let path = root.join(&rel);
            let bytes = fs::read(&path).map_err(|e| MarkError::io(&path, e))?;
            sources.push((rel, bytes));
        } else {
            copied.push(rel);
        }
    }
    let (marked, manifest) = mark_sources(&sources, oracle, params, seed, include.to_vec())?;
    Ok(MarkedRepo {
        marked,
        copied,
        manifest,
    })
}

/// Writes the marked tree to `out` and the manifest to `manifest_path`.
///
/// `out` must not exist or be an empty directory. The tree is assembled in
/// a sibling staging directory and renamed into place after the manifest is
/// written, so a failure leaves neither behind.
pub fn write_marked_repo(repo: &MarkedRepo, root: &Path, out: &Path, manifest_path: &Path) -> Result<(), MarkError> {
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| MarkError::io(out, e))?;
        if entries.next().is_some() {
            return Err(MarkError::Output(format!("{} exists and is not empty", out.display())));
        }
    }
    let out_abs = if out.is_absolute() {
        out.to_path_buf()
    } else {
        std::env::current_dir().map_err(|e| MarkError::io(out, e))?.join(out)
    };
    let parent = out_abs
        .parent()
        .ok_or_else(|| MarkError::Output(format!("{} has no parent directory", out.display())))?;
    fs::create_dir_all(parent).map_err(|e| MarkError::io(parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".rankmark-staging-")
        .tempdir_in(parent)
        .map_err(|e| MarkError::io(parent, e))?;
    let write = |rel: &str, bytes: &[u8]| -> Result<(), MarkError> {
        let dst = staging.path().join(rel);
        if let Some(d) = dst.parent() {
            fs::create_dir_all(d).map_err(|e| MarkError::io(d, e))?;
        }
        fs::write(&dst, bytes).map_err(|e| MarkError::io(&dst, e))
    };
    for (rel, bytes) in &repo.marked {
        write(rel, bytes)?;
    }
    for rel in &repo.copied {
        let src = root.join(rel);
        let bytes = fs::read(&src).map_err(|e| MarkError::io(&src, e))?;
        write(rel, &bytes)?;
    }
    repo.manifest.write(manifest_path)?;
    if out_abs.exists() {
        fs::remove_dir(&out_abs).map_err(|e| MarkError::io(&out_abs, e))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, &out_abs).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        MarkError::io(&out_abs, e)
    })?;
    Ok(())
}
