//! The private marking record and its on-disk form.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MarkError, MarkParams};
use crate::astmark::Language;
use crate::model::{ModelHandle, TokenId};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRIVATE_NOTICE: &str = "PRIVATE - KEEP SECRET. This manifest records where every mark is and which \
token was published. Anyone holding it can strip or forge the marks, and disclosing it voids the audit.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: TokenId,
    /// Decoded token text, including any merged leading space.
    pub text: String,
    /// The identifier the token spells.
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkRecord {
    /// Position in oracle-token coordinates; the original token was the
    /// `token_index`-th token of the file, counted from zero.
    pub token_index: usize,
    /// Identifier bytes of the first occurrence in the marked file.
    pub byte_span: Range<usize>,
    pub original_token: TokenRecord,
    pub published_token: TokenRecord,
    pub m: usize,
    pub oracle_rank_p: usize,
    pub candidate_fingerprint: String,
    /// Occurrences of the variable.
    pub occurrences: usize,
    /// Occurrences whose token changed: all of them, or zero when the
    /// original name was drawn.
    pub occurrences_renamed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileManifest {
    /// Relative to the repository root, `/`-separated.
    pub path: String,
    pub language: Language,
    pub original_sha256: String,
    pub marked_sha256: String,
    pub lines: usize,
    /// `floor(lines / K)`.
    pub budget: usize,
    pub eligible_sites: usize,
    pub marks: Vec<MarkRecord>,
    /// Why the file was published unmarked, if it could not be analyzed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoManifest {
    pub notice: String,
    pub schema_version: u32,
    pub oracle: ModelHandle,
    pub params: MarkParams,
    /// Seed of the site subsampling and publication draws.
    pub seed: u64,
    pub include: Vec<String>,
    /// N.
    pub file_count: usize,
    /// n.
    pub mark_count: usize,
    pub files: Vec<FileManifest>,
}

impl RepoManifest {
    pub fn new(oracle: ModelHandle, params: MarkParams, seed: u64, include: Vec<String>, files: Vec<FileManifest>) -> Self {
        Self {
            notice: PRIVATE_NOTICE.to_string(),
            schema_version: SCHEMA_VERSION,
            oracle,
            params,
            seed,
            include,
            file_count: files.len(),
            mark_count: files.iter().map(|f| f.marks.len()).sum(),
            files,
        }
    }

    /// Checks the recorded counts and per-file invariants.
    pub fn validate(&self) -> Result<(), MarkError> {
        let bad = |msg: String| Err(MarkError::Manifest(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        if self.file_count != self.files.len() {
            return bad(format!("file_count {} but {} files listed", self.file_count, self.files.len()));
        }
        let n: usize = self.files.iter().map(|f| f.marks.len()).sum();
        if self.mark_count != n {
            return bad(format!("mark_count {} but {n} marks listed", self.mark_count));
        }
        for f in &self.files {
            if f.marks.len() > f.budget {
                return bad(format!("{}: {} marks exceed budget {}", f.path, f.marks.len(), f.budget));
            }
            if f.marks.windows(2).any(|w| w[0].token_index >= w[1].token_index) {
                return bad(format!("{}: marks are not strictly increasing", f.path));
            }
            if f.marks.iter().any(|m| m.m != self.params.m) {
                return bad(format!("{}: mark with m differing from the parameter block", f.path));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MarkError> {
        let m: RepoManifest =
            serde_json::from_str(text).map_err(|e| MarkError::Manifest(format!("not a valid manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self, MarkError> {
        let text = std::fs::read_to_string(path).map_err(|e| MarkError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Atomic write (temporary file then rename) with owner-only access.
    pub fn write(&self, path: &Path) -> Result<(), MarkError> {
        write_private(path, self.to_json().as_bytes())
    }
}

pub(crate) fn write_private(path: &Path, bytes: &[u8]) -> Result<(), MarkError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".rankmark-")
        .tempfile_in(dir)
        .map_err(|e| MarkError::io(dir, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o600)).map_err(|e| MarkError::io(path, e))?;
    }
    tmp.write_all(bytes).map_err(|e| MarkError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| MarkError::io(path, e))?;
    tmp.persist(path).map_err(|e| MarkError::io(path, e.error))?;
    Ok(())
}
