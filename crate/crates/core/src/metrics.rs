//! How much marking changed the code.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::marker::RepoManifest;
use crate::model::{TokenId, Tokenizer};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Levenshtein distance between the two files' token-id sequences.
pub fn token_edit_distance(original: &[u8], marked: &[u8], tokenizer: &dyn Tokenizer) -> usize {
    let a: Vec<TokenId> = tokenizer.encode(original).iter().map(|t| t.id).collect();
    let b: Vec<TokenId> = tokenizer.encode(marked).iter().map(|t| t.id).collect();
    levenshtein(&a, &b)
}

pub fn levenshtein<T: Eq>(a: &[T], b: &[T]) -> usize {
    // Shared ends never contribute; trimming them keeps the table small for
    // files that differ in a few places.
    let pre = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[pre..], &b[pre..]);
    let suf = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[..a.len() - suf], &b[..b.len() - suf]);
    if a.is_empty() || b.is_empty() {
        return a.len().max(b.len());
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileImpact {
    pub path: String,
    pub lines: usize,
    pub budget: usize,
    pub marks_injected: usize,
    pub occurrences_renamed: usize,
    pub tokens_modified: usize,
    pub edit_distance_per_100_loc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImpactSummary {
    pub files: Vec<FileImpact>,
    pub total: FileImpact,
    /// Manifest files absent from either tree.
    pub missing: Vec<String>,
}

fn per_100(tokens: usize, lines: usize) -> f64 {
    if lines == 0 {
        0.0
    } else {
        tokens as f64 * 100.0 / lines as f64
    }
}

/// Summary over in-memory trees keyed by relative path.
pub fn impact_from_sources(
    manifest: &RepoManifest,
    original: &BTreeMap<String, Vec<u8>>,
    marked: &BTreeMap<String, Vec<u8>>,
    tokenizer: &dyn Tokenizer,
) -> ImpactSummary {
    let rows: Vec<Result<FileImpact, String>> = manifest
        .files
        .par_iter()
        .map(|f| {
            let (Some(a), Some(b)) = (original.get(&f.path), marked.get(&f.path)) else {
                log::warn!("{}: missing from the original or the marked tree", f.path);
                return Err(f.path.clone());
            };
            let tokens_modified = token_edit_distance(a, b, tokenizer);
            Ok(FileImpact {
                path: f.path.clone(),
                lines: f.lines,
                budget: f.budget,
                marks_injected: f.marks.len(),
                occurrences_renamed: f.marks.iter().map(|m| m.occurrences_renamed).sum(),
                tokens_modified,
                edit_distance_per_100_loc: per_100(tokens_modified, f.lines),
            })
        })
        .collect();
    let mut files = Vec::new();
    let mut missing = Vec::new();
    for r in rows {
        match r {
            Ok(f) => files.push(f),
            Err(p) => missing.push(p),
        }
    }
    let mut total = FileImpact {
        path: "TOTAL".into(),
        lines: 0,
        budget: 0,
        marks_injected: 0,
        occurrences_renamed: 0,
        tokens_modified: 0,
        edit_distance_per_100_loc: 0.0,
    };
    for f in &files {
        total.lines += f.lines;
        total.budget += f.budget;
        total.marks_injected += f.marks_injected;
        total.occurrences_renamed += f.occurrences_renamed;
        total.tokens_modified += f.tokens_modified;
    }
    total.edit_distance_per_100_loc = per_100(total.tokens_modified, total.lines);
    ImpactSummary { files, total, missing }
}

fn read_tree(root: &Path, manifest: &RepoManifest) -> Result<BTreeMap<String, Vec<u8>>, MetricsError> {
    let mut out = BTreeMap::new();
    for f in &manifest.files {
        let path = root.join(&f.path);
        match fs::read(&path) {
            Ok(b) => {
                out.insert(f.path.clone(), b);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => {
                return Err(MetricsError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        }
    }
    Ok(out)
}

/// Summary over the original and marked trees on disk.
pub fn impact_summary(
    manifest: &RepoManifest,
    original_root: &Path,
    marked_root: &Path,
    tokenizer: &dyn Tokenizer,
) -> Result<ImpactSummary, MetricsError> {
    let a = read_tree(original_root, manifest)?;
    let b = read_tree(marked_root, manifest)?;
    Ok(impact_from_sources(manifest, &a, &b, tokenizer))
}

impl ImpactSummary {
    /// One row per file then a `TOTAL` row; densities with four decimals.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "path",
            "lines",
            "budget",
            "marks_injected",
            "occurrences_renamed",
            "tokens_modified",
            "edit_distance_per_100_loc",
        ])?;
        for f in self.files.iter().chain(std::iter::once(&self.total)) {
            w.write_record([
                f.path.clone(),
                f.lines.to_string(),
                f.budget.to_string(),
                f.marks_injected.to_string(),
                f.occurrences_renamed.to_string(),
                f.tokens_modified.to_string(),
                format!("{:.4}", f.edit_distance_per_100_loc),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}
