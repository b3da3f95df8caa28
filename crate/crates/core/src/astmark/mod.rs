//! Rename-eligible local variables and semantics-preserving renames.
//!
//! All positions are kept twice: as byte spans into the source and as
//! indices into the oracle tokenizer's token sequence for the same bytes.

pub mod python;

use std::collections::HashSet;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{InputEdit, Node, Point, Tree};

use crate::lexicon;
use crate::model::{Token, TokenId, Tokenizer};

#[derive(Debug, Error)]
pub enum AstError {
    #[error("syntax error at {0}")]
    Syntax(String),
    #[error("source is not valid UTF-8")]
    Encoding,
    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),
    #[error("rename rejected: {0}")]
    Rename(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
}

impl Language {
    pub fn from_path(path: &std::path::Path) -> Option<Language> {
        match path.extension()?.to_str()? {
            "py" => Some(Language::Python),
            _ => None,
        }
    }
}

impl FromStr for Language {
    type Err = AstError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "python" | "py" => Ok(Language::Python),
            other => Err(AstError::UnsupportedLanguage(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Parameter,
    LocalAssignment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub span: Range<usize>,
    pub token_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSite {
    pub name: String,
    pub scope: usize,
    pub kind: SiteKind,
    /// Ascending.
    pub occurrences: Vec<Occurrence>,
    pub first_occurrence_token_index: usize,
}

impl VariableSite {
    pub fn first(&self) -> &Occurrence {
        &self.occurrences[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenamePlan {
    pub site: VariableSite,
    pub new_name: String,
}

impl RenamePlan {
    pub fn edited_spans(&self) -> Vec<Range<usize>> {
        self.site.occurrences.iter().map(|o| o.span.clone()).collect()
    }
}

/// A source file together with its oracle tokenization.
#[derive(Clone, Copy)]
pub struct FileView<'a> {
    pub src: &'a [u8],
    pub tokens: &'a [Token],
    pub tokenizer: &'a dyn Tokenizer,
}

/// Index of the single token covering identifier `span`: either exactly the
/// name or the name with one merged leading space.
pub fn token_at(src: &[u8], tokens: &[Token], span: &Range<usize>) -> Option<usize> {
    let idx = tokens.partition_point(|t| t.end < span.end);
    let t = tokens.get(idx)?;
    let exact = t.start == span.start;
    let spaced = t.start + 1 == span.start && src[t.start] == b' ';
    (t.end == span.end && (exact || spaced)).then_some(idx)
}

/// Single-token local variables, ascending by first occurrence.
pub fn extract_local_variables(
    src: &[u8],
    language: Language,
    tokens: &[Token],
) -> Result<Vec<VariableSite>, AstError> {
    let Language::Python = language;
    if std::str::from_utf8(src).is_err() {
        return Err(AstError::Encoding);
    }
    let tree = python::parse(src)?;
    sites_from_tree(src, &tree, tokens)
}

/// [`extract_local_variables`] over an already parsed file.
pub(crate) fn sites_from_tree(src: &[u8], tree: &Tree, tokens: &[Token]) -> Result<Vec<VariableSite>, AstError> {
    let analysis = python::analyze(src, tree)?;
    let mut out = Vec::new();
    'bindings: for b in &analysis.bindings {
        let Ok(is_param) = analysis.eligibility(b) else {
            continue;
        };
        let mut occurrences = Vec::with_capacity(b.occurrences.len());
        for span in &b.occurrences {
            let Some(token_index) = token_at(src, tokens, span) else {
                continue 'bindings;
            };
            occurrences.push(Occurrence {
                span: span.clone(),
                token_index,
            });
        }
        out.push(VariableSite {
            name: b.name.clone(),
            scope: b.scope,
            kind: if is_param {
                SiteKind::Parameter
            } else {
                SiteKind::LocalAssignment
            },
            first_occurrence_token_index: occurrences[0].token_index,
            occurrences,
        });
    }
    out.sort_by_key(|s| s.first_occurrence_token_index);
    Ok(out)
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Every word-like run of the file plus the whitespace-stripped text of
/// every token. A candidate name outside this set appears nowhere in the
/// file, neither as an identifier nor as a token fragment.
pub fn identifier_universe(file: &FileView) -> HashSet<String> {
    let mut out = HashSet::new();
    let mut i = 0;
    let src = file.src;
    while i < src.len() {
        if is_word_byte(src[i]) {
            let j = i + src[i..].iter().take_while(|&&b| is_word_byte(b)).count();
            out.insert(String::from_utf8_lossy(&src[i..j]).into_owned());
            i = j;
        } else {
            i += 1;
        }
    }
    for t in file.tokens {
        let text = String::from_utf8_lossy(file.tokenizer.token_bytes(t.id));
        let stripped = text.trim_start();
        if lexicon::is_identifier(stripped) {
            out.insert(stripped.to_string());
        }
    }
    out
}

/// The name a candidate token stands for: its text without leading
/// whitespace.
pub fn candidate_name(tokenizer: &dyn Tokenizer, token: TokenId) -> Option<String> {
    let text = std::str::from_utf8(tokenizer.token_bytes(token)).ok()?;
    let name = text.trim_start();
    lexicon::is_identifier(name).then(|| name.to_string())
}

/// Lexical part of the filter: an identifier, not reserved, not in use.
pub fn name_is_usable(name: &str, universe: &HashSet<String>) -> bool {
    lexicon::is_identifier(name)
        && !lexicon::is_keyword(name)
        && !lexicon::is_builtin(name)
        && !lexicon::RECEIVERS.contains(&name)
        && !name.starts_with("__")
        && !universe.contains(name)
}

/// Retokenizes the occurrence at `occ` with `new_name` in place, together
/// with its neighbouring tokens. Returns the replacement's token id if the
/// neighbours are unchanged and the new name is one token at the same start.
pub fn retokenized_occurrence(file: &FileView, occ: &Occurrence, new_name: &str) -> Option<TokenId> {
    let idx = occ.token_index;
    let tokens = file.tokens;
    let lo = idx.saturating_sub(1);
    let hi = (idx + 1).min(tokens.len() - 1);
    let (start, end) = (tokens[lo].start, tokens[hi].end);
    let mut window = Vec::with_capacity(end - start + new_name.len());
    window.extend_from_slice(&file.src[start..occ.span.start]);
    window.extend_from_slice(new_name.as_bytes());
    window.extend_from_slice(&file.src[occ.span.end..end]);
    let enc = file.tokenizer.encode(&window);
    if enc.len() != hi - lo + 1 {
        return None;
    }
    let mid = idx - lo;
    if lo < idx && enc[0].id != tokens[lo].id {
        return None;
    }
    if hi > idx && enc[enc.len() - 1].id != tokens[hi].id {
        return None;
    }
    let t = &enc[mid];
    let want_start = tokens[idx].start - start;
    let want_end = occ.span.start - start + new_name.len();
    (t.start == want_start && t.end == want_end).then_some(t.id)
}

/// True iff `candidate` can replace the site's name: a usable identifier
/// absent from `universe` that stays a single token at every occurrence,
/// equal to `candidate` itself at the first occurrence.
pub fn validity_filter(candidate: TokenId, site: &VariableSite, universe: &HashSet<String>, file: &FileView) -> bool {
    let Some(name) = candidate_name(file.tokenizer, candidate) else {
        return false;
    };
    if !name_is_usable(&name, universe) {
        return false;
    }
    site.occurrences.iter().enumerate().all(|(i, occ)| {
        match retokenized_occurrence(file, occ, &name) {
            Some(id) => i > 0 || id == candidate,
            None => false,
        }
    })
}

/// `n` newline-terminated lines; a final unterminated line counts, a
/// trailing newline does not add one.
pub fn count_lines(src: &[u8]) -> usize {
    let newlines = src.iter().filter(|&&b| b == b'\n').count();
    newlines + usize::from(src.last().is_some_and(|&b| b != b'\n'))
}

/// Replaces exactly the site's occurrences, then re-parses and checks that
/// the tree is unchanged apart from those identifiers and that they still
/// form one binding.
pub fn apply_rename(src: &[u8], language: Language, plan: &RenamePlan) -> Result<Vec<u8>, AstError> {
    let Language::Python = language;
    if plan.new_name == plan.site.name {
        return Ok(src.to_vec());
    }
    let before = python::parse(src)?;
    rename_parsed(src, &before, plan).map(|(out, _)| out)
}

/// [`apply_rename`] given the parse of `src`; also returns the parse of the
/// result.
pub(crate) fn rename_parsed(src: &[u8], before: &Tree, plan: &RenamePlan) -> Result<(Vec<u8>, Tree), AstError> {
    let old = plan.site.name.as_str();
    let new = plan.new_name.as_str();
    if new == old {
        return Ok((src.to_vec(), before.clone()));
    }
    if !lexicon::is_identifier(new) || lexicon::is_keyword(new) {
        return Err(AstError::Rename(format!("{new:?} is not a usable identifier")));
    }
    let spans = plan.edited_spans();
    let mut out = Vec::with_capacity(src.len() + spans.len() * new.len());
    let mut pos = 0;
    for s in &spans {
        if s.start < pos || &src[s.clone()] != old.as_bytes() {
            return Err(AstError::Rename(format!("span {s:?} does not hold {old:?}")));
        }
        out.extend_from_slice(&src[pos..s.start]);
        out.extend_from_slice(new.as_bytes());
        pos = s.end;
    }
    out.extend_from_slice(&src[pos..]);

    // Edits go in from the back so earlier positions keep their coordinates.
    let mut edited = before.clone();
    for s in spans.iter().rev() {
        let start_position = point_at(src, s.start);
        let new_end_position = Point {
            row: start_position.row,
            column: start_position.column + new.len(),
        };
        edited.edit(&InputEdit {
            start_byte: s.start,
            old_end_byte: s.end,
            new_end_byte: s.start + new.len(),
            start_position,
            old_end_position: point_at(src, s.end),
            new_end_position,
        });
    }
    let after = python::reparse(&out, Some(&edited)).map_err(|e| AstError::Rename(format!("edited file does not parse: {e}")))?;
    let renamed: HashSet<usize> = spans.iter().map(|s| s.start).collect();
    isomorphic(before.root_node(), after.root_node(), src, &out, &renamed, new)?;

    let shifted: Vec<Range<usize>> = spans
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let start = s.start + i * new.len() - i * old.len();
            start..start + new.len()
        })
        .collect();
    let analysis = python::analyze(&out, &after)?;
    match analysis.binding_at(shifted[0].start) {
        Some(b) if b.occurrences == shifted => Ok((out, after)),
        Some(b) => Err(AstError::Rename(format!(
            "renamed binding resolves to {} occurrences, expected {}",
            b.occurrences.len(),
            shifted.len()
        ))),
        None => Err(AstError::Rename("renamed identifier does not resolve".into())),
    }
}

fn point_at(src: &[u8], byte: usize) -> Point {
    let line_start = src[..byte].iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    Point {
        row: src[..line_start].iter().filter(|&&b| b == b'\n').count(),
        column: byte - line_start,
    }
}

/// Moves every site's spans to where they sit after `plan` was applied.
/// Token indices are unchanged when the rename kept the token count.
pub fn rebase_sites(sites: &mut [VariableSite], plan: &RenamePlan) {
    let diff = plan.new_name.len() as isize - plan.site.name.len() as isize;
    let edits: Vec<usize> = plan.site.occurrences.iter().map(|o| o.span.start).collect();
    let shift = |x: usize| {
        let before = edits.partition_point(|&e| e < x) as isize;
        (x as isize + before * diff) as usize
    };
    for site in sites.iter_mut() {
        let renamed = site.first_occurrence_token_index == plan.site.first_occurrence_token_index;
        for occ in &mut site.occurrences {
            let start = shift(occ.span.start);
            let len = if renamed { plan.new_name.len() } else { occ.span.len() };
            occ.span = start..start + len;
        }
        if renamed {
            site.name = plan.new_name.clone();
        }
    }
}

fn isomorphic(
    a: Node,
    b: Node,
    src_a: &[u8],
    src_b: &[u8],
    renamed: &HashSet<usize>,
    new_name: &str,
) -> Result<(), AstError> {
    if a.kind_id() != b.kind_id() || a.child_count() != b.child_count() {
        return Err(AstError::Rename(format!(
            "tree changed at byte {}: {} vs {}",
            a.start_byte(),
            a.kind(),
            b.kind()
        )));
    }
    if a.child_count() == 0 {
        let same = if renamed.contains(&a.start_byte()) {
            &src_b[b.byte_range()] == new_name.as_bytes()
        } else {
            src_a[a.byte_range()] == src_b[b.byte_range()]
        };
        if !same {
            return Err(AstError::Rename(format!("leaf changed at byte {}", a.start_byte())));
        }
        return Ok(());
    }
    let mut ca = a.walk();
    let mut cb = b.walk();
    for (x, y) in a.children(&mut ca).zip(b.children(&mut cb)) {
        isomorphic(x, y, src_a, src_b, renamed, new_name)?;
    }
    Ok(())
}
