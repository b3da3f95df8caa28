//! Frozen outputs of seeded runs. Set `RANKMARK_BLESS=1` to rewrite the
//! golden files after an intended change.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rankmark::astmark::Language;
use rankmark::hash::sha256_hex;
use rankmark::marker::{mark_file, mark_sources, FileRng, MarkParams};
use rankmark::metrics::impact_from_sources;
use rankmark::model::mock::MockModel;
use rankmark::model::{AccessMode, LogitsProvider};
use rankmark::sim::{detection_rate, end_to_end_sim, end_to_end_trials, E2eConfig, MemorizationModel};

const MANIFEST_DIGEST: &str = "b9fc7ba44bb3a82a8af6790b225e35b5b0478f24692d19ab298ce27e56a86240";

fn corpus() -> Vec<(String, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus");
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = golden(name);
    if std::env::var_os("RANKMARK_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the golden file");
}

fn params(k: usize) -> MarkParams {
    MarkParams { m: 100, k, r: 500 }
}

#[test]
fn marked_file_matches_golden() {
    let files = corpus();
    let (_, src) = files.iter().find(|f| f.0 == "inventory.py").unwrap();
    let oracle = MockModel::new(7);
    let mut rng = FileRng::for_file(7, "inventory.py");
    let (out, entry) = mark_file(src, Language::Python, &oracle, &params(20), &mut rng).unwrap();
    assert!(!entry.marks.is_empty());
    check_golden("inventory.marked.py", &out);
}

#[test]
fn corpus_manifest_digest_is_frozen() {
    let oracle = MockModel::new(11);
    let (_, manifest) = mark_sources(&corpus(), &oracle, &params(10), 11, vec!["**/*.py".into()]).unwrap();
    let json = manifest.to_json();
    let digest = sha256_hex(json.as_bytes());
    if std::env::var_os("RANKMARK_BLESS").is_some() {
        println!("manifest digest {digest}");
    }
    assert_eq!(digest, MANIFEST_DIGEST);
}

#[test]
fn twenty_files_with_defaults_record_the_parameters() {
    let files: Vec<_> = corpus().into_iter().take(20).collect();
    let oracle = MockModel::new(3);
    let (_, manifest) = mark_sources(&files, &oracle, &MarkParams::default(), 3, Vec::new()).unwrap();
    assert_eq!(manifest.file_count, 20);
    assert_eq!(manifest.params, MarkParams { m: 100, k: 100, r: 500 });
    assert_eq!(manifest.oracle, *oracle.handle());
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.mark_count, manifest.files.iter().map(|f| f.marks.len()).sum::<usize>());
    for f in &manifest.files {
        assert!(f.marks.len() <= f.lines / 100, "{}", f.path);
        assert!(f.marks.iter().all(|m| m.m == 100));
    }
}

#[test]
fn metrics_csv_matches_golden() {
    let files = corpus();
    let oracle = MockModel::new(5);
    let (marked, manifest) = mark_sources(&files, &oracle, &params(10), 5, Vec::new()).unwrap();
    let original: BTreeMap<_, _> = files.into_iter().collect();
    let marked: BTreeMap<_, _> = marked.into_iter().collect();
    let summary = impact_from_sources(&manifest, &original, &marked, &*oracle.tokenizer());
    for f in &summary.files {
        assert_eq!(f.tokens_modified, f.occurrences_renamed, "{}", f.path);
    }
    check_golden("corpus_metrics.csv", summary.to_csv().unwrap().as_bytes());
}

fn small_layout() -> Vec<(String, Vec<u8>)> {
    corpus().into_iter().filter(|f| f.0 == "bank.py" || f.0 == "roman.py").collect()
}

#[test]
fn end_to_end_report_matches_golden() {
    let config = E2eConfig {
        params: params(10),
        p: "0.05".parse().unwrap(),
        memorization: MemorizationModel::AdditiveLogitBoost { delta: 4.0, q: 1.0 },
        access: AccessMode::FullLogits,
    };
    let report = end_to_end_sim(&small_layout(), &config, 2024).unwrap();
    check_golden("e2e_report.json", report.to_json().as_bytes());
}

#[test]
fn unmemorized_target_rarely_detects() {
    let config = E2eConfig {
        params: params(10),
        p: "0.05".parse().unwrap(),
        memorization: MemorizationModel::None,
        access: AccessMode::FullLogits,
    };
    let reports = end_to_end_trials(&small_layout(), &config, 500, 99).unwrap();
    let rate = detection_rate(&reports);
    assert!(rate.rate <= 0.05, "{rate:?}");
}
