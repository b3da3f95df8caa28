use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankmark::model::mock_server::MockServer;

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/corpus");

fn rankmark(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rankmark"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("RANKMARK_")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn source_tree(dir: &Path, files: &[&str]) -> PathBuf {
    let src = dir.join("src");
    fs::create_dir_all(&src).unwrap();
    for f in files {
        fs::copy(Path::new(CORPUS).join(f), src.join(f)).unwrap();
    }
    src
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(root)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn nulldist_prints_threshold_and_exact_cdf() {
    let o = rankmark(&["nulldist", "--n", "3", "--m", "6", "--p", "0.05"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "T=5 cdf=10/216\n");

    let o = rankmark(&["nulldist", "--n", "2", "--m", "3", "--p", "0.05", "--csv", "-"], &[]);
    assert_eq!(
        stdout(&o),
        "T=undetectable cdf=1/9\nsum,count,probability\n2,1,1/9\n3,2,2/9\n4,3,3/9\n5,2,2/9\n6,1,1/9\n"
    );
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(rankmark(&["nulldist", "--n", "0", "--m", "6"], &[]).status.code(), Some(2));
    assert_eq!(rankmark(&["nulldist", "--n", "3", "--m", "6", "--p", "1.5"], &[]).status.code(), Some(2));
    assert_eq!(rankmark(&["frobnicate"], &[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = rankmark(&["mark", p(dir.path()), "--out", p(&dir.path().join("o")), "--manifest", p(&dir.path().join("m.json"))], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("no oracle provider"));
}

#[test]
fn marking_an_empty_tree_gives_an_empty_private_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("empty");
    fs::create_dir(&src).unwrap();
    let manifest = dir.path().join("m.json");
    let o = rankmark(
        &["mark", p(&src), "--out", p(&dir.path().join("out")), "--manifest", p(&manifest), "--seed", "1", "--oracle", "mock:1"],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("files=0 marks=0 "));
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\"file_count\": 0"));
    assert!(text.contains("KEEP SECRET"));
    assert_eq!(fs::metadata(&manifest).unwrap().permissions().mode() & 0o777, 0o600);
}

#[test]
fn wrong_oracle_or_tokenizer_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let src = source_tree(dir.path(), &["roman.py"]);
    let (out, manifest) = (dir.path().join("out"), dir.path().join("m.json"));
    let o = rankmark(&["mark", p(&src), "--out", p(&out), "--manifest", p(&manifest), "--K", "10", "--oracle", "mock:1"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = rankmark(&["detect", "--repo", p(&out), "--manifest", p(&manifest), "--target", "mock:5", "--oracle", "mock:2"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("oracle mismatch"), "{}", stderr(&o));

    let text = fs::read_to_string(&manifest).unwrap().replace("builtin:code-v1", "builtin:code-v0");
    let forged = dir.path().join("forged.json");
    fs::write(&forged, text).unwrap();
    let o = rankmark(&["detect", "--repo", p(&out), "--manifest", p(&forged), "--target", "mock:5", "--oracle", "mock:1"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tokenizer builtin:code-v0"), "{}", stderr(&o));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let src = source_tree(dir.path(), &["bank.py", "roman.py", "primes.py"]);
    let run = |tag: &str| {
        let (out, manifest, report) = (dir.path().join(format!("out{tag}")), dir.path().join(format!("m{tag}.json")), dir.path().join(format!("r{tag}.json")));
        let o = rankmark(&["mark", p(&src), "--out", p(&out), "--manifest", p(&manifest), "--K", "10", "--seed", "42", "--oracle", "mock:7"], &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let d = rankmark(
            &["detect", "--repo", p(&out), "--manifest", p(&manifest), "--target", "mock:8", "--oracle", "mock:7", "--report", p(&report)],
            &[],
        );
        assert_eq!(d.status.code(), Some(0), "{}", stderr(&d));
        let s = rankmark(&["simulate", "--mode", "fdr", "--n", "20", "--m", "10", "--trials", "200", "--seed", "42"], &[]);
        (tree_bytes(&out), fs::read(&manifest).unwrap(), fs::read(&report).unwrap(), stdout(&d), stdout(&s))
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert_ne!(a.0, tree_bytes(&src), "marking changed nothing");
}

#[test]
fn flags_beat_config_beat_environment() {
    let dir = tempfile::tempdir().unwrap();
    let src = source_tree(dir.path(), &["roman.py"]);
    let config = dir.path().join("rankmark.toml");
    fs::write(&config, "seed = 5\nK = 10\n\n[oracle]\nmock = 3\n").unwrap();
    let mark = |tag: &str, extra: &[&str], env: &[(&str, &str)]| {
        let manifest = dir.path().join(format!("{tag}.json"));
        let out = dir.path().join(tag);
        let mut args = vec!["mark", p(&src), "--out", p(&out), "--manifest", p(&manifest)];
        args.extend_from_slice(extra);
        let o = rankmark(&args, env);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(&manifest).unwrap()
    };
    let env = [("RANKMARK_SEED", "9"), ("RANKMARK_ORACLE", "mock:4"), ("RANKMARK_K", "20")];
    let from_file = mark("file", &["--config", p(&config)], &env);
    assert!(from_file.contains("\"seed\": 5") && from_file.contains("\"model_id\": \"mock:3\"") && from_file.contains("\"K\": 10"));
    let from_flags = mark("flags", &["--config", p(&config), "--seed", "1", "--oracle", "mock:2"], &env);
    assert!(from_flags.contains("\"seed\": 1") && from_flags.contains("\"model_id\": \"mock:2\""));
    let from_env = mark("env", &[], &env);
    assert!(from_env.contains("\"seed\": 9") && from_env.contains("\"model_id\": \"mock:4\"") && from_env.contains("\"K\": 20"));
    let env_config = [("RANKMARK_CONFIG", p(&config))];
    assert_eq!(mark("envcfg", &[], &env_config), from_file);
}

fn grep_tree(root: &Path, needle: &[u8]) -> Vec<PathBuf> {
    let mut hits = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if fs::read(&path).unwrap().windows(needle.len()).any(|w| w == needle) {
                hits.push(path);
            }
        }
    }
    hits
}

#[test]
fn secrets_stay_out_of_every_artifact() {
    let secret = "tok-7f3a9c1e55d04b2a";
    let server = MockServer::start(11, Some(secret.to_string())).unwrap();
    let work = tempfile::tempdir().unwrap();
    let dir = work.path().join("run");
    fs::create_dir(&dir).unwrap();
    let src = source_tree(&dir, &["roman.py"]);
    let provider = dir.join("oracle.toml");
    fs::write(
        &provider,
        format!("endpoint = \"{}\"\nmodel_id = \"served\"\nauth_env = \"ORACLE_TOKEN\"\nretries = 0\n", server.url("/logits")),
    )
    .unwrap();
    let (out, manifest, report) = (dir.join("out"), dir.join("m.json"), dir.join("r.json"));
    let env = [("ORACLE_TOKEN", secret)];
    let m = rankmark(&["mark", p(&src), "--out", p(&out), "--manifest", p(&manifest), "--K", "20", "--oracle", p(&provider)], &env);
    assert_eq!(m.status.code(), Some(0), "{}", stderr(&m));
    let d = rankmark(
        &["detect", "--repo", p(&out), "--manifest", p(&manifest), "--target", "mock:2", "--oracle", p(&provider), "--report", p(&report)],
        &env,
    );
    assert_eq!(d.status.code(), Some(0), "{}", stderr(&d));
    let metrics_csv = dir.join("impact.csv");
    let x = rankmark(&["metrics", "--manifest", p(&manifest), "--original", p(&src), "--marked", p(&out), "--csv", p(&metrics_csv)], &env);
    assert_eq!(x.status.code(), Some(0), "{}", stderr(&x));
    assert!(fs::read_to_string(&manifest).unwrap().contains("\"model_id\": \"served\""));
    assert!(grep_tree(&dir, secret.as_bytes()).is_empty());
    for o in [&m, &d, &x] {
        assert!(!stdout(o).contains(secret) && !stderr(o).contains(secret));
    }

    // A wrong token is a configuration problem, not a transport one.
    let bad = rankmark(&["mark", p(&src), "--out", p(&dir.join("o2")), "--manifest", p(&dir.join("m2.json")), "--oracle", p(&provider)], &[("ORACLE_TOKEN", "wrong")]);
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));
    assert!(!stderr(&bad).contains(secret));
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = source_tree(dir.path(), &["roman.py"]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let provider = dir.path().join("oracle.toml");
    fs::write(&provider, format!("endpoint = \"http://127.0.0.1:{port}/v1\"\nmodel_id = \"gone\"\nretries = 0\ntimeout_secs = 2\n")).unwrap();
    let o = rankmark(&["mark", p(&src), "--out", p(&dir.path().join("o")), "--manifest", p(&dir.path().join("m.json")), "--oracle", p(&provider)], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists() && !dir.path().join("m.json").exists());
}
