//! `rankmark`: mark repositories, detect training on them, and study the test.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rankmark::detector::{self, DetectError, Decision};
use rankmark::marker::{self, MarkError, MarkParams, RepoManifest};
use rankmark::metrics;
use rankmark::model::http::{load_tokenizer, AccessKind, HttpProvider};
use rankmark::model::mock::MockModel;
use rankmark::model::{AccessMode, LogitsProvider, ModelError, Tokenizer};
use rankmark::nulldist::{self, NullDistError};
use rankmark::sim::{self, Axis, E2eConfig, MemorizationModel, SimError, SweepBase, SweepPoint, SweepResult};

use config::{usage, Layers, ProviderConfig, Usage};

/// Top-k of a mock provider in restricted mode.
const MOCK_TOP_K: usize = 20;

#[derive(Parser)]
#[command(name = "rankmark", version, about = "Rank-based code watermarks for training-data audits")]
struct Cli {
    /// TOML config file; defaults to $RANKMARK_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mark every matching file under a source tree.
    Mark {
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long = "R")]
        r: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// `mock:<seed>` or a provider TOML file.
        #[arg(long)]
        oracle: Option<String>,
        /// Glob of files to mark; repeatable. Defaults to `**/*.py`.
        #[arg(long)]
        include: Vec<String>,
    },
    /// Test whether a target model was trained on a published repository.
    Detect {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        p: Option<String>,
        /// Access mode of the target: `full` or `restricted`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Threshold and exact CDF of the rank-sum null distribution.
    Nulldist {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        p: Option<String>,
        /// Write the whole distribution as `sum,count,probability` rows (`-` for stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo error rates.
    Simulate {
        #[arg(long, value_enum)]
        mode: SimMode,
        #[arg(long, default_value_t = 60)]
        n: u64,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        p: Option<String>,
        /// Success probability of the geometric rank model (dsr).
        #[arg(long)]
        theta: Option<f64>,
        /// Memorization model: none, geometric:<theta> or boost:<delta>:<q>.
        #[arg(long)]
        memorization: Option<String>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Vary one of n, m, p, theta over comma-separated values, e.g. `n=10,20,40`.
        #[arg(long)]
        sweep: Option<String>,
        /// Fixture tree for e2e.
        #[arg(long)]
        repo: Option<PathBuf>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long = "R")]
        r: Option<usize>,
        /// Target access mode for e2e: `full` or `restricted`.
        #[arg(long = "access")]
        access: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// How much marking changed each file.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        marked: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Fdr,
    Dsr,
    E2e,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for usage and precondition errors, 3 for transport failures, else 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() || cause.downcast_ref::<NullDistError>().is_some() {
            return 2;
        }
        // Core errors wrap each other transparently, so the chain alone
        // does not reach the innermost one.
        let mark = |m: &MarkError| match m {
            MarkError::Model(e) => model_code(e),
            MarkError::Params(_) | MarkError::Glob(_) | MarkError::Output(_) => Some(2),
            _ => None,
        };
        let detect = |d: &DetectError| match d {
            _ if d.is_precondition() => Some(2),
            DetectError::Model(e) => model_code(e),
            DetectError::Manifest(m) => mark(m),
            DetectError::NullDist(_) => Some(2),
            _ => None,
        };
        let code = if let Some(m) = cause.downcast_ref::<ModelError>() {
            model_code(m)
        } else if let Some(m) = cause.downcast_ref::<MarkError>() {
            mark(m)
        } else if let Some(d) = cause.downcast_ref::<DetectError>() {
            detect(d)
        } else if let Some(s) = cause.downcast_ref::<SimError>() {
            match s {
                SimError::Argument(_) | SimError::NullDist(_) => Some(2),
                SimError::Mark(m) => mark(m),
                SimError::Detect(d) => detect(d),
            }
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    1
}

fn model_code(e: &ModelError) -> Option<u8> {
    match e {
        ModelError::Transport(_) => Some(3),
        ModelError::Config(_) | ModelError::Argument(_) => Some(2),
        _ => None,
    }
}

fn run(cli: Cli) -> Result<()> {
    let layers = Layers::load(cli.config.as_deref())?;
    match cli.command {
        Command::Mark {
            src,
            out,
            manifest,
            m,
            k,
            r,
            seed,
            oracle,
            include,
        } => {
            let params = mark_params(&layers, m, k, r)?;
            let seed = layers.seed(seed)?;
            let mut include = layers.include(include);
            if include.is_empty() {
                include.push(marker::DEFAULT_INCLUDE.to_string());
            }
            let oracle = open_provider(&layers.provider(oracle, "oracle")?, None)?;
            if !src.is_dir() {
                return Err(usage(format!("{} is not a directory", src.display())));
            }
            let repo = marker::mark_repository(&src, &include, &*oracle, &params, seed)?;
            marker::write_marked_repo(&repo, &src, &out, &manifest)?;
            println!(
                "files={} marks={} manifest={}",
                repo.manifest.file_count,
                repo.manifest.mark_count,
                manifest.display()
            );
            Ok(())
        }
        Command::Detect {
            repo,
            manifest,
            target,
            oracle,
            p,
            mode,
            report,
        } => {
            let p = layers.p(p)?;
            let mode = layers.mode(mode)?;
            let manifest = RepoManifest::read(&manifest).context("reading manifest")?;
            let oracle = open_provider(&layers.provider(oracle, "oracle")?, None)?;
            let target = open_provider(&layers.provider(target, "target")?, mode)?;
            let r = detector::detect(&repo, &manifest, &*oracle, &*target, &p)?;
            if let Some(path) = report {
                fs::write(&path, r.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
            println!(
                "decision={} n={} m={} T={} S={} p_value={} dropped={}",
                decision_name(r.decision),
                r.n,
                r.m,
                r.threshold.map_or("-".into(), |t| t.to_string()),
                r.rank_sum,
                show(&r.p_value),
                r.dropped.len()
            );
            Ok(())
        }
        Command::Nulldist { n, m, p, csv } => {
            let p = layers.p(p)?;
            let dist = nulldist::shared_pdf(n, m)?;
            let threshold = dist.threshold(&p);
            match threshold.t() {
                Some(t) => println!("T={t} cdf={}", dist.cdf(t as i64)),
                None => println!("T=undetectable cdf={}", dist.cdf(dist.min_sum() as i64)),
            }
            if let Some(path) = csv {
                let mut out = String::from("sum,count,probability\n");
                for s in dist.min_sum()..=dist.max_sum() {
                    out.push_str(&format!("{s},{},{}\n", dist.count(s), dist.pmf(s)));
                }
                emit(&path, &out)?;
            }
            Ok(())
        }
        Command::Simulate {
            mode,
            n,
            m,
            p,
            theta,
            memorization,
            trials,
            seed,
            sweep,
            repo,
            k,
            r,
            access,
            csv,
        } => {
            let p = layers.p(p)?;
            let seed = layers.seed(seed)?;
            let m = layers.pick(m, layers.file.m, "M")?.unwrap_or(100);
            let model = match (mode, memorization, theta) {
                (SimMode::Fdr, _, _) => MemorizationModel::None,
                (_, Some(arg), _) => arg.parse().map_err(|e: SimError| usage(e.to_string()))?,
                (_, None, Some(theta)) => MemorizationModel::RankGeometric { theta },
                (SimMode::Dsr, None, None) => return Err(usage("dsr needs --theta or --memorization")),
                (SimMode::E2e, None, None) => MemorizationModel::None,
            };
            let result = match mode {
                SimMode::Fdr | SimMode::Dsr => {
                    let base = SweepBase {
                        n,
                        m: m as u64,
                        p: p.clone(),
                        model,
                        trials,
                        seed,
                    };
                    match sweep {
                        Some(arg) => {
                            let (axis, grid) = parse_sweep(&arg)?;
                            sim::sweep(&base, axis, &grid)?
                        }
                        None => sim::sweep(&base, Axis::N, &[n.to_string()])?,
                    }
                }
                SimMode::E2e => {
                    if sweep.is_some() {
                        return Err(usage("--sweep applies to fdr and dsr"));
                    }
                    let root = repo.ok_or_else(|| usage("e2e needs --repo <fixture dir>"))?;
                    let params = mark_params(&layers, Some(m), k, r)?;
                    let access = match layers.mode(access)? {
                        Some(AccessKind::Restricted) => AccessMode::RestrictedTopk {
                            k: MOCK_TOP_K,
                            supports_bias: true,
                        },
                        _ => AccessMode::FullLogits,
                    };
                    let files = read_fixture(&root)?;
                    let config = E2eConfig {
                        params,
                        p: p.clone(),
                        memorization: model,
                        access,
                    };
                    let reports = sim::end_to_end_trials(&files, &config, trials, seed)?;
                    SweepResult {
                        axis: Axis::N,
                        points: vec![SweepPoint {
                            point: "e2e".into(),
                            estimate: sim::detection_rate(&reports),
                        }],
                    }
                }
            };
            emit(csv.as_deref().unwrap_or(Path::new("-")), &result.to_csv())
        }
        Command::Metrics {
            manifest,
            original,
            marked,
            csv,
        } => {
            let manifest = RepoManifest::read(&manifest).context("reading manifest")?;
            let tokenizer = load_tokenizer(&manifest.oracle.tokenizer_id)?;
            let summary = metrics::impact_summary(&manifest, &original, &marked, &*tokenizer as &dyn Tokenizer)?;
            for path in &summary.missing {
                eprintln!("warning: {path} missing from the original or marked tree");
            }
            emit(csv.as_deref().unwrap_or(Path::new("-")), &summary.to_csv()?)
        }
    }
}

fn mark_params(layers: &Layers, m: Option<usize>, k: Option<usize>, r: Option<usize>) -> Result<MarkParams> {
    let d = MarkParams::default();
    let params = MarkParams {
        m: layers.pick(m, layers.file.m, "M")?.unwrap_or(d.m),
        k: layers.pick(k, layers.file.k, "K")?.unwrap_or(d.k),
        r: layers.pick(r, layers.file.r, "R")?.unwrap_or(d.r),
    };
    params.validate()?;
    Ok(params)
}

fn open_provider(config: &ProviderConfig, mode: Option<AccessKind>) -> Result<Box<dyn LogitsProvider>> {
    Ok(match config {
        ProviderConfig::Mock { seed } => {
            let model = MockModel::new(*seed);
            match mode {
                Some(AccessKind::Restricted) => Box::new(model.with_access(AccessMode::RestrictedTopk {
                    k: MOCK_TOP_K,
                    supports_bias: true,
                })),
                _ => Box::new(model),
            }
        }
        ProviderConfig::Http(settings) => {
            let mut settings = settings.clone();
            if let Some(m) = mode {
                settings.access_mode = m;
            }
            Box::new(HttpProvider::new(settings)?)
        }
    })
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Detected => "detected",
        Decision::NotDetected => "not_detected",
        Decision::Undetectable => "undetectable",
    }
}

/// `axis=v1,v2,...`.
fn parse_sweep(arg: &str) -> Result<(Axis, Vec<String>)> {
    let (axis, values) = arg
        .split_once('=')
        .ok_or_else(|| usage(format!("sweep {arg:?} is not axis=v1,v2,...")))?;
    let axis: Axis = axis.parse().map_err(|e: SimError| usage(e.to_string()))?;
    let grid: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if grid.is_empty() {
        return Err(usage(format!("sweep {arg:?} has no values")));
    }
    Ok((axis, grid))
}

fn read_fixture(root: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let globs = marker::build_globset(&[marker::DEFAULT_INCLUDE.to_string()])?;
    let mut files = Vec::new();
    for rel in marker::list_files(root)? {
        if globs.is_match(&rel) {
            let bytes = fs::read(root.join(&rel)).with_context(|| format!("reading {rel}"))?;
            files.push((rel, bytes));
        }
    }
    Ok(files)
}

fn emit(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout().write_all(text.as_bytes())?;
    } else {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
