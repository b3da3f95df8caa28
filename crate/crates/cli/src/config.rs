//! Settings layering: command-line flags win over the config file, which
//! wins over `RANKMARK_*` environment variables.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rankmark::model::http::{AccessKind, HttpSettings};
use serde::Deserialize;

/// The config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub m: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "R")]
    pub r: Option<usize>,
    pub p: Option<String>,
    pub mode: Option<String>,
    pub include: Option<Vec<String>>,
    pub oracle: Option<toml::Table>,
    pub target: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        parse_toml(&text).with_context(|| format!("config {}", path.display()))
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Usage(e.message().to_string()).into())
}

/// A usage problem: bad flag values, config keys or provider specs.
#[derive(Debug)]
pub struct Usage(pub String);

impl Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Where a model comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProviderConfig {
    Mock { seed: u64 },
    Http(HttpSettings),
}

impl ProviderConfig {
    /// A provider table: `{ mock = <seed> }` or HTTP settings.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        if let Some(v) = table.get("mock") {
            if table.len() != 1 {
                bail!(usage("a mock provider table takes only the `mock` key"));
            }
            let seed = v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| usage("`mock` must be a non-negative integer seed"))?;
            return Ok(ProviderConfig::Mock { seed });
        }
        let settings: HttpSettings = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("provider settings: {}", e.message())))?;
        Ok(ProviderConfig::Http(settings))
    }

    /// `mock:<seed>`, or the path of a TOML file holding one provider table.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if let Some(seed) = arg.strip_prefix("mock:") {
            let seed = seed
                .parse()
                .map_err(|_| usage(format!("bad mock seed in {arg:?}")))?;
            return Ok(ProviderConfig::Mock { seed });
        }
        let path = PathBuf::from(arg);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| usage(format!("provider {arg:?} is neither mock:<seed> nor a readable file: {e}")))?;
        let table: toml::Table = parse_toml(&text).with_context(|| format!("provider file {arg}"))?;
        Self::from_table(table)
    }
}

/// The three setting sources.
pub struct Layers {
    pub file: FileConfig,
    env: HashMap<String, String>,
}

impl Layers {
    /// Loads the config named by `--config` or else `RANKMARK_CONFIG`.
    pub fn load(config_flag: Option<&Path>) -> Result<Self> {
        Self::with_env(config_flag, std::env::vars().collect())
    }

    pub fn with_env(config_flag: Option<&Path>, env: HashMap<String, String>) -> Result<Self> {
        let path = config_flag.map(Path::to_path_buf).or_else(|| env.get("RANKMARK_CONFIG").map(PathBuf::from));
        let file = match path {
            Some(p) => FileConfig::load(&p)?,
            None => FileConfig::default(),
        };
        Ok(Self { file, env })
    }

    fn env<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let var = format!("RANKMARK_{key}");
        match self.env.get(&var) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("{var}={v:?}: {e}"))),
        }
    }

    /// First value among flag, file and `RANKMARK_<key>`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, file: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match flag.or(file) {
            Some(v) => Ok(Some(v)),
            None => self.env(key),
        }
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        Ok(self.pick(flag, self.file.seed, "SEED")?.unwrap_or(0))
    }

    pub fn p(&self, flag: Option<String>) -> Result<rankmark::nulldist::Probability> {
        let text = self.pick(flag, self.file.p.clone(), "P")?.unwrap_or_else(|| "0.05".into());
        text.parse().map_err(|e| usage(format!("p: {e}")))
    }

    pub fn include(&self, flag: Vec<String>) -> Vec<String> {
        if !flag.is_empty() {
            return flag;
        }
        if let Some(v) = &self.file.include {
            return v.clone();
        }
        match self.env.get("RANKMARK_INCLUDE") {
            Some(v) => v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            None => Vec::new(),
        }
    }

    pub fn mode(&self, flag: Option<String>) -> Result<Option<AccessKind>> {
        let Some(m) = self.pick(flag, self.file.mode.clone(), "MODE")? else {
            return Ok(None);
        };
        match m.as_str() {
            "full" => Ok(Some(AccessKind::Full)),
            "restricted" => Ok(Some(AccessKind::Restricted)),
            _ => Err(usage(format!("mode must be full or restricted, got {m:?}"))),
        }
    }

    /// Provider for `role` (`oracle` or `target`).
    pub fn provider(&self, flag: Option<String>, role: &str) -> Result<ProviderConfig> {
        if let Some(arg) = flag {
            return ProviderConfig::from_arg(&arg);
        }
        let table = match role {
            "oracle" => self.file.oracle.clone(),
            _ => self.file.target.clone(),
        };
        if let Some(t) = table {
            return ProviderConfig::from_table(t);
        }
        let var = format!("RANKMARK_{}", role.to_uppercase());
        match self.env.get(&var) {
            Some(arg) => ProviderConfig::from_arg(arg),
            None => Err(anyhow!(usage(format!("no {role} provider: pass --{role}, set [{role}] in the config or {var}")))),
        }
    }
}
