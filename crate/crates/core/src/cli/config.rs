use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::backend::DecodingParams;
use crate::evolve::TrainingMetadata;
use crate::sandbox::ResourceLimits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedFormat {
    /// Instruction-record JSONL.
    #[default]
    Corpus,
    /// Alpaca-style `instruction`/`input`/`output` rows.
    Alpaca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    pub timeout_secs: f64,
    pub memory_mib: u64,
    pub no_network: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        let d = ResourceLimits::default();
        Self {
            timeout_secs: d.wall_timeout.as_secs_f64(),
            memory_mib: d.memory_cap >> 20,
            no_network: d.no_network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Presets {
    pub greedy: DecodingParams,
    pub humaneval_sampling: DecodingParams,
    pub ds1000: DecodingParams,
}

impl Default for Presets {
    fn default() -> Self {
        Self {
            greedy: DecodingParams::greedy(),
            humaneval_sampling: DecodingParams::humaneval_sampling(),
            ds1000: DecodingParams::ds1000(),
        }
    }
}

impl Presets {
    pub fn get(&self, name: &str) -> Result<DecodingParams> {
        let p = match name.replace('-', "_").as_str() {
            "greedy" => &self.greedy,
            "humaneval_sampling" | "sampling" => &self.humaneval_sampling,
            "ds1000" => &self.ds1000,
            _ => bail!("unknown decoding preset {name:?} (greedy, humaneval-sampling, ds1000)"),
        };
        p.validate()?;
        Ok(p.clone())
    }
}

/// Benchmark data locations. HumanEval falls back to the bundled copy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub humaneval: Option<PathBuf>,
    pub humaneval_plus: Option<PathBuf>,
    pub mbpp: Option<PathBuf>,
    pub ds1000: Option<PathBuf>,
}

/// Everything a command needs. Loaded from TOML; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed_corpus: Option<PathBuf>,
    pub seed_format: SeedFormat,
    /// Backend used for evolution and response generation.
    pub backend: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub interpreter: PathBuf,
    pub ks: Vec<usize>,
    pub sandbox: SandboxConfig,
    pub presets: Presets,
    pub data: DataPaths,
    pub refusal_patterns: Option<PathBuf>,
    /// Program run as `<cmd> <round> <corpus>` that prints the endpoint spec for that round.
    pub register_cmd: Option<String>,
    /// Evaluate only the first N HumanEval problems inside the loop.
    pub loop_eval_limit: Option<usize>,
    pub training: TrainingMetadata,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed_corpus: None,
            seed_format: SeedFormat::Corpus,
            backend: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: 8,
            interpreter: PathBuf::from("python3"),
            ks: vec![1, 10, 100],
            sandbox: SandboxConfig::default(),
            presets: Presets::default(),
            data: DataPaths::default(),
            refusal_patterns: None,
            register_cmd: None,
            loop_eval_limit: None,
            training: TrainingMetadata::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.seed_corpus,
            &mut cfg.backend,
            &mut cfg.refusal_patterns,
            &mut cfg.data.humaneval,
            &mut cfg.data.humaneval_plus,
            &mut cfg.data.mbpp,
            &mut cfg.data.ds1000,
        ] {
            rebase(base, p);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!("ks must be a non-empty list of positive integers");
        }
        if self.sandbox.timeout_secs.is_nan()
            || self.sandbox.timeout_secs <= 0.0
            || self.sandbox.memory_mib == 0
        {
            bail!("sandbox timeout and memory cap must be positive");
        }
        Ok(())
    }

    /// Sandbox limits with task directories under the output directory.
    pub fn limits(&self) -> ResourceLimits {
        ResourceLimits {
            wall_timeout: Duration::from_secs_f64(self.sandbox.timeout_secs),
            memory_cap: self.sandbox.memory_mib << 20,
            no_network: self.sandbox.no_network,
            writable_dir: Some(self.out_dir.join(".sandbox")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_presets() {
        let cfg = RunConfig::default();
        let s = cfg.presets.get("humaneval-sampling").unwrap();
        assert_eq!(
            (s.temperature, s.top_p, s.n_samples),
            (Some(0.2), Some(0.95), 20)
        );
        let d = cfg.presets.get("ds1000").unwrap();
        assert_eq!(
            (d.temperature, d.top_p, d.max_new_tokens, d.n_samples),
            (Some(0.2), Some(0.5), 1024, 40)
        );
        assert_eq!(cfg.presets.get("greedy").unwrap().n_samples, 1);
        assert!(cfg.presets.get("beam").is_err());
        assert_eq!(cfg.limits().memory_cap, 512 << 20);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed_corpus = \"seed.jsonl\"\nbackend = \"/abs/mock.toml\"\nworkers = 2\nks = [1]\n\n[sandbox]\ntimeout_secs = 3\n\n[presets.ds1000]\nmode = \"sampling\"\ntemperature = 0.2\ntop_p = 0.5\nmax_new_tokens = 1024\nn_samples = 5\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed_corpus.unwrap(), dir.path().join("seed.jsonl"));
        assert_eq!(cfg.backend.unwrap(), PathBuf::from("/abs/mock.toml"));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
        assert_eq!(cfg.sandbox.timeout_secs, 3.0);
        assert_eq!(cfg.sandbox.memory_mib, 512);
        assert_eq!(cfg.presets.ds1000.n_samples, 5);
        assert_eq!(cfg.presets.greedy, DecodingParams::greedy());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "wokers = 2\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
