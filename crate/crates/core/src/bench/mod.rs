//! Benchmarks: problem model, published manifests, loaders, evaluation prompts and code
//! extraction from model answers.

mod extract;
mod loader;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_code, ExtractedCandidate, ExtractionRule};
pub use loader::{bundled_humaneval, load_benchmark, load_benchmark_with, MBPP_TEST_SPLIT};
pub use prompt::{build_eval_prompt, EvalPrompt, PromptStyle, EVAL_INSTRUCTION_PREFIX};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{benchmark}: expected {expected} problems, found {found}")]
    CountMismatch {
        benchmark: Benchmark,
        expected: usize,
        found: usize,
    },
    #[error("{benchmark} library {library}: expected {expected} problems, found {found}")]
    LibraryCountMismatch {
        benchmark: Benchmark,
        library: Library,
        expected: usize,
        found: usize,
    },
    #[error("problem {task_id}: {message}")]
    Malformed { task_id: String, message: String },
    #[error("{style:?} prompts are not defined for {benchmark}")]
    StyleMismatch {
        benchmark: Benchmark,
        style: PromptStyle,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    #[serde(rename = "humaneval")]
    HumanEval,
    #[serde(rename = "humaneval_plus")]
    HumanEvalPlus,
    Mbpp,
    #[serde(rename = "ds1000")]
    Ds1000,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::HumanEval,
        Benchmark::HumanEvalPlus,
        Benchmark::Mbpp,
        Benchmark::Ds1000,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Benchmark::HumanEval => "humaneval",
            Benchmark::HumanEvalPlus => "humaneval_plus",
            Benchmark::Mbpp => "mbpp",
            Benchmark::Ds1000 => "ds1000",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Benchmark::HumanEval => "HumanEval",
            Benchmark::HumanEvalPlus => "HumanEval+",
            Benchmark::Mbpp => "MBPP",
            Benchmark::Ds1000 => "DS-1000",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Benchmark {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s
            .to_ascii_lowercase()
            .replace('+', "plus")
            .replace(['-', '_'], "");
        match k.as_str() {
            "humaneval" => Ok(Benchmark::HumanEval),
            "humanevalplus" => Ok(Benchmark::HumanEvalPlus),
            "mbpp" => Ok(Benchmark::Mbpp),
            "ds1000" => Ok(Benchmark::Ds1000),
            _ => Err(format!("unknown benchmark {s:?}")),
        }
    }
}

/// DS-1000 libraries, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Library {
    Plt,
    Np,
    Pd,
    Py,
    Scp,
    Sk,
    Tf,
}

impl Library {
    pub const ALL: [Library; 7] = [
        Library::Plt,
        Library::Np,
        Library::Pd,
        Library::Py,
        Library::Scp,
        Library::Sk,
        Library::Tf,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Library::Plt => "plt",
            Library::Np => "np",
            Library::Pd => "pd",
            Library::Py => "py",
            Library::Scp => "scp",
            Library::Sk => "sk",
            Library::Tf => "tf",
        }
    }

    /// Directory name in the DS-1000 archive.
    pub fn dir_name(self) -> &'static str {
        match self {
            Library::Plt => "Matplotlib",
            Library::Np => "Numpy",
            Library::Pd => "Pandas",
            Library::Py => "Pytorch",
            Library::Scp => "Scipy",
            Library::Sk => "Sklearn",
            Library::Tf => "Tensorflow",
        }
    }
}

impl fmt::Display for Library {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    #[default]
    Completion,
    Insertion,
}

impl TaskMode {
    pub fn dir_name(self) -> &'static str {
        match self {
            TaskMode::Completion => "Completion",
            TaskMode::Insertion => "Insertion",
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::Completion => "completion",
            TaskMode::Insertion => "insertion",
        })
    }
}

impl FromStr for TaskMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "completion" => Ok(TaskMode::Completion),
            "insertion" => Ok(TaskMode::Insertion),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

/// Marker for the candidate's position in DS-1000 prompts and execution contexts.
pub const INSERT_MARKER: &str = "[insert]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub task_id: String,
    pub benchmark: Benchmark,
    /// Natural-language problem, function stub, or code prefix.
    pub statement: String,
    pub tests: String,
    pub entry_point: Option<String>,
    pub library: Option<Library>,
    pub mode: TaskMode,
    /// Right context (insertion only).
    pub suffix: Option<String>,
    /// Benchmark-supplied reference solution, when the file has one.
    pub reference: Option<String>,
    /// DS-1000 execution context with an [`INSERT_MARKER`] where the candidate goes.
    pub context: Option<String>,
}

impl Problem {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| {
            Err(BenchError::Malformed {
                task_id: self.task_id.clone(),
                message: m.to_string(),
            })
        };
        if self.task_id.is_empty() {
            return bad("empty task_id");
        }
        if self.tests.trim().is_empty() {
            return bad("empty test suite");
        }
        if (self.benchmark == Benchmark::Ds1000) != self.library.is_some() {
            return bad("library is set exactly for DS-1000 problems");
        }
        if self.mode == TaskMode::Insertion && self.suffix.is_none() {
            return bad("insertion problems need a suffix");
        }
        if self.mode == TaskMode::Insertion && self.benchmark != Benchmark::Ds1000 {
            return bad("only DS-1000 has insertion problems");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub benchmark: Benchmark,
    pub count: usize,
    #[serde(default)]
    pub tests_per_problem: Option<usize>,
    #[serde(default)]
    pub per_library: Option<BTreeMap<Library, usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    count: usize,
    #[serde(default)]
    tests_per_problem: Option<usize>,
    #[serde(default)]
    per_library: Option<BTreeMap<Library, usize>>,
}

pub const PUBLISHED_MANIFESTS: &str = include_str!("../../config/manifests.toml");

impl BenchmarkManifest {
    /// Parses a manifest table keyed by benchmark (`humaneval`, `mbpp`, ...).
    pub fn parse_all(text: &str) -> Result<BTreeMap<Benchmark, BenchmarkManifest>, BenchError> {
        let raw: BTreeMap<String, ManifestEntry> =
            toml::from_str(text).map_err(|e| BenchError::Manifest(e.to_string()))?;
        let mut out = BTreeMap::new();
        for (key, entry) in raw {
            let benchmark: Benchmark = key.parse().map_err(BenchError::Manifest)?;
            if let Some(per) = &entry.per_library {
                let sum: usize = per.values().sum();
                if sum != entry.count {
                    return Err(BenchError::Manifest(format!(
                        "{key}: per-library counts sum to {sum}, not {}",
                        entry.count
                    )));
                }
            }
            out.insert(
                benchmark,
                BenchmarkManifest {
                    benchmark,
                    count: entry.count,
                    tests_per_problem: entry.tests_per_problem,
                    per_library: entry.per_library,
                },
            );
        }
        Ok(out)
    }

    /// The checked-in published counts.
    pub fn published(benchmark: Benchmark) -> BenchmarkManifest {
        Self::parse_all(PUBLISHED_MANIFESTS)
            .expect("checked-in manifests parse")
            .remove(&benchmark)
            .expect("every benchmark has a manifest")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_counts() {
        assert_eq!(
            BenchmarkManifest::published(Benchmark::HumanEval).count,
            164
        );
        let mbpp = BenchmarkManifest::published(Benchmark::Mbpp);
        assert_eq!((mbpp.count, mbpp.tests_per_problem), (500, Some(3)));
        let ds = BenchmarkManifest::published(Benchmark::Ds1000);
        let per = ds.per_library.unwrap();
        let counts: Vec<usize> = Library::ALL.iter().map(|l| per[l]).collect();
        assert_eq!(counts, vec![155, 220, 291, 68, 106, 115, 45]);
    }

    #[test]
    fn manifest_sum_is_checked() {
        let err =
            BenchmarkManifest::parse_all("[ds1000]\ncount = 3\n[ds1000.per_library]\nnp = 2\n");
        assert!(err.is_err());
    }

    #[test]
    fn benchmark_names_parse() {
        assert_eq!(
            "HumanEval+".parse::<Benchmark>(),
            Ok(Benchmark::HumanEvalPlus)
        );
        assert_eq!(
            "humaneval-plus".parse::<Benchmark>(),
            Ok(Benchmark::HumanEvalPlus)
        );
        assert_eq!("ds-1000".parse::<Benchmark>(), Ok(Benchmark::Ds1000));
        assert_eq!("MBPP".parse::<Benchmark>(), Ok(Benchmark::Mbpp));
        assert!("apps".parse::<Benchmark>().is_err());
    }
}
