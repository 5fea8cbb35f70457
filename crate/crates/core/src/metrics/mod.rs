//! pass@k estimation, per-benchmark aggregation and report rendering.

mod passk;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{ExtractionRule, Library, Problem};
use crate::sandbox::Verdict;

pub use passk::pass_at_k;
pub use report::{
    compare, parse_baselines, render_csv, render_markdown, render_plotdata, Baseline, Report,
    ReportMetadata,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid counts for pass@k: n={n}, c={c}, k={k}")]
    InvalidCounts { n: usize, c: usize, k: usize },
    #[error("no results for problem {0}")]
    MissingProblem(String),
    #[error("result for unknown problem {0}")]
    UnknownProblem(String),
    #[error("problem {task_id} has {found} samples, expected {expected}")]
    InconsistentSamples {
        task_id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate result for {task_id} sample {sample_index}")]
    DuplicateSample {
        task_id: String,
        sample_index: usize,
    },
    #[error("no k in {0:?} is within the sample count {1}")]
    NoUsableK(Vec<usize>, usize),
    #[error("nothing to aggregate")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// One executed sample, as stored in the per-sample results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task_id: String,
    pub sample_index: usize,
    pub verdict: Verdict,
    pub duration_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_rule: Option<ExtractionRule>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

pub fn write_results(path: &Path, results: &[ResultRecord]) -> Result<(), MetricsError> {
    let io = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in results {
        serde_json::to_writer(&mut out, r).expect("result serializes");
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>, MetricsError> {
    let io = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| MetricsError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryScore {
    pub problems: usize,
    pub pass_at_k: BTreeMap<usize, f64>,
}

/// Benchmark-level scores. Values are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_samples: usize,
    pub problems: usize,
    pub pass_at_k: BTreeMap<usize, f64>,
    /// DS-1000 only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_library: BTreeMap<Library, LibraryScore>,
    pub verdicts: BTreeMap<String, usize>,
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Timeout => "timeout",
        Verdict::RuntimeError => "runtime_error",
        Verdict::SetupError => "setup_error",
    }
}

/// Per-problem pass@k averaged over problems. Every problem needs the same number of samples,
/// each sample index `0..n` exactly once. A `k` above `n` is skipped with a warning; the
/// DS-1000 `All` column is the problem-weighted mean over libraries.
pub fn aggregate(
    results: &[ResultRecord],
    problems: &[Problem],
    ks: &[usize],
) -> Result<Aggregate, MetricsError> {
    if problems.is_empty() {
        return Err(MetricsError::Empty);
    }
    let index: HashMap<&str, usize> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| (p.task_id.as_str(), i))
        .collect();
    let mut seen: Vec<Vec<Option<bool>>> = vec![Vec::new(); problems.len()];
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    for r in results {
        let &i = index
            .get(r.task_id.as_str())
            .ok_or_else(|| MetricsError::UnknownProblem(r.task_id.clone()))?;
        let slots = &mut seen[i];
        if slots.len() <= r.sample_index {
            slots.resize(r.sample_index + 1, None);
        }
        if slots[r.sample_index].is_some() {
            return Err(MetricsError::DuplicateSample {
                task_id: r.task_id.clone(),
                sample_index: r.sample_index,
            });
        }
        slots[r.sample_index] = Some(r.verdict == Verdict::Pass);
        *verdicts
            .entry(verdict_label(r.verdict).to_string())
            .or_default() += 1;
    }

    let n = seen[0].len();
    let mut correct = Vec::with_capacity(problems.len());
    for (p, slots) in problems.iter().zip(&seen) {
        if slots.is_empty() {
            return Err(MetricsError::MissingProblem(p.task_id.clone()));
        }
        let found = slots.iter().filter(|s| s.is_some()).count();
        if slots.len() != n || found != n {
            return Err(MetricsError::InconsistentSamples {
                task_id: p.task_id.clone(),
                expected: n,
                found,
            });
        }
        correct.push(slots.iter().filter(|s| **s == Some(true)).count());
    }

    let usable: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    for &k in ks.iter().filter(|k| !usable.contains(k)) {
        log::warn!("skipping pass@{k}: only {n} samples per problem");
    }
    if usable.is_empty() {
        return Err(MetricsError::NoUsableK(ks.to_vec(), n));
    }

    let mut pass = BTreeMap::new();
    let mut per_library: BTreeMap<Library, LibraryScore> = BTreeMap::new();
    for &k in &usable {
        let mut total = 0.0;
        let mut lib_sums: BTreeMap<Library, (usize, f64)> = BTreeMap::new();
        for (p, &c) in problems.iter().zip(&correct) {
            let v = pass_at_k(n, c, k)?;
            total += v;
            if let Some(lib) = p.library {
                let e = lib_sums.entry(lib).or_default();
                e.0 += 1;
                e.1 += v;
            }
        }
        pass.insert(k, total / problems.len() as f64);
        for (lib, (count, sum)) in lib_sums {
            per_library
                .entry(lib)
                .or_insert_with(|| LibraryScore {
                    problems: count,
                    pass_at_k: BTreeMap::new(),
                })
                .pass_at_k
                .insert(k, sum / count as f64);
        }
    }
    Ok(Aggregate {
        n_samples: n,
        problems: problems.len(),
        pass_at_k: pass,
        per_library,
        verdicts,
    })
}
