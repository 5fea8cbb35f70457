use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Read};
use std::ops::RangeInclusive;
use std::path::Path;

use flate2::read::GzDecoder;
use serde::Deserialize;

use super::{BenchError, Benchmark, BenchmarkManifest, Library, Problem, TaskMode, INSERT_MARKER};

/// MBPP task ids forming the 500-problem test split.
pub const MBPP_TEST_SPLIT: RangeInclusive<u64> = 11..=510;

/// Loads a benchmark and checks it against the published manifest.
pub fn load_benchmark(
    benchmark: Benchmark,
    path: &Path,
    mode: TaskMode,
) -> Result<Vec<Problem>, BenchError> {
    load_benchmark_with(
        benchmark,
        path,
        mode,
        &BenchmarkManifest::published(benchmark),
    )
}

pub fn load_benchmark_with(
    benchmark: Benchmark,
    path: &Path,
    mode: TaskMode,
    manifest: &BenchmarkManifest,
) -> Result<Vec<Problem>, BenchError> {
    if mode == TaskMode::Insertion && benchmark != Benchmark::Ds1000 {
        return Err(BenchError::Manifest(format!(
            "{benchmark} has no insertion variant"
        )));
    }
    let problems = match benchmark {
        Benchmark::HumanEval | Benchmark::HumanEvalPlus => load_humaneval(benchmark, path)?,
        Benchmark::Mbpp => load_mbpp(path, manifest)?,
        Benchmark::Ds1000 => load_ds1000(path, mode)?,
    };
    for p in &problems {
        p.validate()?;
    }
    check_manifest(&problems, manifest)?;
    Ok(problems)
}

fn check_manifest(problems: &[Problem], manifest: &BenchmarkManifest) -> Result<(), BenchError> {
    if problems.len() != manifest.count {
        return Err(BenchError::CountMismatch {
            benchmark: manifest.benchmark,
            expected: manifest.count,
            found: problems.len(),
        });
    }
    if let Some(per) = &manifest.per_library {
        let mut found: BTreeMap<Library, usize> = BTreeMap::new();
        for p in problems {
            if let Some(l) = p.library {
                *found.entry(l).or_insert(0) += 1;
            }
        }
        for library in Library::ALL {
            let expected = per.get(&library).copied().unwrap_or(0);
            let got = found.get(&library).copied().unwrap_or(0);
            if expected != got {
                return Err(BenchError::LibraryCountMismatch {
                    benchmark: manifest.benchmark,
                    library,
                    expected,
                    found: got,
                });
            }
        }
    }
    let mut ids = std::collections::HashSet::new();
    for p in problems {
        if !ids.insert(p.task_id.as_str()) {
            return Err(BenchError::Malformed {
                task_id: p.task_id.clone(),
                message: "duplicate task_id".into(),
            });
        }
    }
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a text file, transparently decompressing `.gz`.
fn read_text(path: &Path) -> Result<String, BenchError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file)
            .read_to_string(&mut text)
            .map_err(io_err(path))?;
    } else {
        BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(io_err(path))?;
    }
    Ok(text)
}

fn jsonl_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, BenchError> {
    parse_rows(&read_text(path)?, &path.display().to_string())
}

fn parse_rows<T: for<'de> Deserialize<'de>>(
    text: &str,
    origin: &str,
) -> Result<Vec<T>, BenchError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line).map_err(|e| BenchError::Malformed {
                task_id: format!("{origin}:{}", i + 1),
                message: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}

const BUNDLED_HUMANEVAL: &[u8] = include_bytes!("../../data/HumanEval.jsonl.gz");

/// The HumanEval release shipped with the crate, checked against the published manifest.
pub fn bundled_humaneval() -> Result<Vec<Problem>, BenchError> {
    let mut text = String::new();
    GzDecoder::new(BUNDLED_HUMANEVAL)
        .read_to_string(&mut text)
        .map_err(|source| BenchError::Io {
            path: "HumanEval.jsonl.gz".into(),
            source,
        })?;
    let problems = humaneval_problems(
        Benchmark::HumanEval,
        parse_rows(&text, "HumanEval.jsonl.gz")?,
    );
    for p in &problems {
        p.validate()?;
    }
    check_manifest(
        &problems,
        &BenchmarkManifest::published(Benchmark::HumanEval),
    )?;
    Ok(problems)
}

#[derive(Deserialize)]
struct HumanEvalRow {
    task_id: String,
    prompt: String,
    test: String,
    entry_point: String,
    #[serde(default)]
    canonical_solution: Option<String>,
}

fn load_humaneval(benchmark: Benchmark, path: &Path) -> Result<Vec<Problem>, BenchError> {
    Ok(humaneval_problems(benchmark, jsonl_rows(path)?))
}

fn humaneval_problems(benchmark: Benchmark, rows: Vec<HumanEvalRow>) -> Vec<Problem> {
    rows.into_iter()
        .map(|r| Problem {
            task_id: r.task_id,
            benchmark,
            statement: r.prompt,
            tests: r.test,
            entry_point: Some(r.entry_point),
            library: None,
            mode: TaskMode::Completion,
            suffix: None,
            reference: r.canonical_solution,
            context: None,
        })
        .collect()
}

#[derive(Deserialize)]
struct MbppRow {
    task_id: u64,
    text: String,
    test_list: Vec<String>,
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    test_setup_code: String,
}

/// Full MBPP file size; the test split is selected out of it.
const MBPP_FULL_SIZE: usize = 974;

fn load_mbpp(path: &Path, manifest: &BenchmarkManifest) -> Result<Vec<Problem>, BenchError> {
    let mut rows: Vec<MbppRow> = jsonl_rows(path)?;
    if rows.len() == MBPP_FULL_SIZE {
        rows.retain(|r| MBPP_TEST_SPLIT.contains(&r.task_id));
    }
    rows.into_iter()
        .map(|r| {
            let task_id = format!("Mbpp/{}", r.task_id);
            if let Some(expected) = manifest.tests_per_problem {
                if r.test_list.len() != expected {
                    return Err(BenchError::Malformed {
                        task_id,
                        message: format!("expected {expected} tests, found {}", r.test_list.len()),
                    });
                }
            }
            let mut tests = String::new();
            if !r.test_setup_code.trim().is_empty() {
                tests.push_str(&r.test_setup_code);
                tests.push('\n');
            }
            tests.push_str(&r.test_list.join("\n"));
            tests.push('\n');
            Ok(Problem {
                task_id,
                benchmark: Benchmark::Mbpp,
                statement: r.text,
                tests,
                entry_point: None,
                library: None,
                mode: TaskMode::Completion,
                suffix: None,
                reference: r.code,
                context: None,
            })
        })
        .collect()
}

fn read_optional(path: &Path) -> Result<Option<String>, BenchError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Reads `<root>/<Library>/<Completion|Insertion>/q<N>/`.
fn load_ds1000(root: &Path, mode: TaskMode) -> Result<Vec<Problem>, BenchError> {
    if !root.is_dir() {
        return Err(BenchError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "DS-1000 root directory"),
        });
    }
    let mut problems = Vec::new();
    for library in Library::ALL {
        let dir = root.join(library.dir_name()).join(mode.dir_name());
        if !dir.is_dir() {
            continue;
        }
        let mut entries: Vec<(u64, std::path::PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix('q').and_then(|n| n.parse::<u64>().ok()) {
                entries.push((n, entry.path()));
            }
        }
        entries.sort();
        for (n, qdir) in entries {
            let task_id = format!("{}/{}/q{n}", library.dir_name(), mode.dir_name());
            let prompt =
                fs::read_to_string(qdir.join("prompt.txt")).map_err(|e| BenchError::Malformed {
                    task_id: task_id.clone(),
                    message: format!("prompt.txt: {e}"),
                })?;
            let tests = fs::read_to_string(qdir.join("test_code.py")).map_err(|e| {
                BenchError::Malformed {
                    task_id: task_id.clone(),
                    message: format!("test_code.py: {e}"),
                }
            })?;
            let (statement, suffix) = match mode {
                TaskMode::Completion => (prompt, None),
                TaskMode::Insertion => match prompt.split_once(INSERT_MARKER) {
                    Some((pre, post)) => (pre.to_string(), Some(post.to_string())),
                    None => (prompt, Some(String::new())),
                },
            };
            problems.push(Problem {
                task_id,
                benchmark: Benchmark::Ds1000,
                statement,
                tests,
                entry_point: None,
                library: Some(library),
                mode,
                suffix,
                reference: read_optional(&qdir.join("reference_code.txt"))?,
                context: read_optional(&qdir.join("code_context.txt"))?,
            });
        }
    }
    Ok(problems)
}
