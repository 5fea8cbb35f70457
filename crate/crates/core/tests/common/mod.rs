#![allow(dead_code)]

use std::path::{Path, PathBuf};

use evolcode::backend::{BackendSpec, MockConfig, MockFallback, MockRule};
use evolcode::bench::{bundled_humaneval, Library, Problem};
use evolcode::corpus::{save_corpus, Corpus, InstructionRecord};

pub const DS1000_COUNTS: [(Library, usize); 7] = [
    (Library::Plt, 155),
    (Library::Np, 220),
    (Library::Pd, 291),
    (Library::Py, 68),
    (Library::Scp, 106),
    (Library::Sk, 115),
    (Library::Tf, 45),
];

pub fn humaneval() -> Vec<Problem> {
    bundled_humaneval().expect("bundled HumanEval loads")
}

pub fn python() -> PathBuf {
    PathBuf::from("python3")
}

/// Mock that answers problem `i` with its reference solution when `correct(i)`, and with a
/// failing body otherwise.
pub fn scripted_mock(
    id: &str,
    problems: &[Problem],
    correct: impl Fn(usize) -> bool,
) -> BackendSpec {
    let rules = problems
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let answer = if correct(i) {
                p.reference.clone().expect("reference solution")
            } else {
                "    raise AssertionError('wrong')\n".to_string()
            };
            MockRule::canned(p.statement.clone(), answer)
        })
        .collect();
    BackendSpec::mock(
        id,
        MockConfig {
            rules,
            ..MockConfig::echo(7)
        },
    )
}

pub fn canonical_mock(id: &str, problems: &[Problem]) -> BackendSpec {
    scripted_mock(id, problems, |_| true)
}

pub fn fixed_mock(id: &str, fallback: MockFallback) -> BackendSpec {
    BackendSpec::mock(
        id,
        MockConfig {
            fallback,
            ..MockConfig::echo(7)
        },
    )
}

pub fn write_spec(dir: &Path, name: &str, spec: &BackendSpec) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path
}

/// Turns every `assert X` in a test suite into `assert not (X)`.
pub fn flip_asserts(tests: &str) -> String {
    let re = regex::Regex::new(r"(?m)^(\s*)assert\s+(.+?)(,\s*(?:f?['\x22].*))?\s*$").unwrap();
    re.replace_all(tests, |c: &regex::Captures| {
        format!(
            "{}assert not ({}){}",
            &c[1],
            &c[2],
            c.get(3).map_or("", |m| m.as_str())
        )
    })
    .into_owned()
}

/// A 500-problem MBPP test split in the published field layout.
pub fn write_mbpp_fixture(path: &Path) {
    let mut out = String::new();
    for id in 11..=510u64 {
        let row = serde_json::json!({
            "task_id": id,
            "text": format!("Write a function to add {id} to a number."),
            "code": format!("def add_{id}(x):\n    return x + {id}\n"),
            "test_list": [
                format!("assert add_{id}(0) == {id}"),
                format!("assert add_{id}(1) == {}", id + 1),
                format!("assert add_{id}(-{id}) == 0"),
            ],
            "test_setup_code": "",
            "challenge_test_list": [],
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// A DS-1000 tree with the published per-library counts, in both task formats. The expected
/// answer to every problem is `result = x * 2`.
pub fn write_ds1000_fixture(root: &Path) {
    for (lib, count) in DS1000_COUNTS {
        for mode in ["Completion", "Insertion"] {
            for q in 0..count {
                let dir = root.join(lib.dir_name()).join(mode).join(format!("q{q}"));
                std::fs::create_dir_all(&dir).unwrap();
                let prompt = if mode == "Insertion" {
                    format!("x = {q}\n[insert]\nprint(result)\n")
                } else {
                    format!("x = {q}\n")
                };
                std::fs::write(dir.join("prompt.txt"), prompt).unwrap();
                std::fs::write(dir.join("reference_code.txt"), "result = x * 2\n").unwrap();
                std::fs::write(
                    dir.join("test_code.py"),
                    format!("assert result == {}\n", 2 * q),
                )
                .unwrap();
            }
        }
    }
}

pub fn toy_seed(n: usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|i| {
                InstructionRecord::seed(
                    format!("Write a function number {i} that sums a list."),
                    "",
                )
            })
            .collect(),
    )
    .unwrap()
}

pub fn write_toy_seed(path: &Path, n: usize) {
    save_corpus(&toy_seed(n), path).unwrap();
}
