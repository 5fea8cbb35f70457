use crate::bench::{extract_code, Benchmark, ExtractedCandidate, Problem, INSERT_MARKER};

use super::SandboxError;

/// Places `code` at the marker of a DS-1000 execution context.
pub fn splice_insertion(context: &str, code: &str) -> String {
    match context.split_once(INSERT_MARKER) {
        Some((pre, post)) => format!("{pre}{code}{post}"),
        None => format!("{context}\n{code}"),
    }
}

/// Builds the program that runs `code` against the problem's tests.
///
/// The HumanEval family keeps the prompt in front: a continuation completes the stub and a full
/// definition simply redefines it.
pub fn assemble_program(problem: &Problem, code: &str) -> String {
    match problem.benchmark {
        Benchmark::HumanEval | Benchmark::HumanEvalPlus => {
            let mut p = format!("{}{}\n\n{}\n", problem.statement, code, problem.tests);
            if let Some(entry) = &problem.entry_point {
                p.push_str(&format!("\ncheck({entry})\n"));
            }
            p
        }
        Benchmark::Mbpp => format!("{code}\n\n{}", problem.tests),
        Benchmark::Ds1000 => {
            let body = match &problem.context {
                Some(ctx) => splice_insertion(ctx, code),
                None => format!(
                    "{}{}{}",
                    problem.statement,
                    code,
                    problem.suffix.as_deref().unwrap_or("")
                ),
            };
            format!("{body}\n{}", problem.tests)
        }
    }
}

/// Extracts code from a raw completion and assembles its test program.
pub fn assemble_test_program(
    problem: &Problem,
    completion: &str,
) -> Result<(ExtractedCandidate, String), SandboxError> {
    let candidate = extract_code(completion);
    if !candidate.is_extractable() {
        return Err(SandboxError::Unextractable(problem.task_id.clone()));
    }
    let program = assemble_program(problem, &candidate.code);
    Ok((candidate, program))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{Library, TaskMode};

    fn problem(benchmark: Benchmark) -> Problem {
        Problem {
            task_id: "p".into(),
            benchmark,
            statement: "def f(x):\n    \"\"\"double\"\"\"\n".into(),
            tests: "def check(c):\n    assert c(2) == 4\n".into(),
            entry_point: Some("f".into()),
            library: None,
            mode: TaskMode::Completion,
            suffix: None,
            reference: None,
            context: None,
        }
    }

    #[test]
    fn humaneval_layout() {
        let p = assemble_program(&problem(Benchmark::HumanEval), "    return 2 * x\n");
        assert_eq!(
            p,
            "def f(x):\n    \"\"\"double\"\"\"\n    return 2 * x\n\n\ndef check(c):\n    assert c(2) == 4\n\n\ncheck(f)\n"
        );
    }

    #[test]
    fn mbpp_layout() {
        let mut pr = problem(Benchmark::Mbpp);
        pr.tests = "assert f(2) == 4\n".into();
        assert_eq!(
            assemble_program(&pr, "def f(x): return 2*x"),
            "def f(x): return 2*x\n\nassert f(2) == 4\n"
        );
    }

    #[test]
    fn ds1000_uses_context_marker() {
        let mut pr = problem(Benchmark::Ds1000);
        pr.library = Some(Library::Np);
        pr.context = Some("a = 1\n[insert]\nprint(b)\n".into());
        pr.tests = "assert b == 2\n".into();
        assert_eq!(
            assemble_program(&pr, "b = a + 1"),
            "a = 1\nb = a + 1\nprint(b)\n\nassert b == 2\n"
        );
        pr.context = None;
        pr.statement = "a = 1\n".into();
        pr.suffix = Some("\nc = b\n".into());
        assert_eq!(
            assemble_program(&pr, "b = a + 1"),
            "a = 1\nb = a + 1\nc = b\n\nassert b == 2\n"
        );
    }

    #[test]
    fn unextractable_is_an_error() {
        assert!(assemble_test_program(&problem(Benchmark::HumanEval), "   \n").is_err());
    }
}
