use serde::{Deserialize, Serialize};

use super::{BenchError, Benchmark, Problem};
use crate::corpus::TRAINING_PREAMBLE;

/// Instruction line placed before the problem in instruction-style prompts.
pub const EVAL_INSTRUCTION_PREFIX: &str = "Create a Python script for this problem:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Wrapped in the instruction template.
    Instruction,
    /// Code context passed through unchanged (base-model format).
    Raw,
}

impl PromptStyle {
    pub fn default_for(benchmark: Benchmark) -> Self {
        match benchmark {
            Benchmark::Ds1000 => PromptStyle::Raw,
            _ => PromptStyle::Instruction,
        }
    }
}

impl std::str::FromStr for PromptStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instruction" => Ok(PromptStyle::Instruction),
            "raw" => Ok(PromptStyle::Raw),
            _ => Err(format!("unknown prompt style {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPrompt {
    pub prompt: String,
    pub suffix: Option<String>,
}

/// The problem text shown to the model. MBPP appends its asserts.
fn question(problem: &Problem) -> String {
    match problem.benchmark {
        Benchmark::Mbpp => {
            let asserts: Vec<&str> = problem
                .tests
                .lines()
                .filter(|l| l.trim_start().starts_with("assert"))
                .collect();
            format!(
                "{}\nYour code should pass these tests:\n\n{}",
                problem.statement,
                asserts.join("\n")
            )
        }
        _ => problem.statement.clone(),
    }
}

pub fn build_eval_prompt(problem: &Problem, style: PromptStyle) -> Result<EvalPrompt, BenchError> {
    match (style, problem.benchmark) {
        (PromptStyle::Instruction, Benchmark::Ds1000) => Err(BenchError::StyleMismatch {
            benchmark: problem.benchmark,
            style,
        }),
        (PromptStyle::Instruction, _) => Ok(EvalPrompt {
            prompt: format!(
                "{TRAINING_PREAMBLE}\n\n### Instruction:\n{EVAL_INSTRUCTION_PREFIX}\n{}\n\n### Response:",
                question(problem)
            ),
            suffix: None,
        }),
        (PromptStyle::Raw, Benchmark::Mbpp) => Ok(EvalPrompt {
            prompt: question(problem),
            suffix: None,
        }),
        (PromptStyle::Raw, _) => Ok(EvalPrompt {
            prompt: problem.statement.clone(),
            suffix: problem.suffix.clone(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{Library, TaskMode};

    fn ds1000(mode: TaskMode) -> Problem {
        Problem {
            task_id: "Numpy/Insertion/q1".into(),
            benchmark: Benchmark::Ds1000,
            statement: "import numpy as np\na = np.ones(3)\n".into(),
            tests: "assert result == 3\n".into(),
            entry_point: None,
            library: Some(Library::Np),
            mode,
            suffix: (mode == TaskMode::Insertion).then(|| "\nprint(result)\n".to_string()),
            reference: None,
            context: None,
        }
    }

    #[test]
    fn ds1000_raw_passes_through() {
        let p = ds1000(TaskMode::Completion);
        let e = build_eval_prompt(&p, PromptStyle::Raw).unwrap();
        assert_eq!(e.prompt, p.statement);
        assert_eq!(e.suffix, None);
        let p = ds1000(TaskMode::Insertion);
        let e = build_eval_prompt(&p, PromptStyle::Raw).unwrap();
        assert_eq!(
            (e.prompt.as_str(), e.suffix.as_deref()),
            (p.statement.as_str(), Some("\nprint(result)\n"))
        );
    }

    #[test]
    fn ds1000_rejects_instruction_style() {
        assert!(matches!(
            build_eval_prompt(&ds1000(TaskMode::Completion), PromptStyle::Instruction),
            Err(BenchError::StyleMismatch { .. })
        ));
    }
}
