use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::hashing;

/// The five code evolution methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMethod {
    AddConstraints,
    ReplaceRequirement,
    AddReasoningSteps,
    ErroneousCode,
    ComplexityRequirement,
}

impl EvolutionMethod {
    pub const ALL: [EvolutionMethod; 5] = [
        EvolutionMethod::AddConstraints,
        EvolutionMethod::ReplaceRequirement,
        EvolutionMethod::AddReasoningSteps,
        EvolutionMethod::ErroneousCode,
        EvolutionMethod::ComplexityRequirement,
    ];

    /// The method sentence substituted into the evolution template.
    pub fn text(self) -> &'static str {
        match self {
            EvolutionMethod::AddConstraints => "Add new constraints and requirements to the original problem, adding approximately 10 additional words.",
            EvolutionMethod::ReplaceRequirement => "Replace a commonly used requirement in the programming task with a less common and more specific one.",
            EvolutionMethod::AddReasoningSteps => "If the original problem can be solved with only a few logical steps, please add more reasoning steps.",
            EvolutionMethod::ErroneousCode => "Provide a piece of erroneous code as a reference to increase misdirection.",
            EvolutionMethod::ComplexityRequirement => "Propose higher time or space complexity requirements, but please refrain from doing so frequently.",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            EvolutionMethod::AddConstraints => "add_constraints",
            EvolutionMethod::ReplaceRequirement => "replace_requirement",
            EvolutionMethod::AddReasoningSteps => "add_reasoning_steps",
            EvolutionMethod::ErroneousCode => "erroneous_code",
            EvolutionMethod::ComplexityRequirement => "complexity_requirement",
        }
    }
}

impl fmt::Display for EvolutionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Uniform, seeded choice of method for one record in one round.
pub fn choose_method(record_id: &str, round: u32, seed: u64) -> EvolutionMethod {
    let h = hashing::u64_of(&[
        b"method",
        &seed.to_le_bytes(),
        &round.to_le_bytes(),
        record_id.as_bytes(),
    ]);
    EvolutionMethod::ALL[(h % EvolutionMethod::ALL.len() as u64) as usize]
}

pub const EVOLUTION_PREAMBLE: &str = "Please increase the difficulty of the given programming test question a bit.\n\nYou can increase the difficulty using, but not limited to, the following methods:\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolutionPrompt {
    pub method: EvolutionMethod,
    pub question: String,
    pub rendered: String,
}

/// Fills the unified evolution template. Substitution is a single concatenation pass, so
/// braces inside the question are left alone.
pub fn render_evolution_prompt(
    question: &str,
    method: EvolutionMethod,
) -> Result<EvolutionPrompt, EvolveError> {
    if question.trim().is_empty() {
        return Err(EvolveError::EmptyQuestion);
    }
    let mut rendered = String::with_capacity(EVOLUTION_PREAMBLE.len() + question.len() + 128);
    rendered.push_str(EVOLUTION_PREAMBLE);
    rendered.push_str(method.text());
    rendered.push_str("\n\n");
    rendered.push_str(question);
    Ok(EvolutionPrompt {
        method,
        question: question.to_string(),
        rendered,
    })
}
