//! Instruction evolution: prompts, rounds, and the round loop's stopping rule.
//!
//! Each round evolves the *frontier* of the cumulative corpus: the most recent surviving record
//! of every seed lineage. Without rejections that is exactly the latest generation. Survivors of
//! the validity filter are merged into the cumulative corpus, which is written out for an
//! external fine-tuning job; the resulting model is then registered and scored, and the loop
//! stops at the first strict decline in pass@1.

mod filter;
mod method;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{parse_patterns, Rejection, ValidityFilter, DEFAULT_REFUSAL_PATTERNS};
pub use method::{
    choose_method, render_evolution_prompt, EvolutionMethod, EvolutionPrompt, EVOLUTION_PREAMBLE,
};

use crate::backend::{BackendError, Client, DecodingParams, GenerationRequest};
use crate::corpus::{
    self, load_corpus, merge_rounds, save_corpus, Corpus, CorpusError, CorpusStats,
    InstructionRecord,
};
use crate::hashing;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("cannot evolve an empty question")]
    EmptyQuestion,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("backend failed on record {record:?}: {source}")]
    Backend {
        record: String,
        #[source]
        source: BackendError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid ledger: {0}")]
    Ledger(String),
    #[error("round {0} has no pass@1 measurement")]
    UnmeasuredRound(u32),
    #[error("response generation stopped after {completed} new responses: {source}")]
    ResponsesInterrupted {
        completed: usize,
        #[source]
        source: Box<EvolveError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvolveOutcome {
    Kept(InstructionRecord),
    Rejected(Rejection),
}

/// Evolution settings bound to one backend.
pub struct Evolver<'a> {
    pub client: &'a Client,
    pub params: DecodingParams,
    pub filter: ValidityFilter,
    pub seed: u64,
}

impl<'a> Evolver<'a> {
    pub fn new(client: &'a Client, seed: u64) -> Self {
        Self {
            client,
            params: DecodingParams {
                max_new_tokens: 2048,
                ..DecodingParams::greedy()
            },
            filter: ValidityFilter::default(),
            seed,
        }
    }

    fn request(
        &self,
        record: &InstructionRecord,
        round: u32,
    ) -> Result<(EvolutionMethod, GenerationRequest), EvolveError> {
        let method = choose_method(&record.id, round, self.seed);
        let prompt = render_evolution_prompt(&record.instruction, method)?;
        Ok((
            method,
            GenerationRequest {
                prompt: prompt.rendered,
                insertion_suffix: None,
                params: self.params.clone(),
                tag: record.id.clone(),
            },
        ))
    }

    fn judge(
        &self,
        record: &InstructionRecord,
        round: u32,
        method: EvolutionMethod,
        output: &str,
    ) -> EvolveOutcome {
        match self.filter.check(&record.instruction, output) {
            Err(reason) => EvolveOutcome::Rejected(reason),
            Ok(instruction) => EvolveOutcome::Kept(InstructionRecord {
                id: child_id(&record.id, round),
                instruction,
                response: String::new(),
                round,
                parent_id: Some(record.id.clone()),
                method: Some(method),
            }),
        }
    }

    /// Evolves one record into a child tagged `round` (normally `record.round + 1`).
    pub fn evolve_record(
        &self,
        record: &InstructionRecord,
        round: u32,
    ) -> Result<EvolveOutcome, EvolveError> {
        let (method, request) = self.request(record, round)?;
        let completion = self
            .client
            .generate(&request)
            .map_err(|source| EvolveError::Backend {
                record: record.id.clone(),
                source,
            })?;
        Ok(self.judge(record, round, method, &completion.texts[0]))
    }

    /// Evolves many records concurrently; outcomes are in input order. Any transport failure
    /// (after retries) fails the whole call.
    pub fn evolve_all(
        &self,
        records: &[&InstructionRecord],
        round: u32,
    ) -> Result<Vec<EvolveOutcome>, EvolveError> {
        let mut methods = Vec::with_capacity(records.len());
        let mut requests = Vec::with_capacity(records.len());
        for record in records {
            let (m, r) = self.request(record, round)?;
            methods.push(m);
            requests.push(r);
        }
        let completions = self.client.generate_batch(&requests);
        records
            .iter()
            .zip(methods)
            .zip(completions)
            .map(|((record, method), completion)| {
                let completion = completion.map_err(|source| EvolveError::Backend {
                    record: record.id.clone(),
                    source,
                })?;
                Ok(self.judge(record, round, method, &completion.texts[0]))
            })
            .collect()
    }
}

/// Content-derived id of the child of `parent` evolved in `round`.
pub fn child_id(parent: &str, round: u32) -> String {
    format!(
        "r{round}-{}",
        hashing::hex_prefix(&[parent.as_bytes(), &round.to_le_bytes()], 16)
    )
}

/// The most recent record of every seed lineage, in seed order.
pub fn frontier(corpus: &Corpus) -> Vec<&InstructionRecord> {
    let mut latest: HashMap<&str, &InstructionRecord> = HashMap::new();
    for record in corpus.records() {
        let root = corpus.root_of(record);
        latest
            .entry(root.id.as_str())
            .and_modify(|cur| {
                if record.round > cur.round {
                    *cur = record;
                }
            })
            .or_insert(record);
    }
    corpus
        .round(0)
        .map(|seed| latest[seed.id.as_str()])
        .collect()
}

/// Accounting for one round of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub round: u32,
    pub corpus_path: PathBuf,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub pass_at_1: Option<f64>,
    pub attempted: usize,
    pub kept: usize,
    pub dropped: usize,
    /// Drop reasons, including `duplicate` for merge-time deduplication.
    #[serde(default)]
    pub drop_reasons: BTreeMap<String, usize>,
    pub corpus_total: usize,
    /// Fine-tuning settings of the externally trained model for this round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMetadata>,
}

/// Description of an external fine-tuning run. Recorded only; nothing here is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model: Option<String>,
    pub batch_size: u32,
    pub sequence_length: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
}

impl Default for TrainingMetadata {
    fn default() -> Self {
        Self {
            base_model: None,
            batch_size: 512,
            sequence_length: 2048,
            epochs: None,
            learning_rate: None,
        }
    }
}

impl RoundState {
    pub fn seed(corpus_path: PathBuf, corpus: &Corpus) -> Self {
        Self {
            round: 0,
            corpus_path,
            endpoint: None,
            pass_at_1: None,
            attempted: 0,
            kept: 0,
            dropped: 0,
            drop_reasons: BTreeMap::new(),
            corpus_total: corpus.len(),
            training: None,
        }
    }
}

/// Runs the round after `prev`: evolves the frontier of `prev`'s corpus, merges survivors and
/// writes the cumulative corpus to `out_path`.
pub fn run_round(
    prev: &RoundState,
    evolver: &Evolver<'_>,
    out_path: &Path,
) -> Result<(RoundState, CorpusStats), EvolveError> {
    let base = load_corpus(&prev.corpus_path)?;
    let round = prev.round + 1;
    if !base.is_empty() && base.round_ceiling() != prev.round {
        return Err(EvolveError::Ledger(format!(
            "corpus {} tops out at round {}, ledger expects {}",
            prev.corpus_path.display(),
            base.round_ceiling(),
            prev.round
        )));
    }
    let parents = frontier(&base);
    let outcomes = evolver.evolve_all(&parents, round)?;

    let mut drop_reasons = BTreeMap::new();
    let mut children = Vec::new();
    for outcome in outcomes {
        match outcome {
            EvolveOutcome::Kept(child) => children.push(child),
            EvolveOutcome::Rejected(reason) => {
                *drop_reasons.entry(reason.label().to_string()).or_insert(0) += 1
            }
        }
    }
    let survivors = children.len();
    let (merged, stats) = merge_rounds(&base, children)?;
    if stats.duplicate_instructions_removed > 0 {
        drop_reasons.insert("duplicate".into(), stats.duplicate_instructions_removed);
    }
    save_corpus(&merged, out_path)?;
    let kept = survivors - stats.duplicate_instructions_removed;
    log::info!(
        "round {round}: attempted {}, kept {kept}, corpus {}",
        parents.len(),
        merged.len()
    );
    Ok((
        RoundState {
            round,
            corpus_path: out_path.to_path_buf(),
            endpoint: None,
            pass_at_1: None,
            attempted: parents.len(),
            kept,
            dropped: parents.len() - kept,
            drop_reasons,
            corpus_total: merged.len(),
            training: None,
        },
        stats,
    ))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLedger {
    pub rounds: Vec<RoundState>,
    /// Index into `rounds`.
    #[serde(default)]
    pub best_round: Option<usize>,
}

impl RunLedger {
    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let text = fs::read_to_string(path).map_err(|source| EvolveError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| EvolveError::Ledger(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvolveError> {
        let mut text = serde_json::to_string_pretty(self).expect("ledger serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| EvolveError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Index of the highest pass@1 among measured rounds; the earliest wins ties.
    pub fn best_measured(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.rounds.iter().enumerate() {
            if let Some(p) = r.pass_at_1 {
                if best.is_none_or(|(_, b)| p > b) {
                    best = Some((i, p));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop { best_round: usize },
}

/// Stops iff the latest pass@1 is strictly below the best earlier one. An unmeasured seed
/// entry (round 0) is skipped; any other unmeasured round is an error.
pub fn stopping_decision(ledger: &mut RunLedger) -> Result<StopDecision, EvolveError> {
    let mut measured = Vec::new();
    for (i, r) in ledger.rounds.iter().enumerate() {
        match r.pass_at_1 {
            Some(p) if (0.0..=1.0).contains(&p) => measured.push((i, p)),
            Some(p) => return Err(EvolveError::Ledger(format!("pass@1 {p} outside [0, 1]"))),
            None if r.round == 0 => {}
            None => return Err(EvolveError::UnmeasuredRound(r.round)),
        }
    }
    let Some((&(_, latest), earlier)) = measured.split_last() else {
        return Ok(StopDecision::Continue);
    };
    let best_earlier = earlier
        .iter()
        .map(|(_, p)| *p)
        .fold(f64::NEG_INFINITY, f64::max);
    if latest < best_earlier {
        let best = ledger.best_measured().expect("measured rounds exist");
        ledger.best_round = Some(best);
        Ok(StopDecision::Stop { best_round: best })
    } else {
        Ok(StopDecision::Continue)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    id: String,
    response: String,
}

fn read_checkpoint(path: &Path) -> Result<HashMap<String, String>, EvolveError> {
    let mut done = HashMap::new();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(source) => {
            return Err(EvolveError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| EvolveError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        // a torn final line from a killed run is ignored
        if let Ok(entry) = serde_json::from_str::<CheckpointEntry>(&line) {
            done.insert(entry.id, entry.response);
        }
    }
    Ok(done)
}

/// Fills every empty response by prompting the backend with the training template. Progress
/// is appended to `checkpoint`, so a rerun after a failure resumes where it stopped.
pub fn generate_responses(
    corpus: &Corpus,
    client: &Client,
    params: &DecodingParams,
    checkpoint: &Path,
) -> Result<Corpus, EvolveError> {
    let mut done = read_checkpoint(checkpoint)?;
    let pending: Vec<&InstructionRecord> = corpus
        .records()
        .iter()
        .filter(|r| r.response.is_empty() && !done.contains_key(&r.id))
        .collect();
    let io_err = |source| EvolveError::Io {
        path: checkpoint.to_path_buf(),
        source,
    };
    if !pending.is_empty() {
        let mut log_file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(checkpoint)
            .map_err(io_err)?;
        let chunk = client.spec().rate.max_in_flight * 4;
        let mut completed = 0;
        for group in pending.chunks(chunk) {
            let requests: Vec<GenerationRequest> = group
                .iter()
                .map(|r| GenerationRequest {
                    prompt: corpus::training_prompt(&r.instruction),
                    insertion_suffix: None,
                    params: params.clone(),
                    tag: r.id.clone(),
                })
                .collect();
            let mut first_error = None;
            for (record, result) in group.iter().zip(client.generate_batch(&requests)) {
                let outcome = result
                    .map_err(|source| EvolveError::Backend {
                        record: record.id.clone(),
                        source,
                    })
                    .and_then(|c| {
                        let text = c.texts.into_iter().next().unwrap_or_default();
                        if text.trim().is_empty() {
                            Err(EvolveError::Corpus(CorpusError::EmptyResponse(
                                record.id.clone(),
                            )))
                        } else {
                            Ok(text)
                        }
                    });
                match outcome {
                    Ok(text) => {
                        let entry = CheckpointEntry {
                            id: record.id.clone(),
                            response: text,
                        };
                        let mut line = serde_json::to_string(&entry).expect("serializes");
                        line.push('\n');
                        log_file.write_all(line.as_bytes()).map_err(io_err)?;
                        done.insert(entry.id, entry.response);
                        completed += 1;
                    }
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
            log_file.flush().map_err(io_err)?;
            if let Some(e) = first_error {
                return Err(EvolveError::ResponsesInterrupted {
                    completed,
                    source: Box::new(e),
                });
            }
        }
    }
    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.response.is_empty() {
                if let Some(resp) = done.get(&r.id) {
                    r.response = resp.clone();
                }
            }
            r
        })
        .collect();
    Ok(Corpus::new(records)?)
}
