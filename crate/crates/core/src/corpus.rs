//! Instruction corpora across evolution rounds.
//!
//! A corpus file is UTF-8 JSON lines, one [`InstructionRecord`] per line with exactly the keys
//! `id`, `instruction`, `response`, `round`, `parent_id` and `method`. That file is the hand-off
//! format between evolution rounds and external fine-tuning jobs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::EvolutionMethod;
use crate::hashing;

/// Preamble shared by the fine-tuning template and the evaluation template.
pub const TRAINING_PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?} references unknown parent {parent:?}")]
    DanglingParent { id: String, parent: String },
    #[error("record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("record {id:?} has round {found}, expected round {expected}")]
    RoundMismatch {
        id: String,
        expected: u32,
        found: u32,
    },
    #[error("record {0:?} has an empty response")]
    EmptyResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub id: String,
    pub instruction: String,
    pub response: String,
    pub round: u32,
    pub parent_id: Option<String>,
    pub method: Option<EvolutionMethod>,
}

impl InstructionRecord {
    /// A round-0 record whose id is derived from its content.
    pub fn seed(instruction: impl Into<String>, response: impl Into<String>) -> Self {
        let instruction = instruction.into();
        let response = response.into();
        let id = format!(
            "seed-{}",
            hashing::hex_prefix(&[instruction.as_bytes(), response.as_bytes()], 16)
        );
        Self {
            id,
            instruction,
            response,
            round: 0,
            parent_id: None,
            method: None,
        }
    }

    /// Checks the invariants that do not need the rest of the corpus.
    pub fn check_shape(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.instruction.trim().is_empty() {
            return Err(invalid("instruction is empty"));
        }
        match (self.round, &self.parent_id, &self.method) {
            (0, None, None) => Ok(()),
            (0, _, _) => Err(invalid(
                "round 0 records carry neither parent_id nor method",
            )),
            (_, Some(_), Some(_)) => Ok(()),
            (_, _, _) => Err(invalid("evolved records need both parent_id and method")),
        }
    }
}

/// Whitespace-collapsed instruction text; case is preserved.
pub fn normalize_instruction(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// An immutable, validated corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    records: Vec<InstructionRecord>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(records: Vec<InstructionRecord>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            record.check_shape()?;
            if index.insert(record.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(record.id.clone()));
            }
        }
        for record in &records {
            if let Some(parent) = &record.parent_id {
                let Some(&p) = index.get(parent) else {
                    return Err(CorpusError::DanglingParent {
                        id: record.id.clone(),
                        parent: parent.clone(),
                    });
                };
                // A lineage whose evolution was rejected in some round resumes from its last
                // surviving record, so the parent may be more than one round older.
                if records[p].round >= record.round {
                    return Err(CorpusError::InvalidRecord {
                        id: record.id.clone(),
                        reason: format!(
                            "parent {parent:?} is from round {}, not earlier than {}",
                            records[p].round, record.round
                        ),
                    });
                }
            }
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<InstructionRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InstructionRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn round_ceiling(&self) -> u32 {
        self.records.iter().map(|r| r.round).max().unwrap_or(0)
    }

    pub fn round(&self, round: u32) -> impl Iterator<Item = &InstructionRecord> {
        self.records.iter().filter(move |r| r.round == round)
    }

    /// The round-0 ancestor of `id`.
    pub fn root_of<'a>(&'a self, mut record: &'a InstructionRecord) -> &'a InstructionRecord {
        while let Some(parent) = &record.parent_id {
            record = self.get(parent).expect("validated corpus");
        }
        record
    }

    /// Number of parent links from `record` to its round-0 ancestor.
    pub fn lineage_depth<'a>(&'a self, mut record: &'a InstructionRecord) -> usize {
        let mut depth = 0;
        while let Some(parent) = &record.parent_id {
            record = self.get(parent).expect("validated corpus");
            depth += 1;
        }
        depth
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_round: BTreeMap<u32, usize>,
    pub duplicate_instructions_removed: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_round = BTreeMap::new();
    for r in corpus.records() {
        *per_round.entry(r.round).or_insert(0) += 1;
    }
    CorpusStats {
        total: corpus.len(),
        per_round,
        duplicate_instructions_removed: 0,
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstructionRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Corpus::new(records)
}

/// Writes the corpus atomically: the target only appears once fully written.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        for record in corpus.records() {
            serde_json::to_writer(&mut w, record).map_err(|e| io_err(e.into()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Appends one evolution round to the cumulative corpus.
///
/// New records whose normalized instruction matches any record already present (in `base` or
/// earlier in `new_round`) are dropped; the count is reported in the returned stats.
pub fn merge_rounds(
    base: &Corpus,
    new_round: Vec<InstructionRecord>,
) -> Result<(Corpus, CorpusStats), CorpusError> {
    let expected = if base.is_empty() {
        0
    } else {
        base.round_ceiling() + 1
    };
    for record in &new_round {
        if record.round != expected {
            return Err(CorpusError::RoundMismatch {
                id: record.id.clone(),
                expected,
                found: record.round,
            });
        }
        if let Some(parent) = &record.parent_id {
            if base.get(parent).is_none() {
                return Err(CorpusError::DanglingParent {
                    id: record.id.clone(),
                    parent: parent.clone(),
                });
            }
        }
    }

    let mut seen: HashSet<String> = base
        .records()
        .iter()
        .map(|r| normalize_instruction(&r.instruction))
        .collect();
    let mut records = base.records().to_vec();
    let mut removed = 0;
    for record in new_round {
        if seen.insert(normalize_instruction(&record.instruction)) {
            records.push(record);
        } else {
            removed += 1;
        }
    }
    let merged = Corpus::new(records)?;
    let mut stats = corpus_stats(&merged);
    stats.duplicate_instructions_removed = removed;
    Ok((merged, stats))
}

/// The fine-tuning prompt with an empty response slot.
pub fn training_prompt(instruction: &str) -> String {
    format!("{TRAINING_PREAMBLE}\n\n### Instruction:\n{instruction}\n\n### Response:")
}

/// The fine-tuning prompt with the record's response appended on the line after the marker.
pub fn render_training_example(record: &InstructionRecord) -> Result<String, CorpusError> {
    if record.response.trim().is_empty() {
        return Err(CorpusError::EmptyResponse(record.id.clone()));
    }
    let mut out = training_prompt(&record.instruction);
    out.push('\n');
    out.push_str(&record.response);
    Ok(out)
}

#[derive(Deserialize)]
struct AlpacaRow {
    instruction: String,
    #[serde(default)]
    input: String,
    #[serde(default)]
    output: String,
}

/// Reads a Code Alpaca style seed file (a JSON array, or JSON lines, of
/// `{instruction, input, output}`) into a round-0 corpus with content-derived ids.
///
/// Rows with identical content collapse to one record.
pub fn ingest_alpaca(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows: Vec<AlpacaRow> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?,
            );
        }
        rows
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        let instruction = if row.input.trim().is_empty() {
            row.instruction
        } else {
            format!("{}\n{}", row.instruction, row.input)
        };
        let record = InstructionRecord::seed(instruction, row.output);
        if seen.insert(record.id.clone()) {
            records.push(record);
        }
    }
    Corpus::new(records)
}
