use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Aggregate, MetricsError};
use crate::backend::DecodingParams;
use crate::bench::{Benchmark, Library, PromptStyle, TaskMode};
use crate::evolve::RunLedger;
use crate::sandbox::ResourceLimits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub backend_id: String,
    pub prompt_style: PromptStyle,
    pub sandbox: ResourceLimits,
    pub results_file: PathBuf,
    #[serde(default)]
    pub interpreter: Option<String>,
}

/// Machine-readable evaluation report. Deterministic for a fixed seed and backend: no
/// timestamps or wall-clock values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub benchmark: Benchmark,
    pub mode: TaskMode,
    pub decoding: DecodingParams,
    pub scores: Aggregate,
    pub metadata: ReportMetadata,
}

impl Report {
    pub fn pass_at_1(&self) -> Option<f64> {
        self.scores.pass_at_k.get(&1).copied()
    }

    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let text = fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| MetricsError::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn ds1000_table(reports: &[&Report], out: &mut String) {
    let mut header = String::from("| Format | Model |");
    let mut rule = String::from("|---|---|");
    for lib in Library::ALL {
        let _ = write!(header, " {} |", lib.short());
        rule.push_str("---:|");
    }
    header.push_str(" All |");
    rule.push_str("---:|");
    let _ = writeln!(out, "{header}\n{rule}");
    let mut counts = String::from("| | # of problems |");
    for lib in Library::ALL {
        let n = reports[0]
            .scores
            .per_library
            .get(&lib)
            .map_or(0, |s| s.problems);
        let _ = write!(counts, " {n} |");
    }
    let _ = writeln!(counts, " {} |", reports[0].scores.problems);
    out.push_str(&counts);
    for r in reports {
        let mode = match r.mode {
            TaskMode::Completion => "Completion",
            TaskMode::Insertion => "Insertion",
        };
        let _ = write!(out, "| {mode} | {} |", r.model);
        for lib in Library::ALL {
            let cell = r
                .scores
                .per_library
                .get(&lib)
                .and_then(|s| s.pass_at_k.get(&1))
                .map_or("-".to_string(), |v| pct(*v));
            let _ = write!(out, " {cell} |");
        }
        let _ = writeln!(out, " {} |", r.pass_at_1().map_or("-".into(), pct));
    }
}

/// Markdown tables: one row per model with a pass@1 column per benchmark, and a per-library
/// table for DS-1000 reports.
pub fn render_markdown(reports: &[Report]) -> Result<String, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut out = String::new();
    let general: Vec<&Report> = reports
        .iter()
        .filter(|r| r.benchmark != Benchmark::Ds1000)
        .collect();
    if !general.is_empty() {
        let benches: Vec<Benchmark> = Benchmark::ALL
            .into_iter()
            .filter(|b| general.iter().any(|r| r.benchmark == *b))
            .collect();
        let mut models: Vec<&str> = Vec::new();
        for r in &general {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        out.push_str("| Model |");
        for b in &benches {
            let _ = write!(out, " {b} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(benches.len()));
        out.push('\n');
        for m in models {
            let _ = write!(out, "| {m} |");
            for b in &benches {
                let cell = general
                    .iter()
                    .find(|r| r.model == m && r.benchmark == *b)
                    .and_then(|r| r.pass_at_1())
                    .map_or("-".to_string(), pct);
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
    }
    let ds: Vec<&Report> = reports
        .iter()
        .filter(|r| r.benchmark == Benchmark::Ds1000)
        .collect();
    if !ds.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        ds1000_table(&ds, &mut out);
    }
    Ok(out)
}

/// Long-format CSV: `model,benchmark,mode,scope,metric,value` with fractional values.
pub fn render_csv(reports: &[Report]) -> String {
    let mut out = String::from("model,benchmark,mode,scope,metric,value\n");
    for r in reports {
        for (k, v) in &r.scores.pass_at_k {
            let _ = writeln!(
                out,
                "{},{},{},all,pass@{k},{v:.6}",
                r.model,
                r.benchmark.key(),
                r.mode
            );
        }
        for (lib, s) in &r.scores.per_library {
            for (k, v) in &s.pass_at_k {
                let _ = writeln!(
                    out,
                    "{},{},{},{lib},pass@{k},{v:.6}",
                    r.model,
                    r.benchmark.key(),
                    r.mode
                );
            }
        }
    }
    out
}

/// `round,pass@1` lines (pass@1 in percent) for every measured round, without a header.
pub fn render_plotdata(ledger: &RunLedger) -> Result<String, MetricsError> {
    let mut out = String::new();
    for r in &ledger.rounds {
        if let Some(p) = r.pass_at_1 {
            let _ = writeln!(out, "{},{:.2}", r.round, p * 100.0);
        }
    }
    if out.is_empty() {
        return Err(MetricsError::Invalid(
            "ledger has no measured rounds".into(),
        ));
    }
    Ok(out)
}

/// A published score for a model that is not evaluated locally.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub model: String,
    /// Percent.
    pub score: f64,
}

/// Reads `model,score` lines (score in percent). A `model,score` header line is optional.
pub fn parse_baselines(text: &str) -> Result<Vec<Baseline>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty()
            || line.starts_with('#')
            || (i == 0 && line.eq_ignore_ascii_case("model,score"))
        {
            continue;
        }
        let bad = |m: &str| MetricsError::Invalid(format!("baselines line {}: {m}", i + 1));
        let (model, score) = line
            .rsplit_once(',')
            .ok_or_else(|| bad("expected model,score"))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| bad("score is not a number"))?;
        if !(0.0..=100.0).contains(&score) {
            return Err(bad("score outside [0, 100]"));
        }
        out.push(Baseline {
            model: model.trim().to_string(),
            score,
        });
    }
    Ok(out)
}

/// Ranks measured reports against reported baselines on one benchmark, highest first.
pub fn compare(reports: &[Report], baselines: &[Baseline]) -> Result<String, MetricsError> {
    let benches: BTreeSet<Benchmark> = reports.iter().map(|r| r.benchmark).collect();
    if benches.len() > 1 {
        return Err(MetricsError::Invalid(
            "reports cover more than one benchmark".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    let mut rows: Vec<(String, f64, &str)> = Vec::new();
    for r in reports {
        let p = r
            .pass_at_1()
            .ok_or_else(|| MetricsError::Invalid(format!("{} has no pass@1", r.model)))?;
        rows.push((r.model.clone(), p * 100.0, "measured"));
    }
    for b in baselines {
        rows.push((b.model.clone(), b.score, "reported"));
    }
    for (m, _, _) in &rows {
        if !seen.insert(m.clone()) {
            return Err(MetricsError::Invalid(format!("model {m} appears twice")));
        }
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let title = benches
        .first()
        .map_or("Score".to_string(), |b| b.to_string());
    let mut out = format!("| Model | {title} | Source |\n|---|---:|---|\n");
    for (m, s, src) in rows {
        let _ = writeln!(out, "| {m} | {s:.1} | {src} |");
    }
    Ok(out)
}
