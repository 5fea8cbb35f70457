use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{anyhow, bail, Context, Result};

use super::config::{RunConfig, SeedFormat};
use super::SandboxSetupError;
use crate::backend::{open_backend_file, Client, GenerationRequest};
use crate::bench::{
    build_eval_prompt, bundled_humaneval, load_benchmark, Benchmark, Problem, PromptStyle, TaskMode,
};
use crate::corpus::{ingest_alpaca, load_corpus, save_corpus, Corpus};
use crate::evolve::{
    generate_responses, run_round, stopping_decision, Evolver, RoundState, RunLedger, StopDecision,
    ValidityFilter,
};
use crate::metrics::{aggregate, write_results, Report, ReportMetadata, ResultRecord};
use crate::sandbox::{
    assemble_test_program, execute_batch, interpreter_version, ExecutionTask, ResourceLimits,
    Verdict,
};

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn client_for(spec: &Path) -> Result<Client> {
    let backend =
        open_backend_file(spec).with_context(|| format!("opening backend {}", spec.display()))?;
    Ok(Client::new(backend))
}

fn evolution_client(cfg: &RunConfig) -> Result<Client> {
    let spec = cfg
        .backend
        .as_deref()
        .ok_or_else(|| anyhow!("no backend configured (set `backend` in the config)"))?;
    client_for(spec)
}

fn load_seed(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg
        .seed_corpus
        .as_deref()
        .ok_or_else(|| anyhow!("no seed corpus configured (set `seed_corpus`)"))?;
    let corpus = match cfg.seed_format {
        SeedFormat::Corpus => load_corpus(path)?,
        SeedFormat::Alpaca => ingest_alpaca(path)?,
    };
    if corpus.is_empty() {
        bail!("seed corpus {} is empty", path.display());
    }
    Ok(corpus)
}

pub fn ledger_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("ledger.json")
}

fn corpus_path(cfg: &RunConfig, round: u32) -> PathBuf {
    cfg.out_dir
        .join("corpus")
        .join(format!("round-{round}.jsonl"))
}

/// Copies the seed into the output directory as the round-0 corpus.
fn start_ledger(cfg: &RunConfig) -> Result<RunLedger> {
    let seed = load_seed(cfg)?;
    create_dir(&cfg.out_dir.join("corpus"))?;
    let path = corpus_path(cfg, seed.round_ceiling());
    save_corpus(&seed, &path)?;
    let mut state = RoundState::seed(path, &seed);
    state.round = seed.round_ceiling();
    let ledger = RunLedger {
        rounds: vec![state],
        best_round: None,
    };
    ledger.save(&ledger_path(cfg))?;
    Ok(ledger)
}

fn evolver<'a>(cfg: &RunConfig, client: &'a Client) -> Result<Evolver<'a>> {
    let mut e = Evolver::new(client, cfg.seed);
    if let Some(p) = &cfg.refusal_patterns {
        e.filter = ValidityFilter::with_patterns_file(p)?;
    }
    Ok(e)
}

fn next_round(
    cfg: &RunConfig,
    ledger: &mut RunLedger,
    evolver: &Evolver<'_>,
) -> Result<RoundState> {
    let prev = ledger
        .rounds
        .last()
        .expect("ledger starts with the seed round")
        .clone();
    let round = prev.round + 1;
    let (state, _) = run_round(&prev, evolver, &corpus_path(cfg, round))
        .with_context(|| format!("evolution round {round}"))?;
    ledger.rounds.push(state.clone());
    ledger.save(&ledger_path(cfg))?;
    Ok(state)
}

/// Runs `rounds` evolution rounds from the seed corpus.
pub fn cmd_evolve(cfg: &RunConfig, rounds: u32) -> Result<RunLedger> {
    let client = evolution_client(cfg)?;
    let evolver = evolver(cfg, &client)?;
    let mut ledger = start_ledger(cfg)?;
    for _ in 0..rounds {
        let s = next_round(cfg, &mut ledger, &evolver)?;
        println!(
            "round {}: attempted {}, kept {}, dropped {}, corpus {}",
            s.round, s.attempted, s.kept, s.dropped, s.corpus_total
        );
    }
    Ok(ledger)
}

/// Fills empty responses of `input` and writes the completed corpus to `output`.
pub fn cmd_generate_responses(cfg: &RunConfig, input: &Path, output: &Path) -> Result<Corpus> {
    let client = evolution_client(cfg)?;
    let corpus = load_corpus(input)?;
    let params = cfg.presets.get("greedy")?;
    let mut checkpoint = output.as_os_str().to_owned();
    checkpoint.push(".partial");
    let checkpoint = PathBuf::from(checkpoint);
    if let Some(parent) = output.parent() {
        create_dir(parent)?;
    }
    let filled = generate_responses(&corpus, &client, &params, &checkpoint)
        .context("response generation")?;
    save_corpus(&filled, output)?;
    let _ = std::fs::remove_file(&checkpoint);
    Ok(filled)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub benchmark: Benchmark,
    /// Backend spec file of the model under evaluation.
    pub endpoint: PathBuf,
    pub preset: String,
    pub mode: TaskMode,
    pub style: Option<PromptStyle>,
    /// Evaluate only the first N problems.
    pub limit: Option<usize>,
    /// Overrides the configured data path.
    pub data: Option<PathBuf>,
    /// Overrides the default output directory for this run.
    pub out: Option<PathBuf>,
}

fn load_problems(cfg: &RunConfig, args: &EvalArgs) -> Result<Vec<Problem>> {
    let configured = match args.benchmark {
        Benchmark::HumanEval => &cfg.data.humaneval,
        Benchmark::HumanEvalPlus => &cfg.data.humaneval_plus,
        Benchmark::Mbpp => &cfg.data.mbpp,
        Benchmark::Ds1000 => &cfg.data.ds1000,
    };
    let mut problems = match args.data.as_ref().or(configured.as_ref()) {
        Some(path) => load_benchmark(args.benchmark, path, args.mode)
            .with_context(|| format!("loading {} from {}", args.benchmark, path.display()))?,
        None if args.benchmark == Benchmark::HumanEval => bundled_humaneval()?,
        None => bail!(
            "no data path for {} (use --data or [data] in the config)",
            args.benchmark
        ),
    };
    if let Some(n) = args.limit {
        problems.truncate(n);
    }
    if problems.is_empty() {
        bail!("no problems selected");
    }
    Ok(problems)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Checks the interpreter once before any generation is spent.
fn probe_interpreter(cfg: &RunConfig) -> Result<String> {
    let version = interpreter_version(&cfg.interpreter).ok_or_else(|| {
        SandboxSetupError(format!(
            "interpreter {} is not runnable",
            cfg.interpreter.display()
        ))
    })?;
    log::info!("interpreter {}: {version}", cfg.interpreter.display());
    Ok(version)
}

/// Prompts, generation, sandboxed execution and scoring for one benchmark.
pub fn cmd_evaluate(cfg: &RunConfig, args: &EvalArgs) -> Result<Report> {
    let version = probe_interpreter(cfg)?;
    let problems = load_problems(cfg, args)?;
    let params = cfg.presets.get(&args.preset)?;
    let style = args
        .style
        .unwrap_or_else(|| PromptStyle::default_for(args.benchmark));
    let client = client_for(&args.endpoint)?;
    let model = client.spec().id.clone();
    let out = args.out.clone().unwrap_or_else(|| {
        cfg.out_dir
            .join("eval")
            .join(sanitize(&model))
            .join(format!(
                "{}-{}-{}",
                args.benchmark.key(),
                args.mode,
                sanitize(&args.preset)
            ))
    });
    create_dir(&out)?;
    log::info!(
        "evaluating {model} on {} problems of {} ({}, {:?} prompts, n={})",
        problems.len(),
        args.benchmark,
        args.mode,
        style,
        params.n_samples
    );

    let mut requests = Vec::with_capacity(problems.len());
    for p in &problems {
        let prompt = build_eval_prompt(p, style).context("prompt construction")?;
        requests.push(GenerationRequest {
            prompt: prompt.prompt,
            insertion_suffix: if args.mode == TaskMode::Insertion {
                prompt.suffix
            } else {
                None
            },
            params: params.clone(),
            tag: p.task_id.clone(),
        });
    }
    let mut completions = Vec::with_capacity(problems.len());
    for (p, c) in problems.iter().zip(client.generate_batch(&requests)) {
        completions.push(c.with_context(|| format!("generation stage, problem {}", p.task_id))?);
    }

    let limits = cfg.limits();
    let mut tasks = Vec::new();
    let mut records: Vec<ResultRecord> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for (p, c) in problems.iter().zip(&completions) {
        for (i, text) in c.texts.iter().enumerate() {
            let mut record = ResultRecord {
                task_id: p.task_id.clone(),
                sample_index: i,
                verdict: Verdict::SetupError,
                duration_secs: 0.0,
                extraction_rule: None,
                detail: String::new(),
            };
            match assemble_test_program(p, text) {
                Ok((candidate, program)) => {
                    record.extraction_rule = Some(candidate.extraction_rule);
                    pending.push(records.len());
                    tasks.push(ExecutionTask {
                        task_id: p.task_id.clone(),
                        program,
                        interpreter: cfg.interpreter.clone(),
                        limits: limits.clone(),
                    });
                }
                Err(e) => record.detail = e.to_string(),
            }
            records.push(record);
        }
    }
    let executed = execute_batch(&tasks, cfg.workers);
    if let Some(first) = executed.first() {
        if executed.iter().all(|r| r.verdict == Verdict::SetupError) {
            return Err(SandboxSetupError(format!(
                "no program could be started: {}",
                first.detail
            ))
            .into());
        }
    }
    for (slot, r) in pending.into_iter().zip(executed) {
        let rec = &mut records[slot];
        rec.verdict = r.verdict;
        rec.duration_secs = r.duration.as_secs_f64();
        rec.detail = r.detail;
    }
    let results_path = out.join("results.jsonl");
    write_results(&results_path, &records)?;

    let scores = aggregate(&records, &problems, &cfg.ks).context("aggregation")?;
    let report = Report {
        model,
        benchmark: args.benchmark,
        mode: args.mode,
        decoding: params,
        scores,
        metadata: ReportMetadata {
            seed: cfg.seed,
            backend_id: client.spec().id.clone(),
            prompt_style: style,
            sandbox: ResourceLimits {
                writable_dir: None,
                ..limits
            },
            results_file: PathBuf::from("results.jsonl"),
            interpreter: Some(version),
        },
    };
    report.save(&out.join("report.json"))?;
    let md = crate::metrics::render_markdown(std::slice::from_ref(&report))?;
    std::fs::write(out.join("report.md"), &md)
        .with_context(|| format!("writing {}", out.join("report.md").display()))?;
    Ok(report)
}

/// Asks the registration hook (or the operator) for the endpoint spec of `round`.
fn register_endpoint(cfg: &RunConfig, round: u32, corpus: &Path) -> Result<PathBuf> {
    let line = match &cfg.register_cmd {
        Some(cmd) => {
            let out = Command::new("sh")
                .arg("-c")
                .arg(format!("{cmd} \"$@\""))
                .arg("register")
                .arg(round.to_string())
                .arg(corpus)
                .output()
                .with_context(|| format!("running registration hook {cmd:?}"))?;
            if !out.status.success() {
                bail!(
                    "registration hook failed for round {round}: {}",
                    String::from_utf8_lossy(&out.stderr).trim()
                );
            }
            String::from_utf8_lossy(&out.stdout)
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .map(|l| l.trim().to_string())
                .ok_or_else(|| anyhow!("registration hook printed no endpoint for round {round}"))?
        }
        None => {
            eprintln!(
                "round {round} corpus written to {}; fine-tune on it, then enter the endpoint spec path:",
                corpus.display()
            );
            let mut line = String::new();
            std::io::stdin().lock().read_line(&mut line)?;
            let line = line.trim().to_string();
            if line.is_empty() {
                bail!("no endpoint entered for round {round}");
            }
            line
        }
    };
    Ok(PathBuf::from(line))
}

/// Evolve, register, evaluate on HumanEval, and stop at the first pass@1 decline.
pub fn cmd_loop(cfg: &RunConfig, max_rounds: u32) -> Result<RunLedger> {
    let client = evolution_client(cfg)?;
    let evolver = evolver(cfg, &client)?;
    probe_interpreter(cfg)?;
    let mut ledger = start_ledger(cfg)?;
    for _ in 0..max_rounds {
        let state = next_round(cfg, &mut ledger, &evolver)?;
        let round = state.round;
        let train = cfg
            .out_dir
            .join("corpus")
            .join(format!("round-{round}.train.jsonl"));
        cmd_generate_responses(cfg, &state.corpus_path, &train)
            .with_context(|| format!("responses for round {round}"))?;
        let endpoint = register_endpoint(cfg, round, &train)?;
        let report = cmd_evaluate(
            cfg,
            &EvalArgs {
                benchmark: Benchmark::HumanEval,
                endpoint: endpoint.clone(),
                preset: "greedy".into(),
                mode: TaskMode::Completion,
                style: None,
                limit: cfg.loop_eval_limit,
                data: None,
                out: Some(cfg.out_dir.join("loop").join(format!("round-{round}"))),
            },
        )
        .with_context(|| format!("evaluating round {round}"))?;
        let pass = report.pass_at_1().expect("greedy evaluation has pass@1");
        {
            let last = ledger.rounds.last_mut().expect("round just added");
            last.endpoint = Some(endpoint.display().to_string());
            last.pass_at_1 = Some(pass);
            last.training = Some(cfg.training.clone());
        }
        println!("round {round}: pass@1 {:.1}", pass * 100.0);
        let decision = stopping_decision(&mut ledger)?;
        ledger.save(&ledger_path(cfg))?;
        if let StopDecision::Stop { .. } = decision {
            break;
        }
    }
    if ledger.best_round.is_none() {
        ledger.best_round = ledger.best_measured();
        ledger.save(&ledger_path(cfg))?;
    }
    match ledger.best_round {
        Some(i) => {
            let best = &ledger.rounds[i];
            println!(
                "best round: {} (pass@1 {:.1})",
                best.round,
                best.pass_at_1.unwrap_or_default() * 100.0
            );
        }
        None => println!("no round was evaluated"),
    }
    Ok(ledger)
}
