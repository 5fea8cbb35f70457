//! Acceptance gate: one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use evolcode::backend::{BackendSpec, MockConfig};
use evolcode::bench::{
    build_eval_prompt, load_benchmark, Benchmark, Library, Problem, PromptStyle, TaskMode,
};
use evolcode::cli::{cmd_evaluate, cmd_evolve, cmd_loop, EvalArgs, RunConfig};
use evolcode::corpus::{load_corpus, render_training_example, InstructionRecord};
use evolcode::evolve::{
    child_id, choose_method, render_evolution_prompt, stopping_decision, EvolutionMethod,
    RoundState, RunLedger, StopDecision,
};
use evolcode::metrics::{aggregate, pass_at_k, render_markdown, ResultRecord};
use evolcode::sandbox::{assemble_program, execute_batch, ExecutionTask, ResourceLimits, Verdict};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Fraction of k-subsets of n samples (the first c correct) containing a correct one.
fn enumerate_pass(n: u32, c: u32, k: u32) -> f64 {
    let correct_mask: u32 = (1u32 << c) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for subset in 0u32..(1u32 << n) {
        if subset.count_ones() == k {
            total += 1;
            if subset & correct_mask != 0 {
                hit += 1;
            }
        }
    }
    assert_eq!(total, binom(n as u64, k as u64));
    hit as f64 / total as f64
}

fn passk_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut worst = 0.0f64;
    for n in 1..=12u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got =
                    pass_at_k(n as usize, c as usize, k as usize).map_err(|e| e.to_string())?;
                let want = enumerate_pass(n, c, k);
                let err = (got - want).abs();
                worst = worst.max(err);
                ensure(err <= 1e-12, format!("n={n} c={c} k={k}: {got} vs {want}"))?;
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(5),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "{cases} cases, max error {worst:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn k1_reduction() -> Outcome {
    let mut cases = 0;
    for n in 1..=100usize {
        for c in 0..=n {
            let got = pass_at_k(n, c, 1).map_err(|e| e.to_string())?;
            ensure(got == c as f64 / n as f64, format!("n={n} c={c}: {got}"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases exact"))
}

fn loader_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let he = load_benchmark(
        Benchmark::HumanEval,
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("data/HumanEval.jsonl.gz"),
        TaskMode::Completion,
    )
    .map_err(|e| e.to_string())?;
    ensure(he.len() == 164, format!("HumanEval {}", he.len()))?;

    let mbpp_path = dir.path().join("mbpp.jsonl");
    common::write_mbpp_fixture(&mbpp_path);
    let mbpp = load_benchmark(Benchmark::Mbpp, &mbpp_path, TaskMode::Completion)
        .map_err(|e| e.to_string())?;
    ensure(mbpp.len() == 500, format!("MBPP {}", mbpp.len()))?;
    ensure(
        mbpp.iter()
            .all(|p| p.tests.lines().filter(|l| l.starts_with("assert")).count() == 3),
        "MBPP problem without exactly 3 tests",
    )?;

    let ds_root = dir.path().join("ds1000");
    common::write_ds1000_fixture(&ds_root);
    let mut per_mode = Vec::new();
    for mode in [TaskMode::Completion, TaskMode::Insertion] {
        let ds = load_benchmark(Benchmark::Ds1000, &ds_root, mode).map_err(|e| e.to_string())?;
        let counts: Vec<usize> = Library::ALL
            .iter()
            .map(|l| ds.iter().filter(|p| p.library == Some(*l)).count())
            .collect();
        ensure(
            counts == vec![155, 220, 291, 68, 106, 115, 45],
            format!("DS-1000 {mode} {counts:?}"),
        )?;
        ensure(ds.len() == 1000, "DS-1000 total")?;
        per_mode.push(counts);
    }

    // drift fails hard
    std::fs::remove_dir_all(ds_root.join("Tensorflow/Completion/q3")).unwrap();
    ensure(
        load_benchmark(Benchmark::Ds1000, &ds_root, TaskMode::Completion).is_err(),
        "DS-1000 drift accepted",
    )?;
    let truncated: String = std::fs::read_to_string(&mbpp_path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&mbpp_path, truncated).unwrap();
    ensure(
        load_benchmark(Benchmark::Mbpp, &mbpp_path, TaskMode::Completion).is_err(),
        "MBPP drift accepted",
    )?;
    Ok(format!(
        "HumanEval 164, MBPP 500x3, DS-1000 {:?} (both formats), drift rejected",
        per_mode[0]
    ))
}

fn canonical_oracle() -> Outcome {
    let start = Instant::now();
    let problems = common::humaneval();
    let sandbox = tempfile::tempdir().unwrap();
    let limits = ResourceLimits {
        writable_dir: Some(sandbox.path().to_path_buf()),
        ..ResourceLimits::default()
    };
    let tasks = |flip: bool| -> Vec<ExecutionTask> {
        problems
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if flip {
                    p.tests = common::flip_asserts(&p.tests);
                }
                ExecutionTask {
                    task_id: p.task_id.clone(),
                    program: assemble_program(&p, p.reference.as_deref().unwrap()),
                    interpreter: common::python(),
                    limits: limits.clone(),
                }
            })
            .collect()
    };
    let good = execute_batch(&tasks(false), 8);
    let passed = good.iter().filter(|r| r.verdict == Verdict::Pass).count();
    if passed != 164 {
        let bad: Vec<_> = good
            .iter()
            .filter(|r| r.verdict != Verdict::Pass)
            .map(|r| {
                format!(
                    "{} {:?} {}",
                    r.task_id,
                    r.verdict,
                    r.detail.lines().last().unwrap_or("")
                )
            })
            .collect();
        return Err(format!("canonical {passed}/164: {bad:?}"));
    }
    let flipped = execute_batch(&tasks(true), 8);
    let still = flipped
        .iter()
        .filter(|r| r.verdict == Verdict::Pass)
        .count();
    if still != 0 {
        let ids: Vec<_> = flipped
            .iter()
            .filter(|r| r.verdict == Verdict::Pass)
            .map(|r| r.task_id.clone())
            .collect();
        return Err(format!("flipped {still}/164 still pass: {ids:?}"));
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(600),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "164/164 canonical, 0/164 flipped, {:.1}s at 8 workers",
        elapsed.as_secs_f64()
    ))
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .unwrap_or_else(|e| panic!("golden {name}: {e}"))
}

fn prompt_goldens() -> Outcome {
    let q = "Write a function that sums a list.";
    let mut checked = 0;
    for m in EvolutionMethod::ALL {
        let rendered = render_evolution_prompt(q, m)
            .map_err(|e| e.to_string())?
            .rendered;
        ensure(
            rendered == golden(&format!("evolution_{}.txt", m.tag())),
            format!("evolution {}", m.tag()),
        )?;
        checked += 1;
    }
    let record = InstructionRecord::seed(q, "def total(xs):\n    return sum(xs)\n");
    ensure(
        render_training_example(&record).map_err(|e| e.to_string())?
            == golden("training_example.txt"),
        "training example",
    )?;
    let he = Problem {
        task_id: "HumanEval/x".into(),
        benchmark: Benchmark::HumanEval,
        statement: "def add(a, b):\n    \"\"\"Return the sum of a and b.\"\"\"\n".into(),
        tests: "def check(c):\n    assert c(1, 2) == 3\n".into(),
        entry_point: Some("add".into()),
        library: None,
        mode: TaskMode::Completion,
        suffix: None,
        reference: None,
        context: None,
    };
    ensure(
        build_eval_prompt(&he, PromptStyle::Instruction)
            .unwrap()
            .prompt
            == golden("eval_humaneval.txt"),
        "HumanEval eval prompt",
    )?;
    let mbpp = Problem {
        task_id: "Mbpp/2".into(),
        benchmark: Benchmark::Mbpp,
        statement: "Write a function to find the shared elements from the given two lists.".into(),
        tests: "assert set(similar_elements((3, 4, 5, 6),(5, 7, 4, 10))) == set((4, 5))\nassert set(similar_elements((1, 2, 3, 4),(5, 4, 3, 7))) == set((3, 4))\nassert set(similar_elements((11, 12, 14, 13),(17, 15, 14, 13))) == set((13, 14))\n".into(),
        entry_point: None,
        ..he
    };
    ensure(
        build_eval_prompt(&mbpp, PromptStyle::Instruction)
            .unwrap()
            .prompt
            == golden("eval_mbpp.txt"),
        "MBPP eval prompt",
    )?;
    Ok(format!(
        "{checked} evolution + training + 2 evaluation goldens byte-exact"
    ))
}

/// Independent model of the round loop: each lineage's latest survivor is re-evolved, and a
/// rejected attempt leaves the lineage where it was.
fn simulate_rounds(
    seed: &[InstructionRecord],
    mock: &MockConfig,
    evo_seed: u64,
    rounds: u32,
) -> Vec<usize> {
    let mut frontier: Vec<(String, String)> = seed
        .iter()
        .map(|r| (r.id.clone(), r.instruction.clone()))
        .collect();
    let mut total = seed.len();
    let mut sizes = Vec::new();
    for round in 1..=rounds {
        for (id, instruction) in frontier.iter_mut() {
            let method = choose_method(id, round, evo_seed);
            let prompt = render_evolution_prompt(instruction, method)
                .unwrap()
                .rendered;
            if mock.rejects(&prompt) {
                continue;
            }
            *instruction = format!("EVOLVED: {}", instruction.trim());
            *id = child_id(id, round);
            total += 1;
        }
        sizes.push(total);
    }
    sizes
}

fn round_accounting() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let seed = common::toy_seed(20_000);
    let seed_path = dir.path().join("seed.jsonl");
    evolcode::corpus::save_corpus(&seed, &seed_path).unwrap();
    let mock = MockConfig {
        reject_rate: 0.10,
        ..MockConfig::echo(2024)
    };
    let spec_path = common::write_spec(
        dir.path(),
        "mock",
        &BackendSpec::mock("evolver", mock.clone()),
    );
    let cfg = RunConfig {
        seed_corpus: Some(seed_path),
        backend: Some(spec_path),
        out_dir: dir.path().join("out"),
        seed: 11,
        ..RunConfig::default()
    };
    let ledger = cmd_evolve(&cfg, 4).map_err(|e| format!("{e:#}"))?;
    let sizes: Vec<usize> = ledger.rounds[1..].iter().map(|r| r.corpus_total).collect();
    for r in &ledger.rounds {
        ensure(
            r.kept + r.dropped == r.attempted,
            format!("round {} accounting", r.round),
        )?;
        let on_disk = load_corpus(&r.corpus_path)
            .map_err(|e| e.to_string())?
            .len();
        ensure(
            on_disk == r.corpus_total,
            format!("round {} file has {on_disk}", r.round),
        )?;
    }
    let expected = simulate_rounds(seed.records(), &mock, cfg.seed, 4);
    ensure(
        sizes == expected,
        format!("sizes {sizes:?} vs simulation {expected:?}"),
    )?;
    for (got, target) in sizes.iter().zip([38_000.0, 56_000.0, 74_000.0, 92_000.0]) {
        let dev = (*got as f64 - target) / target;
        ensure(
            dev.abs() <= 0.05,
            format!("{got} is {:.1}% from {target}", dev * 100.0),
        )?;
    }
    Ok(format!(
        "cumulative sizes {sizes:?} equal the simulation, within 5% of 38k/56k/74k/92k"
    ))
}

fn schedule_loop(schedule: &[usize], max_rounds: u32) -> Result<RunLedger, String> {
    let dir = tempfile::tempdir().unwrap();
    let problems: Vec<Problem> = common::humaneval().into_iter().take(100).collect();
    let seed_path = dir.path().join("seed.jsonl");
    common::write_toy_seed(&seed_path, 20);
    let evolver = common::write_spec(
        dir.path(),
        "evolver",
        &BackendSpec::mock("evolver", MockConfig::echo(1)),
    );
    for (i, &correct) in schedule.iter().enumerate() {
        let spec = common::scripted_mock(&format!("round-{}", i + 1), &problems, |p| p < correct);
        common::write_spec(dir.path(), &format!("round-{}", i + 1), &spec);
    }
    let cfg = RunConfig {
        seed_corpus: Some(seed_path),
        backend: Some(evolver),
        out_dir: dir.path().join("out"),
        register_cmd: Some(format!(
            "sh -c 'echo {}/round-$0.json'",
            dir.path().display()
        )),
        loop_eval_limit: Some(100),
        ks: vec![1],
        ..RunConfig::default()
    };
    cmd_loop(&cfg, max_rounds).map_err(|e| format!("{e:#}"))
}

fn stopping_rule() -> Outcome {
    let schedule = [0.30, 0.40, 0.45, 0.44];
    let mut ledger = RunLedger::default();
    let mut stopped_at = None;
    for (i, p) in schedule.iter().enumerate() {
        ledger.rounds.push(RoundState {
            round: i as u32 + 1,
            pass_at_1: Some(*p),
            ..RoundState::seed("c".into(), &common::toy_seed(1))
        });
        if let StopDecision::Stop { best_round } =
            stopping_decision(&mut ledger).map_err(|e| e.to_string())?
        {
            stopped_at = Some((i + 1, ledger.rounds[best_round].round));
            break;
        }
    }
    ensure(
        stopped_at == Some((4, 3)),
        format!("pure rule stopped at {stopped_at:?}"),
    )?;

    let ledger = schedule_loop(&[30, 40, 45, 44], 6)?;
    let measured: Vec<f64> = ledger.rounds.iter().filter_map(|r| r.pass_at_1).collect();
    ensure(
        measured == vec![0.30, 0.40, 0.45, 0.44],
        format!("measured {measured:?}"),
    )?;
    let best = ledger.best_round.map(|i| ledger.rounds[i].round);
    ensure(best == Some(3), format!("best {best:?}"))?;
    Ok("stops after the 4th measurement, best round 3 (rule and full loop)".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let problems: Vec<Problem> = common::humaneval().into_iter().take(10).collect();
    let spec = common::scripted_mock("m", &problems, |i| i % 3 != 0);
    let spec_path = common::write_spec(dir.path(), "m", &spec);
    let mut reports = Vec::new();
    for run in 0..2 {
        let cfg = RunConfig {
            out_dir: dir.path().join(format!("run{run}")),
            ..RunConfig::default()
        };
        let args = EvalArgs {
            benchmark: Benchmark::HumanEval,
            endpoint: spec_path.clone(),
            preset: "greedy".into(),
            mode: TaskMode::Completion,
            style: None,
            limit: Some(10),
            data: None,
            out: None,
        };
        let r = cmd_evaluate(&cfg, &args).map_err(|e| format!("{e:#}"))?;
        ensure(
            (r.pass_at_1().unwrap() - 0.6).abs() < 1e-12,
            format!("pass@1 {:?}", r.pass_at_1()),
        )?;
        let out = cfg.out_dir.join("eval/m/humaneval-completion-greedy");
        reports.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("report.md")).unwrap(),
        ));
    }
    ensure(reports[0] == reports[1], "reports differ between runs")?;
    Ok(format!(
        "report.json ({} bytes) and report.md identical across runs",
        reports[0].0.len()
    ))
}

fn sandbox_independence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let limits = ResourceLimits {
        wall_timeout: Duration::from_secs(1),
        writable_dir: Some(dir.path().to_path_buf()),
        ..ResourceLimits::default()
    };
    let programs = [
        "assert sum([1, 2, 3]) == 6\n",
        "assert sorted([3, 1]) == [1, 3], 'order'\n",
        "while True:\n    pass\n",
        "raise ValueError('boom')\n",
        "import time\ntime.sleep(30)\n",
    ];
    let tasks: Vec<ExecutionTask> = (0..50)
        .map(|i| ExecutionTask {
            task_id: format!("t{i}"),
            program: format!(
                "# {i}\n{}",
                programs[i % programs.len()]
                    .replace("== 6", if i % 10 == 5 { "== 7" } else { "== 6" })
            ),
            interpreter: common::python(),
            limits: limits.clone(),
        })
        .collect();
    let serial: Vec<Verdict> = execute_batch(&tasks, 1)
        .into_iter()
        .map(|r| r.verdict)
        .collect();
    let parallel: Vec<Verdict> = execute_batch(&tasks, 8)
        .into_iter()
        .map(|r| r.verdict)
        .collect();
    ensure(
        serial == parallel,
        "verdicts differ between 1 and 8 workers",
    )?;
    let mut counts: HashMap<Verdict, usize> = HashMap::new();
    for v in &serial {
        *counts.entry(*v).or_default() += 1;
    }
    for v in [
        Verdict::Pass,
        Verdict::Fail,
        Verdict::Timeout,
        Verdict::RuntimeError,
    ] {
        ensure(
            counts.get(&v).copied().unwrap_or(0) > 0,
            format!("fixture has no {v:?}"),
        )?;
    }
    Ok(format!(
        "50 verdicts identical; pass {} fail {} timeout {} runtime_error {}",
        counts[&Verdict::Pass],
        counts[&Verdict::Fail],
        counts[&Verdict::Timeout],
        counts[&Verdict::RuntimeError]
    ))
}

fn aggregation_reconstruction() -> Outcome {
    let problems = common::humaneval();
    let results: Vec<ResultRecord> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| ResultRecord {
            task_id: p.task_id.clone(),
            sample_index: 0,
            verdict: if i < 98 { Verdict::Pass } else { Verdict::Fail },
            duration_secs: 0.0,
            extraction_rule: None,
            detail: String::new(),
        })
        .collect();
    let passing = results
        .iter()
        .filter(|r| r.verdict == Verdict::Pass)
        .count();
    ensure(passing == 98, format!("fixture has {passing} passing"))?;
    let agg = aggregate(&results, &problems, &[1, 10, 100]).map_err(|e| e.to_string())?;
    let pct = agg.pass_at_k[&1] * 100.0;
    ensure((pct - 59.8).abs() <= 0.05, format!("pass@1 {pct}"))?;
    let report = evolcode::metrics::Report {
        model: "fixture".into(),
        benchmark: Benchmark::HumanEval,
        mode: TaskMode::Completion,
        decoding: evolcode::backend::DecodingParams::greedy(),
        scores: agg,
        metadata: evolcode::metrics::ReportMetadata {
            seed: 0,
            backend_id: "fixture".into(),
            prompt_style: PromptStyle::Instruction,
            sandbox: ResourceLimits::default(),
            results_file: "results.jsonl".into(),
            interpreter: None,
        },
    };
    let md = render_markdown(&[report]).map_err(|e| e.to_string())?;
    ensure(md.contains("| fixture | 59.8 |"), format!("rendered {md}"))?;
    Ok(format!("98/164 -> pass@1 {pct:.3}%, rendered 59.8"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("pass@k oracle", passk_oracle),
        ("k=1 reduction", k1_reduction),
        ("loader fidelity", loader_fidelity),
        ("canonical-solution oracle", canonical_oracle),
        ("prompt golden files", prompt_goldens),
        ("round accounting", round_accounting),
        ("stopping rule", stopping_rule),
        ("end-to-end determinism", determinism),
        ("sandbox independence", sandbox_independence),
        ("aggregation reconstruction", aggregation_reconstruction),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
