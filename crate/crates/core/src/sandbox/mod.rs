//! Subprocess execution of candidate programs.
//!
//! Each task runs in its own process group with an address-space cap, a wall-clock deadline, a
//! cleared environment and a private working directory. A small Python runner installs an audit
//! hook that refuses writes outside that directory, process spawning and (optionally) network
//! access. This is process-level isolation for benchmark code; it is NOT a security boundary
//! for adversarial programs.

mod assemble;

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

pub use assemble::{assemble_program, assemble_test_program, splice_insertion};

const GUARD: &str = include_str!("guard.py");

/// Upper bound on the stderr excerpt kept in results.
pub const DETAIL_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("candidate for {0} has no extractable code")]
    Unextractable(String),
    #[error("empty program for {0}")]
    EmptyProgram(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_timeout: Duration,
    pub memory_cap: u64,
    pub no_network: bool,
    /// Parent directory for per-task working directories (system temp dir when unset).
    pub writable_dir: Option<PathBuf>,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            wall_timeout: Duration::from_secs(10),
            memory_cap: 512 * 1024 * 1024,
            no_network: true,
            writable_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTask {
    pub task_id: String,
    pub program: String,
    pub interpreter: PathBuf,
    pub limits: ResourceLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Timeout,
    RuntimeError,
    SetupError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub task_id: String,
    pub verdict: Verdict,
    pub detail: String,
    pub duration: Duration,
}

impl ExecutionResult {
    pub fn setup_error(task_id: &str, detail: impl Into<String>) -> Self {
        Self {
            task_id: task_id.to_string(),
            verdict: Verdict::SetupError,
            detail: truncate_tail(&detail.into(), DETAIL_LIMIT),
            duration: Duration::ZERO,
        }
    }
}

/// Keeps the last `limit` bytes, cut at a char boundary.
fn truncate_tail(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        return s.to_string();
    }
    let mut start = s.len() - limit;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

/// Reads a pipe to the end, keeping only the last `limit` bytes.
fn drain_tail(mut pipe: impl Read, limit: usize) -> Vec<u8> {
    let mut kept: Vec<u8> = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match pipe.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                kept.extend_from_slice(&buf[..n]);
                if kept.len() > 2 * limit {
                    kept.drain(..kept.len() - limit);
                }
            }
        }
    }
    if kept.len() > limit {
        kept.drain(..kept.len() - limit);
    }
    kept
}

fn nonce() -> String {
    format!(
        "__sandbox_done_{:016x}{:016x}",
        rand::random::<u64>(),
        rand::random::<u64>()
    )
}

/// `interpreter --version`, for startup logging.
pub fn interpreter_version(interpreter: &Path) -> Option<String> {
    let out = Command::new(interpreter).arg("--version").output().ok()?;
    let text = if out.stdout.is_empty() {
        out.stderr
    } else {
        out.stdout
    };
    Some(String::from_utf8_lossy(&text).trim().to_string())
}

fn set_limits(memory_cap: u64, file_cap: u64) -> std::io::Result<()> {
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        if libc::setsid() == -1 {
            return Err(std::io::Error::last_os_error());
        }
        let set = |resource, value: u64| {
            let lim = libc::rlimit {
                rlim_cur: value as libc::rlim_t,
                rlim_max: value as libc::rlim_t,
            };
            libc::setrlimit(resource, &lim)
        };
        if set(libc::RLIMIT_AS, memory_cap) != 0
            || set(libc::RLIMIT_CORE, 0) != 0
            || set(libc::RLIMIT_FSIZE, file_cap) != 0
        {
            return Err(std::io::Error::last_os_error());
        }
    }
    Ok(())
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; the child leads its own process group after setsid.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

/// Runs one task and classifies the outcome.
pub fn execute(task: &ExecutionTask) -> ExecutionResult {
    if task.program.trim().is_empty() {
        return ExecutionResult::setup_error(&task.task_id, "empty program");
    }
    let workdir = {
        let mut b = tempfile::Builder::new();
        b.prefix("task-");
        match &task.limits.writable_dir {
            Some(root) => std::fs::create_dir_all(root).and_then(|_| b.tempdir_in(root)),
            None => b.tempdir(),
        }
    };
    let workdir = match workdir {
        Ok(d) => d,
        Err(e) => return ExecutionResult::setup_error(&task.task_id, format!("work dir: {e}")),
    };
    let prog_path = workdir.path().join("program.py");
    let guard_path = workdir.path().join("_runner.py");
    if let Err(e) =
        std::fs::write(&prog_path, &task.program).and_then(|_| std::fs::write(&guard_path, GUARD))
    {
        return ExecutionResult::setup_error(&task.task_id, format!("writing program: {e}"));
    }

    let token = nonce();
    let memory_cap = task.limits.memory_cap;
    let mut cmd = Command::new(&task.interpreter);
    cmd.arg("-I")
        .arg("-B")
        .arg(&guard_path)
        .arg(&prog_path)
        .arg(workdir.path())
        .arg(if task.limits.no_network { "1" } else { "0" })
        .current_dir(workdir.path())
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("HOME", workdir.path())
        .env("TMPDIR", workdir.path())
        .env("PYTHONHASHSEED", "0")
        .env("OMP_NUM_THREADS", "1")
        .env("MPLBACKEND", "Agg")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: the closure only calls async-signal-safe functions.
    unsafe {
        cmd.pre_exec(move || set_limits(memory_cap, 64 * 1024 * 1024));
    }

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            return ExecutionResult::setup_error(
                &task.task_id,
                format!(
                    "cannot start interpreter {}: {e}",
                    task.interpreter.display()
                ),
            )
        }
    };
    if let Some(mut stdin) = child.stdin.take() {
        let _ = stdin.write_all(format!("{token}\n").as_bytes());
    }
    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || drain_tail(stdout, 1024));
    let err_reader = std::thread::spawn(move || drain_tail(stderr, DETAIL_LIMIT));

    let status = match child.wait_timeout(task.limits.wall_timeout) {
        Ok(Some(status)) => Some(status),
        Ok(None) => None,
        Err(e) => {
            kill_group(child.id());
            let _ = child.wait();
            return ExecutionResult::setup_error(&task.task_id, format!("waiting: {e}"));
        }
    };
    // Reap stragglers either way; the pipes close once the whole group is gone.
    kill_group(child.id());
    let status = match status {
        Some(s) => Some(s),
        None => {
            let _ = child.wait();
            None
        }
    };
    let duration = started.elapsed();
    let out = out_reader.join().unwrap_or_default();
    let err = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();

    let Some(status) = status else {
        return ExecutionResult {
            task_id: task.task_id.clone(),
            verdict: Verdict::Timeout,
            detail: format!(
                "timed out after {:.1}s",
                task.limits.wall_timeout.as_secs_f64()
            ),
            duration,
        };
    };
    let finished = String::from_utf8_lossy(&out).contains(&token);
    let verdict = if status.success() && finished {
        Verdict::Pass
    } else if status.success() || err.contains("AssertionError") {
        Verdict::Fail
    } else {
        Verdict::RuntimeError
    };
    let detail = if status.success() && !finished {
        "program exited before the tests completed".to_string()
    } else if verdict == Verdict::RuntimeError && err.trim().is_empty() {
        format!("terminated: {status}")
    } else {
        truncate_tail(&err, DETAIL_LIMIT)
    };
    ExecutionResult {
        task_id: task.task_id.clone(),
        verdict,
        detail,
        duration,
    }
}

/// Runs tasks over a bounded worker pool; result `i` belongs to task `i`.
pub fn execute_batch(tasks: &[ExecutionTask], workers: usize) -> Vec<ExecutionResult> {
    let workers = workers.max(1).min(tasks.len().max(1));
    let slots: Vec<OnceLock<ExecutionResult>> = (0..tasks.len()).map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                let _ = slots[i].set(execute(&tasks[i]));
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("every task executed"))
        .collect()
}
