use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

use super::{classify_error, Category, TestKind, TestResult, TestUnitSpec, TIMEOUT_MARKER};

pub(crate) const SOLUTION_FILE: &str = "solution.py";
pub(crate) const TEST_FILE: &str = "test_unit.py";

const FILE_SIZE_LIMIT: u64 = 16 << 20;
const OPEN_FILE_LIMIT: u64 = 64;

/// Loads the candidate, runs every `test_*` function of the test unit in the
/// same namespace, and prints one traceback per failure restricted to frames
/// from the two user files.
const DRIVER: &str = r#"
import sys, traceback
SOL = 'solution.py'
TST = 'test_unit.py'

def report(e):
    frames = [f for f in traceback.extract_tb(e.__traceback__) if f.filename in (SOL, TST)]
    out = ['Traceback (most recent call last):\n']
    out += traceback.format_list(frames)
    out += traceback.format_exception_only(type(e), e)
    sys.stderr.write(''.join(out))
    sys.stderr.flush()

def load(path):
    with open(path, encoding='utf-8') as f:
        return compile(f.read(), path, 'exec')

def main():
    ns = {'__name__': 'solution'}
    try:
        exec(load(SOL), ns)
    except BaseException as e:
        report(e)
        return 1
    try:
        tests = load(TST)
    except FileNotFoundError:
        return 0
    except BaseException as e:
        report(e)
        return 1
    try:
        exec(tests, ns)
    except BaseException as e:
        report(e)
        return 1
    failed = 0
    for name, fn in list(ns.items()):
        code = getattr(fn, '__code__', None)
        if name.startswith('test_') and code is not None and code.co_filename == TST:
            try:
                fn()
            except BaseException as e:
                report(e)
                failed += 1
    return 1 if failed else 0

sys.exit(main())
"#;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot prepare sandbox directory: {0}")]
    Setup(#[source] std::io::Error),
    #[error("cannot start `{program}`: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("no simulator command is configured for external test units")]
    NoSimulator,
}

/// Executes candidates in a child process with CPU, memory, file-size and
/// open-file limits, a scratch working directory and an empty environment.
#[derive(Debug, Clone)]
pub struct Harness {
    pub python: String,
    /// Command and leading arguments for external test units; the code file
    /// path and the spec payload are appended.
    pub simulator: Option<Vec<String>>,
    /// Bytes of output kept per stream.
    pub max_output: usize,
    /// Move the child into a fresh network namespace when permitted.
    pub isolate_network: bool,
}

impl Default for Harness {
    fn default() -> Self {
        Harness { python: "python3".to_string(), simulator: None, max_output: 64 << 10, isolate_network: true }
    }
}

struct Outcome {
    status: Option<std::process::ExitStatus>,
    stderr: String,
    stdout: String,
    timed_out: bool,
}

impl Harness {
    /// Runs `code` against `spec`. Misbehaving candidates become failing
    /// results; harness faults become failing results with the fault text.
    pub fn run(&self, code: &str, spec: &TestUnitSpec) -> TestResult {
        match self.try_run(code, spec) {
            Ok(r) => r,
            Err(e) => TestResult::failed(Category::AssertionError, format!("harness error: {e}\n")),
        }
    }

    pub fn try_run(&self, code: &str, spec: &TestUnitSpec) -> Result<TestResult, HarnessError> {
        let dir = tempfile::tempdir().map_err(HarnessError::Setup)?;
        std::fs::write(dir.path().join(SOLUTION_FILE), code).map_err(HarnessError::Setup)?;
        let mut cmd = match spec.kind {
            TestKind::GenericAssertions => {
                std::fs::write(dir.path().join(TEST_FILE), &spec.payload).map_err(HarnessError::Setup)?;
                let mut c = Command::new(&self.python);
                c.args(["-I", "-S", "-B", "-c", DRIVER]);
                c
            }
            TestKind::ExternalSimulator => {
                let sim = self.simulator.as_ref().filter(|s| !s.is_empty()).ok_or(HarnessError::NoSimulator)?;
                let mut c = Command::new(&sim[0]);
                c.args(&sim[1..]).arg(dir.path().join(SOLUTION_FILE)).arg(&spec.payload);
                c
            }
        };
        let program = format!("{:?}", cmd.get_program());
        let out = self.execute(&mut cmd, dir.path(), spec).map_err(|source| HarnessError::Spawn { program, source })?;
        Ok(self.judge(out, spec))
    }

    fn execute(&self, cmd: &mut Command, dir: &Path, spec: &TestUnitSpec) -> std::io::Result<Outcome> {
        let cpu = spec.time_limit.max(0.001).ceil() as u64;
        let mem = spec.memory_limit;
        let isolate = self.isolate_network;
        cmd.current_dir(dir)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("HOME", dir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: only async-signal-safe libc calls run between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                libc::setsid();
                set_limit(libc::RLIMIT_CPU, cpu, cpu + 1);
                if mem > 0 {
                    set_limit(libc::RLIMIT_AS, mem, mem);
                }
                set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_LIMIT, FILE_SIZE_LIMIT);
                set_limit(libc::RLIMIT_CORE, 0, 0);
                set_limit(libc::RLIMIT_NOFILE, OPEN_FILE_LIMIT, OPEN_FILE_LIMIT);
                if isolate {
                    // Fails without privileges; the other limits still apply.
                    libc::unshare(libc::CLONE_NEWNET);
                }
                Ok(())
            });
        }
        let mut child = cmd.spawn()?;
        let out_reader = reader(child.stdout.take(), self.max_output);
        let err_reader = reader(child.stderr.take(), self.max_output);
        let wall = Duration::from_secs_f64(spec.time_limit.max(0.001) * 2.0 + 2.0);
        let (status, timed_out) = match child.wait_timeout(wall)? {
            Some(s) => (Some(s), false),
            None => {
                kill_group(&mut child);
                (child.wait().ok(), true)
            }
        };
        kill_group(&mut child);
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        Ok(Outcome { status, stderr, stdout, timed_out })
    }

    fn judge(&self, out: Outcome, spec: &TestUnitSpec) -> TestResult {
        let mut raw = out.stderr;
        let signal = out.status.and_then(|s| s.signal());
        let cpu_killed = matches!(signal, Some(libc::SIGXCPU) | Some(libc::SIGKILL));
        if out.timed_out || cpu_killed {
            raw.push_str(&format!("{TIMEOUT_MARKER}execution exceeded {} s\n", spec.time_limit));
        }
        let success = out.status.is_some_and(|s| s.success()) && !out.timed_out;
        if success {
            return TestResult::ok();
        }
        let category = classify_error(&raw);
        if category == Category::Ok {
            match out.status {
                Some(s) => raw.push_str(&format!("Exit: {s}\n")),
                None => raw.push_str("Exit: unknown\n"),
            }
            if !out.stdout.is_empty() && spec.kind == TestKind::ExternalSimulator {
                raw.push_str(&out.stdout);
            }
            return TestResult::failed(Category::AssertionError, raw);
        }
        TestResult::failed(category, raw)
    }
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) {
    let lim = libc::rlimit { rlim_cur: soft as libc::rlim_t, rlim_max: hard as libc::rlim_t };
    // SAFETY: plain syscall with a valid pointer.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signals the process group created by setsid in the child.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

fn reader<R: Read + Send + 'static>(stream: Option<R>, cap: usize) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let Some(mut s) = stream else { return String::new() };
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match s.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}
