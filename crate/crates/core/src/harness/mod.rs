//! Runs candidate programs against test units in a resource-limited child
//! process and turns the outcome into an error category plus the first
//! error's code fragment and message.

pub mod fixtures;
mod sandbox;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::text::{tokenize, TokenizedText};

pub use sandbox::{Harness, HarnessError};

/// Outcome categories of a test run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "OK")]
    Ok,
    AssertionError,
    AttributeError,
    SyntaxError,
    NameError,
    TypeError,
    IndentationError,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Ok,
        Category::AssertionError,
        Category::AttributeError,
        Category::SyntaxError,
        Category::NameError,
        Category::TypeError,
        Category::IndentationError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Ok => "OK",
            Category::AssertionError => "AssertionError",
            Category::AttributeError => "AttributeError",
            Category::SyntaxError => "SyntaxError",
            Category::NameError => "NameError",
            Category::TypeError => "TypeError",
            Category::IndentationError => "IndentationError",
        }
    }

    /// Maps an exception class name onto the closed category set.
    pub fn from_exception(name: &str) -> Category {
        let short = name.rsplit('.').next().unwrap_or(name);
        match short {
            "AssertionError" => Category::AssertionError,
            "AttributeError" => Category::AttributeError,
            "SyntaxError" => Category::SyntaxError,
            "NameError" | "UnboundLocalError" => Category::NameError,
            "TypeError" => Category::TypeError,
            "IndentationError" | "TabError" => Category::IndentationError,
            "ValueError" | "KeyError" | "IndexError" | "LookupError" | "ZeroDivisionError" | "OverflowError"
            | "ArithmeticError" | "FloatingPointError" | "UnicodeError" | "UnicodeDecodeError"
            | "UnicodeEncodeError" => Category::TypeError,
            _ => Category::AssertionError,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    GenericAssertions,
    ExternalSimulator,
}

/// What to run a candidate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestUnitSpec {
    pub kind: TestKind,
    /// Assertion program text, or a descriptor passed to the simulator.
    pub payload: String,
    /// Seconds of CPU time.
    pub time_limit: f64,
    /// Bytes of address space.
    pub memory_limit: u64,
}

impl Eq for TestUnitSpec {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub category: Category,
    pub raw_output: String,
    pub passed: bool,
}

impl TestResult {
    pub fn ok() -> TestResult {
        TestResult { category: Category::Ok, raw_output: String::new(), passed: true }
    }

    pub fn failed(category: Category, raw_output: String) -> TestResult {
        debug_assert!(category != Category::Ok);
        TestResult { category, raw_output, passed: false }
    }
}

/// Code fragment and message of the first reported error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInfo {
    pub failing_fragment: String,
    pub error_message: String,
    pub tokens: TokenizedText,
}

impl TestInfo {
    pub fn is_empty(&self) -> bool {
        self.failing_fragment.is_empty() && self.error_message.is_empty()
    }

    /// Fragment and message as one text.
    pub fn text(&self) -> String {
        match (self.failing_fragment.is_empty(), self.error_message.is_empty()) {
            (true, _) => self.error_message.clone(),
            (false, true) => self.failing_fragment.clone(),
            (false, false) => format!("{}\n{}", self.failing_fragment, self.error_message),
        }
    }
}

pub(crate) const TRACEBACK_HEADER: &str = "Traceback (most recent call last):";
pub(crate) const TIMEOUT_MARKER: &str = "Timeout: ";

/// Splits captured output into error blocks, each starting at a traceback header.
fn error_blocks(raw: &str) -> Vec<Vec<&str>> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    for line in raw.lines() {
        if line.starts_with(TRACEBACK_HEADER) {
            blocks.push(Vec::new());
        } else if let Some(b) = blocks.last_mut() {
            b.push(line);
        }
    }
    for b in &mut blocks {
        // A block ends at its first unindented line, the exception line.
        if let Some(end) = b.iter().position(|l| !l.starts_with(' ') && !l.is_empty()) {
            b.truncate(end + 1);
        }
    }
    blocks
}

fn exception_name(line: &str) -> Option<&str> {
    let head = line.split(':').next()?.trim();
    let ok = !head.is_empty()
        && head.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && head.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_');
    ok.then_some(head)
}

/// Category of the first error in captured output; `Ok` when there is none.
pub fn classify_error(raw_output: &str) -> Category {
    if let Some(block) = error_blocks(raw_output).first() {
        if let Some(name) = block.last().and_then(|l| exception_name(l)) {
            return Category::from_exception(name);
        }
        return Category::AssertionError;
    }
    if raw_output.lines().any(|l| l.starts_with(TIMEOUT_MARKER)) {
        return Category::AssertionError;
    }
    // Output of an external test unit: a bare `Name: message` line.
    for line in raw_output.lines().rev() {
        if let Some(name) = exception_name(line) {
            if name.ends_with("Error") || name.ends_with("Exception") {
                return Category::from_exception(name);
            }
        }
    }
    Category::Ok
}

fn is_caret_line(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && t.chars().all(|c| matches!(c, '^' | '~'))
}

/// The first error's code lines and message.
pub fn extract_test_info(raw_output: &str, code: &str) -> TestInfo {
    let blocks = error_blocks(raw_output);
    let Some(block) = blocks.first() else {
        let message = raw_output.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string();
        return finish(Vec::new(), message);
    };
    let code_lines: Vec<&str> = code.lines().collect();
    let mut fragment = Vec::new();
    let mut pending_solution_line: Option<usize> = None;
    let (message, frames) = match block.split_last() {
        Some((last, rest)) if !last.starts_with(' ') => (last.trim().to_string(), rest),
        _ => (String::new(), block.as_slice()),
    };
    for line in frames {
        let trimmed = line.trim_start();
        if trimmed.starts_with("File \"") {
            if let Some(n) = pending_solution_line.take().and_then(|n| code_lines.get(n.wrapping_sub(1))) {
                fragment.push(n.trim().to_string());
            }
            pending_solution_line = frame_line_in_solution(trimmed);
        } else if is_caret_line(line) || trimmed.is_empty() {
            continue;
        } else {
            match pending_solution_line.take().and_then(|n| code_lines.get(n.wrapping_sub(1))) {
                Some(src) => fragment.push(src.trim().to_string()),
                None => fragment.push(trimmed.trim_end().to_string()),
            }
        }
    }
    if let Some(src) = pending_solution_line.and_then(|n| code_lines.get(n.wrapping_sub(1))) {
        fragment.push(src.trim().to_string());
    }
    finish(fragment, message)
}

fn frame_line_in_solution(frame: &str) -> Option<usize> {
    if !frame.starts_with(&format!("File \"{}\"", sandbox::SOLUTION_FILE)) {
        return None;
    }
    let after = frame.split(", line ").nth(1)?;
    after.split(|c: char| !c.is_ascii_digit()).next()?.parse().ok()
}

fn finish(fragment: Vec<String>, error_message: String) -> TestInfo {
    let failing_fragment = fragment.join("\n");
    let mut info = TestInfo { failing_fragment, error_message, tokens: TokenizedText::default() };
    info.tokens = tokenize(&info.text());
    info
}

/// Test info for a result; empty when it passed.
pub fn test_info_for(result: &TestResult, code: &str) -> TestInfo {
    if result.passed {
        TestInfo::default()
    } else {
        extract_test_info(&result.raw_output, code)
    }
}

/// Per-sample results plus category percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub results: Vec<TestResult>,
    pub counts: BTreeMap<Category, usize>,
    pub percentages: BTreeMap<Category, f64>,
}

/// Runs every candidate against its spec with up to `parallelism` concurrent runs.
pub fn corpus_test_sweep(harness: &Harness, codes: &[String], specs: &[TestUnitSpec], parallelism: usize) -> Sweep {
    assert_eq!(codes.len(), specs.len(), "codes and specs must be aligned");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build().expect("thread pool");
    let results: Vec<TestResult> = pool.install(|| {
        codes.par_iter().zip(specs.par_iter()).map(|(c, s)| harness.run(c, s)).collect()
    });
    histogram(results)
}

pub fn histogram(results: Vec<TestResult>) -> Sweep {
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for r in &results {
        *counts.get_mut(&r.category).expect("closed set") += 1;
    }
    let total = results.len().max(1) as f64;
    let percentages = counts.iter().map(|(c, n)| (*c, 100.0 * *n as f64 / total)).collect();
    Sweep { results, counts, percentages }
}

/// Runs one candidate with a default harness.
pub fn run_tests(code: &str, spec: &TestUnitSpec) -> TestResult {
    Harness::default().run(code, spec)
}
