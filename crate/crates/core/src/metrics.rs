//! Test-Acc, BLEU, ROUGE-L, exact match and exact match up to renaming of
//! local variables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grammar::python::{parse_to_ast, python_grammar};
use crate::grammar::AstNode;
use crate::harness::TestResult;
use crate::text::split_tokens;

const MAX_ORDER: usize = 4;

/// Default recall weight of the ROUGE-L F-measure.
pub const ROUGE_BETA: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Number of samples.
    pub m: usize,
    /// Samples passing their test unit.
    pub n_pass: usize,
    pub test_acc: f64,
    pub bleu: f64,
    pub rouge_l: f64,
    pub str_acc: f64,
    pub acc_plus_auto: f64,
}

impl MetricReport {
    /// Test-Acc as the exact pair `(n_pass, m)`.
    pub fn test_acc_ratio(&self) -> (usize, usize) {
        (self.n_pass, self.m)
    }
}

/// Fraction of passing results as `(passed, total)`.
pub fn test_acc(results: &[TestResult]) -> (usize, usize) {
    (results.iter().filter(|r| r.passed).count(), results.len())
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_default() += 1;
        }
    }
    out
}

/// Corpus BLEU over code tokens, 4-gram, uniform weights, brevity penalty,
/// no smoothing. Orders for which the candidates contain no n-grams at all
/// are left out of the geometric mean. Returns a value in [0, 100].
pub fn corpus_bleu(candidates: &[String], references: &[String]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "aligned lists");
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let c = split_tokens(c);
        let r = split_tokens(r);
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let rc = ngrams(&r, n);
            for (g, k) in ngrams(&c, n) {
                matched[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    if cand_len == 0 {
        return if ref_len == 0 { 100.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return 0.0;
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
        orders += 1;
    }
    let bp = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    100.0 * bp * (log_sum / orders as f64).exp()
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    corpus_bleu(&[candidate.to_string()], &[reference.to_string()])
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure in [0, 100] with recall weight `beta`.
pub fn rouge_l_beta(candidate: &str, reference: &str, beta: f64) -> f64 {
    let c = split_tokens(candidate);
    let r = split_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return if c.is_empty() && r.is_empty() { 100.0 } else { 0.0 };
    }
    let l = lcs(&c, &r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / c.len() as f64;
    let rec = l / r.len() as f64;
    let b2 = beta * beta;
    100.0 * (1.0 + b2) * p * rec / (rec + b2 * p)
}

pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_beta(candidate, reference, ROUGE_BETA)
}

/// Mean ROUGE-L over aligned pairs.
pub fn corpus_rouge_l(candidates: &[String], references: &[String]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "aligned lists");
    if candidates.is_empty() {
        return 0.0;
    }
    candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r)).sum::<f64>() / candidates.len() as f64
}

/// Equality of token sequences, which ignores all whitespace.
pub fn same_string(candidate: &str, reference: &str) -> bool {
    split_tokens(candidate) == split_tokens(reference)
}

pub fn str_acc(candidates: &[String], references: &[String]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "aligned lists");
    if candidates.is_empty() {
        return 0.0;
    }
    let hits = candidates.iter().zip(references).filter(|(c, r)| same_string(c, r)).count();
    hits as f64 / candidates.len() as f64
}

/// Renames names bound inside each top-level function or lambda to
/// `v0, v1, ...` in order of first appearance.
pub fn canonicalize(ast: &AstNode) -> AstNode {
    let mut out = ast.clone();
    rename_scopes(&mut out);
    out
}

fn rename_scopes(node: &mut AstNode) {
    if node.kind == "FunctionDef" || node.kind == "Lambda" {
        let mut bound = Vec::new();
        collect_bound(node, &mut bound, false);
        let mut order: Vec<String> = Vec::new();
        first_uses(node, &bound, &mut order);
        let map: HashMap<String, String> =
            order.into_iter().enumerate().map(|(i, n)| (n, format!("v{i}"))).collect();
        apply_renames(node, &map);
        return;
    }
    for c in &mut node.children {
        rename_scopes(c);
    }
}

fn is_param(kind: &str) -> bool {
    matches!(kind, "Param" | "ParamDefault" | "VarArgs" | "KwArgs")
}

/// Names bound by parameters, assignment targets, loop and comprehension
/// targets, `with ... as` and `except ... as`.
fn collect_bound(node: &AstNode, out: &mut Vec<String>, store: bool) {
    if is_field(node) {
        for c in &node.children {
            collect_bound(c, out, store);
        }
        return;
    }
    if is_param(&node.kind) || node.kind == "HandlerAs" {
        for c in &node.children {
            if let (true, Some(t)) = (c.kind == "arg" || c.kind == "name", c.token.as_deref()) {
                push_unique(out, t);
            }
        }
    }
    if node.kind == "Name" && store {
        if let Some(t) = node.children.first().and_then(|c| c.token.as_deref()) {
            push_unique(out, t);
        }
    }
    for c in &node.children {
        let child_store = match c.kind.as_str() {
            "targets" | "target" | "optional_vars" => node.kind != "Delete",
            "elts" | "value" => store && matches!(node.kind.as_str(), "Tuple" | "List" | "Starred"),
            _ => false,
        };
        collect_bound(c, out, child_store);
    }
}

/// Field nodes select a constructor and have lowercase kinds.
fn is_field(node: &AstNode) -> bool {
    node.rule.is_some() && node.kind.starts_with(|c: char| c.is_lowercase())
}

fn push_unique(out: &mut Vec<String>, name: &str) {
    if !out.iter().any(|n| n == name) {
        out.push(name.to_string());
    }
}

fn renameable(parent: &str, child: &AstNode) -> bool {
    match child.kind.as_str() {
        "id" => parent == "Name",
        "arg" => is_param(parent),
        "name" => parent == "HandlerAs",
        _ => false,
    }
}

fn first_uses(node: &AstNode, bound: &[String], order: &mut Vec<String>) {
    for c in &node.children {
        if let Some(t) = &c.token {
            if renameable(&node.kind, c) && bound.contains(t) {
                push_unique(order, t);
            }
        }
        first_uses(c, bound, order);
    }
}

fn apply_renames(node: &mut AstNode, map: &HashMap<String, String>) {
    let parent = node.kind.clone();
    for c in &mut node.children {
        if c.token.is_some() && renameable(&parent, c) {
            if let Some(new) = c.token.as_ref().and_then(|t| map.get(t)) {
                c.token = Some(new.clone());
            }
        }
        apply_renames(c, map);
    }
}

/// Match up to consistent renaming of local variables.
pub fn same_up_to_renaming(candidate: &str, reference: &str) -> bool {
    if same_string(candidate, reference) {
        return true;
    }
    let g = python_grammar();
    match (parse_to_ast(candidate, g), parse_to_ast(reference, g)) {
        (Ok(c), Ok(r)) => canonicalize(&c) == canonicalize(&r),
        _ => false,
    }
}

pub fn acc_plus_auto(candidates: &[String], references: &[String]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "aligned lists");
    if candidates.is_empty() {
        return 0.0;
    }
    let hits = candidates.iter().zip(references).filter(|(c, r)| same_up_to_renaming(c, r)).count();
    hits as f64 / candidates.len() as f64
}

/// All metrics for aligned candidates, references and test results.
pub fn evaluate(candidates: &[String], references: &[String], results: &[TestResult]) -> MetricReport {
    assert_eq!(candidates.len(), results.len(), "aligned lists");
    let (n_pass, m) = test_acc(results);
    MetricReport {
        m,
        n_pass,
        test_acc: if m == 0 { 0.0 } else { n_pass as f64 / m as f64 },
        bleu: corpus_bleu(candidates, references),
        rouge_l: corpus_rouge_l(candidates, references),
        str_acc: str_acc(candidates, references),
        acc_plus_auto: acc_plus_auto(candidates, references),
    }
}
