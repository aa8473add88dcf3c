//! Production-rule grammars and the codec between source text, abstract
//! syntax trees and pre-order rule sequences.
//!
//! A grammar is a list of rules `Head -> kind, kind*, ...`. Every kind that
//! appears as a child is either the head of some rule (a non-terminal) or a
//! declared terminal kind. Children marked `*` form a variable-length list
//! that is closed by an implicit end-of-list pseudo-rule, one per list kind.

mod ast;
pub mod python;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{
    ast_to_rules, frontier, rules_to_ast, tree_path, Action, AstNode, CodecError, FrontierRef,
    Hole, PartialTree, Replay, RuleSequence, TreePath,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cardinality {
    One,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChildSpec {
    pub kind: String,
    pub cardinality: Cardinality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: usize,
    pub head: String,
    pub children: Vec<ChildSpec>,
    /// Closes an open list of `head` children.
    pub end_of_list: bool,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.end_of_list {
            return write!(f, "{} -> <end>", self.head);
        }
        write!(f, "{} ->", self.head)?;
        for (i, c) in self.children.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            let star = if c.cardinality == Cardinality::List { "*" } else { "" };
            write!(f, "{sep}{}{star}", c.kind)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate rule {what}")]
    DuplicateRule { line: usize, what: String },
    #[error("line {line}: unknown kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("grammar defines no rules")]
    Empty,
    #[error("rule `{rule}`: list child `{kind}` is ambiguous with the following child")]
    AmbiguousList { rule: String, kind: String },
    #[error("rule `{rule}`: terminal kind `{kind}` cannot have list cardinality")]
    TerminalList { rule: String, kind: String },
    #[error("terminal kind `{0}` cannot head a rule")]
    TerminalHead(String),
}

/// An immutable, validated rule set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    rules: Vec<Rule>,
    root: String,
    node_kinds: BTreeSet<String>,
    terminal_kinds: BTreeSet<String>,
    by_head: HashMap<String, Vec<usize>>,
    end_of_list: HashMap<String, usize>,
    kinds: Vec<String>,
    kind_ids: HashMap<String, usize>,
}

struct RawRule {
    line: usize,
    id: Option<usize>,
    head: String,
    children: Vec<ChildSpec>,
}

/// Parses the plain-text grammar format.
///
/// ```text
/// # comment
/// %root root
/// %terminal id n
/// root -> Module
/// R1: Module -> body*
/// ```
pub fn load_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut root = None;
    let mut terminals = BTreeSet::new();
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('%') {
            let mut parts = rest.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
            match parts.next() {
                Some("root") => {
                    let kind = parts.next().ok_or_else(|| GrammarError::Syntax {
                        line: line_no,
                        message: "%root needs a kind".into(),
                    })?;
                    root = Some(kind.to_string());
                }
                Some("terminal") => terminals.extend(parts.map(str::to_string)),
                other => {
                    return Err(GrammarError::Syntax {
                        line: line_no,
                        message: format!("unknown directive {:?}", other.unwrap_or("")),
                    })
                }
            }
            continue;
        }
        raw.push(parse_rule_line(line, line_no)?);
    }
    build(raw, root, terminals)
}

fn parse_rule_line(line: &str, line_no: usize) -> Result<RawRule, GrammarError> {
    let syntax = |message: &str| GrammarError::Syntax { line: line_no, message: message.to_string() };
    let (lhs, rhs) = line.split_once("->").ok_or_else(|| syntax("expected `Head -> children`"))?;
    let lhs = lhs.trim();
    let (id, head) = match lhs.split_once(':') {
        Some((id, head)) => {
            let id = id.trim();
            let digits = id.strip_prefix('R').unwrap_or(id);
            let id = digits.parse::<usize>().map_err(|_| syntax("bad rule id"))?;
            (Some(id), head.trim())
        }
        None => (None, lhs),
    };
    if head.is_empty() || !is_kind_name(head) {
        return Err(syntax("bad head kind"));
    }
    let mut children = Vec::new();
    for tok in rhs.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
        let (kind, cardinality) = match tok.strip_suffix('*') {
            Some(k) => (k, Cardinality::List),
            None => (tok, Cardinality::One),
        };
        if !is_kind_name(kind) {
            return Err(syntax(&format!("bad child kind {tok:?}")));
        }
        children.push(ChildSpec { kind: kind.to_string(), cardinality });
    }
    Ok(RawRule { line: line_no, id, head: head.to_string(), children })
}

fn is_kind_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

fn build(
    raw: Vec<RawRule>,
    root: Option<String>,
    terminal_kinds: BTreeSet<String>,
) -> Result<Grammar, GrammarError> {
    if raw.is_empty() {
        return Err(GrammarError::Empty);
    }
    // Explicit ids must be unique and, together with implicit ones, dense.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let any_explicit = raw.iter().any(|r| r.id.is_some());
    if any_explicit {
        let mut seen = HashMap::new();
        for r in &raw {
            let id = r.id.ok_or_else(|| GrammarError::Syntax {
                line: r.line,
                message: "either every rule carries an id or none does".into(),
            })?;
            if seen.insert(id, r.line).is_some() {
                return Err(GrammarError::DuplicateRule { line: r.line, what: format!("id {id}") });
            }
        }
        order.sort_by_key(|&i| raw[i].id);
        for (expected, &i) in order.iter().enumerate() {
            if raw[i].id != Some(expected) {
                return Err(GrammarError::Syntax {
                    line: raw[i].line,
                    message: format!("rule ids must be dense; expected {expected}"),
                });
            }
        }
    }

    let node_kinds: BTreeSet<String> = raw.iter().map(|r| r.head.clone()).collect();
    if let Some(t) = node_kinds.iter().find(|k| terminal_kinds.contains(*k)) {
        return Err(GrammarError::TerminalHead(t.clone()));
    }
    let mut signatures = HashMap::new();
    for r in &raw {
        for c in &r.children {
            if !node_kinds.contains(&c.kind) && !terminal_kinds.contains(&c.kind) {
                return Err(GrammarError::UnknownKind { line: r.line, kind: c.kind.clone() });
            }
        }
        if signatures.insert((r.head.clone(), r.children.clone()), r.line).is_some() {
            return Err(GrammarError::DuplicateRule {
                line: r.line,
                what: format!("`{} -> ...`", r.head),
            });
        }
    }
    let root = root.unwrap_or_else(|| raw[order[0]].head.clone());
    if !node_kinds.contains(&root) {
        return Err(GrammarError::UnknownKind { line: 0, kind: root });
    }

    let mut rules: Vec<Rule> = order
        .iter()
        .enumerate()
        .map(|(id, &i)| Rule {
            id,
            head: raw[i].head.clone(),
            children: raw[i].children.clone(),
            end_of_list: false,
        })
        .collect();
    for rule in &rules {
        for (i, c) in rule.children.iter().enumerate() {
            if c.cardinality != Cardinality::List {
                continue;
            }
            if terminal_kinds.contains(&c.kind) {
                return Err(GrammarError::TerminalList { rule: rule.to_string(), kind: c.kind.clone() });
            }
            if rule.children.get(i + 1).is_some_and(|n| n.kind == c.kind) {
                return Err(GrammarError::AmbiguousList { rule: rule.to_string(), kind: c.kind.clone() });
            }
        }
    }

    let mut end_of_list = HashMap::new();
    let list_kinds: Vec<String> = rules
        .iter()
        .flat_map(|r| r.children.iter())
        .filter(|c| c.cardinality == Cardinality::List)
        .map(|c| c.kind.clone())
        .collect();
    for kind in list_kinds {
        if end_of_list.contains_key(&kind) {
            continue;
        }
        let id = rules.len();
        end_of_list.insert(kind.clone(), id);
        rules.push(Rule { id, head: kind, children: Vec::new(), end_of_list: true });
    }

    let mut by_head: HashMap<String, Vec<usize>> = HashMap::new();
    for r in rules.iter().filter(|r| !r.end_of_list) {
        by_head.entry(r.head.clone()).or_default().push(r.id);
    }
    let kinds: Vec<String> = node_kinds.iter().chain(terminal_kinds.iter()).cloned().collect();
    let kind_ids = kinds.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();

    Ok(Grammar { rules, root, node_kinds, terminal_kinds, by_head, end_of_list, kinds, kind_ids })
}

impl Grammar {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> Option<&Rule> {
        self.rules.get(id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node_kinds(&self) -> &BTreeSet<String> {
        &self.node_kinds
    }

    pub fn terminal_kinds(&self) -> &BTreeSet<String> {
        &self.terminal_kinds
    }

    pub fn is_terminal(&self, kind: &str) -> bool {
        self.terminal_kinds.contains(kind)
    }

    /// All node and terminal kinds, in a stable order used for embeddings.
    pub fn kinds(&self) -> &[String] {
        &self.kinds
    }

    pub fn kind_id(&self, kind: &str) -> Option<usize> {
        self.kind_ids.get(kind).copied()
    }

    /// Ordinary (non end-of-list) rules expanding `head`.
    pub fn rules_for(&self, head: &str) -> &[usize] {
        self.by_head.get(head).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn end_of_list_rule(&self, kind: &str) -> Option<usize> {
        self.end_of_list.get(kind).copied()
    }

    /// Rule ids that may be applied at a hole of the given kind.
    pub fn legal_rules(&self, kind: &str, hole: Hole) -> Vec<usize> {
        match hole {
            Hole::Terminal => Vec::new(),
            Hole::Node => self.rules_for(kind).to_vec(),
            Hole::ListSlot => {
                let mut v = self.rules_for(kind).to_vec();
                v.extend(self.end_of_list_rule(kind));
                v
            }
        }
    }

    /// Finds the unique rule for `head` whose children match `children`.
    pub fn find_rule(&self, head: &str, children: &[ChildSpec]) -> Option<usize> {
        self.rules_for(head).iter().copied().find(|&id| self.rules[id].children == children)
    }

    /// Serializes back to the text format; end-of-list rules stay implicit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "%root {}", self.root);
        if !self.terminal_kinds.is_empty() {
            let terms: Vec<&str> = self.terminal_kinds.iter().map(String::as_str).collect();
            let _ = writeln!(out, "%terminal {}", terms.join(" "));
        }
        for rule in self.rules.iter().filter(|r| !r.end_of_list) {
            let _ = writeln!(out, "R{}: {}", rule.id, rule);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "
        %terminal id n
        root -> Module
        Module -> body*
        body -> Assign
        Assign -> targets*, value
        targets -> Name
        value -> List
        value -> Num
        Name -> id
        List -> elts*
        elts -> Num
        Num -> n
    ";

    #[test]
    fn minimal_grammar_has_one_rule() {
        let g = load_grammar("S -> x\n%terminal x").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.root(), "S");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = load_grammar("%terminal x\nR0: S -> x\nR0: S -> x x").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateRule { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_signatures_are_rejected() {
        let err = load_grammar("%terminal x\nS -> x\nS -> x").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateRule { .. }));
    }

    #[test]
    fn unknown_child_kind_is_rejected() {
        let err = load_grammar("S -> T").unwrap_err();
        assert_eq!(err, GrammarError::UnknownKind { line: 1, kind: "T".into() });
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert_eq!(load_grammar("# nothing\n").unwrap_err(), GrammarError::Empty);
    }

    #[test]
    fn end_of_list_rules_are_dense_and_implicit() {
        let g = load_grammar(FIG1).unwrap();
        let explicit = g.rules().iter().filter(|r| !r.end_of_list).count();
        assert_eq!(explicit, 11);
        // body, targets, elts
        assert_eq!(g.len(), 14);
        for (i, r) in g.rules().iter().enumerate() {
            assert_eq!(r.id, i);
        }
        let eol = g.end_of_list_rule("elts").unwrap();
        assert!(g.rules()[eol].end_of_list);
        assert!(g.legal_rules("elts", Hole::ListSlot).contains(&eol));
        assert!(!g.legal_rules("elts", Hole::Node).contains(&eol));
    }

    #[test]
    fn text_form_round_trips() {
        let g = load_grammar(FIG1).unwrap();
        let again = load_grammar(&g.to_text()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn ambiguous_lists_are_rejected() {
        let err = load_grammar("%terminal x\nS -> A*, A\nA -> x").unwrap_err();
        assert!(matches!(err, GrammarError::AmbiguousList { .. }));
    }
}
