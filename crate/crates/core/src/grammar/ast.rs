use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Cardinality, Grammar};

/// Marks an unexpanded position in a partial tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hole {
    /// A non-terminal awaiting its rule.
    Node,
    /// The open end of a list; accepts another element or the end-of-list rule.
    ListSlot,
    /// A terminal awaiting its token.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: String,
    pub rule: Option<usize>,
    pub token: Option<String>,
    pub children: Vec<AstNode>,
    pub hole: Option<Hole>,
}

impl AstNode {
    pub fn terminal(kind: impl Into<String>, token: impl Into<String>) -> Self {
        AstNode { kind: kind.into(), rule: None, token: Some(token.into()), children: Vec::new(), hole: None }
    }

    pub fn expanded(kind: impl Into<String>, rule: usize, children: Vec<AstNode>) -> Self {
        AstNode { kind: kind.into(), rule: Some(rule), token: None, children, hole: None }
    }

    pub fn hole(kind: impl Into<String>, hole: Hole) -> Self {
        AstNode { kind: kind.into(), rule: None, token: None, children: Vec::new(), hole: Some(hole) }
    }

    pub fn is_complete(&self) -> bool {
        self.hole.is_none() && self.children.iter().all(AstNode::is_complete)
    }

    /// Number of nodes in the subtree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(AstNode::size).sum::<usize>()
    }

    pub fn get(&self, at: &FrontierRef) -> Option<&AstNode> {
        let mut node = self;
        for &i in &at.0 {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    fn get_mut(&mut self, at: &[usize]) -> Option<&mut AstNode> {
        let mut node = self;
        for &i in at {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    fn first_hole(&self, path: &mut Vec<usize>) -> bool {
        if self.hole.is_some() {
            return true;
        }
        for (i, c) in self.children.iter().enumerate() {
            path.push(i);
            if c.first_hole(path) {
                return true;
            }
            path.pop();
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    ApplyRule(usize),
    FillTerminal(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSequence {
    pub actions: Vec<Action>,
}

impl RuleSequence {
    pub fn new(actions: Vec<Action>) -> Self {
        RuleSequence { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// One action per line: `R<id>` or `T<escaped token>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            match a {
                Action::ApplyRule(id) => {
                    out.push('R');
                    out.push_str(&id.to_string());
                }
                Action::FillTerminal(tok) => {
                    out.push('T');
                    escape_into(tok, &mut out);
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let mut actions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if let Some(id) = line.strip_prefix('R') {
                let id = id.parse().map_err(|_| CodecError::BadSequenceLine { line: i + 1 })?;
                actions.push(Action::ApplyRule(id));
            } else if let Some(tok) = line.strip_prefix('T') {
                let tok = unescape(tok).ok_or(CodecError::BadSequenceLine { line: i + 1 })?;
                actions.push(Action::FillTerminal(tok));
            } else if !line.is_empty() {
                return Err(CodecError::BadSequenceLine { line: i + 1 });
            }
        }
        Ok(RuleSequence { actions })
    }
}

fn escape_into(tok: &str, out: &mut String) {
    for c in tok.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            't' => out.push('\t'),
            _ => return None,
        }
    }
    Some(out)
}

/// Child-index path from the root to a node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrontierRef(pub Vec<usize>);

/// `(kind, child-index)` pairs from the root (index 0) down to a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreePath {
    pub nodes: Vec<(String, usize)>,
}

impl TreePath {
    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("tree has unexpanded nodes")]
    IncompleteTree,
    #[error("tree is complete; there is no frontier")]
    NoFrontier,
    #[error("action {step}: {action} cannot expand frontier `{frontier}`")]
    IllegalExpansion { step: usize, frontier: String, action: String },
    #[error("unknown rule id {0}")]
    UnknownRule(usize),
    #[error("action {step} follows a complete tree")]
    TrailingActions { step: usize },
    #[error("node `{kind}` does not match the children of rule {rule}")]
    ArityMismatch { kind: String, rule: usize },
    #[error("rule sequence line {line} is malformed")]
    BadSequenceLine { line: usize },
}

/// A tree under construction by successive actions at the leftmost hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialTree {
    root: AstNode,
    applied: usize,
}

impl PartialTree {
    pub fn new(grammar: &Grammar) -> Self {
        PartialTree { root: AstNode::hole(grammar.root(), Hole::Node), applied: 0 }
    }

    pub fn root(&self) -> &AstNode {
        &self.root
    }

    pub fn into_root(self) -> AstNode {
        self.root
    }

    pub fn frontier(&self) -> Option<FrontierRef> {
        let mut path = Vec::new();
        self.root.first_hole(&mut path).then_some(FrontierRef(path))
    }

    pub fn is_complete(&self) -> bool {
        self.frontier().is_none()
    }

    /// Kind and hole state of the current frontier.
    pub fn frontier_state(&self) -> Option<(FrontierRef, &str, Hole)> {
        let f = self.frontier()?;
        let node = self.root.get(&f)?;
        let hole = node.hole?;
        Some((f, node.kind.as_str(), hole))
    }

    pub fn apply(&mut self, action: &Action, grammar: &Grammar) -> Result<(), CodecError> {
        let step = self.applied;
        let f = self.frontier().ok_or(CodecError::TrailingActions { step })?;
        let node = self.root.get_mut(&f.0).expect("frontier exists");
        let illegal = |node: &AstNode| CodecError::IllegalExpansion {
            step,
            frontier: node.kind.clone(),
            action: match action {
                Action::ApplyRule(id) => format!("rule {id}"),
                Action::FillTerminal(t) => format!("token {t:?}"),
            },
        };
        match (action, node.hole) {
            (Action::FillTerminal(tok), Some(Hole::Terminal)) => {
                node.token = Some(tok.clone());
                node.hole = None;
            }
            (Action::ApplyRule(id), Some(hole @ (Hole::Node | Hole::ListSlot))) => {
                let rule = grammar.rule(*id).ok_or(CodecError::UnknownRule(*id))?;
                if rule.head != node.kind || (rule.end_of_list && hole == Hole::Node) {
                    return Err(illegal(node));
                }
                if rule.end_of_list {
                    let (last, parent) = f.0.split_last().expect("root is never a list slot");
                    let parent = self.root.get_mut(parent).expect("parent exists");
                    parent.children.remove(*last);
                } else {
                    node.rule = Some(*id);
                    node.hole = None;
                    node.children = rule
                        .children
                        .iter()
                        .map(|c| {
                            let h = if grammar.is_terminal(&c.kind) {
                                Hole::Terminal
                            } else if c.cardinality == Cardinality::List {
                                Hole::ListSlot
                            } else {
                                Hole::Node
                            };
                            AstNode::hole(c.kind.clone(), h)
                        })
                        .collect();
                    if hole == Hole::ListSlot {
                        let kind = node.kind.clone();
                        let (last, parent) = f.0.split_last().expect("root is never a list slot");
                        let parent = self.root.get_mut(parent).expect("parent exists");
                        parent.children.insert(last + 1, AstNode::hole(kind, Hole::ListSlot));
                    }
                }
            }
            _ => return Err(illegal(node)),
        }
        self.applied += 1;
        Ok(())
    }
}

/// Result of replaying a (possibly partial) rule sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub tree: AstNode,
    /// `None` when the sequence derives a complete tree.
    pub frontier: Option<FrontierRef>,
}

pub fn rules_to_ast(rules: &RuleSequence, grammar: &Grammar) -> Result<Replay, CodecError> {
    let mut partial = PartialTree::new(grammar);
    for a in &rules.actions {
        partial.apply(a, grammar)?;
    }
    let frontier = partial.frontier();
    Ok(Replay { tree: partial.into_root(), frontier })
}

/// Pre-order, leftmost-first serialization of a complete tree.
pub fn ast_to_rules(ast: &AstNode, grammar: &Grammar) -> Result<RuleSequence, CodecError> {
    let mut actions = Vec::with_capacity(ast.size() * 2);
    walk(ast, grammar, &mut actions)?;
    Ok(RuleSequence { actions })
}

fn walk(node: &AstNode, grammar: &Grammar, out: &mut Vec<Action>) -> Result<(), CodecError> {
    if node.hole.is_some() {
        return Err(CodecError::IncompleteTree);
    }
    if grammar.is_terminal(&node.kind) {
        let tok = node.token.as_ref().ok_or(CodecError::IncompleteTree)?;
        out.push(Action::FillTerminal(tok.clone()));
        return Ok(());
    }
    let id = node.rule.ok_or(CodecError::IncompleteTree)?;
    let rule = grammar.rule(id).ok_or(CodecError::UnknownRule(id))?;
    let mismatch = || CodecError::ArityMismatch { kind: node.kind.clone(), rule: id };
    if rule.head != node.kind || rule.end_of_list {
        return Err(mismatch());
    }
    out.push(Action::ApplyRule(id));
    let mut idx = 0;
    for spec in &rule.children {
        match spec.cardinality {
            Cardinality::One => {
                let child = node.children.get(idx).filter(|c| c.kind == spec.kind).ok_or_else(mismatch)?;
                walk(child, grammar, out)?;
                idx += 1;
            }
            Cardinality::List => {
                while let Some(child) = node.children.get(idx).filter(|c| c.kind == spec.kind) {
                    walk(child, grammar, out)?;
                    idx += 1;
                }
                let eol = grammar.end_of_list_rule(&spec.kind).ok_or_else(mismatch)?;
                out.push(Action::ApplyRule(eol));
            }
        }
    }
    if idx != node.children.len() {
        return Err(mismatch());
    }
    Ok(())
}

/// Leftmost depth-first unexpanded node.
pub fn frontier(partial: &AstNode) -> Result<FrontierRef, CodecError> {
    let mut path = Vec::new();
    if partial.first_hole(&mut path) {
        Ok(FrontierRef(path))
    } else {
        Err(CodecError::NoFrontier)
    }
}

pub fn tree_path(partial: &AstNode, node: &FrontierRef) -> Option<TreePath> {
    let mut cur = partial;
    let mut nodes = vec![(cur.kind.clone(), 0)];
    for &i in &node.0 {
        cur = cur.children.get(i)?;
        nodes.push((cur.kind.clone(), i));
    }
    Some(TreePath { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;

    fn assign_grammar() -> Grammar {
        load_grammar(
            "%terminal id n
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
             Num -> n",
        )
        .unwrap()
    }

    fn rule(g: &Grammar, head: &str, first_child: &str) -> Action {
        let id = g
            .rules_for(head)
            .iter()
            .copied()
            .find(|&i| g.rules()[i].children.first().map(|c| c.kind.as_str()) == Some(first_child))
            .unwrap();
        Action::ApplyRule(id)
    }

    fn eol(g: &Grammar, kind: &str) -> Action {
        Action::ApplyRule(g.end_of_list_rule(kind).unwrap())
    }

    /// `mylist = [0]`
    fn assign_actions(g: &Grammar) -> Vec<Action> {
        vec![
            rule(g, "root", "Module"),
            rule(g, "Module", "body"),
            rule(g, "body", "Assign"),
            rule(g, "Assign", "targets"),
            rule(g, "targets", "Name"),
            rule(g, "Name", "id"),
            Action::FillTerminal("mylist".into()),
            eol(g, "targets"),
            rule(g, "value", "List"),
            rule(g, "List", "elts"),
            rule(g, "elts", "Num"),
            rule(g, "Num", "n"),
            Action::FillTerminal("0".into()),
            eol(g, "elts"),
            eol(g, "body"),
        ]
    }

    #[test]
    fn replay_round_trips_figure_one() {
        let g = assign_grammar();
        let seq = RuleSequence::new(assign_actions(&g));
        let replay = rules_to_ast(&seq, &g).unwrap();
        assert!(replay.frontier.is_none());
        assert_eq!(ast_to_rules(&replay.tree, &g).unwrap(), seq);
        assert_eq!(seq.actions.first(), Some(&rule(&g, "root", "Module")));
    }

    #[test]
    fn empty_sequence_leaves_root_frontier() {
        let g = assign_grammar();
        let replay = rules_to_ast(&RuleSequence::default(), &g).unwrap();
        assert_eq!(replay.frontier, Some(FrontierRef(vec![])));
        assert_eq!(replay.tree.kind, "root");
        let path = tree_path(&replay.tree, &FrontierRef(vec![])).unwrap();
        assert_eq!(path.nodes, vec![("root".to_string(), 0)]);
    }

    #[test]
    fn wrong_head_is_illegal() {
        let g = assign_grammar();
        let seq = RuleSequence::new(vec![rule(&g, "Module", "body")]);
        assert!(matches!(rules_to_ast(&seq, &g), Err(CodecError::IllegalExpansion { step: 0, .. })));
    }

    #[test]
    fn end_of_list_on_plain_node_is_illegal() {
        let g = assign_grammar();
        let mut seq = assign_actions(&g)[..4].to_vec();
        seq.push(eol(&g, "targets"));
        // targets is a list slot here, so closing it immediately is legal ...
        assert!(rules_to_ast(&RuleSequence::new(seq.clone()), &g).is_ok());
        // ... but `value` is a plain node and cannot be closed.
        seq.push(eol(&g, "targets"));
        assert!(matches!(
            rules_to_ast(&RuleSequence::new(seq), &g),
            Err(CodecError::IllegalExpansion { .. })
        ));
    }

    #[test]
    fn frontier_of_half_expanded_assign_is_value() {
        let g = assign_grammar();
        let actions = assign_actions(&g);
        // Through the end of the target list.
        let replay = rules_to_ast(&RuleSequence::new(actions[..8].to_vec()), &g).unwrap();
        let f = replay.frontier.unwrap();
        assert_eq!(replay.tree.get(&f).unwrap().kind, "value");
        let kinds: Vec<_> = tree_path(&replay.tree, &f).unwrap().kinds().map(str::to_string).collect();
        assert_eq!(kinds, ["root", "Module", "body", "Assign", "value"]);
    }

    #[test]
    fn path_to_assign_matches_figure() {
        let g = assign_grammar();
        let actions = assign_actions(&g);
        let replay = rules_to_ast(&RuleSequence::new(actions[..3].to_vec()), &g).unwrap();
        let f = replay.frontier.unwrap();
        let kinds: Vec<_> = tree_path(&replay.tree, &f).unwrap().kinds().map(str::to_string).collect();
        assert_eq!(kinds, ["root", "Module", "body", "Assign"]);
    }

    #[test]
    fn complete_tree_has_no_frontier() {
        let g = assign_grammar();
        let tree = rules_to_ast(&RuleSequence::new(assign_actions(&g)), &g).unwrap().tree;
        assert_eq!(frontier(&tree), Err(CodecError::NoFrontier));
        let mut partial = PartialTree::new(&g);
        for a in assign_actions(&g) {
            partial.apply(&a, &g).unwrap();
        }
        assert!(matches!(
            partial.apply(&Action::FillTerminal("x".into()), &g),
            Err(CodecError::TrailingActions { step: 15 })
        ));
    }

    #[test]
    fn incomplete_tree_cannot_be_serialized() {
        let g = assign_grammar();
        let replay = rules_to_ast(&RuleSequence::new(assign_actions(&g)[..5].to_vec()), &g).unwrap();
        assert_eq!(ast_to_rules(&replay.tree, &g), Err(CodecError::IncompleteTree));
    }

    #[test]
    fn single_terminal_toy_grammar() {
        let g = load_grammar("%terminal x\nS -> x").unwrap();
        let tree = AstNode::expanded("S", 0, vec![AstNode::terminal("x", "a")]);
        let seq = ast_to_rules(&tree.children[0], &g).unwrap();
        assert_eq!(seq.len(), 1);
    }

    #[test]
    fn sequence_text_format_escapes_tokens() {
        let seq = RuleSequence::new(vec![
            Action::ApplyRule(3),
            Action::FillTerminal("a\\b\nc\t".into()),
            Action::FillTerminal(String::new()),
        ]);
        let text = seq.to_text();
        assert_eq!(text, "R3\nTa\\\\b\\nc\\t\nT\n");
        assert_eq!(RuleSequence::from_text(&text).unwrap(), seq);
        assert!(RuleSequence::from_text("X1\n").is_err());
    }

    #[test]
    fn prefix_replay_is_always_valid() {
        let g = assign_grammar();
        let actions = assign_actions(&g);
        for n in 0..=actions.len() {
            let replay = rules_to_ast(&RuleSequence::new(actions[..n].to_vec()), &g).unwrap();
            assert_eq!(replay.frontier.is_none(), n == actions.len());
        }
    }
}
