use std::collections::HashMap;

use super::spec::FAMILIES;
use crate::grammar::{AstNode, Cardinality, Grammar};

/// One constructor field while building a node.
pub enum Field {
    One(&'static str, AstNode),
    Many(&'static str, Vec<AstNode>),
    Term(&'static str, String),
}

/// Builds grammar-conforming nodes from constructors and fields.
///
/// Constructor nodes are passed around bare; the builder wraps them in the
/// field node that selects them, e.g. `value -> Num`.
pub struct TreeBuilder<'g> {
    grammar: &'g Grammar,
    ctor_rules: HashMap<&'g str, usize>,
    wrap_rules: HashMap<(&'g str, &'g str), usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildError(pub String);

impl<'g> TreeBuilder<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        let is_ctor = |kind: &str| kind == "Module" || FAMILIES.iter().any(|(_, cs)| cs.iter().any(|(c, _)| *c == kind));
        let mut ctor_rules = HashMap::new();
        let mut wrap_rules = HashMap::new();
        for rule in grammar.rules().iter().filter(|r| !r.end_of_list) {
            if is_ctor(&rule.head) {
                ctor_rules.insert(rule.head.as_str(), rule.id);
            } else if let [child] = rule.children.as_slice() {
                if child.cardinality == Cardinality::One && is_ctor(&child.kind) {
                    wrap_rules.insert((rule.head.as_str(), child.kind.as_str()), rule.id);
                }
            }
        }
        TreeBuilder { grammar, ctor_rules, wrap_rules }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    /// Wraps a constructor node in the field node that selects it.
    pub fn wrap(&self, field: &str, ctor: AstNode) -> Result<AstNode, BuildError> {
        let id = self
            .wrap_rules
            .get(&(field, ctor.kind.as_str()))
            .ok_or_else(|| BuildError(format!("`{}` cannot appear as `{field}`", ctor.kind)))?;
        Ok(AstNode::expanded(field, *id, vec![ctor]))
    }

    pub fn ctor(&self, name: &str, fields: Vec<Field>) -> Result<AstNode, BuildError> {
        let id = *self.ctor_rules.get(name).ok_or_else(|| BuildError(format!("unknown constructor `{name}`")))?;
        let rule = &self.grammar.rules()[id];
        if rule.children.len() != fields.len() {
            return Err(BuildError(format!("`{name}` takes {} fields", rule.children.len())));
        }
        let mut children = Vec::new();
        for (spec, field) in rule.children.iter().zip(fields) {
            match field {
                Field::One(f, node) if f == spec.kind && spec.cardinality == Cardinality::One => {
                    children.push(self.wrap(f, node)?);
                }
                Field::Many(f, nodes) if f == spec.kind && spec.cardinality == Cardinality::List => {
                    for node in nodes {
                        children.push(self.wrap(f, node)?);
                    }
                }
                Field::Term(f, tok) if f == spec.kind && self.grammar.is_terminal(f) => {
                    children.push(AstNode::terminal(f, tok));
                }
                _ => return Err(BuildError(format!("field mismatch building `{name}` at `{}`", spec.kind))),
            }
        }
        Ok(AstNode::expanded(name, id, children))
    }

    pub fn leaf(&self, name: &str) -> Result<AstNode, BuildError> {
        self.ctor(name, Vec::new())
    }
}
