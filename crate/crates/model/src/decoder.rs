//! Tree-path queries, the attention stack over the four encoder memories, the
//! grammar-masked output layer with a copy pointer, and search.

use std::collections::BTreeMap;

use cgt_core::grammar::python::ast_to_code_partial;
use cgt_core::grammar::{Action, Grammar, Hole, PartialTree, RuleSequence};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::encoders::{strictly_causal, HiddenSequence};
use crate::layers::{causal_mask, key_mask, positional_matrix, residual, Attention, FeedForward, LayerNorm, Linear};
use crate::model::{path_ids, Decision, EncoderOutputs, Model, ModelDims, ModelInput};
use crate::params::{Init, Mat, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Child indices past this share one embedding.
pub const MAX_CHILD: usize = 32;

/// Memories read by the decoder; `None` skips the matching attention layer.
/// The AST memory row `j` encodes action `j`; query `t` reads rows `< t`.
pub struct Memories {
    pub ast: Option<Var>,
    pub nl: Option<(Var, Vec<bool>)>,
    pub test: Option<(Var, Vec<bool>)>,
    pub code: Option<(Var, Vec<bool>)>,
}

#[derive(Debug, Clone)]
struct Sub {
    norm: LayerNorm,
    att: Attention,
}

impl Sub {
    fn new(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, seed: u64) -> Self {
        Sub {
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), cfg.d, seed),
            att: Attention::new(store, prefix, cfg.d, cfg.heads, seed),
        }
    }

    fn apply(&self, t: &mut Tape, x: Var, memory: Var, mask: &Array2<bool>) -> Var {
        residual(t, x, &self.norm, |t, n| self.att.forward(t, n, memory, Some(mask)).out)
    }
}

#[derive(Debug, Clone)]
struct Block {
    self_attn: Sub,
    ast: Sub,
    nl: Sub,
    test: Sub,
    code: Sub,
    ast2: Sub,
    nl2: Sub,
    ff_norm: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    kinds: ParamId,
    children: ParamId,
    path_fc: Linear,
    query_fc: Linear,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    out: Linear,
    pointer: Linear,
    gate: Linear,
    d: usize,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, dims: &ModelDims, seed: u64) -> Self {
        let d = cfg.d;
        let blocks = (0..cfg.blocks.decoder)
            .map(|b| {
                let p = |s: &str| format!("decoder.{b}.{s}");
                Block {
                    self_attn: Sub::new(store, &p("self_attn"), cfg, seed),
                    ast: Sub::new(store, &p("ast_attn"), cfg, seed),
                    nl: Sub::new(store, &p("nl_attn"), cfg, seed),
                    test: Sub::new(store, &p("test_attn"), cfg, seed),
                    code: Sub::new(store, &p("code_attn"), cfg, seed),
                    ast2: Sub::new(store, &p("ast_attn2"), cfg, seed),
                    nl2: Sub::new(store, &p("nl_attn2"), cfg, seed),
                    ff_norm: LayerNorm::new(store, &p("ff.norm"), d, seed),
                    ff: FeedForward::new(store, &p("ff"), d, cfg.ff_first, seed),
                }
            })
            .collect();
        Decoder {
            kinds: store.add("decoder.path.kinds", dims.n_kinds, d, Init::Uniform, seed),
            children: store.add("decoder.path.children", MAX_CHILD, d, Init::Uniform, seed),
            path_fc: Linear::new(store, "decoder.path.fc", d, d, true, seed),
            query_fc: Linear::new(store, "decoder.path.query", 2 * d, d, true, seed),
            blocks,
            final_norm: LayerNorm::new(store, "decoder.final_norm", d, seed),
            out: Linear::new(store, "decoder.out", d, dims.n_actions(), true, seed),
            pointer: Linear::new(store, "decoder.pointer", d, d, false, seed),
            gate: Linear::new(store, "decoder.copy_gate", d, 1, true, seed),
            d,
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// One vector per path node: `tanh(W (kind + child-index + depth
    /// encodings) + b)`. Paths are stacked in order.
    pub fn embed_tree_path(&self, t: &mut Tape, paths: &[&[(usize, usize)]]) -> Var {
        let kinds: Vec<usize> = paths.iter().flat_map(|p| p.iter().map(|n| n.0)).collect();
        let kids: Vec<usize> = paths.iter().flat_map(|p| p.iter().map(|n| n.1.min(MAX_CHILD - 1))).collect();
        let mut depth = Mat::zeros((kinds.len(), self.d));
        let mut row = 0;
        for p in paths {
            let pe = positional_matrix(0, p.len(), self.d);
            depth.slice_mut(ndarray::s![row..row + p.len(), ..]).assign(&pe);
            row += p.len();
        }
        let kt = t.param(self.kinds);
        let k = t.gather(kt, &kinds);
        let ct = t.param(self.children);
        let c = t.gather(ct, &kids);
        let x = t.add(k, c);
        let dp = t.constant(depth);
        let x = t.add(x, dp);
        let x = self.path_fc.forward(t, x);
        t.tanh(x)
    }

    /// Per-step queries: the mean of the path node vectors next to the
    /// frontier node's vector, through a fully-connected layer.
    pub fn queries(&self, t: &mut Tape, paths: &[&[(usize, usize)]]) -> Var {
        let nodes = self.embed_tree_path(t, paths);
        let total: usize = paths.iter().map(|p| p.len()).sum();
        let mut avg = Mat::zeros((paths.len(), total));
        let mut last = Vec::with_capacity(paths.len());
        let mut at = 0;
        for (i, p) in paths.iter().enumerate() {
            assert!(!p.is_empty(), "tree paths start at the root");
            for j in at..at + p.len() {
                avg[[i, j]] = 1.0 / p.len() as f64;
            }
            at += p.len();
            last.push(at - 1);
        }
        let avg = t.constant(avg);
        let mean = t.matmul(avg, nodes);
        let front = t.gather(nodes, &last);
        let cat = t.concat_cols(&[mean, front]);
        self.query_fc.forward(t, cat)
    }

    /// Decoder states, one row per step.
    pub fn forward(&self, t: &mut Tape, paths: &[&[(usize, usize)]], m: &Memories) -> Var {
        let steps = paths.len();
        let mut x = self.queries(t, paths);
        let self_mask = causal_mask(steps);
        let ast_mask = m.ast.map(|a| strictly_causal(steps, t.shape(a).0));
        let masks = |v: &Option<(Var, Vec<bool>)>| v.as_ref().map(|(m, valid)| (*m, key_mask(steps, valid)));
        let nl = masks(&m.nl);
        let test = masks(&m.test);
        let code = masks(&m.code);
        for (b, block) in self.blocks.iter().enumerate() {
            let pe = t.constant(positional_matrix(b, steps, self.d));
            x = t.add(x, pe);
            let sa = &block.self_attn;
            x = residual(t, x, &sa.norm, |t, n| sa.att.forward(t, n, n, Some(&self_mask)).out);
            if let (Some(a), Some(mask)) = (m.ast, &ast_mask) {
                x = block.ast.apply(t, x, a, mask);
            }
            if let Some((v, mask)) = &nl {
                x = block.nl.apply(t, x, *v, mask);
            }
            if let Some((v, mask)) = &test {
                x = block.test.apply(t, x, *v, mask);
            }
            if let Some((v, mask)) = &code {
                x = block.code.apply(t, x, *v, mask);
            }
            if let (Some(a), Some(mask)) = (m.ast, &ast_mask) {
                x = block.ast2.apply(t, x, a, mask);
            }
            if let Some((v, mask)) = &nl {
                x = block.nl2.apply(t, x, *v, mask);
            }
            x = residual(t, x, &block.ff_norm, |t, n| block.ff.forward(t, n));
        }
        self.final_norm.forward(t, x)
    }

    /// Masked action distribution, copy distribution and copy gate for the
    /// given state rows.
    fn heads(&self, t: &mut Tape, states: Var, nl: Option<(Var, &[bool])>, allowed: &Array2<bool>) -> (Var, Option<(Var, Var)>) {
        let logits = self.out.forward(t, states);
        let dist = t.softmax(logits, Some(allowed));
        let copy = nl.map(|(mem, valid)| {
            let q = self.pointer.forward(t, states);
            let s = t.matmul_t(q, mem);
            let s = t.scale(s, 1.0 / (self.d as f64).sqrt());
            let mask = key_mask(t.shape(states).0, valid);
            let c = t.softmax(s, Some(&mask));
            let g = self.gate.forward(t, states);
            (c, t.sigmoid(g))
        });
        (dist, copy)
    }

    /// `L × 1` probabilities of the target action at each decision row.
    /// Terminal rows mix copying and generation through the gate.
    pub fn target_probability(&self, t: &mut Tape, states: Var, nl: Option<(Var, &[bool])>, decisions: &[&Decision], dims: &ModelDims) -> Var {
        let n = decisions.len();
        let width = dims.n_actions();
        let mut allowed = Array2::from_elem((n, width), false);
        let mut target = Mat::zeros((n, width));
        let mut is_term = Mat::zeros((n, 1));
        let l = nl.map_or(0, |(m, _)| t.shape(m).0);
        let mut copy_mask = Mat::zeros((n, l));
        for (i, d) in decisions.iter().enumerate() {
            match d {
                Decision::Rule { legal, target: r } => {
                    for &a in legal {
                        allowed[[i, a]] = true;
                    }
                    target[[i, *r]] = 1.0;
                }
                Decision::Terminal { legal, target: tok, copy } => {
                    for &a in legal {
                        allowed[[i, dims.n_rules + a]] = true;
                    }
                    if let Some(tok) = tok {
                        target[[i, dims.n_rules + tok]] = 1.0;
                    }
                    for &p in copy {
                        if p < l {
                            copy_mask[[i, p]] = 1.0;
                        }
                    }
                    is_term[[i, 0]] = 1.0;
                }
                Decision::Forced | Decision::Unreachable => unreachable!("only decision rows are scored"),
            }
        }
        let (dist, copy) = self.heads(t, states, nl, &allowed);
        let tv = t.constant(target);
        let picked = t.mul(dist, tv);
        let gen = t.row_sum(picked);
        let Some((c, g)) = copy else { return gen };
        let cm = t.constant(copy_mask);
        let cp = t.mul(c, cm);
        let copied = t.row_sum(cp);
        // Rule rows: p = gen. Terminal rows: p = g * copied + (1 - g) * gen.
        let term = t.constant(is_term.clone());
        let rule = t.constant(is_term.mapv(|v| 1.0 - v));
        let gc = t.mul(g, copied);
        let one_minus = t.affine(g, -1.0, 1.0);
        let gg = t.mul(one_minus, gen);
        let mix = t.add(gc, gg);
        let tm = t.mul(term, mix);
        let rg = t.mul(rule, gen);
        t.add(tm, rg)
    }
}

/// Distributions at one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct RulePrediction {
    /// Over grammar rules followed by terminal ids; zero where illegal.
    pub rule_dist: Vec<f64>,
    /// Over description positions; empty without a description.
    pub copy_dist: Vec<f64>,
    pub copy_gate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLimits {
    pub max_actions: usize,
    pub beam_width: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        GenerationLimits { max_actions: 600, beam_width: 1 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerationError {
    #[error("max_actions must be at least 1 and beam_width at least 1")]
    BadLimits,
}

/// Generated code and the actions that derive it. `partial` is set when
/// `max_actions` ran out first; the code then contains hole markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub code: String,
    pub rules: RuleSequence,
    pub partial: bool,
}

/// Scored terminal candidates from the mixed distribution
/// `gate · copy + (1 − gate) · generation`, best first, ties by token.
pub fn terminal_candidates(pred: &RulePrediction, nl_tokens: &[String], n_rules: usize, terminal: impl Fn(usize) -> String) -> Vec<(String, f64)> {
    let gen_mass: f64 = pred.rule_dist[n_rules..].iter().sum();
    let has_copy = !pred.copy_dist.is_empty() && pred.copy_dist.iter().sum::<f64>() > 0.0;
    let gate = match (has_copy, gen_mass > 0.0) {
        (true, true) => pred.copy_gate,
        (true, false) => 1.0,
        (false, _) => 0.0,
    };
    let mut mixed: BTreeMap<String, f64> = BTreeMap::new();
    for (id, &p) in pred.rule_dist[n_rules..].iter().enumerate() {
        if p > 0.0 {
            *mixed.entry(terminal(id)).or_default() += (1.0 - gate) * p;
        }
    }
    if has_copy {
        for (i, &p) in pred.copy_dist.iter().enumerate() {
            if let Some(tok) = nl_tokens.get(i) {
                *mixed.entry(tok.clone()).or_default() += gate * p;
            }
        }
    }
    let mut out: Vec<(String, f64)> = mixed.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Most probable terminal token under the mixed distribution.
pub fn terminal_fill(pred: &RulePrediction, nl_tokens: &[String], n_rules: usize, terminal: impl Fn(usize) -> String) -> Option<String> {
    terminal_candidates(pred, nl_tokens, n_rules, terminal).into_iter().next().map(|(t, _)| t)
}

#[derive(Clone)]
struct Hyp {
    tree: PartialTree,
    actions: Vec<Action>,
    ids: Vec<usize>,
    paths: Vec<Vec<(usize, usize)>>,
    score: f64,
}

impl Model {
    /// Prediction for the frontier following `ids`, given the paths of every
    /// step so far (the last one is the frontier's).
    pub fn decode_step(&self, enc: &EncoderOutputs, ids: &[usize], paths: &[Vec<(usize, usize)>], legal: &[usize]) -> RulePrediction {
        let ast = self.encode_ast(ids);
        let mut t = Tape::new(&self.store);
        let konst = |t: &mut Tape, h: &HiddenSequence| (!h.is_empty()).then(|| (t.constant(h.values.clone()), h.valid.clone()));
        let ast_v = (!ast.is_empty()).then(|| t.constant(ast.values.clone()));
        let memories = Memories { ast: ast_v, nl: konst(&mut t, &enc.nl), test: konst(&mut t, &enc.test_info), code: konst(&mut t, &enc.code) };
        let refs: Vec<&[(usize, usize)]> = paths.iter().map(Vec::as_slice).collect();
        let states = self.decoder.forward(&mut t, &refs, &memories);
        let last = t.gather(states, &[paths.len() - 1]);
        let mut allowed = Array2::from_elem((1, self.dims.n_actions()), false);
        for &a in legal {
            allowed[[0, a]] = true;
        }
        let nl = memories.nl.as_ref().map(|(v, valid)| (*v, valid.as_slice()));
        let (dist, copy) = self.decoder.heads(&mut t, last, nl, &allowed);
        let (copy_dist, copy_gate) = match copy {
            Some((c, g)) => (t.value(c).row(0).to_vec(), t.value(g)[[0, 0]]),
            None => (Vec::new(), 0.0),
        };
        RulePrediction { rule_dist: t.value(dist).row(0).to_vec(), copy_dist, copy_gate }
    }

    /// Decodes one program from encoded inputs.
    pub fn generate(&self, input: &ModelInput, grammar: &Grammar, limits: GenerationLimits) -> Result<Generation, GenerationError> {
        if limits.max_actions == 0 || limits.beam_width == 0 {
            return Err(GenerationError::BadLimits);
        }
        let enc = self.encode(input);
        let start = Hyp { tree: PartialTree::new(grammar), actions: Vec::new(), ids: Vec::new(), paths: Vec::new(), score: 0.0 };
        let mut beams = vec![start];
        let mut finished: Vec<Hyp> = Vec::new();
        let mut steps = 0;
        while !beams.is_empty() && steps < limits.max_actions && finished.len() < limits.beam_width {
            steps += 1;
            let mut next = Vec::new();
            for h in &beams {
                next.extend(self.expand(h, &enc, input, grammar, limits.beam_width));
            }
            next.sort_by(|a, b| b.score.total_cmp(&a.score));
            next.truncate(limits.beam_width);
            beams.clear();
            for h in next {
                if h.tree.is_complete() {
                    finished.push(h);
                } else {
                    beams.push(h);
                }
            }
        }
        finished.sort_by(|a, b| b.score.total_cmp(&a.score));
        let (best, partial) = match finished.into_iter().next() {
            Some(h) => (h, false),
            None => (beams.into_iter().next().expect("beam never empties before completion"), true),
        };
        let code = ast_to_code_partial(best.tree.root());
        Ok(Generation { code, rules: RuleSequence::new(best.actions), partial })
    }

    fn expand(&self, h: &Hyp, enc: &EncoderOutputs, input: &ModelInput, grammar: &Grammar, width: usize) -> Vec<Hyp> {
        let (f, kind, hole) = h.tree.frontier_state().expect("incomplete hypothesis");
        let path = path_ids(grammar, h.tree.root(), &f);
        let mut paths = h.paths.clone();
        paths.push(path);
        let options: Vec<(Action, f64)> = match hole {
            Hole::Node | Hole::ListSlot => {
                let legal = grammar.legal_rules(kind, hole);
                if legal.len() == 1 {
                    vec![(Action::ApplyRule(legal[0]), 1.0)]
                } else {
                    let pred = self.decode_step(enc, &h.ids, &paths, &legal);
                    let mut scored: Vec<(usize, f64)> = legal.iter().map(|&r| (r, pred.rule_dist[r])).collect();
                    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    scored.into_iter().take(width).map(|(r, p)| (Action::ApplyRule(r), p)).collect()
                }
            }
            Hole::Terminal => {
                let legal: Vec<usize> = self.legal_terminals(kind).into_iter().map(|i| self.dims.n_rules + i).collect();
                let pred = self.decode_step(enc, &h.ids, &paths, &legal);
                let cands = terminal_candidates(&pred, &input.nl_surface, self.dims.n_rules, |i| {
                    self.vocabs.terminals.token(i).to_string()
                });
                let mut opts: Vec<(Action, f64)> =
                    cands.into_iter().take(width).map(|(tok, p)| (Action::FillTerminal(tok), p)).collect();
                if opts.is_empty() {
                    opts.push((Action::FillTerminal(self.vocabs.terminals.token(cgt_core::text::UNK).to_string()), 1e-12));
                }
                opts
            }
        };
        options
            .into_iter()
            .filter_map(|(a, p)| {
                let mut n = h.clone();
                n.tree.apply(&a, grammar).ok()?;
                n.ids.push(self.action_id(&a));
                n.actions.push(a);
                n.paths = paths.clone();
                n.score += p.max(crate::tape::LOG_FLOOR).ln();
                Some(n)
            })
            .collect()
    }
}
