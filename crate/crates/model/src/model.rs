use std::collections::BTreeMap;

use cgt_core::grammar::{tree_path, Action, Grammar, Hole, PartialTree, RuleSequence};
use cgt_core::text::{EncodedSample, EncodedText, Vocabs, COPY, PAD, UNK};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ModelConfig};
use crate::decoder::{Decoder, Memories};
use crate::encoders::{Embeddings, Encoder, EncoderKind, HiddenSequence, TextInput};
use crate::params::{Mat, ParamStore};
use crate::tape::{Tape, Var};

/// Vocabulary and grammar sizes that fix the parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_words: usize,
    pub n_chars: usize,
    pub n_rules: usize,
    pub n_terminals: usize,
    pub n_kinds: usize,
}

impl ModelDims {
    pub fn new(vocabs: &Vocabs, grammar: &Grammar) -> Self {
        ModelDims {
            n_words: vocabs.words.len(),
            n_chars: vocabs.chars.len(),
            n_rules: grammar.len(),
            n_terminals: vocabs.terminals.len(),
            n_kinds: grammar.kinds().len(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_rules + self.n_terminals
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grammar has {found} rules and {kinds} kinds; the model was built for {rules} and {want_kinds}")]
    GrammarMismatch { found: usize, kinds: usize, rules: usize, want_kinds: usize },
    #[error("target sequence of {id} does not replay: {error}")]
    BadTarget { id: String, error: String },
}

/// Which auxiliary encoders contribute memories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub test_info_encoder: bool,
    pub code_encoder: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { test_info_encoder: true, code_encoder: true }
    }
}

/// Model inputs of one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelInput {
    pub nl: TextInput,
    /// Original-case description tokens, the copy candidates.
    pub nl_surface: Vec<String>,
    pub test_info: TextInput,
    /// Action ids of the previous round's code.
    pub last_actions: Vec<usize>,
}

/// What the decoder must predict at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Only one rule applies; nothing to predict.
    Forced,
    Rule { legal: Vec<usize>, target: usize },
    /// `target` is the terminal id when it is a legal vocabulary entry;
    /// `copy` lists description positions holding the token.
    Terminal { legal: Vec<usize>, target: Option<usize>, copy: Vec<usize> },
    /// The token can be neither generated nor copied.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetStep {
    /// `(kind id, child index)` from the root to the frontier.
    pub path: Vec<(usize, usize)>,
    pub decision: Decision,
}

/// A sample ready for teacher-forced training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedSample {
    pub id: String,
    pub input: ModelInput,
    pub actions: Vec<usize>,
    pub steps: Vec<TargetStep>,
}

/// Encodings reused across decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutputs {
    pub nl: HiddenSequence,
    pub test_info: HiddenSequence,
    pub code: HiddenSequence,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub vocabs: Vocabs,
    pub store: ParamStore,
    pub ablation: Ablation,
    pub emb: Embeddings,
    pub nl: Encoder,
    pub ast: Encoder,
    pub test_info: Encoder,
    pub code: Encoder,
    pub decoder: Decoder,
}

impl Model {
    pub fn new(config: ModelConfig, vocabs: Vocabs, grammar: &Grammar, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let dims = ModelDims::new(&vocabs, grammar);
        let mut store = ParamStore::new();
        let emb = Embeddings::new(&mut store, &config, dims.n_words, dims.n_chars, dims.n_actions(), seed);
        let nl = Encoder::new(&mut store, &config, EncoderKind::Nl, seed);
        let ast = Encoder::new(&mut store, &config, EncoderKind::Ast, seed);
        let test_info = Encoder::new(&mut store, &config, EncoderKind::TestInfo, seed);
        let code = Encoder::new(&mut store, &config, EncoderKind::Code, seed);
        let decoder = Decoder::new(&mut store, &config, &dims, seed);
        Ok(Model { config, dims, vocabs, store, ablation: Ablation::default(), emb, nl, ast, test_info, code, decoder })
    }

    pub fn check_grammar(&self, grammar: &Grammar) -> Result<(), ModelError> {
        if grammar.len() != self.dims.n_rules || grammar.kinds().len() != self.dims.n_kinds {
            return Err(ModelError::GrammarMismatch {
                found: grammar.len(),
                kinds: grammar.kinds().len(),
                rules: self.dims.n_rules,
                want_kinds: self.dims.n_kinds,
            });
        }
        Ok(())
    }

    pub fn action_id(&self, action: &Action) -> usize {
        match action {
            Action::ApplyRule(r) => *r,
            Action::FillTerminal(tok) => self.dims.n_rules + self.vocabs.terminals.id(tok),
        }
    }

    pub fn action_ids(&self, rules: &RuleSequence) -> Vec<usize> {
        rules.actions.iter().map(|a| self.action_id(a)).collect()
    }

    /// Terminal ids that may fill a terminal of `kind`.
    pub fn legal_terminals(&self, kind: &str) -> Vec<usize> {
        match self.vocabs.terminal_kinds.get(kind) {
            Some(ids) if !ids.is_empty() => ids.clone(),
            _ => (0..self.dims.n_terminals).filter(|&i| i != PAD && i != UNK && i != COPY).collect(),
        }
    }

    fn text_input(&self, text: &EncodedText) -> TextInput {
        TextInput::new(text.ids.clone(), text.char_ids.clone()).truncated(self.config.l_max)
    }

    /// Inputs for one round. Disabled encoders see empty inputs.
    pub fn input(&self, sample: &EncodedSample) -> ModelInput {
        let nl = self.text_input(&sample.nl);
        let mut nl_surface = sample.nl.text.surface.clone();
        nl_surface.truncate(nl.len());
        let test_info =
            if self.ablation.test_info_encoder { self.text_input(&sample.test_info) } else { TextInput::default() };
        let mut last_actions = if self.ablation.code_encoder { self.action_ids(&sample.last_rules) } else { Vec::new() };
        last_actions.truncate(self.config.l_max);
        ModelInput { nl, nl_surface, test_info, last_actions }
    }

    pub fn prepare(&self, sample: &EncodedSample, grammar: &Grammar) -> Result<PreparedSample, ModelError> {
        let input = self.input(sample);
        let bad = |e: String| ModelError::BadTarget { id: sample.sample_id.clone(), error: e };
        let mut tree = PartialTree::new(grammar);
        let mut steps = Vec::with_capacity(sample.target_rules.len());
        for action in &sample.target_rules.actions {
            let (f, kind, hole) = tree.frontier_state().ok_or_else(|| bad("trailing actions".into()))?;
            let path = path_ids(grammar, tree.root(), &f);
            let decision = match (action, hole) {
                (Action::ApplyRule(r), Hole::Node | Hole::ListSlot) => {
                    let legal = grammar.legal_rules(kind, hole);
                    if legal.len() == 1 {
                        Decision::Forced
                    } else {
                        Decision::Rule { legal, target: *r }
                    }
                }
                (Action::FillTerminal(tok), Hole::Terminal) => {
                    let legal = self.legal_terminals(kind);
                    let target = self.vocabs.terminals.get(tok).filter(|id| legal.contains(id));
                    let copy: Vec<usize> = input.nl_surface.iter().enumerate().filter(|(_, s)| *s == tok).map(|(i, _)| i).collect();
                    if target.is_none() && copy.is_empty() {
                        Decision::Unreachable
                    } else {
                        Decision::Terminal { legal, target, copy }
                    }
                }
                _ => return Err(bad(format!("action {action:?} does not fit a {hole:?} frontier"))),
            };
            steps.push(TargetStep { path, decision });
            tree.apply(action, grammar).map_err(|e| bad(e.to_string()))?;
        }
        Ok(PreparedSample { id: sample.sample_id.clone(), input, actions: self.action_ids(&sample.target_rules), steps })
    }

    /// Encodes description, test information and previous code on `t`.
    pub fn encode_on(&self, t: &mut Tape, input: &ModelInput) -> TapeMemories {
        let nl = self.nl.encode_text(t, &self.emb, &input.nl);
        let test = self.test_info.encode_text(t, &self.emb, &input.test_info);
        let code = self.code.encode_actions(t, &self.emb, &input.last_actions, test.map(|v| (v, input.test_info.valid.as_slice())));
        TapeMemories { nl, test, code }
    }

    /// Inference-mode encodings.
    pub fn encode(&self, input: &ModelInput) -> EncoderOutputs {
        let mut t = Tape::new(&self.store);
        let m = self.encode_on(&mut t, input);
        let d = self.config.d;
        let grab = |v: Option<Var>, valid: Vec<bool>| match v {
            Some(v) => HiddenSequence { values: t.value(v).clone(), valid },
            None => HiddenSequence::empty(d),
        };
        EncoderOutputs {
            nl: grab(m.nl, input.nl.valid.clone()),
            test_info: grab(m.test, input.test_info.valid.clone()),
            code: grab(m.code, vec![true; input.last_actions.len()]),
        }
    }

    /// AST Reader encoding of already-applied actions.
    pub fn encode_ast(&self, actions: &[usize]) -> HiddenSequence {
        let mut t = Tape::new(&self.store);
        match self.ast.encode_actions(&mut t, &self.emb, actions, None) {
            Some(v) => HiddenSequence { values: t.value(v).clone(), valid: vec![true; actions.len()] },
            None => HiddenSequence::empty(self.config.d),
        }
    }

    /// Summed negative log-likelihood of the target actions under teacher
    /// forcing, and the number of predicted steps.
    pub fn loss(&self, t: &mut Tape, sample: &PreparedSample) -> (Var, usize) {
        let mem = self.encode_on(t, &sample.input);
        let steps = sample.steps.len();
        let ast = if steps > 1 { self.ast.encode_actions(t, &self.emb, &sample.actions[..steps - 1], None) } else { None };
        let paths: Vec<&[(usize, usize)]> = sample.steps.iter().map(|s| s.path.as_slice()).collect();
        let memories = Memories {
            ast,
            nl: mem.nl.map(|v| (v, sample.input.nl.valid.clone())),
            test: mem.test.map(|v| (v, sample.input.test_info.valid.clone())),
            code: mem.code.map(|v| (v, vec![true; sample.input.last_actions.len()])),
        };
        let states = self.decoder.forward(t, &paths, &memories);
        let rows: Vec<usize> = sample
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.decision, Decision::Rule { .. } | Decision::Terminal { .. }))
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            let zero = t.constant(Mat::zeros((1, 1)));
            return (zero, 0);
        }
        let decisions: Vec<&Decision> = rows.iter().map(|&i| &sample.steps[i].decision).collect();
        let picked = t.gather(states, &rows);
        let nl = memories.nl.as_ref().map(|(v, valid)| (*v, valid.as_slice()));
        let p = self.decoder.target_probability(t, picked, nl, &decisions, &self.dims);
        let logp = t.ln(p);
        let total = t.sum_all(logp);
        (t.scale(total, -1.0), rows.len())
    }
}

/// Encoder outputs living on a tape.
pub struct TapeMemories {
    pub nl: Option<Var>,
    pub test: Option<Var>,
    pub code: Option<Var>,
}

pub fn path_ids(grammar: &Grammar, root: &cgt_core::grammar::AstNode, f: &cgt_core::grammar::FrontierRef) -> Vec<(usize, usize)> {
    tree_path(root, f)
        .map(|p| p.nodes.iter().map(|(k, i)| (grammar.kind_id(k).expect("kind from grammar"), *i)).collect())
        .unwrap_or_default()
}

/// Per-kind census of parameter names: `module -> block count`.
pub fn block_census(store: &ParamStore) -> BTreeMap<String, usize> {
    let mut seen: BTreeMap<String, std::collections::BTreeSet<usize>> = BTreeMap::new();
    for name in store.names() {
        let mut parts = name.split('.');
        if let (Some(module), Some(block)) = (parts.next(), parts.next()) {
            if let Ok(b) = block.parse::<usize>() {
                seen.entry(module.to_string()).or_default().insert(b);
            }
        }
    }
    seen.into_iter().map(|(k, v)| (k, v.len())).collect()
}
