use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{split_tokens, tokenize_capped, Record, TextError, TokenizedText, Vocab, S_MAX};
use crate::grammar::python::parse_to_ast;
use crate::grammar::{ast_to_rules, Action, AstNode, Grammar, RuleSequence};
use crate::harness::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSettings {
    pub word_min_freq: usize,
    pub terminal_min_freq: usize,
    pub s_max: usize,
}

impl Default for VocabSettings {
    fn default() -> Self {
        VocabSettings { word_min_freq: 2, terminal_min_freq: 1, s_max: S_MAX }
    }
}

/// Vocabularies shared by every sample of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabs {
    /// Words of descriptions and test information.
    pub words: Vocab,
    pub chars: Vocab,
    /// Terminal tokens the decoder can generate.
    pub terminals: Vocab,
    /// Terminal ids observed under each terminal kind.
    pub terminal_kinds: BTreeMap<String, Vec<usize>>,
    pub s_max: usize,
}

impl Vocabs {
    pub fn reindex(&mut self) {
        self.words.reindex();
        self.chars.reindex();
        self.terminals.reindex();
    }
}

/// Token ids and character ids of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedText {
    pub text: TokenizedText,
    pub ids: Vec<usize>,
    pub char_ids: Vec<Vec<usize>>,
}

impl EncodedText {
    pub fn new(text: &str, vocabs: &Vocabs) -> EncodedText {
        let text = tokenize_capped(text, vocabs.s_max);
        let ids = text.tokens.iter().map(|t| vocabs.words.id(t)).collect();
        let char_ids = text
            .chars
            .iter()
            .map(|cs| cs.iter().map(|c| vocabs.chars.id(&c.to_string())).collect())
            .collect();
        EncodedText { text, ids, char_ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub sample_id: String,
    pub nl: EncodedText,
    pub test_info: EncodedText,
    pub last_rules: RuleSequence,
    pub target_rules: RuleSequence,
    /// Target terminal token to the description positions holding it.
    pub copy_map: BTreeMap<String, Vec<usize>>,
}

impl EncodedSample {
    /// Adds feedback from a previous round.
    pub fn with_feedback(mut self, test_info: &str, last_rules: RuleSequence, vocabs: &Vocabs) -> EncodedSample {
        self.test_info = EncodedText::new(test_info, vocabs);
        self.last_rules = last_rules;
        self
    }

    /// Description positions whose surface token equals `token`.
    pub fn copy_positions(&self, token: &str) -> Vec<usize> {
        copy_positions(&self.nl.text, token)
    }
}

fn copy_positions(nl: &TokenizedText, token: &str) -> Vec<usize> {
    nl.surface.iter().enumerate().filter(|(_, s)| s.as_str() == token).map(|(i, _)| i).collect()
}

fn terminal_pairs(node: &AstNode, out: &mut Vec<(String, String)>) {
    if let Some(tok) = &node.token {
        out.push((node.kind.clone(), tok.clone()));
    }
    for c in &node.children {
        terminal_pairs(c, out);
    }
}

fn parse_reference(record: &Record, grammar: &Grammar) -> Result<AstNode, TextError> {
    parse_to_ast(&record.code, grammar)
        .map_err(|e| TextError::UnparseableReference { id: record.id.clone(), error: e.to_string() })
}

/// Builds word, character and terminal vocabularies from training records.
pub fn build_vocabs(records: &[Record], grammar: &Grammar, settings: VocabSettings) -> Result<Vocabs, TextError> {
    if records.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut word_streams: Vec<Vec<String>> = Vec::new();
    let mut terminal_pairs_all = Vec::new();
    for r in records {
        word_streams.push(tokenize_capped(&r.nl, settings.s_max).tokens);
        word_streams.push(split_tokens(&r.code).into_iter().map(|t| t.to_lowercase()).collect());
        word_streams.push(split_tokens(&r.test_unit.payload).into_iter().map(|t| t.to_lowercase()).collect());
        let ast = parse_reference(r, grammar)?;
        terminal_pairs(&ast, &mut terminal_pairs_all);
    }
    // Error names must never be unknown words.
    let categories: Vec<String> = Category::ALL.iter().map(|c| c.name().to_lowercase()).collect();
    for _ in 0..settings.word_min_freq {
        word_streams.push(categories.clone());
    }
    let words = Vocab::build(word_streams.iter().map(|s| s.iter().map(String::as_str)), settings.word_min_freq)?;
    let char_streams: Vec<Vec<String>> = word_streams
        .iter()
        .map(|s| s.iter().flat_map(|t| t.chars().take(settings.s_max)).map(|c| c.to_string()).collect())
        .collect();
    let chars = Vocab::build(char_streams.iter().map(|s| s.iter().map(String::as_str)), 1)?;
    let terminal_streams = [terminal_pairs_all.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>()];
    let terminals = match Vocab::build(terminal_streams.iter().map(|s| s.iter().copied()), settings.terminal_min_freq) {
        Ok(v) => v,
        Err(TextError::EmptyCorpus) => Vocab::build([["<none>"]], 1)?,
        Err(e) => return Err(e),
    };
    let mut terminal_kinds: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for kind in grammar.terminal_kinds() {
        terminal_kinds.insert(kind.clone(), Vec::new());
    }
    for (kind, tok) in &terminal_pairs_all {
        if let Some(id) = terminals.get(tok) {
            let ids = terminal_kinds.entry(kind.clone()).or_default();
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    for ids in terminal_kinds.values_mut() {
        ids.sort_unstable();
    }
    Ok(Vocabs { words, chars, terminals, terminal_kinds, s_max: settings.s_max })
}

/// Encodes a record for round one: description only, no feedback.
pub fn encode_sample(record: &Record, vocabs: &Vocabs, grammar: &Grammar) -> Result<EncodedSample, TextError> {
    let ast = parse_reference(record, grammar)?;
    let target_rules = ast_to_rules(&ast, grammar)
        .map_err(|e| TextError::UnparseableReference { id: record.id.clone(), error: e.to_string() })?;
    let nl = EncodedText::new(&record.nl, vocabs);
    let mut copy_map = BTreeMap::new();
    for a in &target_rules.actions {
        if let Action::FillTerminal(t) = a {
            let pos = copy_positions(&nl.text, t);
            if !pos.is_empty() {
                copy_map.insert(t.clone(), pos);
            }
        }
    }
    Ok(EncodedSample {
        sample_id: record.id.clone(),
        nl,
        test_info: EncodedText::default(),
        last_rules: RuleSequence::default(),
        target_rules,
        copy_map,
    })
}
