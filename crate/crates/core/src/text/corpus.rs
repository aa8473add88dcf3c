use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextError;
use crate::harness::{TestKind, TestUnitSpec};

/// Split names and sizes of the card benchmark.
pub const HEARTHSTONE_SPLITS: [(&str, usize); 3] = [("train", 533), ("dev", 66), ("test", 66)];

const FIELD_MARKERS: [&str; 9] = [
    "NAME_END",
    "ATK_END",
    "DEF_END",
    "COST_END",
    "DUR_END",
    "TYPE_END",
    "PLAYER_CLS_END",
    "RACE_END",
    "RARITY_END",
];

/// Newline markers seen in flattened benchmark code files.
const NEWLINE_MARKERS: [&str; 2] = ["§", "<NEWLINE>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub nl: String,
    pub code: String,
    pub test_unit: TestUnitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub card: Option<CardFields>,
}

/// Attribute fields of a card description line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardFields {
    pub name: String,
    pub attack: String,
    pub defense: String,
    pub cost: String,
    pub durability: String,
    pub card_type: String,
    pub player_class: String,
    pub race: String,
    pub rarity: String,
    pub description: String,
}

impl CardFields {
    /// Parses `name NAME_END atk ATK_END ... rarity RARITY_END text`.
    pub fn parse(line: &str) -> Option<CardFields> {
        let mut rest = line;
        let mut values = Vec::with_capacity(10);
        for marker in FIELD_MARKERS {
            let at = rest.find(marker)?;
            values.push(rest[..at].trim().to_string());
            rest = &rest[at + marker.len()..];
        }
        values.push(rest.trim().to_string());
        let mut it = values.into_iter();
        let mut next = || it.next().unwrap_or_default();
        Some(CardFields {
            name: next(),
            attack: next(),
            defense: next(),
            cost: next(),
            durability: next(),
            card_type: next(),
            player_class: next(),
            race: next(),
            rarity: next(),
            description: next(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: String,
    pub records: Vec<Record>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn split_files(dir: &Path, split: &str) -> Option<(std::path::PathBuf, std::path::PathBuf)> {
    for stem in [format!("{split}_hs"), split.to_string()] {
        let input = dir.join(format!("{stem}.in"));
        let output = dir.join(format!("{stem}.out"));
        if input.is_file() && output.is_file() {
            return Some((input, output));
        }
    }
    None
}

fn detect_newline_marker(lines: &[String]) -> Option<&'static str> {
    NEWLINE_MARKERS
        .iter()
        .map(|m| (*m, lines.iter().filter(|l| l.contains(m)).count()))
        .filter(|(_, n)| *n > 0)
        .max_by_key(|(_, n)| *n)
        .map(|(m, _)| m)
}

fn read_lines(path: &Path) -> Result<Vec<String>, TextError> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

/// Loads the train/dev/test splits of the card benchmark.
///
/// Each split is a pair of aligned files `<split>_hs.in` (one card per line)
/// and `<split>_hs.out` (one flattened program per line).
pub fn load_hearthstone(dir: &Path, time_limit: f64, memory_limit: u64) -> Result<Vec<Corpus>, TextError> {
    let mut out = Vec::new();
    for (split, _) in HEARTHSTONE_SPLITS {
        let (input, output) = split_files(dir, split).ok_or_else(|| TextError::MissingSplit(split.to_string()))?;
        let descriptions = read_lines(&input)?;
        let codes = read_lines(&output)?;
        if descriptions.len() != codes.len() {
            return Err(TextError::CountMismatch {
                split: split.to_string(),
                descriptions: descriptions.len(),
                codes: codes.len(),
            });
        }
        let marker = detect_newline_marker(&codes);
        let records = descriptions
            .into_iter()
            .zip(codes)
            .enumerate()
            .map(|(i, (nl, code))| {
                let code = match marker {
                    Some(m) => code.replace(m, "\n"),
                    None => code,
                };
                let card = CardFields::parse(&nl);
                let payload = card.as_ref().map(|c| c.name.clone()).unwrap_or_default();
                Record {
                    id: format!("{split}-{i:04}"),
                    nl,
                    code,
                    test_unit: TestUnitSpec {
                        kind: TestKind::ExternalSimulator,
                        payload,
                        time_limit,
                        memory_limit,
                    },
                    card,
                }
            })
            .collect();
        out.push(Corpus { split: split.to_string(), records });
    }
    Ok(out)
}

/// Writes one JSON record per line.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), TextError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in &corpus.records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path, split: &str) -> Result<Corpus, TextError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line)
            .map_err(|e| TextError::BadRecord { line: i + 1, message: e.to_string() })?;
        records.push(r);
    }
    Ok(Corpus { split: split.to_string(), records })
}
