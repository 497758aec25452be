//! Dataset schemas, JSONL ingestion, the dev₁ → train/dev₂ split, and
//! argument instantiation.
//!
//! Both benchmarks are consumed through one normalized JSONL schema, one
//! object per line:
//!
//! ```text
//! {"id": "...", "prem": {"tokens": ["is", "occupying"], "lemma": "occupy"},
//!  "hypo": {...}, "arg_left": "Germany", "arg_right": "Côte d'Ivoire",
//!  "label": 1, "source": "sherliic",
//!  "arg_candidates_left": ["Germany", "Syria", "USA"], "arg_candidates_right": [...]}
//! ```
//!
//! The two `arg_candidates_*` lists are optional. When a SherLIiC record carries
//! them, the first candidate of each side becomes the concrete argument.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LiicError, Result};

/// Auxiliaries and copulas that never act as the head of a predicate lemma.
const LEMMA_AUXILIARIES: &[&str] = &["be", "have", "do", "will", "would", "can", "could", "may", "might", "must", "shall", "should"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "levyholt")]
    LevyHolt,
    #[serde(rename = "sherliic")]
    Sherliic,
}

impl FromStr for Source {
    type Err = LiicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "levyholt" => Ok(Source::LevyHolt),
            "sherliic" => Ok(Source::Sherliic),
            other => Err(LiicError::Config(format!(
                "unknown source tag {other:?} (expected \"levyholt\" or \"sherliic\")"
            ))),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::LevyHolt => "levyholt",
            Source::Sherliic => "sherliic",
        })
    }
}

/// The verbal expression in which premise and hypothesis differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerbalExpression {
    pub tokens: Vec<String>,
    pub lemma: Option<String>,
    /// Single token standing in for the whole expression when querying a
    /// masked LM: the last token for Levy/Holt, the head of the predicate
    /// lemma for SherLIiC.
    pub representative: String,
}

impl VerbalExpression {
    pub fn new(tokens: Vec<String>, lemma: Option<String>, source: Source) -> Result<Self> {
        if tokens.is_empty() || tokens.iter().any(|t| t.trim().is_empty()) {
            return Err(LiicError::Contract(
                "verbal expression needs at least one non-empty token".into(),
            ));
        }
        let lemma = match lemma {
            Some(l) => {
                let l = l.trim().to_lowercase();
                if l.is_empty() {
                    return Err(LiicError::Contract("lemma present but empty".into()));
                }
                Some(l)
            }
            None => None,
        };
        let representative = match (source, &lemma) {
            (Source::Sherliic, Some(l)) => head_lemma(l).to_string(),
            _ => tokens.last().cloned().unwrap_or_default(),
        };
        Ok(VerbalExpression {
            tokens,
            lemma,
            representative,
        })
    }

    /// Convenience constructor splitting `text` on whitespace.
    pub fn from_text(text: &str, lemma: Option<&str>, source: Source) -> Result<Self> {
        Self::new(
            text.split_whitespace().map(str::to_string).collect(),
            lemma.map(str::to_string),
            source,
        )
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Head of the lemma (first non-auxiliary lemma token), if a lemma is known.
    pub fn head_lemma(&self) -> Option<&str> {
        self.lemma.as_deref().map(head_lemma)
    }
}

/// First token of a (possibly multi-word) lemma that is not an auxiliary;
/// the whole first token if every token is an auxiliary.
pub fn head_lemma(lemma: &str) -> &str {
    let mut tokens = lemma.split_whitespace();
    let first = tokens.clone().next().unwrap_or(lemma);
    tokens
        .find(|t| !LEMMA_AUXILIARIES.contains(t))
        .unwrap_or(first)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntailmentInstance {
    pub id: String,
    pub prem: VerbalExpression,
    pub hypo: VerbalExpression,
    pub arg_left: String,
    pub arg_right: String,
    pub label: bool,
    pub source: Source,
    pub arg_candidates_left: Option<Vec<String>>,
    pub arg_candidates_right: Option<Vec<String>>,
}

/// The label-free part of an instance; everything a classifier may look at.
#[derive(Clone, Copy, Debug)]
pub struct PairInput<'a> {
    pub prem: &'a VerbalExpression,
    pub hypo: &'a VerbalExpression,
    pub arg_left: &'a str,
    pub arg_right: &'a str,
}

impl<'a> PairInput<'a> {
    pub fn premise_sentence(&self) -> String {
        render_sentence(self.prem, self.arg_left, self.arg_right)
    }

    pub fn hypothesis_sentence(&self) -> String {
        render_sentence(self.hypo, self.arg_left, self.arg_right)
    }
}

impl EntailmentInstance {
    pub fn input(&self) -> PairInput<'_> {
        PairInput {
            prem: &self.prem,
            hypo: &self.hypo,
            arg_left: &self.arg_left,
            arg_right: &self.arg_right,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(LiicError::InvalidInstance {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        if self.prem.tokens == self.hypo.tokens {
            return fail("premise and hypothesis expressions are identical");
        }
        if self.arg_left.trim().is_empty() || self.arg_right.trim().is_empty() {
            return fail("both arguments must be non-empty");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev2,
    Dev1,
    Test,
}

impl FromStr for SplitName {
    type Err = LiicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev2" => Ok(SplitName::Dev2),
            "dev1" | "dev" => Ok(SplitName::Dev1),
            "test" => Ok(SplitName::Test),
            other => Err(LiicError::Config(format!("unknown split name {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataSplit {
    pub name: SplitName,
    pub instances: Vec<EntailmentInstance>,
}

impl DataSplit {
    pub fn new(name: SplitName, instances: Vec<EntailmentInstance>) -> Self {
        DataSplit { name, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// Writes the split in the JSONL schema, one record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, &InstanceRecord::from(inst))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// SHA-256 over the serialized split; identifies the data a run used.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

#[derive(Serialize, Deserialize)]
struct ExprRecord {
    tokens: Vec<String>,
    #[serde(default)]
    lemma: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    prem: ExprRecord,
    hypo: ExprRecord,
    #[serde(default)]
    arg_left: Option<String>,
    #[serde(default)]
    arg_right: Option<String>,
    label: u8,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arg_candidates_left: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arg_candidates_right: Option<Vec<String>>,
}

impl From<&EntailmentInstance> for InstanceRecord {
    fn from(inst: &EntailmentInstance) -> Self {
        let expr = |e: &VerbalExpression| ExprRecord {
            tokens: e.tokens.clone(),
            lemma: e.lemma.clone(),
        };
        InstanceRecord {
            id: inst.id.clone(),
            prem: expr(&inst.prem),
            hypo: expr(&inst.hypo),
            arg_left: Some(inst.arg_left.clone()),
            arg_right: Some(inst.arg_right.clone()),
            label: u8::from(inst.label),
            source: inst.source.to_string(),
            arg_candidates_left: inst.arg_candidates_left.clone(),
            arg_candidates_right: inst.arg_candidates_right.clone(),
        }
    }
}

fn pick_argument(
    explicit: Option<String>,
    candidates: &Option<Vec<String>>,
    source: Source,
) -> Option<String> {
    let first = candidates.as_ref().and_then(|c| c.first()).cloned();
    match source {
        // SherLIiC lists three instantiations per argument; the first one is used.
        Source::Sherliic => first.or(explicit),
        Source::LevyHolt => explicit.or(first),
    }
}

fn parse_record(line: &str, expected: Source) -> std::result::Result<EntailmentInstance, String> {
    let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let source = Source::from_str(&rec.source).map_err(|e| e.to_string())?;
    if source != expected {
        return Err(format!("record source {source} does not match requested source {expected}"));
    }
    let label = match rec.label {
        0 => false,
        1 => true,
        other => return Err(format!("label must be 0 or 1, got {other}")),
    };
    let prem = VerbalExpression::new(rec.prem.tokens, rec.prem.lemma, source).map_err(|e| e.to_string())?;
    let hypo = VerbalExpression::new(rec.hypo.tokens, rec.hypo.lemma, source).map_err(|e| e.to_string())?;
    let arg_left = pick_argument(rec.arg_left, &rec.arg_candidates_left, source).unwrap_or_default();
    let arg_right = pick_argument(rec.arg_right, &rec.arg_candidates_right, source).unwrap_or_default();
    let inst = EntailmentInstance {
        id: rec.id,
        prem,
        hypo,
        arg_left,
        arg_right,
        label,
        source,
        arg_candidates_left: rec.arg_candidates_left,
        arg_candidates_right: rec.arg_candidates_right,
    };
    inst.validate().map_err(|e| e.to_string())?;
    Ok(inst)
}

/// Reads a JSONL split. Instances keep file order; blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>, source: Source, name: SplitName) -> Result<DataSplit> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_record(&line, source).map_err(|m| LiicError::parse(path, lineno, m))?;
        if !seen.insert(inst.id.clone()) {
            return Err(LiicError::parse(path, lineno, format!("duplicate id {:?}", inst.id)));
        }
        instances.push(inst);
    }
    Ok(DataSplit { name, instances })
}

/// Number of dev₁ instances that go to the training portion.
///
/// `⌊0.8·(n−1)⌋` reproduces both published cuts (5,486 → 4,388 and
/// 998 → 797); plain rounding of `0.8·n` does not.
pub fn train_portion(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    // integer form of floor(0.8 * (n - 1)) avoids float rounding at exact multiples
    (4 * (n - 1)) / 5
}

/// Splits dev₁ into train and dev₂ after a seeded shuffle. Both parts keep
/// the original file order of their members.
pub fn split_dev1(dev1: &DataSplit, seed: u64) -> Result<(DataSplit, DataSplit)> {
    if dev1.is_empty() {
        return Err(LiicError::Contract("cannot split an empty dev1".into()));
    }
    let n = dev1.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..train_portion(n)] {
        in_train[i] = true;
    }
    let (mut train, mut dev2) = (Vec::new(), Vec::new());
    for (inst, is_train) in dev1.instances.iter().zip(in_train) {
        if is_train {
            train.push(inst.clone());
        } else {
            dev2.push(inst.clone());
        }
    }
    Ok((
        DataSplit::new(SplitName::Train, train),
        DataSplit::new(SplitName::Dev2, dev2),
    ))
}

/// `arg_left expr arg_right` with single spaces; empty arguments are dropped.
pub fn render_sentence(expr: &VerbalExpression, arg_left: &str, arg_right: &str) -> String {
    let expr_text = expr.text();
    [arg_left.trim(), expr_text.as_str(), arg_right.trim()]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}
