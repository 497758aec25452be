//! Patterns and antipatterns: slotted templates whose instantiation is scored
//! for felicity, combined into the margin score `s = m_pos − m_neg`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datamodel::{PairInput, Source, VerbalExpression};
use crate::error::{LiicError, Result};
use crate::lmbackend::{EncodeInput, Example, LmBackend, ModelParams};

/// The handcrafted pattern file shipped with the crate.
pub const MANUAL_PATTERNS: &str = include_str!("../data/manual_patterns.tsv");

pub const DEFAULT_CHUNK_SIZE: usize = 5;

/// First tokens after which negation inserts "not".
const NEGATABLE_AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "has", "have", "had", "can", "could", "will", "would", "may", "might", "must",
    "does", "do", "did",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Prem,
    Hypo,
    PremNeg,
    HypoNeg,
    PremArgLeft,
    PremArgRight,
    HypoArgLeft,
    HypoArgRight,
}

impl Slot {
    pub const ALL: [Slot; 8] = [
        Slot::Prem,
        Slot::Hypo,
        Slot::PremNeg,
        Slot::HypoNeg,
        Slot::PremArgLeft,
        Slot::PremArgRight,
        Slot::HypoArgLeft,
        Slot::HypoArgRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Prem => "PREM",
            Slot::Hypo => "HYPO",
            Slot::PremNeg => "PREM_NEG",
            Slot::HypoNeg => "HYPO_NEG",
            Slot::PremArgLeft => "PARGL",
            Slot::PremArgRight => "PARGR",
            Slot::HypoArgLeft => "HARGL",
            Slot::HypoArgRight => "HARGR",
        }
    }

    pub fn token(self) -> String {
        format!("{{{}}}", self.name())
    }

    fn from_name(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn is_argument(self) -> bool {
        matches!(
            self,
            Slot::PremArgLeft | Slot::PremArgRight | Slot::HypoArgLeft | Slot::HypoArgRight
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Text(String),
    Slot(Slot),
}

/// Splits a template into literal text and slots, rejecting unknown
/// `{UPPER_CASE}` names and repeated slots.
pub fn parse_template(template: &str) -> Result<Vec<Segment>> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut seen = HashSet::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot_name = after.find('}').map(|close| &after[..close]).filter(|name| {
            !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase() || c == '_')
        });
        match slot_name {
            Some(name) => {
                let slot = Slot::from_name(name)
                    .ok_or_else(|| LiicError::Template(format!("unknown slot {{{name}}} in {template:?}")))?;
                if !seen.insert(slot) {
                    return Err(LiicError::Template(format!("slot {{{name}}} appears twice in {template:?}")));
                }
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(slot));
                rest = &after[name.len() + 1..];
            }
            None => {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    Ok(segments)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pattern,
    Antipattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Manual,
    Auto,
    AutoCurated,
    AutoArg,
}

impl FromStr for Polarity {
    type Err = LiicError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pattern" => Ok(Polarity::Pattern),
            "antipattern" => Ok(Polarity::Antipattern),
            other => Err(LiicError::Template(format!("unknown polarity {other:?}"))),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Pattern => "pattern",
            Polarity::Antipattern => "antipattern",
        })
    }
}

impl FromStr for Origin {
    type Err = LiicError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Origin::Manual),
            "auto" => Ok(Origin::Auto),
            "auto_curated" => Ok(Origin::AutoCurated),
            "auto_arg" => Ok(Origin::AutoArg),
            other => Err(LiicError::Template(format!("unknown origin {other:?}"))),
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Manual => "manual",
            Origin::Auto => "auto",
            Origin::AutoCurated => "auto_curated",
            Origin::AutoArg => "auto_arg",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PatternRecord", into = "PatternRecord")]
pub struct Pattern {
    template: String,
    segments: Vec<Segment>,
    pub polarity: Polarity,
    pub origin: Origin,
}

#[derive(Clone, Serialize, Deserialize)]
struct PatternRecord {
    template: String,
    polarity: Polarity,
    origin: Origin,
}

impl TryFrom<PatternRecord> for Pattern {
    type Error = LiicError;
    fn try_from(r: PatternRecord) -> Result<Self> {
        Pattern::new(&r.template, r.polarity, r.origin)
    }
}

impl From<Pattern> for PatternRecord {
    fn from(p: Pattern) -> Self {
        PatternRecord {
            template: p.template,
            polarity: p.polarity,
            origin: p.origin,
        }
    }
}

impl Pattern {
    pub fn new(template: &str, polarity: Polarity, origin: Origin) -> Result<Self> {
        let segments = parse_template(template)?;
        let has = |s: Slot| segments.contains(&Segment::Slot(s));
        if !(has(Slot::Prem) || has(Slot::PremNeg)) {
            return Err(LiicError::Template(format!("template lacks a premise slot: {template:?}")));
        }
        if !(has(Slot::Hypo) || has(Slot::HypoNeg)) {
            return Err(LiicError::Template(format!("template lacks a hypothesis slot: {template:?}")));
        }
        if (has(Slot::Prem) && has(Slot::PremNeg)) || (has(Slot::Hypo) && has(Slot::HypoNeg)) {
            return Err(LiicError::Template(format!(
                "plain and negated slots of one side co-occur: {template:?}"
            )));
        }
        Ok(Pattern {
            template: template.to_string(),
            segments,
            polarity,
            origin,
        })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn uses_argument_slots(&self) -> bool {
        self.segments
            .iter()
            .any(|s| matches!(s, Segment::Slot(slot) if slot.is_argument()))
    }

    /// Fills every slot from `input`.
    pub fn instantiate(&self, input: &PairInput<'_>) -> String {
        fill_segments(&self.segments, |slot| match slot {
            Slot::Prem => input.prem.text(),
            Slot::Hypo => input.hypo.text(),
            Slot::PremNeg => negate(input.prem),
            Slot::HypoNeg => negate(input.hypo),
            Slot::PremArgLeft | Slot::HypoArgLeft => input.arg_left.trim().to_string(),
            Slot::PremArgRight | Slot::HypoArgRight => input.arg_right.trim().to_string(),
        })
    }
}

/// Parses `template` and fills it from `input`; unknown slots are errors.
pub fn instantiate(template: &str, input: &PairInput<'_>) -> Result<String> {
    let segments = parse_template(template)?;
    Ok(Pattern {
        template: template.to_string(),
        segments,
        polarity: Polarity::Pattern,
        origin: Origin::Manual,
    }
    .instantiate(input))
}

/// Concatenates segments; an empty fill also swallows one adjacent space so
/// that missing arguments leave no double spaces or space before punctuation.
pub(crate) fn fill_segments(segments: &[Segment], mut fill: impl FnMut(Slot) -> String) -> String {
    let mut out = String::new();
    let mut skip_leading_space = false;
    for (i, seg) in segments.iter().enumerate() {
        match seg {
            Segment::Text(t) => {
                let t = if skip_leading_space { t.strip_prefix(' ').unwrap_or(t) } else { t.as_str() };
                skip_leading_space = false;
                out.push_str(t);
            }
            Segment::Slot(slot) => {
                let value = fill(*slot);
                if !value.is_empty() {
                    out.push_str(&value);
                    continue;
                }
                let next_starts_tight = match segments.get(i + 1) {
                    Some(Segment::Text(t)) => t.starts_with(|c: char| c == ' ' || c.is_ascii_punctuation()),
                    Some(Segment::Slot(_)) => false,
                    None => true,
                };
                if out.ends_with(' ') && next_starts_tight {
                    out.pop();
                } else if out.is_empty() || out.ends_with(' ') {
                    skip_leading_space = true;
                }
            }
        }
    }
    out.trim().to_string()
}

/// Negated surface form: "not" after a leading auxiliary, otherwise
/// "does not" followed by the lemma (or the surface form without one).
pub fn negate(expr: &VerbalExpression) -> String {
    let first = expr.tokens[0].to_lowercase();
    if NEGATABLE_AUXILIARIES.contains(&first.as_str()) {
        let mut tokens = expr.tokens.clone();
        tokens.insert(1, "not".into());
        tokens.join(" ")
    } else {
        format!("does not {}", expr.lemma.clone().unwrap_or_else(|| expr.text()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Patterns and antipatterns (ΦΨ).
    PhiPsi,
    /// Patterns only; m_neg from the infelicity of patterns (Φ).
    PhiOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    antipatterns: Vec<Pattern>,
    pub mode: ScoringMode,
    /// Dataset whose dev pairs the patterns were mined from.
    pub mined_on: Option<Source>,
}

impl PatternSet {
    pub fn new(patterns: Vec<Pattern>, antipatterns: Vec<Pattern>, mode: ScoringMode) -> Result<Self> {
        if patterns.is_empty() {
            return Err(LiicError::Contract("a pattern set needs at least one pattern".into()));
        }
        if patterns.iter().any(|p| p.polarity != Polarity::Pattern)
            || antipatterns.iter().any(|p| p.polarity != Polarity::Antipattern)
        {
            return Err(LiicError::Contract("pattern polarity does not match its list".into()));
        }
        if mode == ScoringMode::PhiPsi && antipatterns.is_empty() {
            return Err(LiicError::Contract("ΦΨ scoring needs at least one antipattern".into()));
        }
        Ok(PatternSet {
            patterns,
            antipatterns,
            mode,
            mined_on: None,
        })
    }

    /// Splits a mixed list by polarity.
    pub fn from_patterns(all: Vec<Pattern>, mode: ScoringMode) -> Result<Self> {
        let (patterns, antipatterns) = all.into_iter().partition(|p| p.polarity == Polarity::Pattern);
        PatternSet::new(patterns, antipatterns, mode)
    }

    /// The shipped handcrafted set.
    pub fn manual(mode: ScoringMode) -> Result<Self> {
        let entries = parse_pattern_lines(MANUAL_PATTERNS, Path::new("manual_patterns.tsv"))?;
        PatternSet::from_patterns(entries.into_iter().map(|e| e.pattern).collect(), mode)
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    /// Antipatterns; ignored when scoring in [`ScoringMode::PhiOnly`].
    pub fn antipatterns(&self) -> &[Pattern] {
        &self.antipatterns
    }

    pub fn active_antipatterns(&self) -> &[Pattern] {
        match self.mode {
            ScoringMode::PhiPsi => &self.antipatterns,
            ScoringMode::PhiOnly => &[],
        }
    }

    pub fn with_mode(&self, mode: ScoringMode) -> Result<Self> {
        let mut set = PatternSet::new(self.patterns.clone(), self.antipatterns.clone(), mode)?;
        set.mined_on = self.mined_on;
        Ok(set)
    }

    pub fn with_mined_on(mut self, source: Source) -> Self {
        self.mined_on = Some(source);
        self
    }

    /// Stable digest of templates, polarities and mode.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(format!("{:?}\n", self.mode));
        for p in self.patterns.iter().chain(&self.antipatterns) {
            h.update(format!("{}\t{}\t{}\n", p.polarity, p.origin, p.template));
        }
        hex::encode(h.finalize())
    }
}

/// A slice of a pattern set used for one training pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternChunk {
    pub patterns: Vec<Pattern>,
    pub antipatterns: Vec<Pattern>,
}

/// Consecutive chunks of at most `chunk_size` patterns (and antipatterns).
/// Chunk `i` pairs the `i`-th pattern chunk with the `i`-th antipattern chunk.
pub fn chunked_training_view(set: &PatternSet, chunk_size: usize) -> Result<Vec<PatternChunk>> {
    if chunk_size == 0 {
        return Err(LiicError::Contract("chunk size must be >= 1".into()));
    }
    let pos: Vec<_> = set.patterns.chunks(chunk_size).collect();
    let neg: Vec<_> = set.active_antipatterns().chunks(chunk_size).collect();
    let n = pos.len().max(neg.len());
    Ok((0..n)
        .map(|i| PatternChunk {
            patterns: pos.get(i).map(|c| c.to_vec()).unwrap_or_default(),
            antipatterns: neg.get(i).map(|c| c.to_vec()).unwrap_or_default(),
        })
        .collect())
}

impl From<&PatternSet> for PatternChunk {
    fn from(set: &PatternSet) -> Self {
        PatternChunk {
            patterns: set.patterns.clone(),
            antipatterns: set.active_antipatterns().to_vec(),
        }
    }
}

impl PatternChunk {
    /// Weighted NLL terms whose sum is `L_Φ(x, y) + L_Ψ(x, 1 − y)` for this chunk.
    pub fn training_examples(&self, input: &PairInput<'_>, label: bool) -> Vec<Example> {
        let mut out = Vec::with_capacity(self.patterns.len() + self.antipatterns.len());
        for (group, target) in [(&self.patterns, label), (&self.antipatterns, !label)] {
            let w = 1.0 / group.len().max(1) as f64;
            out.extend(group.iter().map(|p| Example {
                input: EncodeInput::Single(p.instantiate(input)),
                target,
                weight: w,
            }));
        }
        out
    }
}

/// Result of scoring one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginScore {
    pub s: f64,
    pub m_pos: f64,
    pub m_neg: f64,
    /// Index into Φ achieving `m_pos` (lowest on ties).
    pub pos_argmax: usize,
    /// Index into Ψ (ΦΨ) or Φ (Φ-only) achieving `m_neg`.
    pub neg_argmax: usize,
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `m_pos = max P_fel(z=1|φ)`; `m_neg = max P_fel(z=1|ψ)` (ΦΨ) or
/// `max P_fel(z=0|φ)` (Φ-only); `s = m_pos − m_neg`.
pub fn margin_score(pattern_probs: &[f64], antipattern_probs: &[f64], mode: ScoringMode) -> Result<MarginScore> {
    if pattern_probs.is_empty() {
        return Err(LiicError::Contract("no pattern probabilities to score".into()));
    }
    let (pos_argmax, m_pos) = argmax(pattern_probs.iter().copied());
    let (neg_argmax, m_neg) = match mode {
        ScoringMode::PhiPsi => {
            if antipattern_probs.is_empty() {
                return Err(LiicError::Contract("ΦΨ scoring without antipattern probabilities".into()));
            }
            argmax(antipattern_probs.iter().copied())
        }
        ScoringMode::PhiOnly => argmax(pattern_probs.iter().map(|p| 1.0 - p)),
    };
    Ok(MarginScore {
        s: m_pos - m_neg,
        m_pos,
        m_neg,
        pos_argmax,
        neg_argmax,
    })
}

/// 1 iff `s > ϑ`.
pub fn decide_pat(s: f64, threshold: f64) -> bool {
    s > threshold
}

/// `L_Ω = −(1/|Ω|) Σ log P(z = gold)`, with gold probabilities clamped at ε.
pub fn omega_loss(gold_probs: &[f64]) -> f64 {
    if gold_probs.is_empty() {
        return 0.0;
    }
    let eps = crate::lmbackend::train::LOG_EPS;
    -gold_probs.iter().map(|p| p.max(eps).ln()).sum::<f64>() / gold_probs.len() as f64
}

pub struct PatternModel {
    pub backend: Arc<dyn LmBackend>,
    pub params: ModelParams,
    pub pattern_set: PatternSet,
    pub threshold: f64,
}

impl PatternModel {
    pub fn new(backend: Arc<dyn LmBackend>, params: ModelParams, pattern_set: PatternSet) -> Self {
        PatternModel {
            backend,
            params,
            pattern_set,
            threshold: 0.0,
        }
    }

    /// `P_fel(z = 1 | sentence)`.
    pub fn p_fel(&self, sentence: &str) -> Result<f64> {
        let probs = self.params.probs(self.backend.as_ref(), &[EncodeInput::single(sentence)])?;
        Ok(probs[0][1])
    }

    /// Felicity of every pattern and every active antipattern instantiation.
    pub fn felicity(&self, input: &PairInput<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let pats = self.pattern_set.patterns();
        let anti = self.pattern_set.active_antipatterns();
        let inputs: Vec<EncodeInput> = pats
            .iter()
            .chain(anti)
            .map(|p| EncodeInput::Single(p.instantiate(input)))
            .collect();
        let probs = self.params.probs(self.backend.as_ref(), &inputs)?;
        let p1: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let (pos, neg) = p1.split_at(pats.len());
        Ok((pos.to_vec(), neg.to_vec()))
    }

    pub fn score(&self, input: &PairInput<'_>) -> Result<MarginScore> {
        let (pos, neg) = self.felicity(input)?;
        margin_score(&pos, &neg, self.pattern_set.mode)
    }

    pub fn decide(&self, input: &PairInput<'_>, threshold: f64) -> Result<bool> {
        Ok(decide_pat(self.score(input)?.s, threshold))
    }

    /// `Σ L_Φ(x, y) + L_Ψ(x, 1 − y)` over the batch, evaluation mode.
    pub fn loss(&self, batch: &[(PairInput<'_>, bool)]) -> Result<f64> {
        let mut total = 0.0;
        for (input, y) in batch {
            let (pos, neg) = self.felicity(input)?;
            let gold = |p: f64, label: bool| if label { p } else { 1.0 - p };
            total += omega_loss(&pos.iter().map(|&p| gold(p, *y)).collect::<Vec<_>>());
            total += omega_loss(&neg.iter().map(|&p| gold(p, !*y)).collect::<Vec<_>>());
        }
        Ok(total)
    }
}

/// One line of a pattern file, with the optional ranking points column.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternEntry {
    pub pattern: Pattern,
    pub points: Option<u64>,
}

/// Parses `<polarity>\t<origin>\t<template>[\t<points>]` lines; `#` starts a comment line.
pub fn parse_pattern_lines(text: &str, path: &Path) -> Result<Vec<PatternEntry>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| LiicError::parse(path, idx + 1, m);
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
        }
        let polarity = Polarity::from_str(fields[0]).map_err(|e| err(e.to_string()))?;
        let origin = Origin::from_str(fields[1]).map_err(|e| err(e.to_string()))?;
        let pattern = Pattern::new(fields[2], polarity, origin).map_err(|e| err(e.to_string()))?;
        let points = match fields.get(3) {
            Some(p) => Some(p.trim().parse::<u64>().map_err(|e| err(format!("bad points column: {e}")))?),
            None => None,
        };
        out.push(PatternEntry { pattern, points });
    }
    Ok(out)
}

pub fn load_pattern_file(path: impl AsRef<Path>) -> Result<Vec<PatternEntry>> {
    let path = path.as_ref();
    parse_pattern_lines(&std::fs::read_to_string(path)?, path)
}

pub fn format_pattern_line(pattern: &Pattern, points: Option<u64>) -> String {
    let mut line = format!("{}\t{}\t{}", pattern.polarity, pattern.origin, pattern.template);
    if let Some(p) = points {
        line.push_str(&format!("\t{p}"));
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn expr(text: &str, lemma: Option<&str>) -> VerbalExpression {
        VerbalExpression::from_text(text, lemma, Source::LevyHolt).unwrap()
    }

    #[test]
    fn manual_file_has_expected_layout() {
        let set = PatternSet::manual(ScoringMode::PhiPsi).unwrap();
        assert_eq!(set.patterns().len(), 4);
        assert_eq!(set.antipatterns().len(), 2);
        assert!(set.antipatterns()[0].template().contains("let alone"));
        assert!(set.patterns().iter().all(|p| p.origin == Origin::Manual));
    }

    #[test]
    fn instantiate_because_pattern() {
        let prem = expr("was beaten by", None);
        let hypo = expr("fought", None);
        let input = PairInput {
            prem: &prem,
            hypo: &hypo,
            arg_left: "Pyrrhus",
            arg_right: "the romans",
        };
        let out = instantiate("{HARGL} {HYPO} {HARGR} because {PARGL} {PREM} {PARGR}.", &input).unwrap();
        assert_eq!(out, "Pyrrhus fought the romans because Pyrrhus was beaten by the romans.");
    }

    #[test]
    fn empty_arguments_render_expression_only() {
        let prem = expr("rule", None);
        let hypo = expr("control", None);
        let input = PairInput {
            prem: &prem,
            hypo: &hypo,
            arg_left: "",
            arg_right: "",
        };
        let out = instantiate("{PARGL} {PREM} {PARGR}, which means that {HARGL} {HYPO} {HARGR}.", &input).unwrap();
        assert_eq!(out, "rule, which means that control.");
    }

    #[test]
    fn negated_slots() {
        let prem = expr("is occupying", None);
        let hypo = expr("fought", Some("fight"));
        let input = PairInput {
            prem: &prem,
            hypo: &hypo,
            arg_left: "Germany",
            arg_right: "Côte d'Ivoire",
        };
        let out = instantiate("{PARGL} {PREM_NEG} {PARGR} because {HARGL} {HYPO_NEG} {HARGR}.", &input).unwrap();
        assert_eq!(
            out,
            "Germany is not occupying Côte d'Ivoire because Germany does not fight Côte d'Ivoire."
        );
        assert_eq!(negate(&expr("beat", None)), "does not beat");
    }

    #[test]
    fn unknown_or_invalid_templates() {
        assert!(matches!(parse_template("{PREM} {FOO}"), Err(LiicError::Template(m)) if m.contains("{FOO}")));
        assert!(Pattern::new("{PREM} only", Polarity::Pattern, Origin::Manual).is_err());
        assert!(Pattern::new("{PREM} {PREM} {HYPO}", Polarity::Pattern, Origin::Manual).is_err());
        assert!(Pattern::new("{PREM} {PREM_NEG} {HYPO}", Polarity::Pattern, Origin::Manual).is_err());
        // lowercase braces are literal text
        let p = Pattern::new("{x} {PREM} {HYPO}", Polarity::Pattern, Origin::Auto).unwrap();
        assert_eq!(p.segments()[0], Segment::Text("{x} ".into()));
    }

    #[test]
    fn margin_examples() {
        let s = margin_score(&[0.9, 0.4], &[0.2], ScoringMode::PhiPsi).unwrap();
        assert_abs_diff_eq!(s.s, 0.7, epsilon = 1e-12);
        let s = margin_score(&[0.5], &[], ScoringMode::PhiOnly).unwrap();
        assert_eq!((s.m_pos, s.m_neg, s.s), (0.5, 0.5, 0.0));
        let s = margin_score(&[0.8, 0.3], &[], ScoringMode::PhiOnly).unwrap();
        assert_abs_diff_eq!(s.m_neg, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.s, 0.1, epsilon = 1e-12);
        assert_eq!(s.neg_argmax, 1);
        let tie = margin_score(&[0.6, 0.6], &[0.1, 0.1], ScoringMode::PhiPsi).unwrap();
        assert_eq!((tie.pos_argmax, tie.neg_argmax), (0, 0));
        assert!(margin_score(&[0.6], &[], ScoringMode::PhiPsi).is_err());
    }

    #[test]
    fn decision_examples() {
        assert!(decide_pat(0.0, -0.0909));
        assert!(!decide_pat(0.25, 0.25));
        assert!(decide_pat(0.01, 0.0));
        assert!(!decide_pat(0.0, 0.0));
    }

    #[test]
    fn loss_examples() {
        let two = std::f64::consts::LN_2;
        assert_abs_diff_eq!(omega_loss(&[0.5, 0.5]) + omega_loss(&[0.5]), 2.0 * two, epsilon = 1e-12);
        assert_eq!(omega_loss(&[1.0, 1.0]), 0.0);
        assert_abs_diff_eq!(omega_loss(&[0.9, 0.6]), 0.308_093_069_711_908_5, epsilon = 1e-12);
        assert!(omega_loss(&[0.0]).is_finite());
    }

    #[test]
    fn chunking() {
        let pats: Vec<Pattern> = (0..15)
            .map(|i| Pattern::new(&format!("{{PREM}} w{i} {{HYPO}}"), Polarity::Pattern, Origin::Auto).unwrap())
            .collect();
        let set = PatternSet::new(pats.clone(), vec![], ScoringMode::PhiOnly).unwrap();
        let chunks = chunked_training_view(&set, 5).unwrap();
        assert_eq!(chunks.iter().map(|c| c.patterns.len()).collect::<Vec<_>>(), vec![5, 5, 5]);
        let set = PatternSet::new(pats[..5].to_vec(), vec![], ScoringMode::PhiOnly).unwrap();
        assert_eq!(chunked_training_view(&set, 5).unwrap().len(), 1);
        let set = PatternSet::new(pats[..7].to_vec(), vec![], ScoringMode::PhiOnly).unwrap();
        let sizes: Vec<_> = chunked_training_view(&set, 5).unwrap().iter().map(|c| c.patterns.len()).collect();
        assert_eq!(sizes, vec![5, 2]);
        assert!(chunked_training_view(&set, 0).is_err());
    }

    #[test]
    fn trained_mock_separates_sentence_families() {
        use crate::lmbackend::{train_step, Adam, AdamConfig, Example, LmBackend, MockBackend, MockConfig, ModelParams};
        use std::sync::Arc;
        let backend: Arc<dyn LmBackend> = Arc::new(MockBackend::new(MockConfig {
            dim: 8,
            seed: 2,
            ..MockConfig::default()
        }));
        let felicitous = ["the cat sat on the mat.", "a dog ran in the park.", "the bird sang at dawn."];
        let odd = ["colorless ideas sleep furiously.", "green thoughts argue loudly.", "purple numbers taste quietly."];
        let examples: Vec<Example> = felicitous
            .iter()
            .map(|t| (t, true))
            .chain(odd.iter().map(|t| (t, false)))
            .map(|(t, y)| Example {
                input: EncodeInput::single(*t),
                target: y,
                weight: 1.0,
            })
            .collect();
        let mut params = ModelParams::init(backend.as_ref(), 2);
        let mut adam = Adam::new(8, AdamConfig::default());
        for _ in 0..200 {
            train_step(backend.as_ref(), &mut params, &mut adam, &examples, 0.02, 0.0, None).unwrap();
        }
        let model = PatternModel::new(backend, params, PatternSet::manual(ScoringMode::PhiPsi).unwrap());
        assert!(felicitous.iter().all(|t| model.p_fel(t).unwrap() > 0.5));
        assert!(odd.iter().all(|t| model.p_fel(t).unwrap() < 0.5));
    }

    #[test]
    fn pattern_file_round_trip_and_errors() {
        let text = "# comment\npattern\tauto\tThey {PREM} and {HYPO}.\t7\nantipattern\tmanual\tNot {HYPO} though {PREM}.\n";
        let entries = parse_pattern_lines(text, Path::new("x")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].points, Some(7));
        assert_eq!(format_pattern_line(&entries[0].pattern, entries[0].points), text.lines().nth(1).unwrap());
        let bad = "pattern\tauto\tno slots here\n";
        match parse_pattern_lines(bad, Path::new("x")).unwrap_err() {
            LiicError::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn margin_properties(
            pos in proptest::collection::vec(0.0f64..=1.0, 1..6),
            neg in proptest::collection::vec(0.0f64..=1.0, 1..6),
            extra in 0.0f64..=1.0,
            theta in -1.0f64..=1.0,
        ) {
            for mode in [ScoringMode::PhiPsi, ScoringMode::PhiOnly] {
                let m = margin_score(&pos, &neg, mode).unwrap();
                proptest::prop_assert!((-1.0..=1.0).contains(&m.s));
                proptest::prop_assert_eq!(decide_pat(m.s, theta), m.m_pos > m.m_neg + theta);
            }
            let base = margin_score(&pos, &neg, ScoringMode::PhiPsi).unwrap();
            let mut more_pos = pos.clone();
            more_pos.push(extra);
            proptest::prop_assert!(margin_score(&more_pos, &neg, ScoringMode::PhiPsi).unwrap().m_pos >= base.m_pos);
            let mut more_neg = neg.clone();
            more_neg.push(extra);
            proptest::prop_assert!(margin_score(&pos, &more_neg, ScoringMode::PhiPsi).unwrap().m_neg >= base.m_neg);
            if pos.len() == 1 {
                let single = margin_score(&pos, &[], ScoringMode::PhiOnly).unwrap();
                proptest::prop_assert!((single.s - (2.0 * pos[0] - 1.0)).abs() <= 1e-15);
            }
        }
    }
}
