//! Automatic pattern discovery: sentences mentioning both expressions of a
//! pair become slotted templates, ranked by masked-completion hits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::datamodel::{head_lemma, EntailmentInstance, VerbalExpression};
use crate::error::{LiicError, Result};
use crate::lmbackend::{LmBackend, MaskQuery};
use crate::pattern::{
    fill_segments, format_pattern_line, load_pattern_file, Origin, Pattern, Polarity, Segment, Slot,
};

/// Sentences longer than this many whitespace tokens are not mined.
pub const MAX_TEMPLATE_TOKENS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorpusSentence {
    pub text: String,
    pub doc_id: String,
    pub sent_index: u64,
}

/// Parses one corpus line: `doc_id\tsent_index\ttext` or bare text. Bare
/// lines get an empty `doc_id` and `fallback_index`.
pub fn parse_corpus_line(line: &str, fallback_index: u64) -> Option<CorpusSentence> {
    let line = line.trim_end_matches(['\r', '\n']);
    let mut parts = line.splitn(3, '\t');
    if let (Some(doc), Some(idx), Some(text)) = (parts.next(), parts.next(), parts.next()) {
        if let Ok(sent_index) = idx.trim().parse::<u64>() {
            return (!text.trim().is_empty()).then(|| CorpusSentence {
                text: text.to_string(),
                doc_id: doc.to_string(),
                sent_index,
            });
        }
    }
    (!line.trim().is_empty()).then(|| CorpusSentence {
        text: line.to_string(),
        doc_id: String::new(),
        sent_index: fallback_index,
    })
}

/// Streams a one-sentence-per-line corpus.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<impl Iterator<Item = Result<CorpusSentence>>> {
    let file = std::fs::File::open(path.as_ref())?;
    Ok(std::io::BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) => parse_corpus_line(&l, i as u64).map(Ok),
            Err(e) => Some(Err(e.into())),
        }))
}

/// Produces surface forms of an English verb lemma.
pub trait Inflector: Send + Sync {
    /// All forms including the lemma itself.
    fn forms(&self, lemma: &str) -> Vec<String>;
}

/// Suffix rules (s/es/ies, d/ed/ied, ing) plus an irregular table.
#[derive(Clone, Debug, Default)]
pub struct RuleInflector;

const IRREGULAR: &[(&str, &[&str])] = &[
    ("be", &["am", "is", "are", "was", "were", "been", "being"]),
    ("have", &["has", "had", "having"]),
    ("do", &["does", "did", "done", "doing"]),
    ("go", &["goes", "went", "gone", "going"]),
    ("beat", &["beaten"]),
    ("bear", &["bore", "born", "borne"]),
    ("become", &["became"]),
    ("begin", &["began", "begun"]),
    ("bind", &["bound"]),
    ("bite", &["bit", "bitten"]),
    ("blow", &["blew", "blown"]),
    ("break", &["broke", "broken"]),
    ("bring", &["brought"]),
    ("build", &["built"]),
    ("buy", &["bought"]),
    ("catch", &["caught"]),
    ("choose", &["chose", "chosen"]),
    ("come", &["came"]),
    ("cut", &["cut"]),
    ("deal", &["dealt"]),
    ("dig", &["dug"]),
    ("draw", &["drew", "drawn"]),
    ("drink", &["drank", "drunk"]),
    ("drive", &["drove", "driven"]),
    ("eat", &["ate", "eaten"]),
    ("fall", &["fell", "fallen"]),
    ("feed", &["fed"]),
    ("feel", &["felt"]),
    ("fight", &["fought"]),
    ("find", &["found"]),
    ("fly", &["flew", "flown"]),
    ("forbid", &["forbade", "forbidden"]),
    ("forget", &["forgot", "forgotten"]),
    ("forgive", &["forgave", "forgiven"]),
    ("freeze", &["froze", "frozen"]),
    ("get", &["got", "gotten"]),
    ("give", &["gave", "given"]),
    ("grow", &["grew", "grown"]),
    ("hang", &["hung"]),
    ("hear", &["heard"]),
    ("hide", &["hid", "hidden"]),
    ("hit", &["hit"]),
    ("hold", &["held"]),
    ("keep", &["kept"]),
    ("know", &["knew", "known"]),
    ("lay", &["laid"]),
    ("lead", &["led"]),
    ("leave", &["left"]),
    ("lend", &["lent"]),
    ("let", &["let"]),
    ("lie", &["lay", "lain", "lying"]),
    ("lose", &["lost"]),
    ("make", &["made"]),
    ("mean", &["meant"]),
    ("meet", &["met"]),
    ("overcome", &["overcame"]),
    ("pay", &["paid"]),
    ("put", &["put"]),
    ("read", &["read"]),
    ("ride", &["rode", "ridden"]),
    ("rise", &["rose", "risen"]),
    ("run", &["ran"]),
    ("say", &["said"]),
    ("see", &["saw", "seen"]),
    ("seek", &["sought"]),
    ("sell", &["sold"]),
    ("send", &["sent"]),
    ("set", &["set"]),
    ("shake", &["shook", "shaken"]),
    ("shoot", &["shot"]),
    ("shut", &["shut"]),
    ("sing", &["sang", "sung"]),
    ("sink", &["sank", "sunk"]),
    ("sit", &["sat"]),
    ("sleep", &["slept"]),
    ("speak", &["spoke", "spoken"]),
    ("spend", &["spent"]),
    ("split", &["split"]),
    ("spread", &["spread"]),
    ("stand", &["stood"]),
    ("steal", &["stole", "stolen"]),
    ("stick", &["stuck"]),
    ("strike", &["struck", "stricken"]),
    ("swim", &["swam", "swum"]),
    ("take", &["took", "taken"]),
    ("teach", &["taught"]),
    ("tear", &["tore", "torn"]),
    ("tell", &["told"]),
    ("think", &["thought"]),
    ("throw", &["threw", "thrown"]),
    ("understand", &["understood"]),
    ("undergo", &["underwent", "undergone"]),
    ("undertake", &["undertook", "undertaken"]),
    ("uphold", &["upheld"]),
    ("wake", &["woke", "woken"]),
    ("wear", &["wore", "worn"]),
    ("win", &["won"]),
    ("withdraw", &["withdrew", "withdrawn"]),
    ("write", &["wrote", "written"]),
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

impl Inflector for RuleInflector {
    fn forms(&self, lemma: &str) -> Vec<String> {
        let l = lemma.to_lowercase();
        let chars: Vec<char> = l.chars().collect();
        let mut out = vec![l.clone()];
        if let Some((_, irregular)) = IRREGULAR.iter().find(|(base, _)| *base == l) {
            out.extend(irregular.iter().map(|s| s.to_string()));
        }
        let n = chars.len();
        let last = chars.last().copied().unwrap_or(' ');
        let consonant_y = last == 'y' && n >= 2 && !is_vowel(chars[n - 2]);
        let stem_y = || l[..l.len() - 1].to_string();
        // third person singular
        if consonant_y {
            out.push(format!("{}ies", stem_y()));
        } else if ["s", "x", "z", "ch", "sh", "o"].iter().any(|s| l.ends_with(s)) {
            out.push(format!("{l}es"));
        } else {
            out.push(format!("{l}s"));
        }
        // past / participle
        if last == 'e' {
            out.push(format!("{l}d"));
        } else if consonant_y {
            out.push(format!("{}ied", stem_y()));
        } else {
            out.push(format!("{l}ed"));
        }
        // gerund
        if l.ends_with("ie") {
            out.push(format!("{}ying", &l[..l.len() - 2]));
        } else if last == 'e' && !l.ends_with("ee") && n > 2 {
            out.push(format!("{}ing", &l[..l.len() - 1]));
        } else {
            out.push(format!("{l}ing"));
        }
        // consonant doubling for short consonant-vowel-consonant stems
        if n >= 3
            && !is_vowel(last)
            && !matches!(last, 'w' | 'x' | 'y')
            && is_vowel(chars[n - 2])
            && !is_vowel(chars[n - 3])
        {
            out.push(format!("{l}{last}ed"));
            out.push(format!("{l}{last}ing"));
        }
        let mut seen = HashSet::new();
        out.retain(|f| seen.insert(f.clone()));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The expression's tokens as written, case-sensitive.
    Verbatim,
    /// Any inflected form of the head lemma, auxiliaries in any form, case-insensitive.
    LemmaInflected,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn bounded(body: String, first: Option<char>, last: Option<char>) -> String {
    let open = if first.is_some_and(is_word_char) { r"\b" } else { "" };
    let close = if last.is_some_and(is_word_char) { r"\b" } else { "" };
    format!("{open}(?:{body}){close}")
}

fn verbatim_regex(tokens: &[String]) -> String {
    let body = tokens.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join(r"\s+");
    let first = tokens.first().and_then(|t| t.chars().next());
    let last = tokens.last().and_then(|t| t.chars().last());
    bounded(body, first, last)
}

fn lemma_regex(lemma: &str, inflector: &dyn Inflector) -> String {
    const AUX: &[&str] = &["be", "have", "do"];
    let head = head_lemma(lemma);
    let parts: Vec<String> = lemma
        .split_whitespace()
        .map(|tok| {
            if tok == head || AUX.contains(&tok) {
                let mut forms = inflector.forms(tok);
                forms.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
                format!("(?:{})", forms.iter().map(|f| regex::escape(f)).collect::<Vec<_>>().join("|"))
            } else {
                regex::escape(tok)
            }
        })
        .collect();
    bounded(format!("(?i:{})", parts.join(r"\s+")), lemma.chars().next(), lemma.chars().last())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePattern {
    pub pattern: Pattern,
    pub sentence: CorpusSentence,
    pub pair_id: String,
    pub prem_span: Range<usize>,
    pub hypo_span: Range<usize>,
}

impl CandidatePattern {
    pub fn prem_filler(&self) -> &str {
        &self.sentence.text[self.prem_span.clone()]
    }

    pub fn hypo_filler(&self) -> &str {
        &self.sentence.text[self.hypo_span.clone()]
    }

    /// The template with the original fillers substituted back.
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        for seg in self.pattern.segments() {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(Slot::Prem) => out.push_str(self.prem_filler()),
                Segment::Slot(Slot::Hypo) => out.push_str(self.hypo_filler()),
                Segment::Slot(_) => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningStats {
    pub sentences: u64,
    pub pattern_candidates: u64,
    pub antipattern_candidates: u64,
    pub skipped_overlap: u64,
    pub skipped_braces: u64,
    pub skipped_long: u64,
    /// Expressions matched verbatim in lemma mode because they carry no lemma.
    pub lemma_fallbacks: u64,
}

/// Matches `sentences` against every pair. Positive pairs yield patterns,
/// negative pairs antipatterns. Within a sentence the first non-overlapping
/// (premise, hypothesis) occurrence pair in start-offset order is used.
pub fn find_candidates<I>(
    sentences: I,
    pairs: &[EntailmentInstance],
    mode: MatchMode,
    inflector: Option<&dyn Inflector>,
) -> Result<(Vec<CandidatePattern>, MiningStats)>
where
    I: IntoIterator<Item = Result<CorpusSentence>>,
{
    let mut stats = MiningStats::default();
    let inflector = match (mode, inflector) {
        (MatchMode::LemmaInflected, None) => {
            return Err(LiicError::Config("lemma matching needs an inflector".into()));
        }
        (_, inf) => inf,
    };
    let mut expr_ids: HashMap<String, usize> = HashMap::new();
    let mut expr_patterns: Vec<String> = Vec::new();
    let mut expr_id = |e: &VerbalExpression, stats: &mut MiningStats| {
        let re = match (mode, &e.lemma, inflector) {
            (MatchMode::LemmaInflected, Some(l), Some(inf)) => lemma_regex(l, inf),
            (MatchMode::LemmaInflected, _, _) => {
                stats.lemma_fallbacks += 1;
                verbatim_regex(&e.tokens)
            }
            (MatchMode::Verbatim, _, _) => verbatim_regex(&e.tokens),
        };
        *expr_ids.entry(re.clone()).or_insert_with(|| {
            expr_patterns.push(re);
            expr_patterns.len() - 1
        })
    };
    let pair_exprs: Vec<(usize, usize)> = pairs
        .iter()
        .map(|p| (expr_id(&p.prem, &mut stats), expr_id(&p.hypo, &mut stats)))
        .collect();
    let set = RegexSet::new(&expr_patterns).map_err(|e| LiicError::Config(e.to_string()))?;
    let regexes: Vec<Regex> = expr_patterns
        .iter()
        .map(|p| Regex::new(p).map_err(|e| LiicError::Config(e.to_string())))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for sentence in sentences {
        let sentence = sentence?;
        stats.sentences += 1;
        let present: HashSet<usize> = set.matches(&sentence.text).into_iter().collect();
        if present.is_empty() {
            continue;
        }
        let mut occurrences: BTreeMap<usize, Vec<Range<usize>>> = BTreeMap::new();
        let mut sentence_checked = false;
        for (pair, &(pe, he)) in pairs.iter().zip(&pair_exprs) {
            if !(present.contains(&pe) && present.contains(&he)) {
                continue;
            }
            if !sentence_checked {
                sentence_checked = true;
                if sentence.text.contains(['{', '}']) {
                    stats.skipped_braces += 1;
                    break;
                }
                if sentence.text.split_whitespace().count() > MAX_TEMPLATE_TOKENS {
                    stats.skipped_long += 1;
                    break;
                }
            }
            for id in [pe, he] {
                occurrences
                    .entry(id)
                    .or_insert_with(|| regexes[id].find_iter(&sentence.text).map(|m| m.range()).collect());
            }
            let chosen = occurrences[&pe].iter().find_map(|p| {
                occurrences[&he]
                    .iter()
                    .find(|h| p.end <= h.start || h.end <= p.start)
                    .map(|h| (p.clone(), h.clone()))
            });
            let Some((prem_span, hypo_span)) = chosen else {
                stats.skipped_overlap += 1;
                continue;
            };
            let template = slot_template(&sentence.text, &prem_span, &hypo_span);
            let polarity = if pair.label { Polarity::Pattern } else { Polarity::Antipattern };
            let pattern = Pattern::new(&template, polarity, Origin::Auto)?;
            match polarity {
                Polarity::Pattern => stats.pattern_candidates += 1,
                Polarity::Antipattern => stats.antipattern_candidates += 1,
            }
            out.push(CandidatePattern {
                pattern,
                sentence: sentence.clone(),
                pair_id: pair.id.clone(),
                prem_span,
                hypo_span,
            });
        }
    }
    log::info!(
        "mined {} pattern and {} antipattern candidates from {} sentences",
        stats.pattern_candidates,
        stats.antipattern_candidates,
        stats.sentences
    );
    Ok((out, stats))
}

fn slot_template(text: &str, prem: &Range<usize>, hypo: &Range<usize>) -> String {
    let (first, first_slot, second, second_slot) = if prem.start < hypo.start {
        (prem, "{PREM}", hypo, "{HYPO}")
    } else {
        (hypo, "{HYPO}", prem, "{PREM}")
    };
    format!(
        "{}{}{}{}{}",
        &text[..first.start],
        first_slot,
        &text[first.end..second.start],
        second_slot,
        &text[second.end..]
    )
}

/// Single-token stand-ins for one dev pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringPair {
    pub prem_repr: String,
    pub hypo_repr: String,
    pub label: bool,
}

impl From<&EntailmentInstance> for ScoringPair {
    fn from(inst: &EntailmentInstance) -> Self {
        ScoringPair {
            prem_repr: inst.prem.representative.clone(),
            hypo_repr: inst.hypo.representative.clone(),
            label: inst.label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPattern {
    pub candidate: CandidatePattern,
    pub points: u64,
    pub k_used: usize,
}

fn hyphen_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}][\p{L}\p{N}'’\-]*-$").unwrap())
}

fn hyphen_suffix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^-[\p{L}\p{N}][\p{L}\p{N}'’\-]*").unwrap())
}

/// Cloze text with `fill` in `filled` and the mask in the other main slot.
/// A masked slot attached to a word by a hyphen masks that whole word.
pub fn masked_query(pattern: &Pattern, filled: Slot, fill: &str, mask: &str) -> String {
    let mut segs: Vec<Segment> = pattern.segments().to_vec();
    if let Some(i) = segs
        .iter()
        .position(|s| matches!(s, Segment::Slot(x) if *x != filled && matches!(x, Slot::Prem | Slot::Hypo)))
    {
        if i > 0 {
            if let Segment::Text(t) = &mut segs[i - 1] {
                if let Some(m) = hyphen_prefix().find(t) {
                    t.truncate(m.start());
                }
            }
        }
        if let Some(Segment::Text(t)) = segs.get_mut(i + 1) {
            if let Some(m) = hyphen_suffix().find(t) {
                *t = t[m.end()..].to_string();
            }
        }
    }
    fill_segments(&segs, |slot| {
        if slot == filled {
            fill.to_string()
        } else if matches!(slot, Slot::Prem | Slot::Hypo) {
            mask.to_string()
        } else {
            String::new()
        }
    })
}

/// Strips subword markers and case so completions compare to representatives.
pub fn normalize_completion(token: &str) -> String {
    token.trim().trim_start_matches(['Ġ', '▁']).to_lowercase()
}

/// Points per candidate: one for each direction in which the held-out
/// representative appears among the top-k completions. Patterns are scored
/// on positive pairs, antipatterns on negative pairs. Candidates sharing a
/// template and polarity are ranked once, at the first occurrence. The
/// result is sorted by points, then `(doc_id, sent_index)`, then input order.
pub fn rank_candidates(
    backend: &dyn LmBackend,
    candidates: &[CandidatePattern],
    scoring_pairs: &[ScoringPair],
    k: usize,
) -> Result<Vec<RankedPattern>> {
    let mask = backend.mask_token().to_string();
    let mut seen = HashSet::new();
    let mut ranked = Vec::new();
    for cand in candidates {
        if !seen.insert((cand.pattern.template().to_string(), cand.pattern.polarity)) {
            continue;
        }
        let want_label = cand.pattern.polarity == Polarity::Pattern;
        let mut points = 0u64;
        for pair in scoring_pairs.iter().filter(|p| p.label == want_label) {
            for (filled, fill, target) in [
                (Slot::Prem, &pair.prem_repr, &pair.hypo_repr),
                (Slot::Hypo, &pair.hypo_repr, &pair.prem_repr),
            ] {
                let text = masked_query(&cand.pattern, filled, fill, &mask);
                let top = backend.topk_completions(&MaskQuery::new(text, k))?;
                let target = normalize_completion(target);
                if top.iter().any(|c| normalize_completion(&c.token) == target) {
                    points += 1;
                }
            }
        }
        ranked.push(RankedPattern {
            candidate: cand.clone(),
            points,
            k_used: k,
        });
    }
    ranked.sort_by(|a, b| {
        b.points.cmp(&a.points).then_with(|| {
            (&a.candidate.sentence.doc_id, a.candidate.sentence.sent_index)
                .cmp(&(&b.candidate.sentence.doc_id, b.candidate.sentence.sent_index))
        })
    });
    Ok(ranked)
}

/// The `n` best patterns and the `n` best antipatterns, in rank order.
pub fn select_top_n(ranked: &[RankedPattern], n: usize) -> Result<(Vec<Pattern>, Vec<Pattern>)> {
    let patterns: Vec<Pattern> = ranked.iter().map(|r| r.candidate.pattern.clone()).collect();
    top_n_patterns(&patterns, n)
}

/// [`select_top_n`] over a rank-ordered pattern list, e.g. a ranked file.
pub fn top_n_patterns(ranked: &[Pattern], n: usize) -> Result<(Vec<Pattern>, Vec<Pattern>)> {
    if n == 0 {
        return Err(LiicError::Contract("n must be >= 1".into()));
    }
    let take = |pol: Polarity| -> Vec<Pattern> {
        let picked: Vec<Pattern> = ranked.iter().filter(|p| p.polarity == pol).take(n).cloned().collect();
        if picked.len() < n {
            log::warn!("only {} {pol}s available for n = {n}", picked.len());
        }
        picked
    };
    Ok((take(Polarity::Pattern), take(Polarity::Antipattern)))
}

/// Ranked list in the pattern file format with a points column.
pub fn write_ranked(ranked: &[RankedPattern], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from("# polarity\torigin\ttemplate\tpoints\n");
    for r in ranked {
        text.push_str(&format_pattern_line(&r.candidate.pattern, Some(r.points)));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Curated patterns. Origins must be `auto_curated` or `auto_arg`; the latter
/// must use argument slots.
pub fn load_curated(path: impl AsRef<Path>) -> Result<Vec<Pattern>> {
    let path = path.as_ref();
    let entries = load_pattern_file(path)?;
    entries
        .into_iter()
        .map(|e| {
            let p = e.pattern;
            match p.origin {
                Origin::AutoCurated => Ok(p),
                Origin::AutoArg if p.uses_argument_slots() => Ok(p),
                Origin::AutoArg => Err(LiicError::Template(format!(
                    "{}: auto_arg pattern without argument slots: {:?}",
                    path.display(),
                    p.template()
                ))),
                other => Err(LiicError::Template(format!(
                    "{}: curated file contains origin {other}",
                    path.display()
                ))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Source;
    use crate::lmbackend::{CompletionRule, MockBackend, MockConfig};

    const CATCHERS: &str = "Catchers rule the field; they control the plays and tell everyone where to be.";

    fn inst(id: &str, prem: &str, hypo: &str, label: bool) -> EntailmentInstance {
        EntailmentInstance {
            id: id.into(),
            prem: VerbalExpression::from_text(prem, None, Source::LevyHolt).unwrap(),
            hypo: VerbalExpression::from_text(hypo, None, Source::LevyHolt).unwrap(),
            arg_left: "x".into(),
            arg_right: "y".into(),
            label,
            source: Source::LevyHolt,
            arg_candidates_left: None,
            arg_candidates_right: None,
        }
    }

    fn lemma_inst(id: &str, prem: (&str, &str), hypo: (&str, &str)) -> EntailmentInstance {
        EntailmentInstance {
            prem: VerbalExpression::from_text(prem.0, Some(prem.1), Source::Sherliic).unwrap(),
            hypo: VerbalExpression::from_text(hypo.0, Some(hypo.1), Source::Sherliic).unwrap(),
            source: Source::Sherliic,
            ..inst(id, "a", "b", true)
        }
    }

    fn sentences(lines: &[&str]) -> Vec<Result<CorpusSentence>> {
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| Ok(parse_corpus_line(l, i as u64).unwrap()))
            .collect()
    }

    #[test]
    fn corpus_line_formats() {
        let s = parse_corpus_line("doc7\t3\tHello there.", 0).unwrap();
        assert_eq!((s.doc_id.as_str(), s.sent_index, s.text.as_str()), ("doc7", 3, "Hello there."));
        let s = parse_corpus_line("Plain\tline with tab", 9).unwrap();
        assert_eq!((s.doc_id.as_str(), s.sent_index, s.text.as_str()), ("", 9, "Plain\tline with tab"));
        assert!(parse_corpus_line("   ", 0).is_none());
    }

    #[test]
    fn catchers_template() {
        let (c, stats) = find_candidates(
            sentences(&[CATCHERS]),
            &[inst("p1", "rule", "control", true)],
            MatchMode::Verbatim,
            None,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(
            c[0].pattern.template(),
            "Catchers {PREM} the field; they {HYPO} the plays and tell everyone where to be."
        );
        assert_eq!(c[0].reconstruct(), CATCHERS);
        assert_eq!(stats.pattern_candidates, 1);
    }

    #[test]
    fn no_cooccurrence_no_candidates() {
        let (c, _) = find_candidates(
            sentences(&[CATCHERS, "Nothing relevant here."]),
            &[inst("p", "rule", "govern", true)],
            MatchMode::Verbatim,
            None,
        )
        .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn negative_pairs_feed_antipatterns() {
        let (c, stats) = find_candidates(
            sentences(&[CATCHERS]),
            &[inst("n", "rule", "control", false)],
            MatchMode::Verbatim,
            None,
        )
        .unwrap();
        assert_eq!(c[0].pattern.polarity, Polarity::Antipattern);
        assert_eq!(stats.antipattern_candidates, 1);
    }

    #[test]
    fn verbatim_is_word_bounded_and_case_sensitive() {
        let pairs = [inst("p", "rule", "control", true)];
        let (c, _) = find_candidates(
            sentences(&["They overrule and control it.", "Rule them and control it."]),
            &pairs,
            MatchMode::Verbatim,
            None,
        )
        .unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn overlap_is_skipped_and_counted() {
        let (c, stats) = find_candidates(
            sentences(&["They won the cup."]),
            &[inst("p", "won", "won the", true)],
            MatchMode::Verbatim,
            None,
        )
        .unwrap();
        assert!(c.is_empty());
        assert_eq!(stats.skipped_overlap, 1);
    }

    #[test]
    fn lemma_mode_matches_repeated_inflected_forms() {
        let text = "In North America, where community-acquired pneumonia is common, doctors treat community-acquired pneumonia.";
        let pair = lemma_inst("s1", ("acquired", "acquire"), ("acquired", "acquire"));
        let inflector = RuleInflector;
        let (c, _) = find_candidates(sentences(&[text]), &[pair], MatchMode::LemmaInflected, Some(&inflector)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pattern.template().matches("community-{").count(), 2);
        assert_eq!(c[0].reconstruct(), text);
    }

    #[test]
    fn lemma_mode_needs_inflector() {
        let err = find_candidates(Vec::new(), &[], MatchMode::LemmaInflected, None).unwrap_err();
        assert!(matches!(err, LiicError::Config(_)));
    }

    #[test]
    fn lemma_mode_passive_auxiliary() {
        let pair = lemma_inst("s", ("created", "create"), ("was created in", "be create in"));
        let inflector = RuleInflector;
        let (c, _) = find_candidates(
            sentences(&["The territory was created in 1898 and Nunavut created it later."]),
            &[pair],
            MatchMode::LemmaInflected,
            Some(&inflector),
        )
        .unwrap();
        assert_eq!(
            c[0].pattern.template(),
            "The territory {HYPO} 1898 and Nunavut {PREM} it later."
        );
    }

    #[test]
    fn inflector_forms() {
        let f = RuleInflector.forms("carry");
        for w in ["carry", "carries", "carried", "carrying"] {
            assert!(f.contains(&w.to_string()), "{w}");
        }
        let f = RuleInflector.forms("stop");
        assert!(f.contains(&"stopped".to_string()) && f.contains(&"stopping".to_string()));
        let f = RuleInflector.forms("beat");
        assert!(f.contains(&"beaten".to_string()));
        let f = RuleInflector.forms("create");
        assert!(f.contains(&"created".to_string()) && f.contains(&"creating".to_string()));
    }

    fn catchers_backend(pinned: &[(&str, &str)]) -> MockBackend {
        MockBackend::new(MockConfig {
            vocab: vec!["own".into(), "play".into(), "watch".into()],
            completions: pinned
                .iter()
                .map(|(text, tok)| CompletionRule {
                    text: text.to_string(),
                    tokens: vec![tok.to_string()],
                })
                .collect(),
            ..MockConfig::default()
        })
    }

    fn catchers_candidate() -> Vec<CandidatePattern> {
        find_candidates(
            sentences(&[CATCHERS]),
            &[inst("p1", "rule", "control", true)],
            MatchMode::Verbatim,
            None,
        )
        .unwrap()
        .0
    }

    #[test]
    fn both_directions_hit_give_two_points() {
        let b = catchers_backend(&[
            ("Catchers rule the field; they <mask> the plays and tell everyone where to be.", "control"),
            ("Catchers <mask> the field; they control the plays and tell everyone where to be.", "rule"),
        ]);
        let pairs = [ScoringPair {
            prem_repr: "rule".into(),
            hypo_repr: "control".into(),
            label: true,
        }];
        let ranked = rank_candidates(&b, &catchers_candidate(), &pairs, 100).unwrap();
        assert_eq!(ranked[0].points, 2);
        let one_way = catchers_backend(&[(
            "Catchers rule the field; they <mask> the plays and tell everyone where to be.",
            "control",
        )]);
        assert_eq!(rank_candidates(&one_way, &catchers_candidate(), &pairs, 100).unwrap()[0].points, 1);
        assert_eq!(rank_candidates(&b, &catchers_candidate(), &[], 100).unwrap()[0].points, 0);
    }

    #[test]
    fn hyphen_attached_slot_masks_whole_word() {
        let p = Pattern::new("A community-{HYPO} case of {PREM} pneumonia.", Polarity::Pattern, Origin::Auto).unwrap();
        assert_eq!(masked_query(&p, Slot::Prem, "acquire", "<mask>"), "A <mask> case of acquire pneumonia.");
        assert_eq!(
            masked_query(&p, Slot::Hypo, "acquire", "<mask>"),
            "A community-acquire case of <mask> pneumonia."
        );
    }

    #[test]
    fn top_n_prefix_and_saturation() {
        let ranked: Vec<RankedPattern> = (0..6)
            .map(|i| RankedPattern {
                candidate: CandidatePattern {
                    pattern: Pattern::new(
                        &format!("{{PREM}} w{i} {{HYPO}}"),
                        if i % 3 == 2 { Polarity::Antipattern } else { Polarity::Pattern },
                        Origin::Auto,
                    )
                    .unwrap(),
                    sentence: CorpusSentence {
                        text: String::new(),
                        doc_id: String::new(),
                        sent_index: i,
                    },
                    pair_id: String::new(),
                    prem_span: 0..0,
                    hypo_span: 0..0,
                },
                points: 10 - i,
                k_used: 100,
            })
            .collect();
        let (p2, a2) = select_top_n(&ranked, 2).unwrap();
        let (p5, a5) = select_top_n(&ranked, 5).unwrap();
        assert_eq!(p2.len(), 2);
        assert_eq!(p5.len(), 4);
        assert_eq!(a5.len(), 2);
        assert_eq!(&p5[..2], &p2[..]);
        assert_eq!(&a5[..2], &a2[..]);
        assert!(select_top_n(&ranked, 0).is_err());
    }

    #[test]
    fn curated_files() {
        let dir = tempfile::tempdir().unwrap();
        let arg = dir.path().join("arg.tsv");
        std::fs::write(
            &arg,
            concat!(
                "pattern\tauto_arg\tThe original aim of their work was that \"{PARGL} {PREM} {PARGR}\" and that \"{HARGL} {HYPO} {HARGR} within 20 years\".\n",
                "pattern\tauto_arg\tCritic Roger Ebert stated that {PARGL} and co-star Ryan Phillippe \"{PREM} {PARGR}\" and that {HARGL} is \"effective as a bright girl who knows exactly how she {HYPO} {HARGR} as a tramp\".\n",
                "pattern\tauto_arg\tWell-known professional competitions in the past have included {HARGL} ({HYPO} {HARGR}), the Challenge Of Champions, the Canadian Professional Championships and {PARGL} ({PREM} {PARGR}).\n",
                "pattern\tauto_arg\t{HARGL} also had sharpshooter {HARGR}, whom they {HYPO} via free agency before the 1993–94 season, Myers, and centers {PARGR} (whom {PARGL} {PREM} via trade in 1994 from the Minnesota Timberwolves) and Bill Wennington.\n",
                "pattern\tauto_arg\tBecause the 6x86 was more efficient on an instructions-per-cycle basis than Intel's Pentium, and because {HARGL} sometimes {HYPO} {HARGR}, {PARGL} and competitor AMD co-{PREM} {PARGR} in an effort to compare its products more favorably with Intel's.\n",
            ),
        )
        .unwrap();
        let loaded = load_curated(&arg).unwrap();
        assert_eq!(loaded.len(), 5);
        assert!(loaded.iter().all(|p| p.origin == Origin::AutoArg && p.uses_argument_slots()));

        let empty = dir.path().join("empty.tsv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_curated(&empty).unwrap().is_empty());

        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "pattern\tauto_curated\tOnly {PREM} here.\n").unwrap();
        assert!(matches!(load_curated(&bad).unwrap_err(), LiicError::Parse { line: 1, .. }));

        let no_args = dir.path().join("noargs.tsv");
        std::fs::write(&no_args, "pattern\tauto_arg\t{PREM} then {HYPO}.\n").unwrap();
        assert!(load_curated(&no_args).is_err());
    }

    #[test]
    fn ranked_file_round_trip() {
        let b = catchers_backend(&[]);
        let ranked = rank_candidates(&b, &catchers_candidate(), &[], 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranked.tsv");
        write_ranked(&ranked, &path).unwrap();
        let back = load_pattern_file(&path).unwrap();
        assert_eq!(back[0].points, Some(0));
        assert_eq!(&back[0].pattern, &ranked[0].candidate.pattern);
    }
}
