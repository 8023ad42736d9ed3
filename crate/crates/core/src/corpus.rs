//! Annotated intersectional corpus and identity-class lexicons.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, CharSpan};

pub const TERM_PLACEHOLDER: &str = "{term}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "intersectional-biased")]
    IntersectionalBiased,
    #[serde(rename = "neutral")]
    Neutral,
}

impl Label {
    pub fn flipped(self) -> Self {
        match self {
            Label::IntersectionalBiased => Label::Neutral,
            Label::Neutral => Label::IntersectionalBiased,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub dimensions: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<String>,
}

/// One intersectional bias axis: two target lexicons (X, Y) and two attribute
/// lexicons (A stereotypical, B anti-stereotypical).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityClass {
    pub id: String,
    pub name: String,
    pub targets_1: Vec<String>,
    pub targets_2: Vec<String>,
    pub attributes_1: Vec<String>,
    pub attributes_2: Vec<String>,
    pub attribute_templates: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconSide {
    Targets1,
    Targets2,
    Attributes1,
    Attributes2,
}

impl LexiconSide {
    pub const ALL: [LexiconSide; 4] = [
        LexiconSide::Targets1,
        LexiconSide::Targets2,
        LexiconSide::Attributes1,
        LexiconSide::Attributes2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LexiconSide::Targets1 => "targets_1",
            LexiconSide::Targets2 => "targets_2",
            LexiconSide::Attributes1 => "attributes_1",
            LexiconSide::Attributes2 => "attributes_2",
        }
    }
}

impl IdentityClass {
    pub fn lexicon(&self, side: LexiconSide) -> &[String] {
        match side {
            LexiconSide::Targets1 => &self.targets_1,
            LexiconSide::Targets2 => &self.targets_2,
            LexiconSide::Attributes1 => &self.attributes_1,
            LexiconSide::Attributes2 => &self.attributes_2,
        }
    }

    /// Every template with `term` substituted, in template order.
    pub fn instantiate(&self, term: &str) -> Vec<String> {
        self.attribute_templates
            .iter()
            .map(|t| t.replacen(TERM_PLACEHOLDER, term, 1))
            .collect()
    }

    fn violations(&self) -> Vec<Finding> {
        let owner = format!("class:{}", self.id);
        let mut out = Vec::new();
        for side in LexiconSide::ALL {
            if self.lexicon(side).iter().all(|t| t.trim().is_empty()) {
                out.push(Finding::new(
                    &owner,
                    Rule::LexiconNonEmpty,
                    format!("lexicon {} is empty", side.name()),
                ));
            }
        }
        let mut seen: HashMap<String, LexiconSide> = HashMap::new();
        for side in LexiconSide::ALL {
            for term in self.lexicon(side) {
                let key = term.trim().to_lowercase();
                match seen.get(&key) {
                    Some(prev) if *prev != side => out.push(Finding::new(
                        &owner,
                        Rule::LexiconDisjoint,
                        format!(
                            "term `{}` appears in both {} and {}",
                            term,
                            prev.name(),
                            side.name()
                        ),
                    )),
                    _ => {
                        seen.insert(key, side);
                    }
                }
            }
        }
        if self.attribute_templates.is_empty() {
            out.push(Finding::new(
                &owner,
                Rule::TemplatePlaceholder,
                "no attribute templates".into(),
            ));
        }
        for (i, t) in self.attribute_templates.iter().enumerate() {
            let n = t.matches(TERM_PLACEHOLDER).count();
            if n != 1 {
                out.push(Finding::new(
                    &owner,
                    Rule::TemplatePlaceholder,
                    format!("template {i} has {n} `{{term}}` placeholders, expected exactly 1"),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    #[serde(default)]
    pub records: Vec<SentenceRecord>,
    #[serde(default)]
    pub classes: Vec<IdentityClass>,
    #[serde(default)]
    pub source_meta: BTreeMap<String, serde_json::Value>,
}

/// A standalone identity-class file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassesFile {
    pub classes: Vec<IdentityClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    ClassResolves,
    LexiconDisjoint,
    LexiconNonEmpty,
    MinDimensions,
    NonEmptyText,
    TemplatePlaceholder,
    UniqueClassId,
    UniqueId,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::ClassResolves => "class-resolves",
            Rule::LexiconDisjoint => "lexicon-disjoint",
            Rule::LexiconNonEmpty => "lexicon-non-empty",
            Rule::MinDimensions => "min-dimensions",
            Rule::NonEmptyText => "non-empty-text",
            Rule::TemplatePlaceholder => "template-placeholder",
            Rule::UniqueClassId => "unique-class-id",
            Rule::UniqueId => "unique-id",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub record_id: String,
    pub rule: Rule,
    pub message: String,
}

impl Finding {
    fn new(record_id: &str, rule: Rule, message: String) -> Self {
        Self {
            record_id: record_id.to_string(),
            rule,
            message,
        }
    }
}

pub type ValidationReport = Vec<Finding>;

/// Check every corpus and class invariant. The report is sorted by record id,
/// then rule id, then message.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut out = Vec::new();

    let mut id_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &corpus.records {
        *id_counts.entry(r.id.as_str()).or_default() += 1;
    }
    for (id, n) in &id_counts {
        if *n > 1 {
            out.push(Finding::new(
                id,
                Rule::UniqueId,
                format!("id appears {n} times"),
            ));
        }
    }

    let class_ids: BTreeSet<&str> = corpus.classes.iter().map(|c| c.id.as_str()).collect();
    for r in &corpus.records {
        if r.text.trim().is_empty() {
            out.push(Finding::new(&r.id, Rule::NonEmptyText, "text is empty".into()));
        }
        if r.label == Label::IntersectionalBiased && r.dimensions.len() < 2 {
            out.push(Finding::new(
                &r.id,
                Rule::MinDimensions,
                format!(
                    "intersectional-biased record needs at least 2 dimensions, has {}",
                    r.dimensions.len()
                ),
            ));
        }
        if let Some(cid) = &r.class_id {
            if !class_ids.contains(cid.as_str()) {
                out.push(Finding::new(
                    &r.id,
                    Rule::ClassResolves,
                    format!("class_id `{cid}` does not match any class"),
                ));
            }
        }
    }

    out.extend(validate_classes(&corpus.classes));
    sort_report(&mut out);
    out
}

pub fn validate_classes(classes: &[IdentityClass]) -> ValidationReport {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for c in classes {
        if !seen.insert(c.id.as_str()) {
            out.push(Finding::new(
                &format!("class:{}", c.id),
                Rule::UniqueClassId,
                "class id is not unique".into(),
            ));
        }
        out.extend(c.violations());
    }
    sort_report(&mut out);
    out
}

fn sort_report(report: &mut ValidationReport) {
    report.sort_by(|a, b| {
        (a.record_id.as_str(), a.rule.id(), a.message.as_str()).cmp(&(
            b.record_id.as_str(),
            b.rule.id(),
            b.message.as_str(),
        ))
    });
    report.dedup();
}

fn report_to_error(report: &ValidationReport) -> Option<Error> {
    let first = report.first()?;
    Some(match first.rule {
        Rule::UniqueId => Error::DuplicateId(first.record_id.clone()),
        _ => Error::schema_at(
            first.record_id.clone(),
            format!("{} ({})", first.message, first.rule.id()),
        ),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema_at(path, e.into_inner().to_string())
    })
}

/// Parse a corpus document without enforcing invariants.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    parse_json(text)
}

/// Load and strictly validate a corpus file. Duplicate ids yield
/// [`Error::DuplicateId`]; any other invariant violation yields
/// [`Error::Schema`] located at the offending record.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let corpus = parse_corpus(&read(path.as_ref())?)?;
    let report = validate_corpus(&corpus);
    // duplicate ids take precedence over other findings
    if let Some(dup) = report.iter().find(|f| f.rule == Rule::UniqueId) {
        return Err(Error::DuplicateId(dup.record_id.clone()));
    }
    match report_to_error(&report) {
        Some(e) => Err(e),
        None => Ok(corpus),
    }
}

/// Load a standalone classes file (`{"classes": [...]}`).
pub fn load_classes(path: impl AsRef<Path>) -> Result<Vec<IdentityClass>> {
    let file: ClassesFile = parse_json(&read(path.as_ref())?)?;
    match report_to_error(&validate_classes(&file.classes)) {
        Some(e) => Err(e),
        None => Ok(file.classes),
    }
}

pub fn to_json(corpus: &Corpus) -> String {
    serde_json::to_string_pretty(corpus).expect("corpus serializes")
}

/// Label counts as (intersectional-biased, neutral).
pub fn label_counts(corpus: &Corpus) -> (usize, usize) {
    let biased = corpus
        .records
        .iter()
        .filter(|r| r.label == Label::IntersectionalBiased)
        .count();
    (biased, corpus.records.len() - biased)
}

/// Fraction of records labeled intersectional-biased.
pub fn compute_iibs(corpus: &Corpus) -> Result<f64> {
    if corpus.records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (biased, _) = label_counts(corpus);
    Ok(biased as f64 / corpus.records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub term: String,
    pub side: LexiconSide,
    pub span: CharSpan,
}

struct Candidate<'a> {
    term: &'a str,
    side: LexiconSide,
    tokens: Vec<String>,
}

/// Case-insensitive whole-word lexicon matches, scanned left to right with the
/// longest candidate winning at each position. Returned spans never overlap.
pub fn find_lexicon_mentions(text: &str, class: &IdentityClass) -> Vec<Mention> {
    let words = text::word_tokens(text);
    if words.is_empty() {
        return Vec::new();
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for side in LexiconSide::ALL {
        for term in class.lexicon(side) {
            let tokens: Vec<String> = text::word_tokens(term).into_iter().map(|t| t.lower).collect();
            if !tokens.is_empty() {
                candidates.push(Candidate { term, side, tokens });
            }
        }
    }
    // longest first; stable order keeps lexicon order among equals
    candidates.sort_by(|a, b| {
        b.tokens
            .len()
            .cmp(&a.tokens.len())
            .then(b.term.chars().count().cmp(&a.term.chars().count()))
    });

    let mut out = Vec::new();
    let mut i = 0;
    'scan: while i < words.len() {
        for cand in &candidates {
            let k = cand.tokens.len();
            if i + k > words.len() {
                continue;
            }
            if !words[i..i + k]
                .iter()
                .zip(&cand.tokens)
                .all(|(w, t)| &w.lower == t)
            {
                continue;
            }
            let span = CharSpan::new(words[i].span.start, words[i + k - 1].span.end);
            let surface = match text::slice(text, span) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if surface.to_lowercase() != cand.term.to_lowercase() {
                continue;
            }
            out.push(Mention {
                term: cand.term.to_string(),
                side: cand.side,
                span,
            });
            i += k;
            continue 'scan;
        }
        i += 1;
    }
    out
}
