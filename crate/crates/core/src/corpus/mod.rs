//! Typed data model for articles, ICO prompts, annotations and splits.
//!
//! All character offsets are Unicode scalar (`char`) offsets into
//! [`Article::text`], half-open, matching the upstream release.

mod canonical;
mod stats;
pub mod upstream;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use canonical::{load_canonical, save_canonical, ANNOTATIONS_FILE, ARTICLES_FILE, PROMPTS_FILE, SPLITS_FILE};
pub use stats::{
    corpus_stats, corpus_stats_with, normalize_ico, render_stats_table, verification_accuracy, CorpusStats,
    SplitStats, VerificationAccuracy,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub title: String,
    pub text: String,
    /// End of the abstract, `text[0, abstract_end)`. Zero means the boundary
    /// is unknown for this article.
    pub abstract_end: usize,
}

impl Article {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text between two char offsets. Offsets past the end are clamped.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        char_slice(&self.text, start, end)
    }

    pub fn has_abstract_boundary(&self) -> bool {
        self.abstract_end > 0
    }
}

pub(crate) fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let Some(b_start) = indices.nth(start) else {
        return "";
    };
    let b_end = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        b_start
    };
    &text[b_start..b_end]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcoPrompt {
    pub prompt_id: String,
    pub article_id: String,
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub char_start: usize,
    pub char_end: usize,
}

impl EvidenceSpan {
    pub fn new(char_start: usize, char_end: usize) -> Self {
        Self { char_start, char_end }
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.char_start < end && start < self.char_end
    }
}

/// Direction of a reported finding: intervention vs comparator on the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Significance {
    Decreased,
    NoDifference,
    Increased,
}

impl Significance {
    pub const ALL: [Significance; 3] = [
        Significance::Decreased,
        Significance::NoDifference,
        Significance::Increased,
    ];

    /// Position in the fixed class order (decreased, no difference, increased).
    pub fn index(self) -> usize {
        match self {
            Significance::Decreased => 0,
            Significance::NoDifference => 1,
            Significance::Increased => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> i8 {
        self.index() as i8 - 1
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Significance::Decreased),
            0 => Some(Significance::NoDifference),
            1 => Some(Significance::Increased),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Significance::Decreased => "Sig-",
            Significance::NoDifference => "Sig~",
            Significance::Increased => "Sig+",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Significance::Decreased => "significantly decreased",
            Significance::NoDifference => "no significant difference",
            Significance::Increased => "significantly increased",
        })
    }
}

impl Serialize for Significance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for Significance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let c = i64::deserialize(deserializer)?;
        Significance::from_code(c)
            .ok_or_else(|| serde::de::Error::custom(format!("label code {c} not in {{-1, 0, 1}}")))
    }
}

/// An annotator's answer for a prompt. Serialized as `-1`, `0`, `1`, or `"invalid"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Valid(Significance),
    Invalid,
}

impl Label {
    pub fn significance(self) -> Option<Significance> {
        match self {
            Label::Valid(s) => Some(s),
            Label::Invalid => None,
        }
    }

    pub fn is_invalid(self) -> bool {
        matches!(self, Label::Invalid)
    }
}

impl From<Significance> for Label {
    fn from(s: Significance) -> Self {
        Label::Valid(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Valid(s) => serializer.serialize_i8(s.code()),
            Label::Invalid => serializer.serialize_str("invalid"),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Code(i64),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Code(c) => Significance::from_code(c)
                .map(Label::Valid)
                .ok_or_else(|| serde::de::Error::custom(format!("label code {c} not in {{-1, 0, 1}}"))),
            Raw::Name(n) if n.eq_ignore_ascii_case("invalid") => Ok(Label::Invalid),
            Raw::Name(n) => Err(serde::de::Error::custom(format!("unknown label {n:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generation,
    Annotation,
    Verification,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generation => "generation",
            Stage::Annotation => "annotation",
            Stage::Verification => "verification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub prompt_id: String,
    pub label: Label,
    pub spans: Vec<EvidenceSpan>,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "validation" | "val" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// A loaded, validated corpus. Immutable once constructed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub articles: BTreeMap<String, Article>,
    pub prompts: BTreeMap<String, IcoPrompt>,
    pub annotations: BTreeMap<String, Vec<Annotation>>,
    pub split: BTreeMap<String, Split>,
}

impl Corpus {
    /// Assemble a corpus from its parts and check every invariant.
    pub fn from_parts(
        articles: impl IntoIterator<Item = Article>,
        prompts: impl IntoIterator<Item = IcoPrompt>,
        annotations: impl IntoIterator<Item = Annotation>,
        split: impl IntoIterator<Item = (String, Split)>,
    ) -> Result<Self> {
        let mut corpus = Corpus::default();
        for a in articles {
            if corpus.articles.contains_key(&a.article_id) {
                return Err(Error::InvalidCorpus(format!("duplicate article_id {}", a.article_id)));
            }
            corpus.articles.insert(a.article_id.clone(), a);
        }
        for p in prompts {
            if corpus.prompts.contains_key(&p.prompt_id) {
                return Err(Error::InvalidCorpus(format!("duplicate prompt_id {}", p.prompt_id)));
            }
            corpus.prompts.insert(p.prompt_id.clone(), p);
        }
        for a in annotations {
            corpus.annotations.entry(a.prompt_id.clone()).or_default().push(a);
        }
        for (article_id, s) in split {
            if corpus.split.insert(article_id.clone(), s).is_some() {
                return Err(Error::InvalidCorpus(format!("article {article_id} assigned to two splits")));
            }
        }
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        for (id, article) in &self.articles {
            if id != &article.article_id {
                return Err(Error::InvalidCorpus(format!("article key {id} != id {}", article.article_id)));
            }
            check_article(article).map_err(Error::InvalidCorpus)?;
            if !self.split.contains_key(id) {
                return Err(Error::InvalidCorpus(format!("article {id} has no split assignment")));
            }
        }
        for article_id in self.split.keys() {
            if !self.articles.contains_key(article_id) {
                return Err(Error::DanglingReference(format!("split entry for unknown article {article_id}")));
            }
        }
        for (id, prompt) in &self.prompts {
            if id != &prompt.prompt_id {
                return Err(Error::InvalidCorpus(format!("prompt key {id} != id {}", prompt.prompt_id)));
            }
            check_prompt(prompt).map_err(Error::InvalidCorpus)?;
            if !self.articles.contains_key(&prompt.article_id) {
                return Err(Error::DanglingReference(format!(
                    "prompt {id} references unknown article {}",
                    prompt.article_id
                )));
            }
            match self.annotations.get(id) {
                Some(list) if !list.is_empty() => {}
                _ => return Err(Error::InvalidCorpus(format!("prompt {id} has no annotations"))),
            }
        }
        for (prompt_id, list) in &self.annotations {
            let Some(prompt) = self.prompts.get(prompt_id) else {
                return Err(Error::DanglingReference(format!("annotation references unknown prompt {prompt_id}")));
            };
            let article = &self.articles[&prompt.article_id];
            for ann in list {
                if &ann.prompt_id != prompt_id {
                    return Err(Error::InvalidCorpus(format!("annotation filed under wrong prompt {prompt_id}")));
                }
                check_annotation(ann, article)?;
            }
        }
        Ok(())
    }

    pub fn article_of(&self, prompt_id: &str) -> Option<&Article> {
        self.prompts.get(prompt_id).and_then(|p| self.articles.get(&p.article_id))
    }

    pub fn split_of_prompt(&self, prompt_id: &str) -> Option<Split> {
        self.prompts.get(prompt_id).and_then(|p| self.split.get(&p.article_id).copied())
    }

    /// Prompt ids (sorted) whose article belongs to `split`.
    pub fn prompts_in(&self, split: Split) -> Vec<&str> {
        self.prompts
            .values()
            .filter(|p| self.split.get(&p.article_id) == Some(&split))
            .map(|p| p.prompt_id.as_str())
            .collect()
    }

    /// The annotation whose label serves as gold for training and evaluation.
    ///
    /// Preference order: first valid annotation-stage answer, then generation,
    /// then verification. `None` when every answer for the prompt is invalid.
    pub fn gold_annotation(&self, prompt_id: &str) -> Option<&Annotation> {
        let list = self.annotations.get(prompt_id)?;
        [Stage::Annotation, Stage::Generation, Stage::Verification]
            .into_iter()
            .find_map(|stage| list.iter().find(|a| a.stage == stage && !a.label.is_invalid()))
    }

    pub fn gold_label(&self, prompt_id: &str) -> Option<Significance> {
        self.gold_annotation(prompt_id).and_then(|a| a.label.significance())
    }

    /// Evidence spans of every annotation agreeing with the gold label, sorted
    /// by start offset and deduplicated.
    pub fn gold_spans(&self, prompt_id: &str) -> Vec<EvidenceSpan> {
        let Some(gold) = self.gold_label(prompt_id) else {
            return Vec::new();
        };
        let spans: BTreeSet<EvidenceSpan> = self.annotations[prompt_id]
            .iter()
            .filter(|a| a.label == Label::Valid(gold))
            .flat_map(|a| a.spans.iter().copied())
            .collect();
        spans.into_iter().collect()
    }

    pub fn load(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        load_corpus(path.as_ref(), format)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    CanonicalJsonl,
    UpstreamRelease,
}

/// Load and fully validate a corpus from disk.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    match format {
        CorpusFormat::CanonicalJsonl => load_canonical(path),
        CorpusFormat::UpstreamRelease => {
            upstream::import_release(path, &upstream::UpstreamLayout::default()).map(|r| r.corpus)
        }
    }
}

pub(crate) fn check_article(a: &Article) -> std::result::Result<(), String> {
    if a.article_id.is_empty() {
        return Err("article_id is empty".into());
    }
    if a.text.is_empty() {
        return Err(format!("article {} has empty text", a.article_id));
    }
    let len = a.char_len();
    if a.abstract_end > len {
        return Err(format!(
            "article {} abstract_end {} exceeds text length {len}",
            a.article_id, a.abstract_end
        ));
    }
    Ok(())
}

pub(crate) fn check_prompt(p: &IcoPrompt) -> std::result::Result<(), String> {
    if p.prompt_id.is_empty() {
        return Err("prompt_id is empty".into());
    }
    for (name, value) in [
        ("intervention", &p.intervention),
        ("comparator", &p.comparator),
        ("outcome", &p.outcome),
    ] {
        if value.trim().is_empty() {
            return Err(format!("prompt {} has empty {name}", p.prompt_id));
        }
    }
    Ok(())
}

pub(crate) fn check_annotation(ann: &Annotation, article: &Article) -> Result<()> {
    match (ann.label, ann.spans.is_empty()) {
        (Label::Invalid, false) => {
            return Err(Error::InvalidCorpus(format!(
                "invalid-prompt annotation for {} carries evidence spans",
                ann.prompt_id
            )))
        }
        (Label::Valid(_), true) => {
            return Err(Error::InvalidCorpus(format!(
                "annotation for {} has a label but no evidence span",
                ann.prompt_id
            )))
        }
        _ => {}
    }
    let len = article.char_len();
    for span in &ann.spans {
        if span.char_start >= span.char_end || span.char_end > len {
            return Err(Error::SpanOutOfBounds {
                article_id: article.article_id.clone(),
                start: span.char_start,
                end: span.char_end,
                len,
            });
        }
        if article.slice(span.char_start, span.char_end).trim().is_empty() {
            return Err(Error::InvalidCorpus(format!(
                "span [{}, {}) of prompt {} is whitespace only",
                span.char_start, span.char_end, ann.prompt_id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: &str, text: &str) -> Article {
        Article { article_id: id.into(), title: String::new(), text: text.into(), abstract_end: 1 }
    }

    #[test]
    fn char_slice_handles_multibyte() {
        let text = "α β γ";
        assert_eq!(char_slice(text, 0, 1), "α");
        assert_eq!(char_slice(text, 2, 5), "β γ");
        assert_eq!(char_slice(text, 4, 4), "");
        assert_eq!(char_slice(text, 3, 99), " γ");
        assert_eq!(char_slice(text, 99, 100), "");
    }

    #[test]
    fn label_serde_uses_signed_codes() {
        let labels = [
            Label::Valid(Significance::Decreased),
            Label::Valid(Significance::NoDifference),
            Label::Valid(Significance::Increased),
            Label::Invalid,
        ];
        let json = serde_json::to_string(&labels).unwrap();
        assert_eq!(json, r#"[-1,0,1,"invalid"]"#);
        let back: Vec<Label> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, labels);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }

    #[test]
    fn gold_prefers_annotation_stage() {
        let corpus = Corpus::from_parts(
            [article("a", "Some evidence here.")],
            [IcoPrompt {
                prompt_id: "p".into(),
                article_id: "a".into(),
                intervention: "x".into(),
                comparator: "y".into(),
                outcome: "z".into(),
            }],
            [
                Annotation {
                    prompt_id: "p".into(),
                    label: Significance::Increased.into(),
                    spans: vec![EvidenceSpan::new(0, 4)],
                    stage: Stage::Generation,
                },
                Annotation {
                    prompt_id: "p".into(),
                    label: Significance::Decreased.into(),
                    spans: vec![EvidenceSpan::new(5, 13)],
                    stage: Stage::Annotation,
                },
            ],
            [("a".to_string(), Split::Train)],
        )
        .unwrap();
        assert_eq!(corpus.gold_label("p"), Some(Significance::Decreased));
        assert_eq!(corpus.gold_spans("p"), vec![EvidenceSpan::new(5, 13)]);
    }

    #[test]
    fn invalid_annotation_with_span_rejected() {
        let err = Corpus::from_parts(
            [article("a", "text")],
            [IcoPrompt {
                prompt_id: "p".into(),
                article_id: "a".into(),
                intervention: "x".into(),
                comparator: "y".into(),
                outcome: "z".into(),
            }],
            [Annotation {
                prompt_id: "p".into(),
                label: Label::Invalid,
                spans: vec![EvidenceSpan::new(0, 2)],
                stage: Stage::Annotation,
            }],
            [("a".to_string(), Split::Train)],
        )
        .unwrap_err();
        assert_eq!(err.code(), "INVALID_CORPUS");
    }

    #[test]
    fn dangling_prompt_reported() {
        let err = Corpus::from_parts(
            [article("a", "text")],
            [IcoPrompt {
                prompt_id: "p".into(),
                article_id: "missing".into(),
                intervention: "x".into(),
                comparator: "y".into(),
                outcome: "z".into(),
            }],
            [],
            [("a".to_string(), Split::Dev)],
        )
        .unwrap_err();
        assert_eq!(err.code(), "DANGLING_REFERENCE");
    }
}
