//! Sentence segmentation and alignment of character-level evidence spans to
//! sentence indices.

mod cache;
mod rules;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, EvidenceSpan};
use crate::error::{Error, Result};

pub use cache::{load_sentence_cache, save_sentence_cache};
pub use rules::RuleSegmenter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub article_id: String,
    pub index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

impl Sentence {
    pub fn text<'a>(&self, article: &'a Article) -> &'a str {
        article.slice(self.char_start, self.char_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceLabeling {
    pub prompt_id: String,
    pub evidence_indices: BTreeSet<usize>,
}

/// Sentence labelings keyed by prompt id.
pub type Labelings = BTreeMap<String, SentenceLabeling>;

/// Anything that can split text into sentences.
///
/// Implementations return half-open char offsets. They must be deterministic
/// for a fixed identity string, which is what caches are keyed by.
pub trait Segmenter: Send + Sync {
    fn identity(&self) -> &str;
    fn boundaries(&self, text: &str) -> Result<Vec<(usize, usize)>>;
}

/// Split an article into sentences, checking the segmenter's output.
pub fn segment(article: &Article, segmenter: &dyn Segmenter) -> Result<Vec<Sentence>> {
    if article.text.trim().is_empty() {
        return Err(Error::EmptyText(article.article_id.clone()));
    }
    let bounds = segmenter.boundaries(&article.text)?;
    let len = article.char_len();
    let bad = |message: String| Error::BadSegmentation { article_id: article.article_id.clone(), message };
    let mut prev_end = 0;
    let mut out = Vec::with_capacity(bounds.len());
    for (index, (start, end)) in bounds.into_iter().enumerate() {
        if start >= end || end > len {
            return Err(bad(format!("sentence {index} has bounds [{start}, {end}) for text length {len}")));
        }
        if start < prev_end {
            return Err(bad(format!("sentence {index} overlaps or precedes its predecessor")));
        }
        prev_end = end;
        out.push(Sentence { article_id: article.article_id.clone(), index, char_start: start, char_end: end });
    }
    Ok(out)
}

/// Indices of every sentence overlapping any span by at least one character.
pub fn align_evidence(sentences: &[Sentence], spans: &[EvidenceSpan]) -> Result<BTreeSet<usize>> {
    let mut hits = BTreeSet::new();
    for span in spans {
        // sentences are sorted and disjoint: skip those ending before the span
        let first = sentences.partition_point(|s| s.char_end <= span.char_start);
        let mut touched = false;
        for s in &sentences[first..] {
            if s.char_start >= span.char_end {
                break;
            }
            touched = true;
            hits.insert(s.index);
        }
        if !touched {
            return Err(Error::SpanOutsideSentencedText {
                article_id: sentences.first().map(|s| s.article_id.clone()).unwrap_or_default(),
                start: span.char_start,
                end: span.char_end,
            });
        }
    }
    Ok(hits)
}

/// Sentences lying wholly inside the abstract, renumbered from zero.
pub fn restrict_to_abstract(sentences: &[Sentence], article: &Article) -> Vec<Sentence> {
    sentences
        .iter()
        .filter(|s| s.char_end <= article.abstract_end)
        .enumerate()
        .map(|(index, s)| Sentence { index, ..s.clone() })
        .collect()
}

/// Sentences for every article of a corpus under one segmenter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceIndex {
    pub segmenter: String,
    pub sentences: BTreeMap<String, Vec<Sentence>>,
}

impl SentenceIndex {
    pub fn build(corpus: &Corpus, segmenter: &dyn Segmenter) -> Result<Self> {
        let sentences = corpus
            .articles
            .par_iter()
            .map(|(id, article)| segment(article, segmenter).map(|s| (id.clone(), s)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(SentenceIndex { segmenter: segmenter.identity().to_string(), sentences })
    }

    pub fn get(&self, article_id: &str) -> &[Sentence] {
        self.sentences.get(article_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Evidence-bearing sentence indices for every prompt that has a gold label.
///
/// Spans that touch no sentence (possible only with plugin segmenters that
/// drop text) are skipped; prompts left without any evidence sentence get no
/// labeling and are logged.
pub fn build_labelings(corpus: &Corpus, index: &SentenceIndex) -> Labelings {
    let mut out = Labelings::new();
    for (prompt_id, prompt) in &corpus.prompts {
        if corpus.gold_label(prompt_id).is_none() {
            continue;
        }
        let sentences = index.get(&prompt.article_id);
        let mut evidence = BTreeSet::new();
        for span in corpus.gold_spans(prompt_id) {
            if let Ok(hits) = align_evidence(sentences, &[span]) {
                evidence.extend(hits);
            }
        }
        if evidence.is_empty() {
            log::warn!("prompt {prompt_id}: no gold span aligns to a sentence; skipped");
            continue;
        }
        out.insert(
            prompt_id.clone(),
            SentenceLabeling { prompt_id: prompt_id.clone(), evidence_indices: evidence },
        );
    }
    out
}
