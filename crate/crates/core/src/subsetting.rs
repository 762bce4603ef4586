//! Abstract-only corpus derivation.
//!
//! Articles are truncated to their abstract. A span survives when it ends
//! inside the abstract and every sentence it touches lies wholly inside the
//! abstract. A prompt survives when at least one of its labeled annotations
//! keeps all of its spans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Article, Corpus, EvidenceSpan};
use crate::error::{Error, Result};
use crate::segmentation::{align_evidence, restrict_to_abstract, Sentence, SentenceIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetCounts {
    pub prompts_before: usize,
    pub prompts_after: usize,
    pub annotations_before: usize,
    pub annotations_after: usize,
    pub articles_before: usize,
    pub articles_after: usize,
}

/// The derived corpus together with its sentence index, which is the input
/// index restricted to the abstracts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractSubset {
    pub corpus: Corpus,
    pub sentences: SentenceIndex,
    pub counts: SubsetCounts,
}

fn span_in_abstract(span: &EvidenceSpan, sentences: &[Sentence], abstract_end: usize) -> bool {
    span.char_end <= abstract_end
        && align_evidence(sentences, std::slice::from_ref(span))
            .is_ok_and(|hits| hits.iter().all(|&i| sentences[i].char_end <= abstract_end))
}

pub fn derive_abstract_subset(corpus: &Corpus, index: &SentenceIndex) -> Result<AbstractSubset> {
    if let Some(a) = corpus.articles.values().find(|a| !a.has_abstract_boundary()) {
        return Err(Error::MissingAbstractBoundary(a.article_id.clone()));
    }

    let mut prompts = BTreeMap::new();
    let mut annotations = BTreeMap::new();
    for (prompt_id, prompt) in &corpus.prompts {
        let article = &corpus.articles[&prompt.article_id];
        let sentences = index.get(&article.article_id);
        let all = corpus.annotations.get(prompt_id).map(Vec::as_slice).unwrap_or(&[]);

        let mut answerable = false;
        let mut kept = Vec::new();
        for ann in all {
            if ann.label.is_invalid() {
                kept.push(ann.clone());
                continue;
            }
            let spans: Vec<EvidenceSpan> = ann
                .spans
                .iter()
                .filter(|s| span_in_abstract(s, sentences, article.abstract_end))
                .copied()
                .collect();
            answerable |= spans.len() == ann.spans.len();
            if !spans.is_empty() {
                kept.push(Annotation { spans, ..ann.clone() });
            }
        }
        if answerable {
            prompts.insert(prompt_id.clone(), prompt.clone());
            annotations.insert(prompt_id.clone(), kept);
        }
    }

    let mut articles = BTreeMap::new();
    let mut split = BTreeMap::new();
    let mut restricted = BTreeMap::new();
    for prompt in prompts.values() {
        let id = &prompt.article_id;
        if articles.contains_key(id) {
            continue;
        }
        let source = &corpus.articles[id];
        let text: String = source.text.chars().take(source.abstract_end).collect();
        let article = Article { text, ..source.clone() };
        restricted.insert(id.clone(), restrict_to_abstract(index.get(id), source));
        articles.insert(id.clone(), article);
        split.insert(id.clone(), corpus.split[id]);
    }

    let counts = SubsetCounts {
        prompts_before: corpus.prompts.len(),
        prompts_after: prompts.len(),
        annotations_before: corpus.annotations.values().map(Vec::len).sum(),
        annotations_after: annotations.values().map(Vec::len).sum(),
        articles_before: corpus.articles.len(),
        articles_after: articles.len(),
    };
    let subset = Corpus { articles, prompts, annotations, split };
    subset.validate()?;
    Ok(AbstractSubset {
        corpus: subset,
        sentences: SentenceIndex { segmenter: index.segmenter.clone(), sentences: restricted },
        counts,
    })
}
