//! Canonical on-disk layout: a directory holding four JSONL files whose
//! records use the field names of the corpus types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_annotation, check_article, check_prompt, Annotation, Article, Corpus, IcoPrompt, Split};
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};

pub const ARTICLES_FILE: &str = "articles.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SPLITS_FILE: &str = "splits.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    article_id: String,
    split: Split,
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MalformedRecord { file: path.to_path_buf(), line, message: message.into() }
}

pub fn load_canonical(dir: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::default();

    let path = dir.join(ARTICLES_FILE);
    for (line, article) in read_jsonl::<Article>(&path)? {
        check_article(&article).map_err(|m| malformed(&path, line, m))?;
        if corpus.articles.contains_key(&article.article_id) {
            return Err(malformed(&path, line, format!("duplicate article_id {}", article.article_id)));
        }
        corpus.articles.insert(article.article_id.clone(), article);
    }

    let path = dir.join(PROMPTS_FILE);
    for (line, prompt) in read_jsonl::<IcoPrompt>(&path)? {
        check_prompt(&prompt).map_err(|m| malformed(&path, line, m))?;
        if !corpus.articles.contains_key(&prompt.article_id) {
            return Err(Error::DanglingReference(format!(
                "{}:{line}: prompt {} references unknown article {}",
                path.display(),
                prompt.prompt_id,
                prompt.article_id
            )));
        }
        if corpus.prompts.contains_key(&prompt.prompt_id) {
            return Err(malformed(&path, line, format!("duplicate prompt_id {}", prompt.prompt_id)));
        }
        corpus.prompts.insert(prompt.prompt_id.clone(), prompt);
    }

    let path = dir.join(ANNOTATIONS_FILE);
    for (line, ann) in read_jsonl::<Annotation>(&path)? {
        let Some(article) = corpus.article_of(&ann.prompt_id) else {
            return Err(Error::DanglingReference(format!(
                "{}:{line}: annotation references unknown prompt {}",
                path.display(),
                ann.prompt_id
            )));
        };
        match check_annotation(&ann, article) {
            Ok(()) => {}
            Err(e @ Error::SpanOutOfBounds { .. }) => return Err(e),
            Err(other) => return Err(malformed(&path, line, other.to_string())),
        }
        corpus.annotations.entry(ann.prompt_id.clone()).or_default().push(ann);
    }

    let path = dir.join(SPLITS_FILE);
    for (line, rec) in read_jsonl::<SplitRecord>(&path)? {
        if !corpus.articles.contains_key(&rec.article_id) {
            return Err(Error::DanglingReference(format!(
                "{}:{line}: split entry for unknown article {}",
                path.display(),
                rec.article_id
            )));
        }
        if corpus.split.insert(rec.article_id.clone(), rec.split).is_some() {
            return Err(malformed(&path, line, format!("article {} listed twice", rec.article_id)));
        }
    }

    corpus.validate()?;
    Ok(corpus)
}

/// Write `corpus` in canonical layout under `dir` (created if needed).
pub fn save_canonical(corpus: &Corpus, dir: &Path) -> Result<()> {
    write_jsonl(&dir.join(ARTICLES_FILE), corpus.articles.values())?;
    write_jsonl(&dir.join(PROMPTS_FILE), corpus.prompts.values())?;
    write_jsonl(&dir.join(ANNOTATIONS_FILE), corpus.annotations.values().flatten())?;
    let splits: Vec<SplitRecord> = corpus
        .split
        .iter()
        .map(|(article_id, &split)| SplitRecord { article_id: article_id.clone(), split })
        .collect();
    write_jsonl(&dir.join(SPLITS_FILE), &splits)
}

