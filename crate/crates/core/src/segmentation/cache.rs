//! JSONL sidecar for sentence indices, one record per article.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Sentence, SentenceIndex};
use crate::error::Result;
use crate::jsonl::{read_jsonl, write_jsonl};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    article_id: String,
    segmenter: String,
    sentences: Vec<(usize, usize)>,
}

pub fn save_sentence_cache(index: &SentenceIndex, path: &Path) -> Result<()> {
    let records: Vec<CacheRecord> = index
        .sentences
        .iter()
        .map(|(article_id, sents)| CacheRecord {
            article_id: article_id.clone(),
            segmenter: index.segmenter.clone(),
            sentences: sents.iter().map(|s| (s.char_start, s.char_end)).collect(),
        })
        .collect();
    write_jsonl(path, &records)
}

/// Load the entries written by `segmenter`; records from other segmenters are ignored.
pub fn load_sentence_cache(path: &Path, segmenter: &str) -> Result<SentenceIndex> {
    let mut sentences = BTreeMap::new();
    for (_, rec) in read_jsonl::<CacheRecord>(path)? {
        if rec.segmenter != segmenter {
            continue;
        }
        let list = rec
            .sentences
            .iter()
            .enumerate()
            .map(|(index, &(char_start, char_end))| Sentence {
                article_id: rec.article_id.clone(),
                index,
                char_start,
                char_end,
            })
            .collect();
        sentences.insert(rec.article_id, list);
    }
    Ok(SentenceIndex { segmenter: segmenter.to_string(), sentences })
}
