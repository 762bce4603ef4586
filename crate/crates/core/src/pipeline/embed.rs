use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::encoding::{encode_text, Encoder};
use crate::error::{Error, Result};

/// Encoder outputs for a fixed set of texts, computed once per run.
///
/// Texts without encodable content are absent. Encoders that declare
/// themselves single-threaded are called sequentially.
#[derive(Debug, Default)]
pub struct Embeddings {
    map: HashMap<String, Arc<[f64]>>,
}

impl Embeddings {
    pub fn compute(encoder: &dyn Encoder, texts: BTreeSet<String>) -> Result<Self> {
        let texts: Vec<String> = texts.into_iter().collect();
        let encode = |t: &String| Self::encode_one(encoder, t);
        let vectors: Vec<Result<Option<Arc<[f64]>>>> = if encoder.concurrent() {
            texts.par_iter().map(encode).collect()
        } else {
            texts.iter().map(encode).collect()
        };
        let mut map = HashMap::with_capacity(texts.len());
        for (text, v) in texts.into_iter().zip(vectors) {
            if let Some(v) = v? {
                map.insert(text, v);
            }
        }
        Ok(Self { map })
    }

    /// `Ok(None)` when the text has nothing to encode.
    pub fn encode_one(encoder: &dyn Encoder, text: &str) -> Result<Option<Arc<[f64]>>> {
        match encode_text(encoder, text) {
            Ok(v) => Ok(Some(v.into())),
            Err(Error::EmptyInput) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get(&self, text: &str) -> Option<&Arc<[f64]>> {
        self.map.get(text)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
