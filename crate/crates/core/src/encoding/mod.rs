//! Text encoders: anything that maps a string to a fixed-length real vector.
//!
//! The built-in [`HashingEncoder`] is the desk-scale default. Pretrained
//! encoders plug in through [`crate::adapter::CommandEncoder`], which speaks a
//! line-delimited JSON protocol with an external process.

mod cache;
mod hashing;

use serde::{Deserialize, Serialize};

use crate::corpus::IcoPrompt;
use crate::error::{Error, Result};

pub use cache::CachedEncoder;
pub use hashing::HashingEncoder;

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    /// Stable name + version, used to key caches and to match models to encoders.
    fn identity(&self) -> &str;

    /// `false` when calls must not overlap; callers then encode sequentially.
    fn concurrent(&self) -> bool {
        true
    }

    /// Raw encoding. Prefer [`encode_text`], which checks the contract.
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
}

impl<E: Encoder + ?Sized> Encoder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn identity(&self) -> &str {
        (**self).identity()
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        (**self).encode(text)
    }
}

/// Encode `text`, rejecting blank input and wrong-length output.
pub fn encode_text(encoder: &dyn Encoder, text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let v = encoder.encode(text)?;
    if v.len() != encoder.dim() {
        return Err(Error::Adapter(format!(
            "encoder {} returned {} values, expected {}",
            encoder.identity(),
            v.len(),
            encoder.dim()
        )));
    }
    Ok(v)
}

/// The ICO triple as seen by an encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcoFrame {
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
}

impl IcoFrame {
    pub const DELIMITER: &'static str = " | ";

    pub fn render(&self) -> String {
        [self.intervention.as_str(), self.comparator.as_str(), self.outcome.as_str()].join(Self::DELIMITER)
    }
}

impl From<&IcoPrompt> for IcoFrame {
    fn from(p: &IcoPrompt) -> Self {
        Self { intervention: p.intervention.clone(), comparator: p.comparator.clone(), outcome: p.outcome.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedInput {
    pub ico_vector: Option<Vec<f64>>,
    pub sentence_vector: Vec<f64>,
}

impl ConditionedInput {
    pub fn len(&self) -> usize {
        self.ico_vector.as_ref().map_or(0, Vec::len) + self.sentence_vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ICO first, then the sentence.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        if let Some(ico) = &self.ico_vector {
            out.extend_from_slice(ico);
        }
        out.extend_from_slice(&self.sentence_vector);
        out
    }
}

pub fn encode_conditioned(
    encoder: &dyn Encoder,
    ico: &IcoFrame,
    sentence_text: &str,
    conditioned: bool,
) -> Result<ConditionedInput> {
    let ico_vector = if conditioned { Some(encode_text(encoder, &ico.render())?) } else { None };
    let sentence_vector = encode_text(encoder, sentence_text)?;
    Ok(ConditionedInput { ico_vector, sentence_vector })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> IcoFrame {
        IcoFrame { intervention: "aspirin".into(), comparator: "placebo".into(), outcome: "pain".into() }
    }

    #[test]
    fn rendering_uses_fixed_delimiter() {
        assert_eq!(frame().render(), "aspirin | placebo | pain");
    }

    #[test]
    fn conditioned_layout() {
        let enc = HashingEncoder::new(64, 0);
        let x = encode_conditioned(&enc, &frame(), "pain fell", true).unwrap();
        let f = x.to_features();
        assert_eq!(f.len(), 128);
        assert_eq!(&f[..64], encode_text(&enc, &frame().render()).unwrap().as_slice());
        assert_eq!(&f[64..], encode_text(&enc, "pain fell").unwrap().as_slice());

        let plain = encode_conditioned(&enc, &frame(), "pain fell", false).unwrap();
        assert_eq!(plain.to_features().len(), 64);
        assert_eq!(plain.ico_vector, None);
    }

    #[test]
    fn same_ico_different_sentences() {
        let enc = HashingEncoder::new(64, 0);
        let a = encode_conditioned(&enc, &frame(), "pain fell sharply", true).unwrap().to_features();
        let b = encode_conditioned(&enc, &frame(), "sleep was unchanged", true).unwrap().to_features();
        assert_eq!(a[..64], b[..64]);
        assert_ne!(a[64..], b[64..]);
    }

    #[test]
    fn empty_input_rejected() {
        let enc = HashingEncoder::new(64, 0);
        assert_eq!(encode_text(&enc, "").unwrap_err().code(), "EMPTY_INPUT");
        assert_eq!(encode_text(&enc, "   ").unwrap_err().code(), "EMPTY_INPUT");
        let err = encode_conditioned(&enc, &frame(), "", true).unwrap_err();
        assert_eq!(err.code(), "EMPTY_INPUT");
    }

    #[test]
    fn wrong_length_output_rejected() {
        struct Short;
        impl Encoder for Short {
            fn dim(&self) -> usize {
                4
            }
            fn identity(&self) -> &str {
                "short"
            }
            fn encode(&self, _: &str) -> Result<Vec<f64>> {
                Ok(vec![0.0; 3])
            }
        }
        assert_eq!(encode_text(&Short, "x").unwrap_err().code(), "ADAPTER_FAILURE");
    }
}
