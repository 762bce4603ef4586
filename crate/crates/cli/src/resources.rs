//! Turning option strings into encoders, segmenters and corpora.

use std::path::Path;

use evinf_core::adapter::{CommandEncoder, CommandSegmenter};
use evinf_core::corpus::{load_corpus, Corpus, CorpusFormat};
use evinf_core::encoding::{Encoder, HashingEncoder};
use evinf_core::pipeline::{ADAPTER_LEARNING_RATE, TOY_LEARNING_RATE};
use evinf_core::segmentation::{RuleSegmenter, Segmenter};

use crate::error::{CliError, CliResult};
use crate::Format;

pub const DEFAULT_ENCODER: &str = "hashing";
pub const DEFAULT_SEGMENTER: &str = "rules";

fn command_line(spec: &str) -> CliResult<(String, Vec<String>)> {
    let mut words = spec.split_whitespace().map(str::to_string);
    let program = words.next().ok_or_else(|| CliError::Usage("empty adapter command".into()))?;
    Ok((program, words.collect()))
}

fn parse_number<T: std::str::FromStr>(spec: &str, part: &str) -> CliResult<T> {
    part.parse().map_err(|_| CliError::Usage(format!("bad encoder spec {spec:?}: {part:?} is not a number")))
}

/// `hashing[:DIM[:SEED]]` or `cmd:PROGRAM ARGS...`.
pub fn encoder(spec: &str) -> CliResult<Box<dyn Encoder>> {
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        let (program, args) = command_line(cmd)?;
        return Ok(Box::new(CommandEncoder::spawn(&program, &args)?));
    }
    let mut parts = spec.split(':');
    if parts.next() != Some("hashing") {
        return Err(CliError::Usage(format!("unknown encoder {spec:?} (expected hashing[:DIM[:SEED]] or cmd:...)")));
    }
    let dim = parts.next().map(|p| parse_number(spec, p)).transpose()?.unwrap_or(1024);
    let seed = parts.next().map(|p| parse_number(spec, p)).transpose()?.unwrap_or(0);
    if dim == 0 || parts.next().is_some() {
        return Err(CliError::Usage(format!("bad encoder spec {spec:?}")));
    }
    Ok(Box::new(HashingEncoder::new(dim, seed)))
}

/// Learning rate suited to the kind of encoder named by `spec`.
pub fn default_learning_rate(spec: &str) -> f64 {
    if spec.starts_with("cmd:") {
        ADAPTER_LEARNING_RATE
    } else {
        TOY_LEARNING_RATE
    }
}

/// `rules` or `cmd:PROGRAM ARGS...`.
pub fn segmenter(spec: &str) -> CliResult<Box<dyn Segmenter>> {
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        let (program, args) = command_line(cmd)?;
        return Ok(Box::new(CommandSegmenter::spawn(&program, &args)?));
    }
    match spec {
        "rules" => Ok(Box::new(RuleSegmenter)),
        other => Err(CliError::Usage(format!("unknown segmenter {other:?} (expected rules or cmd:...)"))),
    }
}

pub fn corpus(path: &Path, format: Format) -> CliResult<Corpus> {
    let format = match format {
        Format::Canonical => CorpusFormat::CanonicalJsonl,
        Format::Upstream => CorpusFormat::UpstreamRelease,
    };
    Ok(load_corpus(path, format)?)
}
