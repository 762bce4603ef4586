//! Two-stage pipeline: an evidence identifier scores every sentence of the
//! article against the prompt, and an evidence classifier labels the top
//! sentence. Both stages are softmax heads over (optionally ICO-conditioned)
//! encoder features.

mod bundle;
mod embed;
pub mod head;
mod sweep;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bundle::{config_hash, load_model, save_model, Model};
pub use embed::Embeddings;
pub use head::{Example, Features, LinearHead};
pub use sweep::{negative_sampling_sweep, render_sweep_table, SweepConfig, SweepRow};

pub use crate::metrics::PipelinePrediction;

use crate::corpus::{Article, Corpus, EvidenceSpan, IcoPrompt, Significance, Split};
use crate::encoding::{Encoder, IcoFrame};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::rng::keyed_u64;
use crate::sampling::{Polarity, TrainingSample};
use crate::segmentation::{align_evidence, Labelings, Sentence, SentenceIndex};

/// Learning rate for heads over the built-in hashing encoder.
pub const TOY_LEARNING_RATE: f64 = 1e-2;
/// Learning rate for heads over pretrained adapter encoders.
pub const ADAPTER_LEARNING_RATE: f64 = 2e-5;
/// One prompt in this many goes to the nested held-out set used for epoch selection.
pub const HELDOUT_MODULUS: u64 = 10;

/// Looks up a text's embedding; `None` when the text cannot be encoded.
type EmbedFn<'a> = dyn Fn(&str) -> Result<Option<std::sync::Arc<[f64]>>> + 'a;

const POSITIVE: usize = 1;
const NEGATIVE: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, learning_rate: TOY_LEARNING_RATE, batch_size: 32, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// What the classifier reads besides the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// The first sentence touched by the first gold span.
    GoldSentence,
    /// The full text of the first gold span.
    GoldSpan,
    /// The prompt alone.
    IcoOnly,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::GoldSentence => "gold-sentence",
            InputMode::GoldSpan => "gold-span",
            InputMode::IcoOnly => "ico-only",
        }
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold-sentence" => Ok(InputMode::GoldSentence),
            "gold-span" => Ok(InputMode::GoldSpan),
            "ico-only" => Ok(InputMode::IcoOnly),
            other => Err(Error::InvalidConfig(format!("unknown input mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierModel {
    pub encoder_identity: String,
    pub conditioned: bool,
    pub head: LinearHead,
    pub config_hash: String,
    pub best_epoch: usize,
    pub heldout_macro_f: Vec<f64>,
}

impl IdentifierModel {
    /// Probability that the sentence is evidence for the prompt.
    pub fn score(&self, features: &Features) -> f64 {
        self.head.probabilities(features)[POSITIVE]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub encoder_identity: String,
    pub conditioned: bool,
    pub input_mode: InputMode,
    pub head: LinearHead,
    pub config_hash: String,
    pub best_epoch: usize,
    pub heldout_macro_f: Vec<f64>,
}

impl ClassifierModel {
    pub fn probabilities(&self, features: &Features) -> [f64; 3] {
        let p = self.head.probabilities(features);
        [p[0], p[1], p[2]]
    }
}

fn in_heldout(seed: u64, prompt_id: &str) -> bool {
    keyed_u64(seed, &format!("heldout/{prompt_id}")).is_multiple_of(HELDOUT_MODULUS)
}

/// Split examples into (train, held-out) by prompt. If either side would be
/// empty, all examples serve as both.
fn nested_split(seed: u64, examples: Vec<(String, Example)>) -> (Vec<Example>, Vec<Example>) {
    let (held, train): (Vec<_>, Vec<_>) = examples.iter().cloned().partition(|(id, _)| in_heldout(seed, id));
    if held.is_empty() || train.is_empty() {
        log::warn!("nested held-out split is degenerate; selecting on the training data");
        let all: Vec<Example> = examples.into_iter().map(|(_, e)| e).collect();
        return (all.clone(), all);
    }
    (train.into_iter().map(|(_, e)| e).collect(), held.into_iter().map(|(_, e)| e).collect())
}

fn ico_text(prompt: &IcoPrompt) -> String {
    IcoFrame::from(prompt).render()
}

fn article_and_sentences<'a>(corpus: &'a Corpus, index: &'a SentenceIndex, prompt: &IcoPrompt) -> (&'a Article, &'a [Sentence]) {
    (&corpus.articles[&prompt.article_id], index.get(&prompt.article_id))
}

fn features(ico: Option<&std::sync::Arc<[f64]>>, body: Option<&std::sync::Arc<[f64]>>) -> Features {
    Features(ico.into_iter().chain(body).cloned().collect())
}

fn check_encoder(model_identity: &str, encoder: &dyn Encoder) -> Result<()> {
    if model_identity != encoder.identity() {
        return Err(Error::EncoderMismatch { expected: model_identity.to_string(), actual: encoder.identity().to_string() });
    }
    Ok(())
}

/// Train the evidence identifier on positive/negative sentence samples.
pub fn train_identifier(
    samples: &[TrainingSample],
    corpus: &Corpus,
    index: &SentenceIndex,
    encoder: &dyn Encoder,
    config: &TrainConfig,
    conditioned: bool,
) -> Result<IdentifierModel> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for polarity in [Polarity::Positive, Polarity::Negative] {
        if !samples.iter().any(|s| s.polarity == polarity) {
            return Err(Error::DegenerateDataset(format!("no {polarity:?} samples")));
        }
    }
    let mut texts = BTreeSet::new();
    let mut resolved = Vec::with_capacity(samples.len());
    for s in samples {
        let prompt = corpus
            .prompts
            .get(&s.prompt_id)
            .ok_or_else(|| Error::DanglingReference(format!("sample for unknown prompt {}", s.prompt_id)))?;
        let (article, sentences) = article_and_sentences(corpus, index, prompt);
        let sentence = sentences.get(s.sentence_index).ok_or_else(|| {
            Error::DanglingReference(format!("prompt {} has no sentence {}", s.prompt_id, s.sentence_index))
        })?;
        let text = sentence.text(article).to_string();
        let ico = conditioned.then(|| ico_text(prompt));
        texts.insert(text.clone());
        texts.extend(ico.clone());
        resolved.push((s, ico, text));
    }
    let emb = Embeddings::compute(encoder, texts)?;
    let mut examples = Vec::with_capacity(resolved.len());
    for (s, ico, text) in resolved {
        let Some(body) = emb.get(&text) else {
            log::warn!("prompt {}: sentence {} has no encodable text; sample dropped", s.prompt_id, s.sentence_index);
            continue;
        };
        let ico = match &ico {
            Some(t) => Some(emb.get(t).ok_or_else(|| Error::InvalidCorpus(format!("prompt {} has no encodable text", s.prompt_id)))?),
            None => None,
        };
        let target = if s.polarity == Polarity::Positive { POSITIVE } else { NEGATIVE };
        examples.push((s.prompt_id.clone(), Example { features: features(ico, Some(body)), target }));
    }
    let (train, heldout) = nested_split(config.seed, examples);
    let n_in = encoder.dim() * if conditioned { 2 } else { 1 };
    let fitted = head::fit(n_in, 2, &train, &heldout, config);
    Ok(IdentifierModel {
        encoder_identity: encoder.identity().to_string(),
        conditioned,
        head: fitted.head,
        config_hash: config_hash(&("identifier", config, conditioned, encoder.identity())),
        best_epoch: fitted.best_epoch,
        heldout_macro_f: fitted.heldout_macro_f,
    })
}

/// First gold span by start offset.
fn first_gold_span(corpus: &Corpus, prompt_id: &str) -> Result<EvidenceSpan> {
    corpus
        .gold_spans(prompt_id)
        .into_iter()
        .min()
        .ok_or_else(|| Error::MissingGoldEvidence(prompt_id.to_string()))
}

/// Text the classifier reads for `mode`, or `None` for the prompt alone.
fn gold_text(corpus: &Corpus, index: &SentenceIndex, prompt: &IcoPrompt, mode: InputMode) -> Result<Option<String>> {
    let (article, sentences) = article_and_sentences(corpus, index, prompt);
    match mode {
        InputMode::IcoOnly => Ok(None),
        InputMode::GoldSpan => {
            let span = first_gold_span(corpus, &prompt.prompt_id)?;
            Ok(Some(article.slice(span.char_start, span.char_end).to_string()))
        }
        InputMode::GoldSentence => {
            let span = first_gold_span(corpus, &prompt.prompt_id)?;
            let first = align_evidence(sentences, &[span])
                .ok()
                .and_then(|hits| hits.first().copied())
                .ok_or_else(|| Error::MissingGoldEvidence(prompt.prompt_id.clone()))?;
            Ok(Some(sentences[first].text(article).to_string()))
        }
    }
}

/// Train the three-way evidence classifier on gold evidence (or the prompt
/// alone) for every labeled prompt of `split`.
#[allow(clippy::too_many_arguments)]
pub fn train_classifier(
    corpus: &Corpus,
    index: &SentenceIndex,
    encoder: &dyn Encoder,
    config: &TrainConfig,
    conditioned: bool,
    input_mode: InputMode,
    split: Split,
) -> Result<ClassifierModel> {
    config.validate()?;
    let use_ico = conditioned || input_mode == InputMode::IcoOnly;
    let mut texts = BTreeSet::new();
    let mut resolved = Vec::new();
    for prompt_id in corpus.prompts_in(split) {
        let Some(label) = corpus.gold_label(prompt_id) else { continue };
        let prompt = &corpus.prompts[prompt_id];
        let body = gold_text(corpus, index, prompt, input_mode)?;
        let ico = use_ico.then(|| ico_text(prompt));
        texts.extend(body.clone());
        texts.extend(ico.clone());
        resolved.push((prompt_id, label, ico, body));
    }
    if resolved.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let emb = Embeddings::compute(encoder, texts)?;
    let mut examples = Vec::with_capacity(resolved.len());
    for (prompt_id, label, ico, body) in resolved {
        let lookup = |t: &Option<String>| -> Result<Option<&std::sync::Arc<[f64]>>> {
            match t {
                None => Ok(None),
                Some(t) => emb
                    .get(t)
                    .map(Some)
                    .ok_or_else(|| Error::MissingGoldEvidence(format!("{prompt_id} (no encodable text)"))),
            }
        };
        let f = features(lookup(&ico)?, lookup(&body)?);
        examples.push((prompt_id.to_string(), Example { features: f, target: label.index() }));
    }
    let (train, heldout) = nested_split(config.seed, examples);
    let n_in = encoder.dim() * (usize::from(use_ico) + usize::from(input_mode != InputMode::IcoOnly));
    let fitted = head::fit(n_in, 3, &train, &heldout, config);
    Ok(ClassifierModel {
        encoder_identity: encoder.identity().to_string(),
        conditioned: use_ico,
        input_mode,
        head: fitted.head,
        config_hash: config_hash(&("classifier", config, conditioned, input_mode, encoder.identity())),
        best_epoch: fitted.best_epoch,
        heldout_macro_f: fitted.heldout_macro_f,
    })
}

/// Score all sentences, pick the best (lowest index on ties) and classify it.
/// `embed` maps a text to its encoder vector, or `None` if it has no
/// encodable content; such sentences are not candidates.
fn decode_with(
    identifier: &IdentifierModel,
    classifier: &ClassifierModel,
    prompt: &IcoPrompt,
    article: &Article,
    sentences: &[Sentence],
    embed: &EmbedFn,
) -> Result<(PipelinePrediction, Vec<(usize, f64)>)> {
    if sentences.is_empty() {
        return Err(Error::NoSentences(prompt.prompt_id.clone()));
    }
    let ico_text = ico_text(prompt);
    let ico = embed(&ico_text)?.ok_or_else(|| Error::InvalidCorpus(format!("prompt {} has no encodable text", prompt.prompt_id)))?;
    let mut scored: Vec<(usize, f64, std::sync::Arc<[f64]>)> = Vec::with_capacity(sentences.len());
    for s in sentences {
        if let Some(v) = embed(s.text(article))? {
            let f = features(identifier.conditioned.then_some(&ico), Some(&v));
            scored.push((s.index, identifier.score(&f), v));
        }
    }
    let mut best: Option<&(usize, f64, std::sync::Arc<[f64]>)> = None;
    for candidate in &scored {
        if best.is_none_or(|b| candidate.1 > b.1) {
            best = Some(candidate);
        }
    }
    let Some((chosen, score, body)) = best else {
        return Err(Error::NoSentences(prompt.prompt_id.clone()));
    };
    let f = features(classifier.conditioned.then_some(&ico), Some(body));
    let probs = classifier.probabilities(&f);
    let prediction = PipelinePrediction {
        prompt_id: prompt.prompt_id.clone(),
        chosen_sentence_index: Some(*chosen),
        identifier_score: Some(*score),
        predicted_label: Significance::ALL[head::argmax(&probs)],
        class_probabilities: probs,
    };
    Ok((prediction, scored.iter().map(|(i, s, _)| (*i, *s)).collect()))
}

/// Run the pipeline on one prompt: the identifier picks the highest scoring
/// sentence (lowest index on ties) and the classifier labels it.
pub fn decode(
    identifier: &IdentifierModel,
    classifier: &ClassifierModel,
    encoder: &dyn Encoder,
    prompt: &IcoPrompt,
    article: &Article,
    sentences: &[Sentence],
) -> Result<PipelinePrediction> {
    check_encoder(&identifier.encoder_identity, encoder)?;
    check_encoder(&classifier.encoder_identity, encoder)?;
    if classifier.input_mode == InputMode::IcoOnly {
        return Err(Error::ModeModelMismatch("decoding needs a sentence classifier, not an ico-only one".into()));
    }
    let embed = |t: &str| Embeddings::encode_one(encoder, t);
    decode_with(identifier, classifier, prompt, article, sentences, &embed).map(|(p, _)| p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticMode {
    EndToEnd,
    OracleSpan,
    OracleSentence,
    IcoOnly,
    Unconditioned,
}

impl DiagnosticMode {
    pub const ALL: [DiagnosticMode; 5] = [
        DiagnosticMode::EndToEnd,
        DiagnosticMode::OracleSpan,
        DiagnosticMode::OracleSentence,
        DiagnosticMode::IcoOnly,
        DiagnosticMode::Unconditioned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiagnosticMode::EndToEnd => "end2end",
            DiagnosticMode::OracleSpan => "oracle-span",
            DiagnosticMode::OracleSentence => "oracle-sentence",
            DiagnosticMode::IcoOnly => "ico-only",
            DiagnosticMode::Unconditioned => "unconditioned",
        }
    }

    fn uses_identifier(self) -> bool {
        matches!(self, DiagnosticMode::EndToEnd | DiagnosticMode::Unconditioned)
    }
}

impl fmt::Display for DiagnosticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagnosticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end2end" | "end-to-end" => Ok(DiagnosticMode::EndToEnd),
            "oracle-span" => Ok(DiagnosticMode::OracleSpan),
            "oracle-sentence" => Ok(DiagnosticMode::OracleSentence),
            "ico-only" => Ok(DiagnosticMode::IcoOnly),
            "unconditioned" => Ok(DiagnosticMode::Unconditioned),
            other => Err(Error::InvalidConfig(format!("unknown diagnostic mode {other:?}"))),
        }
    }
}

/// Trained models available to an evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Models {
    pub identifier: Option<IdentifierModel>,
    pub classifier: Option<ClassifierModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub split: Split,
    /// Worker threads; 0 uses the default pool.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { split: Split::Test, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRun {
    pub mode: DiagnosticMode,
    pub report: EvalReport,
    pub predictions: Vec<PipelinePrediction>,
}

fn require_models(mode: DiagnosticMode, models: &Models) -> Result<(Option<&IdentifierModel>, &ClassifierModel)> {
    let mismatch = |m: &str| Err(Error::ModeModelMismatch(format!("{mode}: {m}")));
    let Some(classifier) = models.classifier.as_ref() else {
        return mismatch("a classifier is required");
    };
    match mode {
        DiagnosticMode::IcoOnly if classifier.input_mode != InputMode::IcoOnly => {
            return mismatch("the classifier must be trained with input mode ico-only")
        }
        DiagnosticMode::IcoOnly => return Ok((None, classifier)),
        _ if classifier.input_mode == InputMode::IcoOnly => return mismatch("the classifier must read evidence text"),
        _ => {}
    }
    if !mode.uses_identifier() {
        return Ok((None, classifier));
    }
    let Some(identifier) = models.identifier.as_ref() else {
        return mismatch("an identifier is required");
    };
    let want = mode == DiagnosticMode::EndToEnd;
    if identifier.conditioned != want || classifier.conditioned != want {
        return mismatch(if want { "both stages must be conditioned" } else { "both stages must be unconditioned" });
    }
    Ok((Some(identifier), classifier))
}

/// Evaluate one diagnostic mode over the labeled prompts of `options.split`.
///
/// Prompts are processed in parallel; each prompt's computation is
/// sequential and results are gathered in prompt order, so the report does
/// not depend on the number of workers.
pub fn run_diagnostic(
    corpus: &Corpus,
    index: &SentenceIndex,
    labelings: &Labelings,
    mode: DiagnosticMode,
    models: &Models,
    encoder: &dyn Encoder,
    options: &EvalOptions,
) -> Result<DiagnosticRun> {
    let (identifier, classifier) = require_models(mode, models)?;
    check_encoder(&classifier.encoder_identity, encoder)?;
    if let Some(identifier) = identifier {
        check_encoder(&identifier.encoder_identity, encoder)?;
    }

    let prompts: Vec<&IcoPrompt> = corpus
        .prompts_in(options.split)
        .into_iter()
        .filter(|id| corpus.gold_label(id).is_some())
        .filter(|id| {
            let ok = labelings.contains_key(*id);
            if !ok {
                log::warn!("prompt {id}: no sentence labeling; left out of evaluation");
            }
            ok
        })
        .map(|id| &corpus.prompts[id])
        .collect();
    if prompts.is_empty() {
        return Err(Error::EmptyEval);
    }

    let mut texts = BTreeSet::new();
    for prompt in &prompts {
        texts.insert(ico_text(prompt));
        match mode {
            DiagnosticMode::EndToEnd | DiagnosticMode::Unconditioned => {
                let (article, sentences) = article_and_sentences(corpus, index, prompt);
                texts.extend(sentences.iter().map(|s| s.text(article).to_string()));
            }
            DiagnosticMode::OracleSpan => texts.extend(gold_text(corpus, index, prompt, InputMode::GoldSpan)?),
            DiagnosticMode::OracleSentence => texts.extend(gold_text(corpus, index, prompt, InputMode::GoldSentence)?),
            DiagnosticMode::IcoOnly => {}
        }
    }
    let emb = Embeddings::compute(encoder, texts)?;
    let embed = |t: &str| Ok(emb.get(t).cloned());

    let per_prompt = |prompt: &&IcoPrompt| -> Result<(PipelinePrediction, Vec<(usize, f64)>)> {
        if let Some(identifier) = identifier {
            let (article, sentences) = article_and_sentences(corpus, index, prompt);
            return decode_with(identifier, classifier, prompt, article, sentences, &embed);
        }
        let ico = emb.get(&ico_text(prompt)).ok_or_else(|| Error::InvalidCorpus(format!("prompt {} has no encodable text", prompt.prompt_id)))?;
        let body = match mode {
            DiagnosticMode::OracleSpan => gold_text(corpus, index, prompt, InputMode::GoldSpan)?,
            DiagnosticMode::OracleSentence => gold_text(corpus, index, prompt, InputMode::GoldSentence)?,
            _ => None,
        };
        let body = match &body {
            Some(t) => Some(emb.get(t).ok_or_else(|| Error::MissingGoldEvidence(prompt.prompt_id.clone()))?),
            None => None,
        };
        let f = features(classifier.conditioned.then_some(ico), body);
        let probs = classifier.probabilities(&f);
        Ok((
            PipelinePrediction {
                prompt_id: prompt.prompt_id.clone(),
                chosen_sentence_index: None,
                identifier_score: None,
                predicted_label: Significance::ALL[head::argmax(&probs)],
                class_probabilities: probs,
            },
            Vec::new(),
        ))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<_>> = pool.install(|| prompts.par_iter().map(per_prompt).collect());

    let mut predictions = Vec::with_capacity(results.len());
    let mut gold = Vec::with_capacity(results.len());
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (prompt, result) in prompts.iter().zip(results) {
        let (prediction, scores) = result?;
        let evidence = &labelings[&prompt.prompt_id].evidence_indices;
        for (i, s) in scores {
            if evidence.contains(&i) {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        gold.push(corpus.gold_label(&prompt.prompt_id).expect("filtered to labeled prompts"));
        predictions.push(prediction);
    }
    let identifier_scores = if identifier.is_some() && !pos.is_empty() && !neg.is_empty() {
        Some((pos.as_slice(), neg.as_slice()))
    } else {
        if identifier.is_some() {
            log::warn!("AUROC undefined: evaluation has no positive or no negative sentences");
        }
        None
    };
    let report = EvalReport::build(&predictions, &gold, identifier.map(|_| labelings), identifier_scores)?;
    Ok(DiagnosticRun { mode, report, predictions })
}
