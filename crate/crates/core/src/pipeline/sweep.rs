use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_diagnostic, train_classifier, train_identifier, DiagnosticMode, EvalOptions, InputMode, Models, TrainConfig};
use crate::corpus::{Corpus, Split};
use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::sampling::{build_identifier_dataset, SamplingConfig};
use crate::segmentation::{Labelings, SentenceIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub sampling_seed: u64,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub classifier_input: InputMode,
    /// A run whose top-1 accuracy is at or below this is flagged as collapsed.
    pub collapse_top1: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 4, 8, 16],
            sampling_seed: 0,
            train: TrainConfig::default(),
            eval: EvalOptions { split: Split::Dev, workers: 0 },
            classifier_input: InputMode::GoldSentence,
            collapse_top1: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub conditioned: bool,
    pub auroc: Option<f64>,
    pub top1_acc: Option<f64>,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f: f64,
    pub collapsed: bool,
}

/// Train and evaluate the full pipeline for every negative-sampling ratio,
/// with and without conditioning. Classifiers do not depend on the ratio and
/// are trained once per conditioning setting.
pub fn negative_sampling_sweep(
    corpus: &Corpus,
    index: &SentenceIndex,
    labelings: &Labelings,
    encoder: &dyn Encoder,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if config.ks.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one k".into()));
    }
    let mut rows = Vec::new();
    let classifiers = [true, false]
        .map(|c| train_classifier(corpus, index, encoder, &config.train, c, config.classifier_input, Split::Train));
    let [conditioned_classifier, plain_classifier] = classifiers;
    let (conditioned_classifier, plain_classifier) = (conditioned_classifier?, plain_classifier?);
    for &k in &config.ks {
        let sampling = SamplingConfig { k_negatives: k, seed: config.sampling_seed };
        let samples = build_identifier_dataset(corpus, index, labelings, &sampling, Some(Split::Train))?;
        for conditioned in [true, false] {
            let identifier = train_identifier(&samples.samples, corpus, index, encoder, &config.train, conditioned)?;
            let classifier = if conditioned { &conditioned_classifier } else { &plain_classifier };
            let models = Models { identifier: Some(identifier), classifier: Some(classifier.clone()) };
            let mode = if conditioned { DiagnosticMode::EndToEnd } else { DiagnosticMode::Unconditioned };
            let run = run_diagnostic(corpus, index, labelings, mode, &models, encoder, &config.eval)?;
            let r = run.report;
            let collapsed = r.top1_acc.is_some_and(|t| t <= config.collapse_top1);
            if collapsed {
                log::warn!("k={k} conditioned={conditioned}: identifier collapsed (top-1 {:?})", r.top1_acc);
            }
            rows.push(SweepRow {
                k,
                conditioned,
                auroc: r.auroc,
                top1_acc: r.top1_acc,
                macro_p: r.macro_p,
                macro_r: r.macro_r,
                macro_f: r.macro_f,
                collapsed,
            });
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// One line per (k, conditioning): AUROC, top-1 accuracy and macro P/R/F.
pub fn render_sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>3}  {:<5} {:>6} {:>9} {:>6} {:>6} {:>6}\n",
        "k", "Cond", "AUROC", "Top1 Acc", "P", "R", "F"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>3}  {:<5} {:>6} {:>9} {:>6.3} {:>6.3} {:>6.3}{}",
            r.k,
            if r.conditioned { "yes" } else { "no" },
            opt(r.auroc),
            opt(r.top1_acc),
            r.macro_p,
            r.macro_r,
            r.macro_f,
            if r.collapsed { "  COLLAPSED" } else { "" }
        );
    }
    s
}
