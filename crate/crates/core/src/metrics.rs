//! Evaluation quantities: macro-averaged P/R/F, AUROC, top-1 identification
//! accuracy, confusion matrices and per-class breakdowns.
//!
//! Undefined precision or recall (a class with no predictions or no gold
//! instances) counts as 0 in every macro average.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Significance;
use crate::error::{Error, Result};
use crate::segmentation::Labelings;

/// Rows are gold classes, columns predicted classes, both in
/// (decreased, no difference, increased) order.
pub type Confusion = [[usize; 3]; 3];

/// One prompt's end-to-end output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePrediction {
    pub prompt_id: String,
    /// Sentence chosen by the identifier; `None` when the classifier was fed
    /// gold evidence or the ICO alone.
    pub chosen_sentence_index: Option<usize>,
    pub identifier_score: Option<f64>,
    pub predicted_label: Significance,
    pub class_probabilities: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: [ClassScores; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn confusion_matrix(gold: &[Significance], pred: &[Significance]) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(gold.len(), pred.len()));
    }
    let mut m = [[0usize; 3]; 3];
    for (g, p) in gold.iter().zip(pred) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

pub fn prf_from_confusion(m: &Confusion) -> MacroPrf {
    let per_class: [ClassScores; 3] = std::array::from_fn(|c| {
        let tp = m[c][c];
        let predicted: usize = (0..3).map(|g| m[g][c]).sum();
        let gold: usize = m[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        ClassScores { precision, recall, f1: harmonic(precision, recall) }
    });
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    MacroPrf {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        per_class,
    }
}

/// Macro-averaged precision, recall and F1 over the three significance classes.
pub fn macro_prf(gold: &[Significance], pred: &[Significance]) -> Result<MacroPrf> {
    let m = confusion_matrix(gold, pred)?;
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(prf_from_confusion(&m))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
///
/// Computed from ranks in `O(n log n)`; the result is bit-identical to the
/// quadratic pairwise count because both reduce to the same integer `2U`
/// divided once.
pub fn auroc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() {
        return Err(Error::EmptyClass("positive"));
    }
    if neg_scores.is_empty() {
        return Err(Error::EmptyClass("negative"));
    }
    if let Some(&bad) = pos_scores.iter().chain(neg_scores).find(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(bad));
    }
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    let pairs = 2 * pos_scores.len() as u128 * neg_scores.len() as u128;
    Ok(twice_u as f64 / pairs as f64)
}

fn is_hit(p: &PipelinePrediction, labelings: &Labelings) -> Result<bool> {
    let labeling = labelings.get(&p.prompt_id).ok_or_else(|| Error::MissingLabeling(p.prompt_id.clone()))?;
    Ok(p.chosen_sentence_index.is_some_and(|i| labeling.evidence_indices.contains(&i)))
}

/// Fraction of prompts whose chosen sentence is one of its evidence sentences.
pub fn top1_accuracy(predictions: &[PipelinePrediction], labelings: &Labelings) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyEval);
    }
    let mut hits = 0;
    for p in predictions {
        hits += usize::from(is_hit(p, labelings)?);
    }
    Ok(ratio(hits, predictions.len()))
}

/// Per-gold-class identification accuracy and the raw label confusion matrix.
///
/// A class with no gold prompts reports an identification accuracy of 0.
pub fn per_class_breakdown(
    predictions: &[PipelinePrediction],
    gold: &[Significance],
    labelings: &Labelings,
) -> Result<([f64; 3], Confusion)> {
    let pred: Vec<Significance> = predictions.iter().map(|p| p.predicted_label).collect();
    let confusion = confusion_matrix(gold, &pred)?;
    let mut hits = [0usize; 3];
    let mut totals = [0usize; 3];
    for (p, g) in predictions.iter().zip(gold) {
        totals[g.index()] += 1;
        hits[g.index()] += usize::from(is_hit(p, labelings)?);
    }
    Ok((std::array::from_fn(|c| ratio(hits[c], totals[c])), confusion))
}

/// Everything reported for one evaluation run.
///
/// Identification fields are `None` for modes that bypass the identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_prompts: usize,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f: f64,
    pub per_class: [ClassScores; 3],
    pub confusion: Confusion,
    pub per_class_id_acc: Option<[f64; 3]>,
    pub auroc: Option<f64>,
    pub top1_acc: Option<f64>,
}

impl EvalReport {
    /// Assemble a report. `gold` is aligned with `predictions`; pass
    /// `labelings` and pooled identifier scores when an identifier was used.
    pub fn build(
        predictions: &[PipelinePrediction],
        gold: &[Significance],
        labelings: Option<&Labelings>,
        identifier_scores: Option<(&[f64], &[f64])>,
    ) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::EmptyEval);
        }
        let pred: Vec<Significance> = predictions.iter().map(|p| p.predicted_label).collect();
        let prf = macro_prf(gold, &pred)?;
        let confusion = confusion_matrix(gold, &pred)?;
        let (per_class_id_acc, top1_acc) = match labelings {
            Some(l) => (Some(per_class_breakdown(predictions, gold, l)?.0), Some(top1_accuracy(predictions, l)?)),
            None => (None, None),
        };
        let auroc = identifier_scores.map(|(pos, neg)| auroc(pos, neg)).transpose()?;
        Ok(Self {
            n_prompts: predictions.len(),
            macro_p: prf.precision,
            macro_r: prf.recall,
            macro_f: prf.f1,
            per_class: prf.per_class,
            confusion,
            per_class_id_acc,
            auroc,
            top1_acc,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Rows of macro P/R/F, one per named run.
pub fn render_prf_table(rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$}  {:>6} {:>6} {:>6}\n", "Model", "P", "R", "F");
    for (name, r) in rows {
        let _ = writeln!(s, "{name:<width$}  {:>6.3} {:>6.3} {:>6.3}", r.macro_p, r.macro_r, r.macro_f);
    }
    s
}

/// Row-normalized confusion matrix with per-class identification accuracy.
pub fn render_breakdown_table(report: &EvalReport) -> String {
    let mut s = format!("{:<6} {:>6} {:>6} {:>6} {:>8}\n", "Gold", "Sig-", "Sig~", "Sig+", "ID Acc.");
    for c in Significance::ALL {
        let row = report.confusion[c.index()];
        let total: usize = row.iter().sum();
        let _ = write!(s, "{:<6}", c.short_name());
        for n in row {
            let _ = write!(s, " {:>6.3}", ratio(n, total));
        }
        let _ = writeln!(s, " {:>8}", opt(report.per_class_id_acc.map(|a| a[c.index()])));
    }
    s
}

/// Identifier quality alongside end-to-end scores, one row per named run.
pub fn render_identifier_table(rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$}  {:>6} {:>9} {:>6} {:>6} {:>6}\n", "Run", "AUROC", "Top1 Acc", "P", "R", "F");
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{name:<width$}  {:>6} {:>9} {:>6.3} {:>6.3} {:>6.3}",
            opt(r.auroc),
            opt(r.top1_acc),
            r.macro_p,
            r.macro_r,
            r.macro_f
        );
    }
    s
}
