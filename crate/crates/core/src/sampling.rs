//! Identifier training sets: each evidence sentence paired with sentences
//! drawn uniformly, without replacement, from the same article's
//! non-evidence sentences.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::jsonl::write_jsonl;
use crate::rng::keyed_rng;
use crate::segmentation::{Labelings, SentenceIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Negatives drawn per positive.
    pub k_negatives: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { k_negatives: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrainingSample {
    pub prompt_id: String,
    pub sentence_index: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentifierDataset {
    pub samples: Vec<TrainingSample>,
    /// Prompts whose article had no non-evidence sentence to draw from.
    pub no_negatives_available: Vec<String>,
}

impl IdentifierDataset {
    pub fn count(&self, polarity: Polarity) -> usize {
        self.samples.iter().filter(|s| s.polarity == polarity).count()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.samples)
    }
}

/// Build identifier samples for every valid prompt (optionally one split only).
///
/// Each prompt draws from its own RNG stream keyed by `(seed, prompt_id)`.
/// Invalid prompts are skipped.
pub fn build_identifier_dataset(
    corpus: &Corpus,
    sentences: &SentenceIndex,
    labelings: &Labelings,
    config: &SamplingConfig,
    split: Option<Split>,
) -> Result<IdentifierDataset> {
    if config.k_negatives == 0 {
        return Err(Error::InvalidConfig("k_negatives must be at least 1".into()));
    }
    let mut out = IdentifierDataset::default();
    for (prompt_id, prompt) in &corpus.prompts {
        if split.is_some_and(|s| corpus.split.get(&prompt.article_id) != Some(&s)) {
            continue;
        }
        if corpus.gold_label(prompt_id).is_none() {
            continue;
        }
        let labeling = labelings.get(prompt_id).ok_or_else(|| Error::MissingLabeling(prompt_id.clone()))?;
        let n_sentences = sentences.get(&prompt.article_id).len();
        let candidates: Vec<usize> =
            (0..n_sentences).filter(|i| !labeling.evidence_indices.contains(i)).collect();
        if candidates.is_empty() {
            log::warn!("prompt {prompt_id}: no non-evidence sentences to sample");
            out.no_negatives_available.push(prompt_id.clone());
        }
        let mut rng = keyed_rng(config.seed, prompt_id);
        for &positive in &labeling.evidence_indices {
            out.samples.push(TrainingSample {
                prompt_id: prompt_id.clone(),
                sentence_index: positive,
                polarity: Polarity::Positive,
            });
            let mut drawn: Vec<usize> = if candidates.len() <= config.k_negatives {
                candidates.clone()
            } else {
                rand::seq::index::sample(&mut rng, candidates.len(), config.k_negatives)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect()
            };
            drawn.sort_unstable();
            out.samples.extend(drawn.into_iter().map(|i| TrainingSample {
                prompt_id: prompt_id.clone(),
                sentence_index: i,
                polarity: Polarity::Negative,
            }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::corpus::{Annotation, Article, EvidenceSpan, IcoPrompt, Label, Significance, Stage};
    use crate::segmentation::{build_labelings, RuleSegmenter, SentenceLabeling};
    use proptest::prelude::*;

    /// `n_articles` articles of `n_sentences` sentences each; prompt `i` of an
    /// article cites sentences `evidence[i]`.
    fn fixture(n_articles: usize, n_sentences: usize, evidence: &[Vec<usize>]) -> (Corpus, SentenceIndex, Labelings) {
        let sentence_len = 8; // "Sent 00." plus a space
        let mut articles = Vec::new();
        let mut prompts = Vec::new();
        let mut anns = Vec::new();
        let mut split = Vec::new();
        for a in 0..n_articles {
            let text: Vec<String> = (0..n_sentences).map(|i| format!("Sent {i:02}.")).collect();
            let id = format!("a{a}");
            articles.push(Article { article_id: id.clone(), title: String::new(), text: text.join(" "), abstract_end: 1 });
            split.push((id.clone(), Split::Train));
            for (p, ev) in evidence.iter().enumerate() {
                let pid = format!("{id}-p{p}");
                prompts.push(IcoPrompt {
                    prompt_id: pid.clone(),
                    article_id: id.clone(),
                    intervention: "i".into(),
                    comparator: "c".into(),
                    outcome: "o".into(),
                });
                let label = if ev.is_empty() { Label::Invalid } else { Significance::Increased.into() };
                anns.push(Annotation {
                    prompt_id: pid,
                    label,
                    spans: ev
                        .iter()
                        .map(|&s| EvidenceSpan::new(s * (sentence_len + 1), s * (sentence_len + 1) + sentence_len))
                        .collect(),
                    stage: Stage::Annotation,
                });
            }
        }
        let corpus = Corpus::from_parts(articles, prompts, anns, split).unwrap();
        let index = SentenceIndex::build(&corpus, &RuleSegmenter).unwrap();
        let labelings = build_labelings(&corpus, &index);
        (corpus, index, labelings)
    }

    #[test]
    fn k4_one_positive() {
        let (c, idx, lab) = fixture(1, 10, &[vec![3]]);
        assert_eq!(lab["a0-p0"].evidence_indices, BTreeSet::from([3]));
        let ds = build_identifier_dataset(&c, &idx, &lab, &SamplingConfig { k_negatives: 4, seed: 1 }, None).unwrap();
        assert_eq!(ds.count(Polarity::Positive), 1);
        assert_eq!(ds.count(Polarity::Negative), 4);
    }

    #[test]
    fn k16_capped_by_availability() {
        let (c, idx, lab) = fixture(1, 10, &[vec![3]]);
        let ds = build_identifier_dataset(&c, &idx, &lab, &SamplingConfig { k_negatives: 16, seed: 1 }, None).unwrap();
        assert_eq!(ds.count(Polarity::Positive), 1);
        assert_eq!(ds.count(Polarity::Negative), 9);
    }

    #[test]
    fn deterministic_given_seed() {
        let (c, idx, lab) = fixture(5, 12, &[vec![1], vec![4, 5]]);
        let cfg = SamplingConfig { k_negatives: 3, seed: 42 };
        let a = build_identifier_dataset(&c, &idx, &lab, &cfg, None).unwrap();
        let b = build_identifier_dataset(&c, &idx, &lab, &cfg, None).unwrap();
        assert_eq!(a, b);
        let other = build_identifier_dataset(&c, &idx, &lab, &SamplingConfig { seed: 43, ..cfg }, None).unwrap();
        assert_ne!(a.samples, other.samples);
    }

    #[test]
    fn invalid_prompts_skipped_and_starved_prompts_flagged() {
        let (c, idx, lab) = fixture(1, 2, &[vec![0, 1], vec![]]);
        let ds = build_identifier_dataset(&c, &idx, &lab, &SamplingConfig::default(), None).unwrap();
        assert_eq!(ds.count(Polarity::Positive), 2);
        assert_eq!(ds.count(Polarity::Negative), 0);
        assert_eq!(ds.no_negatives_available, vec!["a0-p0".to_string()]);
        assert!(ds.samples.iter().all(|s| s.prompt_id == "a0-p0"));
    }

    #[test]
    fn missing_labeling_and_zero_k() {
        let (c, idx, _) = fixture(1, 4, &[vec![1]]);
        let err = build_identifier_dataset(&c, &idx, &Labelings::new(), &SamplingConfig::default(), None).unwrap_err();
        assert_eq!(err.code(), "MISSING_LABELING");
        let err = build_identifier_dataset(&c, &idx, &Labelings::new(), &SamplingConfig { k_negatives: 0, seed: 0 }, None)
            .unwrap_err();
        assert_eq!(err.code(), "INVALID_CONFIG");
    }

    proptest! {
        #[test]
        fn sampling_laws(
            n_sentences in 2usize..15,
            raw_evidence in prop::collection::vec(prop::collection::btree_set(0usize..15, 1..4), 1..4),
            k in 1usize..20,
            seed in any::<u64>(),
        ) {
            let evidence: Vec<Vec<usize>> = raw_evidence
                .into_iter()
                .map(|s| s.into_iter().filter(|&i| i < n_sentences).collect::<Vec<_>>())
                .filter(|v| !v.is_empty())
                .collect();
            prop_assume!(!evidence.is_empty());
            let (c, idx, lab) = fixture(2, n_sentences, &evidence);
            let cfg = SamplingConfig { k_negatives: k, seed };
            let ds = build_identifier_dataset(&c, &idx, &lab, &cfg, None).unwrap();

            let mut per_prompt: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            for s in &ds.samples {
                let ev = &lab[&s.prompt_id].evidence_indices;
                let e = per_prompt.entry(s.prompt_id.as_str()).or_default();
                match s.polarity {
                    Polarity::Positive => { prop_assert!(ev.contains(&s.sentence_index)); e.0 += 1; }
                    Polarity::Negative => { prop_assert!(!ev.contains(&s.sentence_index)); e.1 += 1; }
                }
            }
            for (pid, (pos, neg)) in per_prompt {
                let available = n_sentences - lab[pid].evidence_indices.len();
                prop_assert!(neg <= k * pos);
                prop_assert_eq!(neg, pos * k.min(available));
            }

            // a prompt's draws do not depend on which other prompts are present
            let solo: Labelings = lab.iter().take(1).map(|(k, v)| (k.clone(), v.clone())).collect::<BTreeMap<String, SentenceLabeling>>();
            let first = solo.keys().next().unwrap().clone();
            let mut sub = c.clone();
            sub.prompts.retain(|id, _| *id == first);
            sub.annotations.retain(|id, _| *id == first);
            let ds_solo = build_identifier_dataset(&sub, &idx, &solo, &cfg, None).unwrap();
            let from_full: Vec<_> = ds.samples.iter().filter(|s| s.prompt_id == first).cloned().collect();
            prop_assert_eq!(ds_solo.samples, from_full);
        }
    }
}
