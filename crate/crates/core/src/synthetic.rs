//! Planted-signal corpora for exercising the pipeline at desk scale.
//!
//! Every article carries one prompt. Filler sentences are drawn from a
//! vocabulary that never overlaps the evidence vocabulary, so a bag-of-words
//! identifier can find the evidence sentence.
//!
//! In [`IcoSignal::Independent`] corpora the prompt text is drawn without
//! regard to the label and the evidence sentence states the direction. In
//! [`IcoSignal::Dependent`] corpora the evidence sentence is the same for all
//! labels and the direction can only be read from the outcome named in the
//! prompt, so a classifier has to see the prompt to do better than chance.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Article, Corpus, EvidenceSpan, IcoPrompt, Significance, Split, Stage};
use crate::error::{Error, Result};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcoSignal {
    Independent,
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_prompts: usize,
    pub sentences_per_article: usize,
    /// Fixed evidence sentence index; random per article when `None`.
    pub evidence_position: Option<usize>,
    pub ico_signal: IcoSignal,
    /// Sentences that make up the abstract.
    pub abstract_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_prompts: 200,
            sentences_per_article: 10,
            evidence_position: None,
            ico_signal: IcoSignal::Independent,
            abstract_sentences: 4,
            seed: 0,
        }
    }
}

const INTERVENTIONS: &[&str] = &[
    "aspirin", "metformin", "atorvastatin", "lisinopril", "omeprazole", "sertraline", "ibuprofen",
    "insulin glargine", "vitamin d", "melatonin", "zinc", "exercise training", "acupuncture",
    "dexamethasone", "amoxicillin", "heparin",
];

const COMPARATORS: &[&str] = &["placebo", "usual care", "no treatment", "standard therapy", "sham procedure", "waitlist"];

const OUTCOMES: &[&str] = &[
    "systolic pressure", "pain score", "hba1c", "ldl cholesterol", "sleep latency", "hospital stay",
    "infection rate", "fatigue index", "walking distance", "anxiety scale", "wound healing time",
    "readmission", "body weight", "quality of life", "serum ferritin", "heart rate",
];

/// Outcome vocabularies tied to a direction, used by dependent corpora.
const DEPENDENT_OUTCOMES: [&[&str]; 3] = [
    &["mortality", "relapse", "nausea", "hypoglycaemia", "thrombosis"],
    &["appetite", "hearing", "eyesight", "handgrip", "vocabulary"],
    &["remission", "survival", "mobility", "clearance", "recovery"],
];

const FILLER_SUBJECTS: &[&str] = &[
    "Participants", "Patients", "Volunteers", "Adults", "Children", "Investigators", "Nurses", "Clinicians",
];

const FILLER_VERBS: &[&str] = &["were recruited from", "were screened at", "attended", "were followed at", "visited", "were enrolled at"];

const FILLER_PLACES: &[&str] = &[
    "three hospitals", "rural clinics", "urban practices", "two universities", "community centres",
    "outpatient wards", "regional sites", "primary care units",
];

const FILLER_TAILS: &[&str] = &[
    "during the winter months", "over two years", "after informed consent", "before randomisation",
    "according to the protocol", "by trained staff", "using sealed envelopes", "in four waves",
];

fn filler(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {} {}.",
        FILLER_SUBJECTS.choose(rng).unwrap(),
        FILLER_VERBS.choose(rng).unwrap(),
        FILLER_PLACES.choose(rng).unwrap(),
        FILLER_TAILS.choose(rng).unwrap()
    )
}

fn evidence_independent(label: Significance, outcome: &str) -> String {
    let finding = match label {
        Significance::Decreased => format!("significantly decreased {outcome}, with lower values and a clear reduction"),
        Significance::NoDifference => format!("showed no significant difference in {outcome}, with similar values and no change"),
        Significance::Increased => format!("significantly increased {outcome}, with higher values and a clear rise"),
    };
    format!("Compared with control the intervention {finding} (p value reported).")
}

fn evidence_dependent() -> String {
    "Compared with control the primary endpoint differed between groups (p value reported).".to_string()
}

/// Build a planted corpus. Articles are assigned to train, dev and test in a
/// 6/2/2 rotation by position, and each split holds the three labels in
/// equal shares (up to rounding).
pub fn planted_corpus(config: &SyntheticConfig) -> Result<Corpus> {
    if config.n_prompts == 0 || config.sentences_per_article == 0 {
        return Err(Error::InvalidConfig("synthetic corpus needs prompts and sentences".into()));
    }
    if config.evidence_position.is_some_and(|p| p >= config.sentences_per_article) {
        return Err(Error::InvalidConfig("evidence position beyond article length".into()));
    }
    let split_of = |i: usize| match i % 10 {
        0..=5 => Split::Train,
        6 | 7 => Split::Dev,
        _ => Split::Test,
    };
    // labels are balanced within every split, then shuffled inside it
    let mut labels = vec![Significance::NoDifference; config.n_prompts];
    for s in Split::ALL {
        let members: Vec<usize> = (0..config.n_prompts).filter(|&i| split_of(i) == s).collect();
        let mut cycle: Vec<Significance> = (0..members.len()).map(|j| Significance::ALL[j % 3]).collect();
        cycle.shuffle(&mut keyed_rng(config.seed, &format!("synthetic-labels/{}", s.name())));
        for (i, label) in members.into_iter().zip(cycle) {
            labels[i] = label;
        }
    }

    let mut articles = Vec::new();
    let mut prompts = Vec::new();
    let mut annotations = Vec::new();
    let mut split = Vec::new();
    for (i, label) in labels.into_iter().enumerate() {
        let article_id = format!("syn{i:05}");
        let mut rng = keyed_rng(config.seed, &article_id);
        let intervention = INTERVENTIONS.choose(&mut rng).unwrap().to_string();
        let comparator = COMPARATORS.choose(&mut rng).unwrap().to_string();
        let (outcome, evidence) = match config.ico_signal {
            IcoSignal::Independent => {
                let o = OUTCOMES.choose(&mut rng).unwrap().to_string();
                let e = evidence_independent(label, &o);
                (o, e)
            }
            IcoSignal::Dependent => {
                (DEPENDENT_OUTCOMES[label.index()].choose(&mut rng).unwrap().to_string(), evidence_dependent())
            }
        };
        let position = config
            .evidence_position
            .unwrap_or_else(|| rng.random_range(0..config.sentences_per_article));

        let mut text = String::new();
        let mut span = EvidenceSpan::new(0, 0);
        let mut abstract_end = 0;
        for s in 0..config.sentences_per_article {
            if s > 0 {
                text.push(' ');
            }
            let sentence = if s == position { evidence.clone() } else { filler(&mut rng) };
            let start = text.chars().count();
            text.push_str(&sentence);
            let end = text.chars().count();
            if s == position {
                span = EvidenceSpan::new(start, end);
            }
            if s + 1 == config.abstract_sentences.min(config.sentences_per_article) {
                abstract_end = end;
            }
        }
        articles.push(Article { article_id: article_id.clone(), title: format!("Synthetic trial {i}"), text, abstract_end });
        let prompt_id = format!("{article_id}-p0");
        prompts.push(IcoPrompt { prompt_id: prompt_id.clone(), article_id: article_id.clone(), intervention, comparator, outcome });
        annotations.push(Annotation { prompt_id, label: label.into(), spans: vec![span], stage: Stage::Annotation });
        split.push((article_id, split_of(i)));
    }
    Corpus::from_parts(articles, prompts, annotations, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{build_labelings, RuleSegmenter, SentenceIndex};

    #[test]
    fn shape_and_alignment() {
        let cfg = SyntheticConfig { n_prompts: 30, evidence_position: Some(7), ..Default::default() };
        let c = planted_corpus(&cfg).unwrap();
        assert_eq!(c.prompts.len(), 30);
        assert_eq!(c.prompts_in(Split::Train).len(), 18);
        let idx = SentenceIndex::build(&c, &RuleSegmenter).unwrap();
        let lab = build_labelings(&c, &idx);
        for (id, l) in &lab {
            let article = c.article_of(id).unwrap();
            assert_eq!(idx.get(&article.article_id).len(), 10);
            assert_eq!(l.evidence_indices.iter().copied().collect::<Vec<_>>(), vec![7]);
        }
        let counts = Significance::ALL.map(|s| c.prompts.keys().filter(|p| c.gold_label(p) == Some(s)).count());
        assert_eq!(counts, [10, 10, 10]);
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig { n_prompts: 12, ico_signal: IcoSignal::Dependent, ..Default::default() };
        assert_eq!(planted_corpus(&cfg).unwrap(), planted_corpus(&cfg).unwrap());
        assert_ne!(planted_corpus(&cfg).unwrap(), planted_corpus(&SyntheticConfig { seed: 1, ..cfg }).unwrap());
    }

    #[test]
    fn dependent_outcome_reveals_label() {
        let cfg = SyntheticConfig { n_prompts: 30, ico_signal: IcoSignal::Dependent, ..Default::default() };
        let c = planted_corpus(&cfg).unwrap();
        for (id, p) in &c.prompts {
            let label = c.gold_label(id).unwrap();
            assert!(DEPENDENT_OUTCOMES[label.index()].contains(&p.outcome.as_str()));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(planted_corpus(&SyntheticConfig { n_prompts: 0, ..Default::default() }).is_err());
        assert!(planted_corpus(&SyntheticConfig { evidence_position: Some(10), ..Default::default() }).is_err());
    }
}
