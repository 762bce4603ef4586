//! Krippendorff's α for nominal data, with reliability data assembled from
//! the annotation stages of a corpus.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, Stage};
use crate::error::{Error, Result};

/// Ratings keyed by unit, then rater. The invalid-prompt answer is a category
/// of its own.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReliabilityData {
    pub ratings: BTreeMap<String, BTreeMap<String, Label>>,
}

impl ReliabilityData {
    pub fn insert(&mut self, unit: &str, rater: &str, label: Label) {
        self.ratings.entry(unit.to_string()).or_default().insert(rater.to_string(), label);
    }

    pub fn n_units(&self) -> usize {
        self.ratings.len()
    }

    pub fn n_raters(&self) -> usize {
        let mut raters: Vec<&String> = self.ratings.values().flat_map(BTreeMap::keys).collect();
        raters.sort();
        raters.dedup();
        raters.len()
    }

    /// Units with at least two ratings.
    pub fn n_pairable_units(&self) -> usize {
        self.ratings.values().filter(|r| r.len() >= 2).count()
    }
}

/// Which annotation stages act as raters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaterAssembly {
    /// Generation, annotation and verification records.
    All,
    /// Generation and annotation records only.
    GenAnn,
}

impl RaterAssembly {
    pub fn name(self) -> &'static str {
        match self {
            RaterAssembly::All => "all",
            RaterAssembly::GenAnn => "gen-ann",
        }
    }
}

impl FromStr for RaterAssembly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RaterAssembly::All),
            "gen-ann" => Ok(RaterAssembly::GenAnn),
            other => Err(Error::InvalidConfig(format!("unknown rater assembly {other:?} (expected all or gen-ann)"))),
        }
    }
}

/// One unit per prompt; rater ids are `stage#n`, the n-th record of that stage
/// for the prompt.
pub fn reliability_from_corpus(corpus: &Corpus, assembly: RaterAssembly) -> ReliabilityData {
    let mut data = ReliabilityData::default();
    for (prompt_id, annotations) in &corpus.annotations {
        let mut ordinal: BTreeMap<Stage, usize> = BTreeMap::new();
        for ann in annotations {
            if assembly == RaterAssembly::GenAnn && ann.stage == Stage::Verification {
                continue;
            }
            let n = ordinal.entry(ann.stage).or_default();
            data.insert(prompt_id, &format!("{}#{n}", ann.stage.name()), ann.label);
            *n += 1;
        }
    }
    data
}

/// Nominal α = 1 − Do/De from the coincidence matrix.
///
/// Units rated once are not pairable and are ignored. When every pairable
/// value falls in one category the expected disagreement is zero and α is
/// reported as 1.
pub fn krippendorff_alpha(data: &ReliabilityData) -> Result<f64> {
    let mut categories: BTreeMap<Label, usize> = BTreeMap::new();
    for ratings in data.ratings.values().filter(|r| r.len() >= 2) {
        for label in ratings.values() {
            let next = categories.len();
            categories.entry(*label).or_insert(next);
        }
    }
    if categories.is_empty() {
        return Err(Error::InsufficientPairableValues);
    }
    let k = categories.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for ratings in data.ratings.values().filter(|r| r.len() >= 2) {
        let mut counts = vec![0usize; k];
        for label in ratings.values() {
            counts[categories[label]] += 1;
        }
        let weight = 1.0 / (ratings.len() - 1) as f64;
        for c in 0..k {
            for d in 0..k {
                let pairs = if c == d { counts[c] * counts[c].saturating_sub(1) } else { counts[c] * counts[d] };
                coincidence[c][d] += pairs as f64 * weight;
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, Article, EvidenceSpan, IcoPrompt, Significance, Split};
    use proptest::prelude::*;

    fn two_raters(a: &[i64], b: &[i64]) -> ReliabilityData {
        let mut d = ReliabilityData::default();
        for (u, (x, y)) in a.iter().zip(b).enumerate() {
            d.insert(&format!("u{u}"), "A", Significance::from_code(*x).unwrap().into());
            d.insert(&format!("u{u}"), "B", Significance::from_code(*y).unwrap().into());
        }
        d
    }

    /// Pairwise-disagreement form: Do averages within-unit disagreeing pairs,
    /// De counts disagreeing pairs across all pairable values.
    fn brute_alpha(data: &ReliabilityData) -> f64 {
        let units: Vec<Vec<Label>> =
            data.ratings.values().filter(|r| r.len() >= 2).map(|r| r.values().copied().collect()).collect();
        let pooled: Vec<Label> = units.iter().flatten().copied().collect();
        let n = pooled.len() as f64;
        let mut d_o = 0.0;
        for u in &units {
            let mut disagreements = 0.0;
            for i in 0..u.len() {
                for j in 0..u.len() {
                    if i != j && u[i] != u[j] {
                        disagreements += 1.0;
                    }
                }
            }
            d_o += disagreements / (u.len() - 1) as f64;
        }
        d_o /= n;
        let mut d_e = 0.0;
        for i in 0..pooled.len() {
            for j in 0..pooled.len() {
                if i != j && pooled[i] != pooled[j] {
                    d_e += 1.0;
                }
            }
        }
        d_e /= n * (n - 1.0);
        if d_e == 0.0 {
            1.0
        } else {
            1.0 - d_o / d_e
        }
    }

    #[test]
    fn identical_ratings() {
        let d = two_raters(&[1, 0, -1, 1], &[1, 0, -1, 1]);
        assert_eq!(krippendorff_alpha(&d).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_fixture() {
        let d = two_raters(&[1, 1, 0, 1], &[1, 1, 0, 0]);
        let alpha = krippendorff_alpha(&d).unwrap();
        let by_hand = 1.0 - 0.25 / (30.0 / 56.0);
        assert!((alpha - by_hand).abs() < 1e-12);
        assert!((alpha - 0.5333).abs() < 1e-4);
        assert!((alpha - brute_alpha(&d)).abs() < 1e-9);
    }

    #[test]
    fn single_ratings_are_ignored() {
        let mut d = two_raters(&[1, 1, 0, 1], &[1, 1, 0, 0]);
        d.insert("lonely", "C", Label::Invalid);
        assert!((krippendorff_alpha(&d).unwrap() - 0.5333).abs() < 1e-4);
    }

    #[test]
    fn nothing_pairable() {
        let mut d = ReliabilityData::default();
        d.insert("u", "A", Label::Invalid);
        assert_eq!(krippendorff_alpha(&d).unwrap_err().code(), "INSUFFICIENT_PAIRABLE_VALUES");
        assert_eq!(krippendorff_alpha(&ReliabilityData::default()).unwrap_err().code(), "INSUFFICIENT_PAIRABLE_VALUES");
    }

    #[test]
    fn corpus_assemblies() {
        let article = Article { article_id: "a".into(), title: String::new(), text: "One. Two.".into(), abstract_end: 4 };
        let prompt = IcoPrompt {
            prompt_id: "p".into(),
            article_id: "a".into(),
            intervention: "i".into(),
            comparator: "c".into(),
            outcome: "o".into(),
        };
        let ann = |label: Label, stage| Annotation {
            prompt_id: "p".into(),
            label,
            spans: if label.is_invalid() { vec![] } else { vec![EvidenceSpan::new(0, 4)] },
            stage,
        };
        let corpus = Corpus::from_parts(
            [article],
            [prompt],
            [
                ann(Significance::Increased.into(), Stage::Generation),
                ann(Significance::Increased.into(), Stage::Annotation),
                ann(Significance::Decreased.into(), Stage::Annotation),
                ann(Label::Invalid, Stage::Verification),
            ],
            [("a".to_string(), Split::Train)],
        )
        .unwrap();
        let all = reliability_from_corpus(&corpus, RaterAssembly::All);
        assert_eq!(all.n_raters(), 4);
        assert!(all.ratings["p"].contains_key("annotation#1"));
        let gen_ann = reliability_from_corpus(&corpus, RaterAssembly::GenAnn);
        assert_eq!(gen_ann.n_raters(), 3);
        assert!(!gen_ann.ratings["p"].contains_key("verification#0"));
        assert_eq!("gen-ann".parse::<RaterAssembly>().unwrap(), RaterAssembly::GenAnn);
        assert!("both".parse::<RaterAssembly>().is_err());
    }

    fn label() -> impl Strategy<Value = Label> {
        (0usize..4).prop_map(|i| Significance::from_index(i).map_or(Label::Invalid, Label::from))
    }

    fn reliability() -> impl Strategy<Value = ReliabilityData> {
        prop::collection::vec(prop::collection::vec(prop::option::of(label()), 3), 1..12).prop_map(|units| {
            let mut d = ReliabilityData::default();
            for (u, raters) in units.into_iter().enumerate() {
                for (r, l) in raters.into_iter().enumerate() {
                    if let Some(l) = l {
                        d.insert(&format!("u{u}"), &format!("r{r}"), l);
                    }
                }
            }
            d
        })
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(d in reliability()) {
            match krippendorff_alpha(&d) {
                Ok(a) => prop_assert!((a - brute_alpha(&d)).abs() < 1e-9, "{a} vs {}", brute_alpha(&d)),
                Err(_) => prop_assert_eq!(d.n_pairable_units(), 0),
            }
        }

        #[test]
        fn invariant_under_relabeling(d in reliability(), perm in Just([3usize, 0, 2, 1]).prop_shuffle()) {
            let relabel = |l: Label| {
                let i = l.significance().map_or(3, Significance::index);
                Significance::from_index(perm[i]).map_or(Label::Invalid, Label::from)
            };
            let mut mapped = ReliabilityData::default();
            for (u, raters) in &d.ratings {
                for (r, l) in raters {
                    mapped.insert(u, r, relabel(*l));
                }
            }
            match (krippendorff_alpha(&d), krippendorff_alpha(&mapped)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }

        #[test]
        fn one_when_all_co_rated_units_agree(labels in prop::collection::vec(label(), 1..10), raters in 2usize..4) {
            let mut d = ReliabilityData::default();
            for (u, l) in labels.iter().enumerate() {
                for r in 0..raters {
                    d.insert(&format!("u{u}"), &format!("r{r}"), *l);
                }
            }
            prop_assert_eq!(krippendorff_alpha(&d).unwrap(), 1.0);
        }
    }
}
