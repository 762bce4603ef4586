use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Annotation, Corpus, EvidenceSpan, Split, Stage};
use crate::error::{Error, Result};
use crate::segmentation::{align_evidence, RuleSegmenter, Segmenter, SentenceIndex};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_prompts: usize,
    pub n_articles: usize,
    /// Gold label counts in class order: decreased, no difference, increased.
    pub label_counts: [usize; 3],
    /// Prompts whose every answer was "invalid prompt".
    pub n_invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
    pub total: SplitStats,
    pub prompts_per_article_mean: f64,
    pub pct_unique_interventions: f64,
    pub pct_unique_comparators: f64,
    pub pct_unique_outcomes: f64,
    pub pct_multi_sentence_spans: f64,
    pub pct_spans_outside_abstract: f64,
    pub pct_abstract_answerable: f64,
    pub pct_articles_with_label_diversity: f64,
    pub n_evidence_spans: usize,
    pub segmenter: String,
}

impl CorpusStats {
    pub fn split(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Case-fold, collapse internal whitespace and strip surrounding punctuation.
pub fn normalize_ico(s: &str) -> String {
    let folded = s.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn pct_distinct<'a>(values: impl Iterator<Item = &'a String>) -> f64 {
    let mut n = 0;
    let mut distinct = BTreeSet::new();
    for v in values {
        n += 1;
        distinct.insert(normalize_ico(v));
    }
    pct(distinct.len(), n)
}

fn is_answer_stage(a: &Annotation) -> bool {
    matches!(a.stage, Stage::Generation | Stage::Annotation)
}

/// Descriptive statistics using the built-in sentence splitter.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    corpus_stats_with(corpus, &RuleSegmenter)
}

/// Descriptive statistics; `segmenter` decides what counts as a multi-sentence span.
///
/// Uniqueness percentages are distinct normalized strings over prompts.
/// Span-level rates consider generation- and annotation-stage spans.
pub fn corpus_stats_with(corpus: &Corpus, segmenter: &dyn Segmenter) -> Result<CorpusStats> {
    if corpus.prompts.is_empty() || corpus.articles.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut per_split: BTreeMap<Split, SplitStats> = Split::ALL.iter().map(|&s| (s, SplitStats::default())).collect();
    for split in corpus.split.values() {
        per_split.get_mut(split).unwrap().n_articles += 1;
    }
    for prompt_id in corpus.prompts.keys() {
        let Some(split) = corpus.split_of_prompt(prompt_id) else { continue };
        let stats = per_split.get_mut(&split).unwrap();
        stats.n_prompts += 1;
        match corpus.gold_label(prompt_id) {
            Some(sig) => stats.label_counts[sig.index()] += 1,
            None => stats.n_invalid += 1,
        }
    }
    let mut total = SplitStats::default();
    for s in per_split.values() {
        total.n_prompts += s.n_prompts;
        total.n_articles += s.n_articles;
        total.n_invalid += s.n_invalid;
        for c in 0..3 {
            total.label_counts[c] += s.label_counts[c];
        }
    }

    let index = SentenceIndex::build(corpus, segmenter)?;
    let mut n_spans = 0;
    let mut n_multi = 0;
    let mut n_outside = 0;
    let mut n_answerable = 0;
    for (prompt_id, list) in &corpus.annotations {
        let article = corpus.article_of(prompt_id).expect("validated corpus");
        let sentences = index.get(&article.article_id);
        let in_abstract = |sp: &EvidenceSpan| article.has_abstract_boundary() && sp.char_end <= article.abstract_end;
        let mut answerable = false;
        for ann in list.iter().filter(|a| is_answer_stage(a)) {
            for span in &ann.spans {
                n_spans += 1;
                if align_evidence(sentences, std::slice::from_ref(span)).is_ok_and(|hits| hits.len() > 1) {
                    n_multi += 1;
                }
                if !in_abstract(span) {
                    n_outside += 1;
                }
            }
            if !ann.label.is_invalid() && ann.spans.iter().all(in_abstract) {
                answerable = true;
            }
        }
        if answerable {
            n_answerable += 1;
        }
    }

    let mut labels_by_article: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (prompt_id, prompt) in &corpus.prompts {
        if let Some(sig) = corpus.gold_label(prompt_id) {
            labels_by_article.entry(prompt.article_id.as_str()).or_default().insert(sig.index());
        }
    }
    let diverse = labels_by_article.values().filter(|s| s.len() >= 2).count();

    let n_prompts = corpus.prompts.len();
    Ok(CorpusStats {
        train: per_split.remove(&Split::Train).unwrap(),
        dev: per_split.remove(&Split::Dev).unwrap(),
        test: per_split.remove(&Split::Test).unwrap(),
        total,
        prompts_per_article_mean: n_prompts as f64 / corpus.articles.len() as f64,
        pct_unique_interventions: pct_distinct(corpus.prompts.values().map(|p| &p.intervention)),
        pct_unique_comparators: pct_distinct(corpus.prompts.values().map(|p| &p.comparator)),
        pct_unique_outcomes: pct_distinct(corpus.prompts.values().map(|p| &p.outcome)),
        pct_multi_sentence_spans: pct(n_multi, n_spans),
        pct_spans_outside_abstract: pct(n_outside, n_spans),
        pct_abstract_answerable: pct(n_answerable, n_prompts),
        pct_articles_with_label_diversity: pct(diverse, corpus.articles.len()),
        n_evidence_spans: n_spans,
        segmenter: segmenter.identity().to_string(),
    })
}

/// Split-by-split table in the layout of the release's corpus-statistics
/// appendix: prompts, articles and gold label counts (-1 / 0 / 1).
pub fn render_stats_table(stats: &CorpusStats) -> String {
    let cols = [&stats.train, &stats.dev, &stats.test, &stats.total];
    let mut s = format!("{:<28}{:>10}{:>10}{:>10}{:>10}\n", "", "Train", "Dev", "Test", "Total");
    let mut row = |name: &str, cell: &dyn Fn(&SplitStats) -> String| {
        s.push_str(&format!("{name:<28}"));
        for c in cols {
            s.push_str(&format!("{:>10}", cell(c)));
        }
        s.push('\n');
    };
    row("Number of prompts", &|c| c.n_prompts.to_string());
    row("Number of articles", &|c| c.n_articles.to_string());
    for (i, code) in ["-1", "0", "1"].iter().enumerate() {
        row(&format!("Label count ({code})"), &|c| c.label_counts[i].to_string());
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationAccuracy {
    pub gen_answer_acc: f64,
    pub gen_rationale_acc: f64,
    pub ann_answer_acc: f64,
    pub ann_rationale_acc: f64,
    pub n_generation: usize,
    pub n_annotation: usize,
    pub n_verified_prompts: usize,
}

/// Two rationales agree when some pair of their spans shares a character,
/// or when both are empty (both parties judged the prompt invalid).
fn rationales_agree(a: &[EvidenceSpan], b: &[EvidenceSpan]) -> bool {
    if a.is_empty() && b.is_empty() {
        return true;
    }
    a.iter().any(|x| b.iter().any(|y| x.overlaps(y.char_start, y.char_end)))
}

/// Share of generation- and annotation-stage answers and rationales that the
/// verifier confirmed, over every prompt carrying a verification record.
pub fn verification_accuracy(corpus: &Corpus) -> Result<VerificationAccuracy> {
    // [answers ok, rationales ok, total] per stage
    let mut gen = [0usize; 3];
    let mut ann = [0usize; 3];
    let mut n_verified = 0;
    for list in corpus.annotations.values() {
        let Some(verdict) = list.iter().find(|a| a.stage == Stage::Verification) else { continue };
        n_verified += 1;
        for a in list {
            let tally = match a.stage {
                Stage::Generation => &mut gen,
                Stage::Annotation => &mut ann,
                Stage::Verification => continue,
            };
            tally[0] += usize::from(a.label == verdict.label);
            tally[1] += usize::from(rationales_agree(&a.spans, &verdict.spans));
            tally[2] += 1;
        }
    }
    if gen[2] == 0 || ann[2] == 0 {
        return Err(Error::NoVerificationData);
    }
    let ratio = |n: usize, d: usize| n as f64 / d as f64;
    Ok(VerificationAccuracy {
        gen_answer_acc: ratio(gen[0], gen[2]),
        gen_rationale_acc: ratio(gen[1], gen[2]),
        ann_answer_acc: ratio(ann[0], ann[2]),
        ann_rationale_acc: ratio(ann[1], ann[2]),
        n_generation: gen[2],
        n_annotation: ann[2],
        n_verified_prompts: n_verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, IcoPrompt, Label, Significance};

    fn prompt(id: &str, article: &str, i: &str, c: &str, o: &str) -> IcoPrompt {
        IcoPrompt {
            prompt_id: id.into(),
            article_id: article.into(),
            intervention: i.into(),
            comparator: c.into(),
            outcome: o.into(),
        }
    }

    fn ann(prompt: &str, label: Label, spans: &[(usize, usize)], stage: Stage) -> Annotation {
        Annotation {
            prompt_id: prompt.into(),
            label,
            spans: spans.iter().map(|&(s, e)| EvidenceSpan::new(s, e)).collect(),
            stage,
        }
    }

    const TEXT: &str = "Aspirin cut pain. Placebo did nothing. Both were safe. Sleep improved.";

    fn article(id: &str) -> Article {
        Article { article_id: id.into(), title: "t".into(), text: TEXT.into(), abstract_end: 38 }
    }

    #[test]
    fn single_element_corpus() {
        let c = Corpus::from_parts(
            [article("a")],
            [prompt("p", "a", "aspirin", "placebo", "pain")],
            [ann("p", Significance::Decreased.into(), &[(0, 17)], Stage::Annotation)],
            [("a".to_string(), Split::Train)],
        )
        .unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.prompts_per_article_mean, 1.0);
        assert_eq!(s.pct_unique_interventions, 100.0);
        assert_eq!(s.pct_unique_comparators, 100.0);
        assert_eq!(s.pct_unique_outcomes, 100.0);
        assert_eq!(s.train.label_counts, [1, 0, 0]);
        assert_eq!(s.total.n_prompts, 1);
        assert_eq!(s.pct_abstract_answerable, 100.0);
        assert_eq!(s.pct_multi_sentence_spans, 0.0);
        let table = render_stats_table(&s);
        let line = table.lines().find(|l| l.starts_with("Label count (-1)")).unwrap();
        assert_eq!(line.split_whitespace().skip(3).collect::<Vec<_>>(), ["1", "0", "0", "1"]);
    }

    #[test]
    fn multi_sentence_and_diversity() {
        let c = Corpus::from_parts(
            [article("a"), article("b")],
            [
                prompt("p1", "a", "Aspirin", "placebo", "pain"),
                prompt("p2", "a", " aspirin. ", "Placebo", "sleep"),
                prompt("p3", "b", "ibuprofen", "placebo", "pain"),
            ],
            [
                ann("p1", Significance::Decreased.into(), &[(0, 30)], Stage::Generation),
                ann("p1", Significance::Decreased.into(), &[(0, 17)], Stage::Annotation),
                ann("p2", Significance::Increased.into(), &[(55, 69)], Stage::Annotation),
                ann("p3", Significance::NoDifference.into(), &[(18, 38)], Stage::Annotation),
            ],
            [("a".to_string(), Split::Train), ("b".to_string(), Split::Test)],
        )
        .unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.n_evidence_spans, 4);
        assert_eq!(s.pct_multi_sentence_spans, 25.0);
        assert_eq!(s.pct_articles_with_label_diversity, 50.0);
        // "aspirin" twice after normalization, plus "ibuprofen"
        assert!((s.pct_unique_interventions - 200.0 / 3.0).abs() < 1e-12);
        assert!((s.pct_unique_comparators - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.train.n_prompts + s.dev.n_prompts + s.test.n_prompts, s.total.n_prompts);
        assert_eq!(s.test.label_counts, [0, 1, 0]);
        assert!((s.pct_abstract_answerable - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.pct_spans_outside_abstract, 25.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert_eq!(corpus_stats(&Corpus::default()).unwrap_err().code(), "EMPTY_CORPUS");
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_ico("  Low-dose   ASPIRIN. "), "low-dose aspirin");
        assert_eq!(normalize_ico("(placebo)"), "placebo");
    }

    fn verified_corpus(gen_labels: &[Label]) -> Corpus {
        let n = gen_labels.len();
        let prompts: Vec<_> = (0..n).map(|i| prompt(&format!("p{i}"), "a", "x", "y", "z")).collect();
        let mut anns = Vec::new();
        for (i, g) in gen_labels.iter().enumerate() {
            let id = format!("p{i}");
            let inc: Label = Significance::Increased.into();
            let g_spans: &[(usize, usize)] = if g.is_invalid() { &[] } else { &[(0, 17)] };
            anns.push(ann(&id, *g, g_spans, Stage::Generation));
            anns.push(ann(&id, inc, &[(5, 10)], Stage::Annotation));
            anns.push(ann(&id, inc, &[(0, 8)], Stage::Verification));
        }
        Corpus::from_parts([article("a")], prompts, anns, [("a".to_string(), Split::Train)]).unwrap()
    }

    #[test]
    fn perfect_verification() {
        let inc: Label = Significance::Increased.into();
        let v = verification_accuracy(&verified_corpus(&[inc, inc, inc])).unwrap();
        assert_eq!(
            (v.gen_answer_acc, v.gen_rationale_acc, v.ann_answer_acc, v.ann_rationale_acc),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(v.n_verified_prompts, 3);
    }

    #[test]
    fn one_rejected_generation_answer() {
        let inc: Label = Significance::Increased.into();
        let dec: Label = Significance::Decreased.into();
        let v = verification_accuracy(&verified_corpus(&[inc, dec, inc, inc])).unwrap();
        assert_eq!(v.gen_answer_acc, 0.75);
        assert_eq!(v.gen_rationale_acc, 1.0);
        assert_eq!(v.ann_answer_acc, 1.0);
    }

    #[test]
    fn no_verification_records() {
        let c = Corpus::from_parts(
            [article("a")],
            [prompt("p", "a", "x", "y", "z")],
            [ann("p", Significance::Increased.into(), &[(0, 5)], Stage::Generation)],
            [("a".to_string(), Split::Train)],
        )
        .unwrap();
        assert_eq!(verification_accuracy(&c).unwrap_err().code(), "NO_VERIFICATION_DATA");
    }
}
