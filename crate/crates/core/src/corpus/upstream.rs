//! Importer for the published release layout (CSV prompt/annotation tables,
//! one plain-text file per article, one id list per split).
//!
//! The mapping lives in [`UpstreamLayout`] and can be overridden from a JSON
//! document, so the core model never depends on release column names.
//!
//! Mapping rules:
//! * Annotation rows are grouped by (prompt, user) in file order. The first
//!   group of a prompt is its generation-stage answer, later groups are
//!   annotation-stage answers.
//! * Verifier verdicts (`Valid Label` / `Valid Reasoning` flags) become one
//!   verification-stage annotation per prompt: the first accepted answer and
//!   the first accepted rationale. With no accepted answer the verdict is
//!   "invalid".
//! * Span offsets that fail validation are relocated by searching for the
//!   evidence text; spans that cannot be recovered are dropped and counted.
//! * The abstract ends where the first line starting with
//!   [`UpstreamLayout::body_marker`] begins. Articles without such a line get
//!   `abstract_end = 0` (unknown).

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Annotation, Article, Corpus, EvidenceSpan, IcoPrompt, Label, Significance, Split, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpstreamColumns {
    pub prompt_id: String,
    pub article_id: String,
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
    pub user_id: String,
    pub label: String,
    pub label_code: String,
    pub evidence_text: String,
    pub evidence_start: String,
    pub evidence_end: String,
    pub valid_label: String,
    pub valid_reasoning: String,
}

impl Default for UpstreamColumns {
    fn default() -> Self {
        Self {
            prompt_id: "PromptID".into(),
            article_id: "PMCID".into(),
            intervention: "Intervention".into(),
            comparator: "Comparator".into(),
            outcome: "Outcome".into(),
            user_id: "UserID".into(),
            label: "Label".into(),
            label_code: "Label Code".into(),
            evidence_text: "Annotations".into(),
            evidence_start: "Evidence Start".into(),
            evidence_end: "Evidence End".into(),
            valid_label: "Valid Label".into(),
            valid_reasoning: "Valid Reasoning".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpstreamLayout {
    pub prompts_file: PathBuf,
    pub annotations_file: PathBuf,
    pub text_dir: PathBuf,
    /// File name of an article's text; `{id}` is replaced by the article id.
    pub text_file_pattern: String,
    pub train_ids: PathBuf,
    pub dev_ids: PathBuf,
    pub test_ids: PathBuf,
    pub body_marker: String,
    pub title_marker: String,
    pub columns: UpstreamColumns,
}

impl Default for UpstreamLayout {
    fn default() -> Self {
        Self {
            prompts_file: "prompts_merged.csv".into(),
            annotations_file: "annotations_merged.csv".into(),
            text_dir: "txt_files".into(),
            text_file_pattern: "PMC{id}.txt".into(),
            train_ids: "splits/train_article_ids.txt".into(),
            dev_ids: "splits/validation_article_ids.txt".into(),
            test_ids: "splits/test_article_ids.txt".into(),
            body_marker: "BODY".into(),
            title_marker: "TITLE:".into(),
            columns: UpstreamColumns::default(),
        }
    }
}

impl UpstreamLayout {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        crate::jsonl::read_json(path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportCounts {
    pub articles: usize,
    pub prompts: usize,
    pub annotations: usize,
    pub relocated_spans: usize,
    pub dropped_spans: usize,
    pub dropped_annotations: usize,
    pub dropped_prompts: usize,
    pub articles_without_abstract_boundary: usize,
}

#[derive(Debug, Clone)]
pub struct ImportReport {
    pub corpus: Corpus,
    pub counts: ImportCounts,
    pub warnings: Vec<String>,
}

/// Abstract boundary: char offset of the first line starting with `marker`.
pub fn find_abstract_end(text: &str, marker: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if offset > 0 && line.trim_start().starts_with(marker) {
            return Some(offset);
        }
        offset += line.chars().count();
    }
    None
}

fn parse_label(text: &str, code: &str) -> Option<Label> {
    let t = text.trim().to_lowercase();
    if t.contains("invalid") {
        return Some(Label::Invalid);
    }
    if t.contains("increase") {
        return Some(Significance::Increased.into());
    }
    if t.contains("decrease") {
        return Some(Significance::Decreased.into());
    }
    if t.contains("no sig") || t.contains("no diff") {
        return Some(Significance::NoDifference.into());
    }
    match code.trim().parse::<f64>().ok().map(|c| c as i64) {
        Some(2) => Some(Label::Invalid),
        Some(c) => Significance::from_code(c).map(Label::Valid),
        None => None,
    }
}

fn truthy(value: &str) -> bool {
    matches!(value.trim().to_ascii_lowercase().as_str(), "1" | "1.0" | "true" | "t" | "yes" | "y")
}

fn char_offset_of(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let needle = needle.trim();
    if needle.is_empty() {
        return None;
    }
    let byte = haystack.find(needle)?;
    let start = haystack[..byte].chars().count();
    Some((start, start + needle.chars().count()))
}

struct Table {
    path: PathBuf,
    headers: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let rows = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.get(name).copied().ok_or_else(|| Error::MalformedRecord {
            file: self.path.clone(),
            line: 1,
            message: format!("missing column {name:?}"),
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedRecord { file: path.to_path_buf(), line, message: format!("{other:?}") },
    }
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(body.split_whitespace().map(|s| s.trim_matches(',').to_string()).filter(|s| !s.is_empty()).collect())
}

struct RawGroup {
    user: String,
    label: Option<Label>,
    spans: Vec<EvidenceSpan>,
    valid_label: bool,
    valid_reasoning: bool,
}

/// Import the release rooted at `root` into a validated canonical corpus.
pub fn import_release(root: &Path, layout: &UpstreamLayout) -> Result<ImportReport> {
    let cols = &layout.columns;
    let mut counts = ImportCounts::default();
    let mut warnings = Vec::new();

    let mut split = BTreeMap::new();
    for (s, file) in [(Split::Train, &layout.train_ids), (Split::Dev, &layout.dev_ids), (Split::Test, &layout.test_ids)] {
        for id in read_ids(&root.join(file))? {
            if split.insert(id.clone(), s).is_some() {
                return Err(Error::InvalidCorpus(format!("article {id} listed in more than one split")));
            }
        }
    }

    let mut articles = BTreeMap::new();
    for id in split.keys() {
        let path = root.join(&layout.text_dir).join(layout.text_file_pattern.replace("{id}", id));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let title = text
            .lines()
            .find_map(|l| l.trim_start().strip_prefix(layout.title_marker.as_str()))
            .unwrap_or_else(|| text.lines().next().unwrap_or(""))
            .trim()
            .to_string();
        let abstract_end = find_abstract_end(&text, &layout.body_marker).unwrap_or_else(|| {
            counts.articles_without_abstract_boundary += 1;
            0
        });
        articles.insert(id.clone(), Article { article_id: id.clone(), title, text, abstract_end });
    }

    let prompts_table = Table::read(&root.join(&layout.prompts_file))?;
    let (c_pid, c_aid, c_i, c_c, c_o) = (
        prompts_table.column(&cols.prompt_id)?,
        prompts_table.column(&cols.article_id)?,
        prompts_table.column(&cols.intervention)?,
        prompts_table.column(&cols.comparator)?,
        prompts_table.column(&cols.outcome)?,
    );
    let mut prompts = BTreeMap::new();
    for row in &prompts_table.rows {
        let get = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let prompt = IcoPrompt {
            prompt_id: get(c_pid),
            article_id: get(c_aid),
            intervention: get(c_i),
            comparator: get(c_c),
            outcome: get(c_o),
        };
        if !articles.contains_key(&prompt.article_id) {
            warnings.push(format!("prompt {} references article {} outside every split", prompt.prompt_id, prompt.article_id));
            counts.dropped_prompts += 1;
            continue;
        }
        if super::check_prompt(&prompt).is_err() {
            warnings.push(format!("prompt {} has an empty ICO element", prompt.prompt_id));
            counts.dropped_prompts += 1;
            continue;
        }
        prompts.insert(prompt.prompt_id.clone(), prompt);
    }

    let ann_table = Table::read(&root.join(&layout.annotations_file))?;
    let c_pid = ann_table.column(&cols.prompt_id)?;
    let c_user = ann_table.column(&cols.user_id)?;
    let c_label = ann_table.column(&cols.label)?;
    let c_code = ann_table.headers.get(&cols.label_code).copied();
    let c_text = ann_table.headers.get(&cols.evidence_text).copied();
    let c_start = ann_table.headers.get(&cols.evidence_start).copied();
    let c_end = ann_table.headers.get(&cols.evidence_end).copied();
    let c_vl = ann_table.headers.get(&cols.valid_label).copied();
    let c_vr = ann_table.headers.get(&cols.valid_reasoning).copied();
    let has_verdicts = c_vl.is_some();

    let mut groups: BTreeMap<String, Vec<RawGroup>> = BTreeMap::new();
    for (row_no, row) in ann_table.rows.iter().enumerate() {
        let get = |i: Option<usize>| i.and_then(|i| row.get(i)).unwrap_or("").to_string();
        let prompt_id = get(Some(c_pid)).trim().to_string();
        let Some(prompt) = prompts.get(&prompt_id) else { continue };
        let article = &articles[&prompt.article_id];
        let user = get(Some(c_user)).trim().to_string();
        let label = parse_label(&get(Some(c_label)), &get(c_code));
        if label.is_none() {
            warnings.push(format!("row {}: unrecognized label for prompt {prompt_id}", row_no + 2));
        }

        let evidence = get(c_text);
        let mut span = None;
        if !matches!(label, Some(Label::Invalid)) {
            let len = article.char_len();
            let parsed = get(c_start).trim().parse::<f64>().ok().zip(get(c_end).trim().parse::<f64>().ok());
            if let Some((s, e)) = parsed.filter(|&(s, e)| s >= 0.0 && e > s && (e as usize) <= len) {
                let (s, e) = (s as usize, e as usize);
                if !article.slice(s, e).trim().is_empty() {
                    span = Some(EvidenceSpan::new(s, e));
                }
            }
            if span.is_none() {
                if let Some((s, e)) = char_offset_of(&article.text, &evidence) {
                    counts.relocated_spans += 1;
                    span = Some(EvidenceSpan::new(s, e));
                } else {
                    counts.dropped_spans += 1;
                }
            }
        }

        let list = groups.entry(prompt_id).or_default();
        let idx = match list.iter().position(|g| g.user == user) {
            Some(i) => i,
            None => {
                list.push(RawGroup {
                    user,
                    label,
                    spans: Vec::new(),
                    valid_label: truthy(&get(c_vl)),
                    valid_reasoning: truthy(&get(c_vr)),
                });
                list.len() - 1
            }
        };
        if let Some(sp) = span {
            if !list[idx].spans.contains(&sp) {
                list[idx].spans.push(sp);
            }
        }
    }

    let mut annotations = Vec::new();
    for (prompt_id, list) in &groups {
        let mut kept = 0;
        for (i, g) in list.iter().enumerate() {
            let Some(label) = g.label else {
                counts.dropped_annotations += 1;
                continue;
            };
            let spans = if label.is_invalid() { Vec::new() } else { g.spans.clone() };
            if !label.is_invalid() && spans.is_empty() {
                counts.dropped_annotations += 1;
                continue;
            }
            let stage = if i == 0 { Stage::Generation } else { Stage::Annotation };
            annotations.push(Annotation { prompt_id: prompt_id.clone(), label, spans, stage });
            kept += 1;
        }
        if kept == 0 {
            continue;
        }
        if has_verdicts {
            let accepted = list.iter().find(|g| g.valid_label && g.label.is_some());
            let label = accepted.and_then(|g| g.label).unwrap_or(Label::Invalid);
            let spans = if label.is_invalid() {
                Vec::new()
            } else {
                list.iter()
                    .find(|g| g.valid_reasoning && !g.spans.is_empty())
                    .or(accepted)
                    .map(|g| g.spans.clone())
                    .unwrap_or_default()
            };
            if label.is_invalid() || !spans.is_empty() {
                annotations.push(Annotation { prompt_id: prompt_id.clone(), label, spans, stage: Stage::Verification });
            }
        }
    }

    let annotated: std::collections::BTreeSet<&str> = annotations.iter().map(|a| a.prompt_id.as_str()).collect();
    let before = prompts.len();
    prompts.retain(|id, _| annotated.contains(id.as_str()));
    counts.dropped_prompts += before - prompts.len();

    counts.articles = articles.len();
    counts.prompts = prompts.len();
    counts.annotations = annotations.len();
    let corpus = Corpus::from_parts(articles.into_values(), prompts.into_values(), annotations, split)?;
    Ok(ImportReport { corpus, counts, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const ARTICLE_1: &str = "TITLE: Aspirin for headache\n\nABSTRACT.RESULTS: Aspirin reduced pain compared with placebo.\nBODY.METHODS: We randomized adults.\nBODY.RESULTS: Sleep was unchanged between groups.\n";
    const ARTICLE_2: &str = "TITLE: Zinc and colds\nABSTRACT: Zinc shortened colds.\nBODY: Details.\n";

    fn write_release(root: &Path) {
        fs::create_dir_all(root.join("txt_files")).unwrap();
        fs::create_dir_all(root.join("splits")).unwrap();
        fs::write(root.join("txt_files/PMC1.txt"), ARTICLE_1).unwrap();
        fs::write(root.join("txt_files/PMC2.txt"), ARTICLE_2).unwrap();
        fs::write(root.join("splits/train_article_ids.txt"), "1\n").unwrap();
        fs::write(root.join("splits/validation_article_ids.txt"), "").unwrap();
        fs::write(root.join("splits/test_article_ids.txt"), "2\n").unwrap();
        fs::write(
            root.join("prompts_merged.csv"),
            "PromptID,PMCID,Outcome,Intervention,Comparator\n10,1,pain,aspirin,placebo\n11,1,sleep,aspirin,placebo\n12,2,cold duration,zinc,placebo\n13,9,x,y,z\n",
        )
        .unwrap();
        let (s, e) = {
            let start = ARTICLE_1.find("Aspirin reduced").unwrap();
            (start, start + "Aspirin reduced pain".len())
        };
        fs::write(
            root.join("annotations_merged.csv"),
            format!(
                "UserID,PromptID,PMCID,Valid Label,Valid Reasoning,Label,Annotations,Label Code,In Abstract,Evidence Start,Evidence End\n\
                 0,10,1,True,True,significantly decreased,Aspirin reduced pain,-1,True,{s},{e}\n\
                 3,10,1,False,True,no significant difference,Aspirin reduced pain,0,True,-1,-1\n\
                 0,11,1,True,True,no significant difference,Sleep was unchanged,0,False,0,0\n\
                 0,12,2,False,False,invalid prompt,,2,False,,\n\
                 5,12,2,False,False,significantly decreased,not present anywhere,-1,True,500,600\n"
            ),
        )
        .unwrap();
    }

    #[test]
    fn imports_fixture_release() {
        let dir = tempfile::tempdir().unwrap();
        write_release(dir.path());
        let report = import_release(dir.path(), &UpstreamLayout::default()).unwrap();
        let c = &report.corpus;
        assert_eq!(c.articles.len(), 2);
        assert_eq!(c.prompts.len(), 3, "prompt on unknown article dropped");
        assert_eq!(report.counts.dropped_prompts, 1);
        assert_eq!(c.split["2"], Split::Test);

        let a1 = &c.articles["1"];
        assert_eq!(a1.title, "Aspirin for headache");
        assert_eq!(&a1.text[..a1.abstract_end], "TITLE: Aspirin for headache\n\nABSTRACT.RESULTS: Aspirin reduced pain compared with placebo.\n");

        let p10 = &c.annotations["10"];
        assert_eq!(p10.len(), 3);
        assert_eq!(p10[0].stage, Stage::Generation);
        assert_eq!(p10[1].stage, Stage::Annotation);
        assert_eq!(p10[1].spans, p10[0].spans, "bad offsets relocated by text search");
        assert_eq!(p10[2].stage, Stage::Verification);
        assert_eq!(p10[2].label, Label::Valid(Significance::Decreased));
        assert_eq!(c.gold_label("10"), Some(Significance::NoDifference));

        // prompt 11's zero-width offsets relocated
        let sp = c.annotations["11"][0].spans[0];
        assert_eq!(a1.slice(sp.char_start, sp.char_end), "Sleep was unchanged");
        assert_eq!(report.counts.relocated_spans, 2);

        // prompt 12: generation says invalid; annotator's span unrecoverable
        let p12 = &c.annotations["12"];
        assert_eq!(p12.len(), 2);
        assert_eq!(p12[0].label, Label::Invalid);
        assert_eq!(p12[1].stage, Stage::Verification);
        assert_eq!(p12[1].label, Label::Invalid);
        assert_eq!(report.counts.dropped_spans, 1);
        assert_eq!(report.counts.dropped_annotations, 1);
    }

    #[test]
    fn missing_release_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = import_release(dir.path(), &UpstreamLayout::default()).unwrap_err();
        assert_eq!(err.code(), "MISSING_FILE");
    }

    #[test]
    fn abstract_end_detection() {
        assert_eq!(find_abstract_end("ABSTRACT: x\nBODY: y", "BODY"), Some(12));
        assert_eq!(find_abstract_end("only abstract", "BODY"), None);
        assert_eq!(find_abstract_end("Ω\n  BODY.X: y", "BODY"), Some(2));
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_label("significantly increased", ""), Some(Significance::Increased.into()));
        assert_eq!(parse_label("", "-1"), Some(Significance::Decreased.into()));
        assert_eq!(parse_label("Invalid Prompt", "2"), Some(Label::Invalid));
        assert_eq!(parse_label("???", ""), None);
    }
}
