use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use evinf_core::agreement::{krippendorff_alpha, reliability_from_corpus, RaterAssembly};
use evinf_core::corpus::upstream::{import_release, UpstreamLayout};
use evinf_core::corpus::{
    corpus_stats_with, render_stats_table, save_canonical, verification_accuracy, Corpus, Split, ANNOTATIONS_FILE,
    ARTICLES_FILE, PROMPTS_FILE, SPLITS_FILE,
};
use evinf_core::encoding::{encode_text, Encoder, HashingEncoder};
use evinf_core::jsonl::{write_json, write_jsonl};
use evinf_core::metrics::{render_breakdown_table, render_identifier_table, render_prf_table};
use evinf_core::pipeline::{
    load_model, negative_sampling_sweep, render_sweep_table, run_diagnostic, save_model, train_classifier,
    train_identifier, DiagnosticMode, EvalOptions, InputMode, Model, Models, SweepConfig, TrainConfig,
};
use evinf_core::sampling::{build_identifier_dataset, Polarity, SamplingConfig};
use evinf_core::segmentation::{build_labelings, Labelings, SentenceIndex};
use evinf_core::subsetting::derive_abstract_subset;
use evinf_core::synthetic::{planted_corpus, IcoSignal, SyntheticConfig};
use serde::Deserialize;
use serde_json::json;

use crate::config::{pick, FileConfig, Inputs};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::resources::{self, DEFAULT_ENCODER, DEFAULT_SEGMENTER};
use crate::{Cli, Command, CorpusArgs, Format, Signal, Stage, TrainArgs};

const CANONICAL_FILES: [&str; 4] = [ARTICLES_FILE, PROMPTS_FILE, ANNOTATIONS_FILE, SPLITS_FILE];

struct Ctx {
    file: FileConfig,
    inputs: Inputs,
}

struct Loaded {
    corpus: Corpus,
    index: SentenceIndex,
    labelings: Labelings,
    path: PathBuf,
    segmenter: String,
}

impl Ctx {
    fn corpus_path(&self, args: &CorpusArgs) -> CliResult<PathBuf> {
        let path = args
            .corpus
            .clone()
            .or_else(|| self.file.corpus.clone())
            .ok_or_else(|| CliError::Usage("no corpus given (use --corpus or the config file)".into()))?;
        Ok(self.inputs.resolve(&path))
    }

    fn format(&self, args: &CorpusArgs) -> CliResult<Format> {
        match (args.format, &self.file.format) {
            (Some(f), _) => Ok(f),
            (None, Some(s)) => Format::from_str(s, true).map_err(|_| CliError::Usage(format!("unknown corpus format {s:?}"))),
            (None, None) => Ok(Format::Canonical),
        }
    }

    fn segmenter_spec(&self, args: &CorpusArgs) -> String {
        pick(args.segmenter.clone(), self.file.segmenter.clone(), DEFAULT_SEGMENTER.to_string())
    }

    fn corpus(&self, args: &CorpusArgs) -> CliResult<(Corpus, PathBuf)> {
        let path = self.corpus_path(args)?;
        Ok((resources::corpus(&path, self.format(args)?)?, path))
    }

    fn load(&self, args: &CorpusArgs) -> CliResult<Loaded> {
        let (corpus, path) = self.corpus(args)?;
        let segmenter = resources::segmenter(&self.segmenter_spec(args))?;
        let index = SentenceIndex::build(&corpus, &*segmenter)?;
        let labelings = build_labelings(&corpus, &index);
        Ok(Loaded { corpus, index, labelings, path, segmenter: segmenter.identity().to_string() })
    }

    fn encoder_spec(&self, flag: Option<String>) -> String {
        pick(flag, self.file.encoder.clone(), DEFAULT_ENCODER.to_string())
    }

    fn train_config(&self, args: &TrainArgs, encoder_spec: &str) -> TrainConfig {
        let defaults = TrainConfig::default();
        TrainConfig {
            epochs: pick(args.epochs, self.file.epochs, defaults.epochs),
            learning_rate: pick(args.lr, self.file.lr, resources::default_learning_rate(encoder_spec)),
            batch_size: pick(args.batch_size, self.file.batch_size, defaults.batch_size),
            seed: pick(args.seed, self.file.seed, defaults.seed),
        }
    }

    fn split(&self, flag: Option<String>, default: &str) -> CliResult<String> {
        Ok(pick(flag, self.file.split.clone(), default.to_string()))
    }
}

fn parse_split(s: &str) -> CliResult<Split> {
    Ok(s.parse()?)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes"));
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let data_root = cli.data_root.clone().or_else(|| file.data_root.clone());
    let ctx = Ctx { file, inputs: Inputs { data_root } };
    match cli.command {
        Command::Ingest { release, layout, out } => ingest(&ctx, &release, layout.as_deref(), &out),
        Command::Validate { corpus } => validate(&ctx, &corpus),
        Command::Stats { corpus, out } => stats(&ctx, &corpus, out.as_deref()),
        Command::SubsetAbstracts { corpus, out } => subset(&ctx, &corpus, &out),
        Command::BuildSamples { corpus, k, seed, split, out } => build_samples(&ctx, &corpus, k, seed, split, &out),
        Command::Train { stage, corpus, train, conditioned, input_mode, k, sample_seed, out } => {
            let opts = TrainOpts { stage, conditioned, input_mode, k, sample_seed };
            train_stage(&ctx, &corpus, &train, opts, &out)
        }
        Command::Eval { mode, corpus, identifier, classifier, encoder, split, workers, out } => {
            let opts = EvalOpts { mode, identifier, classifier, encoder, split, workers };
            eval(&ctx, &corpus, opts, out.as_deref())
        }
        Command::SweepNegatives { corpus, train, ks, sample_seed, split, workers, out } => {
            sweep(&ctx, &corpus, &train, ks, sample_seed, split, workers, out.as_deref())
        }
        Command::Synth { n_prompts, sentences, evidence_position, ico_signal, seed, out } => {
            let ico_signal = match ico_signal {
                Signal::Independent => IcoSignal::Independent,
                Signal::Dependent => IcoSignal::Dependent,
            };
            let config = SyntheticConfig {
                n_prompts,
                sentences_per_article: sentences,
                evidence_position,
                ico_signal,
                seed,
                ..SyntheticConfig::default()
            };
            synth(&config, &out)
        }
        Command::ServeEncoder { dim, seed } => serve_encoder(dim, seed),
    }
}

fn write_canonical(corpus: &Corpus, out: &Path, manifest: &mut Manifest) -> CliResult<()> {
    save_canonical(corpus, out)?;
    for name in CANONICAL_FILES {
        manifest.record(&out.join(name))?;
    }
    Ok(())
}

fn ingest(ctx: &Ctx, release: &Path, layout: Option<&Path>, out: &Path) -> CliResult<()> {
    let release = ctx.inputs.resolve(release);
    let layout_path = layout.map(|p| ctx.inputs.resolve(p));
    let layout = match &layout_path {
        Some(p) => UpstreamLayout::from_json_file(p)?,
        None => UpstreamLayout::default(),
    };
    let report = import_release(&release, &layout)?;
    let mut manifest = Manifest::new("ingest", &json!({ "release": release, "layout": layout }), None, None);
    write_canonical(&report.corpus, out, &mut manifest)?;
    let report_path = out.join("import_report.json");
    write_json(&report_path, &json!({ "counts": report.counts, "warnings": report.warnings }))?;
    manifest.record(&report_path)?;
    manifest.write_in(out)?;
    print_json(&json!({ "counts": report.counts, "warnings": report.warnings.len() }));
    Ok(())
}

fn validate(ctx: &Ctx, args: &CorpusArgs) -> CliResult<()> {
    let (corpus, path) = ctx.corpus(args)?;
    let per_split: serde_json::Map<String, serde_json::Value> = Split::ALL
        .iter()
        .map(|s| (s.name().to_string(), json!(corpus.prompts_in(*s).len())))
        .collect();
    print_json(&json!({
        "valid": true,
        "corpus": path,
        "articles": corpus.articles.len(),
        "prompts": corpus.prompts.len(),
        "annotations": corpus.annotations.values().map(Vec::len).sum::<usize>(),
        "prompts_per_split": per_split,
    }));
    Ok(())
}

fn optional<T>(result: evinf_core::Result<T>, expected: &str) -> CliResult<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.code() == expected => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn stats(ctx: &Ctx, args: &CorpusArgs, out: Option<&Path>) -> CliResult<()> {
    let (corpus, path) = ctx.corpus(args)?;
    let segmenter = resources::segmenter(&ctx.segmenter_spec(args))?;
    let stats = corpus_stats_with(&corpus, &*segmenter)?;
    let mut alpha = serde_json::Map::new();
    for assembly in [RaterAssembly::All, RaterAssembly::GenAnn] {
        let a = optional(krippendorff_alpha(&reliability_from_corpus(&corpus, assembly)), "INSUFFICIENT_PAIRABLE_VALUES")?;
        alpha.insert(assembly.name().to_string(), json!(a));
    }
    let verification = optional(verification_accuracy(&corpus), "NO_VERIFICATION_DATA")?;

    print!("{}", render_stats_table(&stats));
    println!();
    let lines = [
        ("Prompts per article (mean)", format!("{:.2}", stats.prompts_per_article_mean)),
        ("Unique interventions (%)", format!("{:.1}", stats.pct_unique_interventions)),
        ("Unique comparators (%)", format!("{:.1}", stats.pct_unique_comparators)),
        ("Unique outcomes (%)", format!("{:.1}", stats.pct_unique_outcomes)),
        ("Multi-sentence spans (%)", format!("{:.1}", stats.pct_multi_sentence_spans)),
        ("Spans outside abstract (%)", format!("{:.1}", stats.pct_spans_outside_abstract)),
        ("Answerable from abstract (%)", format!("{:.1}", stats.pct_abstract_answerable)),
        ("Articles with label diversity (%)", format!("{:.1}", stats.pct_articles_with_label_diversity)),
        ("Krippendorff alpha (all)", fmt_opt(alpha["all"].as_f64(), 3)),
        ("Krippendorff alpha (gen-ann)", fmt_opt(alpha["gen-ann"].as_f64(), 3)),
    ];
    for (name, value) in lines {
        println!("{name:<36}{value:>10}");
    }
    println!();
    println!("{:<36}{:>10}{:>10}", "Verification accuracy (%)", "Answer", "Rationale");
    let pct = |v: Option<f64>| fmt_opt(v.map(|x| 100.0 * x), 1);
    let v = verification.as_ref();
    println!("{:<36}{:>10}{:>10}", "Generator", pct(v.map(|v| v.gen_answer_acc)), pct(v.map(|v| v.gen_rationale_acc)));
    println!("{:<36}{:>10}{:>10}", "Annotator", pct(v.map(|v| v.ann_answer_acc)), pct(v.map(|v| v.ann_rationale_acc)));

    if let Some(out) = out {
        write_json(out, &json!({ "stats": stats, "alpha": alpha, "verification": verification }))?;
        let config = json!({ "corpus": path, "segmenter": segmenter.identity() });
        let mut manifest = Manifest::new("stats", &config, None, None);
        manifest.record(out)?;
        manifest.write_beside(out)?;
    }
    Ok(())
}

fn subset(ctx: &Ctx, args: &CorpusArgs, out: &Path) -> CliResult<()> {
    let loaded = ctx.load(args)?;
    let subset = derive_abstract_subset(&loaded.corpus, &loaded.index)?;
    let config = json!({ "corpus": loaded.path, "segmenter": loaded.segmenter });
    let mut manifest = Manifest::new("subset-abstracts", &config, None, None);
    write_canonical(&subset.corpus, out, &mut manifest)?;
    manifest.write_in(out)?;
    print_json(&json!(subset.counts));
    Ok(())
}

fn build_samples(
    ctx: &Ctx,
    args: &CorpusArgs,
    k: Option<usize>,
    seed: Option<u64>,
    split: Option<String>,
    out: &Path,
) -> CliResult<()> {
    let loaded = ctx.load(args)?;
    let defaults = SamplingConfig::default();
    let sampling = SamplingConfig {
        k_negatives: pick(k, ctx.file.k, defaults.k_negatives),
        seed: pick(seed, ctx.file.sample_seed, defaults.seed),
    };
    let split = ctx.split(split, "train")?;
    let restrict = if split == "all" { None } else { Some(parse_split(&split)?) };
    let dataset = build_identifier_dataset(&loaded.corpus, &loaded.index, &loaded.labelings, &sampling, restrict)?;
    dataset.write_jsonl(out)?;
    let config = json!({ "corpus": loaded.path, "segmenter": loaded.segmenter, "sampling": sampling, "split": split });
    let mut manifest = Manifest::new("build-samples", &config, Some(sampling.seed), None);
    manifest.record(out)?;
    manifest.write_beside(out)?;
    print_json(&json!({
        "positives": dataset.count(Polarity::Positive),
        "negatives": dataset.count(Polarity::Negative),
        "prompts_without_negatives": dataset.no_negatives_available.len(),
    }));
    Ok(())
}

struct TrainOpts {
    stage: Stage,
    conditioned: Option<bool>,
    input_mode: Option<String>,
    k: Option<usize>,
    sample_seed: Option<u64>,
}

fn train_stage(ctx: &Ctx, args: &CorpusArgs, train: &TrainArgs, opts: TrainOpts, out: &Path) -> CliResult<()> {
    let loaded = ctx.load(args)?;
    let spec = ctx.encoder_spec(train.encoder.clone());
    let encoder = resources::encoder(&spec)?;
    let config = ctx.train_config(train, &spec);
    let conditioned = pick(opts.conditioned, ctx.file.conditioned, true);
    let mut settings = json!({
        "corpus": loaded.path,
        "segmenter": loaded.segmenter,
        "encoder": encoder.identity(),
        "train": config,
        "conditioned": conditioned,
    });
    let (model, best_epoch, heldout) = match opts.stage {
        Stage::Identifier => {
            let defaults = SamplingConfig::default();
            let sampling = SamplingConfig {
                k_negatives: pick(opts.k, ctx.file.k, defaults.k_negatives),
                seed: pick(opts.sample_seed, ctx.file.sample_seed, defaults.seed),
            };
            let samples = build_identifier_dataset(&loaded.corpus, &loaded.index, &loaded.labelings, &sampling, Some(Split::Train))?;
            let m = train_identifier(&samples.samples, &loaded.corpus, &loaded.index, &*encoder, &config, conditioned)?;
            settings["stage"] = json!("identifier");
            settings["sampling"] = json!(sampling);
            let (e, h) = (m.best_epoch, m.heldout_macro_f.clone());
            (Model::Identifier(m), e, h)
        }
        Stage::Classifier => {
            let mode: InputMode =
                pick(opts.input_mode, ctx.file.input_mode.clone(), InputMode::GoldSentence.name().to_string()).parse()?;
            let m = train_classifier(&loaded.corpus, &loaded.index, &*encoder, &config, conditioned, mode, Split::Train)?;
            settings["stage"] = json!("classifier");
            settings["input_mode"] = json!(mode);
            let (e, h) = (m.best_epoch, m.heldout_macro_f.clone());
            (Model::Classifier(m), e, h)
        }
    };
    save_model(out, &model)?;
    let mut manifest = Manifest::new("train", &settings, Some(config.seed), Some(encoder.identity()));
    manifest.record(out)?;
    manifest.write_beside(out)?;
    print_json(&json!({ "model": out, "best_epoch": best_epoch, "heldout_macro_f": heldout }));
    Ok(())
}

struct EvalOpts {
    mode: Option<String>,
    identifier: Option<PathBuf>,
    classifier: Option<PathBuf>,
    encoder: Option<String>,
    split: Option<String>,
    workers: Option<usize>,
}

/// Encoder spec that rebuilds a hashing encoder from its identity string.
fn spec_from_identity(identity: &str) -> Option<String> {
    let rest = identity.strip_prefix("hashing-bow-v1/d")?;
    let (dim, seed) = rest.split_once("/s")?;
    let spec = format!("hashing:{dim}:{seed}");
    (HashingEncoder::new(dim.parse().ok()?, seed.parse().ok()?).identity() == identity).then_some(spec)
}

fn load_stage(ctx: &Ctx, path: Option<PathBuf>) -> CliResult<Option<(Model, PathBuf)>> {
    path.map(|p| {
        let p = ctx.inputs.resolve(&p);
        Ok((load_model(&p)?, p))
    })
    .transpose()
}

fn eval(ctx: &Ctx, args: &CorpusArgs, opts: EvalOpts, out: Option<&Path>) -> CliResult<()> {
    let mode: DiagnosticMode = pick(opts.mode, ctx.file.mode.clone(), DiagnosticMode::EndToEnd.name().to_string()).parse()?;
    let identifier = load_stage(ctx, opts.identifier.or_else(|| ctx.file.identifier.clone()))?;
    let classifier = load_stage(ctx, opts.classifier.or_else(|| ctx.file.classifier.clone()))?;
    let mut models = Models::default();
    if let Some((m, p)) = &identifier {
        match m {
            Model::Identifier(m) => models.identifier = Some(m.clone()),
            Model::Classifier(_) => return Err(CliError::Usage(format!("{} holds a classifier, not an identifier", p.display()))),
        }
    }
    if let Some((m, p)) = &classifier {
        match m {
            Model::Classifier(m) => models.classifier = Some(m.clone()),
            Model::Identifier(_) => return Err(CliError::Usage(format!("{} holds an identifier, not a classifier", p.display()))),
        }
    }
    let inferred = models.classifier.as_ref().and_then(|c| spec_from_identity(&c.encoder_identity));
    let spec = match opts.encoder.or_else(|| ctx.file.encoder.clone()).or(inferred) {
        Some(s) => s,
        None => DEFAULT_ENCODER.to_string(),
    };
    let encoder = resources::encoder(&spec)?;
    let loaded = ctx.load(args)?;
    let options = EvalOptions {
        split: parse_split(&ctx.split(opts.split, "test")?)?,
        workers: pick(opts.workers, ctx.file.workers, 0),
    };
    let run = run_diagnostic(&loaded.corpus, &loaded.index, &loaded.labelings, mode, &models, &*encoder, &options)?;

    let rows = [(mode.name().to_string(), &run.report)];
    if run.report.top1_acc.is_some() {
        print!("{}", render_identifier_table(&rows));
    } else {
        print!("{}", render_prf_table(&rows));
    }
    println!();
    print!("{}", render_breakdown_table(&run.report));

    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| evinf_core::Error::Io { path: out.to_path_buf(), source: e })?;
        let report = out.join("report.json");
        let predictions = out.join("predictions.jsonl");
        write_json(&report, &json!({ "mode": mode.name(), "report": run.report }))?;
        write_jsonl(&predictions, &run.predictions)?;
        let config = json!({
            "corpus": loaded.path,
            "segmenter": loaded.segmenter,
            "mode": mode.name(),
            "split": options.split,
            "identifier": identifier.as_ref().map(|(_, p)| p),
            "classifier": classifier.as_ref().map(|(_, p)| p),
        });
        let mut manifest = Manifest::new("eval", &config, None, Some(encoder.identity()));
        manifest.record(&report)?;
        manifest.record(&predictions)?;
        manifest.write_in(out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    ctx: &Ctx,
    args: &CorpusArgs,
    train: &TrainArgs,
    ks: Option<Vec<usize>>,
    sample_seed: Option<u64>,
    split: Option<String>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> CliResult<()> {
    let loaded = ctx.load(args)?;
    let spec = ctx.encoder_spec(train.encoder.clone());
    let encoder = resources::encoder(&spec)?;
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        ks: pick(ks, ctx.file.ks.clone(), defaults.ks),
        sampling_seed: pick(sample_seed, ctx.file.sample_seed, defaults.sampling_seed),
        train: ctx.train_config(train, &spec),
        eval: EvalOptions {
            split: parse_split(&ctx.split(split, defaults.eval.split.name())?)?,
            workers: pick(workers, ctx.file.workers, defaults.eval.workers),
        },
        ..defaults
    };
    let rows = negative_sampling_sweep(&loaded.corpus, &loaded.index, &loaded.labelings, &*encoder, &config)?;
    let table = render_sweep_table(&rows);
    print!("{table}");
    if let Some(out) = out {
        let json_path = out.join("sweep.json");
        let table_path = out.join("sweep.txt");
        write_json(&json_path, &rows)?;
        fs::write(&table_path, &table).map_err(|e| evinf_core::Error::Io { path: table_path.clone(), source: e })?;
        let settings = json!({ "corpus": loaded.path, "segmenter": loaded.segmenter, "sweep": config });
        let mut manifest = Manifest::new("sweep-negatives", &settings, Some(config.train.seed), Some(encoder.identity()));
        manifest.record(&json_path)?;
        manifest.record(&table_path)?;
        manifest.write_in(out)?;
    }
    Ok(())
}

fn synth(config: &SyntheticConfig, out: &Path) -> CliResult<()> {
    let corpus = planted_corpus(config)?;
    let mut manifest = Manifest::new("synth", config, Some(config.seed), None);
    write_canonical(&corpus, out, &mut manifest)?;
    manifest.write_in(out)?;
    print_json(&json!({ "prompts": corpus.prompts.len(), "out": out }));
    Ok(())
}

#[derive(Deserialize)]
struct EncodeRequest {
    text: String,
}

/// Answer encode requests on stdin until it closes.
fn serve_encoder(dim: usize, seed: u64) -> CliResult<()> {
    if dim == 0 {
        return Err(CliError::Usage("--dim must be positive".into()));
    }
    let encoder = HashingEncoder::new(dim, seed);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let io_err = |e: io::Error| evinf_core::Error::Io { path: "<stdio>".into(), source: e };
    writeln!(out, "{}", json!({ "identity": encoder.identity(), "dim": dim })).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    for line in io::stdin().lock().lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<EncodeRequest>(&line) {
            Ok(req) => match encode_text(&encoder, &req.text) {
                Ok(v) => json!({ "vector": v }),
                Err(e) => json!({ "error": e.to_string() }),
            },
            Err(e) => json!({ "error": format!("bad request: {e}") }),
        };
        writeln!(out, "{reply}").map_err(io_err)?;
        out.flush().map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_identity_round_trips_to_a_spec() {
        let id = HashingEncoder::new(64, 3).identity().to_string();
        assert_eq!(spec_from_identity(&id).as_deref(), Some("hashing:64:3"));
        assert_eq!(spec_from_identity("scibert-v1"), None);
    }
}
