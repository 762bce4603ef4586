//! Artifacts written by one stage load back unchanged in the next.

use evinf_core::corpus::{corpus_stats, load_corpus, save_canonical, CorpusFormat, Split};
use evinf_core::encoding::{encode_text, CachedEncoder, Encoder, HashingEncoder};
use evinf_core::pipeline::{load_model, save_model, train_classifier, InputMode, Model, TrainConfig};
use evinf_core::sampling::{build_identifier_dataset, SamplingConfig};
use evinf_core::segmentation::{build_labelings, load_sentence_cache, save_sentence_cache, RuleSegmenter, SentenceIndex};
use evinf_core::subsetting::derive_abstract_subset;
use evinf_core::synthetic::{planted_corpus, SyntheticConfig};

#[test]
fn canonical_corpus_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(&SyntheticConfig { n_prompts: 40, ..Default::default() }).unwrap();
    save_canonical(&corpus, dir.path()).unwrap();
    let loaded = load_corpus(dir.path(), CorpusFormat::CanonicalJsonl).unwrap();
    assert_eq!(loaded, corpus);
    assert_eq!(corpus_stats(&loaded).unwrap(), corpus_stats(&corpus).unwrap());
}

#[test]
fn sentence_cache_restores_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(&SyntheticConfig { n_prompts: 20, ..Default::default() }).unwrap();
    let index = SentenceIndex::build(&corpus, &RuleSegmenter).unwrap();
    let path = dir.path().join("sentences.jsonl");
    save_sentence_cache(&index, &path).unwrap();
    let restored = load_sentence_cache(&path, &index.segmenter).unwrap();
    assert_eq!(restored, index);
    assert_eq!(build_labelings(&corpus, &restored), build_labelings(&corpus, &index));
}

#[test]
fn abstract_subset_reloads_as_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(&SyntheticConfig { n_prompts: 50, ..Default::default() }).unwrap();
    let index = SentenceIndex::build(&corpus, &RuleSegmenter).unwrap();
    let subset = derive_abstract_subset(&corpus, &index).unwrap();
    save_canonical(&subset.corpus, dir.path()).unwrap();
    let reloaded = load_corpus(dir.path(), CorpusFormat::CanonicalJsonl).unwrap();
    let reindexed = SentenceIndex::build(&reloaded, &RuleSegmenter).unwrap();
    let again = derive_abstract_subset(&reloaded, &reindexed).unwrap();
    assert_eq!(again.corpus, subset.corpus);
    assert_eq!(again.counts.prompts_after, subset.counts.prompts_after);
}

#[test]
fn samples_written_twice_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(&SyntheticConfig { n_prompts: 30, ..Default::default() }).unwrap();
    let index = SentenceIndex::build(&corpus, &RuleSegmenter).unwrap();
    let labelings = build_labelings(&corpus, &index);
    let cfg = SamplingConfig { k_negatives: 3, seed: 11 };
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    build_identifier_dataset(&corpus, &index, &labelings, &cfg, None).unwrap().write_jsonl(&a).unwrap();
    build_identifier_dataset(&corpus, &index, &labelings, &cfg, None).unwrap().write_jsonl(&b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn encoder_cache_and_model_files_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(&SyntheticConfig { n_prompts: 30, ..Default::default() }).unwrap();
    let index = SentenceIndex::build(&corpus, &RuleSegmenter).unwrap();

    let cached = CachedEncoder::new(HashingEncoder::new(128, 1));
    let model = train_classifier(&corpus, &index, &cached, &TrainConfig::default(), true, InputMode::GoldSentence, Split::Train).unwrap();
    assert!(!cached.is_empty());
    let cache_path = dir.path().join("vectors.jsonl");
    cached.save(&cache_path).unwrap();
    let warm = CachedEncoder::new(HashingEncoder::new(128, 1));
    assert_eq!(warm.load(&cache_path).unwrap(), cached.len());
    let text = &corpus.articles.values().next().unwrap().text;
    assert_eq!(encode_text(&warm, text).unwrap(), encode_text(&HashingEncoder::new(128, 1), text).unwrap());
    assert_eq!(CachedEncoder::new(HashingEncoder::new(64, 1)).load(&cache_path).unwrap(), 0);

    let path = dir.path().join("cls.bin");
    save_model(&path, &Model::Classifier(model.clone())).unwrap();
    match load_model(&path).unwrap() {
        Model::Classifier(m) => {
            assert_eq!(m, model);
            assert_eq!(m.encoder_identity, warm.identity());
        }
        Model::Identifier(_) => panic!("wrong model kind"),
    }
}
