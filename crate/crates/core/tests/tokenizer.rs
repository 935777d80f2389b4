use std::path::{Path, PathBuf};

use udnet::conllu::{parse_conllu, Document};
use udnet::mwt::{ExpansionLexicon, MwtExpander};
use udnet::scorer::evaluate;
use udnet::synth::{toy_treebank, ToyConfig};
use udnet::tokenizer::{decode_segments, gold_unit_tags, skeleton, train_tokenizer, TokenizerConfig, TokenizerModel, UnitMode};

fn fixtures() -> Vec<(String, Document, String, UnitMode)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map_or(false, |e| e == "conllu"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let doc = parse_conllu(&std::fs::read_to_string(&p).unwrap()).unwrap();
            let raw = std::fs::read_to_string(p.with_extension("txt")).unwrap_or_else(|_| doc.reconstruct_raw_text());
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let mode = if name.contains("syllable") { UnitMode::Syllable } else { UnitMode::Char };
            (name, doc, raw, mode)
        })
        .collect()
}

fn round_trip(gold: &Document, raw: &str, mode: UnitMode) -> Document {
    let paras = gold_unit_tags(gold, raw, mode).unwrap();
    let decoded: Vec<_> = paras.iter().map(|p| decode_segments(&p.units, &p.tags)).collect();
    let mut doc = skeleton(&decoded);
    MwtExpander {
        lexicon: ExpansionLexicon::build(gold),
        model: None,
    }
    .expand_document(&mut doc);
    doc
}

#[test]
fn gold_tags_reproduce_every_fixture() {
    let mut docs = fixtures();
    for (i, mwt) in [false, true].into_iter().enumerate() {
        let d = toy_treebank(&ToyConfig {
            mwt,
            paragraph_every: 4,
            seed: i as u64,
            ..Default::default()
        });
        let raw = d.raw_text.clone().unwrap();
        docs.push((format!("toy{}", i), d, raw, UnitMode::Char));
    }
    assert!(docs.len() >= 6);
    for (name, gold, raw, mode) in docs {
        let system = round_trip(&gold, &raw, mode);
        let report = evaluate(&gold, &system, None).unwrap();
        for metric in ["Tokens", "Sentences", "Words"] {
            assert_eq!(report.get(metric).unwrap().f1, 1.0, "{} {}", name, metric);
        }
        for (g, s) in gold.sentences.iter().zip(&system.sentences) {
            let gt: Vec<(&str, bool, bool)> = g.tokens.iter().map(|t| (t.form.as_str(), t.is_mwt(), g.space_after(t))).collect();
            let st: Vec<(&str, bool, bool)> = s.tokens.iter().map(|t| (t.form.as_str(), t.is_mwt(), s.space_after(t))).collect();
            assert_eq!(gt.len(), st.len(), "{}", name);
            for (a, b) in gt.iter().zip(&st) {
                assert_eq!((a.0, a.1), (b.0, b.1), "{}", name);
            }
            // the final token of a paragraph carries no spacing information
            assert_eq!(gt[..gt.len() - 1], st[..st.len() - 1], "{}", name);
        }
    }
}

fn small() -> TokenizerConfig {
    TokenizerConfig {
        emb_dim: 8,
        hidden: 16,
        dropout: 0.0,
        unk_dropout: 0.0,
        chunk_len: 80,
        batch_size: 8,
        lr: 0.01,
        max_steps: 500,
        eval_interval: 50,
        anneal_after: 300,
        ..Default::default()
    }
}

#[test]
fn overfits_a_small_corpus() {
    let train = toy_treebank(&ToyConfig {
        sentences: 50,
        mwt: true,
        paragraph_every: 5,
        ..Default::default()
    });
    let (model, log) = train_tokenizer(&train, &Document::default(), &small()).unwrap();
    assert!(log.best_metric >= 0.99, "unit accuracy {}", log.best_metric);

    let system = model.tokenize(train.raw_text.as_ref().unwrap());
    let report = evaluate(&udnet::mwt::collapse_mwts(&train), &system, None).unwrap();
    assert!(report.get("Tokens").unwrap().f1 >= 0.99);
    assert!(report.get("Sentences").unwrap().f1 >= 0.95);

    let back = TokenizerModel::from_container(udnet::nn::Container::read_from(&model.to_container().to_bytes()[..]).unwrap())
        .unwrap();
    assert_eq!(back.tokenize("The dog walks. A cat jumped."), model.tokenize("The dog walks. A cat jumped."));
}
