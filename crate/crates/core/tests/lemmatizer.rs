use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udnet::conllu::{Document, Sentence};
use udnet::lemmatizer::{edit_type_report, train_lemmatizer, EditLabel, LemmaNet, LemmaSource};
use udnet::nn::Container;
use udnet::seq2seq::Seq2SeqConfig;

fn small() -> Seq2SeqConfig {
    Seq2SeqConfig {
        emb_dim: 16,
        hidden: 32,
        dropout: 0.0,
        beam: 4,
        epochs: 60,
        batch_size: 10,
        lr: 0.01,
        anneal_after: 40,
        ..Seq2SeqConfig::lemmatizer()
    }
}

fn stems(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let len = rng.gen_range(3..6);
        let s: String = (0..len).map(|_| b"bcfgklmnoprtu"[rng.gen_range(0..13)] as char).collect();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// One-word sentences with lemmas: plain stems, capitalized stems and
/// `-ed` forms in the proportions 4:3:3.
fn mixed(stems: &[String]) -> Document {
    let sentences = stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let form = match i % 10 {
                0..=3 => s.clone(),
                4..=6 => {
                    let mut c = s.chars();
                    c.next().unwrap().to_uppercase().chain(c).collect()
                }
                _ => format!("{}ed", s),
            };
            let mut sent = Sentence::from_forms(&[form]);
            sent.words[0].lemma = s.clone();
            sent.words[0].upos = "X".to_string();
            sent
        })
        .collect();
    Document::new(sentences)
}

fn identity_only(stems: &[String]) -> Document {
    let mut doc = mixed(stems);
    for s in &mut doc.sentences {
        s.words[0].lemma = s.words[0].form.clone();
    }
    doc
}

#[test]
fn joint_training_learns_edits_and_rewrites() {
    let all = stems(110, 1);
    let (train, dev) = (mixed(&all[..60]), mixed(&all[60..]));
    let (lem, log) = train_lemmatizer(&train, &Document::default(), &small()).unwrap();
    assert!(log.best_metric >= 0.99, "training lemma accuracy {}", log.best_metric);
    let net = lem.net.as_ref().unwrap();

    let ratios = edit_type_report(net, &dev);
    assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (r, expected) in ratios.iter().zip([0.4, 0.3, 0.3]) {
        assert!((r - expected).abs() <= 0.1, "{:?}", ratios);
    }

    // unseen words go through the network
    let (lemma, source) = lem.lemmatize_traced("Tromp", "X");
    assert_eq!((lemma.as_str(), source), ("tromp", LemmaSource::Edit(EditLabel::Lowercase)));
    let (lemma, source) = lem.lemmatize_traced("gorbed", "NOUN");
    assert_eq!(source, LemmaSource::Edit(EditLabel::Seq2Seq));
    assert_eq!(lemma, "gorb");

    // training words never reach it
    for w in train.words() {
        assert_eq!(lem.lemmatize_traced(&w.form, &w.upos), (w.lemma.clone(), LemmaSource::PairLexicon));
    }

    let back = LemmaNet::from_container(Container::read_from(&net.to_container().to_bytes()[..]).unwrap()).unwrap();
    for w in dev.words() {
        assert_eq!(back.predict(&w.form, 4), net.predict(&w.form, 4));
    }
}

#[test]
fn identity_corpus_reports_only_identity() {
    let all = stems(40, 2);
    let config = Seq2SeqConfig { epochs: 15, ..small() };
    let (lem, _) = train_lemmatizer(&identity_only(&all[..30]), &Document::default(), &config).unwrap();
    let ratios = edit_type_report(lem.net.as_ref().unwrap(), &identity_only(&all[30..]));
    assert_eq!(ratios, [1.0, 0.0, 0.0]);
}
