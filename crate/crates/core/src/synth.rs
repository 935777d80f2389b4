//! Small generated treebanks with fully predictable annotation, used for
//! overfit checks, ablation probes and examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conllu::{misc_insert, Document, Features, Sentence, Token, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordOrder {
    /// Determiners and adjectives before nouns, subject before the verb.
    Mixed,
    /// Every dependent follows its head; the root is the first word.
    HeadInitial,
    /// `DET NOUN VERB DET NOUN .` only: every edge but the final
    /// punctuation has length at most 2.
    Short,
}

#[derive(Clone, Debug)]
pub struct ToyConfig {
    pub sentences: usize,
    pub seed: u64,
    pub order: WordOrder,
    /// Contract `ADP dem` into one multi-word token (`in dem` -> `im`).
    pub mwt: bool,
    /// XPOS is a function of UPOS alone.
    pub xpos_from_upos: bool,
    /// Start a new paragraph every this many sentences (0 = never).
    pub paragraph_every: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            sentences: 50,
            seed: 0,
            order: WordOrder::Mixed,
            mwt: false,
            xpos_from_upos: false,
            paragraph_every: 0,
        }
    }
}

pub const VERBS: &[&str] = &["walk", "jump", "kick", "call", "push", "pull", "help", "look"];
pub const NOUNS: &[&str] = &["dog", "cat", "bird", "fox", "cow", "hen", "pig", "owl", "ant", "bee"];
pub const ADJS: &[&str] = &["big", "red", "old", "small", "fast"];
pub const NAMES: &[&str] = &["Anna", "Bob", "Carl"];
pub const CONTRACTIONS: &[(&str, &str)] = &[("in", "im"), ("zu", "zum"), ("an", "am"), ("von", "vom")];

struct Proto {
    form: String,
    lemma: String,
    upos: &'static str,
    xpos: String,
    feats: Features,
    /// Index of the head within the sentence, `None` for the root.
    head: Option<usize>,
    deprel: &'static str,
}

fn proto(form: &str, lemma: &str, upos: &'static str, xpos: &str, feats: &[(&str, &str)]) -> Proto {
    Proto {
        form: form.to_string(),
        lemma: lemma.to_string(),
        upos,
        xpos: xpos.to_string(),
        feats: feats.iter().map(|&(k, v)| (k, v)).collect(),
        head: None,
        deprel: "dep",
    }
}

fn noun(rng: &mut ChaCha8Rng) -> Proto {
    let stem = *NOUNS.choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        proto(stem, stem, "NOUN", "NN", &[("Number", "Sing")])
    } else {
        proto(&format!("{}s", stem), stem, "NOUN", "NNS", &[("Number", "Plur")])
    }
}

fn verb(rng: &mut ChaCha8Rng) -> Proto {
    let stem = *VERBS.choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        proto(&format!("{}s", stem), stem, "VERB", "VBZ", &[("Tense", "Pres")])
    } else {
        proto(&format!("{}ed", stem), stem, "VERB", "VBD", &[("Tense", "Past")])
    }
}

fn det(rng: &mut ChaCha8Rng) -> Proto {
    if rng.gen_bool(0.5) {
        proto("the", "the", "DET", "DT", &[("Definite", "Def")])
    } else {
        proto("a", "a", "DET", "DT", &[("Definite", "Ind")])
    }
}

fn adj(rng: &mut ChaCha8Rng) -> Proto {
    let a = *ADJS.choose(rng).unwrap();
    proto(a, a, "ADJ", "JJ", &[])
}

/// Appends a noun phrase, returns the index of its head noun.
fn noun_phrase(out: &mut Vec<Proto>, rng: &mut ChaCha8Rng, order: WordOrder) -> usize {
    if order != WordOrder::Short && rng.gen_bool(0.2) {
        let n = *NAMES.choose(rng).unwrap();
        out.push(proto(n, n, "PROPN", "NNP", &[]));
        return out.len() - 1;
    }
    let with_adj = order != WordOrder::Short && rng.gen_bool(0.4);
    match order {
        WordOrder::HeadInitial => {
            let h = out.len();
            out.push(noun(rng));
            if with_adj {
                let mut a = adj(rng);
                a.head = Some(h);
                a.deprel = "amod";
                out.push(a);
            }
            let mut d = det(rng);
            d.head = Some(h);
            d.deprel = "det";
            out.push(d);
            h
        }
        _ => {
            let h = out.len() + 1 + with_adj as usize;
            let mut d = det(rng);
            d.head = Some(h);
            d.deprel = "det";
            out.push(d);
            if with_adj {
                let mut a = adj(rng);
                a.head = Some(h);
                a.deprel = "amod";
                out.push(a);
            }
            out.push(noun(rng));
            h
        }
    }
}

fn clause(rng: &mut ChaCha8Rng, config: &ToyConfig) -> Vec<Proto> {
    let mut out = Vec::new();
    let order = config.order;
    let v;
    if order == WordOrder::HeadInitial {
        v = 0;
        out.push(verb(rng));
        let s = noun_phrase(&mut out, rng, order);
        out[s].head = Some(v);
        out[s].deprel = "nsubj";
    } else {
        let s = noun_phrase(&mut out, rng, order);
        v = out.len();
        out.push(verb(rng));
        out[s].head = Some(v);
        out[s].deprel = "nsubj";
    }
    if order == WordOrder::Short || rng.gen_bool(0.6) {
        let o = noun_phrase(&mut out, rng, order);
        out[o].head = Some(v);
        out[o].deprel = "obj";
    }
    if order != WordOrder::Short && rng.gen_bool(0.5) {
        let &(adp, _) = CONTRACTIONS.choose(rng).unwrap();
        let n = noun(rng);
        let d = if config.mwt {
            proto("dem", "der", "DET", "DT", &[("Definite", "Def")])
        } else {
            det(rng)
        };
        let a = proto(adp, adp, "ADP", "IN", &[]);
        let base = out.len();
        let (ia, id, inn) = if order == WordOrder::HeadInitial { (base + 2, base + 1, base) } else { (base, base + 1, base + 2) };
        let mut slots: Vec<Option<Proto>> = vec![None, None, None];
        slots[ia - base] = Some(a);
        slots[id - base] = Some(d);
        slots[inn - base] = Some(n);
        out.extend(slots.into_iter().map(Option::unwrap));
        out[ia].head = Some(inn);
        out[ia].deprel = "case";
        out[id].head = Some(inn);
        out[id].deprel = "det";
        out[inn].head = Some(v);
        out[inn].deprel = "obl";
    }
    let mut p = proto(".", ".", "PUNCT", ".", &[]);
    p.head = Some(v);
    p.deprel = "punct";
    out.push(p);
    out[v].head = None;
    out[v].deprel = "root";
    if config.xpos_from_upos {
        for w in &mut out {
            w.xpos = format!("X{}", w.upos);
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(protos: Vec<Proto>, config: &ToyConfig) -> Sentence {
    let mut words: Vec<Word> = protos
        .iter()
        .enumerate()
        .map(|(i, p)| Word {
            id: i + 1,
            form: p.form.clone(),
            lemma: p.lemma.clone(),
            upos: p.upos.to_string(),
            xpos: p.xpos.clone(),
            feats: p.feats.clone(),
            head: Some(p.head.map_or(0, |h| h + 1)),
            deprel: p.deprel.to_string(),
            deps: String::new(),
            misc: String::new(),
        })
        .collect();
    if words[0].upos != "PROPN" {
        words[0].form = capitalize(&words[0].form);
    }
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let contraction = CONTRACTIONS.iter().find(|(a, _)| *a == words[i].form.to_lowercase());
        match contraction {
            Some(&(_, c)) if config.mwt && i + 1 < words.len() && words[i + 1].form == "dem" => {
                let form = if i == 0 { capitalize(c) } else { c.to_string() };
                tokens.push(Token {
                    span: (i + 1, i + 2),
                    form,
                    misc: String::new(),
                });
                i += 2;
            }
            _ => {
                tokens.push(Token::single(i + 1, &words[i].form));
                i += 1;
            }
        }
    }
    // no space before the final full stop
    let n = tokens.len();
    if n >= 2 {
        let t = &mut tokens[n - 2];
        if t.is_mwt() {
            misc_insert(&mut t.misc, "SpaceAfter=No");
        } else {
            misc_insert(&mut words[t.span.0 - 1].misc, "SpaceAfter=No");
        }
    }
    let mut s = Sentence {
        words,
        tokens,
        text: None,
        comments: Vec::new(),
    };
    s.text = Some(s.detokenize());
    s
}

/// A generated treebank with raw text.
pub fn toy_treebank(config: &ToyConfig) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sentences = Vec::with_capacity(config.sentences);
    for i in 0..config.sentences {
        let mut s = sentence(clause(&mut rng, config), config);
        if config.paragraph_every > 0 && i % config.paragraph_every == 0 {
            s.comments.push("# newpar".to_string());
        }
        sentences.push(s);
    }
    let mut doc = Document::new(sentences);
    doc.raw_text = Some(doc.reconstruct_raw_text());
    doc
}
