//! Per-word input vectors shared by the tagger and the parser.
//!
//! A word is the concatenation of a projected pretrained vector, an uncased
//! frequent-word embedding, a projected character-LSTM state and, for the
//! parser, lemma, tag and feature embeddings.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Document, Word};
use crate::nn::embeddings::Pretrained;
use crate::nn::vocab::DROP;
use crate::nn::{CharLstm, EmbeddingTable, Graph, Linear, ParamStore, Tensor, Var, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordRepConfig {
    pub word_dim: usize,
    pub min_word_count: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub char_proj: usize,
    pub pretrained_proj: usize,
    /// Lemma embedding size; 0 disables lemma input.
    pub lemma_dim: usize,
    /// Size of the summed UPOS+XPOS and UFeats embeddings; 0 disables them.
    pub tag_dim: usize,
    pub word_dropout: f64,
}

impl Default for WordRepConfig {
    fn default() -> Self {
        WordRepConfig {
            word_dim: 75,
            min_word_count: 7,
            char_dim: 100,
            char_hidden: 400,
            char_proj: 125,
            pretrained_proj: 125,
            lemma_dim: 0,
            tag_dim: 0,
            word_dropout: 0.33,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordRepVocabs {
    pub words: Vocab,
    pub lemmas: Vocab,
    pub chars: Vocab,
    pub upos: Vocab,
    pub xpos: Vocab,
    pub feats: Vocab,
    pub pretrained: Option<Vocab>,
}

fn count<I: Iterator<Item = String>>(it: I) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for s in it {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

impl WordRepVocabs {
    pub fn build(train: &Document, config: &WordRepConfig) -> Self {
        let words = count(train.words().map(|w| w.form.to_lowercase()));
        let lemmas = count(train.words().map(|w| w.lemma.to_lowercase()));
        let chars = count(train.words().flat_map(|w| w.form.chars().map(String::from).collect::<Vec<_>>()));
        let upos = count(train.words().map(|w| w.upos.clone()));
        let xpos = count(train.words().map(|w| w.xpos.clone()));
        let feats = count(train.words().flat_map(|w| w.feats.iter().map(|(k, v)| format!("{}={}", k, v)).collect::<Vec<_>>()));
        WordRepVocabs {
            words: Vocab::from_counts(&[DROP], &words, config.min_word_count),
            lemmas: Vocab::from_counts(&[DROP], &lemmas, config.min_word_count),
            chars: Vocab::from_counts(&[], &chars, 1),
            upos: Vocab::from_counts(&[DROP], &upos, 1),
            xpos: Vocab::from_counts(&[DROP], &xpos, 1),
            feats: Vocab::from_counts(&[], &feats, 1),
            pretrained: None,
        }
    }
}

/// Frozen pretrained vectors restricted to the words of `docs`. Returns the
/// table and the number of distinct words without a vector.
pub fn pretrained_table(pretrained: &Pretrained, docs: &[&Document]) -> (Vocab, Tensor, usize) {
    let forms: Vec<String> = docs.iter().flat_map(|d| d.words().map(|w| w.form.clone())).collect();
    pretrained.table_for(forms.iter().map(String::as_str))
}

#[derive(Clone, Debug)]
pub struct WordRep {
    pub config: WordRepConfig,
    pub vocabs: WordRepVocabs,
    words: EmbeddingTable,
    chars: CharLstm,
    char_proj: Linear,
    pretrained: Option<(EmbeddingTable, Linear)>,
    lemmas: Option<EmbeddingTable>,
    upos: Option<EmbeddingTable>,
    xpos: Option<EmbeddingTable>,
    feats: Option<EmbeddingTable>,
}

impl WordRep {
    /// Creates (or, for a loaded store, finds) the parameters under `name`.
    /// `pretrained` must be present in `store` already when
    /// `vocabs.pretrained` is set.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        config: WordRepConfig,
        vocabs: WordRepVocabs,
        pretrained: Option<Tensor>,
    ) -> Self {
        let words = EmbeddingTable::new(store, rng, &format!("{}.word", name), vocabs.words.clone(), config.word_dim);
        let chars = CharLstm::new(store, rng, &format!("{}.char", name), vocabs.chars.clone(), config.char_dim, config.char_hidden);
        let char_proj = Linear::new(store, rng, &format!("{}.char_proj", name), config.char_hidden, config.char_proj);
        let pretrained = vocabs.pretrained.clone().map(|v| {
            let table_name = format!("{}.pretrained", name);
            let matrix = pretrained.unwrap_or_else(|| store.value(store.id(&table_name).expect("pretrained table")).clone());
            let dim = matrix.ncols();
            let table = EmbeddingTable::frozen(store, &table_name, v, matrix);
            let proj = Linear::new(store, rng, &format!("{}.pretrained_proj", name), dim, config.pretrained_proj);
            (table, proj)
        });
        let opt_table = |store: &mut ParamStore, rng: &mut ChaCha8Rng, suffix: &str, vocab: &Vocab, dim: usize| {
            (dim > 0).then(|| EmbeddingTable::new(store, rng, &format!("{}.{}", name, suffix), vocab.clone(), dim))
        };
        let lemmas = opt_table(store, rng, "lemma", &vocabs.lemmas, config.lemma_dim);
        let upos = opt_table(store, rng, "upos", &vocabs.upos, config.tag_dim);
        let xpos = opt_table(store, rng, "xpos", &vocabs.xpos, config.tag_dim);
        let feats = opt_table(store, rng, "feats", &vocabs.feats, config.tag_dim);
        WordRep {
            config,
            vocabs,
            words,
            chars,
            char_proj,
            pretrained,
            lemmas,
            upos,
            xpos,
            feats,
        }
    }

    pub fn output_dim(&self) -> usize {
        let c = &self.config;
        let mut d = c.word_dim + c.char_proj + c.lemma_dim;
        if self.pretrained.is_some() {
            d += c.pretrained_proj;
        }
        if c.tag_dim > 0 {
            d += 2 * c.tag_dim;
        }
        d
    }

    fn drop_ids(&self, g: &mut Graph, ids: Vec<usize>, vocab: &Vocab) -> Vec<usize> {
        let p = self.config.word_dropout;
        let drop = vocab.reserved(DROP);
        match g.rng() {
            Some(rng) if p > 0.0 => ids.into_iter().map(|i| if rng.gen::<f64>() < p { drop } else { i }).collect(),
            _ => ids,
        }
    }

    /// `n × output_dim` input matrix for `words`.
    pub fn forward(&self, g: &mut Graph, words: &[Word]) -> Var {
        let mut parts = Vec::new();
        let ids = words.iter().map(|w| self.words.vocab.index_or_unk(&w.form.to_lowercase())).collect();
        let ids = self.drop_ids(g, ids, &self.words.vocab);
        parts.push(self.words.lookup(g, &ids));

        let forms: Vec<&str> = words.iter().map(|w| w.form.as_str()).collect();
        let ch = self.chars.embed_words(g, &forms, 0.0);
        let ch = self.char_proj.forward(g, ch);
        let keep: Vec<usize> = self.drop_ids(g, vec![1; words.len()], &self.words.vocab);
        let ch = if keep.iter().any(|&k| k != 1) {
            let mask = Tensor::from_shape_fn((words.len(), self.config.char_proj), |(i, _)| if keep[i] == 1 { 1.0 } else { 0.0 });
            g.mul_const(ch, mask)
        } else {
            ch
        };
        parts.push(ch);

        if let Some((table, proj)) = &self.pretrained {
            let ids = words.iter().map(|w| table.vocab.index_or_unk(&w.form)).collect();
            let ids = self.drop_ids(g, ids, &table.vocab);
            let e = table.lookup(g, &ids);
            parts.push(proj.forward(g, e));
        }
        if let Some(table) = &self.lemmas {
            let ids = words.iter().map(|w| table.vocab.index_or_unk(&w.lemma.to_lowercase())).collect();
            let ids = self.drop_ids(g, ids, &table.vocab);
            parts.push(table.lookup(g, &ids));
        }
        if let (Some(up), Some(xp), Some(ft)) = (&self.upos, &self.xpos, &self.feats) {
            let u = words.iter().map(|w| up.vocab.index_or_unk(&w.upos)).collect();
            let u = self.drop_ids(g, u, &up.vocab);
            let x = words.iter().map(|w| xp.vocab.index_or_unk(&w.xpos)).collect();
            let x = self.drop_ids(g, x, &xp.vocab);
            let ue = up.lookup(g, &u);
            let xe = xp.lookup(g, &x);
            parts.push(g.add(ue, xe));
            let mut counts = Tensor::zeros((words.len(), ft.vocab.len()));
            for (i, w) in words.iter().enumerate() {
                for (k, v) in w.feats.iter() {
                    if let Some(j) = ft.vocab.get(&format!("{}={}", k, v)) {
                        counts[[i, j]] += 1.0;
                    }
                }
            }
            let counts = g.input(counts);
            let table = g.param(ft.table);
            parts.push(g.matmul(counts, table));
        }
        g.concat_cols(&parts)
    }
}
