//! Dictionary-backed lemmatization with a neural fallback.
//!
//! Words are looked up by `(word, UPOS)`, then by the word alone. Unseen
//! words go to an edit classifier that can shortcut to the word itself or
//! its lowercase form before running the seq2seq decoder.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conllu::{Document, Word};
use crate::nn::{AnnealLog, Container, ContainerError, Graph, Linear, ParamStore, Var};
use crate::seq2seq::{
    beam_decode, build_vocab, default_max_len, train_seq2seq, Encoded, Seq2SeqConfig, Seq2SeqModel, Seq2SeqNet,
};

pub const KIND: &str = "lemma";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditLabel {
    Identity,
    Lowercase,
    Seq2Seq,
}

impl EditLabel {
    pub const ALL: [EditLabel; 3] = [EditLabel::Identity, EditLabel::Lowercase, EditLabel::Seq2Seq];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// First applicable of identity, lowercase, decoder.
pub fn assign_edit_label(word: &str, lemma: &str) -> EditLabel {
    if lemma == word {
        EditLabel::Identity
    } else if lemma == word.to_lowercase() {
        EditLabel::Lowercase
    } else {
        EditLabel::Seq2Seq
    }
}

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error("line {0}: expected word<TAB>lemma<TAB>count or word<TAB>UPOS<TAB>lemma<TAB>count")]
    Format(usize),
    #[error("line {0}: bad count")]
    Count(usize),
    #[error("no lemmas in the training data")]
    NoData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Lemma counts in order of first occurrence.
type Counts = Vec<(String, usize)>;

fn observe(counts: &mut Counts, lemma: &str, n: usize) {
    match counts.iter_mut().find(|(l, _)| l == lemma) {
        Some(e) => e.1 += n,
        None => counts.push((lemma.to_string(), n)),
    }
}

fn modal(counts: &Counts) -> &(String, usize) {
    let mut best = &counts[0];
    for e in &counts[1..] {
        if e.1 > best.1 {
            best = e;
        }
    }
    best
}

/// Case-sensitive `(word, UPOS)` and word lemma dictionaries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LemmaLexicon {
    pairs: HashMap<(String, String), Counts>,
    words: HashMap<String, Counts>,
}

impl LemmaLexicon {
    pub fn build(train: &Document) -> Self {
        let mut lex = LemmaLexicon::default();
        for w in train.words().filter(|w| !w.lemma.is_empty()) {
            lex.observe(&w.form, &w.upos, &w.lemma, 1);
        }
        lex
    }

    pub fn observe(&mut self, word: &str, upos: &str, lemma: &str, n: usize) {
        observe(self.pairs.entry((word.to_string(), upos.to_string())).or_default(), lemma, n);
        observe(self.words.entry(word.to_string()).or_default(), lemma, n);
    }

    pub fn pair(&self, word: &str, upos: &str) -> Option<&str> {
        self.pairs.get(&(word.to_string(), upos.to_string())).map(|c| modal(c).0.as_str())
    }

    pub fn word(&self, word: &str) -> Option<&str> {
        self.words.get(word).map(|c| modal(c).0.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Writes the word dictionary as `word<TAB>lemma<TAB>count` and the pair
    /// dictionary as `word<TAB>UPOS<TAB>lemma<TAB>count`, modal entries only,
    /// each sorted.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let words: BTreeMap<&String, &(String, usize)> = self.words.iter().map(|(k, c)| (k, modal(c))).collect();
        for (w, (l, n)) in words {
            writeln!(out, "{}\t{}\t{}", w, l, n)?;
        }
        let pairs: BTreeMap<&(String, String), &(String, usize)> = self.pairs.iter().map(|(k, c)| (k, modal(c))).collect();
        for ((w, u), (l, n)) in pairs {
            writeln!(out, "{}\t{}\t{}\t{}", w, u, l, n)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, LemmaError> {
        let mut lex = LemmaLexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.iter().any(|c| c.is_empty()) {
                return Err(LemmaError::Format(i + 1));
            }
            let count = |s: &str| s.parse::<usize>().map_err(|_| LemmaError::Count(i + 1));
            match cols.as_slice() {
                [w, l, n] => observe(lex.words.entry(w.to_string()).or_default(), l, count(n)?),
                [w, u, l, n] => observe(lex.pairs.entry((w.to_string(), u.to_string())).or_default(), l, count(n)?),
                _ => return Err(LemmaError::Format(i + 1)),
            }
        }
        Ok(lex)
    }
}

/// Which step of the lemmatization protocol produced a lemma.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LemmaSource {
    PairLexicon,
    WordLexicon,
    Edit(EditLabel),
    /// The decoder produced nothing; the word is its own lemma.
    Unchanged,
}

/// Seq2seq model plus the three-way edit classifier on the encoder's final
/// states.
#[derive(Clone, Debug)]
pub struct LemmaNet {
    pub s2s: Seq2SeqModel,
    pub edit_fc: Linear,
    pub edit_out: Linear,
}

impl LemmaNet {
    fn attach(mut s2s: Seq2SeqModel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(s2s.config.seed.wrapping_add(1));
        let d = 2 * s2s.config.hidden;
        let edit_fc = Linear::new(&mut s2s.store, &mut rng, "edit.fc", d, s2s.config.hidden);
        let edit_out = Linear::new(&mut s2s.store, &mut rng, "edit.out", s2s.config.hidden, EditLabel::ALL.len());
        LemmaNet { s2s, edit_fc, edit_out }
    }

    fn edit_logits(edit_fc: &Linear, edit_out: &Linear, g: &mut Graph, enc: &Encoded, dropout: f64) -> Var {
        let h = edit_fc.forward(g, enc.init.h);
        let h = g.relu(h);
        let h = g.dropout(h, dropout);
        let logits = edit_out.forward(g, h);
        g.log_softmax(logits)
    }

    pub fn edit_label(&self, word: &str) -> EditLabel {
        if !self.s2s.config.edit {
            return EditLabel::Seq2Seq;
        }
        edit_with(&self.s2s.net, &self.edit_fc, &self.edit_out, &self.s2s.store, word)
    }

    /// Neural lemma of `word` with the edit that produced it.
    pub fn predict(&self, word: &str, beam: usize) -> (String, LemmaSource) {
        neural_with(&self.s2s.net, &self.edit_fc, &self.edit_out, &self.s2s.store, word, beam, self.s2s.config.edit)
    }

    pub fn to_container(&self) -> Container {
        self.s2s.to_container(KIND)
    }

    pub fn from_container(c: Container) -> Result<Self, ContainerError> {
        Ok(Self::attach(Seq2SeqModel::from_container(c, KIND)?))
    }
}

fn edit_with(net: &Seq2SeqNet, fc: &Linear, out: &Linear, store: &ParamStore, word: &str) -> EditLabel {
    let mut g = Graph::new(store);
    let enc = net.encode(&mut g, &net.ids(word), 0.0);
    let lp = LemmaNet::edit_logits(fc, out, &mut g, &enc, 0.0);
    let row = g.value(lp).row(0).to_owned();
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    EditLabel::ALL[best]
}

fn neural_with(
    net: &Seq2SeqNet,
    fc: &Linear,
    out: &Linear,
    store: &ParamStore,
    word: &str,
    beam: usize,
    edit: bool,
) -> (String, LemmaSource) {
    let label = if edit { edit_with(net, fc, out, store, word) } else { EditLabel::Seq2Seq };
    let lemma = match label {
        EditLabel::Identity => word.to_string(),
        EditLabel::Lowercase => word.to_lowercase(),
        EditLabel::Seq2Seq => beam_decode(net, store, word, beam, default_max_len(word.chars().count())).text,
    };
    if lemma.is_empty() {
        (word.to_string(), LemmaSource::Unchanged)
    } else {
        (lemma, LemmaSource::Edit(label))
    }
}

#[derive(Clone, Debug)]
pub struct Lemmatizer {
    pub lexicon: LemmaLexicon,
    pub net: Option<LemmaNet>,
}

impl Lemmatizer {
    pub fn lemmatize_traced(&self, word: &str, upos: &str) -> (String, LemmaSource) {
        if let Some(l) = self.lexicon.pair(word, upos) {
            return (l.to_string(), LemmaSource::PairLexicon);
        }
        if let Some(l) = self.lexicon.word(word) {
            return (l.to_string(), LemmaSource::WordLexicon);
        }
        match &self.net {
            Some(net) => net.predict(word, net.s2s.config.beam),
            None => (word.to_string(), LemmaSource::Unchanged),
        }
    }

    pub fn lemmatize(&self, word: &str, upos: &str) -> String {
        self.lemmatize_traced(word, upos).0
    }

    /// Fills the LEMMA column of every word, keyed by its UPOS column.
    pub fn lemmatize_words(&self, words: &mut [Word]) -> HashMap<LemmaSource, usize> {
        let mut stats = HashMap::new();
        for w in words {
            let (lemma, source) = self.lemmatize_traced(&w.form, &w.upos);
            w.lemma = lemma;
            *stats.entry(source).or_insert(0) += 1;
        }
        stats
    }

    pub fn lemmatize_document(&self, doc: &mut Document) -> HashMap<LemmaSource, usize> {
        let mut stats = HashMap::new();
        for s in &mut doc.sentences {
            for (k, v) in self.lemmatize_words(&mut s.words) {
                *stats.entry(k).or_insert(0) += v;
            }
        }
        stats
    }
}

/// Share of each edit the classifier predicts over the words of `doc`, in
/// identity, lowercase, decoder order.
pub fn edit_type_report(net: &LemmaNet, doc: &Document) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for w in doc.words() {
        counts[net.edit_label(&w.form).index()] += 1;
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    counts.map(|c| c as f64 / total)
}

/// Distinct `(word, lemma)` pairs in order of first occurrence.
pub fn lemma_pairs(doc: &Document) -> Vec<(String, String)> {
    let mut seen = std::collections::HashSet::new();
    doc.words()
        .filter(|w| !w.lemma.is_empty())
        .map(|w| (w.form.clone(), w.lemma.clone()))
        .filter(|p| seen.insert(p.clone()))
        .collect()
}

/// Builds the dictionaries and jointly trains the decoder and the edit
/// classifier, keeping the epoch with the best neural lemma accuracy on
/// `dev` (or on the training pairs when `dev` has no lemmas).
pub fn train_lemmatizer(train: &Document, dev: &Document, config: &Seq2SeqConfig) -> Result<(Lemmatizer, AnnealLog), LemmaError> {
    let lexicon = LemmaLexicon::build(train);
    let pairs = lemma_pairs(train);
    if pairs.is_empty() {
        return Err(LemmaError::NoData);
    }
    let dev_pairs = lemma_pairs(dev);
    let dev_pairs = if dev_pairs.is_empty() { pairs.clone() } else { dev_pairs };
    let vocab = build_vocab(pairs.iter().chain(&dev_pairs));
    let mut net = LemmaNet::attach(Seq2SeqModel::new(config.clone(), vocab));
    let labels: Vec<usize> = pairs.iter().map(|(w, l)| assign_edit_label(w, l).index()).collect();
    let s2s = net.s2s.net.clone();
    let (fc, out) = (net.edit_fc.clone(), net.edit_out.clone());
    let (dropout, edit) = (config.dropout, config.edit);
    let extra = |g: &mut Graph, enc: &Encoded, i: usize| {
        if !edit {
            return None;
        }
        let lp = LemmaNet::edit_logits(&fc, &out, g, enc, dropout);
        let p = g.pick(lp, &[labels[i]]);
        Some(g.neg(p))
    };
    let dev_eval = |st: &ParamStore| {
        let ok = dev_pairs.iter().filter(|(w, l)| neural_with(&s2s, &fc, &out, st, w, 1, edit).0 == *l).count();
        ok as f64 / dev_pairs.len() as f64
    };
    let log = train_seq2seq(&s2s, &mut net.s2s.store, config, &pairs, extra, dev_eval);
    Ok((Lemmatizer { lexicon, net: Some(net) }, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::parse_conllu;
    use proptest::prelude::*;

    fn doc(rows: &[(&str, &str, &str)]) -> Document {
        let mut text = String::new();
        for (i, (w, u, l)) in rows.iter().enumerate() {
            text.push_str(&format!("{}\t{}\t{}\t{}\t_\t_\t_\t_\t_\t_\n", i + 1, w, l, u));
        }
        text.push('\n');
        parse_conllu(&text).unwrap()
    }

    #[test]
    fn edit_labels() {
        assert_eq!(assign_edit_label("http://x.co", "http://x.co"), EditLabel::Identity);
        assert_eq!(assign_edit_label("The", "the"), EditLabel::Lowercase);
        assert_eq!(assign_edit_label("ran", "run"), EditLabel::Seq2Seq);
        assert_eq!(assign_edit_label("the", "the"), EditLabel::Identity);
    }

    proptest! {
        #[test]
        fn edit_label_matches_definition(w in "[a-cA-C]{1,4}", l in "[a-cA-C]{1,4}") {
            let expected = if w == l {
                EditLabel::Identity
            } else if w.to_lowercase() == l {
                EditLabel::Lowercase
            } else {
                EditLabel::Seq2Seq
            };
            prop_assert_eq!(assign_edit_label(&w, &l), expected);
        }
    }

    #[test]
    fn dictionaries_are_case_sensitive_and_modal() {
        let lex = LemmaLexicon::build(&doc(&[
            ("The", "DET", "the"),
            ("bank", "NOUN", "bank"),
            ("bank", "VERB", "bank"),
            ("ran", "VERB", "run"),
            ("ran", "VERB", "ran"),
            ("ran", "VERB", "run"),
            ("saw", "VERB", "see"),
            ("saw", "NOUN", "saw"),
            ("saw", "NOUN", "saw"),
        ]));
        assert_eq!(lex.word("The"), Some("the"));
        assert_eq!(lex.word("the"), None);
        assert_eq!(lex.pair("ran", "VERB"), Some("run"));
        assert_eq!(lex.pair("bank", "VERB"), Some("bank"));
        assert_eq!(lex.pair("saw", "VERB"), Some("see"));
        assert_eq!(lex.word("saw"), Some("saw"));
    }

    #[test]
    fn lookup_order_is_pair_then_word() {
        let lex = LemmaLexicon::build(&doc(&[("saw", "VERB", "see"), ("saw", "NOUN", "saw"), ("saw", "NOUN", "saw")]));
        let lem = Lemmatizer { lexicon: lex, net: None };
        assert_eq!(lem.lemmatize_traced("saw", "VERB"), ("see".to_string(), LemmaSource::PairLexicon));
        assert_eq!(lem.lemmatize_traced("saw", "ADJ"), ("saw".to_string(), LemmaSource::WordLexicon));
        assert_eq!(lem.lemmatize_traced("Saw", "VERB"), ("Saw".to_string(), LemmaSource::Unchanged));
    }

    #[test]
    fn text_format_round_trips() {
        let lex = LemmaLexicon::build(&doc(&[("ran", "VERB", "run"), ("The", "DET", "the"), ("ran", "VERB", "run")]));
        let mut buf = Vec::new();
        lex.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "The\tthe\t1\nran\trun\t2\nThe\tDET\tthe\t1\nran\tVERB\trun\t2\n");
        assert_eq!(LemmaLexicon::read_from(text.as_bytes()).unwrap(), lex);
        assert!(matches!(LemmaLexicon::read_from("a\tb\n".as_bytes()), Err(LemmaError::Format(1))));
    }
}
