//! Multi-word token expansion.
//!
//! Tokens flagged by the tokenizer are looked up in a frequency lexicon
//! built from the training data, then looked up again lowercased, and only
//! then handed to the character-level seq2seq model.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::conllu::{misc_contains, misc_insert, misc_remove, Document, Sentence, Token, Word};
use crate::nn::{AnnealLog, Container, ContainerError};
use crate::seq2seq::{Seq2SeqConfig, Seq2SeqModel};

pub const KIND: &str = "mwt";
/// MISC flag the tokenizer puts on a token it predicts to be multi-word.
pub const MWT_FLAG: &str = "MWT=Yes";

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {0}: expected form<TAB>words<TAB>count")]
    Format(usize),
    #[error("line {0}: bad count")]
    Count(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Observed expansions per lowercased token form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpansionLexicon {
    /// Expansions with counts, in order of first occurrence.
    observed: HashMap<String, Vec<(Vec<String>, usize)>>,
}

impl ExpansionLexicon {
    pub fn build(train: &Document) -> Self {
        let mut lex = ExpansionLexicon::default();
        for s in &train.sentences {
            for t in s.tokens.iter().filter(|t| t.is_mwt()) {
                let words = s.token_words(t).iter().map(|w| w.form.to_lowercase()).collect();
                lex.observe(&t.form, words, 1);
            }
        }
        lex
    }

    pub fn observe(&mut self, form: &str, words: Vec<String>, count: usize) {
        let seen = self.observed.entry(form.to_lowercase()).or_default();
        match seen.iter_mut().find(|(w, _)| *w == words) {
            Some(entry) => entry.1 += count,
            None => seen.push((words, count)),
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Most frequent expansion of exactly `key`; earliest seen wins ties.
    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entry(key).map(|(w, _)| w.as_slice())
    }

    fn entry(&self, key: &str) -> Option<&(Vec<String>, usize)> {
        let seen = self.observed.get(key)?;
        let mut best = &seen[0];
        for e in &seen[1..] {
            if e.1 > best.1 {
                best = e;
            }
        }
        Some(best)
    }

    /// All observed expansions of `key` with counts.
    pub fn counts(&self, key: &str) -> &[(Vec<String>, usize)] {
        self.observed.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Modal entries sorted by form.
    pub fn entries(&self) -> Vec<(&str, &[String], usize)> {
        let sorted: BTreeMap<&str, &(Vec<String>, usize)> =
            self.observed.keys().map(|k| (k.as_str(), self.entry(k).unwrap())).collect();
        sorted.into_iter().map(|(k, (w, c))| (k, w.as_slice(), *c)).collect()
    }

    /// Writes `form<TAB>word1 word2 ...<TAB>count` lines sorted by form.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (form, words, count) in self.entries() {
            writeln!(out, "{}\t{}\t{}", form, words.join(" "), count)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, LexiconError> {
        let mut lex = ExpansionLexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 || cols[0].is_empty() || cols[1].trim().is_empty() {
                return Err(LexiconError::Format(i + 1));
            }
            let count = cols[2].trim().parse().map_err(|_| LexiconError::Count(i + 1))?;
            lex.observe(cols[0], cols[1].split(' ').filter(|w| !w.is_empty()).map(String::from).collect(), count);
        }
        Ok(lex)
    }
}

/// Which step of the expansion protocol produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExpansionSource {
    Lexicon,
    LowercasedLexicon,
    Neural,
    /// Nothing usable; the token is kept as a single word.
    Unexpanded,
}

#[derive(Clone, Debug)]
pub struct MwtExpander {
    pub lexicon: ExpansionLexicon,
    pub model: Option<Seq2SeqModel>,
}

impl MwtExpander {
    /// Expansion of one token form with the step that produced it.
    pub fn expand_traced(&self, form: &str) -> (Vec<String>, ExpansionSource) {
        if let Some(w) = self.lexicon.get(form) {
            return (w.to_vec(), ExpansionSource::Lexicon);
        }
        if let Some(w) = self.lexicon.get(&form.to_lowercase()) {
            return (w.to_vec(), ExpansionSource::LowercasedLexicon);
        }
        if let Some(model) = &self.model {
            let words: Vec<String> = model.predict(form).split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
            if !words.is_empty() {
                return (words, ExpansionSource::Neural);
            }
        }
        (vec![form.to_string()], ExpansionSource::Unexpanded)
    }

    pub fn expand(&self, form: &str) -> Vec<String> {
        self.expand_traced(form).0
    }

    /// Expands every flagged token of `sentence` in place and returns how
    /// often each protocol step was used.
    pub fn expand_sentence(&self, sentence: &mut Sentence) -> HashMap<ExpansionSource, usize> {
        let mut stats = HashMap::new();
        let flagged = sentence
            .tokens
            .iter()
            .any(|t| !t.is_mwt() && misc_contains(&sentence.words[t.span.0 - 1].misc, MWT_FLAG));
        if !flagged {
            return stats;
        }
        let old = std::mem::take(&mut sentence.words);
        let mut words = Vec::with_capacity(old.len());
        let mut tokens = Vec::with_capacity(sentence.tokens.len());
        let mut new_id = vec![0; old.len() + 1];
        for t in &sentence.tokens {
            let start = words.len() + 1;
            let first = &old[t.span.0 - 1];
            if !t.is_mwt() && misc_contains(&first.misc, MWT_FLAG) {
                let (forms, source) = self.expand_traced(&t.form);
                *stats.entry(source).or_insert(0) += 1;
                let mut misc = first.misc.clone();
                misc_remove(&mut misc, MWT_FLAG);
                new_id[t.span.0] = start;
                if forms.len() == 1 {
                    let mut w = first.clone();
                    w.id = start;
                    w.form = forms[0].clone();
                    w.misc = misc;
                    words.push(w);
                    tokens.push(Token::single(start, &t.form));
                } else {
                    for (k, f) in forms.iter().enumerate() {
                        words.push(Word::new(start + k, f.as_str()));
                    }
                    tokens.push(Token {
                        span: (start, start + forms.len() - 1),
                        form: t.form.clone(),
                        misc,
                    });
                }
            } else {
                for (k, w) in old[t.span.0 - 1..t.span.1].iter().enumerate() {
                    new_id[t.span.0 + k] = start + k;
                    let mut w = w.clone();
                    w.id = start + k;
                    words.push(w);
                }
                let mut t = t.clone();
                t.span = (start, words.len());
                tokens.push(t);
            }
        }
        for w in &mut words {
            if let Some(h) = w.head {
                w.head = Some(new_id.get(h).copied().unwrap_or(0));
            }
        }
        sentence.words = words;
        sentence.tokens = tokens;
        stats
    }

    pub fn expand_document(&self, doc: &mut Document) -> HashMap<ExpansionSource, usize> {
        let mut stats = HashMap::new();
        for s in &mut doc.sentences {
            for (k, v) in self.expand_sentence(s) {
                *stats.entry(k).or_insert(0) += v;
            }
        }
        stats
    }

    pub fn to_container(&self) -> Option<Container> {
        self.model.as_ref().map(|m| m.to_container(KIND))
    }

    pub fn from_parts(lexicon: ExpansionLexicon, container: Option<Container>) -> Result<Self, ContainerError> {
        let model = container.map(|c| Seq2SeqModel::from_container(c, KIND)).transpose()?;
        Ok(MwtExpander { lexicon, model })
    }
}

/// Replaces every multi-word token by one flagged word carrying the token
/// form, as the tokenizer would emit it. Dependency annotation is dropped.
pub fn collapse_mwts(doc: &Document) -> Document {
    let mut out = doc.clone();
    for s in &mut out.sentences {
        let mut words = Vec::new();
        let mut tokens = Vec::new();
        for t in &s.tokens {
            let id = words.len() + 1;
            let mut w = Word::new(id, t.form.as_str());
            if t.is_mwt() {
                w.misc = t.misc.clone();
                misc_insert(&mut w.misc, MWT_FLAG);
            } else {
                w.misc = s.words[t.span.0 - 1].misc.clone();
            }
            words.push(w);
            tokens.push(Token::single(id, t.form.as_str()));
        }
        s.words = words;
        s.tokens = tokens;
    }
    out
}

/// `(token form, space-joined words)` for every multi-word token.
pub fn training_pairs(doc: &Document) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for s in &doc.sentences {
        for t in s.tokens.iter().filter(|t| t.is_mwt()) {
            let words: Vec<&str> = s.token_words(t).iter().map(|w| w.form.as_str()).collect();
            pairs.push((t.form.clone(), words.join(" ")));
        }
    }
    pairs
}

/// Builds the lexicon and, when the training data has any multi-word
/// tokens, trains the neural expander.
pub fn train_mwt(train: &Document, dev: &Document, config: &Seq2SeqConfig) -> (MwtExpander, Option<AnnealLog>) {
    let lexicon = ExpansionLexicon::build(train);
    let pairs = training_pairs(train);
    if pairs.is_empty() {
        return (MwtExpander { lexicon, model: None }, None);
    }
    let (model, log) = Seq2SeqModel::fit(config.clone(), &pairs, &training_pairs(dev));
    (
        MwtExpander {
            lexicon,
            model: Some(model),
        },
        Some(log),
    )
}
