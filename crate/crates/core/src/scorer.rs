//! Evaluation of system output against gold CoNLL-U.
//!
//! Both documents are aligned over their whitespace-free character streams.
//! Tokens and sentences match when their character spans are identical.
//! Words align only inside matching tokens: one-to-one for single-word
//! tokens, by the longest common subsequence of lowercased forms inside
//! multi-word tokens.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{universal_deprel, Document, Word};

/// Relations counted by CLAS, MLAS and BLEX.
pub const CONTENT_DEPRELS: &[&str] = &[
    "nsubj", "obj", "iobj", "csubj", "ccomp", "xcomp", "obl", "vocative", "expl", "dislocated", "advcl", "advmod",
    "discourse", "nmod", "appos", "nummod", "acl", "amod", "conj", "fixed", "flat", "compound", "list", "parataxis",
    "orphan", "goeswith", "reparandum", "root", "dep",
];

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("gold and system text differ at character {offset}: gold '{gold}', system '{system}'")]
    TextMismatch { offset: usize, gold: String, system: String },
    #[error("raw text differs from the gold tokens at character {0}")]
    RawMismatch(usize),
}

#[derive(Clone, Debug)]
struct ScoredWord<'a> {
    word: &'a Word,
    /// Global index of the head word, `None` for the root.
    head: Option<usize>,
}

struct Side<'a> {
    /// Character spans, end exclusive.
    tokens: Vec<(usize, usize)>,
    token_words: Vec<std::ops::Range<usize>>,
    sentences: Vec<(usize, usize)>,
    words: Vec<ScoredWord<'a>>,
    chars: Vec<char>,
}

fn side(doc: &Document) -> Side<'_> {
    let mut tokens = Vec::new();
    let mut token_words = Vec::new();
    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut chars = Vec::new();
    for s in &doc.sentences {
        let base = words.len();
        let start = chars.len();
        for t in &s.tokens {
            let t_start = chars.len();
            chars.extend(t.form.chars().filter(|c| !c.is_whitespace()));
            let span = (t_start, chars.len());
            tokens.push(span);
            let first = words.len();
            for w in s.token_words(t) {
                words.push(ScoredWord {
                    word: w,
                    head: match w.head {
                        Some(0) | None => None,
                        Some(h) => Some(base + h - 1),
                    },
                });
            }
            token_words.push(first..words.len());
        }
        if chars.len() > start {
            sentences.push((start, chars.len()));
        }
    }
    Side {
        tokens,
        token_words,
        sentences,
        words,
        chars,
    }
}

/// Gold-to-system word alignment.
pub struct Alignment<'a> {
    gold: Side<'a>,
    system: Side<'a>,
    /// `(gold index, system index)`, increasing in both.
    pub pairs: Vec<(usize, usize)>,
    system_to_gold: HashMap<usize, usize>,
}

fn lower(w: &ScoredWord) -> String {
    w.word.form.to_lowercase()
}

/// Word pairs inside tokens with identical spans. Multi-word tokens align
/// their words by the longest common subsequence of lowercased forms.
fn align_words(gold: &Side, system: &Side) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let (mut gi, mut si) = (0, 0);
    while gi < gold.tokens.len() && si < system.tokens.len() {
        let (gt, st) = (gold.tokens[gi], system.tokens[si]);
        if gt < st {
            gi += 1;
            continue;
        }
        if st < gt {
            si += 1;
            continue;
        }
        let (gw, sw) = (gold.token_words[gi].clone(), system.token_words[si].clone());
        gi += 1;
        si += 1;
        if gw.len() == 1 && sw.len() == 1 {
            pairs.push((gw.start, sw.start));
            continue;
        }
        let gf: Vec<String> = gw.clone().map(|i| lower(&gold.words[i])).collect();
        let sf: Vec<String> = sw.clone().map(|i| lower(&system.words[i])).collect();
        let (ng, ns) = (gf.len(), sf.len());
        let mut lcs = vec![vec![0usize; ns + 1]; ng + 1];
        for g in (0..ng).rev() {
            for s in (0..ns).rev() {
                lcs[g][s] = if gf[g] == sf[s] {
                    1 + lcs[g + 1][s + 1]
                } else {
                    lcs[g + 1][s].max(lcs[g][s + 1])
                };
            }
        }
        let (mut g, mut s) = (0, 0);
        while g < ng && s < ns {
            if gf[g] == sf[s] {
                pairs.push((gw.start + g, sw.start + s));
                g += 1;
                s += 1;
            } else if lcs[g][s] == lcs[g + 1][s] {
                g += 1;
            } else {
                s += 1;
            }
        }
    }
    pairs
}

fn strip(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Aligns `system` to `gold`. When `raw` is given it must match the gold
/// tokens up to whitespace.
pub fn align<'a>(gold: &'a Document, system: &'a Document, raw: Option<&str>) -> Result<Alignment<'a>, AlignError> {
    let g = side(gold);
    let s = side(system);
    if let Some(raw) = raw {
        let r = strip(raw);
        if let Some(i) = (0..r.len().max(g.chars.len())).find(|&i| r.get(i) != g.chars.get(i)) {
            return Err(AlignError::RawMismatch(i));
        }
    }
    if let Some(i) = (0..g.chars.len().max(s.chars.len())).find(|&i| g.chars.get(i) != s.chars.get(i)) {
        let ctx = |c: &[char]| c[i.min(c.len())..(i + 20).min(c.len())].iter().collect::<String>();
        return Err(AlignError::TextMismatch {
            offset: i,
            gold: ctx(&g.chars),
            system: ctx(&s.chars),
        });
    }
    let pairs = align_words(&g, &s);
    let system_to_gold = pairs.iter().map(|&(a, b)| (b, a)).collect();
    Ok(Alignment {
        gold: g,
        system: s,
        pairs,
        system_to_gold,
    })
}

/// Precision, recall and F1 for one metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Correct over aligned words; absent for span metrics.
    pub aligned_accuracy: Option<f64>,
}

fn ratio(a: usize, b: usize, empty: f64) -> f64 {
    if b == 0 {
        empty
    } else {
        a as f64 / b as f64
    }
}

impl Score {
    pub fn from_counts(correct: usize, gold: usize, system: usize, aligned: Option<usize>) -> Self {
        let both_empty = if gold == 0 && system == 0 { 1.0 } else { 0.0 };
        let precision = ratio(correct, system, both_empty);
        let recall = ratio(correct, gold, both_empty);
        let f1 = if gold == 0 {
            both_empty
        } else if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Score {
            precision,
            recall,
            f1,
            aligned_accuracy: aligned.map(|a| ratio(correct, a, 1.0)),
        }
    }
}

fn span_score(gold: &[(usize, usize)], system: &[(usize, usize)]) -> Score {
    let (mut gi, mut si, mut correct) = (0, 0, 0);
    while gi < gold.len() && si < system.len() {
        if gold[gi] == system[si] {
            correct += 1;
            gi += 1;
            si += 1;
        } else if gold[gi].0 < system[si].0 || (gold[gi].0 == system[si].0 && gold[gi].1 < system[si].1) {
            gi += 1;
        } else {
            si += 1;
        }
    }
    Score::from_counts(correct, gold.len(), system.len(), None)
}

/// Which words count and what must agree for a pair to be correct.
pub struct Attribute<'f> {
    /// Restricts gold and system words (content words for CLAS and friends).
    pub filter: Option<&'f dyn Fn(&Word) -> bool>,
    /// True when the aligned pair agrees. `head_ok` tells whether the system
    /// head aligns to the gold head.
    pub agree: &'f dyn Fn(&Word, &Word, bool) -> bool,
}

impl<'a> Alignment<'a> {
    fn head_ok(&self, gi: usize, si: usize) -> bool {
        let gh = self.gold.words[gi].head;
        match self.system.words[si].head {
            None => gh.is_none(),
            Some(sh) => self.system_to_gold.get(&sh).copied() == gh && gh.is_some(),
        }
    }

    pub fn tokens(&self) -> Score {
        span_score(&self.gold.tokens, &self.system.tokens)
    }

    pub fn sentences(&self) -> Score {
        span_score(&self.gold.sentences, &self.system.sentences)
    }

    /// F1 of aligned pairs agreeing on `attr`.
    pub fn compute_f1(&self, attr: &Attribute) -> Score {
        let keep = |w: &Word| attr.filter.map_or(true, |f| f(w));
        let gold = self.gold.words.iter().filter(|w| keep(w.word)).count();
        let system = self.system.words.iter().filter(|w| keep(w.word)).count();
        let mut aligned = 0;
        let mut correct = 0;
        for &(gi, si) in &self.pairs {
            let (g, s) = (self.gold.words[gi].word, self.system.words[si].word);
            if !keep(g) {
                continue;
            }
            aligned += 1;
            if (attr.agree)(g, s, self.head_ok(gi, si)) {
                correct += 1;
            }
        }
        Score::from_counts(correct, gold, system, Some(aligned))
    }
}

pub fn is_content(w: &Word) -> bool {
    CONTENT_DEPRELS.contains(&universal_deprel(&w.deprel))
}

fn same_rel(g: &Word, s: &Word) -> bool {
    universal_deprel(&g.deprel) == universal_deprel(&s.deprel)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tokens: Score,
    pub sentences: Score,
    pub words: Score,
    pub lemmas: Score,
    pub upos: Score,
    pub xpos: Score,
    pub ufeats: Score,
    pub all_tags: Score,
    pub uas: Score,
    pub las: Score,
    pub clas: Score,
    pub mlas: Score,
    pub blex: Score,
    /// Tag consistency; `None` when a tag accuracy is zero.
    pub pmi: Option<f64>,
}

pub const METRIC_NAMES: [&str; 13] = [
    "Tokens", "Sentences", "Words", "Lemmas", "UPOS", "XPOS", "UFeats", "AllTags", "UAS", "LAS", "CLAS", "MLAS", "BLEX",
];

impl EvalReport {
    pub fn metrics(&self) -> [(&'static str, &Score); 13] {
        [
            ("Tokens", &self.tokens),
            ("Sentences", &self.sentences),
            ("Words", &self.words),
            ("Lemmas", &self.lemmas),
            ("UPOS", &self.upos),
            ("XPOS", &self.xpos),
            ("UFeats", &self.ufeats),
            ("AllTags", &self.all_tags),
            ("UAS", &self.uas),
            ("LAS", &self.las),
            ("CLAS", &self.clas),
            ("MLAS", &self.mlas),
            ("BLEX", &self.blex),
        ]
    }

    fn metrics_mut(&mut self) -> [&mut Score; 13] {
        [
            &mut self.tokens,
            &mut self.sentences,
            &mut self.words,
            &mut self.lemmas,
            &mut self.upos,
            &mut self.xpos,
            &mut self.ufeats,
            &mut self.all_tags,
            &mut self.uas,
            &mut self.las,
            &mut self.clas,
            &mut self.mlas,
            &mut self.blex,
        ]
    }

    pub fn get(&self, name: &str) -> Option<&Score> {
        self.metrics().into_iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, s)| s)
    }

    /// Aligned columns in percent.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "Metric     | Precision |    Recall |  F1 Score | AligndAcc").unwrap();
        writeln!(out, "-----------+-----------+-----------+-----------+-----------").unwrap();
        for (name, s) in self.metrics() {
            let acc = s.aligned_accuracy.map_or(String::new(), |a| format!("{:10.2}", 100.0 * a));
            writeln!(
                out,
                "{:<11}|{:10.2} |{:10.2} |{:10.2} |{}",
                name,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1,
                acc
            )
            .unwrap();
        }
        match self.pmi {
            Some(p) => writeln!(out, "PMI        |{:10.4}", p).unwrap(),
            None => writeln!(out, "PMI        | undefined").unwrap(),
        }
        out
    }

    /// One `metric.field=value` line per number.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, s) in self.metrics() {
            writeln!(out, "{}.precision={:.6}", name, s.precision).unwrap();
            writeln!(out, "{}.recall={:.6}", name, s.recall).unwrap();
            writeln!(out, "{}.f1={:.6}", name, s.f1).unwrap();
            if let Some(a) = s.aligned_accuracy {
                writeln!(out, "{}.aligned_accuracy={:.6}", name, a).unwrap();
            }
        }
        match self.pmi {
            Some(p) => writeln!(out, "PMI={:.6}", p).unwrap(),
            None => writeln!(out, "PMI=undefined").unwrap(),
        }
        out
    }
}

/// `ln(p_all / (p_upos · p_xpos · p_ufeats))`; `None` if any accuracy is zero.
pub fn pmi_from_accuracies(upos: f64, xpos: f64, ufeats: f64, all_tags: f64) -> Option<f64> {
    if upos <= 0.0 || xpos <= 0.0 || ufeats <= 0.0 || all_tags <= 0.0 {
        return None;
    }
    Some((all_tags / (upos * xpos * ufeats)).ln())
}

/// PMI from the aligned accuracies of a report.
pub fn compute_pmi(report: &EvalReport) -> Option<f64> {
    let acc = |s: &Score| s.aligned_accuracy.unwrap_or(0.0);
    pmi_from_accuracies(acc(&report.upos), acc(&report.xpos), acc(&report.ufeats), acc(&report.all_tags))
}

/// Scores `system` against `gold` on every metric.
pub fn evaluate(gold: &Document, system: &Document, raw: Option<&str>) -> Result<EvalReport, AlignError> {
    let a = align(gold, system, raw)?;
    let f = |agree: &dyn Fn(&Word, &Word, bool) -> bool| a.compute_f1(&Attribute { filter: None, agree });
    let content = |agree: &dyn Fn(&Word, &Word, bool) -> bool| {
        a.compute_f1(&Attribute {
            filter: Some(&is_content),
            agree,
        })
    };
    let mut report = EvalReport {
        tokens: a.tokens(),
        sentences: a.sentences(),
        words: f(&|_, _, _| true),
        lemmas: f(&|g, s, _| g.lemma == s.lemma),
        upos: f(&|g, s, _| g.upos == s.upos),
        xpos: f(&|g, s, _| g.xpos == s.xpos),
        ufeats: f(&|g, s, _| g.feats == s.feats),
        all_tags: f(&|g, s, _| g.upos == s.upos && g.xpos == s.xpos && g.feats == s.feats),
        uas: f(&|_, _, h| h),
        las: f(&|g, s, h| h && same_rel(g, s)),
        clas: content(&|g, s, h| h && same_rel(g, s)),
        mlas: content(&|g, s, h| h && same_rel(g, s) && g.upos == s.upos && g.feats == s.feats),
        blex: content(&|g, s, h| h && same_rel(g, s) && g.lemma == s.lemma),
        pmi: None,
    };
    report.pmi = compute_pmi(&report);
    Ok(report)
}

/// Unweighted mean of every number over `reports`.
pub fn macro_average(reports: &[EvalReport]) -> EvalReport {
    assert!(!reports.is_empty(), "macro average of no reports");
    let k = reports.len() as f64;
    let mut out = EvalReport::default();
    for (i, slot) in out.metrics_mut().into_iter().enumerate() {
        let scores: Vec<&Score> = reports.iter().map(|r| r.metrics()[i].1).collect();
        slot.precision = scores.iter().map(|s| s.precision).sum::<f64>() / k;
        slot.recall = scores.iter().map(|s| s.recall).sum::<f64>() / k;
        slot.f1 = scores.iter().map(|s| s.f1).sum::<f64>() / k;
        slot.aligned_accuracy = scores
            .iter()
            .map(|s| s.aligned_accuracy)
            .sum::<Option<f64>>()
            .map(|a| a / k);
    }
    out.pmi = reports.iter().map(|r| r.pmi).sum::<Option<f64>>().map(|p| p / k);
    out
}
