//! Joint tokenization and sentence segmentation as unit tagging.
//!
//! Every unit (a character, or a syllable for Vietnamese-style text) gets
//! one of five tags. Three binary scores per unit (token end, sentence end,
//! multi-word token) factor the distribution over those tags. A BiLSTM plus
//! convolution layer makes a first prediction whose token score gates the
//! input of a second BiLSTM; the two layers' scores are summed.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{misc_insert, Document, Sentence, Token, Word};
use crate::mwt::MWT_FLAG;
use crate::nn::graph::sigmoid;
use crate::nn::vocab::UNK_ID;
use crate::nn::{
    run_annealed, AdamConfig, AnnealLog, AnnealSchedule, BiLstm, Container, ContainerError, EmbeddingTable, Graph, Linear,
    ParamGrads, ParamStore, Tensor, Var, Vocab,
};

const KIND: &str = "tokenizer";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("sentence {sentence}: token {token:?} does not match the raw text")]
    Alignment { sentence: usize, token: String },
    #[error("raw text continues after the last token: {0:?}")]
    TrailingText(String),
    #[error("training data is empty")]
    NoData,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    Char,
    /// Runs of letters, runs of digits or single symbols, each with its
    /// leading whitespace.
    Syllable,
}

impl std::str::FromStr for UnitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "char" => Ok(UnitMode::Char),
            "syllable" => Ok(UnitMode::Syllable),
            _ => Err(format!("unknown unit mode {:?} (expected char or syllable)", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub text: String,
    /// Starts with whitespace, starts capitalized, fully capitalized,
    /// purely numerical.
    pub features: [bool; 4],
}

impl Unit {
    pub fn new(text: &str) -> Self {
        let core = text.trim_start();
        let cased: Vec<char> = core.chars().filter(|c| c.is_uppercase() || c.is_lowercase()).collect();
        Unit {
            text: text.to_string(),
            features: [
                text.starts_with(char::is_whitespace),
                core.chars().next().map_or(false, char::is_uppercase),
                cased.len() >= 2 && cased.iter().all(|c| c.is_uppercase()),
                !core.is_empty() && core.chars().all(|c| c.is_ascii_digit()),
            ],
        }
    }

    /// Embedding key: the text without leading whitespace, or a single
    /// space for pure whitespace.
    pub fn key(&self) -> &str {
        let t = self.text.trim_start();
        if t.is_empty() {
            " "
        } else {
            t
        }
    }
}

fn whitespace_run() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").unwrap())
}

fn syllable() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*(?:\p{L}+|\p{N}+|\S)|\s+$").unwrap())
}

fn paragraph_break() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[^\S\n]*\n\s*").unwrap())
}

/// Non-empty paragraphs of `raw` (split at blank lines) with every
/// whitespace run replaced by one space and the ends trimmed.
pub fn paragraphs(raw: &str) -> Vec<String> {
    paragraph_break()
        .split(raw)
        .map(|p| whitespace_run().replace_all(p.trim(), " ").into_owned())
        .filter(|p| !p.is_empty())
        .collect()
}

/// Units of one paragraph; whitespace runs count as single spaces.
pub fn unitize(text: &str, mode: UnitMode) -> Vec<Unit> {
    let text = whitespace_run().replace_all(text, " ");
    match mode {
        UnitMode::Char => text.chars().map(|c| Unit::new(c.encode_utf8(&mut [0; 4]))).collect(),
        UnitMode::Syllable => syllable().find_iter(&text).map(|m| Unit::new(m.as_str())).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitTag {
    /// End of token.
    Eot,
    /// End of sentence.
    Eos,
    /// End of a multi-word token.
    Mwt,
    /// End of a multi-word token that ends a sentence.
    Mws,
    Other,
}

impl UnitTag {
    pub const ALL: [UnitTag; 5] = [UnitTag::Eot, UnitTag::Eos, UnitTag::Mwt, UnitTag::Mws, UnitTag::Other];

    pub fn ends_token(self) -> bool {
        self != UnitTag::Other
    }

    pub fn ends_sentence(self) -> bool {
        matches!(self, UnitTag::Eos | UnitTag::Mws)
    }

    pub fn is_mwt(self) -> bool {
        matches!(self, UnitTag::Mwt | UnitTag::Mws)
    }

    pub fn for_token(sentence_final: bool, mwt: bool) -> Self {
        match (sentence_final, mwt) {
            (false, false) => UnitTag::Eot,
            (true, false) => UnitTag::Eos,
            (false, true) => UnitTag::Mwt,
            (true, true) => UnitTag::Mws,
        }
    }

    /// Sign of the token, sentence and MWT scores and whether the last two
    /// take part in this tag's probability.
    fn decisions(self) -> ([f64; 3], [f64; 3]) {
        let b = |x: bool| if x { 1.0 } else { -1.0 };
        match self {
            UnitTag::Other => ([-1.0, 1.0, 1.0], [1.0, 0.0, 0.0]),
            t => ([1.0, b(t.ends_sentence()), b(t.is_mwt())], [1.0, 1.0, 1.0]),
        }
    }
}

/// Probabilities of the five tags, in [`UnitTag::ALL`] order, from the
/// token, sentence and MWT scores.
pub fn tag_distribution(tok: f64, sent: f64, mwt: f64) -> [f64; 5] {
    let (s, ns) = (sigmoid(tok), sigmoid(-tok));
    let (t, nt) = (sigmoid(sent), sigmoid(-sent));
    let (m, nm) = (sigmoid(mwt), sigmoid(-mwt));
    [s * nt * nm, s * t * nm, s * nt * m, s * t * m, ns]
}

/// Most probable tag for each row of an `n × 3` score matrix; ties go to the
/// earlier tag.
pub fn argmax_tags(scores: &Tensor) -> Vec<UnitTag> {
    scores
        .rows()
        .into_iter()
        .map(|r| {
            let p = tag_distribution(r[0], r[1], r[2]);
            let mut best = 0;
            for k in 1..5 {
                if p[k] > p[best] {
                    best = k;
                }
            }
            UnitTag::ALL[best]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedToken {
    pub form: String,
    pub mwt: bool,
    pub space_after: bool,
}

/// Token and sentence boundaries from unit tags. Material after the last
/// boundary becomes a final token and sentence.
pub fn decode_segments(units: &[Unit], tags: &[UnitTag]) -> Vec<Vec<DecodedToken>> {
    assert_eq!(units.len(), tags.len(), "one tag per unit");
    let mut sentences = Vec::new();
    let mut sentence = Vec::new();
    let mut text = String::new();
    for (i, (u, &tag)) in units.iter().zip(tags).enumerate() {
        text.push_str(&u.text);
        if tag.ends_token() {
            let form = text.trim();
            if !form.is_empty() {
                let space_after = text.ends_with(char::is_whitespace)
                    || units.get(i + 1).map_or(true, |n| n.text.starts_with(char::is_whitespace));
                sentence.push(DecodedToken {
                    form: form.to_string(),
                    mwt: tag.is_mwt(),
                    space_after,
                });
            }
            text.clear();
        }
        if tag.ends_sentence() && !sentence.is_empty() {
            sentences.push(std::mem::take(&mut sentence));
        }
    }
    if !text.trim().is_empty() {
        sentence.push(DecodedToken {
            form: text.trim().to_string(),
            mwt: false,
            space_after: true,
        });
    }
    if !sentence.is_empty() {
        sentences.push(sentence);
    }
    sentences
}

/// CoNLL-U skeleton for decoded paragraphs: one word per token, with
/// `SpaceAfter=No` and the multi-word flag in MISC.
pub fn skeleton(paragraphs: &[Vec<Vec<DecodedToken>>]) -> Document {
    let mut sentences = Vec::new();
    let mut raw = Vec::new();
    for para in paragraphs {
        let mut texts = Vec::new();
        for (k, decoded) in para.iter().enumerate() {
            let mut words = Vec::new();
            let mut tokens = Vec::new();
            for (i, t) in decoded.iter().enumerate() {
                let mut w = Word::new(i + 1, t.form.as_str());
                if t.mwt {
                    misc_insert(&mut w.misc, MWT_FLAG);
                }
                if !t.space_after {
                    misc_insert(&mut w.misc, "SpaceAfter=No");
                }
                words.push(w);
                tokens.push(Token::single(i + 1, t.form.as_str()));
            }
            let mut s = Sentence {
                words,
                tokens,
                text: None,
                comments: Vec::new(),
            };
            if k == 0 {
                s.comments.push("# newpar".to_string());
            }
            let text = s.detokenize();
            texts.push(text.clone());
            let last_space = decoded.last().map_or(true, |t| t.space_after);
            if !last_space {
                texts.push(String::new());
            }
            s.text = Some(text);
            sentences.push(s);
        }
        raw.push(join_sentences(&texts));
    }
    let mut doc = Document::new(sentences);
    doc.raw_text = Some(raw.join("\n\n"));
    doc
}

/// Sentence texts joined by spaces; an empty entry marks a sentence that
/// runs into the next one without whitespace.
fn join_sentences(texts: &[String]) -> String {
    let mut out = String::new();
    let mut glue = false;
    for t in texts {
        if t.is_empty() {
            glue = true;
            continue;
        }
        if !out.is_empty() && !glue {
            out.push(' ');
        }
        out.push_str(t);
        glue = false;
    }
    out
}

/// Units of one paragraph with their tags.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedParagraph {
    pub units: Vec<Unit>,
    pub tags: Vec<UnitTag>,
}

/// Gold unit tags from aligning the tokens of `doc` with `raw`, ignoring
/// whitespace. The unit holding each token's last character ends it.
pub fn gold_unit_tags(doc: &Document, raw: &str, mode: UnitMode) -> Result<Vec<TaggedParagraph>, TokenizerError> {
    let mut paras: Vec<TaggedParagraph> = paragraphs(raw)
        .iter()
        .map(|p| {
            let units = unitize(p, mode);
            let tags = vec![UnitTag::Other; units.len()];
            TaggedParagraph { units, tags }
        })
        .collect();
    let mut chars = Vec::new();
    for (p, para) in paras.iter().enumerate() {
        for (u, unit) in para.units.iter().enumerate() {
            chars.extend(unit.text.chars().filter(|c| !c.is_whitespace()).map(|c| (c, p, u)));
        }
    }
    let mut pos = 0;
    for (si, s) in doc.sentences.iter().enumerate() {
        for (ti, t) in s.tokens.iter().enumerate() {
            let mut last = None;
            for c in t.form.chars().filter(|c| !c.is_whitespace()) {
                match chars.get(pos) {
                    Some(&(rc, p, u)) if rc == c => last = Some((p, u)),
                    _ => {
                        return Err(TokenizerError::Alignment {
                            sentence: si + 1,
                            token: t.form.clone(),
                        })
                    }
                }
                pos += 1;
            }
            if let Some((p, u)) = last {
                paras[p].tags[u] = UnitTag::for_token(ti + 1 == s.tokens.len(), t.is_mwt());
            }
        }
    }
    if pos < chars.len() {
        let rest: String = chars[pos..].iter().take(20).map(|c| c.0).collect();
        return Err(TokenizerError::TrailingText(rest));
    }
    Ok(paras)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub mode: UnitMode,
    pub emb_dim: usize,
    /// Per direction; the convolution output matches the BiLSTM width.
    pub hidden: usize,
    /// Convolution filter widths; empty disables the convolution.
    pub conv_widths: Vec<usize>,
    pub dropout: f64,
    /// Probability of replacing an input unit by the unknown symbol.
    pub unk_dropout: f64,
    pub gate_temperature: f64,
    /// Gate the second layer's input with the first layer's token score.
    pub gating: bool,
    /// Probability of forcing a gate value to 1 while training.
    pub gate_noise: f64,
    /// Training examples are paragraph pieces of at most this many units.
    pub chunk_len: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_steps: usize,
    pub eval_interval: usize,
    /// Steps before dev deterioration starts decaying the learning rate.
    pub anneal_after: usize,
    pub anneal_rate: f64,
    pub seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            mode: UnitMode::Char,
            emb_dim: 32,
            hidden: 64,
            conv_widths: vec![1, 9],
            dropout: 0.33,
            unk_dropout: 0.33,
            gate_temperature: 2.0,
            gating: true,
            gate_noise: 0.02,
            chunk_len: 100,
            batch_size: 32,
            lr: 0.002,
            max_steps: 20_000,
            eval_interval: 200,
            anneal_after: 2000,
            anneal_rate: 0.999,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TokenizerNet {
    pub emb: EmbeddingTable,
    pub lstm1: BiLstm,
    pub convs: Vec<(usize, Linear)>,
    pub w1: Linear,
    pub lstm2: BiLstm,
    pub w2: Linear,
}

/// Forward pass outputs, all `n × 3` except `gate` (`n × 1`) and `gated`
/// (the second layer's input).
pub struct TokenizerScores {
    pub layer1: Var,
    pub layer2: Var,
    pub total: Var,
    pub gate: Var,
    pub gated: Var,
}

/// Rows of `x` around each position: `n × (width · d)`, zero-padded.
pub fn conv_windows(g: &mut Graph, x: Var, width: usize) -> Var {
    let (n, d) = g.shape(x);
    let left = (width - 1) / 2;
    let right = width - 1 - left;
    let lz = g.zeros(left, d);
    let rz = g.zeros(right, d);
    let parts: Vec<Var> = [lz, x, rz].into_iter().filter(|&v| g.shape(v).0 > 0).collect();
    let padded = g.concat_rows(&parts);
    let cols: Vec<Var> = (0..width)
        .map(|k| {
            let rows: Vec<usize> = (0..n).map(|i| i + k).collect();
            g.gather(padded, &rows)
        })
        .collect();
    g.concat_cols(&cols)
}

impl TokenizerNet {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, config: &TokenizerConfig, vocab: Vocab) -> Self {
        let h2 = 2 * config.hidden;
        assert!(
            config.conv_widths.is_empty() || h2 % config.conv_widths.len() == 0,
            "convolution channels must split the BiLSTM width evenly"
        );
        let channels = h2 / config.conv_widths.len().max(1);
        let input = config.emb_dim + 4;
        TokenizerNet {
            emb: EmbeddingTable::new(store, rng, "tok.emb", vocab, config.emb_dim),
            lstm1: BiLstm::new(store, rng, "tok.lstm1", input, config.hidden),
            convs: config
                .conv_widths
                .iter()
                .map(|&w| (w, Linear::new(store, rng, &format!("tok.conv{}", w), w * input, channels)))
                .collect(),
            w1: Linear::new(store, rng, "tok.w1", h2, 3),
            lstm2: BiLstm::new(store, rng, "tok.lstm2", h2, config.hidden),
            w2: Linear::new(store, rng, "tok.w2", h2, 3),
        }
    }

    pub fn unit_ids(&self, units: &[Unit]) -> Vec<usize> {
        units.iter().map(|u| self.emb.vocab.index_or_unk(u.key())).collect()
    }

    pub fn forward(&self, g: &mut Graph, units: &[Unit], config: &TokenizerConfig) -> TokenizerScores {
        let n = units.len();
        let training = g.is_training();
        let mut ids = self.unit_ids(units);
        if let (true, Some(rng)) = (config.unk_dropout > 0.0, g.rng()) {
            for id in &mut ids {
                if rng.gen::<f64>() < config.unk_dropout {
                    *id = UNK_ID;
                }
            }
        }
        let dropout = if training { config.dropout } else { 0.0 };
        let e = self.emb.lookup(g, &ids);
        let feats = g.input(Tensor::from_shape_fn((n, 4), |(i, k)| units[i].features[k] as u8 as f64));
        let x = g.concat_cols(&[e, feats]);
        let x = g.dropout(x, dropout);

        let rnn = self.lstm1.run(g, x, 0.0).states;
        let convs: Vec<Var> = self
            .convs
            .iter()
            .map(|(w, lin)| {
                let win = conv_windows(g, x, *w);
                let c = lin.forward(g, win);
                g.relu(c)
            })
            .collect();
        let h1 = if convs.is_empty() {
            rnn
        } else {
            let cnn = g.concat_cols(&convs);
            g.add(rnn, cnn)
        };
        let h1 = g.dropout(h1, dropout);
        let layer1 = self.w1.forward(g, h1);

        let tok = g.slice_cols(layer1, 0, 1);
        let tok = g.scale(tok, 1.0 / config.gate_temperature);
        let mut gate = if config.gating {
            g.sigmoid(tok)
        } else {
            g.input(Tensor::ones((n, 1)))
        };
        if config.gating && training && config.gate_noise > 0.0 {
            let p = config.gate_noise;
            let forced: Vec<bool> = match g.rng() {
                Some(rng) => (0..n).map(|_| rng.gen::<f64>() < p).collect(),
                None => vec![false; n],
            };
            let keep = Tensor::from_shape_fn((n, 1), |(i, _)| if forced[i] { 0.0 } else { 1.0 });
            let add = Tensor::from_shape_fn((n, 1), |(i, _)| if forced[i] { 1.0 } else { 0.0 });
            let kept = g.mul_const(gate, keep);
            gate = g.add_const(kept, &add);
        }
        let gated = g.mul_col(h1, gate);
        let h2 = self.lstm2.run(g, gated, 0.0).states;
        let h2 = g.dropout(h2, dropout);
        let layer2 = self.w2.forward(g, h2);
        let total = g.add(layer1, layer2);
        TokenizerScores {
            layer1,
            layer2,
            total,
            gate,
            gated,
        }
    }
}

/// Summed negative log-probability of `tags` under `n × 3` scores.
pub fn tag_nll(g: &mut Graph, scores: Var, tags: &[UnitTag]) -> Var {
    let n = tags.len();
    let mut signs = Tensor::zeros((n, 3));
    let mut weights = Tensor::zeros((n, 3));
    for (i, t) in tags.iter().enumerate() {
        let (s, w) = t.decisions();
        for k in 0..3 {
            signs[[i, k]] = s[k];
            weights[[i, k]] = w[k];
        }
    }
    let signed = g.mul_const(scores, signs);
    let ls = g.log_sigmoid(signed);
    let lw = g.mul_const(ls, weights);
    let total = g.sum(lw);
    g.neg(total)
}

#[derive(Clone, Debug)]
pub struct TokenizerModel {
    pub config: TokenizerConfig,
    pub store: ParamStore,
    pub net: TokenizerNet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TokenizerConfig,
    vocab: Vocab,
}

impl TokenizerModel {
    pub fn new(config: TokenizerConfig, vocab: Vocab) -> Self {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = TokenizerNet::new(&mut store, &mut rng, &config, vocab);
        TokenizerModel { config, store, net }
    }

    /// Summed scores of both layers, `n × 3`.
    pub fn scores(&self, units: &[Unit]) -> Tensor {
        let mut g = Graph::new(&self.store);
        let s = self.net.forward(&mut g, units, &self.config);
        g.value(s.total).clone()
    }

    pub fn predict_tags(&self, units: &[Unit]) -> Vec<UnitTag> {
        if units.is_empty() {
            return Vec::new();
        }
        argmax_tags(&self.scores(units))
    }

    /// Segments raw text into a CoNLL-U skeleton.
    pub fn tokenize(&self, raw: &str) -> Document {
        let decoded: Vec<Vec<Vec<DecodedToken>>> = paragraphs(raw)
            .par_iter()
            .map(|p| {
                let units = unitize(p, self.config.mode);
                let tags = self.predict_tags(&units);
                decode_segments(&units, &tags)
            })
            .collect();
        skeleton(&decoded)
    }

    /// Fraction of units whose predicted tag matches.
    pub fn unit_accuracy(&self, paragraphs: &[TaggedParagraph]) -> f64 {
        let (ok, total) = paragraphs
            .par_iter()
            .map(|p| {
                let pred = self.predict_tags(&p.units);
                (pred.iter().zip(&p.tags).filter(|(a, b)| a == b).count(), p.units.len())
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if total == 0 {
            0.0
        } else {
            ok as f64 / total as f64
        }
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            config: self.config.clone(),
            vocab: self.net.emb.vocab.clone(),
        };
        Container::new(KIND, serde_json::to_value(header).expect("serializable header"), self.store.clone())
    }

    pub fn from_container(c: Container) -> Result<Self, TokenizerError> {
        c.expect_kind(KIND)?;
        let h: Header = serde_json::from_value(c.header).map_err(ContainerError::from)?;
        let mut store = c.params;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = TokenizerNet::new(&mut store, &mut rng, &h.config, h.vocab);
        Ok(TokenizerModel {
            config: h.config,
            store,
            net,
        })
    }
}

/// Splits paragraphs into training pieces of at most `len` units.
pub fn chunk(paragraphs: &[TaggedParagraph], len: usize) -> Vec<TaggedParagraph> {
    let mut out = Vec::new();
    for p in paragraphs {
        for start in (0..p.units.len()).step_by(len.max(1)) {
            let end = (start + len).min(p.units.len());
            out.push(TaggedParagraph {
                units: p.units[start..end].to_vec(),
                tags: p.tags[start..end].to_vec(),
            });
        }
    }
    out
}

fn raw_of(doc: &Document) -> String {
    doc.raw_text.clone().unwrap_or_else(|| doc.reconstruct_raw_text())
}

/// Trains on `train` against its raw text (rebuilt from the sentences when
/// absent), keeping the parameters with the best unit-tag accuracy on `dev`.
pub fn train_tokenizer(train: &Document, dev: &Document, config: &TokenizerConfig) -> Result<(TokenizerModel, AnnealLog), TokenizerError> {
    let train_paras = gold_unit_tags(train, &raw_of(train), config.mode)?;
    let dev_paras = if dev.sentences.is_empty() {
        train_paras.clone()
    } else {
        gold_unit_tags(dev, &raw_of(dev), config.mode)?
    };
    let chunks = chunk(&train_paras, config.chunk_len);
    if chunks.is_empty() {
        return Err(TokenizerError::NoData);
    }
    let mut counts = HashMap::new();
    for p in &train_paras {
        for u in &p.units {
            *counts.entry(u.key().to_string()).or_insert(0) += 1;
        }
    }
    let mut model = TokenizerModel::new(config.clone(), Vocab::from_counts(&[], &counts, 1));
    let schedule = AnnealSchedule {
        adam: AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        max_steps: config.max_steps,
        eval_interval: config.eval_interval,
        warmup_steps: config.anneal_after,
        decay: config.anneal_rate,
        clip_norm: Some(5.0),
    };
    let net = model.net.clone();
    let train_step = |st: &ParamStore, step: usize| {
        let batch = crate::nn::batch_indices(chunks.len(), config.batch_size, step, config.seed);
        let mut g = Graph::training(st, config.seed.wrapping_mul(977).wrapping_add(step as u64));
        let mut terms = Vec::new();
        let mut units = 0;
        for &b in &batch {
            let c = &chunks[b];
            let s = net.forward(&mut g, &c.units, config);
            terms.push(tag_nll(&mut g, s.layer1, &c.tags));
            terms.push(tag_nll(&mut g, s.total, &c.tags));
            units += c.units.len();
        }
        let all = g.concat_rows(&terms);
        let sum = g.sum(all);
        let loss = g.scale(sum, 1.0 / units as f64);
        let mut grads = ParamGrads::new(st);
        g.backward_into(loss, &mut grads);
        (g.scalar(loss), grads)
    };
    let dev_eval = |st: &ParamStore| {
        let m = TokenizerModel {
            config: config.clone(),
            store: st.clone(),
            net: net.clone(),
        };
        m.unit_accuracy(&dev_paras)
    };
    let log = run_annealed(&schedule, &mut model.store, train_step, dev_eval);
    Ok((model, log))
}
