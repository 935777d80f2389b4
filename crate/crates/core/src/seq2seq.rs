//! Character-level encoder-decoder with MLP attention and beam search.
//!
//! The encoder is a single-layer BiLSTM; the decoder starts from the
//! concatenated final forward and backward encoder states and reads only the
//! embedding of the previous output symbol. Encoder and decoder share one
//! character embedding table.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::vocab::{END, PAD_ID, START, UNK_ID};
use rand::SeedableRng;

use crate::nn::{
    batch_indices, run_annealed, AdamConfig, AnnealLog, AnnealSchedule, BiLstm, Container, ContainerError, EmbeddingTable,
    Graph, Init, Linear, Lstm, LstmState, ParamGrads, ParamId, ParamStore, Var, Vocab,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub emb_dim: usize,
    /// Encoder size per direction; the decoder is twice as wide.
    pub hidden: usize,
    pub dropout: f64,
    pub beam: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs before dev deterioration starts decaying the learning rate.
    pub anneal_after: usize,
    pub anneal_rate: f64,
    pub seed: u64,
    /// Lemmatizer only: choose between identity, lowercasing and decoding
    /// with the edit classifier instead of always decoding.
    #[serde(default = "enabled")]
    pub edit: bool,
}

fn enabled() -> bool {
    true
}

impl Seq2SeqConfig {
    /// Sizes used for multi-word token expansion.
    pub fn mwt() -> Self {
        Seq2SeqConfig {
            emb_dim: 64,
            hidden: 256,
            dropout: 0.5,
            beam: 8,
            epochs: 100,
            batch_size: 50,
            lr: 0.001,
            anneal_after: 15,
            anneal_rate: 0.9,
            seed: 1,
            edit: true,
        }
    }

    /// Sizes used for lemmatization.
    pub fn lemmatizer() -> Self {
        Seq2SeqConfig {
            emb_dim: 50,
            hidden: 100,
            epochs: 60,
            ..Self::mwt()
        }
    }
}

/// Default decoding limit for an input of `n` characters.
pub fn default_max_len(n: usize) -> usize {
    2 * n + 10
}

#[derive(Clone, Debug)]
pub struct Seq2SeqNet {
    pub emb: EmbeddingTable,
    pub encoder: BiLstm,
    pub decoder: Lstm,
    pub attn_dec: ParamId,
    pub attn_enc: ParamId,
    pub attn_u: ParamId,
    pub out: Linear,
    pub out_u: Linear,
}

/// Encoder output for one input sequence.
pub struct Encoded {
    /// `n × 2·hidden`.
    pub states: Var,
    /// Encoder states projected for attention, `n × 2·hidden`.
    keys: Var,
    pub init: LstmState,
    pub ids: Vec<usize>,
}

pub struct Step {
    /// `1 × |V|` log-probabilities.
    pub log_probs: Var,
    /// `1 × n` attention weights.
    pub attention: Var,
    pub state: LstmState,
}

/// Vocabulary over the characters of all inputs and outputs.
pub fn build_vocab<'a, I: IntoIterator<Item = &'a (String, String)>>(pairs: I) -> Vocab {
    let mut counts = HashMap::new();
    for (a, b) in pairs {
        for c in a.chars().chain(b.chars()) {
            *counts.entry(c.to_string()).or_insert(0) += 1;
        }
    }
    Vocab::from_counts(&[START, END], &counts, 1)
}

impl Seq2SeqNet {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, vocab: Vocab, config: &Seq2SeqConfig) -> Self {
        let h = config.hidden;
        let d = 2 * h;
        let v = vocab.len();
        Seq2SeqNet {
            emb: EmbeddingTable::new(store, rng, &format!("{}.emb", name), vocab, config.emb_dim),
            encoder: BiLstm::new(store, rng, &format!("{}.enc", name), config.emb_dim, h),
            decoder: Lstm::new(store, rng, &format!("{}.dec", name), config.emb_dim, d),
            attn_dec: store.get_or_init(&format!("{}.attn.dec", name), (d, d), Init::FanIn, rng),
            attn_enc: store.get_or_init(&format!("{}.attn.enc", name), (d, d), Init::FanIn, rng),
            attn_u: store.get_or_init(&format!("{}.attn.u", name), (d, 1), Init::FanIn, rng),
            out: Linear::new(store, rng, &format!("{}.out", name), 2 * d, d),
            out_u: Linear::new(store, rng, &format!("{}.out_u", name), d, v),
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.emb.vocab
    }

    pub fn ids(&self, text: &str) -> Vec<usize> {
        let ids: Vec<usize> = text
            .chars()
            .map(|c| self.vocab().index_or_unk(c.encode_utf8(&mut [0; 4])))
            .collect();
        if ids.is_empty() {
            vec![UNK_ID]
        } else {
            ids
        }
    }

    pub fn encode(&self, g: &mut Graph, ids: &[usize], dropout: f64) -> Encoded {
        let x = self.emb.lookup(g, ids);
        let x = g.dropout(x, dropout);
        let run = self.encoder.run(g, x, 0.0);
        let states = g.dropout(run.states, dropout);
        let we = g.param(self.attn_enc);
        let keys = g.matmul(states, we);
        let init = LstmState {
            h: g.concat_cols(&[run.last_fwd.h, run.last_bwd.h]),
            c: g.concat_cols(&[run.last_fwd.c, run.last_bwd.c]),
        };
        Encoded {
            states,
            keys,
            init,
            ids: ids.to_vec(),
        }
    }

    pub fn decode_step(&self, g: &mut Graph, enc: &Encoded, prev: usize, state: LstmState, dropout: f64) -> Step {
        let x = self.emb.lookup(g, &[prev]);
        let x = g.dropout(x, dropout);
        let state = self.decoder.step(g, x, state);
        let wd = g.param(self.attn_dec);
        let q = g.matmul(state.h, wd);
        let e = g.add_row(enc.keys, q);
        let e = g.tanh(e);
        let u = g.param(self.attn_u);
        let scores = g.matmul(e, u);
        let scores = g.transpose(scores);
        let attention = g.softmax(scores);
        let context = g.matmul(attention, enc.states);
        let hc = g.concat_cols(&[state.h, context]);
        let o = self.out.forward(g, hc);
        let o = g.tanh(o);
        let o = g.dropout(o, dropout);
        let logits = self.out_u.forward(g, o);
        let log_probs = g.log_softmax(logits);
        Step {
            log_probs,
            attention,
            state,
        }
    }

    /// Teacher-forced negative log-likelihood of `target` followed by the end
    /// symbol, summed over symbols.
    pub fn nll(&self, g: &mut Graph, enc: &Encoded, target: &[usize], dropout: f64) -> Var {
        let start = self.vocab().reserved(START);
        let end = self.vocab().reserved(END);
        let mut state = enc.init;
        let mut prev = start;
        let mut terms = Vec::with_capacity(target.len() + 1);
        for &y in target.iter().chain(std::iter::once(&end)) {
            let step = self.decode_step(g, enc, prev, state, dropout);
            terms.push(g.pick(step.log_probs, &[y]));
            state = step.state;
            prev = y;
        }
        let all = g.concat_rows(&terms);
        let s = g.sum(all);
        g.neg(s)
    }

    /// Log-probability of producing exactly `target` for `input`.
    pub fn sequence_log_prob(&self, store: &ParamStore, input: &[usize], target: &[usize]) -> f64 {
        let mut g = Graph::new(store);
        let enc = self.encode(&mut g, input, 0.0);
        let nll = self.nll(&mut g, &enc, target, 0.0);
        -g.scalar(nll)
    }

    /// Symbols that decoding may emit.
    pub fn output_symbols(&self) -> Vec<usize> {
        let start = self.vocab().reserved(START);
        let end = self.vocab().reserved(END);
        (0..self.vocab().len()).filter(|&i| i != PAD_ID && i != start && i != end).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub symbols: Vec<usize>,
    pub text: String,
    pub log_prob: f64,
    /// The hypothesis reached the length limit and was closed there.
    pub truncated: bool,
}

struct Hyp {
    symbols: Vec<usize>,
    /// Attention argmax at each emitted symbol.
    sources: Vec<usize>,
    log_prob: f64,
    state: LstmState,
}

/// Higher score first, then shorter, then lexicographically smaller.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.len().cmp(&b.1.len()))
        .then(a.1.cmp(b.1))
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Beam search for the most probable output. Hypotheses are ranked by their
/// summed log-probability; `max_len` bounds the number of symbols before the
/// end symbol. Unknown output symbols copy the input character under the
/// attention maximum.
pub fn beam_decode(net: &Seq2SeqNet, store: &ParamStore, input: &str, beam: usize, max_len: usize) -> BeamOutput {
    assert!(beam >= 1, "beam size must be at least 1");
    let ids = net.ids(input);
    let input_chars: Vec<char> = input.chars().collect();
    let end = net.vocab().reserved(END);
    let candidates = net.output_symbols();
    let mut g = Graph::new(store);
    let enc = net.encode(&mut g, &ids, 0.0);
    let mut alive = vec![Hyp {
        symbols: Vec::new(),
        sources: Vec::new(),
        log_prob: 0.0,
        state: enc.init,
    }];
    let mut done: Vec<(Vec<usize>, Vec<usize>, f64, bool)> = Vec::new();
    let mut prev_symbol = net.vocab().reserved(START);
    for len in 0..=max_len {
        let mut next: Vec<Hyp> = Vec::new();
        for h in &alive {
            let prev = h.symbols.last().copied().unwrap_or(prev_symbol);
            let step = net.decode_step(&mut g, &enc, prev, h.state, 0.0);
            let lp = g.value(step.log_probs).row(0).to_owned();
            let src = argmax(g.value(step.attention).row(0));
            done.push((h.symbols.clone(), h.sources.clone(), h.log_prob + lp[end], len == max_len));
            if len == max_len {
                continue;
            }
            for &c in &candidates {
                let mut symbols = h.symbols.clone();
                symbols.push(c);
                let mut sources = h.sources.clone();
                sources.push(src);
                next.push(Hyp {
                    symbols,
                    sources,
                    log_prob: h.log_prob + lp[c],
                    state: step.state,
                });
            }
        }
        next.sort_by(|a, b| rank((a.log_prob, &a.symbols), (b.log_prob, &b.symbols)));
        next.truncate(beam);
        // log-probabilities only fall, so no live hypothesis can overtake a
        // finished one that already scores at least as well
        let best_done = done.iter().map(|d| d.2).fold(f64::NEG_INFINITY, f64::max);
        if next.is_empty() || next[0].log_prob < best_done {
            break;
        }
        alive = next;
        prev_symbol = net.vocab().reserved(START);
    }
    done.sort_by(|a, b| rank((a.2, &a.0), (b.2, &b.0)));
    let (symbols, sources, log_prob, truncated) = done.swap_remove(0);
    let text = symbols
        .iter()
        .zip(&sources)
        .map(|(&s, &src)| {
            if s == UNK_ID {
                input_chars.get(src).map(|c| c.to_string()).unwrap_or_default()
            } else {
                net.vocab().symbol(s).to_string()
            }
        })
        .collect();
    BeamOutput {
        symbols,
        text,
        log_prob,
        truncated,
    }
}

/// A trained encoder-decoder with its parameters.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    pub config: Seq2SeqConfig,
    pub net: Seq2SeqNet,
    pub store: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: Seq2SeqConfig,
    vocab: Vocab,
}

pub const PARAM_PREFIX: &str = "s2s";

impl Seq2SeqModel {
    /// Freshly initialized model over `vocab`.
    pub fn new(config: Seq2SeqConfig, vocab: Vocab) -> Self {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = Seq2SeqNet::new(&mut store, &mut rng, PARAM_PREFIX, vocab, &config);
        Seq2SeqModel { config, net, store }
    }

    /// Trains a model on `pairs`, keeping the epoch with the best exact match
    /// on `dev` (or on `pairs` when `dev` is empty).
    pub fn fit(config: Seq2SeqConfig, pairs: &[(String, String)], dev: &[(String, String)]) -> (Self, AnnealLog) {
        let mut model = Seq2SeqModel::new(config, build_vocab(pairs.iter().chain(dev)));
        let dev = if dev.is_empty() { pairs } else { dev };
        let net = model.net.clone();
        let log = train_seq2seq(&net, &mut model.store, &model.config, pairs, |_, _, _| None, |st| exact_match(&net, st, dev));
        (model, log)
    }

    pub fn to_container(&self, kind: &str) -> Container {
        let header = Header {
            config: self.config.clone(),
            vocab: self.net.vocab().clone(),
        };
        Container::new(kind, serde_json::to_value(header).expect("serializable header"), self.store.clone())
    }

    pub fn from_container(c: Container, kind: &str) -> Result<Self, ContainerError> {
        c.expect_kind(kind)?;
        let h: Header = serde_json::from_value(c.header)?;
        let mut store = c.params;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Seq2SeqNet::new(&mut store, &mut rng, PARAM_PREFIX, h.vocab, &h.config);
        Ok(Seq2SeqModel {
            config: h.config,
            net,
            store,
        })
    }

    pub fn predict(&self, input: &str) -> String {
        let n = input.chars().count();
        beam_decode(&self.net, &self.store, input, self.config.beam, default_max_len(n)).text
    }

    pub fn greedy(&self, input: &str) -> String {
        let n = input.chars().count();
        beam_decode(&self.net, &self.store, input, 1, default_max_len(n)).text
    }
}

/// Exact-match accuracy of greedy decoding.
pub fn exact_match(net: &Seq2SeqNet, store: &ParamStore, pairs: &[(String, String)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let ok = pairs
        .iter()
        .filter(|(a, b)| beam_decode(net, store, a, 1, default_max_len(a.chars().count())).text == *b)
        .count();
    ok as f64 / pairs.len() as f64
}

pub fn anneal_schedule(config: &Seq2SeqConfig, n_train: usize) -> AnnealSchedule {
    let per_epoch = (n_train + config.batch_size - 1) / config.batch_size.max(1);
    let per_epoch = per_epoch.max(1);
    AnnealSchedule {
        adam: AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        max_steps: per_epoch * config.epochs,
        eval_interval: per_epoch,
        warmup_steps: per_epoch * config.anneal_after,
        decay: config.anneal_rate,
        clip_norm: Some(5.0),
    }
}

/// Trains `net` (whose parameters live in `store`) with teacher forcing.
/// `extra(g, enc, i)` may add a loss for training pair `i`, weighted equally
/// with the negative log-likelihood; `dev_eval` selects the best epoch.
pub fn train_seq2seq<X, E>(
    net: &Seq2SeqNet,
    store: &mut ParamStore,
    config: &Seq2SeqConfig,
    pairs: &[(String, String)],
    extra: X,
    dev_eval: E,
) -> AnnealLog
where
    X: Fn(&mut Graph, &Encoded, usize) -> Option<Var>,
    E: FnMut(&ParamStore) -> f64,
{
    assert!(!pairs.is_empty(), "no training pairs");
    let encoded: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|(a, b)| (net.ids(a), b.chars().map(|c| net.vocab().index_or_unk(&c.to_string())).collect()))
        .collect();
    let schedule = anneal_schedule(config, pairs.len());
    let train_step = |st: &ParamStore, step: usize| {
        let batch = batch_indices(pairs.len(), config.batch_size, step, config.seed);
        let mut g = Graph::training(st, config.seed.wrapping_mul(7919).wrapping_add(step as u64));
        let mut nll = Vec::new();
        let mut extras = Vec::new();
        let mut symbols = 0;
        for &i in &batch {
            let (src, tgt) = &encoded[i];
            let enc = net.encode(&mut g, src, config.dropout);
            nll.push(net.nll(&mut g, &enc, tgt, config.dropout));
            symbols += tgt.len() + 1;
            if let Some(x) = extra(&mut g, &enc, i) {
                extras.push(x);
            }
        }
        let all = g.concat_rows(&nll);
        let s = g.sum(all);
        let mut loss = g.scale(s, 1.0 / symbols as f64);
        if !extras.is_empty() {
            let all = g.concat_rows(&extras);
            let s = g.sum(all);
            let x = g.scale(s, 1.0 / batch.len() as f64);
            loss = g.add(loss, x);
        }
        let mut grads = ParamGrads::new(st);
        g.backward_into(loss, &mut grads);
        (g.scalar(loss), grads)
    };
    run_annealed(&schedule, store, train_step, dev_eval)
}
