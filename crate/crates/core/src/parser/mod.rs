//! Deep biaffine graph-based dependency parser.
//!
//! Four biaffine scorers share one highway BiLSTM over the words plus a
//! prepended root position: edge, linearization, distance and relation.
//! All score matrices are indexed `[dependent][head]`.

pub mod mst;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Document, Sentence, Word};
use crate::nn::container::{Container, ContainerError};
use crate::nn::embeddings::Pretrained;
use crate::nn::graph::{log_sigmoid, softplus};
use crate::nn::{
    batch_indices, run_schedule, DeepBiaffine, DropoutSpec, Graph, HighwayBiLstm, Init, OptimizerSchedule, ParamGrads,
    ParamId, ParamStore, ScheduleLog, Tensor, Var,
};
use crate::wordrep::{pretrained_table, WordRep, WordRepConfig, WordRepVocabs};

pub use mst::{chu_liu_edmonds, decode_mst, MstError};

pub const ROOT_LABEL: &str = "root";
const KIND: &str = "parser";

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("sentence {0} has no complete dependency annotation")]
    MissingTree(usize),
    #[error("training data is empty")]
    NoData,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub rep: WordRepConfig,
    pub hidden: usize,
    pub layers: usize,
    pub fc: usize,
    pub dropout: f64,
    pub rec_dropout: f64,
    /// Sentences per minibatch.
    pub batch_size: usize,
    pub linearization: bool,
    pub distance: bool,
    pub schedule: OptimizerSchedule,
    pub seed: u64,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            rep: WordRepConfig {
                lemma_dim: 75,
                tag_dim: 50,
                ..Default::default()
            },
            hidden: 400,
            layers: 3,
            fc: 400,
            dropout: 0.5,
            rec_dropout: 0.25,
            batch_size: 32,
            linearization: true,
            distance: true,
            schedule: OptimizerSchedule::default(),
            seed: 1,
        }
    }
}

/// Which auxiliary terms enter the augmented score and the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub linearization: bool,
    pub distance: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        linearization: true,
        distance: true,
    };
}

/// Raw scorer outputs for one sentence, `(n+1) × (n+1)` with row and column
/// 0 for the root; `rel` is `(n+1) × (n+1) × labels`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTensors {
    pub edge: Array2<f64>,
    pub lin: Array2<f64>,
    pub dist: Array2<f64>,
    pub rel: Array3<f64>,
}

fn sgn(i: usize, j: usize) -> f64 {
    match i.cmp(&j) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    }
}

impl ScoreTensors {
    /// `sgn(i − j) · s_l`: positive scores favour heads on the left.
    pub fn signed_linearization(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.lin.dim(), |(i, j)| sgn(i, j) * self.lin[[i, j]])
    }

    /// Predicted edge length `1 + softplus(s_d)`.
    pub fn transformed_distance(&self) -> Array2<f64> {
        self.dist.mapv(|x| 1.0 + softplus(x))
    }

    /// `|i − j|` minus the predicted length.
    pub fn distance_delta(&self) -> Array2<f64> {
        let d = self.transformed_distance();
        Array2::from_shape_fn(d.dim(), |(i, j)| (i as f64 - j as f64).abs() - d[[i, j]])
    }

    /// Relation scores at the given heads (one per word), `n × labels`.
    pub fn relations_at(&self, heads: &[usize]) -> Array2<f64> {
        let l = self.rel.dim().2;
        Array2::from_shape_fn((heads.len(), l), |(i, k)| self.rel[[i + 1, heads[i], k]])
    }
}

/// `log σ(s')`, the linearization log-probability.
pub fn linearization_term(signed: f64) -> f64 {
    log_sigmoid(signed)
}

/// Log of the unnormalized Cauchy density `(1 + δ²/2)⁻¹`.
pub fn distance_term(delta: f64) -> f64 {
    -(delta * delta / 2.0).ln_1p()
}

/// Edge scores with the linearization and distance log-probabilities added.
/// The diagonal and the root row are `-∞`.
pub fn augmented_edge_scores(t: &ScoreTensors, terms: Terms) -> Array2<f64> {
    let lin = t.signed_linearization();
    let delta = t.distance_delta();
    let n1 = t.edge.nrows();
    Array2::from_shape_fn((n1, n1), |(i, j)| {
        if i == j || i == 0 {
            return f64::NEG_INFINITY;
        }
        let mut a = t.edge[[i, j]];
        if terms.linearization {
            a += linearization_term(lin[[i, j]]);
        }
        if terms.distance {
            a += distance_term(delta[[i, j]]);
        }
        a
    })
}

/// Best label per word given its head. Words attached to the root get the
/// root label when the label set has one; other words never do.
pub fn assign_relations(rel: &Array2<f64>, heads: &[usize], labels: &[String]) -> Vec<usize> {
    let root = labels.iter().position(|l| l == ROOT_LABEL);
    heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if let (0, Some(r)) = (h, root) {
                return r;
            }
            let mut best = None;
            for k in 0..labels.len() {
                if Some(k) == root && labels.len() > 1 {
                    continue;
                }
                if best.map_or(true, |b: usize| rel[[i, k]] > rel[[i, b]]) {
                    best = Some(k);
                }
            }
            best.unwrap_or(0)
        })
        .collect()
}

/// The four loss terms, each summed over words.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub head: Var,
    pub lin: Option<Var>,
    pub dist: Option<Var>,
    pub rel: Var,
}

impl LossTerms {
    pub fn total(&self, g: &mut Graph) -> Var {
        let mut t = g.add(self.head, self.rel);
        for v in [self.lin, self.dist].into_iter().flatten() {
            t = g.add(t, v);
        }
        t
    }
}

/// Loss from score nodes. `edge`, `lin` and `dist` are `(n+1) × (n+1)`;
/// `rel` holds the relation scores at the gold heads, `n × labels`.
/// The attachment cross-entropy uses the raw edge scores.
#[allow(clippy::too_many_arguments)]
pub fn parser_loss(
    g: &mut Graph,
    edge: Var,
    lin: Var,
    dist: Var,
    rel: Var,
    heads: &[usize],
    labels: &[usize],
    terms: Terms,
) -> LossTerms {
    let n = heads.len();
    let e = g.slice_rows(edge, 1, n);
    let lp = g.log_softmax(e);
    let picked = g.pick(lp, heads);
    let s = g.sum(picked);
    let head = g.neg(s);

    let lin = terms.linearization.then(|| {
        let l = g.slice_rows(lin, 1, n);
        let l = g.pick(l, heads);
        let sign = Tensor::from_shape_fn((n, 1), |(i, _)| sgn(i + 1, heads[i]));
        let l = g.mul_const(l, sign);
        let l = g.log_sigmoid(l);
        let s = g.sum(l);
        g.neg(s)
    });

    let dist = terms.distance.then(|| {
        let d = g.slice_rows(dist, 1, n);
        let d = g.pick(d, heads);
        let d = g.softplus(d);
        let d = g.shift(d, 1.0);
        let d = g.neg(d);
        let len = Tensor::from_shape_fn((n, 1), |(i, _)| (i as f64 + 1.0 - heads[i] as f64).abs());
        let delta = g.add_const(d, &len);
        let sq = g.square(delta);
        let sq = g.scale(sq, 0.5);
        let sq = g.shift(sq, 1.0);
        let l = g.log(sq);
        g.sum(l)
    });

    let r = g.log_softmax(rel);
    let r = g.pick(r, labels);
    let r = g.sum(r);
    let rel = g.neg(r);
    LossTerms { head, lin, dist, rel }
}

#[derive(Clone, Debug)]
pub struct ParserNet {
    pub rep: WordRep,
    pub root: ParamId,
    pub lstm: HighwayBiLstm,
    pub edge: DeepBiaffine,
    pub lin: DeepBiaffine,
    pub dist: DeepBiaffine,
    pub rel: DeepBiaffine,
}

/// Graph nodes for one sentence.
pub struct SentenceScores {
    pub states: Var,
    pub edge: Var,
    pub lin: Var,
    pub dist: Var,
}

impl ParserNet {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &ParserConfig,
        vocabs: WordRepVocabs,
        n_labels: usize,
        pretrained: Option<Tensor>,
    ) -> Self {
        let rep = WordRep::new(store, rng, "parser.input", config.rep.clone(), vocabs, pretrained);
        let d = rep.output_dim();
        let root = store.get_or_init("parser.root", (1, d), Init::Uniform(0.1), rng);
        let lstm = HighwayBiLstm::new(store, rng, "parser.lstm", d, config.hidden, config.layers);
        let h = lstm.output_dim();
        ParserNet {
            edge: DeepBiaffine::new(store, rng, "parser.edge", h, config.fc, 1),
            lin: DeepBiaffine::new(store, rng, "parser.lin", h, config.fc, 1),
            dist: DeepBiaffine::new(store, rng, "parser.dist", h, config.fc, 1),
            rel: DeepBiaffine::new(store, rng, "parser.rel", h, config.fc, n_labels),
            rep,
            root,
            lstm,
        }
    }

    pub fn scores(&self, g: &mut Graph, words: &[Word], config: &ParserConfig) -> SentenceScores {
        assert!(!words.is_empty(), "cannot score an empty sentence");
        let x = self.rep.forward(g, words);
        let root = g.param(self.root);
        let x = g.concat_rows(&[root, x]);
        let x = g.dropout(x, config.dropout);
        let states = self.lstm.forward(
            g,
            x,
            DropoutSpec {
                feedforward: config.dropout,
                recurrent: config.rec_dropout,
            },
        );
        let edge = self.edge.pairwise(g, states, states, config.dropout)[0];
        let lin = self.lin.pairwise(g, states, states, config.dropout)[0];
        let dist = self.dist.pairwise(g, states, states, config.dropout)[0];
        SentenceScores { states, edge, lin, dist }
    }

    /// Relation scores of each word with the given head, `n × labels`.
    pub fn relations(&self, g: &mut Graph, states: Var, heads: &[usize], dropout: f64) -> Var {
        let n = heads.len();
        let deps = g.slice_rows(states, 1, n);
        let hs = g.gather(states, heads);
        self.rel.aligned(g, deps, hs, dropout)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    config: ParserConfig,
    labels: Vec<String>,
    vocabs: WordRepVocabs,
}

#[derive(Clone, Debug)]
pub struct ParserModel {
    pub config: ParserConfig,
    pub labels: Vec<String>,
    pub store: ParamStore,
    pub net: ParserNet,
}

fn gold(sentence: &Sentence, labels: &[String]) -> (Vec<usize>, Vec<usize>) {
    let heads = sentence.words.iter().map(|w| w.head.unwrap_or(0)).collect();
    let rels = sentence
        .words
        .iter()
        .map(|w| labels.iter().position(|l| *l == w.deprel).unwrap_or(0))
        .collect();
    (heads, rels)
}

impl ParserModel {
    pub fn terms(&self) -> Terms {
        Terms {
            linearization: self.config.linearization,
            distance: self.config.distance,
        }
    }

    /// All score tensors for one sentence (inference mode).
    pub fn score_sentence(&self, words: &[Word]) -> ScoreTensors {
        let mut g = Graph::new(&self.store);
        let s = self.net.scores(&mut g, words, &self.config);
        let rel_vars = self.net.rel.pairwise(&mut g, s.states, s.states, 0.0);
        let n1 = words.len() + 1;
        let mut rel = Array3::zeros((n1, n1, rel_vars.len()));
        for (k, v) in rel_vars.iter().enumerate() {
            let m = g.value(*v);
            for i in 0..n1 {
                for j in 0..n1 {
                    rel[[i, j, k]] = m[[i, j]];
                }
            }
        }
        ScoreTensors {
            edge: g.value(s.edge).clone(),
            lin: g.value(s.lin).clone(),
            dist: g.value(s.dist).clone(),
            rel,
        }
    }

    /// Heads (0 = root) and label indices for `words`.
    pub fn predict(&self, words: &[Word]) -> (Vec<usize>, Vec<usize>) {
        let mut g = Graph::new(&self.store);
        let s = self.net.scores(&mut g, words, &self.config);
        let t = ScoreTensors {
            edge: g.value(s.edge).clone(),
            lin: g.value(s.lin).clone(),
            dist: g.value(s.dist).clone(),
            rel: Array3::zeros((0, 0, 0)),
        };
        let heads = decode_mst(&augmented_edge_scores(&t, self.terms())).expect("non-empty sentence");
        let rel = self.net.relations(&mut g, s.states, &heads, 0.0);
        let labels = assign_relations(g.value(rel), &heads, &self.labels);
        (heads, labels)
    }

    pub fn parse_sentence(&self, sentence: &mut Sentence) {
        if sentence.words.is_empty() {
            return;
        }
        let (heads, labels) = self.predict(&sentence.words);
        for (w, (h, l)) in sentence.words.iter_mut().zip(heads.into_iter().zip(labels)) {
            w.head = Some(h);
            w.deprel = self.labels[l].clone();
        }
    }

    pub fn parse_document(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        out.sentences.par_iter_mut().for_each(|s| self.parse_sentence(s));
        out
    }

    /// Fraction of words with correct head and label.
    pub fn las(&self, doc: &Document) -> f64 {
        let parsed = self.parse_document(doc);
        let (mut ok, mut total) = (0usize, 0usize);
        for (a, b) in parsed.words().zip(doc.words()) {
            total += 1;
            if a.head == b.head && a.deprel == b.deprel {
                ok += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            ok as f64 / total as f64
        }
    }

    pub fn uas(&self, doc: &Document) -> f64 {
        let parsed = self.parse_document(doc);
        let total = doc.word_count().max(1);
        parsed.words().zip(doc.words()).filter(|(a, b)| a.head == b.head).count() as f64 / total as f64
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            config: self.config.clone(),
            labels: self.labels.clone(),
            vocabs: self.net.rep.vocabs.clone(),
        };
        Container::new(KIND, serde_json::to_value(header).expect("serializable header"), self.store.clone())
    }

    pub fn from_container(c: Container) -> Result<Self, ParserError> {
        c.expect_kind(KIND)?;
        let h: Header = serde_json::from_value(c.header).map_err(ContainerError::from)?;
        let mut store = c.params;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ParserNet::new(&mut store, &mut rng, &h.config, h.vocabs, h.labels.len(), None);
        Ok(ParserModel {
            config: h.config,
            labels: h.labels,
            store,
            net,
        })
    }
}

/// Trains on `train`, selecting the parameters with the best LAS on `dev`.
pub fn train_parser(
    train: &Document,
    dev: &Document,
    pretrained: Option<&Pretrained>,
    config: &ParserConfig,
) -> Result<(ParserModel, ScheduleLog), ParserError> {
    let sentences: Vec<&Sentence> = train.sentences.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(ParserError::NoData);
    }
    for (i, s) in train.sentences.iter().enumerate() {
        if !s.is_empty() && !s.has_heads() {
            return Err(ParserError::MissingTree(i + 1));
        }
    }
    let mut labels: Vec<String> = train.words().map(|w| w.deprel.clone()).collect();
    labels.sort();
    labels.dedup();

    let mut vocabs = WordRepVocabs::build(train, &config.rep);
    let table = pretrained.map(|p| {
        let (v, t, missing) = pretrained_table(p, &[train, dev]);
        if missing > 0 {
            log::warn!("{} word types have no pretrained vector", missing);
        }
        vocabs.pretrained = Some(v);
        t
    });
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = ParserNet::new(&mut store, &mut rng, config, vocabs, labels.len(), table);
    let golds: Vec<(Vec<usize>, Vec<usize>)> = sentences.iter().map(|s| gold(s, &labels)).collect();
    let terms = Terms {
        linearization: config.linearization,
        distance: config.distance,
    };

    let train_step = |st: &ParamStore, step: usize| {
        let batch = batch_indices(sentences.len(), config.batch_size, step, config.seed);
        let mut g = Graph::training(st, config.seed.wrapping_mul(31).wrapping_add(step as u64));
        let mut total = None;
        let mut words = 0;
        for &b in &batch {
            let s = sentences[b];
            let (heads, rels) = &golds[b];
            let sc = net.scores(&mut g, &s.words, config);
            let rel = net.relations(&mut g, sc.states, heads, config.dropout);
            let l = parser_loss(&mut g, sc.edge, sc.lin, sc.dist, rel, heads, rels, terms).total(&mut g);
            total = Some(match total {
                None => l,
                Some(t) => g.add(t, l),
            });
            words += s.len();
        }
        let loss = g.scale(total.unwrap(), 1.0 / words as f64);
        let mut grads = ParamGrads::new(st);
        g.backward_into(loss, &mut grads);
        (g.scalar(loss), grads)
    };
    let dev_doc = if dev.word_count() > 0 { dev } else { train };
    let dev_eval = |st: &ParamStore| {
        let m = ParserModel {
            config: config.clone(),
            labels: labels.clone(),
            store: st.clone(),
            net: net.clone(),
        };
        m.las(dev_doc)
    };
    let log = run_schedule(&config.schedule, &mut store, train_step, dev_eval);
    Ok((
        ParserModel {
            config: config.clone(),
            labels,
            store,
            net,
        },
        log,
    ))
}
