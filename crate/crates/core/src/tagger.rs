//! UPOS, XPOS and UFeats tagging from a highway BiLSTM.
//!
//! XPOS and each UFeat are scored by biaffine classifiers that also read an
//! embedding of the word's UPOS (gold while training, predicted otherwise),
//! which keeps the three tag sets consistent with one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Document, Features, Sentence, Word};
use crate::nn::embeddings::Pretrained;
use crate::nn::{
    batch_indices, run_schedule, Biaffine, Container, ContainerError, DropoutSpec, Graph, HighwayBiLstm, Init, Linear,
    OptimizerSchedule, ParamGrads, ParamId, ParamStore, ScheduleLog, Var,
};
use crate::wordrep::{pretrained_table, WordRep, WordRepConfig, WordRepVocabs};

const KIND: &str = "tagger";
/// Value of a feature the word does not carry.
pub const ABSENT: &str = "<absent>";
/// Above this many XPOS tags the shared classifier is used.
pub const MAX_BIAFFINE_XPOS: usize = 250;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("training data is empty")]
    NoData,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XposStrategy {
    /// One biaffine classifier over whole tags.
    Biaffine,
    /// One biaffine classifier per character position of fixed-length tags.
    PerCharacter,
    /// UPOS, XPOS and UFeats as affine classifiers over one shared hidden
    /// layer, without UPOS conditioning.
    SharedFc,
}

/// Strategy for a training XPOS tag set (empty tags excluded).
pub fn choose_strategy(xpos: &[String]) -> XposStrategy {
    if xpos.is_empty() || xpos.len() > MAX_BIAFFINE_XPOS {
        return XposStrategy::SharedFc;
    }
    let len = xpos[0].chars().count();
    if xpos.len() > 1 && len > 1 && xpos.iter().all(|t| t.chars().count() == len) {
        XposStrategy::PerCharacter
    } else {
        XposStrategy::Biaffine
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub rep: WordRepConfig,
    pub hidden: usize,
    pub layers: usize,
    pub upos_fc: usize,
    pub xpos_fc: usize,
    pub feats_fc: usize,
    pub upos_emb: usize,
    pub dropout: f64,
    pub rec_dropout: f64,
    /// Sentences per minibatch.
    pub batch_size: usize,
    /// Overrides the strategy chosen from the tag set.
    pub strategy: Option<XposStrategy>,
    pub schedule: OptimizerSchedule,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            rep: WordRepConfig::default(),
            hidden: 200,
            layers: 2,
            upos_fc: 400,
            xpos_fc: 400,
            feats_fc: 100,
            upos_emb: 50,
            dropout: 0.5,
            rec_dropout: 0.5,
            batch_size: 32,
            strategy: None,
            schedule: OptimizerSchedule::default(),
            seed: 1,
        }
    }
}

/// Output spaces of every classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagSpaces {
    pub upos: Vec<String>,
    /// Whole XPOS tags, sorted; empty when XPOS is unused.
    pub xpos: Vec<String>,
    pub strategy: XposStrategy,
    /// Characters seen at each position, for the per-character strategy.
    pub xpos_chars: Vec<Vec<String>>,
    /// Feature keys with their values, [`ABSENT`] first.
    pub feats: Vec<(String, Vec<String>)>,
}

fn sorted_unique<I: Iterator<Item = String>>(it: I) -> Vec<String> {
    let mut v: Vec<String> = it.collect();
    v.sort();
    v.dedup();
    v
}

impl TagSpaces {
    pub fn build(train: &Document, strategy: Option<XposStrategy>) -> Self {
        let upos = sorted_unique(train.words().map(|w| w.upos.clone()));
        let xpos = sorted_unique(train.words().map(|w| w.xpos.clone()).filter(|x| !x.is_empty()));
        let strategy = match (strategy, xpos.is_empty()) {
            (_, true) => XposStrategy::SharedFc,
            (Some(s), false) => s,
            (None, false) => choose_strategy(&xpos),
        };
        let xpos_chars = if strategy == XposStrategy::PerCharacter {
            let len = xpos[0].chars().count();
            (0..len)
                .map(|p| sorted_unique(xpos.iter().map(|t| t.chars().nth(p).unwrap().to_string())))
                .collect()
        } else {
            Vec::new()
        };
        let keys = sorted_unique(train.words().flat_map(|w| w.feats.iter().map(|(k, _)| k.to_string()).collect::<Vec<_>>()));
        let feats = keys
            .into_iter()
            .map(|k| {
                let mut values = vec![ABSENT.to_string()];
                values.extend(sorted_unique(train.words().filter_map(|w| w.feats.get(&k).map(String::from))));
                (k, values)
            })
            .collect();
        TagSpaces {
            upos,
            xpos,
            strategy,
            xpos_chars,
            feats,
        }
    }

    /// Gold class of every XPOS classifier for `tag`, `None` when unknown.
    fn xpos_targets(&self, tag: &str) -> Option<Vec<usize>> {
        if self.xpos.is_empty() {
            return Some(Vec::new());
        }
        match self.strategy {
            XposStrategy::PerCharacter => tag
                .chars()
                .zip(&self.xpos_chars)
                .map(|(c, set)| set.iter().position(|s| *s == c.to_string()))
                .collect::<Option<Vec<_>>>()
                .filter(|v| v.len() == self.xpos_chars.len()),
            _ => self.xpos.binary_search(&tag.to_string()).ok().map(|i| vec![i]),
        }
    }

    fn xpos_sizes(&self) -> Vec<usize> {
        if self.xpos.is_empty() {
            Vec::new()
        } else if self.strategy == XposStrategy::PerCharacter {
            self.xpos_chars.iter().map(Vec::len).collect()
        } else {
            vec![self.xpos.len()]
        }
    }

    fn xpos_string(&self, classes: &[usize]) -> String {
        match self.strategy {
            _ if self.xpos.is_empty() => String::new(),
            XposStrategy::PerCharacter => classes.iter().zip(&self.xpos_chars).map(|(&c, set)| set[c].as_str()).collect(),
            _ => self.xpos[classes[0]].clone(),
        }
    }

    fn feat_targets(&self, feats: &Features) -> Vec<usize> {
        self.feats
            .iter()
            .map(|(k, values)| feats.get(k).and_then(|v| values.iter().position(|x| x == v)).unwrap_or(0))
            .collect()
    }

    fn features(&self, classes: &[usize]) -> Features {
        self.feats
            .iter()
            .zip(classes)
            .filter(|(_, &c)| c != 0)
            .map(|((k, values), &c)| (k.as_str(), values[c].as_str()))
            .collect()
    }
}

/// ReLU layer feeding a biaffine classifier whose second input is the UPOS
/// embedding.
#[derive(Clone, Debug)]
pub struct ConditionedHead {
    pub fc: Linear,
    pub biaffine: Biaffine,
}

impl ConditionedHead {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, fc: usize, emb: usize, classes: usize) -> Self {
        ConditionedHead {
            fc: Linear::new(store, rng, &format!("{}.fc", name), input, fc),
            biaffine: Biaffine::new(store, rng, &format!("{}.u", name), fc, emb, classes),
        }
    }

    fn forward(&self, g: &mut Graph, h: Var, upos: Var, dropout: f64) -> Var {
        let v = self.fc.forward(g, h);
        let v = g.relu(v);
        let v = g.dropout(v, dropout);
        self.biaffine.aligned(g, v, upos)
    }
}

#[derive(Clone, Debug)]
pub enum Heads {
    Conditioned {
        upos_fc: Linear,
        upos_out: Linear,
        upos_emb: ParamId,
        xpos: Vec<ConditionedHead>,
        feats: Vec<ConditionedHead>,
    },
    Shared {
        fc: Linear,
        upos: Linear,
        xpos: Vec<Linear>,
        feats: Vec<Linear>,
    },
}

/// Scores of every classifier for one sentence, each `n × classes`.
pub struct TagScores {
    pub upos: Var,
    pub xpos: Vec<Var>,
    pub feats: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct TaggerNet {
    pub rep: WordRep,
    pub lstm: HighwayBiLstm,
    pub heads: Heads,
}

fn argmax_rows(t: &ndarray::Array2<f64>) -> Vec<usize> {
    t.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &x) in r.iter().enumerate() {
                if x > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

impl TaggerNet {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &TaggerConfig,
        vocabs: WordRepVocabs,
        spaces: &TagSpaces,
        pretrained: Option<crate::nn::Tensor>,
    ) -> Self {
        let rep = WordRep::new(store, rng, "tagger.rep", config.rep.clone(), vocabs, pretrained);
        let lstm = HighwayBiLstm::new(store, rng, "tagger.lstm", rep.output_dim(), config.hidden, config.layers);
        let d = lstm.output_dim();
        let heads = match spaces.strategy {
            XposStrategy::SharedFc => {
                let fc = Linear::new(store, rng, "tagger.shared.fc", d, config.upos_fc);
                Heads::Shared {
                    upos: Linear::new(store, rng, "tagger.shared.upos", config.upos_fc, spaces.upos.len()),
                    xpos: spaces
                        .xpos_sizes()
                        .into_iter()
                        .enumerate()
                        .map(|(i, k)| Linear::new(store, rng, &format!("tagger.shared.xpos{}", i), config.upos_fc, k))
                        .collect(),
                    feats: spaces
                        .feats
                        .iter()
                        .map(|(key, v)| Linear::new(store, rng, &format!("tagger.shared.feat.{}", key), config.upos_fc, v.len()))
                        .collect(),
                    fc,
                }
            }
            _ => Heads::Conditioned {
                upos_fc: Linear::new(store, rng, "tagger.upos.fc", d, config.upos_fc),
                upos_out: Linear::new(store, rng, "tagger.upos.out", config.upos_fc, spaces.upos.len()),
                upos_emb: store.get_or_init("tagger.upos.emb", (spaces.upos.len(), config.upos_emb), Init::Uniform(0.1), rng),
                xpos: spaces
                    .xpos_sizes()
                    .into_iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let fc = if spaces.strategy == XposStrategy::PerCharacter { config.feats_fc } else { config.xpos_fc };
                        ConditionedHead::new(store, rng, &format!("tagger.xpos{}", i), d, fc, config.upos_emb, k)
                    })
                    .collect(),
                feats: spaces
                    .feats
                    .iter()
                    .map(|(key, v)| {
                        ConditionedHead::new(store, rng, &format!("tagger.feat.{}", key), d, config.feats_fc, config.upos_emb, v.len())
                    })
                    .collect(),
            },
        };
        TaggerNet { rep, lstm, heads }
    }

    /// Scores for `words`; XPOS and UFeats are conditioned on `upos` when
    /// given, otherwise on the predicted UPOS.
    pub fn scores(&self, g: &mut Graph, words: &[Word], upos: Option<&[usize]>, config: &TaggerConfig) -> TagScores {
        let x = self.rep.forward(g, words);
        let dropout = if g.is_training() { config.dropout } else { 0.0 };
        let spec = DropoutSpec {
            feedforward: dropout,
            recurrent: if g.is_training() { config.rec_dropout } else { 0.0 },
        };
        let h = self.lstm.forward(g, x, spec);
        match &self.heads {
            Heads::Shared { fc, upos, xpos, feats } => {
                let v = fc.forward(g, h);
                let v = g.relu(v);
                let v = g.dropout(v, dropout);
                TagScores {
                    upos: upos.forward(g, v),
                    xpos: xpos.iter().map(|l| l.forward(g, v)).collect(),
                    feats: feats.iter().map(|l| l.forward(g, v)).collect(),
                }
            }
            Heads::Conditioned {
                upos_fc,
                upos_out,
                upos_emb,
                xpos,
                feats,
            } => {
                let v = upos_fc.forward(g, h);
                let v = g.relu(v);
                let v = g.dropout(v, dropout);
                let upos_scores = upos_out.forward(g, v);
                let ids = match upos {
                    Some(ids) => ids.to_vec(),
                    None => argmax_rows(g.value(upos_scores)),
                };
                let table = g.param(*upos_emb);
                let e = g.gather(table, &ids);
                TagScores {
                    upos: upos_scores,
                    xpos: xpos.iter().map(|head| head.forward(g, h, e, dropout)).collect(),
                    feats: feats.iter().map(|head| head.forward(g, h, e, dropout)).collect(),
                }
            }
        }
    }
}

/// Gold classes of one sentence; tags outside the training set count as
/// class 0.
struct Gold {
    upos: Vec<usize>,
    xpos: Vec<Vec<usize>>,
    feats: Vec<Vec<usize>>,
}

fn gold(words: &[Word], spaces: &TagSpaces) -> Gold {
    let heads = spaces.xpos_sizes().len();
    let mut g = Gold {
        upos: Vec::new(),
        xpos: vec![Vec::new(); heads],
        feats: vec![Vec::new(); spaces.feats.len()],
    };
    for w in words {
        g.upos.push(spaces.upos.binary_search(&w.upos).unwrap_or(0));
        let x = spaces.xpos_targets(&w.xpos).unwrap_or_else(|| vec![0; heads]);
        for (k, c) in x.into_iter().enumerate() {
            g.xpos[k].push(c);
        }
        for (k, c) in spaces.feat_targets(&w.feats).into_iter().enumerate() {
            g.feats[k].push(c);
        }
    }
    g
}

/// Summed cross-entropy of every classifier.
fn tag_loss(g: &mut Graph, scores: &TagScores, gold: &Gold) -> Var {
    let mut terms = Vec::new();
    let mut ce = |g: &mut Graph, s: Var, y: &[usize]| {
        let lp = g.log_softmax(s);
        let p = g.pick(lp, y);
        terms.push(g.sum(p));
    };
    ce(g, scores.upos, &gold.upos);
    for (s, y) in scores.xpos.iter().zip(&gold.xpos) {
        ce(g, *s, y);
    }
    for (s, y) in scores.feats.iter().zip(&gold.feats) {
        ce(g, *s, y);
    }
    let all = g.concat_rows(&terms);
    let s = g.sum(all);
    g.neg(s)
}

#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub spaces: TagSpaces,
    pub store: ParamStore,
    pub net: TaggerNet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TaggerConfig,
    spaces: TagSpaces,
    vocabs: WordRepVocabs,
}

/// Tags for one word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tags {
    pub upos: String,
    pub xpos: String,
    pub feats: Features,
}

impl TaggerModel {
    /// Tags `words`, conditioning on `gold_upos` when given.
    pub fn tag_words(&self, words: &[Word], gold_upos: Option<&[String]>) -> Vec<Tags> {
        if words.is_empty() {
            return Vec::new();
        }
        let ids: Option<Vec<usize>> =
            gold_upos.map(|u| u.iter().map(|t| self.spaces.upos.binary_search(t).unwrap_or(0)).collect());
        let mut g = Graph::new(&self.store);
        let s = self.net.scores(&mut g, words, ids.as_deref(), &self.config);
        let upos = argmax_rows(g.value(s.upos));
        let xpos: Vec<Vec<usize>> = s.xpos.iter().map(|v| argmax_rows(g.value(*v))).collect();
        let feats: Vec<Vec<usize>> = s.feats.iter().map(|v| argmax_rows(g.value(*v))).collect();
        (0..words.len())
            .map(|i| {
                let x: Vec<usize> = xpos.iter().map(|c| c[i]).collect();
                let f: Vec<usize> = feats.iter().map(|c| c[i]).collect();
                Tags {
                    upos: match gold_upos {
                        Some(u) => u[i].clone(),
                        None => self.spaces.upos[upos[i]].clone(),
                    },
                    xpos: self.spaces.xpos_string(&x),
                    feats: self.spaces.features(&f),
                }
            })
            .collect()
    }

    pub fn tag_sentence(&self, sentence: &mut Sentence) {
        let tags = self.tag_words(&sentence.words, None);
        for (w, t) in sentence.words.iter_mut().zip(tags) {
            w.upos = t.upos;
            w.xpos = t.xpos;
            w.feats = t.feats;
        }
    }

    pub fn tag_document(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        out.sentences.par_iter_mut().for_each(|s| self.tag_sentence(s));
        out
    }

    /// Word-level accuracies of UPOS, XPOS, UFeats and all three jointly.
    pub fn accuracies(&self, doc: &Document) -> TagAccuracy {
        TagAccuracy::compare(doc, &self.tag_document(doc))
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            config: self.config.clone(),
            spaces: self.spaces.clone(),
            vocabs: self.net.rep.vocabs.clone(),
        };
        Container::new(KIND, serde_json::to_value(header).expect("serializable header"), self.store.clone())
    }

    pub fn from_container(c: Container) -> Result<Self, TaggerError> {
        c.expect_kind(KIND)?;
        let h: Header = serde_json::from_value(c.header).map_err(ContainerError::from)?;
        let mut store = c.params;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = TaggerNet::new(&mut store, &mut rng, &h.config, h.vocabs, &h.spaces, None);
        Ok(TaggerModel {
            config: h.config,
            spaces: h.spaces,
            store,
            net,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TagAccuracy {
    pub upos: f64,
    pub xpos: f64,
    pub feats: f64,
    pub all_tags: f64,
}

impl TagAccuracy {
    /// Accuracies of `system` against `gold` with identical words.
    pub fn compare(gold: &Document, system: &Document) -> Self {
        let mut c = [0usize; 4];
        let mut n = 0;
        for (g, s) in gold.words().zip(system.words()) {
            n += 1;
            let ok = [g.upos == s.upos, g.xpos == s.xpos, g.feats == s.feats];
            for (k, &b) in ok.iter().enumerate() {
                c[k] += b as usize;
            }
            c[3] += ok.iter().all(|&b| b) as usize;
        }
        let r = |k: usize| if n == 0 { 0.0 } else { c[k] as f64 / n as f64 };
        TagAccuracy {
            upos: r(0),
            xpos: r(1),
            feats: r(2),
            all_tags: r(3),
        }
    }
}

/// Trains on `train`, selecting the parameters with the best AllTags
/// accuracy on `dev`.
pub fn train_tagger(
    train: &Document,
    dev: &Document,
    pretrained: Option<&Pretrained>,
    config: &TaggerConfig,
) -> Result<(TaggerModel, ScheduleLog), TaggerError> {
    let sentences: Vec<&Sentence> = train.sentences.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(TaggerError::NoData);
    }
    let spaces = TagSpaces::build(train, config.strategy);
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
    let net = TaggerNet::new(&mut store, &mut rng, config, vocabs, &spaces, table);
    let golds: Vec<Gold> = sentences.iter().map(|s| gold(&s.words, &spaces)).collect();

    let train_step = |st: &ParamStore, step: usize| {
        let batch = batch_indices(sentences.len(), config.batch_size, step, config.seed);
        let mut g = Graph::training(st, config.seed.wrapping_mul(131).wrapping_add(step as u64));
        let mut losses = Vec::new();
        let mut words = 0;
        for &b in &batch {
            let s = net.scores(&mut g, &sentences[b].words, Some(&golds[b].upos), config);
            losses.push(tag_loss(&mut g, &s, &golds[b]));
            words += sentences[b].len();
        }
        let all = g.concat_rows(&losses);
        let total = g.sum(all);
        let loss = g.scale(total, 1.0 / words as f64);
        let mut grads = ParamGrads::new(st);
        g.backward_into(loss, &mut grads);
        (g.scalar(loss), grads)
    };
    let dev_doc = if dev.word_count() > 0 { dev } else { train };
    let dev_eval = |st: &ParamStore| {
        let m = TaggerModel {
            config: config.clone(),
            spaces: spaces.clone(),
            store: st.clone(),
            net: net.clone(),
        };
        m.accuracies(dev_doc).all_tags
    };
    let log = run_schedule(&config.schedule, &mut store, train_step, dev_eval);
    Ok((
        TaggerModel {
            config: config.clone(),
            spaces,
            store,
            net,
        },
        log,
    ))
}
