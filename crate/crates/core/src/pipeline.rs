//! The full system: raw text through tokenization, multi-word token
//! expansion, tagging, lemmatization and parsing, plus joint training,
//! model directories, run manifests and ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conllu::{misc_remove, train_dev_split, ConlluError, Document, Sentence, SplitRatio};
use crate::lemmatizer::{train_lemmatizer, LemmaError, LemmaLexicon, LemmaNet, Lemmatizer};
use crate::mwt::{train_mwt, ExpansionLexicon, LexiconError, MwtExpander, MWT_FLAG};
use crate::nn::embeddings::{EmbeddingError, Pretrained};
use crate::nn::{AnnealLog, Container, ScheduleEvent, ScheduleLog};
use crate::parser::{train_parser, ParserConfig, ParserError, ParserModel};
use crate::scorer::{evaluate, AlignError, EvalReport, METRIC_NAMES};
use crate::seq2seq::Seq2SeqConfig;
use crate::tagger::{train_tagger, TaggerConfig, TaggerError, TaggerModel, XposStrategy};
use crate::tokenizer::{paragraphs, train_tokenizer, TokenizerConfig, TokenizerError, TokenizerModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Tokenize,
    Expand,
    Tag,
    Lemmatize,
    Parse,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Tokenize, Stage::Expand, Stage::Tag, Stage::Lemmatize, Stage::Parse];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Tokenize => "tokenize",
            Stage::Expand => "expand-mwt",
            Stage::Tag => "tag",
            Stage::Lemmatize => "lemmatize",
            Stage::Parse => "parse",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {:?}", s))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: sentence {sentence}: {message}")]
    Stage { stage: Stage, sentence: usize, message: String },
    #[error("{stage}: training failed: {message}")]
    Training { stage: Stage, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Model { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] ConlluError),
    #[error(transparent)]
    Embeddings(#[from] EmbeddingError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

impl PipelineError {
    /// Whether the error comes from the input data rather than a stage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Data(_) | PipelineError::Embeddings(_) | PipelineError::Align(_) | PipelineError::Io { .. }
        )
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Every hyperparameter of the system. On disk it is TOML whose keys are
/// dotted `stage.param` paths, for instance `tagger.hidden = 200`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Seeds every stage; stage `seed` keys are derived from it.
    pub seed: u64,
    /// word2vec text file of pretrained word vectors.
    pub embeddings: Option<PathBuf>,
    /// Train the parser on tags predicted by the trained tagger.
    pub parser_on_predicted_tags: bool,
    pub tokenizer: TokenizerConfig,
    pub mwt: Seq2SeqConfig,
    pub tagger: TaggerConfig,
    pub lemmatizer: Seq2SeqConfig,
    pub parser: ParserConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            embeddings: None,
            parser_on_predicted_tags: true,
            tokenizer: TokenizerConfig::default(),
            mwt: Seq2SeqConfig::mwt(),
            tagger: TaggerConfig::default(),
            lemmatizer: Seq2SeqConfig::lemmatizer(),
            parser: ParserConfig::default(),
        }
    }
}

fn parse_value(text: &str) -> toml::Value {
    match format!("v = {}", text).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, toml::Value)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{}.{}", prefix, k) };
                flatten(&key, v, out);
            }
        }
        v => out.push((prefix.to_string(), v.clone())),
    }
}

fn lookup<'v>(value: &'v toml::Value, path: &str) -> Option<&'v toml::Value> {
    path.split('.').try_fold(value, |v, k| v.as_table()?.get(k))
}

impl PipelineConfig {
    /// Defaults overlaid with `text` and then with `overrides`
    /// (`stage.param=value` strings, applied in order).
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(text) = text {
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
            flatten("", &toml::Value::Table(table), &mut pairs);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("override {:?} is not key=value", o)))?;
            pairs.push((k.trim().to_string(), parse_value(v.trim())));
        }
        let mut root = toml::Value::try_from(PipelineConfig::default()).expect("serializable config");
        for (key, value) in &pairs {
            let mut node = &mut root;
            let parts: Vec<&str> = key.split('.').collect();
            for p in &parts[..parts.len() - 1] {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| PipelineError::Config(format!("unknown key {:?}", key)))?;
                node = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            }
            node.as_table_mut()
                .ok_or_else(|| PipelineError::Config(format!("unknown key {:?}", key)))?
                .insert(parts[parts.len() - 1].to_string(), value.clone());
        }
        let config: PipelineConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let check = toml::Value::try_from(&config).expect("serializable config");
        for (key, _) in &pairs {
            if lookup(&check, key).is_none() {
                return Err(PipelineError::Config(format!("unknown key {:?}", key)));
            }
        }
        Ok(config)
    }

    /// One `key = value` line per setting, sorted by key.
    pub fn to_toml(&self) -> String {
        let mut pairs = Vec::new();
        flatten("", &toml::Value::try_from(self).expect("serializable config"), &mut pairs);
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.iter().map(|(k, v)| format!("{} = {}\n", k, v)).collect()
    }

    /// The stage configurations with seeds derived from [`Self::seed`].
    pub fn seeded(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.tokenizer.seed = self.seed;
        c.mwt.seed = self.seed.wrapping_add(1);
        c.tagger.seed = self.seed.wrapping_add(2);
        c.lemmatizer.seed = self.seed.wrapping_add(3);
        c.parser.seed = self.seed.wrapping_add(4);
        c
    }

    pub fn pretrained(&self) -> Result<Option<Pretrained>> {
        match &self.embeddings {
            None => Ok(None),
            Some(p) => {
                let f = File::open(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
                Ok(Some(Pretrained::read(BufReader::new(f))?))
            }
        }
    }
}

/// File names inside a model directory.
pub mod files {
    pub const TOKENIZER: &str = "tokenizer.bin";
    pub const MWT: &str = "mwt.bin";
    pub const MWT_LEXICON: &str = "mwt.lexicon.tsv";
    pub const TAGGER: &str = "tagger.bin";
    pub const LEMMATIZER: &str = "lemmatizer.bin";
    pub const LEMMA_LEXICON: &str = "lemma.lexicon.tsv";
    pub const PARSER: &str = "parser.bin";
    pub const MANIFEST: &str = "manifest.json";
    pub const CONFIG: &str = "config.toml";
}

fn model_error(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Model {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn container(path: &Path) -> Result<Container> {
    Container::load(path).map_err(|e| model_error(path, e))
}

pub fn load_tokenizer(path: &Path) -> Result<TokenizerModel> {
    TokenizerModel::from_container(container(path)?).map_err(|e| model_error(path, e))
}

pub fn load_tagger(path: &Path) -> Result<TaggerModel> {
    TaggerModel::from_container(container(path)?).map_err(|e| model_error(path, e))
}

pub fn load_parser(path: &Path) -> Result<ParserModel> {
    ParserModel::from_container(container(path)?).map_err(|e| model_error(path, e))
}

/// Expander from a lexicon file and an optional network container.
pub fn load_expander(lexicon: &Path, model: Option<&Path>) -> Result<MwtExpander> {
    let lex = ExpansionLexicon::read_from(open(lexicon)?).map_err(|e: LexiconError| model_error(lexicon, e))?;
    let c = model.map(container).transpose()?;
    MwtExpander::from_parts(lex, c).map_err(|e| model_error(lexicon, e))
}

/// Lemmatizer from a lexicon file and an optional network container.
pub fn load_lemmatizer(lexicon: &Path, model: Option<&Path>) -> Result<Lemmatizer> {
    let lex = LemmaLexicon::read_from(open(lexicon)?).map_err(|e: LemmaError| model_error(lexicon, e))?;
    let net = match model {
        Some(p) => Some(LemmaNet::from_container(container(p)?).map_err(|e| model_error(p, e))?),
        None => None,
    };
    Ok(Lemmatizer { lexicon: lex, net })
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{:02x}", b)).collect()
}

/// One trained model per stage.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub tokenizer: TokenizerModel,
    pub mwt: MwtExpander,
    pub tagger: TaggerModel,
    pub lemmatizer: Lemmatizer,
    pub parser: ParserModel,
}

impl Pipeline {
    pub fn load(dir: &Path) -> Result<Self> {
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Ok(Pipeline {
            tokenizer: load_tokenizer(&dir.join(files::TOKENIZER))?,
            mwt: load_expander(&dir.join(files::MWT_LEXICON), optional(files::MWT).as_deref())?,
            tagger: load_tagger(&dir.join(files::TAGGER))?,
            lemmatizer: load_lemmatizer(&dir.join(files::LEMMA_LEXICON), optional(files::LEMMATIZER).as_deref())?,
            parser: load_parser(&dir.join(files::PARSER))?,
        })
    }

    /// The serialized files of every stage, by file name.
    pub fn artifacts(&self) -> BTreeMap<&'static str, Vec<u8>> {
        let mut out = BTreeMap::new();
        out.insert(files::TOKENIZER, self.tokenizer.to_container().to_bytes());
        out.insert(files::TAGGER, self.tagger.to_container().to_bytes());
        out.insert(files::PARSER, self.parser.to_container().to_bytes());
        if let Some(c) = self.mwt.to_container() {
            out.insert(files::MWT, c.to_bytes());
        }
        if let Some(net) = &self.lemmatizer.net {
            out.insert(files::LEMMATIZER, net.to_container().to_bytes());
        }
        let mut buf = Vec::new();
        self.mwt.lexicon.write_to(&mut buf).expect("in-memory write");
        out.insert(files::MWT_LEXICON, buf);
        let mut buf = Vec::new();
        self.lemmatizer.lexicon.write_to(&mut buf).expect("in-memory write");
        out.insert(files::LEMMA_LEXICON, buf);
        out
    }

    /// SHA-256 of every artifact.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.artifacts().into_iter().map(|(k, v)| (k.to_string(), sha256(&v))).collect()
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, bytes) in self.artifacts() {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(io(&p))?;
        }
        for name in [files::MWT, files::LEMMATIZER] {
            let p = dir.join(name);
            if p.exists() && !self.artifacts().contains_key(name) {
                std::fs::remove_file(&p).map_err(io(&p))?;
            }
        }
        Ok(())
    }

    fn process(&self, mut sentences: Vec<Sentence>, from: Stage) -> std::result::Result<Vec<Sentence>, (Stage, usize, String)> {
        let fail = |stage: Stage| move |(i, m): (usize, String)| (stage, i + 1, m);
        let check = |sentences: &[Sentence]| -> std::result::Result<(), (usize, String)> {
            sentences.iter().enumerate().try_for_each(|(i, s)| s.validate().map_err(|m| (i, m)))
        };
        if from <= Stage::Expand {
            for s in &mut sentences {
                self.mwt.expand_sentence(s);
            }
            check(&sentences).map_err(fail(Stage::Expand))?;
        }
        for s in &mut sentences {
            for w in &mut s.words {
                misc_remove(&mut w.misc, MWT_FLAG);
            }
        }
        if from <= Stage::Tag {
            for s in &mut sentences {
                self.tagger.tag_sentence(s);
            }
        }
        if from <= Stage::Lemmatize {
            for s in &mut sentences {
                self.lemmatizer.lemmatize_words(&mut s.words);
            }
        }
        for s in &mut sentences {
            self.parser.parse_sentence(s);
        }
        check(&sentences).map_err(fail(Stage::Parse))?;
        Ok(sentences)
    }

    /// Raw text to a fully annotated document. Paragraphs are processed in
    /// parallel; every stage sees one paragraph's sentences at a time.
    pub fn run(&self, raw: &str) -> Result<Document> {
        let results: Vec<_> = paragraphs(raw)
            .par_iter()
            .map(|p| {
                let doc = self.tokenizer.tokenize(p);
                self.process(doc.sentences, Stage::Expand)
            })
            .collect();
        let mut doc = Document::default();
        for r in results {
            match r {
                Ok(s) => doc.sentences.extend(s),
                Err((stage, i, message)) => {
                    return Err(PipelineError::Stage {
                        stage,
                        sentence: doc.sentences.len() + i,
                        message,
                    })
                }
            }
        }
        number_sentences(&mut doc);
        doc.raw_text = Some(raw.to_string());
        Ok(doc)
    }

    /// Runs the stages from `from` onwards over an already segmented
    /// document; annotation produced by earlier stages is kept.
    pub fn run_from(&self, doc: &Document, from: Stage) -> Result<Document> {
        if from == Stage::Tokenize {
            let raw = doc.raw_text.clone().unwrap_or_else(|| doc.reconstruct_raw_text());
            return self.run(&raw);
        }
        let mut out = doc.clone();
        let chunks = paragraph_chunks(&doc.sentences);
        let results: Vec<_> = chunks
            .par_iter()
            .map(|&(start, end)| self.process(doc.sentences[start..end].to_vec(), from))
            .collect();
        out.sentences.clear();
        for (r, &(start, _)) in results.into_iter().zip(&chunks) {
            match r {
                Ok(s) => out.sentences.extend(s),
                Err((stage, i, message)) => {
                    return Err(PipelineError::Stage {
                        stage,
                        sentence: start + i,
                        message,
                    })
                }
            }
        }
        Ok(out)
    }
}

fn number_sentences(doc: &mut Document) {
    for (i, s) in doc.sentences.iter_mut().enumerate() {
        s.comments.retain(|c| !c.starts_with("# sent_id"));
        s.comments.push(format!("# sent_id = {}", i + 1));
    }
}

fn paragraph_chunks(sentences: &[Sentence]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, s) in sentences.iter().enumerate() {
        if i > start && s.comments.iter().any(|c| c.starts_with("# newpar")) {
            out.push((start, i));
            start = i;
        }
    }
    if start < sentences.len() {
        out.push((start, sentences.len()));
    }
    out
}

/// Words and tokens of `doc` with every annotation column emptied.
pub fn strip_annotations(doc: &Document, keep_from: Stage) -> Document {
    let mut out = doc.clone();
    for s in &mut out.sentences {
        for w in &mut s.words {
            if keep_from <= Stage::Tag {
                w.upos.clear();
                w.xpos.clear();
                w.feats = Default::default();
            }
            if keep_from <= Stage::Lemmatize {
                w.lemma.clear();
            }
            w.head = None;
            w.deprel.clear();
            w.deps.clear();
        }
    }
    out
}

/// Training curve of one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    /// `(step, dev metric, training loss)`.
    pub evals: Vec<(usize, f64, f64)>,
    pub best_step: usize,
    pub best_metric: f64,
    pub steps: usize,
    /// Step at which Adam gave way to AMSGrad.
    pub switch_step: Option<usize>,
}

impl From<&ScheduleLog> for StageLog {
    fn from(l: &ScheduleLog) -> Self {
        StageLog {
            evals: l
                .events
                .iter()
                .filter_map(|e| match e {
                    ScheduleEvent::Eval { step, metric, loss } => Some((*step, *metric, *loss)),
                    _ => None,
                })
                .collect(),
            best_step: l.best_step,
            best_metric: l.best_metric,
            steps: l.steps,
            switch_step: l.switch_step,
        }
    }
}

impl From<&AnnealLog> for StageLog {
    fn from(l: &AnnealLog) -> Self {
        StageLog {
            evals: l.evals.iter().map(|&(s, m, loss, _)| (s, m, loss)).collect(),
            best_step: l.best_step,
            best_metric: l.best_metric,
            steps: l.steps,
            switch_step: None,
        }
    }
}

/// Record of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Flattened configuration, as written by [`PipelineConfig::to_toml`].
    pub config: String,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    /// Whether dev was carved out of the training data.
    pub dev_split: bool,
    pub checksums: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageLog>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    /// The manifest without wall-clock timings, which differ between runs.
    pub fn reproducible(&self) -> RunManifest {
        RunManifest {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::to_writer_pretty(BufWriter::new(f), self).map_err(|e| model_error(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_reader(open(path)?).map_err(|e| model_error(path, e))
    }
}

fn training_error(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Training { stage, message }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
    out
}

/// The training and dev documents the parser sees: gold trees, with tags
/// from `tagger` when given.
fn parser_data(train: &Document, dev: &Document, tagger: Option<&TaggerModel>) -> (Document, Document) {
    match tagger {
        Some(t) => (t.tag_document(train), t.tag_document(dev)),
        None => (train.clone(), dev.clone()),
    }
}

fn split(train: &Document, dev: Option<&Document>) -> Result<(Document, Document, bool)> {
    match dev {
        Some(d) if !d.sentences.is_empty() => Ok((train.clone(), d.clone(), false)),
        _ => {
            let (mut t, d) = train_dev_split(train, SplitRatio::default())?;
            t.raw_text = None;
            Ok((t, d, true))
        }
    }
}

/// Trains every stage. Without `dev`, one sentence in eight of `train` is
/// held out. Only the parser sees predicted input (tags from the freshly
/// trained tagger, when enabled); the other stages train on gold input.
pub fn train_all(
    config: &PipelineConfig,
    train: &Document,
    dev: Option<&Document>,
    pretrained: Option<&Pretrained>,
) -> Result<(Pipeline, RunManifest)> {
    let c = config.seeded();
    let (train, dev, dev_split) = split(train, dev)?;
    let mut stages = BTreeMap::new();
    let mut timings = BTreeMap::new();

    let (tokenizer, log) = timed(&mut timings, Stage::Tokenize, || train_tokenizer(&train, &dev, &c.tokenizer))
        .map_err(|e: TokenizerError| training_error(Stage::Tokenize)(e.to_string()))?;
    stages.insert(Stage::Tokenize.name().to_string(), StageLog::from(&log));

    let (mwt, log) = timed(&mut timings, Stage::Expand, || train_mwt(&train, &dev, &c.mwt));
    if let Some(log) = log {
        stages.insert(Stage::Expand.name().to_string(), StageLog::from(&log));
    }

    let (tagger, log) = timed(&mut timings, Stage::Tag, || train_tagger(&train, &dev, pretrained, &c.tagger))
        .map_err(|e: TaggerError| training_error(Stage::Tag)(e.to_string()))?;
    stages.insert(Stage::Tag.name().to_string(), StageLog::from(&log));

    let (lemmatizer, log) = timed(&mut timings, Stage::Lemmatize, || train_lemmatizer(&train, &dev, &c.lemmatizer))
        .map_err(|e: LemmaError| training_error(Stage::Lemmatize)(e.to_string()))?;
    stages.insert(Stage::Lemmatize.name().to_string(), StageLog::from(&log));

    let (ptrain, pdev) = parser_data(&train, &dev, c.parser_on_predicted_tags.then_some(&tagger));
    let (parser, log) = timed(&mut timings, Stage::Parse, || train_parser(&ptrain, &pdev, pretrained, &c.parser))
        .map_err(|e: ParserError| training_error(Stage::Parse)(e.to_string()))?;
    stages.insert(Stage::Parse.name().to_string(), StageLog::from(&log));

    let pipeline = Pipeline {
        tokenizer,
        mwt,
        tagger,
        lemmatizer,
        parser,
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.to_toml(),
        train_sentences: train.sentences.len(),
        dev_sentences: dev.sentences.len(),
        dev_split,
        checksums: pipeline.checksums(),
        stages,
        timings,
    };
    Ok((pipeline, manifest))
}

/// Scores the full system on `gold`, starting from its raw text.
pub fn evaluate_pipeline(pipeline: &Pipeline, gold: &Document) -> Result<EvalReport> {
    let raw = gold.raw_text.clone().unwrap_or_else(|| gold.reconstruct_raw_text());
    let system = pipeline.run(&raw)?;
    Ok(evaluate(gold, &system, Some(&raw))?)
}

/// Per-stage scores on `gold`: each stage gets gold input up to its own
/// position, so errors of earlier stages do not propagate.
pub fn evaluate_stages(pipeline: &Pipeline, gold: &Document) -> Result<BTreeMap<Stage, EvalReport>> {
    let mut out = BTreeMap::new();
    out.insert(Stage::Tokenize, evaluate_pipeline(pipeline, gold)?);
    let collapsed = crate::mwt::collapse_mwts(gold);
    let mut expanded = strip_annotations(&collapsed, Stage::Tag);
    for s in &mut expanded.sentences {
        pipeline.mwt.expand_sentence(s);
        for w in &mut s.words {
            misc_remove(&mut w.misc, MWT_FLAG);
        }
    }
    out.insert(Stage::Expand, evaluate(gold, &expanded, None)?);
    for (stage, input) in [
        (Stage::Tag, strip_annotations(gold, Stage::Tag)),
        (Stage::Lemmatize, strip_annotations(gold, Stage::Lemmatize)),
        (Stage::Parse, strip_annotations(gold, Stage::Parse)),
    ] {
        let system = pipeline.run_from(&input, stage)?;
        out.insert(stage, evaluate(gold, &system, None)?);
    }
    Ok(out)
}

/// Components that can be switched off to measure their contribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ablation {
    NoGating,
    NoConv,
    NoSeq2SeqMwt,
    NoEdit,
    NoDictionaries,
    NoLinearization,
    NoDistance,
    NoBiaffineTagger,
    NoDropoutTokenizer,
}

impl Ablation {
    pub const ALL: [Ablation; 9] = [
        Ablation::NoGating,
        Ablation::NoConv,
        Ablation::NoSeq2SeqMwt,
        Ablation::NoEdit,
        Ablation::NoDictionaries,
        Ablation::NoLinearization,
        Ablation::NoDistance,
        Ablation::NoBiaffineTagger,
        Ablation::NoDropoutTokenizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoGating => "no-gating",
            Ablation::NoConv => "no-conv",
            Ablation::NoSeq2SeqMwt => "no-seq2seq-mwt",
            Ablation::NoEdit => "no-edit",
            Ablation::NoDictionaries => "no-dictionaries",
            Ablation::NoLinearization => "no-linearization",
            Ablation::NoDistance => "no-distance",
            Ablation::NoBiaffineTagger => "no-biaffine-tagger",
            Ablation::NoDropoutTokenizer => "no-dropout-tokenizer",
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            Ablation::NoGating | Ablation::NoConv | Ablation::NoDropoutTokenizer => Stage::Tokenize,
            Ablation::NoSeq2SeqMwt => Stage::Expand,
            Ablation::NoBiaffineTagger => Stage::Tag,
            Ablation::NoEdit | Ablation::NoDictionaries => Stage::Lemmatize,
            Ablation::NoLinearization | Ablation::NoDistance => Stage::Parse,
        }
    }

    /// Whether the stage has to be retrained rather than edited in place.
    fn retrains(self) -> bool {
        !matches!(self, Ablation::NoSeq2SeqMwt | Ablation::NoDictionaries)
    }

    pub fn apply(self, config: &mut PipelineConfig) {
        match self {
            Ablation::NoGating => config.tokenizer.gating = false,
            Ablation::NoConv => config.tokenizer.conv_widths.clear(),
            Ablation::NoDropoutTokenizer => {
                config.tokenizer.dropout = 0.0;
                config.tokenizer.unk_dropout = 0.0;
            }
            Ablation::NoEdit => config.lemmatizer.edit = false,
            Ablation::NoLinearization => config.parser.linearization = false,
            Ablation::NoDistance => config.parser.distance = false,
            Ablation::NoBiaffineTagger => config.tagger.strategy = Some(XposStrategy::SharedFc),
            Ablation::NoSeq2SeqMwt | Ablation::NoDictionaries => {}
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
            PipelineError::Config(format!("unknown ablation {:?} (known: {})", s, known.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub flags: Vec<String>,
    pub baseline: EvalReport,
    pub variant: EvalReport,
    /// Variant F1 minus baseline F1 per metric.
    pub deltas: Vec<(String, f64)>,
}

impl AblationReport {
    pub fn delta(&self, metric: &str) -> Option<f64> {
        self.deltas.iter().find(|(m, _)| m.eq_ignore_ascii_case(metric)).map(|d| d.1)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "ablation: {}\n",
            if self.flags.is_empty() { "none".to_string() } else { self.flags.join(" ") }
        );
        out.push_str("Metric     |  Baseline |   Variant |     Delta\n");
        for ((name, b), (_, v)) in self.baseline.metrics().iter().zip(self.variant.metrics().iter()) {
            out.push_str(&format!(
                "{:<11}|{:10.2} |{:10.2} |{:+10.2}\n",
                name,
                100.0 * b.f1,
                100.0 * v.f1,
                100.0 * (v.f1 - b.f1)
            ));
        }
        out
    }
}

/// `base` with the stages touched by `flags` rebuilt under the ablated
/// configuration. A retrained tagger also retrains a parser that consumes
/// predicted tags.
pub fn ablated_pipeline(
    base: &Pipeline,
    config: &PipelineConfig,
    flags: &[Ablation],
    train: &Document,
    dev: Option<&Document>,
    pretrained: Option<&Pretrained>,
) -> Result<Pipeline> {
    let mut c = config.clone();
    for f in flags {
        f.apply(&mut c);
    }
    let c = c.seeded();
    let (train, dev, _) = split(train, dev)?;
    let mut retrain: Vec<Stage> = flags.iter().filter(|f| f.retrains()).map(|f| f.stage()).collect();
    if retrain.contains(&Stage::Tag) && c.parser_on_predicted_tags {
        retrain.push(Stage::Parse);
    }
    retrain.sort();
    retrain.dedup();

    let mut p = base.clone();
    for stage in retrain {
        match stage {
            Stage::Tokenize => {
                p.tokenizer = train_tokenizer(&train, &dev, &c.tokenizer)
                    .map_err(|e| training_error(stage)(e.to_string()))?
                    .0
            }
            Stage::Expand => p.mwt = train_mwt(&train, &dev, &c.mwt).0,
            Stage::Tag => {
                p.tagger = train_tagger(&train, &dev, pretrained, &c.tagger)
                    .map_err(|e| training_error(stage)(e.to_string()))?
                    .0
            }
            Stage::Lemmatize => {
                p.lemmatizer = train_lemmatizer(&train, &dev, &c.lemmatizer)
                    .map_err(|e| training_error(stage)(e.to_string()))?
                    .0
            }
            Stage::Parse => {
                let (pt, pd) = parser_data(&train, &dev, c.parser_on_predicted_tags.then_some(&p.tagger));
                p.parser = train_parser(&pt, &pd, pretrained, &c.parser)
                    .map_err(|e| training_error(stage)(e.to_string()))?
                    .0
            }
        }
    }
    if flags.contains(&Ablation::NoSeq2SeqMwt) {
        p.mwt.model = None;
    }
    if flags.contains(&Ablation::NoDictionaries) {
        p.lemmatizer.lexicon = LemmaLexicon::default();
    }
    Ok(p)
}

/// Scores `base` and its ablated variant on `eval` from raw text.
pub fn ablate(
    base: &Pipeline,
    config: &PipelineConfig,
    flags: &[Ablation],
    train: &Document,
    dev: Option<&Document>,
    eval: &Document,
    pretrained: Option<&Pretrained>,
) -> Result<AblationReport> {
    let variant = ablated_pipeline(base, config, flags, train, dev, pretrained)?;
    let baseline = evaluate_pipeline(base, eval)?;
    let ablated = evaluate_pipeline(&variant, eval)?;
    let deltas = METRIC_NAMES
        .iter()
        .map(|m| {
            let d = ablated.get(m).expect("known metric").f1 - baseline.get(m).expect("known metric").f1;
            (m.to_string(), d)
        })
        .collect();
    Ok(AblationReport {
        flags: flags.iter().map(|f| f.name().to_string()).collect(),
        baseline,
        variant: ablated,
        deltas,
    })
}
