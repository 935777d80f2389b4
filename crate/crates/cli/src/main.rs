//! `udnet`: raw text to CoNLL-U from the command line.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use udnet::conllu::{read_conllu, write_conllu_to, Document};
use udnet::pipeline::{
    ablate, files, load_expander, load_lemmatizer, load_parser, load_tagger, load_tokenizer, train_all, Ablation, Pipeline,
    PipelineConfig, PipelineError, Stage,
};
use udnet::scorer::evaluate;
use udnet::tokenizer::UnitMode;

const MODEL_DIR_ENV: &str = "UDNET_MODEL_DIR";

#[derive(Parser)]
#[command(name = "udnet", version, about = "Tokenize, tag, lemmatize and parse raw text into CoNLL-U")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split raw text into sentences and tokens.
    Tokenize {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        raw_text: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        io: Output,
    },
    /// Expand tokens marked as multi-word tokens into their words.
    ExpandMwt {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        io: InputOutput,
    },
    /// Predict UPOS, XPOS and features.
    Tag {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        io: InputOutput,
    },
    /// Predict lemmas from forms and UPOS.
    Lemmatize {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        io: InputOutput,
    },
    /// Predict heads and relations.
    Parse {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        io: InputOutput,
    },
    /// Score a system file against a gold file.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        system: PathBuf,
        /// Raw text both files were produced from.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Train every stage and write a model directory.
    Train {
        #[command(flatten)]
        data: TrainData,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Run the full pipeline.
    Predict {
        #[arg(long, env = MODEL_DIR_ENV)]
        model_dir: Option<PathBuf>,
        /// Raw text input; without it CoNLL-U is read from --input or stdin.
        #[arg(long)]
        raw_text: Option<PathBuf>,
        /// First stage to run on CoNLL-U input.
        #[arg(long, default_value = "tag", value_parser = parse_stage)]
        from: Stage,
        #[command(flatten)]
        io: InputOutput,
    },
    /// Compare the trained system with a variant missing some components.
    Ablate {
        #[command(flatten)]
        data: TrainData,
        /// Gold file to score on; defaults to the dev file.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Components to remove, e.g. no-gating no-distance.
        flags: Vec<String>,
    },
}

#[derive(Args)]
struct Output {
    /// Output file; stdout by default.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InputOutput {
    /// CoNLL-U input; stdin by default.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct TrainData {
    /// Gold CoNLL-U training file.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Raw text of the training file; rebuilt from it when absent.
    #[arg(long)]
    train_text: Option<PathBuf>,
    /// Gold CoNLL-U dev file; held out of --train when absent.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    dev_text: Option<PathBuf>,
    /// TOML configuration with dotted stage.param keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, `stage.param=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// word2vec text embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, env = MODEL_DIR_ENV)]
    model_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Char,
    Syllable,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ReportFormat {
    Text,
    KeyValue,
    Both,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

/// Failure classes, one per nonzero exit code.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Stage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Stage(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Stage(e) => e,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Usage(e.into()),
            e if e.is_data_error() => Failure::Data(e.into()),
            e => Failure::Stage(e.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn usage(message: String) -> Failure {
    Failure::Usage(anyhow!(message))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Data)
}

fn read_doc(path: Option<&Path>) -> Result<Document, Failure> {
    match path {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Data)?;
            read_conllu(BufReader::new(f))
                .with_context(|| format!("reading {}", p.display()))
                .map_err(Failure::Data)
        }
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text).context("reading stdin").map_err(Failure::Data)?;
            read_conllu(text.as_bytes()).context("reading stdin").map_err(Failure::Data)
        }
    }
}

fn write_doc(doc: &Document, out: &Output) -> Outcome {
    let sink: Box<dyn Write> = match &out.output {
        Some(p) => Box::new(
            File::create(p)
                .with_context(|| format!("writing {}", p.display()))
                .map_err(Failure::Data)?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    write_conllu_to(doc, &mut w).map_err(data)?;
    w.flush().map_err(data)
}

fn model_dir(dir: Option<&Path>) -> Result<PathBuf, Failure> {
    dir.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| usage(format!("no model given; pass --model or set {}", MODEL_DIR_ENV)))
}

/// `explicit`, or `file` inside the model directory.
fn stage_file(explicit: Option<PathBuf>, file: &str) -> Result<PathBuf, Failure> {
    match explicit {
        Some(p) => Ok(p),
        None => Ok(model_dir(None)?.join(file)),
    }
}

/// The network next to a lexicon is optional.
fn optional_model(explicit: Option<PathBuf>, file: &str) -> Result<Option<PathBuf>, Failure> {
    match explicit {
        Some(p) => Ok(Some(p)),
        None => Ok(Some(model_dir(None)?.join(file)).filter(|p| p.exists())),
    }
}

fn validate(doc: &Document, stage: Stage) -> Outcome {
    doc.validate().map_err(|e| Failure::Stage(anyhow!("{}: {}", stage, e)))
}

fn load_training(d: &TrainData) -> Result<(PipelineConfig, Document, Option<Document>), Failure> {
    let text = d.config.as_deref().map(read_text).transpose()?;
    let mut overrides = d.overrides.clone();
    if let Some(e) = &d.embeddings {
        overrides.push(format!("embeddings={:?}", e.display().to_string()));
    }
    let config = PipelineConfig::load(text.as_deref(), &overrides)?;
    let path = d.train.as_deref().ok_or_else(|| usage("--train is required".into()))?;
    let mut train = read_doc(Some(path))?;
    if let Some(t) = &d.train_text {
        train.raw_text = Some(read_text(t)?);
    }
    let dev = match &d.dev {
        Some(p) => {
            let mut doc = read_doc(Some(p))?;
            if let Some(t) = &d.dev_text {
                doc.raw_text = Some(read_text(t)?);
            }
            Some(doc)
        }
        None => None,
    };
    Ok((config, train, dev))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Tokenize { model, raw_text, mode, io } => {
            let model = load_tokenizer(&stage_file(model, files::TOKENIZER)?)?;
            if let Some(m) = mode {
                let wanted = match m {
                    Mode::Char => UnitMode::Char,
                    Mode::Syllable => UnitMode::Syllable,
                };
                if wanted != model.config.mode {
                    return Err(usage(format!("the model was trained on {:?} units", model.config.mode)));
                }
            }
            let doc = model.tokenize(&read_text(&raw_text)?);
            write_doc(&doc, &io)
        }
        Command::ExpandMwt { model, lexicon, io } => {
            let lexicon = stage_file(lexicon, files::MWT_LEXICON)?;
            let expander = load_expander(&lexicon, optional_model(model, files::MWT)?.as_deref())?;
            let mut doc = read_doc(io.input.as_deref())?;
            expander.expand_document(&mut doc);
            validate(&doc, Stage::Expand)?;
            write_doc(&doc, &io.out)
        }
        Command::Tag { model, io } => {
            let tagger = load_tagger(&stage_file(model, files::TAGGER)?)?;
            let doc = tagger.tag_document(&read_doc(io.input.as_deref())?);
            write_doc(&doc, &io.out)
        }
        Command::Lemmatize { model, lexicon, io } => {
            let lexicon = stage_file(lexicon, files::LEMMA_LEXICON)?;
            let lemmatizer = load_lemmatizer(&lexicon, optional_model(model, files::LEMMATIZER)?.as_deref())?;
            let mut doc = read_doc(io.input.as_deref())?;
            lemmatizer.lemmatize_document(&mut doc);
            write_doc(&doc, &io.out)
        }
        Command::Parse { model, io } => {
            let parser = load_parser(&stage_file(model, files::PARSER)?)?;
            let doc = read_doc(io.input.as_deref())?;
            if let Some(i) = doc.sentences.iter().position(|s| s.words.iter().any(|w| w.upos.is_empty())) {
                return Err(Failure::Data(anyhow!("sentence {}: words have no UPOS; tag before parsing", i + 1)));
            }
            let doc = parser.parse_document(&doc);
            validate(&doc, Stage::Parse)?;
            write_doc(&doc, &io.out)
        }
        Command::Evaluate { gold, system, raw, format } => {
            let gold = read_doc(Some(&gold))?;
            let system = read_doc(Some(&system))?;
            let raw = raw.as_deref().map(read_text).transpose()?;
            let report = evaluate(&gold, &system, raw.as_deref()).map_err(data)?;
            if format != ReportFormat::KeyValue {
                print!("{}", report.to_text());
            }
            if format == ReportFormat::Both {
                println!();
            }
            if format != ReportFormat::Text {
                print!("{}", report.to_key_values());
            }
            Ok(())
        }
        Command::Train { data: d, dump_config } => {
            if dump_config {
                let text = d.config.as_deref().map(read_text).transpose()?;
                print!("{}", PipelineConfig::load(text.as_deref(), &d.overrides)?.to_toml());
                return Ok(());
            }
            let dir = model_dir(d.model_dir.as_deref())?;
            let (config, train, dev) = load_training(&d)?;
            let pretrained = config.pretrained()?;
            let (pipeline, manifest) = train_all(&config, &train, dev.as_ref(), pretrained.as_ref())?;
            pipeline.save(&dir)?;
            manifest.save(&dir.join(files::MANIFEST))?;
            std::fs::write(dir.join(files::CONFIG), config.to_toml()).map_err(data)?;
            for (stage, log) in &manifest.stages {
                eprintln!("{}: best dev {:.4} at step {} of {}", stage, log.best_metric, log.best_step, log.steps);
            }
            Ok(())
        }
        Command::Predict { model_dir: dir, raw_text, from, io } => {
            let dir = model_dir(dir.as_deref())?;
            let pipeline = Pipeline::load(&dir)?;
            let doc = match raw_text {
                Some(p) => pipeline.run(&read_text(&p)?)?,
                None => pipeline.run_from(&read_doc(io.input.as_deref())?, from)?,
            };
            write_doc(&doc, &io.out)
        }
        Command::Ablate { data: d, eval, flags } => {
            let flags = flags.iter().map(|f| f.parse::<Ablation>()).collect::<Result<Vec<_>, _>>()?;
            let (config, train, dev) = load_training(&d)?;
            let pretrained = config.pretrained()?;
            let eval = match eval {
                Some(p) => read_doc(Some(&p))?,
                None => dev.clone().ok_or_else(|| usage("ablate needs --dev or --eval".into()))?,
            };
            let base = match d.model_dir.as_deref().filter(|p| p.join(files::PARSER).exists()) {
                Some(p) => Pipeline::load(p)?,
                None => train_all(&config, &train, dev.as_ref(), pretrained.as_ref())?.0,
            };
            let report = ablate(&base, &config, &flags, &train, dev.as_ref(), &eval, pretrained.as_ref())?;
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
