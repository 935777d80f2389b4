#![allow(dead_code)]

use udnet::nn::OptimizerSchedule;
use udnet::parser::ParserConfig;
use udnet::pipeline::PipelineConfig;
use udnet::seq2seq::Seq2SeqConfig;
use udnet::tagger::TaggerConfig;
use udnet::tokenizer::TokenizerConfig;
use udnet::wordrep::WordRepConfig;

pub fn rep() -> WordRepConfig {
    WordRepConfig {
        word_dim: 16,
        min_word_count: 1,
        char_dim: 8,
        char_hidden: 16,
        char_proj: 16,
        pretrained_proj: 8,
        lemma_dim: 0,
        tag_dim: 0,
        word_dropout: 0.1,
    }
}

pub fn schedule(max_steps: usize) -> OptimizerSchedule {
    OptimizerSchedule {
        eval_interval: 50,
        patience: max_steps / 2,
        max_steps,
        ..Default::default()
    }
}

pub fn tokenizer() -> TokenizerConfig {
    TokenizerConfig {
        emb_dim: 8,
        hidden: 16,
        dropout: 0.0,
        unk_dropout: 0.0,
        chunk_len: 80,
        batch_size: 8,
        lr: 0.01,
        max_steps: 500,
        eval_interval: 50,
        anneal_after: 300,
        ..Default::default()
    }
}

pub fn seq2seq() -> Seq2SeqConfig {
    Seq2SeqConfig {
        emb_dim: 16,
        hidden: 32,
        dropout: 0.0,
        beam: 4,
        epochs: 60,
        batch_size: 10,
        lr: 0.01,
        anneal_after: 40,
        ..Seq2SeqConfig::lemmatizer()
    }
}

pub fn tagger() -> TaggerConfig {
    TaggerConfig {
        rep: rep(),
        hidden: 32,
        layers: 1,
        upos_fc: 32,
        xpos_fc: 32,
        feats_fc: 16,
        upos_emb: 16,
        dropout: 0.1,
        rec_dropout: 0.1,
        batch_size: 10,
        schedule: schedule(400),
        ..Default::default()
    }
}

pub fn parser() -> ParserConfig {
    ParserConfig {
        rep: WordRepConfig {
            lemma_dim: 8,
            tag_dim: 8,
            ..rep()
        },
        hidden: 32,
        layers: 2,
        fc: 32,
        dropout: 0.1,
        rec_dropout: 0.1,
        batch_size: 10,
        schedule: schedule(600),
        ..Default::default()
    }
}

pub fn pipeline() -> PipelineConfig {
    PipelineConfig {
        tokenizer: tokenizer(),
        mwt: seq2seq(),
        tagger: tagger(),
        lemmatizer: seq2seq(),
        parser: parser(),
        ..Default::default()
    }
}
