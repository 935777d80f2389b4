pub mod conllu;
pub mod lemmatizer;
pub mod mwt;
pub mod nn;
pub mod parser;
pub mod pipeline;
pub mod scorer;
pub mod seq2seq;
pub mod synth;
pub mod tagger;
pub mod tokenizer;
pub mod wordrep;
