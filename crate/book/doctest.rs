// mdbook cannot run listings against a workspace crate, so every chapter is
// pulled in as a module doc comment and `cargo test --doc` runs them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/conllu.md")]
pub mod conllu {}
#[doc = include_str!("src/tokenization.md")]
pub mod tokenization {}
#[doc = include_str!("src/mwt.md")]
pub mod mwt {}
#[doc = include_str!("src/tagging.md")]
pub mod tagging {}
#[doc = include_str!("src/lemmatization.md")]
pub mod lemmatization {}
#[doc = include_str!("src/parsing.md")]
pub mod parsing {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/pipeline.md")]
pub mod pipeline {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
