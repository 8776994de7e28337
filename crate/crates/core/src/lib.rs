//! Dictionary-driven prompting for translating a language the model has never seen.
//!
//! The pieces, bottom-up: [`store`] loads dictionaries and corpora, [`segment`] tokenizes
//! and runs maximum matching, [`align`] induces extra lexicon entries with IBM Model 1,
//! [`retrieve`] picks in-context exemplars, [`prompt`] renders prompts, [`llm`] talks to
//! a backend, [`metrics`] scores output and [`pipeline`] ties a run together.

pub mod align;
pub mod error;
pub mod lang;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod reference_scores;
pub mod retrieve;
pub mod segment;
pub mod store;

pub use error::{Error, Result};
pub use lang::LangPair;
