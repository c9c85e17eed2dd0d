//! Probe grammatical-gender bias in language models.
//!
//! The pipeline elicits comma-separated adjectives for gendered nouns from a
//! language-model backend, aggregates them into per-noun frequency profiles,
//! translates them to an English pivot, and asks whether the adjectives alone
//! predict the noun's grammatical gender, both inside one language and when a
//! classifier trained on other languages is applied to an unseen one.
//!
//! Module map:
//!
//! - [`lexicon`]: gendered-noun lexicons, animate filtering, 90/10 splits.
//! - [`gateway`]: prompt templates, backends (HTTP, replay, synthetic), transcripts.
//! - [`describe`]: completion parsing and frequency profiles.
//! - [`translate`]: pivot translation with a persistent cache.
//! - [`embed`]: embedding tables and weighted-sum features.
//! - [`classify`]: a two-layer MLP trained with binary cross-entropy.
//! - [`metrics`]: masculine ratios, cross-language similarity, accuracy and F1.
//! - [`synthetic`]: planted-bias languages with known ground truth.
//! - [`experiments`]: same-language, transfer, model comparison and similarity runs.
//! - [`fixtures`]: consistency checks over a fixture tree.

pub mod classify;
pub mod config;
pub mod describe;
pub mod embed;
mod error;
pub mod experiments;
pub mod fixtures;
pub mod gateway;
pub mod lexicon;
pub mod metrics;
pub mod seed;
pub mod synthetic;
pub mod translate;

pub use error::{Error, Result};
pub use lexicon::{Gender, LanguageCode, Lexicon, Noun};
