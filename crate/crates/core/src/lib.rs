//! Selective contextual reasoning: knowledge updating through an
//! append-only textual memory instead of parameter edits.
//!
//! A question is answered in three steps. Semantic filtering retrieves the
//! top-k stored facts by embedding similarity ([`retrieval`]). Knowledge
//! confirmation asks the language model which of them, if any, actually
//! answers the question ([`confirmation`]). Contextual reasoning then answers
//! with the confirmed fact in the prompt, or with the bare question when
//! nothing was confirmed ([`reasoning`]).
//!
//! [`evaluation`] drives the sequential-update protocol and scores
//! reliability, generalization, locality and portability.

pub mod backends;
pub mod cli;
pub mod confirmation;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod memory;
pub mod reasoning;
pub mod retrieval;
pub mod scenarios;
pub mod text;

pub use error::{Error, Result};
