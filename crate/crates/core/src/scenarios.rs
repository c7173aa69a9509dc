//! Scripted generators that stand in for a language model in end-to-end runs.
//!
//! [`faithful`] behaves like a model that uses context perfectly: it echoes
//! the right fact during confirmation, rejects every fact for locality
//! questions, answers each reasoning prompt with the probe's target when the
//! matching fact is in context, and answers locality questions the same way
//! before and after updates. [`oblivious`] ignores memory entirely.

use std::str::FromStr;

use crate::backends::ScriptedGenerator;
use crate::datasets::{to_statement, Dataset, Dimension};
use crate::error::{Error, Result};
use crate::reasoning::build_reasoning_prompt;

/// Fixed reply of the oblivious generator and the faithful one's fallback.
pub const FALLBACK_ANSWER: &str = "I have no information about that.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    Faithful,
    Oblivious,
}

impl FromStr for MockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "faithful" => Ok(Self::Faithful),
            "oblivious" => Ok(Self::Oblivious),
            other => Err(Error::Parameter(format!("unknown mock '{other}'"))),
        }
    }
}

fn confirmation_needle(question: &str) -> String {
    format!("Question: {question}\n\nOutput:")
}

pub fn faithful(dataset: &Dataset) -> ScriptedGenerator {
    let mut gen = ScriptedGenerator::new("scripted-faithful", FALLBACK_ANSWER);
    for record in &dataset.records {
        let statement = to_statement(record);
        let mut answerable = vec![(record.edit_question.as_str(), record.edit_target.as_str())];
        for p in &record.probes {
            if p.kind.dimension() == Dimension::Locality {
                gen.push_rule(confirmation_needle(&p.question), "no relevant fact.");
                gen.insert_exact(p.question.clone(), p.target.clone());
            } else {
                answerable.push((p.question.as_str(), p.target.as_str()));
            }
        }
        for (question, target) in answerable {
            gen.push_rule(confirmation_needle(question), statement.clone());
            gen.insert_exact(build_reasoning_prompt(question, Some(&statement)), target);
        }
    }
    gen
}

pub fn oblivious() -> ScriptedGenerator {
    ScriptedGenerator::new("scripted-oblivious", FALLBACK_ANSWER)
        .with_rule("\n\nOutput:", "no relevant fact.")
}

pub fn build(kind: MockKind, dataset: Option<&Dataset>) -> Result<ScriptedGenerator> {
    match (kind, dataset) {
        (MockKind::Oblivious, _) => Ok(oblivious()),
        (MockKind::Faithful, Some(d)) => Ok(faithful(d)),
        (MockKind::Faithful, None) => Err(Error::Parameter(
            "the faithful mock is scripted from a dataset; pass --dataset".into(),
        )),
    }
}
