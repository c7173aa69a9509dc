//! Benchmark records and their loaders.
//!
//! The canonical format is newline-delimited JSON, one record per line:
//!
//! ```json
//! {"edit_question": "...", "edit_target": "...", "probes": [{"kind": "rephrase", "question": "...", "target": "..."}]}
//! ```
//!
//! The `zsre` and `counterfact` adapters accept the public benchmark layouts
//! (a JSON array or JSON lines); field mappings are listed in the README.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Rephrase,
    LocalityRelationSpecificity,
    LocalityForgetfulness,
    PortabilitySubjectAliasing,
    PortabilityReasoning,
    PortabilityReversedRelation,
}

/// The four scored dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Reliability,
    Generalization,
    Locality,
    Portability,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Reliability,
        Dimension::Generalization,
        Dimension::Locality,
        Dimension::Portability,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Reliability => "Rel.",
            Dimension::Generalization => "Gen.",
            Dimension::Locality => "Loc.",
            Dimension::Portability => "Port.",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Reliability => "reliability",
            Dimension::Generalization => "generalization",
            Dimension::Locality => "locality",
            Dimension::Portability => "portability",
        })
    }
}

impl ProbeKind {
    pub fn dimension(self) -> Dimension {
        match self {
            ProbeKind::Rephrase => Dimension::Generalization,
            ProbeKind::LocalityRelationSpecificity | ProbeKind::LocalityForgetfulness => {
                Dimension::Locality
            }
            ProbeKind::PortabilitySubjectAliasing
            | ProbeKind::PortabilityReasoning
            | ProbeKind::PortabilityReversedRelation => Dimension::Portability,
        }
    }

    pub fn is_locality(self) -> bool {
        self.dimension() == Dimension::Locality
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub kind: ProbeKind,
    pub question: String,
    /// Ground truth; for locality probes this is the original-world answer.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub edit_question: String,
    pub edit_target: String,
    pub probes: Vec<Probe>,
}

impl EvalRecord {
    pub fn probes_of(&self, dim: Dimension) -> impl Iterator<Item = &Probe> {
        self.probes
            .iter()
            .filter(move |p| p.kind.dimension() == dim)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<EvalRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Canonical,
    Zsre,
    Counterfact,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(Self::Canonical),
            "zsre" => Ok(Self::Zsre),
            "counterfact" | "wiki_counterfact" => Ok(Self::Counterfact),
            other => Err(Error::Parameter(format!(
                "unknown dataset format '{other}'"
            ))),
        }
    }
}

/// Renders an edit as the declarative statement stored in memory.
pub fn to_statement(record: &EvalRecord) -> String {
    if record.edit_question.trim_end().ends_with('?') {
        format!(
            "Question: {} Answer: {}",
            record.edit_question, record.edit_target
        )
    } else {
        format!("{} {}", record.edit_question, record.edit_target)
    }
}

#[derive(Serialize, Deserialize)]
struct CanonicalLine {
    edit_question: String,
    edit_target: String,
    #[serde(default)]
    probes: Vec<Probe>,
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in &dataset.records {
        let line = CanonicalLine {
            edit_question: r.edit_question.clone(),
            edit_target: r.edit_target.clone(),
            probes: r.probes.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values = read_values(path, &raw)?;
    let mut ctx = Ctx {
        path: path.to_path_buf(),
        index: 0,
    };
    let mut records = Vec::with_capacity(values.len());
    for (index, value) in values.into_iter().enumerate() {
        ctx.index = index;
        let obj = value
            .as_object()
            .ok_or_else(|| ctx.err(None, "record is not an object"))?;
        let record = match format {
            DatasetFormat::Canonical => canonical_record(&ctx, obj)?,
            DatasetFormat::Zsre => knowedit_record(&ctx, obj, ZSRE_FIELDS)?,
            DatasetFormat::Counterfact if obj.contains_key("requested_rewrite") => {
                rome_counterfact_record(&ctx, obj)?
            }
            DatasetFormat::Counterfact => knowedit_record(&ctx, obj, COUNTERFACT_FIELDS)?,
        };
        validate(&ctx, &record)?;
        records.push(record);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, records })
}

/// A JSON array, or one JSON value per non-blank line.
fn read_values(path: &Path, raw: &str) -> Result<Vec<Value>> {
    if raw.trim_start().starts_with('[') {
        return serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        });
    }
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

struct Ctx {
    path: PathBuf,
    index: usize,
}

impl Ctx {
    fn err(&self, field: Option<&str>, message: impl Into<String>) -> Error {
        Error::Record {
            path: self.path.clone(),
            index: self.index,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }

    fn missing(&self, field: &str) -> Error {
        self.err(Some(field), format!("missing field '{field}'"))
    }
}

fn validate(ctx: &Ctx, r: &EvalRecord) -> Result<()> {
    if r.edit_question.trim().is_empty() {
        return Err(ctx.err(Some("edit_question"), "edit_question is empty"));
    }
    if r.edit_target.trim().is_empty() {
        return Err(ctx.err(Some("edit_target"), "edit_target is empty"));
    }
    for p in &r.probes {
        if p.question.trim().is_empty() || p.target.trim().is_empty() {
            return Err(ctx.err(
                Some("probes"),
                format!("{:?} probe has an empty field", p.kind),
            ));
        }
    }
    Ok(())
}

fn canonical_record(ctx: &Ctx, obj: &Map<String, Value>) -> Result<EvalRecord> {
    for field in ["edit_question", "edit_target"] {
        match obj.get(field) {
            None | Some(Value::Null) => return Err(ctx.missing(field)),
            Some(Value::String(_)) => {}
            Some(_) => return Err(ctx.err(Some(field), format!("'{field}' must be a string"))),
        }
    }
    let line: CanonicalLine = serde_json::from_value(Value::Object(obj.clone()))
        .map_err(|e| ctx.err(Some("probes"), e.to_string()))?;
    Ok(EvalRecord {
        index: ctx.index,
        edit_question: line.edit_question,
        edit_target: line.edit_target,
        probes: line.probes,
    })
}

struct FieldNames {
    question: &'static [&'static str],
    target: &'static [&'static str],
    rephrase: &'static [&'static str],
}

const ZSRE_FIELDS: FieldNames = FieldNames {
    question: &["prompt", "src"],
    target: &["target_new", "alt"],
    rephrase: &["rephrase_prompt", "rephrase"],
};

const COUNTERFACT_FIELDS: FieldNames = FieldNames {
    question: &["prompt"],
    target: &["target_new"],
    rephrase: &["rephrase_prompt", "rephrase", "paraphrase_prompts"],
};

fn first_present<'a>(obj: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names
        .iter()
        .filter_map(|n| obj.get(*n))
        .find(|v| !v.is_null())
}

/// First string in a possibly nested list of answers.
fn first_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => items.iter().find_map(first_string),
        Value::Object(o) => o.get("str").and_then(first_string),
        _ => None,
    }
}

fn strings(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items.iter().filter_map(first_string).collect(),
        _ => Vec::new(),
    }
}

fn probe_kind(group: &str, key: &str) -> Option<ProbeKind> {
    let k: String = key
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match (group, k.as_str()) {
        ("locality", "relationspecificity") => Some(ProbeKind::LocalityRelationSpecificity),
        ("locality", "forgetfulness") => Some(ProbeKind::LocalityForgetfulness),
        ("portability", "subjectaliasing") => Some(ProbeKind::PortabilitySubjectAliasing),
        ("portability", "reasoning") => Some(ProbeKind::PortabilityReasoning),
        ("portability", "logicalgeneralization" | "reversedrelation" | "reverserelation") => {
            Some(ProbeKind::PortabilityReversedRelation)
        }
        _ => None,
    }
}

/// Probe entries come either as a list of `{prompt, ground_truth}` objects or
/// as one object holding parallel `prompt` / `ground_truth` lists.
fn probe_items(
    ctx: &Ctx,
    field: &str,
    kind: ProbeKind,
    v: &Value,
    out: &mut Vec<Probe>,
) -> Result<()> {
    let items: Vec<&Value> = match v {
        Value::Array(items) => items.iter().collect(),
        Value::Object(_) => vec![v],
        Value::Null => return Ok(()),
        _ => return Err(ctx.err(Some(field), "expected a list or object of probes")),
    };
    for item in items {
        let obj = item
            .as_object()
            .ok_or_else(|| ctx.err(Some(field), "probe is not an object"))?;
        let prompts = obj.get("prompt").map(strings).unwrap_or_default();
        if prompts.is_empty() {
            return Err(ctx.missing(&format!("{field}.prompt")));
        }
        let answers = first_present(obj, &["ground_truth", "answer", "target"])
            .ok_or_else(|| ctx.missing(&format!("{field}.ground_truth")))?;
        let answers: Vec<String> = if prompts.len() > 1 {
            match answers {
                Value::Array(a) if a.len() == prompts.len() => {
                    a.iter().filter_map(first_string).collect()
                }
                other => vec![first_string(other).unwrap_or_default(); prompts.len()],
            }
        } else {
            vec![first_string(answers).unwrap_or_default()]
        };
        for (question, target) in prompts.into_iter().zip(answers) {
            out.push(Probe {
                kind,
                question,
                target,
            });
        }
    }
    Ok(())
}

fn knowedit_record(ctx: &Ctx, obj: &Map<String, Value>, names: FieldNames) -> Result<EvalRecord> {
    let edit_question = first_present(obj, names.question)
        .and_then(first_string)
        .ok_or_else(|| ctx.missing(names.question[0]))?;
    let edit_target = first_present(obj, names.target)
        .and_then(first_string)
        .ok_or_else(|| ctx.missing(names.target[0]))?;

    let mut probes = Vec::new();
    if let Some(v) = first_present(obj, names.rephrase) {
        for question in strings(v) {
            probes.push(Probe {
                kind: ProbeKind::Rephrase,
                question,
                target: edit_target.clone(),
            });
        }
    }

    for group in ["locality", "portability"] {
        match obj.get(group) {
            None | Some(Value::Null) => {}
            Some(Value::Object(families)) => {
                for (key, v) in families {
                    let field = format!("{group}.{key}");
                    let kind = probe_kind(group, key).ok_or_else(|| {
                        ctx.err(Some(&field), format!("unknown probe family '{key}'"))
                    })?;
                    probe_items(ctx, &field, kind, v, &mut probes)?;
                }
            }
            Some(_) => return Err(ctx.err(Some(group), format!("'{group}' must be an object"))),
        }
    }

    // MEND-style flat locality fields
    if let (Some(q), Some(a)) = (obj.get("loc").and_then(first_string), obj.get("loc_ans")) {
        let target = first_string(a).ok_or_else(|| ctx.missing("loc_ans"))?;
        probes.push(Probe {
            kind: ProbeKind::LocalityRelationSpecificity,
            question: q,
            target,
        });
    }

    Ok(EvalRecord {
        index: ctx.index,
        edit_question,
        edit_target,
        probes,
    })
}

/// Original CounterFact layout with a `requested_rewrite` block.
fn rome_counterfact_record(ctx: &Ctx, obj: &Map<String, Value>) -> Result<EvalRecord> {
    let rw = obj
        .get("requested_rewrite")
        .and_then(Value::as_object)
        .ok_or_else(|| ctx.missing("requested_rewrite"))?;
    let template = rw
        .get("prompt")
        .and_then(Value::as_str)
        .ok_or_else(|| ctx.missing("requested_rewrite.prompt"))?;
    let subject = rw
        .get("subject")
        .and_then(Value::as_str)
        .ok_or_else(|| ctx.missing("requested_rewrite.subject"))?;
    let edit_target = rw
        .get("target_new")
        .and_then(first_string)
        .ok_or_else(|| ctx.missing("requested_rewrite.target_new"))?;
    let original = rw.get("target_true").and_then(first_string);

    let mut probes = Vec::new();
    if let Some(v) = obj.get("paraphrase_prompts") {
        probes.extend(strings(v).into_iter().map(|question| Probe {
            kind: ProbeKind::Rephrase,
            question,
            target: edit_target.clone(),
        }));
    }
    if let Some(v) = obj.get("neighborhood_prompts") {
        let original = original.ok_or_else(|| ctx.missing("requested_rewrite.target_true"))?;
        probes.extend(strings(v).into_iter().map(|question| Probe {
            kind: ProbeKind::LocalityRelationSpecificity,
            question,
            target: original.clone(),
        }));
    }
    Ok(EvalRecord {
        index: ctx.index,
        edit_question: template.replace("{}", subject),
        edit_target,
        probes,
    })
}
