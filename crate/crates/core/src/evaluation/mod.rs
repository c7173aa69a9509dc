//! Sequential knowledge-updating protocol and four-dimension scoring.
//!
//! Edits are written to memory one at a time; once all `T` updates are in,
//! every edited prompt and probe of the first `T` records is answered through
//! the full pipeline and scored with relaxed exact match. Locality compares
//! against generations captured from the untouched model before the first
//! update (behavioral mode) or against the original-world answer
//! (ground-truth mode). Both are always computed; the configured mode feeds
//! the headline locality score.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    BackendError, BackendFingerprint, Embedder, EmbeddingRequest, GenerationRequest, Generator,
};
use crate::datasets::{to_statement, Dataset, Dimension, EvalRecord, ProbeKind};
use crate::error::{Error, Result, Stage};
use crate::memory::KnowledgeStore;
use crate::reasoning::{answer_query, AnswerConfig};
use crate::retrieval;

pub use metrics::{behavioral_match, extract_answer, relaxed_em};
pub use report::{read_report, render_csv, render_table, write_report, ReportFormat};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalityMode {
    #[default]
    Behavioral,
    GroundTruth,
}

impl FromStr for LocalityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "behavioral" => Ok(Self::Behavioral),
            "ground_truth" => Ok(Self::GroundTruth),
            other => Err(Error::Parameter(format!("unknown locality mode '{other}'"))),
        }
    }
}

impl fmt::Display for LocalityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalityMode::Behavioral => "behavioral",
            LocalityMode::GroundTruth => "ground_truth",
        })
    }
}

/// What an outcome measured: the edited prompt itself or one of its probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OutcomeKind {
    Reliability,
    Probe(ProbeKind),
}

impl OutcomeKind {
    pub fn dimension(self) -> Dimension {
        match self {
            OutcomeKind::Reliability => Dimension::Reliability,
            OutcomeKind::Probe(k) => k.dimension(),
        }
    }
}

impl From<OutcomeKind> for String {
    fn from(k: OutcomeKind) -> String {
        match k {
            OutcomeKind::Reliability => "reliability".into(),
            OutcomeKind::Probe(p) => serde_json::to_value(p)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        }
    }
}

impl TryFrom<String> for OutcomeKind {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "reliability" {
            return Ok(OutcomeKind::Reliability);
        }
        serde_json::from_value(serde_json::Value::String(s.clone()))
            .map(OutcomeKind::Probe)
            .map_err(|_| format!("unknown outcome kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityHits {
    pub behavioral: bool,
    pub ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub record_index: usize,
    pub probe_kind: OutcomeKind,
    pub question: String,
    pub target: String,
    pub generated: String,
    pub pre_edit_generated: Option<String>,
    pub used_fact: Option<usize>,
    /// Hit under the dimension's rule (and the configured locality mode).
    pub hit: bool,
    pub locality_hits: Option<LocalityHits>,
}

/// Identifies one probe of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbeKey {
    pub record: usize,
    pub probe: usize,
}

/// Pre-update generations for locality probes.
pub type PreEditOutputs = BTreeMap<ProbeKey, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub answer: AnswerConfig,
    pub num_updates: usize,
    pub locality_mode: LocalityMode,
    /// Upper bound on concurrently evaluated probes; 1 keeps calls in order.
    pub parallelism: usize,
    /// Also score the records seen so far after every this many updates.
    pub checkpoint_every: Option<usize>,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(num_updates: usize) -> Self {
        Self {
            answer: AnswerConfig::default(),
            num_updates,
            locality_mode: LocalityMode::Behavioral,
            parallelism: 1,
            checkpoint_every: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub hits: usize,
    pub total: usize,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.hits += usize::from(hit);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub reliability: Tally,
    pub generalization: Tally,
    pub locality: Tally,
    pub portability: Tally,
}

impl Tallies {
    pub fn get(&self, dim: Dimension) -> Tally {
        match dim {
            Dimension::Reliability => self.reliability,
            Dimension::Generalization => self.generalization,
            Dimension::Locality => self.locality,
            Dimension::Portability => self.portability,
        }
    }

    fn get_mut(&mut self, dim: Dimension) -> &mut Tally {
        match dim {
            Dimension::Reliability => &mut self.reliability,
            Dimension::Generalization => &mut self.generalization,
            Dimension::Locality => &mut self.locality,
            Dimension::Portability => &mut self.portability,
        }
    }
}

/// Percentage of hits. A dimension with no probes scores 100 for locality
/// (nothing was disturbed) and 0 otherwise.
pub fn percent(t: Tally, dim: Dimension) -> f64 {
    if t.total == 0 {
        return if dim == Dimension::Locality {
            100.0
        } else {
            0.0
        };
    }
    100.0 * t.hits as f64 / t.total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub portability: f64,
    pub average: f64,
}

impl Scores {
    pub fn from_parts(
        reliability: f64,
        generalization: f64,
        locality: f64,
        portability: f64,
    ) -> Self {
        Self {
            reliability,
            generalization,
            locality,
            portability,
            average: (reliability + generalization + locality + portability) / 4.0,
        }
    }

    fn from_tallies(t: &Tallies) -> Self {
        Self::from_parts(
            percent(t.reliability, Dimension::Reliability),
            percent(t.generalization, Dimension::Generalization),
            percent(t.locality, Dimension::Locality),
            percent(t.portability, Dimension::Portability),
        )
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Reliability => self.reliability,
            Dimension::Generalization => self.generalization,
            Dimension::Locality => self.locality,
            Dimension::Portability => self.portability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub updates: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub method: String,
    pub dataset: String,
    pub num_updates: usize,
    pub k: usize,
    pub max_new_tokens: usize,
    pub confirm_max_new_tokens: usize,
    pub overlap_threshold: f64,
    pub locality_mode: LocalityMode,
    pub generator: BackendFingerprint,
    pub embedder: Option<BackendFingerprint>,
    pub seed: u64,
}

impl ReportConfig {
    /// Hex SHA-256 of the config's JSON form.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub config: ReportConfig,
    pub fingerprint: String,
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub portability: f64,
    pub average: f64,
    pub locality_mode: LocalityMode,
    pub locality_behavioral: f64,
    pub locality_ground_truth: f64,
    pub tallies: Tallies,
    pub memory_size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
    pub outcomes: Vec<EvalOutcome>,
}

impl DimensionReport {
    pub fn scores(&self) -> Scores {
        Scores {
            reliability: self.reliability,
            generalization: self.generalization,
            locality: self.locality,
            portability: self.portability,
            average: self.average,
        }
    }

    fn build(config: ReportConfig, memory_size: usize, outcomes: Vec<EvalOutcome>) -> Self {
        let (tallies, behavioral, ground_truth) = tally(&outcomes);
        let scores = Scores::from_tallies(&tallies);
        Self {
            fingerprint: config.fingerprint(),
            locality_mode: config.locality_mode,
            config,
            reliability: scores.reliability,
            generalization: scores.generalization,
            locality: scores.locality,
            portability: scores.portability,
            average: scores.average,
            locality_behavioral: percent(behavioral, Dimension::Locality),
            locality_ground_truth: percent(ground_truth, Dimension::Locality),
            tallies,
            memory_size,
            checkpoints: Vec::new(),
            outcomes,
        }
    }
}

fn tally(outcomes: &[EvalOutcome]) -> (Tallies, Tally, Tally) {
    let mut t = Tallies::default();
    let mut behavioral = Tally::default();
    let mut ground_truth = Tally::default();
    for o in outcomes {
        t.get_mut(o.probe_kind.dimension()).add(o.hit);
        if let Some(l) = o.locality_hits {
            behavioral.add(l.behavioral);
            ground_truth.add(l.ground_truth);
        }
    }
    (t, behavioral, ground_truth)
}

/// Greedy bare-question generations for every locality probe, taken from the
/// model before any update.
pub fn capture_pre_edit<G: Generator + ?Sized>(
    records: &[EvalRecord],
    gen: &G,
    max_new_tokens: usize,
) -> Result<PreEditOutputs> {
    let mut out = PreEditOutputs::new();
    for r in records {
        for (i, p) in r.probes.iter().enumerate() {
            if !p.kind.is_locality() {
                continue;
            }
            let text = gen
                .generate(&GenerationRequest::greedy(
                    p.question.clone(),
                    max_new_tokens,
                ))
                .map_err(|e| {
                    Error::Backend(BackendError {
                        message: format!(
                            "pre-edit capture, record {} probe {i}: {}",
                            r.index, e.message
                        ),
                        ..e
                    })
                })?;
            out.insert(
                ProbeKey {
                    record: r.index,
                    probe: i,
                },
                text,
            );
        }
    }
    Ok(out)
}

struct Job<'a> {
    record: &'a EvalRecord,
    probe: Option<usize>,
}

impl Job<'_> {
    fn kind(&self) -> OutcomeKind {
        match self.probe {
            None => OutcomeKind::Reliability,
            Some(i) => OutcomeKind::Probe(self.record.probes[i].kind),
        }
    }

    fn question_and_target(&self) -> (&str, &str) {
        match self.probe {
            None => (&self.record.edit_question, &self.record.edit_target),
            Some(i) => {
                let p = &self.record.probes[i];
                (&p.question, &p.target)
            }
        }
    }
}

fn jobs(records: &[EvalRecord]) -> Vec<Job<'_>> {
    records
        .iter()
        .flat_map(|r| {
            std::iter::once(Job {
                record: r,
                probe: None,
            })
            .chain((0..r.probes.len()).map(move |i| Job {
                record: r,
                probe: Some(i),
            }))
        })
        .collect()
}

fn score_job<G, E>(
    job: &Job<'_>,
    store: &KnowledgeStore,
    pre: &PreEditOutputs,
    gen: &G,
    emb: &E,
    cfg: &ProtocolConfig,
) -> Result<EvalOutcome>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    let (question, target) = job.question_and_target();
    let trace = answer_query(question, store, gen, emb, &cfg.answer)?;
    let generated = trace.answer_text;
    let kind = job.kind();

    let (hit, pre_edit_generated, locality_hits) = if kind.dimension() == Dimension::Locality {
        let key = ProbeKey {
            record: job.record.index,
            probe: job.probe.unwrap_or_default(),
        };
        let pre_text = pre.get(&key).cloned().ok_or_else(|| {
            Error::Parameter(format!(
                "no pre-edit output for record {} probe {}",
                key.record, key.probe
            ))
        })?;
        let hits = LocalityHits {
            behavioral: behavioral_match(&pre_text, &generated),
            ground_truth: relaxed_em(target, &generated),
        };
        let hit = match cfg.locality_mode {
            LocalityMode::Behavioral => hits.behavioral,
            LocalityMode::GroundTruth => hits.ground_truth,
        };
        (hit, Some(pre_text), Some(hits))
    } else {
        (relaxed_em(target, &generated), None, None)
    };

    Ok(EvalOutcome {
        record_index: job.record.index,
        probe_kind: kind,
        question: question.to_string(),
        target: target.to_string(),
        generated,
        pre_edit_generated,
        used_fact: trace.used_fact,
        hit,
        locality_hits,
    })
}

/// Scores every job; on failure returns the error together with the
/// outcomes that did complete.
fn score_all<G, E>(
    records: &[EvalRecord],
    store: &KnowledgeStore,
    pre: &PreEditOutputs,
    gen: &G,
    emb: &E,
    cfg: &ProtocolConfig,
) -> std::result::Result<Vec<EvalOutcome>, (Error, Vec<EvalOutcome>)>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    let jobs = jobs(records);
    if cfg.parallelism <= 1 {
        let mut done = Vec::with_capacity(jobs.len());
        for job in &jobs {
            match score_job(job, store, pre, gen, emb, cfg) {
                Ok(o) => done.push(o),
                Err(e) => return Err((e, done)),
            }
        }
        return Ok(done);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| (Error::Parameter(format!("thread pool: {e}")), Vec::new()))?;
    let results: Vec<Result<EvalOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| score_job(job, store, pre, gen, emb, cfg))
            .collect()
    });
    let mut done = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => done.push(o),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    match first_err {
        Some(e) => Err((e, done)),
        None => Ok(done),
    }
}

fn abort(source: Error, partial: Vec<EvalOutcome>) -> Error {
    Error::Aborted {
        source: Box::new(source),
        partial,
    }
}

/// Result of a sequential run: the report plus the memory it built.
#[derive(Debug, Clone)]
pub struct SequentialRun {
    pub report: DimensionReport,
    pub store: KnowledgeStore,
}

fn report_config<G, E>(
    method: &str,
    dataset: &Dataset,
    gen: &G,
    emb: Option<&E>,
    cfg: &ProtocolConfig,
) -> ReportConfig
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    ReportConfig {
        method: method.into(),
        dataset: dataset.name.clone(),
        num_updates: cfg.num_updates,
        k: cfg.answer.k,
        max_new_tokens: cfg.answer.max_new_tokens,
        confirm_max_new_tokens: cfg.answer.confirm.max_new_tokens,
        overlap_threshold: cfg.answer.confirm.overlap_threshold,
        locality_mode: cfg.locality_mode,
        generator: gen.fingerprint(),
        embedder: emb.map(|e| e.fingerprint()),
        seed: cfg.seed,
    }
}

fn check_updates(dataset: &Dataset, cfg: &ProtocolConfig) -> Result<()> {
    cfg.answer.validate()?;
    if cfg.num_updates < 1 || cfg.num_updates > dataset.len() {
        return Err(Error::Parameter(format!(
            "number of updates {} outside 1..={}",
            cfg.num_updates,
            dataset.len()
        )));
    }
    if cfg.checkpoint_every == Some(0) {
        return Err(Error::Parameter("checkpoint interval must be >= 1".into()));
    }
    Ok(())
}

/// Runs the sequential protocol over the first `cfg.num_updates` records.
pub fn run_sequential_protocol<G, E>(
    dataset: &Dataset,
    gen: &G,
    emb: &E,
    cfg: &ProtocolConfig,
) -> Result<SequentialRun>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    check_updates(dataset, cfg)?;
    let records = &dataset.records[..cfg.num_updates];

    let pre = capture_pre_edit(records, gen, cfg.answer.max_new_tokens)
        .map_err(|e| abort(e, Vec::new()))?;

    let mut store: Option<KnowledgeStore> = None;
    let mut checkpoints = Vec::new();
    for (t, record) in records.iter().enumerate() {
        let round = t as u64 + 1;
        let statement = to_statement(record);
        let embedding = emb
            .embed(&EmbeddingRequest::new(statement.as_str()))
            .map_err(|e| Error::at_stage(Stage::Embed, e.into()))
            .and_then(|v| retrieval::normalize(&v).map_err(|e| Error::at_stage(Stage::Embed, e)))
            .map_err(|e| abort(e, Vec::new()))?;
        let memory = store.get_or_insert_with(|| {
            KnowledgeStore::new(embedding.len(), emb.fingerprint().to_string())
        });
        memory
            .add_entry(
                statement,
                embedding,
                round,
                Some(format!("{}:{}", dataset.name, record.index)),
            )
            .map_err(|e| abort(e, Vec::new()))?;

        let seen = t + 1;
        if cfg.checkpoint_every.is_some_and(|n| seen % n == 0) && seen < records.len() {
            let outcomes = score_all(&records[..seen], memory, &pre, gen, emb, cfg)
                .map_err(|(e, partial)| abort(e, partial))?;
            let (tallies, _, _) = tally(&outcomes);
            checkpoints.push(Checkpoint {
                updates: seen,
                scores: Scores::from_tallies(&tallies),
            });
        }
    }
    let store = store.expect("at least one update");

    let outcomes = score_all(records, &store, &pre, gen, emb, cfg)
        .map_err(|(e, partial)| abort(e, partial))?;
    let config = report_config("SCR", dataset, gen, Some(emb), cfg);
    let mut report = DimensionReport::build(config, store.len(), outcomes);
    report.checkpoints = checkpoints;
    Ok(SequentialRun { report, store })
}

struct NoEmbedder;

impl Embedder for NoEmbedder {
    fn embed(&self, _: &EmbeddingRequest) -> std::result::Result<Vec<f64>, BackendError> {
        Err(BackendError::invalid(
            "none",
            "no embedder for an empty memory",
        ))
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint {
            name: "none".into(),
            dim: 0,
            endpoint: "none".into(),
        }
    }
}

/// Scores the untouched model: every question is asked bare and locality is
/// compared against a capture from the same model.
pub fn run_pre_edit_baseline<G: Generator + ?Sized>(
    dataset: &Dataset,
    gen: &G,
    cfg: &ProtocolConfig,
) -> Result<DimensionReport> {
    check_updates(dataset, cfg)?;
    let records = &dataset.records[..cfg.num_updates];
    let pre = capture_pre_edit(records, gen, cfg.answer.max_new_tokens)
        .map_err(|e| abort(e, Vec::new()))?;
    let empty = KnowledgeStore::new(0, "none");
    let outcomes = score_all(records, &empty, &pre, gen, &NoEmbedder, cfg)
        .map_err(|(e, partial)| abort(e, partial))?;
    let config = report_config::<G, NoEmbedder>("Pre-edit", dataset, gen, None, cfg);
    Ok(DimensionReport::build(config, 0, outcomes))
}

/// One sequential run per `k`, everything else fixed.
pub fn sweep_top_k<G, E>(
    dataset: &Dataset,
    gen: &G,
    emb: &E,
    base: &ProtocolConfig,
    ks: &[usize],
) -> Result<Vec<DimensionReport>>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    ks.iter()
        .map(|&k| {
            let mut cfg = base.clone();
            cfg.answer.k = k;
            run_sequential_protocol(dataset, gen, emb, &cfg).map(|r| r.report)
        })
        .collect()
}

/// One sequential run per update count, everything else fixed.
pub fn sweep_num_updates<G, E>(
    dataset: &Dataset,
    gen: &G,
    emb: &E,
    base: &ProtocolConfig,
    counts: &[usize],
) -> Result<Vec<DimensionReport>>
where
    G: Generator + ?Sized,
    E: Embedder + ?Sized,
{
    counts
        .iter()
        .map(|&t| {
            let mut cfg = base.clone();
            cfg.num_updates = t;
            run_sequential_protocol(dataset, gen, emb, &cfg).map(|r| r.report)
        })
        .collect()
}
