//! Run orchestration: ingest, annotate every transcript with every
//! annotating agent at every level, adjudicate disagreements per
//! strategy, score against gold, and persist everything under the run
//! directory (`manifest.json`, `raw/`, `parsed/`, `resolved/`,
//! `reports/`).

pub mod config;
pub mod demo;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::{info, warn};

pub use config::{ConfigError, Panel, RunConfig, Strategy};
pub use report::{emit_report, render_tables, RunReport};

use crate::adjudication::{
    compose_corpus, run_majority, AdjudicationError, Adjudicator, AgentOutcome, ComposedCase, PairedOutcome,
};
use crate::corpus::{ingest_corpus, split_corpus, CorpusError, Excluded, SentenceCounter, Transcript};
use crate::gateway::{
    AgentResponse, AgentSpec, AnnotateError, Annotated, Backend, Gateway, GatewayError, HttpBackend, ResponseCache,
};
use crate::parser::parse_annotation;
use crate::prompt::{sha256_hex, PromptEngine, PromptError, PromptLevel};
use crate::taxonomy::{GuidelineSchema, TargetId, TaxonomyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Adjudication(#[from] AdjudicationError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
}

/// Which phases to run; later phases imply the earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Annotate,
    Adjudicate,
    Evaluate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub transcripts_ingested: usize,
    pub transcripts_excluded: usize,
    pub transcripts_in_split: usize,
    /// Archived raw responses; equals the number of files under `raw/`.
    pub calls: u64,
    pub requests: u64,
    pub cache_hits: u64,
    pub dispatches: u64,
    pub fallbacks: u64,
    pub parse_failures: u64,
    pub gateway_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub config_digest: String,
    pub guideline_version: String,
    pub models: BTreeMap<String, String>,
    pub split: crate::corpus::Split,
    pub dev_ids: Vec<String>,
    pub levels: Vec<PromptLevel>,
    pub strategies: Vec<Strategy>,
    pub started_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
    pub counts: RunCounts,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes JSON artifacts under the run directory.
pub struct Archive {
    root: PathBuf,
    raw_files: AtomicU64,
}

impl Archive {
    pub fn new(root: &Path) -> Self {
        Archive {
            root: root.to_owned(),
            raw_files: AtomicU64::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(io)
    }

    pub fn write_raw(&self, rel: &str, response: &AgentResponse) -> Result<(), PipelineError> {
        self.write_json(&format!("raw/{rel}"), response)?;
        self.raw_files.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn raw_count(&self) -> u64 {
        self.raw_files.load(Ordering::Relaxed)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub report: Option<RunReport>,
}

/// One annotation job's result.
#[derive(Debug, Clone)]
pub(crate) enum AnnotationSlot {
    Ok(Box<Annotated>),
    Unparseable,
    Failed,
}

/// Annotations and resolutions of one level, kept for reporting.
#[derive(Debug, Clone)]
pub struct LevelResults {
    pub level: PromptLevel,
    /// Transcripts every annotating agent annotated successfully.
    pub evaluated: Vec<String>,
    /// Transcripts dropped from this level because an annotation failed.
    pub excluded: Vec<String>,
    /// Agent id → target → transcript → labels.
    pub annotations: BTreeMap<String, BTreeMap<TargetId, crate::metrics::LabelCorpus>>,
    /// Strategy → target → composed cases.
    pub resolutions: BTreeMap<Strategy, BTreeMap<TargetId, Vec<ComposedCase>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyTallies {
    pub cases: u64,
    pub tiebreaks: u64,
    pub verdict_parse_failures: u64,
    pub judge_call_failures: u64,
    pub consistency_violations: u64,
    pub debates_aborted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub fallbacks: u64,
    pub parse_failures: u64,
    pub gateway_failures: u64,
    pub strategies: BTreeMap<String, StrategyTallies>,
}

pub fn run_experiment(config: &RunConfig, phase: Phase) -> Result<RunOutcome, PipelineError> {
    run_experiment_with(config, phase, None)
}

/// As [`run_experiment`], with an optional in-process live backend in
/// place of HTTP.
pub fn run_experiment_with(
    config: &RunConfig,
    phase: Phase,
    live: Option<Arc<dyn Backend>>,
) -> Result<RunOutcome, PipelineError> {
    let config = config.clone().normalized();
    let panel = config.validate()?;
    let schema = match &config.guideline {
        Some(p) => GuidelineSchema::from_path(p)?,
        None => GuidelineSchema::bundled(),
    };
    let engine = match &config.templates {
        Some(dir) => PromptEngine::from_dir(dir)?,
        None => PromptEngine::default(),
    };
    let counter = match &config.abbreviations {
        Some(a) => SentenceCounter { abbreviations: a.clone() },
        None => SentenceCounter::default(),
    };
    let mut corpus = ingest_corpus(&config.corpus_dir, config.gold.as_deref(), &schema, &counter)?;
    split_corpus(&mut corpus.transcripts, &config.dev_ids)?;
    let transcripts: Vec<Transcript> = corpus
        .transcripts
        .iter()
        .filter(|t| t.split == config.split)
        .cloned()
        .collect();

    let live = match live {
        Some(b) => b,
        None => Arc::new(HttpBackend::new(Duration::from_secs(config.request_timeout_secs))?),
    };
    let gateway = Gateway::new(live, &config.agents)?
        .with_cache(ResponseCache::open(config.cache_dir()).map_err(|source| PipelineError::Io {
            path: config.cache_dir(),
            source,
        })?)
        .offline(config.offline)
        .with_retry(config.retry.clone());

    let archive = Archive::new(&config.out_dir);
    let mut manifest = RunManifest {
        status: "running".into(),
        config_digest: sha256_hex(config.to_toml().as_bytes()),
        guideline_version: schema.version.clone(),
        models: config.agents.iter().map(|a| (a.id.clone(), a.model_name.clone())).collect(),
        split: config.split,
        dev_ids: config.dev_ids.clone(),
        levels: config.levels.clone(),
        strategies: config.strategies.clone(),
        started_at: now_secs(),
        finished_at: None,
        counts: RunCounts {
            transcripts_ingested: corpus.transcripts.len() + corpus.excluded.len(),
            transcripts_excluded: corpus.excluded.len(),
            transcripts_in_split: transcripts.len(),
            ..Default::default()
        },
    };
    archive.write_json("manifest.json", &manifest)?;
    archive.write_json("corpus_exclusions.json", &corpus.excluded)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .expect("thread pool");

    let mut tallies = Tallies::default();
    let slots = pool.install(|| annotate_all(&config, &panel, &schema, &engine, &gateway, &archive, &transcripts))?;
    let mut levels = Vec::new();
    for &level in &config.levels {
        levels.push(collect_level(level, &panel, &transcripts, &slots, &mut tallies, config.include_intensity));
    }

    if phase != Phase::Annotate {
        let adj = Adjudicator {
            gateway: &gateway,
            engine: &engine,
            schema: &schema,
            cfg: &config.decoding,
        };
        for lr in &mut levels {
            for &strategy in &config.strategies {
                let by_target = pool.install(|| {
                    adjudicate_level(&config, &panel, &adj, &archive, &transcripts, &slots, lr, strategy)
                })?;
                let t = tallies.strategies.entry(strategy.to_string()).or_default();
                for cases in by_target.values() {
                    for c in cases.iter().filter(|c| !c.agreement) {
                        let f = &c.resolved.flags;
                        t.cases += 1;
                        t.tiebreaks += u64::from(f.tiebreak_used);
                        t.verdict_parse_failures += u64::from(f.verdict_parse_failure);
                        t.judge_call_failures += u64::from(f.judge_call_failed);
                        t.consistency_violations += u64::from(f.consistency_violation);
                        t.debates_aborted += u64::from(f.debate_aborted);
                    }
                }
                lr.resolutions.insert(strategy, by_target);
            }
        }
    }

    let report = if phase == Phase::Evaluate {
        let report = report::build_report(
            &config,
            &panel,
            &schema,
            corpus.gold.as_ref(),
            &corpus.excluded,
            &levels,
            &tallies,
        )?;
        archive.write_json("reports/metrics.json", &report)?;
        let text = render_tables(&report);
        let path = archive.root().join("reports/tables.txt");
        std::fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })?;
        Some(report)
    } else {
        None
    };

    let stats = gateway.stats();
    manifest.status = "complete".into();
    manifest.finished_at = Some(now_secs());
    manifest.counts.calls = archive.raw_count();
    manifest.counts.requests = stats.requests;
    manifest.counts.cache_hits = stats.cache_hits;
    manifest.counts.dispatches = stats.dispatches;
    manifest.counts.fallbacks = tallies.fallbacks;
    manifest.counts.parse_failures = tallies.parse_failures;
    manifest.counts.gateway_failures = tallies.gateway_failures;
    archive.write_json("manifest.json", &manifest)?;
    info!(run_dir = %config.out_dir.display(), calls = manifest.counts.calls, "run complete");
    Ok(RunOutcome {
        run_dir: config.out_dir.clone(),
        manifest,
        report,
    })
}

type SlotKey = (PromptLevel, String, String);

fn annotate_all(
    config: &RunConfig,
    panel: &Panel,
    schema: &GuidelineSchema,
    engine: &PromptEngine,
    gateway: &Gateway,
    archive: &Archive,
    transcripts: &[Transcript],
) -> Result<BTreeMap<SlotKey, AnnotationSlot>, PipelineError> {
    let mut jobs = Vec::new();
    for &level in &config.levels {
        for t in transcripts {
            for agent in panel.annotating() {
                jobs.push((level, t, agent));
            }
        }
    }
    let results: Vec<(SlotKey, AnnotationSlot)> = jobs
        .into_par_iter()
        .map(|(level, t, agent)| -> Result<_, PipelineError> {
            let prompt = engine.build_annotation_prompt(schema, level, t)?;
            let dir = format!("annotate/{level}/{}/{}", agent.id, t.id);
            let slot = match gateway.annotate_with_fallback(agent, &prompt, &config.decoding, |answer| {
                parse_annotation(answer, schema)
            }) {
                Ok(a) => {
                    match &a.first_attempt {
                        Some(first) => {
                            archive.write_raw(&format!("{dir}.attempt1.json"), first)?;
                            archive.write_raw(&format!("{dir}.attempt2.json"), &a.response)?;
                        }
                        None => archive.write_raw(&format!("{dir}.attempt1.json"), &a.response)?,
                    }
                    archive.write_json(
                        &format!("parsed/{level}/{}/{}.json", agent.id, t.id),
                        &json!({
                            "source_agent": a.record.source_agent,
                            "parse_format": a.record.parse_format,
                            "used_fallback": a.response.used_fallback,
                            "annotation": a.record.to_answer_json(),
                            "unmatched_spans": a.record.unmatched_spans(&t.text),
                        }),
                    )?;
                    AnnotationSlot::Ok(Box::new(a))
                }
                Err(AnnotateError::Unparseable(u)) => {
                    warn!(agent = %agent.id, transcript = %t.id, %level, "annotation unparseable after fallback");
                    archive.write_raw(&format!("{dir}.attempt1.json"), &u.first)?;
                    archive.write_raw(&format!("{dir}.attempt2.json"), &u.second)?;
                    AnnotationSlot::Unparseable
                }
                Err(AnnotateError::Gateway(e)) if e.is_fatal() => return Err(e.into()),
                Err(AnnotateError::Gateway(e)) => {
                    warn!(agent = %agent.id, transcript = %t.id, %level, error = %e, "annotation call failed");
                    archive.write_json(
                        &format!("failures/annotate/{level}/{}/{}.json", agent.id, t.id),
                        &json!({"error": e.to_string()}),
                    )?;
                    AnnotationSlot::Failed
                }
            };
            Ok(((level, agent.id.clone(), t.id.clone()), slot))
        })
        .collect::<Result<_, _>>()?;
    Ok(results.into_iter().collect())
}

fn targets(include_intensity: bool) -> Vec<TargetId> {
    let mut t = TargetId::LABELLED.to_vec();
    if include_intensity {
        t.push(TargetId::AffectiveIntensity);
    }
    t
}

fn collect_level(
    level: PromptLevel,
    panel: &Panel,
    transcripts: &[Transcript],
    slots: &BTreeMap<SlotKey, AnnotationSlot>,
    tallies: &mut Tallies,
    include_intensity: bool,
) -> LevelResults {
    let mut evaluated = Vec::new();
    let mut excluded = Vec::new();
    let mut annotations: BTreeMap<String, BTreeMap<TargetId, crate::metrics::LabelCorpus>> = BTreeMap::new();
    for t in transcripts {
        let mut ok = true;
        for agent in panel.annotating() {
            match &slots[&(level, agent.id.clone(), t.id.clone())] {
                AnnotationSlot::Ok(a) => tallies.fallbacks += u64::from(a.response.used_fallback),
                AnnotationSlot::Unparseable => {
                    tallies.fallbacks += 1;
                    tallies.parse_failures += 1;
                    ok = false;
                }
                AnnotationSlot::Failed => {
                    tallies.gateway_failures += 1;
                    ok = false;
                }
            }
        }
        if !ok {
            excluded.push(t.id.clone());
            continue;
        }
        evaluated.push(t.id.clone());
        for agent in panel.annotating() {
            let AnnotationSlot::Ok(a) = &slots[&(level, agent.id.clone(), t.id.clone())] else {
                unreachable!("checked above")
            };
            for target in targets(include_intensity) {
                annotations
                    .entry(agent.id.clone())
                    .or_default()
                    .entry(target)
                    .or_default()
                    .insert(t.id.clone(), a.record.labels(target));
            }
        }
    }
    LevelResults {
        level,
        evaluated,
        excluded,
        annotations,
        resolutions: BTreeMap::new(),
    }
}

fn outcome(slot: &AnnotationSlot, target: TargetId) -> AgentOutcome {
    let AnnotationSlot::Ok(a) = slot else {
        unreachable!("only evaluated transcripts are adjudicated")
    };
    AgentOutcome::new(target, a.record.clone(), a.response.thinking.clone(), a.response.answer.clone())
}

#[allow(clippy::too_many_arguments)]
fn adjudicate_level(
    config: &RunConfig,
    panel: &Panel,
    adj: &Adjudicator<'_>,
    archive: &Archive,
    transcripts: &[Transcript],
    slots: &BTreeMap<SlotKey, AnnotationSlot>,
    lr: &LevelResults,
    strategy: Strategy,
) -> Result<BTreeMap<TargetId, Vec<ComposedCase>>, PipelineError> {
    let level = lr.level;
    let evaluated: BTreeSet<&String> = lr.evaluated.iter().collect();
    let slot = |agent: &AgentSpec, t: &Transcript| &slots[&(level, agent.id.clone(), t.id.clone())];
    let mut out = BTreeMap::new();
    for target in TargetId::LABELLED {
        let items: Vec<PairedOutcome> = transcripts
            .iter()
            .filter(|t| evaluated.contains(&t.id))
            .map(|t| PairedOutcome {
                transcript: t.clone(),
                target,
                level,
                outcome_a: outcome(slot(&panel.annotator_a, t), target),
                outcome_b: outcome(slot(&panel.annotator_b, t), target),
                tiebreaker_outcome: panel.tiebreaker.as_ref().map(|tb| outcome(slot(tb, t), target)),
            })
            .collect();
        let cases = compose_corpus(items, |case| match strategy {
            Strategy::Majority => run_majority(case),
            Strategy::DirectJudge => adj.run_direct(case, panel.judge.as_ref().expect("validated")),
            Strategy::Debate => adj.run_debate(
                case,
                (&panel.annotator_a, &panel.annotator_b),
                panel.judge.as_ref().expect("validated"),
                config.debate_rounds,
            ),
        })?;
        for c in &cases {
            for m in &c.resolved.provenance.messages {
                let step = m.step.replace(' ', "-");
                archive.write_raw(
                    &format!("{strategy}/{level}/{}/{}.{step}.json", target.as_str(), c.transcript_id),
                    &m.response,
                )?;
            }
        }
        archive.write_json(&format!("resolved/{level}/{strategy}/{}.json", target.as_str()), &cases)?;
        out.insert(target, cases);
    }
    Ok(out)
}

pub(crate) fn excluded_ids(excluded: &[Excluded]) -> Vec<String> {
    excluded.iter().map(|e| e.id.clone()).collect()
}
