#![allow(dead_code)]

//! Brute-force reference implementations and fixtures shared by the
//! integration tests. The oracles work on plain `BTreeSet<String>` maps and
//! never touch the library's indicator matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use clinannot::gateway::{
    AgentSpec, CompletionRequest, FixtureEntry, FixtureFile, GatewayError, RawCompletion,
};
use clinannot::labels::LabelSet;
use clinannot::metrics::LabelCorpus;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Sets = BTreeMap<String, BTreeSet<String>>;

pub fn to_sets(c: &LabelCorpus) -> Sets {
    c.iter()
        .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
        .collect()
}

pub fn to_corpus(s: &Sets) -> LabelCorpus {
    s.iter()
        .map(|(k, v)| (k.clone(), v.iter().cloned().collect::<LabelSet>()))
        .collect()
}

/// Columns: the given space plus every label that occurs, in space order
/// then sorted extras.
pub fn oracle_columns(space: &[String], a: &Sets, b: &Sets) -> Vec<String> {
    let mut cols = space.to_vec();
    let extras: BTreeSet<&String> = a
        .values()
        .chain(b.values())
        .flatten()
        .filter(|l| !space.contains(l))
        .collect();
    cols.extend(extras.into_iter().cloned());
    cols
}

pub struct OracleCounts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

/// Set-difference counting summed over transcripts.
pub fn oracle_counts(gold: &Sets, pred: &Sets) -> OracleCounts {
    let mut c = OracleCounts {
        tp: 0.0,
        fp: 0.0,
        fn_: 0.0,
    };
    for (id, g) in gold {
        let p = &pred[id];
        c.tp += g.intersection(p).count() as f64;
        c.fp += p.difference(g).count() as f64;
        c.fn_ += g.difference(p).count() as f64;
    }
    c
}

pub fn oracle_prf(gold: &Sets, pred: &Sets) -> (f64, f64, f64) {
    let c = oracle_counts(gold, pred);
    let p = if c.tp + c.fp == 0.0 { 0.0 } else { c.tp / (c.tp + c.fp) };
    let r = if c.tp + c.fn_ == 0.0 { 0.0 } else { c.tp / (c.tp + c.fn_) };
    let denom = 2.0 * c.tp + c.fp + c.fn_;
    let f = if c.tp == 0.0 { 0.0 } else { 2.0 * c.tp / denom };
    (p, r, f)
}

pub fn oracle_example_f1(gold: &Sets, pred: &Sets) -> f64 {
    let mut total = 0.0;
    for (id, g) in gold {
        let p = &pred[id];
        let union: BTreeSet<_> = g.union(p).collect();
        total += if union.is_empty() {
            1.0
        } else {
            2.0 * g.intersection(p).count() as f64 / (g.len() + p.len()) as f64
        };
    }
    total / gold.len() as f64
}

/// Kappa from a 2x2 table via 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d)).
/// `None` when both raters are constant and equal.
pub fn oracle_kappa(x: &[bool], y: &[bool]) -> Option<f64> {
    let (mut a, mut b, mut c, mut d) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&p, &q) in x.iter().zip(y) {
        match (p, q) {
            (true, true) => a += 1.0,
            (true, false) => b += 1.0,
            (false, true) => c += 1.0,
            (false, false) => d += 1.0,
        }
    }
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        None
    } else {
        Some(2.0 * (a * d - b * c) / denom)
    }
}

fn column(s: &Sets, label: &str) -> Vec<bool> {
    s.values().map(|set| set.contains(label)).collect()
}

fn constant(v: &[bool]) -> bool {
    v.iter().all(|&x| x) || v.iter().all(|&x| !x)
}

pub fn oracle_micro_kappa(a: &Sets, b: &Sets, cols: &[String]) -> f64 {
    let x: Vec<bool> = cols.iter().flat_map(|l| column(a, l)).collect();
    let y: Vec<bool> = cols.iter().flat_map(|l| column(b, l)).collect();
    oracle_kappa(&x, &y).unwrap_or(1.0)
}

/// Mean over columns where at least one rater varies.
pub fn oracle_macro_kappa(a: &Sets, b: &Sets, cols: &[String]) -> Option<f64> {
    let vals: Vec<f64> = cols
        .iter()
        .filter_map(|l| {
            let (x, y) = (column(a, l), column(b, l));
            if constant(&x) && constant(&y) {
                None
            } else {
                oracle_kappa(&x, &y)
            }
        })
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn oracle_exact_agreement(a: &Sets, b: &Sets) -> f64 {
    a.iter().filter(|(id, s)| b[*id] == **s).count() as f64 / a.len() as f64
}

/// Random aligned pair of corpora with up to `max_docs` transcripts over
/// up to `max_labels` labels, plus a declared space that may omit some.
pub fn random_pair(rng: &mut StdRng, max_docs: usize, max_labels: usize) -> (Vec<String>, Sets, Sets) {
    let n_docs = rng.random_range(1..=max_docs);
    let n_labels = rng.random_range(1..=max_labels);
    let labels: Vec<String> = (0..n_labels).map(|i| format!("L{i}")).collect();
    let density: f64 = rng.random_range(0.05..0.9);
    let draw = |rng: &mut StdRng| -> BTreeSet<String> {
        labels.iter().filter(|_| rng.random_bool(density)).cloned().collect()
    };
    let mut a = Sets::new();
    let mut b = Sets::new();
    for i in 0..n_docs {
        let id = format!("t{i:02}");
        let sa = draw(rng);
        let sb = if rng.random_bool(0.3) { sa.clone() } else { draw(rng) };
        a.insert(id.clone(), sa);
        b.insert(id, sb);
    }
    let space: Vec<String> = labels.iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
    (space, a, b)
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Per-label 2-of-3 count, with the tiebreaker's set when the count is
/// empty, every set differs and something was proposed.
pub fn oracle_majority(sets: [&BTreeSet<String>; 3], tiebreaker: usize) -> (BTreeSet<String>, bool) {
    let universe: BTreeSet<&String> = sets.iter().flat_map(|s| s.iter()).collect();
    let majority: BTreeSet<String> = universe
        .into_iter()
        .filter(|l| sets.iter().filter(|s| s.contains(*l)).count() >= 2)
        .cloned()
        .collect();
    let distinct = sets[0] != sets[1] && sets[1] != sets[2] && sets[0] != sets[2];
    let any = sets.iter().any(|s| !s.is_empty());
    if majority.is_empty() && distinct && any {
        (sets[tiebreaker].clone(), true)
    } else {
        (majority, false)
    }
}

/// Records every request made through a closure backend and turns the
/// log into a fixture file for scripted replay.
#[derive(Clone, Default)]
pub struct Recorder {
    pub log: Arc<Mutex<Vec<FixtureEntry>>>,
}

impl Recorder {
    pub fn record(&self, req: &CompletionRequest<'_>, response: RawCompletion) -> Result<RawCompletion, GatewayError> {
        self.log.lock().unwrap().push(FixtureEntry {
            agent_id: req.agent.id.clone(),
            prompt_hash: req.prompt.content_hash.clone(),
            max_tokens: Some(req.max_tokens),
            response: response.clone(),
        });
        Ok(response)
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn fixtures(&self) -> FixtureFile {
        FixtureFile {
            entries: self.log.lock().unwrap().clone(),
        }
    }
}

/// Same agent, pointed at a fixture file.
pub fn scripted(agent: &AgentSpec, path: &std::path::Path) -> AgentSpec {
    let mut a = agent.clone();
    a.endpoint = clinannot::gateway::Endpoint::Scripted(path.to_owned());
    a
}

pub const WATCHED: &str = "I haven't been sleeping much. I keep seeing the same grey car outside my building. \
I think my neighbors are keeping track of when I leave. My sister says I'm overthinking it.";

pub const NULL_ANSWER: &str = "delusion_span: null\ndelusion_type: null\naffective_span: null\naffective_category: null\n\
affective_intensity: null\nbehavioral_span: null\nbehavioral_category: null";

pub fn persecutory_answer() -> String {
    NULL_ANSWER.replacen(
        "delusion_span: null\ndelusion_type: null",
        "delusion_span: \"I think my neighbors are keeping track of when I leave\"\ndelusion_type: Persecutory",
        1,
    )
}

fn outcome(agent: &str, answer: &str, thinking: &str) -> clinannot::adjudication::AgentOutcome {
    let schema = clinannot::taxonomy::GuidelineSchema::bundled();
    let mut record = clinannot::parser::parse_annotation(answer, &schema).unwrap();
    record.source_agent = agent.to_owned();
    clinannot::adjudication::AgentOutcome::new(
        clinannot::taxonomy::TargetId::DelusionType,
        record,
        Some(thinking.to_owned()),
        answer.to_owned(),
    )
}

/// Annotator 1 (glm) says no delusion; annotator 2 (gptoss) and the
/// tiebreaker (qwen) say Persecutory.
pub fn watched_case(level: u8) -> clinannot::adjudication::AdjudicationCase {
    clinannot::adjudication::AdjudicationCase::new(
        clinannot::corpus::Transcript::new("watched", WATCHED),
        clinannot::taxonomy::TargetId::DelusionType,
        clinannot::prompt::PromptLevel::new(level).unwrap(),
        outcome("glm", NULL_ANSWER, "A parked car is not evidence of a fixed belief."),
        outcome(
            "gptoss",
            &persecutory_answer(),
            "The neighbors tracking when the speaker leaves is a surveillance belief.",
        ),
        Some(outcome("qwen", &persecutory_answer(), "Monitoring by neighbors, persecutory.")),
    )
    .unwrap()
}

pub fn panel() -> (AgentSpec, AgentSpec, AgentSpec) {
    use clinannot::gateway::AgentRole;
    (
        AgentSpec::new("glm", "http://glm.invalid", "synthetic-glm", AgentRole::Annotator),
        AgentSpec::new("gptoss", "http://gptoss.invalid", "synthetic-gptoss", AgentRole::Annotator),
        AgentSpec::new("qwen", "http://qwen.invalid", "synthetic-qwen", AgentRole::Tiebreaker),
    )
}

/// Debate where annotator 2 abandons its correct Persecutory label and the
/// judge sides with annotator 1's empty set.
pub fn concession_reply(req: &CompletionRequest<'_>) -> RawCompletion {
    use clinannot::prompt::PromptKind;
    let text = match req.prompt.kind {
        PromptKind::DebateTurn { role: 1, turn: 1, .. } => {
            "I defend null. The speaker hedges with \"I think\" and reports a sibling disagreeing, which points to doubt rather than a fixed belief."
        }
        PromptKind::DebateTurn { role: 2, turn: 2, .. } => {
            "I concede to Annotator 1. The hedged wording means the conviction is not established, so null is acceptable."
        }
        PromptKind::DebateTurn { role: 1, .. } => "We now agree the delusion type is null.",
        PromptKind::DebateTurn { role: 2, .. } => "Agreed, null.",
        PromptKind::DebateJudge { .. } => {
            "Winner: Annotator 1\nFinal delusion_type: null\nReasoning: Both annotators settled on null after discussion."
        }
        _ => panic!("unexpected prompt kind {:?}", req.prompt.kind),
    };
    RawCompletion::text(text)
}
