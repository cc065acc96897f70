//! Offline demonstration run over six synthetic transcripts.
//!
//! A deterministic in-process responder plays three agents. Its answers
//! are first recorded into a fixture file, then the experiment is run
//! again against scripted endpoints with the network disabled, so the
//! reported numbers come from replay alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::config::{RunConfig, Strategy};
use super::{run_experiment, run_experiment_with, Phase, PipelineError, RunOutcome};
use crate::corpus::{GoldAnnotations, GoldEntry, Split};
use crate::gateway::{
    AgentRole, AgentSpec, CompletionRequest, DecodingConfig, FixtureEntry, FixtureFile, GatewayError, RawCompletion,
    RetryPolicy,
};
use crate::labels::LabelSet;
use crate::parser::{AffectiveItem, AnnotationRecord, BehavioralItem, DelusionItem, ParseFormat};
use crate::prompt::{PromptKind, PromptLevel};
use crate::taxonomy::TargetId;

pub const ANNOTATOR_1: &str = "glm";
pub const ANNOTATOR_2: &str = "gptoss";
pub const TIEBREAKER: &str = "qwen";

#[derive(Debug, Clone, Default)]
struct Labels {
    delusion: Vec<&'static str>,
    affect: Vec<&'static str>,
    behavior: Vec<&'static str>,
}

impl Labels {
    fn new(delusion: &[&'static str], affect: &[&'static str], behavior: &[&'static str]) -> Self {
        Labels {
            delusion: delusion.to_vec(),
            affect: affect.to_vec(),
            behavior: behavior.to_vec(),
        }
    }

    fn get(&self, target: TargetId) -> LabelSet {
        match target {
            TargetId::DelusionType => self.delusion.iter().copied().collect(),
            TargetId::AffectiveResponse => self.affect.iter().copied().collect(),
            TargetId::BehavioralResponse => self.behavior.iter().copied().collect(),
            TargetId::AffectiveIntensity => LabelSet::new(),
        }
    }
}

struct Scenario {
    id: &'static str,
    text: &'static str,
    spans: [&'static str; 3],
    gold: Labels,
    /// Level 4 annotations of glm, gptoss, qwen.
    agents: [Labels; 3],
    /// Level 1 replacements, by agent index.
    level1: Vec<(usize, Labels)>,
    /// Agent whose first answer at this level is cut off.
    truncated: Option<(usize, u8)>,
    /// Agent that never produces a parseable answer at this level.
    garbage: Option<(usize, u8)>,
    /// Debate target on which annotator 2 gives in and the judge sides
    /// with annotator 1.
    concession: Option<TargetId>,
    /// Direct-judge target whose verdict has no usable headers.
    garbled_verdict: Option<TargetId>,
}

impl Scenario {
    fn labels(&self, agent: usize, level: u8) -> &Labels {
        if level == 1 {
            if let Some((_, l)) = self.level1.iter().find(|(a, _)| *a == agent) {
                return l;
            }
        }
        &self.agents[agent]
    }
}

fn scenarios() -> Vec<Scenario> {
    let l = Labels::new;
    vec![
        Scenario {
            id: "demo01",
            text: "I think my neighbours have been putting cameras in the hallway to watch me. Every time I leave \
                   the flat I hear their door open a moment later. They are collecting information to use against \
                   me at work. I feel afraid all the time now. I stopped going to the corner shop because they would \
                   follow me there.",
            spans: [
                "They are collecting information to use against me at work",
                "I feel afraid all the time now",
                "I stopped going to the corner shop because they would follow me there",
            ],
            gold: l(&["Persecutory"], &["Fear-Anxiety"], &["Avoidance/Withdrawal"]),
            agents: [
                l(&["Persecutory"], &["Fear-Anxiety"], &["Avoidance/Withdrawal"]),
                l(&["Persecutory"], &["Fear-Anxiety"], &["Avoidance/Withdrawal"]),
                l(&["Persecutory"], &["Fear-Anxiety"], &["Avoidance/Withdrawal"]),
            ],
            level1: vec![(1, l(&["Persecutory", "Reference"], &["Fear-Anxiety"], &["Avoidance/Withdrawal"]))],
            truncated: None,
            garbage: None,
            concession: None,
            garbled_verdict: None,
        },
        Scenario {
            id: "demo02",
            text: "Somebody has been reading my letters before they reach me. The envelopes come already opened and \
                   resealed. I know the people at the sorting office are part of it and they want me gone. I keep \
                   the curtains shut during the day. Today was mostly quiet and I watched television.",
            spans: [
                "I know the people at the sorting office are part of it and they want me gone",
                "they want me gone",
                "I keep the curtains shut during the day",
            ],
            gold: l(&["Persecutory"], &["Fear-Anxiety"], &["Safety-Seeking/Protective Behaviors"]),
            agents: [
                l(&[], &["Fear-Anxiety"], &["Safety-Seeking/Protective Behaviors"]),
                l(&["Persecutory"], &["Fear-Anxiety"], &["Safety-Seeking/Protective Behaviors"]),
                l(&["Persecutory"], &["Fear-Anxiety"], &["Safety-Seeking/Protective Behaviors"]),
            ],
            level1: vec![],
            truncated: None,
            garbage: None,
            concession: Some(TargetId::DelusionType),
            garbled_verdict: None,
        },
        Scenario {
            id: "demo03",
            text: "There is a pressure inside my head that the television is shaping. When the presenter looks into \
                   the camera the pressure moves to my chest. My body feels like it is being changed from the \
                   inside. The weather report yesterday was a message about what happens next. I went for a long \
                   walk to calm down.",
            spans: [
                "The weather report yesterday was a message about what happens next",
                "There is a pressure inside my head",
                "I went for a long walk to calm down",
            ],
            gold: l(&["Reference"], &["Fear-Anxiety"], &["Self-Soothing/Regulation"]),
            agents: [
                l(&["Somatic"], &["Fear-Anxiety"], &["Self-Soothing/Regulation"]),
                l(&["Control"], &["Fear-Anxiety"], &["Self-Soothing/Regulation"]),
                l(&["Reference"], &["Fear-Anxiety"], &["Self-Soothing/Regulation"]),
            ],
            level1: vec![(0, l(&["Somatic"], &["Neutral-None"], &["Self-Soothing/Regulation"]))],
            truncated: None,
            garbage: None,
            concession: None,
            garbled_verdict: None,
        },
        Scenario {
            id: "demo04",
            text: "I had a slow morning and made porridge. My sister called to ask about the weekend. We talked about \
                   her new job for a while. In the afternoon I tidied the kitchen and read a book. I feel settled \
                   today.",
            spans: ["", "I feel settled today", ""],
            gold: l(&[], &["Satisfaction-Contentment"], &[]),
            agents: [
                l(&[], &["Satisfaction-Contentment"], &[]),
                l(&[], &["Satisfaction-Contentment"], &[]),
                l(&[], &["Satisfaction-Contentment"], &[]),
            ],
            level1: vec![(1, l(&["Grandiosity"], &["Satisfaction-Contentment"], &[]))],
            truncated: None,
            garbage: None,
            concession: None,
            garbled_verdict: None,
        },
        Scenario {
            id: "demo05",
            text: "God speaks to me directly and has chosen me to lead the others. I was given a special mission that \
                   nobody else can understand. The church leaders are jealous and want to stop me. I feel excited \
                   and full of energy. I have been handing out notes in the street to tell people.",
            spans: [
                "God speaks to me directly and has chosen me to lead the others",
                "I feel excited and full of energy",
                "I have been handing out notes in the street to tell people",
            ],
            gold: l(&["Grandiosity", "Religious"], &["Euphoria-Excitement"], &["Engagement/Acceptance"]),
            agents: [
                l(&["Grandiosity", "Religious"], &["Euphoria-Excitement"], &["Engagement/Acceptance"]),
                l(&["Religious"], &["Euphoria-Excitement"], &["Risky or Harmful Behaviors"]),
                l(&["Grandiosity", "Religious"], &["Euphoria-Excitement"], &["Engagement/Acceptance"]),
            ],
            level1: vec![],
            truncated: Some((0, 4)),
            garbage: None,
            concession: None,
            garbled_verdict: None,
        },
        Scenario {
            id: "demo06",
            text: "My partner must be seeing someone else because the phone is always face down. I checked the \
                   messages twice this week. I cry most evenings and cannot sleep. I shouted at him when he came \
                   home late. Nothing I do seems to help.",
            spans: [
                "My partner must be seeing someone else because the phone is always face down",
                "I cry most evenings and cannot sleep",
                "I shouted at him when he came home late",
            ],
            gold: l(&["Jealous"], &["Anger-Frustration", "Sadness-Despair"], &["Confrontation/Resistance"]),
            agents: [
                l(&["Jealous"], &["Sadness-Despair"], &["Confrontation/Resistance"]),
                l(&["Jealous"], &["Anger-Frustration", "Sadness-Despair"], &["Confrontation/Resistance"]),
                l(&["Jealous"], &["Anger-Frustration", "Sadness-Despair"], &["Confrontation/Resistance"]),
            ],
            level1: vec![],
            truncated: None,
            garbage: Some((2, 1)),
            concession: None,
            garbled_verdict: Some(TargetId::AffectiveResponse),
        },
    ]
}

fn agent_index(id: &str) -> usize {
    match id {
        ANNOTATOR_1 => 0,
        ANNOTATOR_2 => 1,
        _ => 2,
    }
}

fn record(s: &Scenario, labels: &Labels) -> AnnotationRecord {
    let span = |i: usize| (!s.spans[i].is_empty()).then(|| s.spans[i].to_owned());
    let mut r = AnnotationRecord::empty(ParseFormat::Template);
    r.delusion_items = labels
        .delusion
        .iter()
        .map(|d| DelusionItem {
            delusion_span: span(0),
            delusion_type: d.to_string(),
        })
        .collect();
    r.affective_items = labels
        .affect
        .iter()
        .map(|a| AffectiveItem {
            affective_span: span(1),
            affective_category: a.to_string(),
            affective_intensity: Some("Moderate".into()),
        })
        .collect();
    r.behavioral_items = labels
        .behavior
        .iter()
        .map(|b| BehavioralItem {
            behavioral_span: span(2),
            behavioral_category: b.to_string(),
        })
        .collect();
    r
}

fn names(set: &LabelSet) -> String {
    if set.is_empty() {
        "null".into()
    } else {
        set.iter().cloned().collect::<Vec<_>>().join(", ")
    }
}

fn with_trace(agent: &str, reasoning: String, answer: String) -> RawCompletion {
    match agent {
        ANNOTATOR_1 => RawCompletion {
            content: format!("<think>{reasoning}</think>\n{answer}"),
            prompt_tokens: 900,
            output_tokens: 200,
            ..Default::default()
        },
        TIEBREAKER => RawCompletion {
            content: answer,
            reasoning: Some(reasoning),
            prompt_tokens: 900,
            output_tokens: 200,
            finish_reason: Some("stop".into()),
        },
        _ => RawCompletion {
            content: answer,
            prompt_tokens: 900,
            output_tokens: 120,
            ..Default::default()
        },
    }
}

/// Winner under the responder's rule: whichever annotator matches the
/// reference set, else a combined set equal to the reference.
fn ruling(a: &LabelSet, b: &LabelSet, truth: &LabelSet) -> (u8, LabelSet) {
    if a == truth {
        (1, a.clone())
    } else if b == truth {
        (2, b.clone())
    } else {
        (0, truth.clone())
    }
}

/// Deterministic stand-in for the three models.
fn respond(req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> {
    let all = scenarios();
    let s = all
        .iter()
        .find(|s| req.prompt.text.contains(s.text))
        .ok_or_else(|| GatewayError::BadResponse("prompt names no demo transcript".into()))?;
    let agent = req.agent.id.as_str();
    let idx = agent_index(agent);
    match req.prompt.kind {
        PromptKind::Annotation { level } => {
            let lv = level.get();
            if s.garbage == Some((idx, lv)) {
                return Ok(RawCompletion::text("I am not able to complete this annotation."));
            }
            let answer = record(s, s.labels(idx, lv)).to_template();
            if s.truncated == Some((idx, lv)) && req.max_tokens < 8192 {
                let cut = answer.find("behavioral_").unwrap_or(answer.len());
                return Ok(RawCompletion {
                    content: answer[..cut].to_owned(),
                    finish_reason: Some("length".into()),
                    ..Default::default()
                });
            }
            Ok(with_trace(agent, format!("Reading {} for delusional content.", s.id), answer))
        }
        PromptKind::DirectJudge { target, level } => {
            if s.garbled_verdict == Some(target) {
                return Ok(RawCompletion::text("Both annotators raise fair points and the text is ambiguous."));
            }
            let lv = level.get();
            let (a, b) = (s.labels(0, lv).get(target), s.labels(1, lv).get(target));
            let (winner, labels) = ruling(&a, &b, &s.gold.get(target));
            let w = match winner {
                1 => "Model A",
                2 => "Model B",
                _ => "Combined",
            };
            let answer = format!(
                "WINNER: {w}\nREASONING: The supporting span fits the guideline definition.\nCORRECT_TYPE: {}",
                names(&labels)
            );
            Ok(with_trace(agent, "Comparing both annotations.".into(), answer))
        }
        PromptKind::DebateTurn { target, level, role, turn } => {
            let own = s.labels(usize::from(role - 1), level.get()).get(target);
            let text = if role == 2 && s.concession == Some(target) {
                "Having read Annotator 1's argument again, I withdraw my position and accept their annotation \
                 of null."
                    .to_owned()
            } else {
                format!(
                    "Turn {turn}: I keep my annotation of {} because the quoted span supports it.",
                    names(&own)
                )
            };
            Ok(with_trace(agent, "Weighing the other annotator's view.".into(), text))
        }
        PromptKind::DebateJudge { target, level } => {
            let lv = level.get();
            let (a, b) = (s.labels(0, lv).get(target), s.labels(1, lv).get(target));
            let (winner, labels) = if s.concession == Some(target) {
                (1, a.clone())
            } else {
                ruling(&a, &b, &s.gold.get(target))
            };
            let w = match winner {
                1 => "Annotator 1",
                2 => "Annotator 2",
                _ => "Combined",
            };
            let answer = format!(
                "Winner: {w}\nFinal {}: {}\nReasoning: The discussion settled on this value.",
                target.label_field(),
                names(&labels)
            );
            Ok(with_trace(agent, "Reviewing the discussion.".into(), answer))
        }
    }
}

fn gold() -> GoldAnnotations {
    GoldAnnotations(
        scenarios()
            .iter()
            .map(|s| {
                (
                    s.id.to_owned(),
                    GoldEntry {
                        delusion_type: s.gold.get(TargetId::DelusionType),
                        affective_response: s.gold.get(TargetId::AffectiveResponse),
                        behavioral_response: s.gold.get(TargetId::BehavioralResponse),
                        affective_intensity: None,
                    },
                )
            })
            .collect::<BTreeMap<_, _>>(),
    )
}

fn demo_config(input: &Path, out_dir: PathBuf, endpoint: &str) -> RunConfig {
    let agent = |id: &str, role| AgentSpec::new(id, endpoint, &format!("synthetic-{id}"), role);
    RunConfig {
        guideline: None,
        templates: None,
        corpus_dir: input.join("corpus"),
        gold: Some(input.join("gold.json")),
        dev_ids: Vec::new(),
        split: Split::Eval,
        abbreviations: None,
        agents: vec![
            agent(ANNOTATOR_1, AgentRole::Annotator),
            agent(ANNOTATOR_2, AgentRole::Annotator),
            agent(TIEBREAKER, AgentRole::Tiebreaker),
        ],
        levels: vec![PromptLevel::new(1).expect("valid"), PromptLevel::new(4).expect("valid")],
        strategies: Strategy::ALL.to_vec(),
        decoding: DecodingConfig::default(),
        retry: RetryPolicy {
            max_attempts: 1,
            base_delay_ms: 0,
        },
        debate_rounds: 2,
        concurrency: 4,
        request_timeout_secs: 60,
        offline: true,
        out_dir,
        cache_dir: None,
        include_intensity: false,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Write the synthetic corpus and gold labels into `input`.
pub fn write_inputs(input: &Path) -> Result<(), PipelineError> {
    let corpus = input.join("corpus");
    std::fs::create_dir_all(&corpus).map_err(io_err(&corpus))?;
    for s in scenarios() {
        let text: String = s.text.split_whitespace().collect::<Vec<_>>().join(" ");
        let path = corpus.join(format!("{}.txt", s.id));
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    let path = input.join("gold.json");
    let json = serde_json::to_string_pretty(&gold()).expect("gold serializes") + "\n";
    std::fs::write(&path, json).map_err(io_err(&path))
}

/// Run the synthetic responder once through the pipeline and capture
/// every exchange as a scripted fixture.
pub fn record_fixtures(input: &Path, scratch: &Path) -> Result<FixtureFile, PipelineError> {
    let recorded: Arc<Mutex<Vec<FixtureEntry>>> = Arc::default();
    let sink = recorded.clone();
    let live = Arc::new(move |req: &CompletionRequest<'_>| -> Result<RawCompletion, GatewayError> {
        let response = respond(req)?;
        sink.lock().expect("recorder lock").push(FixtureEntry {
            agent_id: req.agent.id.clone(),
            prompt_hash: req.prompt.content_hash.clone(),
            max_tokens: Some(req.max_tokens),
            response: response.clone(),
        });
        Ok(response)
    });
    let mut cfg = demo_config(input, scratch.to_owned(), "http://synthetic.invalid");
    cfg.offline = false;
    cfg.cache_dir = Some(scratch.join("cache"));
    run_experiment_with(&cfg, Phase::Evaluate, Some(live))?;
    let mut entries = std::mem::take(&mut *recorded.lock().expect("recorder lock"));
    entries.sort_by(|a, b| (&a.agent_id, &a.prompt_hash, a.max_tokens).cmp(&(&b.agent_id, &b.prompt_hash, b.max_tokens)));
    entries.dedup();
    Ok(FixtureFile { entries })
}

/// Build inputs and fixtures under `out/input`, then replay the whole
/// experiment offline into `out/run`.
pub fn run_demo(out: &Path) -> Result<RunOutcome, PipelineError> {
    let input = out.join("input");
    write_inputs(&input)?;
    let scratch = out.join("recording");
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
    }
    let fixtures = record_fixtures(&input, &scratch)?;
    std::fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
    let fixture_path = input.join("fixtures.json");
    fixtures.save(&fixture_path).map_err(io_err(&fixture_path))?;

    let endpoint = format!("scripted:{}", fixture_path.display());
    let cfg = demo_config(&input, out.join("run"), &endpoint);
    let cfg_path = input.join("demo.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
    run_experiment(&cfg, Phase::Evaluate)
}
