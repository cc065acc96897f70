//! Disagreement resolution: indicator majority vote with a tiebreaker,
//! a single-pass judge, and a bounded two-annotator debate followed by a
//! judge ruling. [`compose_corpus`] keeps exact-set consensus and sends
//! only disagreements to a resolver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::corpus::Transcript;
use crate::gateway::{AgentResponse, AgentSpec, DecodingConfig, Gateway, GatewayError};
use crate::labels::LabelSet;
use crate::parser::{parse_debate_verdict, parse_direct_verdict, AnnotationRecord, DebateVerdict, JudgeVerdict, JudgeWinner};
use crate::prompt::{PromptEngine, PromptError, PromptLevel};
use crate::taxonomy::{GuidelineSchema, TargetId};

#[derive(Debug, Error)]
pub enum AdjudicationError {
    #[error("majority vote needs exactly 3 votes, got {0}")]
    VoteCount(usize),
    #[error("tiebreaker `{0}` is not one of the voters")]
    UnknownTiebreaker(String),
    #[error("duplicate voter `{0}`")]
    DuplicateVoter(String),
    #[error("case has no tiebreaker annotation")]
    MissingTiebreaker,
    #[error("annotators agree; no case to adjudicate")]
    NoDisagreement,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One agent's labels for one target of one transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent_id: String,
    pub target: TargetId,
    pub labels: LabelSet,
    pub record: AnnotationRecord,
    pub thinking: Option<String>,
    pub answer: String,
}

impl AgentOutcome {
    pub fn new(target: TargetId, record: AnnotationRecord, thinking: Option<String>, answer: String) -> Self {
        AgentOutcome {
            agent_id: record.source_agent.clone(),
            target,
            labels: record.labels(target),
            record,
            thinking,
            answer,
        }
    }

    /// Outcome built from a bare label set, for tests and synthetic runs.
    pub fn from_labels(agent_id: &str, target: TargetId, labels: LabelSet) -> Self {
        let mut record = AnnotationRecord::empty(crate::parser::ParseFormat::Template);
        record.source_agent = agent_id.to_owned();
        AgentOutcome {
            agent_id: agent_id.to_owned(),
            target,
            labels,
            record,
            thinking: None,
            answer: String::new(),
        }
    }

    /// Quoted spans for the target, comma separated, or `null`.
    pub fn spans_display(&self) -> String {
        let spans: Vec<String> = self
            .record
            .spans(self.target)
            .into_iter()
            .flatten()
            .map(|s| format!("\"{s}\""))
            .collect();
        if spans.is_empty() {
            "null".to_owned()
        } else {
            spans.join(", ")
        }
    }
}

/// A disputed target on one transcript. Exists only when the two primary
/// annotators' label sets differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationCase {
    pub transcript: Transcript,
    pub target: TargetId,
    pub level: PromptLevel,
    pub outcome_a: AgentOutcome,
    pub outcome_b: AgentOutcome,
    pub tiebreaker_outcome: Option<AgentOutcome>,
}

impl AdjudicationCase {
    pub fn new(
        transcript: Transcript,
        target: TargetId,
        level: PromptLevel,
        outcome_a: AgentOutcome,
        outcome_b: AgentOutcome,
        tiebreaker_outcome: Option<AgentOutcome>,
    ) -> Result<Self, AdjudicationError> {
        if outcome_a.labels == outcome_b.labels {
            return Err(AdjudicationError::NoDisagreement);
        }
        Ok(AdjudicationCase {
            transcript,
            target,
            level,
            outcome_a,
            outcome_b,
            tiebreaker_outcome,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTurn {
    pub round: usize,
    pub role: u8,
    pub agent_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Consensus,
    Majority,
    DirectJudge,
    Debate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionFlags {
    pub tiebreak_used: bool,
    pub fallback_used: bool,
    pub verdict_parse_failure: bool,
    pub judge_call_failed: bool,
    pub consistency_violation: bool,
    pub debate_aborted: bool,
}

impl ResolutionFlags {
    pub fn any(&self) -> bool {
        *self != ResolutionFlags::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub agent_id: String,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedVerdict {
    Direct(JudgeVerdict),
    Debate(DebateVerdict),
}

/// One model exchange made while resolving a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub step: String,
    pub agent_id: String,
    pub response: AgentResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub votes: Vec<Vote>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turns: Vec<DebateTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ParsedVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedLabels {
    pub labels: LabelSet,
    pub method: Method,
    pub flags: ResolutionFlags,
    pub provenance: Provenance,
}

impl ResolvedLabels {
    pub fn consensus(labels: LabelSet) -> Self {
        ResolvedLabels {
            labels,
            method: Method::Consensus,
            flags: ResolutionFlags::default(),
            provenance: Provenance::default(),
        }
    }
}

/// Per-label 2-of-3 vote. When no label reaches a majority, the three
/// sets are pairwise distinct, and at least one is non-empty, the
/// tiebreaker's full set is returned instead.
pub fn majority_vote(votes: &[Vote], tiebreaker_id: &str) -> Result<ResolvedLabels, AdjudicationError> {
    if votes.len() != 3 {
        return Err(AdjudicationError::VoteCount(votes.len()));
    }
    for (i, v) in votes.iter().enumerate() {
        if votes[..i].iter().any(|w| w.agent_id == v.agent_id) {
            return Err(AdjudicationError::DuplicateVoter(v.agent_id.clone()));
        }
    }
    let tiebreaker = votes
        .iter()
        .find(|v| v.agent_id == tiebreaker_id)
        .ok_or_else(|| AdjudicationError::UnknownTiebreaker(tiebreaker_id.to_owned()))?;

    let all: LabelSet = votes.iter().fold(LabelSet::new(), |acc, v| acc.union(&v.labels));
    let majority: LabelSet = all
        .iter()
        .filter(|l| votes.iter().filter(|v| v.labels.contains(l)).count() >= 2)
        .cloned()
        .collect();
    let pairwise_distinct =
        votes[0].labels != votes[1].labels && votes[0].labels != votes[2].labels && votes[1].labels != votes[2].labels;
    let tiebreak = majority.is_empty() && pairwise_distinct && !all.is_empty();
    Ok(ResolvedLabels {
        labels: if tiebreak { tiebreaker.labels.clone() } else { majority },
        method: Method::Majority,
        flags: ResolutionFlags {
            tiebreak_used: tiebreak,
            ..Default::default()
        },
        provenance: Provenance {
            votes: votes.to_vec(),
            ..Default::default()
        },
    })
}

/// Shared handles for model-backed resolution.
#[derive(Clone, Copy)]
pub struct Adjudicator<'a> {
    pub gateway: &'a Gateway,
    pub engine: &'a PromptEngine,
    pub schema: &'a GuidelineSchema,
    pub cfg: &'a DecodingConfig,
}

fn majority_of_case(case: &AdjudicationCase) -> Result<ResolvedLabels, AdjudicationError> {
    let t = case.tiebreaker_outcome.as_ref().ok_or(AdjudicationError::MissingTiebreaker)?;
    let votes = [&case.outcome_a, &case.outcome_b, t].map(|o| Vote {
        agent_id: o.agent_id.clone(),
        labels: o.labels.clone(),
    });
    majority_vote(&votes, &t.agent_id)
}

/// Majority resolution of a disputed case using the tiebreaker's
/// independent annotation as the third vote.
pub fn run_majority(case: &AdjudicationCase) -> Result<ResolvedLabels, AdjudicationError> {
    majority_of_case(case)
}

/// Labels used when a judge gives no usable ruling: the judge's own
/// annotation when it annotated this transcript, else annotator A's.
fn judge_fallback(case: &AdjudicationCase, judge: &AgentSpec) -> LabelSet {
    match &case.tiebreaker_outcome {
        Some(t) if t.agent_id == judge.id => t.labels.clone(),
        _ => case.outcome_a.labels.clone(),
    }
}

fn contain(err: GatewayError) -> Result<GatewayError, AdjudicationError> {
    if err.is_fatal() {
        Err(AdjudicationError::Gateway(err))
    } else {
        Ok(err)
    }
}

impl<'a> Adjudicator<'a> {
    /// One judge call over both annotations; a named winner keeps that
    /// annotator's original set, `Combined` takes the corrected labels.
    pub fn run_direct(&self, case: &AdjudicationCase, judge: &AgentSpec) -> Result<ResolvedLabels, AdjudicationError> {
        let prompt = self.engine.build_direct_judge_prompt(
            case.target,
            case.level,
            &case.transcript,
            &case.outcome_a,
            &case.outcome_b,
            self.schema,
        )?;
        let mut provenance = Provenance::default();
        let mut flags = ResolutionFlags::default();
        let response = match self.gateway.complete(judge, &prompt, self.cfg) {
            Ok(r) => r,
            Err(e) => {
                let e = contain(e)?;
                warn!(transcript = %case.transcript.id, error = %e, "judge call failed");
                flags.judge_call_failed = true;
                flags.fallback_used = true;
                provenance.error = Some(e.to_string());
                return Ok(ResolvedLabels {
                    labels: judge_fallback(case, judge),
                    method: Method::DirectJudge,
                    flags,
                    provenance,
                });
            }
        };
        provenance.messages.push(Message {
            step: "judge".into(),
            agent_id: judge.id.clone(),
            response: response.clone(),
        });
        let labels = match parse_direct_verdict(&response.answer, case.target, self.schema) {
            Ok(v) => {
                let labels = match v.winner {
                    JudgeWinner::ModelA => case.outcome_a.labels.clone(),
                    JudgeWinner::ModelB => case.outcome_b.labels.clone(),
                    JudgeWinner::Combined => v.corrected_labels.clone(),
                };
                provenance.verdict = Some(ParsedVerdict::Direct(v));
                labels
            }
            Err(e) => {
                flags.verdict_parse_failure = true;
                flags.fallback_used = true;
                provenance.error = Some(e.to_string());
                judge_fallback(case, judge)
            }
        };
        Ok(ResolvedLabels {
            labels,
            method: Method::DirectJudge,
            flags,
            provenance,
        })
    }

    /// `rounds` rounds of alternating turns (annotator 1 then 2), then one
    /// judge ruling: 2·rounds + 1 calls when nothing fails.
    pub fn run_debate(
        &self,
        case: &AdjudicationCase,
        speakers: (&AgentSpec, &AgentSpec),
        judge: &AgentSpec,
        rounds: usize,
    ) -> Result<ResolvedLabels, AdjudicationError> {
        let budget = 2 * rounds.max(1);
        let mut provenance = Provenance::default();
        let mut history: Vec<DebateTurn> = Vec::with_capacity(budget);
        for round in 1..=rounds.max(1) {
            for (role, agent) in [(1u8, speakers.0), (2u8, speakers.1)] {
                let prompt = self
                    .engine
                    .build_debate_turn_prompt(role, case, &history, budget, self.schema)?;
                match self.gateway.complete(agent, &prompt, self.cfg) {
                    Ok(r) => {
                        history.push(DebateTurn {
                            round,
                            role,
                            agent_id: agent.id.clone(),
                            text: r.answer.trim().to_owned(),
                        });
                        provenance.messages.push(Message {
                            step: format!("turn {round}.{role}"),
                            agent_id: agent.id.clone(),
                            response: r,
                        });
                    }
                    Err(e) => {
                        let e = contain(e)?;
                        return self.abort_debate(case, judge, provenance, history, e);
                    }
                }
            }
        }
        let prompt = self.engine.build_debate_judge_prompt(case, &history, self.schema)?;
        provenance.turns = history;
        let mut flags = ResolutionFlags::default();
        let response = match self.gateway.complete(judge, &prompt, self.cfg) {
            Ok(r) => r,
            Err(e) => {
                let e = contain(e)?;
                flags.judge_call_failed = true;
                flags.fallback_used = true;
                provenance.error = Some(e.to_string());
                return Ok(ResolvedLabels {
                    labels: judge_fallback(case, judge),
                    method: Method::Debate,
                    flags,
                    provenance,
                });
            }
        };
        provenance.messages.push(Message {
            step: "judge".into(),
            agent_id: judge.id.clone(),
            response: response.clone(),
        });
        let labels = match parse_debate_verdict(&response.answer, case.target, self.schema) {
            Ok(v) => {
                let res = v.resolve(&case.outcome_a.labels, &case.outcome_b.labels);
                flags.consistency_violation = res.consistency_violation;
                provenance.verdict = Some(ParsedVerdict::Debate(v));
                res.labels
            }
            Err(e) => {
                flags.verdict_parse_failure = true;
                flags.fallback_used = true;
                provenance.error = Some(e.to_string());
                judge_fallback(case, judge)
            }
        };
        Ok(ResolvedLabels {
            labels,
            method: Method::Debate,
            flags,
            provenance,
        })
    }

    fn abort_debate(
        &self,
        case: &AdjudicationCase,
        judge: &AgentSpec,
        mut provenance: Provenance,
        history: Vec<DebateTurn>,
        err: GatewayError,
    ) -> Result<ResolvedLabels, AdjudicationError> {
        warn!(transcript = %case.transcript.id, error = %err, "debate aborted");
        provenance.turns = history;
        provenance.error = Some(err.to_string());
        let (labels, tiebreak) = match majority_of_case(case) {
            Ok(m) => {
                provenance.votes = m.provenance.votes;
                (m.labels, m.flags.tiebreak_used)
            }
            Err(_) => (judge_fallback(case, judge), false),
        };
        Ok(ResolvedLabels {
            labels,
            method: Method::Debate,
            flags: ResolutionFlags {
                debate_aborted: true,
                fallback_used: true,
                tiebreak_used: tiebreak,
                ..Default::default()
            },
            provenance,
        })
    }
}

/// Both primary annotators' outcomes (and the tiebreaker's) for one
/// transcript and target.
#[derive(Debug, Clone)]
pub struct PairedOutcome {
    pub transcript: Transcript,
    pub target: TargetId,
    pub level: PromptLevel,
    pub outcome_a: AgentOutcome,
    pub outcome_b: AgentOutcome,
    pub tiebreaker_outcome: Option<AgentOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedCase {
    pub transcript_id: String,
    pub agreement: bool,
    pub resolved: ResolvedLabels,
}

/// Keep exact-set consensus; resolve every disagreement with `resolver`.
/// Output order follows input order; the `agreement` field is the
/// partition used for stratified reporting.
pub fn compose_corpus<F>(items: Vec<PairedOutcome>, resolver: F) -> Result<Vec<ComposedCase>, AdjudicationError>
where
    F: Fn(&AdjudicationCase) -> Result<ResolvedLabels, AdjudicationError> + Sync,
{
    items
        .into_par_iter()
        .map(|p| {
            let id = p.transcript.id.clone();
            if p.outcome_a.labels == p.outcome_b.labels {
                return Ok(ComposedCase {
                    transcript_id: id,
                    agreement: true,
                    resolved: ResolvedLabels::consensus(p.outcome_a.labels),
                });
            }
            let case = AdjudicationCase::new(
                p.transcript,
                p.target,
                p.level,
                p.outcome_a,
                p.outcome_b,
                p.tiebreaker_outcome,
            )?;
            Ok(ComposedCase {
                transcript_id: id,
                agreement: false,
                resolved: resolver(&case)?,
            })
        })
        .collect()
}
