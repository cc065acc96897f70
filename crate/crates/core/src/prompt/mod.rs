//! Deterministic prompt rendering.
//!
//! Annotation prompts are layered by [`PromptLevel`]: each level appends
//! one tier of guideline content to every category block, so the block at
//! level k always extends the block at level k-1. Adjudication prompts
//! (direct judge, debate turn, debate judge) are rendered per disputed
//! target from external templates with `{slot}` placeholders.

mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use template::Template;

use crate::adjudication::{AgentOutcome, AdjudicationCase, DebateTurn};
use crate::corpus::Transcript;
use crate::taxonomy::{GuidelineSchema, LabelCategory, TargetId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt level must be in 1..=4, got {0}")]
    BadLevel(u8),
    #[error("template `{template}` uses unknown placeholder `{{{slot}}}`")]
    UnknownPlaceholder { template: String, slot: String },
    #[error("template `{template}` slot `{slot}` has no value")]
    MissingSlot { template: String, slot: String },
    #[error("guideline has no {tier} for `{name}` needed at level {level}")]
    MissingTier {
        name: String,
        tier: &'static str,
        level: u8,
    },
    #[error("annotators agree on {0}; nothing to adjudicate")]
    NoDisagreement(TargetId),
    #[error("empty transcript")]
    EmptyTranscript,
    #[error("debate role must be 1 or 2, got {0}")]
    BadRole(u8),
    #[error("debate history has {len} turns; budget is {budget}")]
    TurnBudgetExhausted { len: usize, budget: usize },
    #[error("debate history is empty")]
    EmptyHistory,
    #[error("blank turn")]
    BlankTurn,
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// Prompt complexity: 1 = names, 2 = + definitions, 3 = + rules and key
/// tests, 4 = + few-shot examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PromptLevel(u8);

impl PromptLevel {
    pub const ALL: [PromptLevel; 4] = [PromptLevel(1), PromptLevel(2), PromptLevel(3), PromptLevel(4)];

    pub fn new(level: u8) -> Result<Self, PromptError> {
        if (1..=4).contains(&level) {
            Ok(PromptLevel(level))
        } else {
            Err(PromptError::BadLevel(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn describe(self) -> &'static str {
        match self.0 {
            1 => "Category",
            2 => "Definitions",
            3 => "Rules",
            _ => "Full Prompt",
        }
    }
}

impl TryFrom<u8> for PromptLevel {
    type Error = PromptError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        PromptLevel::new(v)
    }
}

impl From<PromptLevel> for u8 {
    fn from(l: PromptLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for PromptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptKind {
    Annotation { level: PromptLevel },
    DirectJudge { target: TargetId, level: PromptLevel },
    DebateTurn { target: TargetId, level: PromptLevel, role: u8, turn: usize },
    DebateJudge { target: TargetId, level: PromptLevel },
}

/// A rendered prompt and the digest used to key caches and fixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
    pub content_hash: String,
}

impl PromptText {
    pub fn new(text: String, kind: PromptKind) -> Self {
        let text = text.replace("\r\n", "\n");
        let content_hash = sha256_hex(text.as_bytes());
        PromptText {
            text,
            kind,
            content_hash,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const TEMPLATE_FILES: [(&str, &str, &[&str]); 7] = [
    (
        "annotation",
        include_str!("../../templates/annotation.txt"),
        &["guidelines", "transcript"],
    ),
    (
        "direct_judge",
        include_str!("../../templates/direct_judge.txt"),
        &[
            "target_lower",
            "guidelines",
            "text",
            "a_thinking",
            "a_response",
            "a_labels",
            "b_thinking",
            "b_response",
            "b_labels",
        ],
    ),
    (
        "debate_states",
        include_str!("../../templates/debate_states.txt"),
        &[
            "span_title",
            "label_title",
            "a_spans",
            "a_labels",
            "a_thinking",
            "a_response",
            "b_spans",
            "b_labels",
            "b_thinking",
            "b_response",
        ],
    ),
    (
        "debate_turn",
        include_str!("../../templates/debate_turn.txt"),
        &[
            "target_lower",
            "target_title",
            "guidelines",
            "text",
            "annotator_states",
            "conversation_history",
            "current_role_instruction",
        ],
    ),
    (
        "debate_role_1",
        include_str!("../../templates/debate_role_1.txt"),
        &[],
    ),
    (
        "debate_role_2",
        include_str!("../../templates/debate_role_2.txt"),
        &[],
    ),
    (
        "debate_judge",
        include_str!("../../templates/debate_judge.txt"),
        &[
            "target_lower",
            "guidelines",
            "text",
            "annotator_states",
            "conversation_history",
            "a_labels",
            "b_labels",
            "label_field",
        ],
    ),
];

const NOT_PROVIDED: &str = "(not provided)";

/// Loaded template set plus the rendering operations.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    templates: BTreeMap<&'static str, Template>,
}

impl Default for PromptEngine {
    fn default() -> Self {
        let templates = TEMPLATE_FILES
            .iter()
            .map(|(name, text, slots)| {
                (*name, Template::parse(name, text, slots).expect("bundled template parses"))
            })
            .collect();
        PromptEngine { templates }
    }
}

impl PromptEngine {
    /// Load templates from `dir`, falling back to the bundled copy for any
    /// file that is absent (`<name>.txt`).
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for (name, bundled, slots) in TEMPLATE_FILES.iter() {
            let path = dir.join(format!("{name}.txt"));
            let text = if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
            } else {
                (*bundled).to_owned()
            };
            templates.insert(*name, Template::parse(name, &text, slots)?);
        }
        Ok(PromptEngine { templates })
    }

    fn render(&self, name: &str, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        self.templates[name].render(values)
    }

    /// Annotation prompt for one transcript at one complexity level.
    pub fn build_annotation_prompt(
        &self,
        schema: &GuidelineSchema,
        level: PromptLevel,
        transcript: &Transcript,
    ) -> Result<PromptText, PromptError> {
        let guidelines = TargetId::LABELLED
            .iter()
            .map(|&t| render_target_guidelines(schema, t, level))
            .collect::<Result<Vec<_>, _>>()?
            .join("\n\n");
        let values = BTreeMap::from([
            ("guidelines", guidelines),
            ("transcript", transcript.text.clone()),
        ]);
        let text = self.render("annotation", &values)?;
        Ok(PromptText::new(text, PromptKind::Annotation { level }))
    }

    /// Single-pass judge prompt over two disagreeing annotations.
    pub fn build_direct_judge_prompt(
        &self,
        target: TargetId,
        level: PromptLevel,
        transcript: &Transcript,
        a: &AgentOutcome,
        b: &AgentOutcome,
        schema: &GuidelineSchema,
    ) -> Result<PromptText, PromptError> {
        if a.labels == b.labels {
            return Err(PromptError::NoDisagreement(target));
        }
        if transcript.text.trim().is_empty() {
            return Err(PromptError::EmptyTranscript);
        }
        let values = BTreeMap::from([
            ("target_lower", target.title().to_lowercase()),
            ("guidelines", render_target_guidelines(schema, target, level)?),
            ("text", transcript.text.clone()),
            ("a_thinking", thinking_or_default(a)),
            ("a_response", a.answer.trim().to_owned()),
            ("a_labels", a.labels.display(schema, target)),
            ("b_thinking", thinking_or_default(b)),
            ("b_response", b.answer.trim().to_owned()),
            ("b_labels", b.labels.display(schema, target)),
        ]);
        let text = self.render("direct_judge", &values)?;
        Ok(PromptText::new(text, PromptKind::DirectJudge { target, level }))
    }

    /// Prompt for one debate turn by annotator `role` (1 or 2).
    pub fn build_debate_turn_prompt(
        &self,
        role: u8,
        case: &AdjudicationCase,
        history: &[DebateTurn],
        budget: usize,
        schema: &GuidelineSchema,
    ) -> Result<PromptText, PromptError> {
        if !(1..=2).contains(&role) {
            return Err(PromptError::BadRole(role));
        }
        if history.len() >= budget {
            return Err(PromptError::TurnBudgetExhausted {
                len: history.len(),
                budget,
            });
        }
        let target = case.target;
        let conversation = if history.is_empty() {
            String::new()
        } else {
            format!("Discussion so far:\n{}", render_history(history)?)
        };
        let role_text = self.render(&format!("debate_role_{role}"), &BTreeMap::new())?;
        let values = BTreeMap::from([
            ("target_lower", target.title().to_lowercase()),
            ("target_title", target.title().to_owned()),
            ("guidelines", render_target_guidelines(schema, target, case.level)?),
            ("text", case.transcript.text.clone()),
            ("annotator_states", self.annotator_states(case, schema)?),
            ("conversation_history", conversation),
            ("current_role_instruction", role_text),
        ]);
        let text = self.render("debate_turn", &values)?;
        Ok(PromptText::new(
            text,
            PromptKind::DebateTurn {
                target,
                level: case.level,
                role,
                turn: history.len() + 1,
            },
        ))
    }

    /// Final ruling prompt over the whole deliberation.
    pub fn build_debate_judge_prompt(
        &self,
        case: &AdjudicationCase,
        history: &[DebateTurn],
        schema: &GuidelineSchema,
    ) -> Result<PromptText, PromptError> {
        if history.is_empty() {
            return Err(PromptError::EmptyHistory);
        }
        let target = case.target;
        let values = BTreeMap::from([
            ("target_lower", target.title().to_lowercase()),
            ("guidelines", render_target_guidelines(schema, target, case.level)?),
            ("text", case.transcript.text.clone()),
            ("annotator_states", self.annotator_states(case, schema)?),
            ("conversation_history", render_history(history)?),
            ("a_labels", case.outcome_a.labels.display(schema, target)),
            ("b_labels", case.outcome_b.labels.display(schema, target)),
            ("label_field", target.label_field().to_owned()),
        ]);
        let text = self.render("debate_judge", &values)?;
        Ok(PromptText::new(text, PromptKind::DebateJudge { target, level: case.level }))
    }

    fn annotator_states(
        &self,
        case: &AdjudicationCase,
        schema: &GuidelineSchema,
    ) -> Result<String, PromptError> {
        let target = case.target;
        let field_title = |f: &str| {
            let mut s = f.replace('_', " ");
            if let Some(first) = s.get_mut(..1) {
                first.make_ascii_uppercase();
            }
            s
        };
        let (a, b) = (&case.outcome_a, &case.outcome_b);
        let values = BTreeMap::from([
            ("span_title", field_title(target.span_field().unwrap_or("span"))),
            ("label_title", field_title(target.label_field())),
            ("a_spans", a.spans_display()),
            ("a_labels", a.labels.display(schema, target)),
            ("a_thinking", thinking_or_default(a)),
            ("a_response", a.answer.trim().to_owned()),
            ("b_spans", b.spans_display()),
            ("b_labels", b.labels.display(schema, target)),
            ("b_thinking", thinking_or_default(b)),
            ("b_response", b.answer.trim().to_owned()),
        ]);
        self.render("debate_states", &values)
    }
}

fn thinking_or_default(o: &AgentOutcome) -> String {
    match o.thinking.as_deref().map(str::trim) {
        Some(t) if !t.is_empty() => t.to_owned(),
        _ => NOT_PROVIDED.to_owned(),
    }
}

fn render_history(history: &[DebateTurn]) -> Result<String, PromptError> {
    let mut out = String::new();
    for turn in history {
        if turn.text.trim().is_empty() {
            return Err(PromptError::BlankTurn);
        }
        out.push_str(&format!(
            "Round {}, Annotator {}:\n{}\n\n",
            turn.round,
            turn.role,
            turn.text.trim()
        ));
    }
    Ok(out)
}

fn roman(n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "m"),
        (900, "cm"),
        (500, "d"),
        (400, "cd"),
        (100, "c"),
        (90, "xc"),
        (50, "l"),
        (40, "xl"),
        (10, "x"),
        (9, "ix"),
        (5, "v"),
        (4, "iv"),
        (1, "i"),
    ];
    let mut n = n;
    let mut s = String::new();
    for (value, sym) in TABLE {
        while n >= value {
            s.push_str(sym);
            n -= value;
        }
    }
    s
}

/// One numbered category block. The block at level k is the block at
/// level k-1 followed by that level's tier.
pub fn render_category_block(
    index: usize,
    category: &LabelCategory,
    level: PromptLevel,
) -> Result<String, PromptError> {
    let missing = |tier| PromptError::MissingTier {
        name: category.name.clone(),
        tier,
        level: level.get(),
    };
    let mut block = format!("{index}. {}:", category.name);
    if level.get() >= 2 {
        let def = category.definition.trim();
        if def.is_empty() {
            return Err(missing("definition"));
        }
        block.push('\n');
        block.push_str(def);
    }
    if level.get() >= 3 {
        let rules: Vec<&str> = category
            .rules
            .iter()
            .map(|r| r.trim())
            .filter(|r| !r.is_empty())
            .collect();
        if rules.is_empty() {
            return Err(missing("rules"));
        }
        for r in rules {
            block.push('\n');
            block.push_str(r);
        }
    }
    if level.get() >= 4 {
        let examples: Vec<&str> = category
            .examples
            .iter()
            .map(|e| e.trim())
            .filter(|e| !e.is_empty())
            .collect();
        if examples.is_empty() {
            return Err(missing("examples"));
        }
        block.push_str("\nExamples:");
        for (i, e) in examples.iter().enumerate() {
            block.push_str(&format!("\n{}. \"{}\"", roman(i + 1), e));
        }
    }
    Ok(block)
}

/// All category blocks of one target under a heading.
pub fn render_target_guidelines(
    schema: &GuidelineSchema,
    target: TargetId,
    level: PromptLevel,
) -> Result<String, PromptError> {
    let t = schema.target(target);
    let mut out = format!("### {}", target.title());
    for (i, c) in t.categories.iter().enumerate() {
        out.push('\n');
        out.push_str(&render_category_block(i + 1, c, level)?);
    }
    Ok(out)
}
