//! Parsing of annotator and judge outputs.
//!
//! Annotations arrive either as the key-value response template
//! (`delusion_span: "..."` / `delusion_type: ...` pairs followed by the
//! affective and behavioral fields) or as a JSON object using the same
//! field names. Both forms produce the same [`AnnotationRecord`]. Judge
//! outputs use header lines (`WINNER:`, `CORRECT_TYPE:`, `Winner:`,
//! `Final delusion_type:`) that may be decorated with markdown.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::labels::LabelSet;
use crate::taxonomy::{is_absent_token, GuidelineSchema, TargetId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no recognizable annotation fields")]
    NoFields,
    #[error("incomplete annotation: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictParseFailure {
    #[error("verdict has no usable winner line")]
    MissingWinner,
    #[error("verdict has no label line")]
    MissingLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFormat {
    Template,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelusionItem {
    pub delusion_span: Option<String>,
    pub delusion_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectiveItem {
    pub affective_span: Option<String>,
    pub affective_category: String,
    pub affective_intensity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehavioralItem {
    pub behavioral_span: Option<String>,
    pub behavioral_category: String,
}

/// One agent's parsed annotation of one transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub delusion_items: Vec<DelusionItem>,
    pub affective_items: Vec<AffectiveItem>,
    pub behavioral_items: Vec<BehavioralItem>,
    pub source_agent: String,
    pub parse_format: ParseFormat,
}

fn dedup<T: PartialEq>(items: &mut Vec<T>) {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for it in items.drain(..) {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    *items = out;
}

impl AnnotationRecord {
    pub fn empty(format: ParseFormat) -> Self {
        AnnotationRecord {
            delusion_items: Vec::new(),
            affective_items: Vec::new(),
            behavioral_items: Vec::new(),
            source_agent: String::new(),
            parse_format: format,
        }
    }

    /// Collapse duplicate items, keeping first occurrences in order.
    pub fn normalize(&mut self) {
        dedup(&mut self.delusion_items);
        dedup(&mut self.affective_items);
        dedup(&mut self.behavioral_items);
    }

    /// True when both records carry the same items, ignoring provenance.
    pub fn same_items(&self, other: &AnnotationRecord) -> bool {
        self.delusion_items == other.delusion_items
            && self.affective_items == other.affective_items
            && self.behavioral_items == other.behavioral_items
    }

    /// The label set this record assigns to `target`.
    pub fn labels(&self, target: TargetId) -> LabelSet {
        match target {
            TargetId::DelusionType => self.delusion_items.iter().map(|i| i.delusion_type.clone()).collect(),
            TargetId::AffectiveResponse => self
                .affective_items
                .iter()
                .map(|i| i.affective_category.clone())
                .collect(),
            TargetId::BehavioralResponse => self
                .behavioral_items
                .iter()
                .map(|i| i.behavioral_category.clone())
                .collect(),
            TargetId::AffectiveIntensity => self
                .affective_items
                .iter()
                .filter_map(|i| i.affective_intensity.clone())
                .collect(),
        }
    }

    /// Evidence spans recorded for `target`, in order.
    pub fn spans(&self, target: TargetId) -> Vec<Option<&str>> {
        match target {
            TargetId::DelusionType => self.delusion_items.iter().map(|i| i.delusion_span.as_deref()).collect(),
            TargetId::AffectiveResponse | TargetId::AffectiveIntensity => self
                .affective_items
                .iter()
                .map(|i| i.affective_span.as_deref())
                .collect(),
            TargetId::BehavioralResponse => self
                .behavioral_items
                .iter()
                .map(|i| i.behavioral_span.as_deref())
                .collect(),
        }
    }

    /// Spans that do not occur verbatim in `transcript`. Reported, never fatal.
    pub fn unmatched_spans(&self, transcript: &str) -> Vec<String> {
        let mut out: Vec<String> = TargetId::LABELLED
            .iter()
            .flat_map(|&t| self.spans(t))
            .flatten()
            .filter(|s| !transcript.contains(*s))
            .map(str::to_owned)
            .collect();
        out.dedup();
        out
    }

    /// Render in the key-value response template.
    pub fn to_template(&self) -> String {
        fn span(s: &Option<String>) -> String {
            match s {
                Some(s) => format!("\"{s}\""),
                None => "null".to_owned(),
            }
        }
        let mut out = String::new();
        if self.delusion_items.is_empty() {
            out.push_str("delusion_span: null\ndelusion_type: null\n");
        }
        for i in &self.delusion_items {
            out.push_str(&format!(
                "delusion_span: {}\ndelusion_type: {}\n",
                span(&i.delusion_span),
                i.delusion_type
            ));
        }
        if self.affective_items.is_empty() {
            out.push_str("affective_span: null\naffective_category: null\naffective_intensity: null\n");
        }
        for i in &self.affective_items {
            out.push_str(&format!(
                "affective_span: {}\naffective_category: {}\naffective_intensity: {}\n",
                span(&i.affective_span),
                i.affective_category,
                i.affective_intensity.as_deref().unwrap_or("null")
            ));
        }
        if self.behavioral_items.is_empty() {
            out.push_str("behavioral_span: null\nbehavioral_category: null\n");
        }
        for i in &self.behavioral_items {
            out.push_str(&format!(
                "behavioral_span: {}\nbehavioral_category: {}\n",
                span(&i.behavioral_span),
                i.behavioral_category
            ));
        }
        out
    }

    /// Render as the JSON answer form, one array per target group.
    pub fn to_answer_json(&self) -> Value {
        fn or_null<T: Serialize>(items: &[T], null: Value) -> Value {
            if items.is_empty() {
                Value::Array(vec![null])
            } else {
                serde_json::to_value(items).expect("items serialize")
            }
        }
        serde_json::json!({
            "delusions": or_null(&self.delusion_items,
                serde_json::json!({"delusion_span": null, "delusion_type": null})),
            "affective_responses": or_null(&self.affective_items,
                serde_json::json!({"affective_span": null, "affective_category": null, "affective_intensity": null})),
            "behavioral_responses": or_null(&self.behavioral_items,
                serde_json::json!({"behavioral_span": null, "behavioral_category": null})),
        })
    }
}

// ---------------------------------------------------------------------------
// thinking traces

/// Delimiters of an inline reasoning block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkingMarkers {
    pub open: String,
    pub close: String,
}

impl Default for ThinkingMarkers {
    fn default() -> Self {
        ThinkingMarkers {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThinkingSplit {
    pub thinking: Option<String>,
    pub answer: String,
    /// Set when markers were present but not as one well-formed block.
    pub malformed: bool,
}

/// Split a single well-formed reasoning block off `raw`. Anything else
/// leaves `raw` untouched.
pub fn extract_thinking(raw: &str, markers: &ThinkingMarkers) -> ThinkingSplit {
    let opens = raw.matches(markers.open.as_str()).count();
    let closes = raw.matches(markers.close.as_str()).count();
    if opens == 0 && closes == 0 {
        return ThinkingSplit {
            thinking: None,
            answer: raw.to_owned(),
            malformed: false,
        };
    }
    if opens == 1 && closes == 1 {
        let start = raw.find(markers.open.as_str()).expect("counted");
        let end = raw.find(markers.close.as_str()).expect("counted");
        if start + markers.open.len() <= end {
            let thinking = raw[start + markers.open.len()..end].trim().to_owned();
            let answer = format!("{}{}", &raw[..start], &raw[end + markers.close.len()..])
                .trim()
                .to_owned();
            return ThinkingSplit {
                thinking: Some(thinking),
                answer,
                malformed: false,
            };
        }
    }
    ThinkingSplit {
        thinking: None,
        answer: raw.to_owned(),
        malformed: true,
    }
}

// ---------------------------------------------------------------------------
// annotation parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    DelusionSpan,
    DelusionType,
    AffectiveSpan,
    AffectiveCategory,
    AffectiveIntensity,
    BehavioralSpan,
    BehavioralCategory,
}

impl Field {
    const ALL: [Field; 7] = [
        Field::DelusionSpan,
        Field::DelusionType,
        Field::AffectiveSpan,
        Field::AffectiveCategory,
        Field::AffectiveIntensity,
        Field::BehavioralSpan,
        Field::BehavioralCategory,
    ];

    fn key(self) -> &'static str {
        match self {
            Field::DelusionSpan => "delusion_span",
            Field::DelusionType => "delusion_type",
            Field::AffectiveSpan => "affective_span",
            Field::AffectiveCategory => "affective_category",
            Field::AffectiveIntensity => "affective_intensity",
            Field::BehavioralSpan => "behavioral_span",
            Field::BehavioralCategory => "behavioral_category",
        }
    }

    fn from_key(key: &str) -> Option<Field> {
        let k = normalize_key(key);
        Field::ALL.into_iter().find(|f| f.key() == k)
    }
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .trim_matches(|c: char| c == '*' || c == '`' || c == '"' || c == '\'' || c.is_whitespace())
        .to_lowercase()
        .replace([' ', '-'], "_")
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')] {
        if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
            return &s[open.len_utf8()..s.len() - close.len_utf8()];
        }
    }
    s
}

fn clean_value(v: &str) -> Option<String> {
    let v = v
        .trim()
        .trim_matches(|c: char| c == '*' || c == '`')
        .trim();
    let v = strip_quotes(v).trim();
    if is_absent_token(v) {
        None
    } else {
        Some(v.to_owned())
    }
}

/// Split a label value on commas and canonicalize each part.
fn split_labels(schema: &GuidelineSchema, target: TargetId, raw: &str) -> Vec<String> {
    let raw = raw
        .trim()
        .trim_start_matches(['(', '['])
        .trim_end_matches([')', ']', '.']);
    raw.split(',')
        .filter_map(|part| {
            let part = strip_quotes(part.trim().trim_matches(|c: char| c == '*' || c == '`')).trim();
            schema.canonicalize(target, part).name().map(str::to_owned)
        })
        .collect()
}

/// Accumulates items in arrival order with span/label pairing.
struct Builder<'a> {
    schema: &'a GuidelineSchema,
    record: AnnotationRecord,
    pending_delusion_span: Option<Option<String>>,
    pending_affective_span: Option<Option<String>>,
    pending_behavioral_span: Option<Option<String>>,
    last_affective_batch: Option<std::ops::Range<usize>>,
    pending_intensity: Option<Option<String>>,
    seen: [bool; 3],
    any_field: bool,
}

impl<'a> Builder<'a> {
    fn new(schema: &'a GuidelineSchema, format: ParseFormat) -> Self {
        Builder {
            schema,
            record: AnnotationRecord::empty(format),
            pending_delusion_span: None,
            pending_affective_span: None,
            pending_behavioral_span: None,
            last_affective_batch: None,
            pending_intensity: None,
            seen: [false; 3],
            any_field: false,
        }
    }

    fn span_twice(field: Field) -> ParseFailure {
        ParseFailure::Incomplete(format!("{} without a matching label", field.key()))
    }

    fn push(&mut self, field: Field, value: Option<String>) -> Result<(), ParseFailure> {
        self.any_field = true;
        match field {
            Field::DelusionSpan => {
                if self.pending_delusion_span.replace(value).is_some() {
                    return Err(Self::span_twice(field));
                }
            }
            Field::AffectiveSpan => {
                self.last_affective_batch = None;
                if self.pending_affective_span.replace(value).is_some() {
                    return Err(Self::span_twice(field));
                }
            }
            Field::BehavioralSpan => {
                if self.pending_behavioral_span.replace(value).is_some() {
                    return Err(Self::span_twice(field));
                }
            }
            Field::DelusionType => {
                self.seen[0] = true;
                let span = self.pending_delusion_span.take().flatten();
                for name in value
                    .iter()
                    .flat_map(|v| split_labels(self.schema, TargetId::DelusionType, v))
                {
                    self.record.delusion_items.push(DelusionItem {
                        delusion_span: span.clone(),
                        delusion_type: name,
                    });
                }
            }
            Field::AffectiveCategory => {
                self.seen[1] = true;
                let span = self.pending_affective_span.take().flatten();
                let intensity = self.pending_intensity.take().flatten();
                let start = self.record.affective_items.len();
                for name in value
                    .iter()
                    .flat_map(|v| split_labels(self.schema, TargetId::AffectiveResponse, v))
                {
                    self.record.affective_items.push(AffectiveItem {
                        affective_span: span.clone(),
                        affective_category: name,
                        affective_intensity: intensity.clone(),
                    });
                }
                self.last_affective_batch = Some(start..self.record.affective_items.len());
            }
            Field::AffectiveIntensity => {
                let value = value.and_then(|v| {
                    self.schema
                        .canonicalize(TargetId::AffectiveIntensity, &v)
                        .name()
                        .map(str::to_owned)
                });
                match self.last_affective_batch.take() {
                    Some(batch) if self.pending_affective_span.is_none() => {
                        for i in batch {
                            self.record.affective_items[i].affective_intensity = value.clone();
                        }
                    }
                    // intensity ahead of its category line
                    _ => self.pending_intensity = Some(value),
                }
            }
            Field::BehavioralCategory => {
                self.seen[2] = true;
                let span = self.pending_behavioral_span.take().flatten();
                for name in value
                    .iter()
                    .flat_map(|v| split_labels(self.schema, TargetId::BehavioralResponse, v))
                {
                    self.record.behavioral_items.push(BehavioralItem {
                        behavioral_span: span.clone(),
                        behavioral_category: name,
                    });
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<AnnotationRecord, ParseFailure> {
        if !self.any_field {
            return Err(ParseFailure::NoFields);
        }
        for (pending, field) in [
            (&self.pending_delusion_span, Field::DelusionSpan),
            (&self.pending_affective_span, Field::AffectiveSpan),
            (&self.pending_behavioral_span, Field::BehavioralSpan),
        ] {
            if pending.is_some() {
                return Err(Self::span_twice(field));
            }
        }
        let required = [Field::DelusionType, Field::AffectiveCategory, Field::BehavioralCategory];
        if let Some(i) = self.seen.iter().position(|s| !s) {
            return Err(ParseFailure::Incomplete(format!("missing {}", required[i].key())));
        }
        self.record.normalize();
        Ok(self.record)
    }
}

/// Split a template line into `(field, raw value)` when it names a field.
fn template_line(line: &str) -> Option<(Field, &str)> {
    let line = line
        .trim()
        .trim_start_matches(|c: char| matches!(c, '-' | '*' | '#' | '>' | '\u{2022}') || c.is_whitespace());
    let colon = line.find(':')?;
    let field = Field::from_key(&line[..colon])?;
    Some((field, &line[colon + 1..]))
}

fn parse_template(answer: &str, schema: &GuidelineSchema) -> Result<AnnotationRecord, ParseFailure> {
    let mut b = Builder::new(schema, ParseFormat::Template);
    for line in answer.lines() {
        if let Some((field, raw)) = template_line(line) {
            b.push(field, clean_value(raw))?;
        }
    }
    b.finish()
}

/// First balanced `{...}` object in `s`, skipping braces inside strings.
fn first_json_object(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_str = false;
    let mut esc = false;
    for (i, ch) in s.char_indices() {
        if in_str {
            match (esc, ch) {
                (true, _) => esc = false,
                (false, '\\') => esc = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' if start.is_some() => in_str = true,
            '{' => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            '}' if start.is_some() => {
                depth -= 1;
                if depth == 0 {
                    return start.map(|st| &s[st..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

const GROUP_KEYS: [(&str, usize); 3] = [
    ("delusions", 0),
    ("affective_responses", 1),
    ("behavioral_responses", 2),
];

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => clean_value(s),
        Value::Bool(_) | Value::Number(_) => clean_value(&v.to_string()),
        Value::Array(_) | Value::Object(_) => None,
    }
}

/// Values of a field: scalar becomes a one-element list; arrays keep order.
fn json_values(v: &Value) -> Vec<Option<String>> {
    match v {
        Value::Array(items) => items.iter().map(json_scalar).collect(),
        other => vec![json_scalar(other)],
    }
}

fn collect_objects<'v>(v: &'v Value, depth: usize, out: &mut Vec<&'v Map<String, Value>>) {
    if depth > 4 {
        return;
    }
    match v {
        Value::Object(map) => {
            out.push(map);
            for child in map.values() {
                collect_objects(child, depth + 1, out);
            }
        }
        Value::Array(items) => {
            for child in items {
                collect_objects(child, depth + 1, out);
            }
        }
        _ => {}
    }
}

fn parse_json(value: &Value, schema: &GuidelineSchema) -> Result<AnnotationRecord, ParseFailure> {
    let mut objects = Vec::new();
    collect_objects(value, 0, &mut objects);
    let mut b = Builder::new(schema, ParseFormat::Json);
    let mut group_present = [false; 3];
    if let Value::Object(top) = value {
        for (key, idx) in GROUP_KEYS {
            if top.get(key).is_some_and(Value::is_array) {
                group_present[idx] = true;
            }
        }
    }
    let groups = [
        (Field::DelusionSpan, Field::DelusionType, None),
        (Field::AffectiveSpan, Field::AffectiveCategory, Some(Field::AffectiveIntensity)),
        (Field::BehavioralSpan, Field::BehavioralCategory, None),
    ];
    for obj in objects {
        let get = |f: Field| obj.iter().find(|(k, _)| Field::from_key(k) == Some(f)).map(|(_, v)| v);
        for (span_f, label_f, extra) in groups {
            let span = get(span_f);
            let label = get(label_f);
            match (span, label) {
                (None, None) => continue,
                (Some(_), None) => {
                    return Err(ParseFailure::Incomplete(format!(
                        "{} without {}",
                        span_f.key(),
                        label_f.key()
                    )))
                }
                (span, Some(label)) => {
                    let labels = json_values(label);
                    let spans = span.map(json_values).unwrap_or_default();
                    let intensities = extra.and_then(get).map(json_values).unwrap_or_default();
                    if labels.is_empty() {
                        b.push(label_f, None)?;
                    }
                    for (i, l) in labels.into_iter().enumerate() {
                        let s = if spans.len() == 1 {
                            spans[0].clone()
                        } else {
                            spans.get(i).cloned().flatten()
                        };
                        if span.is_some() {
                            b.push(span_f, s)?;
                        }
                        b.push(label_f, l)?;
                        if let Some(extra_f) = extra {
                            let it = if intensities.len() == 1 {
                                intensities[0].clone()
                            } else {
                                intensities.get(i).cloned().flatten()
                            };
                            if !intensities.is_empty() {
                                b.push(extra_f, it)?;
                            }
                        }
                    }
                }
            }
        }
    }
    for (i, present) in group_present.iter().enumerate() {
        b.seen[i] |= *present;
    }
    b.any_field |= group_present.iter().any(|p| *p);
    b.finish()
}

/// Parse an annotator answer (thinking already stripped).
pub fn parse_annotation(answer: &str, schema: &GuidelineSchema) -> Result<AnnotationRecord, ParseFailure> {
    if let Some(obj) = first_json_object(answer) {
        if let Ok(value) = serde_json::from_str::<Value>(obj) {
            let mut objects = Vec::new();
            collect_objects(&value, 0, &mut objects);
            let relevant = objects.iter().any(|m| {
                m.keys()
                    .any(|k| Field::from_key(k).is_some() || GROUP_KEYS.iter().any(|(g, _)| g == k))
            });
            if relevant {
                return parse_json(&value, schema);
            }
        }
    }
    parse_template(answer, schema)
}

// ---------------------------------------------------------------------------
// verdicts

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeWinner {
    ModelA,
    ModelB,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub winner: JudgeWinner,
    pub reasoning: String,
    pub corrected_labels: LabelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebateWinner {
    Annotator1,
    Annotator2,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateVerdict {
    pub winner: DebateWinner,
    pub final_labels: LabelSet,
    pub reasoning: String,
}

/// The labels a debate ruling resolves to, after the consistency check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebateResolution {
    pub labels: LabelSet,
    /// Judge named a winner but restated a different label set.
    pub consistency_violation: bool,
}

impl DebateVerdict {
    /// A named winner must carry that annotator's original set; when the
    /// restated labels differ, the original set is used and the mismatch
    /// flagged.
    pub fn resolve(&self, original_1: &LabelSet, original_2: &LabelSet) -> DebateResolution {
        let named = match self.winner {
            DebateWinner::Annotator1 => original_1,
            DebateWinner::Annotator2 => original_2,
            DebateWinner::Combined => {
                return DebateResolution {
                    labels: self.final_labels.clone(),
                    consistency_violation: false,
                }
            }
        };
        DebateResolution {
            labels: named.clone(),
            consistency_violation: *named != self.final_labels,
        }
    }
}

/// Header lines of a verdict, in order, with continuation lines folded in.
fn verdict_sections(answer: &str, is_header: impl Fn(&str) -> bool) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in answer.lines() {
        let trimmed = line
            .trim()
            .trim_start_matches(|c: char| matches!(c, '-' | '*' | '#' | '>') || c.is_whitespace());
        if let Some(colon) = trimmed.find(':') {
            let key = normalize_key(&trimmed[..colon]);
            if is_header(&key) {
                let value = trimmed[colon + 1..]
                    .trim()
                    .trim_matches(|c: char| c == '*' || c == '`')
                    .trim()
                    .to_owned();
                out.push((key, value));
                continue;
            }
        }
        if let Some((_, value)) = out.last_mut() {
            let l = line.trim();
            if !l.is_empty() {
                if !value.is_empty() {
                    value.push('\n');
                }
                value.push_str(l);
            }
        }
    }
    out
}

fn alnum_words(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exactly one of `options` must occur in `value`.
fn pick_one<T: Copy>(value: &str, options: &[(&[&str], T)]) -> Option<T> {
    let words = format!(" {} ", alnum_words(value));
    let hits: Vec<T> = options
        .iter()
        .filter(|(needles, _)| needles.iter().any(|n| words.contains(&format!(" {n} "))))
        .map(|(_, t)| *t)
        .collect();
    match hits.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

fn first_line(s: &str) -> &str {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("")
}

/// Parse a direct-judge verdict (`WINNER:` / `REASONING:` / `CORRECT_TYPE:`).
pub fn parse_direct_verdict(
    answer: &str,
    target: TargetId,
    schema: &GuidelineSchema,
) -> Result<JudgeVerdict, VerdictParseFailure> {
    let sections = verdict_sections(answer, |k| {
        matches!(k, "winner" | "reasoning" | "correct_type" | "correct_types")
    });
    let winner = sections
        .iter()
        .rev()
        .filter(|(k, _)| k == "winner")
        .find_map(|(_, v)| {
            pick_one(
                first_line(v),
                &[
                    (&["model a", "modela"], JudgeWinner::ModelA),
                    (&["model b", "modelb"], JudgeWinner::ModelB),
                    (&["combined"], JudgeWinner::Combined),
                ],
            )
        })
        .ok_or(VerdictParseFailure::MissingWinner)?;
    let labels = sections
        .iter()
        .rev()
        .find(|(k, _)| k.starts_with("correct_type"))
        .map(|(_, v)| first_line(v).to_owned())
        .ok_or(VerdictParseFailure::MissingLabels)?;
    let reasoning = sections
        .iter()
        .rev()
        .find(|(k, _)| k == "reasoning")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    Ok(JudgeVerdict {
        winner,
        reasoning,
        corrected_labels: split_labels(schema, target, &labels).into_iter().collect(),
    })
}

/// Parse a debate-judge ruling (`Winner:` / `Final <field>:` / `Reasoning:`).
pub fn parse_debate_verdict(
    answer: &str,
    target: TargetId,
    schema: &GuidelineSchema,
) -> Result<DebateVerdict, VerdictParseFailure> {
    let sections = verdict_sections(answer, |k| {
        k == "winner" || k == "reasoning" || k.starts_with("final")
    });
    let winner = sections
        .iter()
        .rev()
        .filter(|(k, _)| k == "winner")
        .find_map(|(_, v)| {
            pick_one(
                first_line(v),
                &[
                    (&["annotator 1", "annotator1"], DebateWinner::Annotator1),
                    (&["annotator 2", "annotator2"], DebateWinner::Annotator2),
                    (&["combined"], DebateWinner::Combined),
                ],
            )
        })
        .ok_or(VerdictParseFailure::MissingWinner)?;
    let labels = sections
        .iter()
        .rev()
        .find(|(k, _)| k.starts_with("final"))
        .map(|(_, v)| first_line(v).to_owned())
        .ok_or(VerdictParseFailure::MissingLabels)?;
    let reasoning = sections
        .iter()
        .rev()
        .find(|(k, _)| k == "reasoning")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    Ok(DebateVerdict {
        winner,
        final_labels: split_labels(schema, target, &labels).into_iter().collect(),
        reasoning,
    })
}
