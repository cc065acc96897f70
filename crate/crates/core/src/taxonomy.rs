//! Clinical guideline schema: annotation targets, label categories, and the
//! tiered content (definitions, rules, examples) that prompt levels draw on.
//!
//! The schema is loaded from a versioned JSON document so alternate
//! taxonomies can be evaluated without code changes. A default guideline is
//! bundled with the crate.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bundled default guideline document.
pub const BUNDLED_GUIDELINE: &str = include_str!("../data/guideline.json");

/// Raw model outputs that mean "nothing here".
const ABSENT_TOKENS: &[&str] = &["null", "none", "n/a", "na", "nil", "-", "---"];

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("malformed guideline document: {0}")]
    Malformed(String),
    #[error("no targets")]
    NoTargets,
    #[error("missing target `{0}`")]
    MissingTarget(TargetId),
    #[error("target `{0}` declared more than once")]
    DuplicateTarget(TargetId),
    #[error("duplicate category `{name}` in target `{target}`")]
    DuplicateCategory { target: TargetId, name: String },
    #[error("empty category name in target `{0}`")]
    EmptyName(TargetId),
    #[error("target `{target}` must have multi_label = {expected}")]
    MultiLabelMismatch { target: TargetId, expected: bool },
    #[error("category `{name}` in `{target}` lacks {tier} required for prompt level {level}")]
    MissingTier {
        target: TargetId,
        name: String,
        tier: &'static str,
        level: u8,
    },
    #[error("max_prompt_level must be in 1..=4, got {0}")]
    BadLevel(u8),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The four annotation targets. Order here is the canonical target order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetId {
    DelusionType,
    AffectiveResponse,
    BehavioralResponse,
    AffectiveIntensity,
}

impl TargetId {
    pub const ALL: [TargetId; 4] = [
        TargetId::DelusionType,
        TargetId::AffectiveResponse,
        TargetId::BehavioralResponse,
        TargetId::AffectiveIntensity,
    ];

    /// Targets that carry categorical multi-label annotations.
    pub const LABELLED: [TargetId; 3] = [
        TargetId::DelusionType,
        TargetId::AffectiveResponse,
        TargetId::BehavioralResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetId::DelusionType => "delusion_type",
            TargetId::AffectiveResponse => "affective_response",
            TargetId::BehavioralResponse => "behavioral_response",
            TargetId::AffectiveIntensity => "affective_intensity",
        }
    }

    /// Human-readable heading, e.g. "Delusion Type".
    pub fn title(self) -> &'static str {
        match self {
            TargetId::DelusionType => "Delusion Type",
            TargetId::AffectiveResponse => "Affective Response",
            TargetId::BehavioralResponse => "Behavioral Response",
            TargetId::AffectiveIntensity => "Affective Intensity",
        }
    }

    /// Name of the field that carries this target's label in the response
    /// template (`delusion_type`, `affective_category`, ...).
    pub fn label_field(self) -> &'static str {
        match self {
            TargetId::DelusionType => "delusion_type",
            TargetId::AffectiveResponse => "affective_category",
            TargetId::BehavioralResponse => "behavioral_category",
            TargetId::AffectiveIntensity => "affective_intensity",
        }
    }

    /// Name of the field carrying the evidence span, if the target has one.
    pub fn span_field(self) -> Option<&'static str> {
        match self {
            TargetId::DelusionType => Some("delusion_span"),
            TargetId::AffectiveResponse => Some("affective_span"),
            TargetId::BehavioralResponse => Some("behavioral_span"),
            TargetId::AffectiveIntensity => None,
        }
    }

    pub fn parse(s: &str) -> Option<TargetId> {
        TargetId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    fn expected_multi_label(self) -> bool {
        !matches!(self, TargetId::AffectiveIntensity)
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCategory {
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub rules: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
    /// Alternate spellings that canonicalize to `name`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTarget {
    pub id: TargetId,
    pub multi_label: bool,
    pub categories: Vec<LabelCategory>,
}

impl AnnotationTarget {
    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineSchema {
    pub version: String,
    /// Highest prompt level the document promises tier content for.
    #[serde(default = "default_max_level")]
    pub max_prompt_level: u8,
    pub targets: Vec<AnnotationTarget>,
}

fn default_max_level() -> u8 {
    4
}

/// A canonical label of one target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub target: TargetId,
    pub name: String,
}

/// Result of mapping raw model text onto the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Canonical {
    Known(Label),
    /// The distinguished "nothing" marker (`null`, `None`, ...).
    Absent,
    /// Off-taxonomy text, preserved verbatim.
    Unknown(String),
}

impl Canonical {
    /// The text this value carries into a label set, if any.
    pub fn name(&self) -> Option<&str> {
        match self {
            Canonical::Known(l) => Some(&l.name),
            Canonical::Unknown(s) => Some(s),
            Canonical::Absent => None,
        }
    }
}

/// Case-insensitive comparison key.
fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

pub fn is_absent_token(raw: &str) -> bool {
    let f = fold(raw);
    f.is_empty() || ABSENT_TOKENS.contains(&f.as_str())
}

impl GuidelineSchema {
    /// Parse and validate a guideline document.
    pub fn from_reader<R: Read>(mut source: R) -> Result<Self, TaxonomyError> {
        let mut buf = String::new();
        source.read_to_string(&mut buf)?;
        Self::from_json(&buf)
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let schema: GuidelineSchema =
            serde_json::from_str(text).map_err(|e| TaxonomyError::Malformed(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self, TaxonomyError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_GUIDELINE).expect("bundled guideline is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        if self.targets.is_empty() {
            return Err(TaxonomyError::NoTargets);
        }
        if !(1..=4).contains(&self.max_prompt_level) {
            return Err(TaxonomyError::BadLevel(self.max_prompt_level));
        }
        let mut seen_targets = HashSet::new();
        for t in &self.targets {
            if !seen_targets.insert(t.id) {
                return Err(TaxonomyError::DuplicateTarget(t.id));
            }
            if t.multi_label != t.id.expected_multi_label() {
                return Err(TaxonomyError::MultiLabelMismatch {
                    target: t.id,
                    expected: t.id.expected_multi_label(),
                });
            }
            let mut names = HashSet::new();
            for c in &t.categories {
                if c.name.trim().is_empty() {
                    return Err(TaxonomyError::EmptyName(t.id));
                }
                for n in std::iter::once(&c.name).chain(c.aliases.iter()) {
                    if !names.insert(fold(n)) {
                        return Err(TaxonomyError::DuplicateCategory {
                            target: t.id,
                            name: n.clone(),
                        });
                    }
                }
                check_tiers(t.id, c, self.max_prompt_level)?;
            }
        }
        for id in TargetId::ALL {
            if !seen_targets.contains(&id) {
                return Err(TaxonomyError::MissingTarget(id));
            }
        }
        Ok(())
    }

    pub fn target(&self, id: TargetId) -> &AnnotationTarget {
        self.targets
            .iter()
            .find(|t| t.id == id)
            .expect("validated schema has every target")
    }

    /// Ordered category names of a target.
    pub fn label_names(&self, id: TargetId) -> Vec<String> {
        self.target(id).category_names().map(str::to_owned).collect()
    }

    pub fn is_known(&self, id: TargetId, name: &str) -> bool {
        self.target(id).categories.iter().any(|c| c.name == name)
    }

    /// Map raw model text onto the taxonomy of `target`.
    pub fn canonicalize(&self, target: TargetId, raw: &str) -> Canonical {
        let raw = raw.trim();
        let key = fold(raw);
        let t = self.target(target);
        // exact names and aliases win over the absent tokens so that
        // "Neutral-None" stays a real category
        for c in &t.categories {
            if fold(&c.name) == key || c.aliases.iter().any(|a| fold(a) == key) {
                return Canonical::Known(Label {
                    target,
                    name: c.name.clone(),
                });
            }
        }
        if is_absent_token(raw) {
            return Canonical::Absent;
        }
        if t.categories.is_empty() {
            // free-text target (intensity)
            return Canonical::Known(Label {
                target,
                name: raw.to_owned(),
            });
        }
        Canonical::Unknown(raw.to_owned())
    }

    /// Sort label names in schema order, unknown names last in lexical order.
    pub fn order_labels<'a, I>(&self, target: TargetId, labels: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let set: BTreeSet<&String> = labels.into_iter().collect();
        let mut out: Vec<String> = self
            .target(target)
            .categories
            .iter()
            .filter(|c| set.contains(&c.name))
            .map(|c| c.name.clone())
            .collect();
        out.extend(
            set.into_iter()
                .filter(|n| !self.is_known(target, n))
                .cloned(),
        );
        out
    }
}

fn check_tiers(target: TargetId, c: &LabelCategory, level: u8) -> Result<(), TaxonomyError> {
    let missing = |tier| TaxonomyError::MissingTier {
        target,
        name: c.name.clone(),
        tier,
        level,
    };
    if level >= 2 && c.definition.trim().is_empty() {
        return Err(missing("a definition"));
    }
    if level >= 3 && c.rules.iter().all(|r| r.trim().is_empty()) {
        return Err(missing("rules"));
    }
    if level >= 4 && c.examples.iter().all(|e| e.trim().is_empty()) {
        return Err(missing("examples"));
    }
    Ok(())
}
