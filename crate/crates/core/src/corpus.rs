//! Transcript ingestion, sentence filtering, gold labels, and dev/eval split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::LabelSet;
use crate::taxonomy::{Canonical, GuidelineSchema, TargetId};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("gold file {path}: {message}")]
    Gold { path: PathBuf, message: String },
    #[error("gold annotations reference unknown transcript `{0}`")]
    UnknownGoldId(String),
    #[error("gold label `{label}` for transcript `{id}` is not a {target} category")]
    BadGoldLabel {
        id: String,
        target: TargetId,
        label: String,
    },
    #[error("dev id `{0}` is not in the corpus")]
    UnknownDevId(String),
    #[error("dev id `{0}` listed more than once")]
    DuplicateDevId(String),
    #[error("duplicate transcript id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Dev,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Dev => "dev",
            Split::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub text: String,
    pub sentence_count: usize,
    pub split: Split,
}

impl Transcript {
    /// Transcript with its sentence count computed by the default counter.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let sentence_count = SentenceCounter::default().count(&text);
        Transcript {
            id: id.into(),
            text,
            sentence_count,
            split: Split::Eval,
        }
    }
}

/// Counts sentences as maximal runs ending in `.`, `!` or `?`. A period
/// right after a listed abbreviation does not end a sentence, and an
/// unterminated trailing fragment counts as one more sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceCounter {
    pub abbreviations: Vec<String>,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "a.m", "p.m", "u.s",
];

impl Default for SentenceCounter {
    fn default() -> Self {
        SentenceCounter {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SentenceCounter {
    pub fn count(&self, text: &str) -> usize {
        let chars: Vec<char> = text.chars().collect();
        let mut count = 0;
        let mut has_content = false;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') {
                let inner = c == '.' && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                if c == '.' && has_content && (inner || self.is_abbreviation(&chars[..i])) {
                    i += 1;
                    continue;
                }
                // A run of terminators ("?!", "...") closes one sentence.
                while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?') {
                    i += 1;
                }
                if has_content {
                    count += 1;
                    has_content = false;
                }
            } else if c.is_alphanumeric() {
                has_content = true;
            }
            i += 1;
        }
        if has_content {
            count += 1;
        }
        count
    }

    fn is_abbreviation(&self, before: &[char]) -> bool {
        let word: String = before
            .iter()
            .rev()
            .take_while(|c| c.is_alphanumeric() || **c == '.')
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect::<String>()
            .to_lowercase();
        !word.is_empty() && self.abbreviations.iter().any(|a| *a == word)
    }
}

/// Gold label sets for one transcript.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    #[serde(default)]
    pub delusion_type: LabelSet,
    #[serde(default)]
    pub affective_response: LabelSet,
    #[serde(default)]
    pub behavioral_response: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affective_intensity: Option<LabelSet>,
}

impl GoldEntry {
    pub fn labels(&self, target: TargetId) -> LabelSet {
        match target {
            TargetId::DelusionType => self.delusion_type.clone(),
            TargetId::AffectiveResponse => self.affective_response.clone(),
            TargetId::BehavioralResponse => self.behavioral_response.clone(),
            TargetId::AffectiveIntensity => self.affective_intensity.clone().unwrap_or_default(),
        }
    }

    fn labels_mut(&mut self, target: TargetId) -> Option<&mut LabelSet> {
        match target {
            TargetId::DelusionType => Some(&mut self.delusion_type),
            TargetId::AffectiveResponse => Some(&mut self.affective_response),
            TargetId::BehavioralResponse => Some(&mut self.behavioral_response),
            TargetId::AffectiveIntensity => self.affective_intensity.as_mut(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoldAnnotations(pub BTreeMap<String, GoldEntry>);

impl GoldAnnotations {
    pub fn load(path: &Path, schema: &GuidelineSchema) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        let raw: GoldAnnotations = serde_json::from_str(&text).map_err(|e| CorpusError::Gold {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        raw.canonicalized(schema)
    }

    /// Map every label through the taxonomy; off-taxonomy gold labels are
    /// an error.
    pub fn canonicalized(mut self, schema: &GuidelineSchema) -> Result<Self, CorpusError> {
        for (id, entry) in self.0.iter_mut() {
            for target in TargetId::LABELLED {
                let Some(set) = entry.labels_mut(target) else { continue };
                let mut out = LabelSet::new();
                for raw in set.iter() {
                    match schema.canonicalize(target, raw) {
                        Canonical::Known(l) => {
                            out.insert(l.name);
                        }
                        Canonical::Absent => {}
                        Canonical::Unknown(label) => {
                            return Err(CorpusError::BadGoldLabel {
                                id: id.clone(),
                                target,
                                label,
                            })
                        }
                    }
                }
                *set = out;
            }
        }
        Ok(self)
    }

    pub fn get(&self, id: &str) -> Option<&GoldEntry> {
        self.0.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub sentence_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestedCorpus {
    /// Retained transcripts, ordered by id.
    pub transcripts: Vec<Transcript>,
    pub excluded: Vec<Excluded>,
    pub gold: Option<GoldAnnotations>,
}

/// Minimum sentence count is exclusive: entries need more than this many.
pub const MIN_SENTENCES_EXCLUSIVE: usize = 3;

/// Read every `*.txt` file in `dir` (stem = id), drop entries with three
/// or fewer sentences, and load gold labels if given. Gold ids must name
/// a file in the directory; gold for an excluded transcript is dropped.
pub fn ingest_corpus(
    dir: &Path,
    gold: Option<&Path>,
    schema: &GuidelineSchema,
    counter: &SentenceCounter,
) -> Result<IngestedCorpus, CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    files.retain(|p| p.extension().is_some_and(|x| x == "txt"));
    files.sort();

    let mut transcripts = Vec::new();
    let mut excluded = Vec::new();
    let mut all_ids = BTreeSet::new();
    for path in files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !all_ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        let text = text.replace("\r\n", "\n").trim().to_owned();
        let sentence_count = counter.count(&text);
        if sentence_count <= MIN_SENTENCES_EXCLUSIVE {
            excluded.push(Excluded { id, sentence_count });
            continue;
        }
        transcripts.push(Transcript {
            id,
            text,
            sentence_count,
            split: Split::Eval,
        });
    }

    let gold = match gold {
        None => None,
        Some(path) => {
            let mut g = GoldAnnotations::load(path, schema)?;
            if let Some(missing) = g.ids().find(|id| !all_ids.contains(*id)) {
                return Err(CorpusError::UnknownGoldId(missing.clone()));
            }
            let kept: BTreeSet<&str> = transcripts.iter().map(|t| t.id.as_str()).collect();
            g.0.retain(|id, _| kept.contains(id.as_str()));
            Some(g)
        }
    };
    Ok(IngestedCorpus {
        transcripts,
        excluded,
        gold,
    })
}

/// Assign `dev_ids` to the dev split and everything else to eval.
pub fn split_corpus(transcripts: &mut [Transcript], dev_ids: &[String]) -> Result<(), CorpusError> {
    let mut dev = BTreeSet::new();
    for id in dev_ids {
        if !dev.insert(id.as_str()) {
            return Err(CorpusError::DuplicateDevId(id.clone()));
        }
    }
    let known: BTreeSet<&str> = transcripts.iter().map(|t| t.id.as_str()).collect();
    if let Some(missing) = dev.iter().find(|id| !known.contains(*id)) {
        return Err(CorpusError::UnknownDevId(missing.to_string()));
    }
    for t in transcripts.iter_mut() {
        t.split = if dev.contains(t.id.as_str()) { Split::Dev } else { Split::Eval };
    }
    Ok(())
}
