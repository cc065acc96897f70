use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Split;
use crate::gateway::{AgentRole, AgentSpec, DecodingConfig, RetryPolicy};
use crate::prompt::PromptLevel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Majority,
    DirectJudge,
    Debate,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Majority, Strategy::DirectJudge, Strategy::Debate];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Majority => "majority",
            Strategy::DirectJudge => "direct_judge",
            Strategy::Debate => "debate",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Strategy::Majority => "Majority Vote",
            Strategy::DirectJudge => "LLM-as-Judge",
            Strategy::Debate => "Debate",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "majority" | "majority_vote" => Ok(Strategy::Majority),
            "direct_judge" | "direct" | "judge" => Ok(Strategy::DirectJudge),
            "debate" => Ok(Strategy::Debate),
            other => Err(ConfigError::Invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

fn default_levels() -> Vec<PromptLevel> {
    PromptLevel::ALL.to_vec()
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_rounds() -> usize {
    2
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    600
}

fn default_split() -> Split {
    Split::Eval
}

/// Experiment configuration, usually read from TOML. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Guideline JSON; the bundled guideline when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline: Option<PathBuf>,
    /// Template directory overriding the bundled templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub corpus_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,
    #[serde(default)]
    pub dev_ids: Vec<String>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub abbreviations: Option<Vec<String>>,
    pub agents: Vec<AgentSpec>,
    #[serde(default = "default_levels")]
    pub levels: Vec<PromptLevel>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_rounds")]
    pub debate_rounds: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default)]
    pub offline: bool,
    pub out_dir: PathBuf,
    /// Response cache; `<out_dir>/cache` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub include_intensity: bool,
}

/// The agents a validated config assigns to each role.
#[derive(Debug, Clone)]
pub struct Panel {
    pub annotator_a: AgentSpec,
    pub annotator_b: AgentSpec,
    pub tiebreaker: Option<AgentSpec>,
    pub judge: Option<AgentSpec>,
}

impl Panel {
    /// Agents that annotate every transcript, in report order.
    pub fn annotating(&self) -> Vec<&AgentSpec> {
        let mut out = vec![&self.annotator_a, &self.annotator_b];
        out.extend(self.tiebreaker.as_ref());
        out
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Read {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.out_dir);
        for p in [&mut self.guideline, &mut self.templates, &mut self.gold, &mut self.cache_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for agent in &mut self.agents {
            if let crate::gateway::Endpoint::Scripted(p) = &mut agent.endpoint {
                fix(p);
            }
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Check the config and assign roles. Runs before any model call.
    pub fn validate(&self) -> Result<Panel, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (i, a) in self.agents.iter().enumerate() {
            if a.id.trim().is_empty() || a.id.contains(['/', '\\']) {
                return invalid(format!("agent id `{}` must be non-empty and path-safe", a.id));
            }
            if self.agents[..i].iter().any(|b| b.id == a.id) {
                return invalid(format!("duplicate agent id `{}`", a.id));
            }
        }
        let with_role = |r: AgentRole| self.agents.iter().filter(move |a| a.role == r).cloned().collect::<Vec<_>>();
        let annotators = with_role(AgentRole::Annotator);
        let tiebreakers = with_role(AgentRole::Tiebreaker);
        let judges = with_role(AgentRole::Judge);
        if annotators.len() != 2 {
            return invalid(format!("need exactly 2 annotator agents, found {}", annotators.len()));
        }
        if tiebreakers.len() > 1 {
            return invalid("at most one tiebreaker agent".into());
        }
        if judges.len() > 1 {
            return invalid("at most one judge agent".into());
        }
        let tiebreaker = tiebreakers.into_iter().next();
        let judge = judges.into_iter().next().or_else(|| tiebreaker.clone());
        if self.strategies.contains(&Strategy::Majority) && tiebreaker.is_none() {
            return invalid("majority voting needs 3 annotating agents (two annotators and a tiebreaker)".into());
        }
        for s in [Strategy::DirectJudge, Strategy::Debate] {
            if self.strategies.contains(&s) && judge.is_none() {
                return invalid(format!("strategy {s} needs a judge (a judge or tiebreaker agent)"));
            }
        }
        if self.levels.is_empty() {
            return invalid("no prompt levels selected".into());
        }
        if self.debate_rounds == 0 {
            return invalid("debate_rounds must be at least 1".into());
        }
        if self.concurrency == 0 {
            return invalid("concurrency must be at least 1".into());
        }
        if self.retry.max_attempts == 0 {
            return invalid("retry.max_attempts must be at least 1".into());
        }
        self.decoding.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut it = annotators.into_iter();
        Ok(Panel {
            annotator_a: it.next().expect("two annotators"),
            annotator_b: it.next().expect("two annotators"),
            tiebreaker,
            judge,
        })
    }

    /// Levels and strategies deduplicated and sorted.
    pub fn normalized(mut self) -> Self {
        self.levels.sort();
        self.levels.dedup();
        self.strategies.sort();
        self.strategies.dedup();
        self
    }
}
