//! Offline backend that replays fixture responses keyed by agent and
//! prompt hash.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, GatewayError, RawCompletion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub agent_id: String,
    pub prompt_hash: String,
    /// Restricts the entry to calls made with this token limit. Entries
    /// without it answer any limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub response: RawCompletion,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub entries: Vec<FixtureEntry>,
}

impl FixtureFile {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("fixtures serialize"))
    }
}

type Key = (String, String, Option<u32>);

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<Key, RawCompletion>,
}

impl ScriptedBackend {
    pub fn from_file(file: FixtureFile) -> Self {
        let entries = file
            .entries
            .into_iter()
            .map(|e| ((e.agent_id, e.prompt_hash, e.max_tokens), e.response))
            .collect();
        ScriptedBackend { entries }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_file(FixtureFile::load(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn replay(&self, req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> {
        let agent = req.agent.id.clone();
        let hash = req.prompt.content_hash.clone();
        self.entries
            .get(&(agent.clone(), hash.clone(), Some(req.max_tokens)))
            .or_else(|| self.entries.get(&(agent.clone(), hash.clone(), None)))
            .cloned()
            .ok_or(GatewayError::ScriptedMiss {
                agent,
                prompt_hash: hash,
            })
    }
}
