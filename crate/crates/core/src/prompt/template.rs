use std::collections::{BTreeMap, HashSet};

use super::PromptError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// A text template with `{slot_name}` placeholders. `{{` and `}}` escape
/// literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    pieces: Vec<Piece>,
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl Template {
    /// Parse `text`, rejecting any placeholder not listed in `allowed`.
    pub fn parse(name: &str, text: &str, allowed: &[&str]) -> Result<Self, PromptError> {
        let text = text.replace("\r\n", "\n");
        let text = text.strip_suffix('\n').unwrap_or(&text);
        let allowed: HashSet<&str> = allowed.iter().copied().collect();
        let mut pieces = Vec::new();
        let mut lit = String::new();
        let mut rest = text;
        while let Some(pos) = rest.find(['{', '}']) {
            lit.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if tail.starts_with("{{") {
                lit.push('{');
                rest = &tail[2..];
            } else if tail.starts_with("}}") {
                lit.push('}');
                rest = &tail[2..];
            } else if let Some(slot) = tail
                .strip_prefix('{')
                .and_then(|t| t.find('}').map(|end| &t[..end]))
                .filter(|s| !s.is_empty() && s.chars().all(is_slot_char))
            {
                if !allowed.contains(slot) {
                    return Err(PromptError::UnknownPlaceholder {
                        template: name.to_owned(),
                        slot: slot.to_owned(),
                    });
                }
                if !lit.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                }
                pieces.push(Piece::Slot(slot.to_owned()));
                rest = &tail[slot.len() + 2..];
            } else {
                lit.push_str(&tail[..1]);
                rest = &tail[1..];
            }
        }
        lit.push_str(rest);
        if !lit.is_empty() {
            pieces.push(Piece::Literal(lit));
        }
        Ok(Template {
            name: name.to_owned(),
            pieces,
        })
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Literal(_) => None,
        })
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(s) => {
                    let v = values.get(s.as_str()).ok_or_else(|| PromptError::MissingSlot {
                        template: self.name.clone(),
                        slot: s.clone(),
                    })?;
                    out.push_str(v);
                }
            }
        }
        Ok(out)
    }
}
