//! Command codebook: firmware documentation entries keyed by command name,
//! loadable from the JSON dump of the Marlin reference pages.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("cannot read codebook file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed codebook JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("entry '{0}' is missing a brief")]
    MissingBrief(String),
    #[error("entry '{0}' is not a letter+digits command name")]
    BadName(String),
}

/// Documentation record for one command, embeddable for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandDescriptor {
    pub name: String,
    pub brief: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub usage_notes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl CommandDescriptor {
    /// Text used when embedding the descriptor: brief plus usage notes.
    pub fn retrieval_text(&self) -> String {
        if self.usage_notes.is_empty() {
            self.brief.clone()
        } else {
            format!("{} {}", self.brief, self.usage_notes)
        }
    }
}

/// Immutable registry of command descriptors keyed by command name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub entries: BTreeMap<String, CommandDescriptor>,
}

impl Codebook {
    pub fn get(&self, name: &str) -> Option<&CommandDescriptor> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The codebook shipped with the library: the supported dialect with
    /// briefs and usage notes taken from the firmware documentation pages.
    pub fn builtin() -> Self {
        let (codebook, warnings) = parse_codebook(include_str!("../assets/codebook.json"))
            .expect("builtin codebook is valid");
        debug_assert!(warnings.is_empty());
        codebook
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.as_str().len() + 1 == name.len()
        && name[1..].bytes().all(|b| b.is_ascii_digit())
        && name.len() >= 2
}

#[derive(Deserialize)]
struct RawDescriptor {
    #[serde(default)]
    brief: Option<String>,
    #[serde(default)]
    url: String,
    #[serde(default)]
    usage_notes: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

/// Parse codebook JSON, returning the codebook plus one warning per
/// duplicate key (last occurrence wins).
pub fn parse_codebook(text: &str) -> Result<(Codebook, Vec<String>), CodebookError> {
    // Deserialize to an ordered pair list so duplicate keys are observable;
    // serde_json's map would silently drop them.
    let raw: Vec<(String, RawDescriptor)> =
        serde_json::from_str::<PairList>(text).map(|p| p.0)?;

    let mut entries = BTreeMap::new();
    let mut warnings = Vec::new();
    for (name, raw) in raw {
        if !valid_name(&name) {
            return Err(CodebookError::BadName(name));
        }
        let brief = match raw.brief {
            Some(brief) if !brief.trim().is_empty() => brief,
            _ => return Err(CodebookError::MissingBrief(name)),
        };
        let descriptor = CommandDescriptor {
            name: name.clone(),
            brief,
            url: raw.url,
            usage_notes: raw.usage_notes,
            embedding: raw.embedding,
        };
        if entries.insert(name.clone(), descriptor).is_some() {
            warnings.push(format!("duplicate codebook entry '{name}': last occurrence wins"));
        }
    }
    Ok((Codebook { entries }, warnings))
}

struct PairList(Vec<(String, RawDescriptor)>);

impl<'de> Deserialize<'de> for PairList {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl<'de> serde::de::Visitor<'de> for Visitor {
            type Value = PairList;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a JSON object of command descriptors")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some(pair) = map.next_entry::<String, RawDescriptor>()? {
                    pairs.push(pair);
                }
                Ok(PairList(pairs))
            }
        }
        deserializer.deserialize_map(Visitor)
    }
}

/// Load a codebook from a JSON file. Duplicate keys resolve last-wins and
/// are logged as warnings.
pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook, CodebookError> {
    let text = std::fs::read_to_string(path)?;
    let (codebook, warnings) = parse_codebook(&text)?;
    for warning in warnings {
        log::warn!("{warning}");
    }
    Ok(codebook)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_loads() {
        let (cb, warnings) = parse_codebook(
            r#"{"M221": {"brief": "Set flow percentage", "url": "https://example", "usage_notes": "M221 S<percent>"}}"#,
        )
        .unwrap();
        assert_eq!(cb.len(), 1);
        assert!(warnings.is_empty());
        assert_eq!(cb.get("M221").unwrap().brief, "Set flow percentage");
    }

    #[test]
    fn duplicate_key_last_wins_with_warning() {
        let (cb, warnings) = parse_codebook(
            r#"{"M221": {"brief": "first"}, "M221": {"brief": "second"}}"#,
        )
        .unwrap();
        assert_eq!(cb.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert_eq!(cb.get("M221").unwrap().brief, "second");
    }

    #[test]
    fn empty_object_is_empty_codebook() {
        let (cb, warnings) = parse_codebook("{}").unwrap();
        assert!(cb.is_empty());
        assert!(warnings.is_empty());
        assert!(cb.get("M221").is_none());
    }

    #[test]
    fn missing_brief_is_error() {
        let err = parse_codebook(r#"{"M221": {"url": "https://example"}}"#).unwrap_err();
        assert!(matches!(err, CodebookError::MissingBrief(name) if name == "M221"));
    }

    #[test]
    fn bad_name_is_error() {
        let err = parse_codebook(r#"{"221M": {"brief": "x"}}"#).unwrap_err();
        assert!(matches!(err, CodebookError::BadName(_)));
    }

    #[test]
    fn builtin_covers_dialect() {
        let cb = Codebook::builtin();
        for name in ["G0", "G1", "G28", "G92", "M104", "M106", "M109", "M220", "M221"] {
            assert!(cb.contains(name), "builtin codebook missing {name}");
        }
    }
}
