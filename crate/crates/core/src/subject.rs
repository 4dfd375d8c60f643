use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    AiSystem,
    HumanGroup,
}

impl SubjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubjectKind::AiSystem => "ai_system",
            SubjectKind::HumanGroup => "human_group",
        }
    }
}

impl FromStr for SubjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ai_system" => Ok(SubjectKind::AiSystem),
            "human_group" => Ok(SubjectKind::HumanGroup),
            other => Err(Error::BadRequest(format!(
                "unknown subject kind {other:?}; expected ai_system or human_group"
            ))),
        }
    }
}

/// The evaluated entity: an AI system or a human reference group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectDescriptor {
    pub name: String,
    pub kind: SubjectKind,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl SubjectDescriptor {
    pub fn new(name: impl Into<String>, kind: SubjectKind) -> Self {
        SubjectDescriptor {
            name: name.into(),
            kind,
            metadata: BTreeMap::new(),
        }
    }
}

