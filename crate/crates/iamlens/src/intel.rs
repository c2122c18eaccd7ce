//! Action intelligence: severity, MITRE ATT&CK mapping, and abuse
//! methodology per action, loaded from an extensible JSON Lines catalog.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::VisionReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
    PrivEscVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionIntel {
    pub action: String,
    pub severity: Severity,
    /// ATT&CK tactic code, e.g. TA0004.
    pub tactic: String,
    /// Technique code, e.g. T1078.
    pub technique: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_technique: Option<String>,
    pub abuse: String,
    pub example_command: String,
}

impl ActionIntel {
    fn validate(&self) -> Result<(), String> {
        let tech_ok = |code: &str| {
            let bytes = code.as_bytes();
            if bytes.len() == 5 {
                bytes[0] == b'T' && bytes[1..].iter().all(u8::is_ascii_digit)
            } else if bytes.len() == 9 {
                bytes[0] == b'T'
                    && bytes[1..5].iter().all(u8::is_ascii_digit)
                    && bytes[5] == b'.'
                    && bytes[6..].iter().all(u8::is_ascii_digit)
            } else {
                false
            }
        };
        if !tech_ok(&self.technique) {
            return Err(format!("technique {} is not T####(.###)", self.technique));
        }
        if let Some(sub) = &self.sub_technique {
            if !tech_ok(sub) {
                return Err(format!("sub-technique {sub} is not T####.###"));
            }
        }
        Ok(())
    }
}

/// Lookup result: catalog entry or the action handed back for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntelAnnotation {
    Known(ActionIntel),
    Unknown { action: String },
}

#[derive(Debug, Error)]
pub enum IntelError {
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("duplicate action {0}")]
    DuplicateAction(String),
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct IntelCatalog {
    by_action: BTreeMap<String, ActionIntel>,
}

impl IntelCatalog {
    pub fn parse(text: &str) -> Result<Self, IntelError> {
        let mut by_action = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let entry: ActionIntel = serde_json::from_str(line).map_err(|e| {
                IntelError::SchemaViolation { line: idx + 1, message: e.to_string() }
            })?;
            entry.validate().map_err(|message| IntelError::SchemaViolation {
                line: idx + 1,
                message,
            })?;
            if by_action.insert(entry.action.clone(), entry.clone()).is_some() {
                return Err(IntelError::DuplicateAction(entry.action));
            }
        }
        Ok(IntelCatalog { by_action })
    }

    pub fn load(path: &Path) -> Result<Self, IntelError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The seed catalog shipped with the crate: every action used by the
    /// scenario fixtures plus common console actions.
    pub fn shipped_seed() -> Self {
        Self::parse(include_str!("../data/intel_seed.jsonl")).expect("shipped seed parses")
    }

    pub fn len(&self) -> usize {
        self.by_action.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_action.is_empty()
    }

    /// Exact-name lookup; total over every input.
    pub fn classify(&self, action: &str) -> IntelAnnotation {
        match self.by_action.get(action) {
            Some(entry) => IntelAnnotation::Known(entry.clone()),
            None => IntelAnnotation::Unknown { action: action.to_string() },
        }
    }

    /// Annotate every distinct action appearing in the report's policy
    /// documents or allowed sets. Nothing else in the report changes, and
    /// enriching twice is the same as enriching once.
    pub fn enrich(&self, report: &VisionReport) -> VisionReport {
        let mut enriched = report.clone();
        enriched.intel = report
            .mentioned_actions()
            .into_iter()
            .map(|action| {
                let annotation = self.classify(&action);
                (action, annotation)
            })
            .collect();
        enriched
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_seed_loads_with_expected_entries() {
        let catalog = IntelCatalog::shipped_seed();
        assert!(catalog.len() >= 50, "seed has {} entries", catalog.len());
        match catalog.classify("iam:SetDefaultPolicyVersion") {
            IntelAnnotation::Known(entry) => assert_eq!(entry.severity, Severity::PrivEscVector),
            IntelAnnotation::Unknown { .. } => panic!("seed must map iam:SetDefaultPolicyVersion"),
        }
        match catalog.classify("s3:ListBucket") {
            IntelAnnotation::Known(entry) => assert_eq!(entry.severity, Severity::Low),
            IntelAnnotation::Unknown { .. } => panic!("seed must map s3:ListBucket"),
        }
    }

    #[test]
    fn duplicate_actions_are_rejected() {
        let line = r#"{"action":"iam:GetPolicy","severity":"Low","tactic":"TA0007","technique":"T1069","sub_technique":"T1069.003","abuse":"x","example_command":"y"}"#;
        let text = format!("{line}\n{line}\n");
        assert!(matches!(IntelCatalog::parse(&text), Err(IntelError::DuplicateAction(_))));
    }

    #[test]
    fn empty_catalog_and_unknown_lookups() {
        let catalog = IntelCatalog::parse("").unwrap();
        assert!(catalog.is_empty());
        assert_eq!(
            catalog.classify("made:UpAction"),
            IntelAnnotation::Unknown { action: "made:UpAction".into() }
        );
    }

    #[test]
    fn bad_technique_codes_are_schema_violations() {
        let text = r#"{"action":"x:Y","severity":"Low","tactic":"TA0007","technique":"X123","abuse":"a","example_command":"b"}"#;
        assert!(matches!(IntelCatalog::parse(text), Err(IntelError::SchemaViolation { .. })));
    }
}
