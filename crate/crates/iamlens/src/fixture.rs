//! Fixture files: a complete simulated account plus the credentials that
//! act against it.
//!
//! The file is JSON with top-level keys `account_id`, `users`, `groups`,
//! `roles`, `managed_policies` and `credentials`; policy documents inside
//! use the ordinary vendor policy grammar. `page_size` and
//! `throttle_every` are optional test knobs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iamlens_core::AccountSnapshot;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialEntry {
    pub access_key_id: String,
    pub secret_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_token: Option<String>,
    /// User name the key belongs to.
    pub user: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureDocument {
    #[serde(flatten)]
    pub snapshot: AccountSnapshot,
    #[serde(default)]
    pub credentials: Vec<CredentialEntry>,
    /// List-call page size; defaults to 100 like the real API.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_size: Option<usize>,
    /// When set, every Nth call fails with Throttling. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throttle_every: Option<u64>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture does not match the schema: {0}")]
    SchemaViolation(#[from] serde_json::Error),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("credential {access_key_id} names unknown user {user}")]
    UnknownCredentialUser { access_key_id: String, user: String },
}

/// A loaded fixture: validated snapshot, credential map, lint output from
/// identity-document normalization.
#[derive(Debug, Clone)]
pub struct LoadedFixture {
    pub document: FixtureDocument,
    pub lints: Vec<String>,
}

pub fn load_fixture_str(text: &str) -> Result<LoadedFixture, FixtureError> {
    let mut document: FixtureDocument = serde_json::from_str(text)?;
    let lints = normalize(&mut document.snapshot)?;
    document
        .snapshot
        .validate()
        .map_err(|e| FixtureError::DanglingReference(e.to_string()))?;
    for cred in &document.credentials {
        if !document.snapshot.users.contains_key(&cred.user) {
            return Err(FixtureError::UnknownCredentialUser {
                access_key_id: cred.access_key_id.clone(),
                user: cred.user.clone(),
            });
        }
    }
    Ok(LoadedFixture { document, lints })
}

pub fn load_fixture(path: &Path) -> Result<LoadedFixture, FixtureError> {
    let text = std::fs::read_to_string(path)?;
    load_fixture_str(&text)
}

/// Validate every document and apply the missing-Resource lint to identity
/// policies. Trust policies are validated under trust rules and left alone.
fn normalize(snapshot: &mut AccountSnapshot) -> Result<Vec<String>, FixtureError> {
    let mut lints = Vec::new();
    let mut norm_inline =
        |owner: &str, inline: &mut BTreeMap<String, iamlens_core::PolicyDocument>| {
            for (name, doc) in inline.iter_mut() {
                lints.extend(doc.normalize_identity(&format!("{owner}/{name}")));
            }
        };
    let users: Vec<String> = snapshot.users.keys().cloned().collect();
    for name in users {
        let user = snapshot.users.get_mut(&name).expect("key just listed");
        norm_inline(&format!("user {name}"), &mut user.inline_policies);
    }
    let groups: Vec<String> = snapshot.groups.keys().cloned().collect();
    for name in groups {
        let group = snapshot.groups.get_mut(&name).expect("key just listed");
        norm_inline(&format!("group {name}"), &mut group.inline_policies);
    }
    let roles: Vec<String> = snapshot.roles.keys().cloned().collect();
    for name in roles {
        let role = snapshot.roles.get_mut(&name).expect("key just listed");
        norm_inline(&format!("role {name}"), &mut role.inline_policies);
    }
    for (arn, policy) in snapshot.managed_policies.iter_mut() {
        for (vid, doc) in policy.versions.iter_mut() {
            lints.extend(doc.normalize_identity(&format!("{arn}@{vid}")));
        }
    }
    // Document-level validation after normalization.
    let check = |doc: &iamlens_core::PolicyDocument, trust: bool, what: &str| {
        doc.validate(trust)
            .map_err(|e| FixtureError::DanglingReference(format!("{what}: {e}")))
    };
    for user in snapshot.users.values() {
        for (name, doc) in &user.inline_policies {
            check(doc, false, &format!("user {} inline {name}", user.name))?;
        }
    }
    for group in snapshot.groups.values() {
        for (name, doc) in &group.inline_policies {
            check(doc, false, &format!("group {} inline {name}", group.name))?;
        }
    }
    for role in snapshot.roles.values() {
        check(&role.trust_policy, true, &format!("role {} trust", role.name))?;
        for (name, doc) in &role.inline_policies {
            check(doc, false, &format!("role {} inline {name}", role.name))?;
        }
    }
    for (arn, policy) in &snapshot.managed_policies {
        for (vid, doc) in &policy.versions {
            check(doc, false, &format!("{arn}@{vid}"))?;
        }
    }
    Ok(lints)
}

/// The 22 scenario fixtures shipped with the crate, in benchmark order.
pub const SCENARIO_FILES: [(&str, &str); 22] = [
    ("S1", include_str!("../data/scenarios/S1.json")),
    ("S2", include_str!("../data/scenarios/S2.json")),
    ("S3", include_str!("../data/scenarios/S3.json")),
    ("S4", include_str!("../data/scenarios/S4.json")),
    ("S5", include_str!("../data/scenarios/S5.json")),
    ("S6", include_str!("../data/scenarios/S6.json")),
    ("S7", include_str!("../data/scenarios/S7.json")),
    ("S8", include_str!("../data/scenarios/S8.json")),
    ("S9", include_str!("../data/scenarios/S9.json")),
    ("S10", include_str!("../data/scenarios/S10.json")),
    ("S11", include_str!("../data/scenarios/S11.json")),
    ("S12", include_str!("../data/scenarios/S12.json")),
    ("S13", include_str!("../data/scenarios/S13.json")),
    ("S14", include_str!("../data/scenarios/S14.json")),
    ("S15", include_str!("../data/scenarios/S15.json")),
    ("S16", include_str!("../data/scenarios/S16.json")),
    ("S17", include_str!("../data/scenarios/S17.json")),
    ("S18", include_str!("../data/scenarios/S18.json")),
    ("S19", include_str!("../data/scenarios/S19.json")),
    ("S20", include_str!("../data/scenarios/S20.json")),
    ("S21", include_str!("../data/scenarios/S21.json")),
    ("S22", include_str!("../data/scenarios/S22.json")),
];

/// ARNs of well-known vendor-managed policies, used by the inverse
/// enumeration fallback when ListPolicies is denied.
pub const AWS_MANAGED_ARNS: &str = include_str!("../data/aws_managed_arns.json");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_scenarios_load_and_validate() {
        for (name, text) in SCENARIO_FILES {
            let loaded = load_fixture_str(text)
                .unwrap_or_else(|e| panic!("scenario {name} must load: {e}"));
            assert!(!loaded.document.credentials.is_empty(), "{name} ships credentials");
        }
    }

    #[test]
    fn s1_shape_matches_expectations() {
        let s1 = load_fixture_str(SCENARIO_FILES[0].1).unwrap().document;
        assert_eq!(s1.snapshot.users.len(), 1);
        assert_eq!(s1.snapshot.groups.len(), 1);
        assert_eq!(s1.snapshot.roles.len(), 1);
        let customer =
            s1.snapshot.managed_policies.values().filter(|p| !p.is_aws_managed).count();
        let vendor = s1.snapshot.managed_policies.values().filter(|p| p.is_aws_managed).count();
        assert_eq!((customer, vendor), (3, 1));
    }

    #[test]
    fn dangling_attachment_is_rejected() {
        let mut s1: FixtureDocument = serde_json::from_str(SCENARIO_FILES[0].1).unwrap();
        s1.snapshot
            .users
            .get_mut("S1_UserA")
            .unwrap()
            .attached
            .push(iamlens_core::Arn::iam("100000000001", "policy", "missing"));
        let text = serde_json::to_string(&s1).unwrap();
        assert!(matches!(load_fixture_str(&text), Err(FixtureError::DanglingReference(_))));
    }

    #[test]
    fn empty_account_is_valid() {
        let loaded = load_fixture_str(r#"{"account_id":"123456789012"}"#).unwrap();
        assert!(loaded.document.snapshot.users.is_empty());
    }
}
