//! Deep capabilities: policy-version fuzzing, inverse enumeration through
//! ListEntitiesForPolicy, and the simulation / read-only-fuzz sweeps.
//!
//! The default-vs-historical comparison model lives in `iamlens_core::diff`
//! and is re-exported here alongside its data types.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iamlens_core::{Arn, Decision, PolicyDocument};

pub use iamlens_core::diff::{diff_versions, expand_document, PrivilegeTriple, VersionDiff};

use crate::backend::{
    drain_pages, ApiError, ApiRequest, ApiResponse, EntityAttachment, PolicyScope,
};
use crate::engine::env::{EnvIamData, MergeEvent, Provenance, SimPolicyKey};
use crate::session::Session;

pub const DEFAULT_MAX_NUMERIC_ID: u32 = 10;

// --- action catalogs ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub action: String,
    pub read_only: bool,
    /// `"no-args"` when the call can be issued without parameters;
    /// otherwise a parameter template.
    pub invocation: String,
}

impl CatalogEntry {
    pub fn is_no_args(&self) -> bool {
        self.invocation == "no-args"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionCatalog {
    entries: Vec<CatalogEntry>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("duplicate action {0}")]
    DuplicateAction(String),
    #[error("catalog has no read-only entries")]
    NoReadOnlyEntries,
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
}

impl ActionCatalog {
    /// Parse the JSON Lines catalog format. Duplicate actions are rejected;
    /// an empty catalog is allowed, but a non-empty one must contain at
    /// least one read-only entry.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let entry: CatalogEntry = serde_json::from_str(line)
                .map_err(|source| CatalogError::Parse { line: idx + 1, source })?;
            if !seen.insert(entry.action.clone()) {
                return Err(CatalogError::DuplicateAction(entry.action));
            }
            entries.push(entry);
        }
        if !entries.is_empty() && !entries.iter().any(|e| e.read_only) {
            return Err(CatalogError::NoReadOnlyEntries);
        }
        Ok(ActionCatalog { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CatalogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The scenario-minimal catalog shipped with the crate: every concrete
    /// action that appears in the scenario fixtures.
    pub fn shipped_scenario_catalog() -> Self {
        Self::parse(include_str!("../data/catalog_scenarios.jsonl"))
            .expect("shipped catalog parses")
    }

    /// The larger seed catalog.
    pub fn shipped_seed_catalog() -> Self {
        Self::parse(include_str!("../data/catalog_seed.jsonl")).expect("shipped catalog parses")
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.action.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Read-only entries that need no parameters: the fuzzable subset.
    pub fn fuzzable(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.iter().filter(|e| e.read_only && e.is_no_args())
    }
}

// --- version fuzzing ---------------------------------------------------------

/// Marker used when the backend never disclosed which version is default.
pub const AMBIGUOUS_VERSION: &str = "ambiguous";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionProbeResult {
    pub policy_arn: String,
    pub found: BTreeMap<String, PolicyDocument>,
    /// A version token, or [`AMBIGUOUS_VERSION`].
    pub default_version_id: String,
    pub probes_issued: u32,
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("version fuzzing denied outright on {0}")]
    Unfuzzable(String),
    #[error(transparent)]
    Api(#[from] ApiError),
}

/// Probe `v1..v{max_numeric_id}` with GetPolicyVersion, collecting every
/// version that exists. Deleted versions leave holes in the numbering, so
/// the sweep continues past misses. The default version comes from the
/// per-version default flag in the responses.
pub fn fuzz_versions(
    session: &Session,
    policy_arn: &Arn,
    max_numeric_id: u32,
) -> Result<VersionProbeResult, FuzzError> {
    let mut found = BTreeMap::new();
    let mut default_version_id: Option<String> = None;
    let mut probes_issued = 0u32;
    for n in 1..=max_numeric_id {
        let vid = format!("v{n}");
        probes_issued += 1;
        match session.call(&ApiRequest::GetPolicyVersion {
            policy_arn: policy_arn.clone(),
            version_id: vid.clone(),
        }) {
            Ok(ApiResponse::PolicyVersion { version, document, .. }) => {
                if version.is_default {
                    default_version_id = Some(version.version_id.clone());
                }
                found.insert(vid, document);
            }
            Ok(_) => return Err(FuzzError::Api(ApiError::Transport("wrong payload".into()))),
            Err(ApiError::NoSuchEntity(_)) => continue,
            Err(err) if err.is_access_denied() && probes_issued == 1 => {
                return Err(FuzzError::Unfuzzable(policy_arn.render()));
            }
            Err(err) if err.is_access_denied() => continue,
            Err(err) => return Err(FuzzError::Api(err)),
        }
    }
    Ok(VersionProbeResult {
        policy_arn: policy_arn.render(),
        found,
        default_version_id: default_version_id.unwrap_or_else(|| AMBIGUOUS_VERSION.to_string()),
        probes_issued,
    })
}

// --- inverse enumeration -----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseOutcome {
    /// ListPolicies supplied an authoritative attachment map.
    Primary,
    /// Known and well-known policy ARNs were replayed; coverage is partial.
    Fallback,
    /// Both paths denied; nothing merged.
    Unavailable,
}

/// Map policies back to the entities they are attached to, filling
/// attachment lists the forward chains could not produce.
///
/// Primary path: ListPolicies(Scope=All, OnlyAttached=true), then
/// ListEntitiesForPolicy per returned ARN. Fallback path: replay
/// ListEntitiesForPolicy over every previously discovered policy ARN plus
/// the shipped vendor-managed list.
pub fn inverse_enumerate(
    session: &Session,
    env: &mut EnvIamData,
    scope_entities: &BTreeSet<String>,
    vendor_arns: &[String],
) -> Result<InverseOutcome, ApiError> {
    let listed = drain_pages(|marker| match session.call(&ApiRequest::ListPolicies {
        scope: PolicyScope::All,
        only_attached: true,
        marker,
    }) {
        Ok(ApiResponse::ManagedList(page)) => Ok(page),
        Ok(_) => Err(ApiError::Transport("wrong payload".into())),
        Err(e) => Err(e),
    });

    match listed {
        Ok(policies) => {
            let mut resolved = Vec::new();
            for summary in &policies {
                env.apply(MergeEvent::PolicyMeta {
                    policy: summary.arn.render(),
                    name: summary.name.clone(),
                    aws_managed: Some(summary.is_aws_managed),
                });
                env.apply(MergeEvent::DefaultVersion {
                    policy: summary.arn.render(),
                    vid: summary.default_version_id.clone(),
                });
                if let Ok(entities) = entities_for(session, &summary.arn) {
                    resolved.push((summary.arn.render(), summary.name.clone(), entities));
                }
            }
            for (policy, name, entities) in resolved {
                merge_attachments(env, scope_entities, &policy, &name, &entities);
            }
            // A drained ListPolicies + per-policy entity listing is the
            // complete attachment map: entities with no hits have no
            // attachments.
            for arn in scope_entities {
                if env.entity(arn).is_some() {
                    env.apply(MergeEvent::AttachedListed {
                        entity: arn.clone(),
                        provenance: Provenance::Inverse,
                    });
                }
            }
            Ok(InverseOutcome::Primary)
        }
        Err(err) if err.is_access_denied() => {
            let mut candidates: BTreeSet<String> = env.policies.keys().cloned().collect();
            candidates.extend(vendor_arns.iter().cloned());
            let mut any = false;
            for policy in candidates {
                let Ok(arn) = Arn::parse(&policy) else { continue };
                match entities_for(session, &arn) {
                    Ok(entities) => {
                        any = true;
                        let name = arn.short_name().to_string();
                        merge_attachments(env, scope_entities, &policy, &name, &entities);
                    }
                    Err(err) if err.is_access_denied() => {
                        env.note(format!("inverse fallback denied on {policy}"));
                        return Ok(InverseOutcome::Unavailable);
                    }
                    Err(ApiError::NoSuchEntity(_)) => continue,
                    Err(err) => return Err(err),
                }
            }
            if any {
                Ok(InverseOutcome::Fallback)
            } else {
                Ok(InverseOutcome::Unavailable)
            }
        }
        Err(err) => Err(err),
    }
}

fn entities_for(session: &Session, policy_arn: &Arn) -> Result<Vec<EntityAttachment>, ApiError> {
    drain_pages(|marker| match session.call(&ApiRequest::ListEntitiesForPolicy {
        policy_arn: policy_arn.clone(),
        marker,
    }) {
        Ok(ApiResponse::EntityList(page)) => Ok(page),
        Ok(_) => Err(ApiError::Transport("wrong payload".into())),
        Err(e) => Err(e),
    })
}

fn merge_attachments(
    env: &mut EnvIamData,
    scope_entities: &BTreeSet<String>,
    policy: &str,
    name: &str,
    entities: &[EntityAttachment],
) {
    for attachment in entities {
        let entity_arn = attachment.arn.render();
        if !scope_entities.contains(&entity_arn) {
            continue;
        }
        env.apply(MergeEvent::AttachedEdge {
            entity: entity_arn,
            policy: policy.to_string(),
            name: name.to_string(),
            provenance: Provenance::Inverse,
        });
    }
    env.apply(MergeEvent::PolicyMeta {
        policy: policy.to_string(),
        name: name.to_string(),
        aws_managed: None,
    });
}

// --- sweeps -------------------------------------------------------------------

pub const SIMULATION_BATCH: usize = 100;

/// Everything a simulation sweep of one target reveals: the allowed action
/// set plus the per-policy reconstruction derived from matched statements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimulationFindings {
    pub allowed: BTreeSet<String>,
    pub per_policy: BTreeMap<SimPolicyKey, BTreeSet<String>>,
    /// Groups revealed by matched group-sourced statements (user targets).
    pub groups: BTreeMap<String, String>,
}

/// Simulate the whole catalog against each target, batching at the backend
/// limit. An AccessDenied on the simulate call itself surfaces as the
/// error, signalling the caller to fall back to read-only fuzzing.
pub fn sweep_simulation(
    session: &Session,
    targets: &[Arn],
    catalog: &ActionCatalog,
) -> Result<BTreeMap<String, SimulationFindings>, ApiError> {
    let mut out = BTreeMap::new();
    for target in targets {
        let mut findings = SimulationFindings::default();
        let actions: Vec<String> = catalog.actions().map(str::to_string).collect();
        for batch in actions.chunks(SIMULATION_BATCH) {
            let response = session.call(&ApiRequest::SimulatePrincipalPolicy {
                policy_source_arn: target.clone(),
                action_names: batch.to_vec(),
            })?;
            let ApiResponse::Simulation(results) = response else {
                return Err(ApiError::Transport("wrong payload".into()));
            };
            for result in results {
                if result.decision != Decision::Allow {
                    continue;
                }
                findings.allowed.insert(result.action.clone());
                for source in result.matched {
                    let key = SimPolicyKey {
                        entity_arn: source.entity_arn.render(),
                        inline: source.policy_arn.is_none(),
                        policy_name: source.policy_name.clone(),
                        policy_arn: source.policy_arn.as_ref().map(Arn::render),
                    };
                    findings.per_policy.entry(key).or_default().insert(result.action.clone());
                    if source.entity_kind == crate::backend::EntityKind::Group {
                        findings
                            .groups
                            .insert(source.entity_arn.render(), source.entity_arn.short_name().to_string());
                    }
                }
            }
        }
        out.insert(target.render(), findings);
    }
    Ok(out)
}

/// Invoke every no-args read-only catalog entry through the backend gate
/// and collect the allowed ones. Per-call denials are discarded; other
/// errors are recorded but never fatal.
pub fn sweep_readonly_fuzz(session: &Session, catalog: &ActionCatalog) -> BTreeSet<String> {
    let mut allowed = BTreeSet::new();
    for entry in catalog.fuzzable() {
        match session.call(&ApiRequest::ProbeAction { action: entry.action.clone() }) {
            Ok(ApiResponse::ActionAllowed { action }) => {
                allowed.insert(action);
            }
            Ok(_) | Err(_) => {}
        }
    }
    allowed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_rejects_duplicates() {
        let text = r#"{"action":"iam:GetPolicy","read_only":true,"invocation":"no-args"}
{"action":"iam:GetPolicy","read_only":true,"invocation":"no-args"}"#;
        assert!(matches!(ActionCatalog::parse(text), Err(CatalogError::DuplicateAction(_))));
    }

    #[test]
    fn empty_catalog_is_fine() {
        let catalog = ActionCatalog::parse("").unwrap();
        assert!(catalog.is_empty());
    }

    #[test]
    fn shipped_catalogs_parse_and_cover_s22() {
        let scenario = ActionCatalog::shipped_scenario_catalog();
        let seed = ActionCatalog::shipped_seed_catalog();
        assert!(scenario.len() >= 100, "scenario catalog has {}", scenario.len());
        assert!(seed.len() >= 400, "seed catalog has {}", seed.len());
        // s3:ListBucket is read-only but requires a bucket argument, so the
        // no-args fuzz sweep can never exercise it.
        let entry = scenario.entries().iter().find(|e| e.action == "s3:ListBucket").unwrap();
        assert!(entry.read_only && !entry.is_no_args());
        for action in [
            "rds:DescribeDBSnapshots",
            "rds:DescribeDBSecurityGroups",
            "rds:DescribeDBInstances",
            "rds:DescribeDBClusters",
            "ec2:DescribeAddresses",
            "ec2:DescribeBundleTasks",
            "ec2:DescribeInstances",
            "lambda:ListLayers",
            "lambda:ListFunctions",
            "cloudformation:ListStacks",
        ] {
            let entry = scenario.entries().iter().find(|e| e.action == action).unwrap();
            assert!(entry.read_only && entry.is_no_args(), "{action} must be fuzzable");
        }
    }
}
