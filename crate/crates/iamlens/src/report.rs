//! The reconstructed vision context for one principal, serialized as JSON.
//!
//! Reports are built from the shared store after a run. Everything the
//! benchmark scores lives here; facets that stayed unknown are explicit
//! `Missing` markers in `gaps` rather than silent absences.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use iamlens_core::{Arn, PolicyDocument};

use crate::deepenum::AMBIGUOUS_VERSION;
use crate::engine::env::{
    EnvEntity, EnvIamData, Facet, FacetStatus, Provenance, SimPolicyKey,
};
use crate::intel::IntelAnnotation;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleScopeEntry {
    pub arn: String,
    /// Assumption provenance: starts at the target user, lists every
    /// principal assumed on the way to this role.
    pub chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedReportEntry {
    pub arn: String,
    pub name: String,
    /// A version token, the literal `ambiguous`, or absent when version
    /// discovery never succeeded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default_version_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub document: Option<PolicyDocument>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityReport {
    pub arn: String,
    pub name: String,
    /// Whether the complete inline-policy name set is known.
    pub inline_listed: bool,
    pub inline: BTreeMap<String, Option<PolicyDocument>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attached_listed: Option<Provenance>,
    pub attached: Vec<AttachedReportEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trust_policy: Option<PolicyDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapEntry {
    pub entity: String,
    pub facet: Facet,
    pub status: FacetStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPolicyReport {
    pub entity_arn: String,
    pub inline: bool,
    pub policy_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_arn: Option<String>,
    pub actions: BTreeSet<String>,
}

/// Reconstruction derived from simulation matched statements: which groups
/// surfaced and which policy granted which catalog actions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub groups: BTreeMap<String, String>,
    pub policies: Vec<SimPolicyReport>,
    /// Allowed action set per simulated target (self plus in-scope roles).
    pub targets: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisionReport {
    pub schema_version: u32,
    pub principal_arn: String,
    pub account_id: String,
    /// `None` while membership stayed unresolvable; empty means resolved
    /// with no groups.
    pub in_scope_groups: Option<Vec<String>>,
    pub in_scope_roles: Option<Vec<RoleScopeEntry>>,
    pub user: EntityReport,
    pub groups: BTreeMap<String, EntityReport>,
    pub roles: BTreeMap<String, EntityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulated_allowed: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fuzz_allowed: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
    pub gaps: Vec<GapEntry>,
    pub intel: BTreeMap<String, IntelAnnotation>,
    pub notes: Vec<String>,
}

impl VisionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Every distinct action mentioned in any policy document or allowed
    /// set; the action surface that intelligence enrichment annotates.
    pub fn mentioned_actions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut from_entity = |entity: &EntityReport| {
            for doc in entity.inline.values().flatten() {
                out.extend(doc.mentioned_actions());
            }
            for attached in &entity.attached {
                if let Some(doc) = &attached.document {
                    out.extend(doc.mentioned_actions());
                }
            }
        };
        from_entity(&self.user);
        for entity in self.groups.values() {
            from_entity(entity);
        }
        for entity in self.roles.values() {
            from_entity(entity);
        }
        if let Some(allowed) = &self.simulated_allowed {
            out.extend(allowed.iter().cloned());
        }
        if let Some(allowed) = &self.fuzz_allowed {
            out.extend(allowed.iter().cloned());
        }
        if let Some(simulation) = &self.simulation {
            for policy in &simulation.policies {
                out.extend(policy.actions.iter().cloned());
            }
        }
        out
    }

    /// The provenance-free projection used to compare enumeration outcomes
    /// across configurations: same facts, regardless of how they were
    /// reached.
    pub fn facet_view(&self) -> FacetView {
        let project = |entity: &EntityReport| EntityFacets {
            inline: entity.inline.clone(),
            attached: entity
                .attached
                .iter()
                .map(|a| {
                    (a.arn.clone(), (a.name.clone(), a.default_version_id.clone(), a.document.clone()))
                })
                .collect(),
        };
        FacetView {
            principal_arn: self.principal_arn.clone(),
            in_scope_groups: self.in_scope_groups.clone(),
            in_scope_roles: self.in_scope_roles.clone(),
            user: project(&self.user),
            groups: self.groups.iter().map(|(k, v)| (k.clone(), project(v))).collect(),
            roles: self.roles.iter().map(|(k, v)| (k.clone(), project(v))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityFacets {
    pub inline: BTreeMap<String, Option<PolicyDocument>>,
    pub attached: BTreeMap<String, (String, Option<String>, Option<PolicyDocument>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetView {
    pub principal_arn: String,
    pub in_scope_groups: Option<Vec<String>>,
    pub in_scope_roles: Option<Vec<RoleScopeEntry>>,
    pub user: EntityFacets,
    pub groups: BTreeMap<String, EntityFacets>,
    pub roles: BTreeMap<String, EntityFacets>,
}

fn entity_report(env: &EnvIamData, entity: &EnvEntity) -> EntityReport {
    let attached = entity
        .attached
        .entries
        .iter()
        .map(|(policy_arn, entry)| {
            let policy = env.policy(policy_arn);
            let (default_version_id, document, fuzzed) = match policy {
                Some(p) => {
                    let vid = if p.default_ambiguous {
                        Some(AMBIGUOUS_VERSION.to_string())
                    } else {
                        p.default_version_id.clone()
                    };
                    (vid, p.default_document().cloned(), p.docs_fuzzed)
                }
                None => (None, None, false),
            };
            let provenance = match entry.provenance {
                Provenance::Gaad => Provenance::Gaad,
                _ if fuzzed => Provenance::Fuzzed,
                p => p,
            };
            AttachedReportEntry {
                arn: policy_arn.clone(),
                name: entry.name.clone(),
                default_version_id,
                document,
                provenance,
            }
        })
        .collect();
    EntityReport {
        arn: entity.arn.clone(),
        name: entity.name.clone(),
        inline_listed: entity.inline.listed,
        inline: entity.inline.docs.clone(),
        attached_listed: entity.attached.listed,
        attached,
        trust_policy: entity.trust.clone(),
    }
}

/// Derive the per-target report from the shared store, narrowing the
/// account-wide knowledge to the target's own vision context.
pub fn build_report(env: &EnvIamData, target: &Arn) -> VisionReport {
    let target_arn = target.render();
    let user_entity = env.entity(&target_arn).cloned().unwrap_or_else(|| {
        // Target never surfaced: emit an all-gaps report.
        let mut store = EnvIamData::new(&env.account_id);
        store.apply(crate::engine::env::MergeEvent::EntitySeen {
            kind: crate::engine::env::EnvEntityKind::User,
            arn: target_arn.clone(),
            name: target.short_name().to_string(),
        });
        store.entity(&target_arn).cloned().expect("entity just inserted")
    });

    let in_scope_groups: Option<Vec<String>> =
        user_entity.groups.as_ref().map(|set| set.iter().cloned().collect());
    let in_scope_roles: Option<Vec<RoleScopeEntry>> = user_entity.role_scope.as_ref().map(|map| {
        map.iter()
            .map(|(arn, chain)| RoleScopeEntry { arn: arn.clone(), chain: chain.clone() })
            .collect()
    });

    let mut groups = BTreeMap::new();
    for group_arn in in_scope_groups.iter().flatten() {
        if let Some(entity) = env.entity(group_arn) {
            groups.insert(group_arn.clone(), entity_report(env, entity));
        }
    }
    let mut roles = BTreeMap::new();
    for entry in in_scope_roles.iter().flatten() {
        if let Some(entity) = env.entity(&entry.arn) {
            roles.insert(entry.arn.clone(), entity_report(env, entity));
        }
    }

    let mut gaps = Vec::new();
    let mut record_gap = |entity: &str, facet: Facet| {
        let status = env.facet_status(entity, facet);
        if status != FacetStatus::Complete {
            gaps.push(GapEntry { entity: entity.to_string(), facet, status });
        }
    };
    record_gap(&target_arn, Facet::GroupMembership);
    record_gap(&target_arn, Facet::RoleScope);
    let mut scope_entities = vec![target_arn.clone()];
    scope_entities.extend(in_scope_groups.iter().flatten().cloned());
    scope_entities.extend(in_scope_roles.iter().flatten().map(|r| r.arn.clone()));
    for entity in &scope_entities {
        for facet in [
            Facet::InlineNames,
            Facet::InlineDocs,
            Facet::AttachedList,
            Facet::AttachedVersion,
            Facet::AttachedDocs,
        ] {
            record_gap(entity, facet);
        }
    }

    let simulated_allowed = env.sim_allowed.get(&target_arn).cloned();
    let fuzz_allowed = env.fuzz_allowed.get(&target_arn).cloned();
    let simulation = build_simulation_section(env, &target_arn, &scope_entities);

    VisionReport {
        schema_version: SCHEMA_VERSION,
        principal_arn: target_arn,
        account_id: env.account_id.clone(),
        in_scope_groups,
        in_scope_roles,
        user: entity_report(env, &user_entity),
        groups,
        roles,
        simulated_allowed,
        fuzz_allowed,
        simulation,
        gaps,
        intel: BTreeMap::new(),
        notes: env.notes.clone(),
    }
}

fn build_simulation_section(
    env: &EnvIamData,
    target_arn: &str,
    scope_entities: &[String],
) -> Option<SimulationReport> {
    let groups = env.sim_groups.get(target_arn).cloned().unwrap_or_default();
    // Simulation reconstruction facets that concern this target: its own
    // policies, its simulated groups', and its in-scope roles'.
    let mut relevant: BTreeSet<String> = scope_entities.iter().cloned().collect();
    relevant.insert(target_arn.to_string());
    relevant.extend(groups.keys().cloned());
    let policies: Vec<SimPolicyReport> = env
        .sim_policies
        .iter()
        .filter(|(key, _)| relevant.contains(&key.entity_arn))
        .map(|(key, actions)| sim_policy_report(key, actions))
        .collect();
    let mut targets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    if let Some(own) = env.sim_allowed.get(target_arn) {
        targets.insert(target_arn.to_string(), own.clone());
    }
    for entity in scope_entities {
        if let Some(allowed) = env.sim_allowed.get(entity) {
            targets.insert(entity.clone(), allowed.clone());
        }
    }
    if groups.is_empty() && policies.is_empty() && targets.is_empty() {
        return None;
    }
    Some(SimulationReport { groups, policies, targets })
}

fn sim_policy_report(key: &SimPolicyKey, actions: &BTreeSet<String>) -> SimPolicyReport {
    SimPolicyReport {
        entity_arn: key.entity_arn.clone(),
        inline: key.inline,
        policy_name: key.policy_name.clone(),
        policy_arn: key.policy_arn.clone(),
        actions: actions.clone(),
    }
}
