//! The shared per-account knowledge store that cooperative workers
//! read-merge-write.
//!
//! All mutation flows through [`EnvIamData::apply`], which is idempotent
//! (re-applying an event is a no-op) and monotone (knowledge and facet
//! status never regress). Workers therefore never need to coordinate
//! beyond taking the store lock around a batch of events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use iamlens_core::{Arn, PolicyDocument};

/// Enumeration facets tracked per entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Facet {
    GroupMembership,
    RoleScope,
    InlineNames,
    InlineDocs,
    AttachedList,
    AttachedVersion,
    AttachedDocs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FacetStatus {
    Missing,
    Names,
    Complete,
}

/// How a finding reached the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Listed,
    Fuzzed,
    Inverse,
    Gaad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvEntityKind {
    User,
    Group,
    Role,
}

/// Inline-policy knowledge for one entity. `listed` means the complete name
/// set is known; names map to their documents once fetched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineFacet {
    pub listed: bool,
    pub docs: BTreeMap<String, Option<PolicyDocument>>,
}

impl InlineFacet {
    pub fn status(&self) -> FacetStatus {
        if !self.listed && self.docs.is_empty() {
            FacetStatus::Missing
        } else if self.listed && self.docs.values().all(Option::is_some) {
            FacetStatus::Complete
        } else {
            FacetStatus::Names
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedEntry {
    pub name: String,
    pub provenance: Provenance,
}

/// Attached-managed-policy knowledge for one entity. `listed` carries the
/// provenance of an authoritative full listing when one happened; inverse
/// fallback discoveries populate `entries` without claiming completeness.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedFacet {
    pub listed: Option<Provenance>,
    pub entries: BTreeMap<String, AttachedEntry>,
}

impl AttachedFacet {
    pub fn list_status(&self) -> FacetStatus {
        if self.listed.is_some() {
            FacetStatus::Complete
        } else if !self.entries.is_empty() {
            FacetStatus::Names
        } else {
            FacetStatus::Missing
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvEntity {
    pub kind: EnvEntityKind,
    pub arn: String,
    pub name: String,
    pub inline: InlineFacet,
    pub attached: AttachedFacet,
    /// Trust document, roles only.
    pub trust: Option<PolicyDocument>,
    /// Group membership, users only: `None` until resolved; resolved-empty
    /// is meaningful knowledge.
    pub groups: Option<BTreeSet<String>>,
    /// Whether every membership path was denied. Recorded, not thrown.
    pub groups_unresolvable: bool,
    /// In-scope roles with assumption chains, users only.
    pub role_scope: Option<BTreeMap<String, Vec<String>>>,
    /// Member user ARNs, groups only; fed by the ListGroups + GetGroup
    /// fallback.
    pub members: Option<BTreeSet<String>>,
}

impl EnvEntity {
    fn new(kind: EnvEntityKind, arn: &str, name: &str) -> Self {
        EnvEntity {
            kind,
            arn: arn.to_string(),
            name: name.to_string(),
            inline: InlineFacet::default(),
            attached: AttachedFacet::default(),
            trust: None,
            groups: None,
            groups_unresolvable: false,
            role_scope: None,
            members: None,
        }
    }
}

/// Knowledge about one managed policy, shared by every entity attached to
/// it. Versions map to documents once fetched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvPolicy {
    pub arn: String,
    pub name: String,
    pub is_aws_managed: Option<bool>,
    pub default_version_id: Option<String>,
    /// The backend never disclosed which version is default.
    pub default_ambiguous: bool,
    pub versions: BTreeMap<String, Option<PolicyDocument>>,
    pub docs_fuzzed: bool,
}

impl EnvPolicy {
    pub fn default_document(&self) -> Option<&PolicyDocument> {
        let vid = self.default_version_id.as_ref()?;
        self.versions.get(vid).and_then(Option::as_ref)
    }

    pub fn version_known(&self) -> bool {
        self.default_version_id.is_some() || self.default_ambiguous
    }
}

/// Per-policy simulation reconstruction key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimPolicyKey {
    pub entity_arn: String,
    pub inline: bool,
    pub policy_name: String,
    pub policy_arn: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeEvent {
    EntitySeen { kind: EnvEntityKind, arn: String, name: String },
    TrustDoc { role: String, doc: PolicyDocument },
    GroupsResolved { user: String, groups: BTreeSet<String> },
    GroupsUnresolvable { user: String },
    GroupMembers { group: String, members: BTreeSet<String> },
    RoleScope { user: String, roles: BTreeMap<String, Vec<String>> },
    InlineListed { entity: String, names: BTreeSet<String> },
    InlineDoc { entity: String, name: String, doc: PolicyDocument },
    AttachedEdge { entity: String, policy: String, name: String, provenance: Provenance },
    AttachedListed { entity: String, provenance: Provenance },
    PolicyMeta { policy: String, name: String, aws_managed: Option<bool> },
    DefaultVersion { policy: String, vid: String },
    DefaultAmbiguous { policy: String },
    VersionSeen { policy: String, vid: String },
    VersionDoc { policy: String, vid: String, doc: PolicyDocument, fuzzed: bool },
    SimAllowed { target: String, actions: BTreeSet<String> },
    FuzzAllowed { user: String, actions: BTreeSet<String> },
    SimPolicyActions { key: SimPolicyKey, actions: BTreeSet<String> },
    SimGroupAssoc { user: String, group_arn: String, group_name: String },
}

/// The store itself. Entities are keyed by rendered ARN, policies by
/// rendered policy ARN.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvIamData {
    pub account_id: String,
    pub entities: BTreeMap<String, EnvEntity>,
    pub policies: BTreeMap<String, EnvPolicy>,
    pub sim_allowed: BTreeMap<String, BTreeSet<String>>,
    pub fuzz_allowed: BTreeMap<String, BTreeSet<String>>,
    pub sim_policies: BTreeMap<SimPolicyKey, BTreeSet<String>>,
    pub sim_groups: BTreeMap<String, BTreeMap<String, String>>,
    /// Diagnostics: dropped credentials, unresolvable facets, demoted roles.
    pub notes: Vec<String>,
    #[serde(skip)]
    journal: Vec<MergeEvent>,
    #[serde(skip)]
    record_journal: bool,
}

impl EnvIamData {
    pub fn new(account_id: &str) -> Self {
        EnvIamData { account_id: account_id.to_string(), ..Default::default() }
    }

    /// Keep a journal of applied events, for replay checks.
    pub fn with_journal(mut self) -> Self {
        self.record_journal = true;
        self
    }

    pub fn journal(&self) -> &[MergeEvent] {
        &self.journal
    }

    pub fn note(&mut self, text: impl Into<String>) {
        let text = text.into();
        if !self.notes.contains(&text) {
            self.notes.push(text);
        }
    }

    pub fn entity(&self, arn: &str) -> Option<&EnvEntity> {
        self.entities.get(arn)
    }

    pub fn policy(&self, arn: &str) -> Option<&EnvPolicy> {
        self.policies.get(arn)
    }

    fn entity_mut(&mut self, kind: EnvEntityKind, arn: &str, name: &str) -> &mut EnvEntity {
        self.entities
            .entry(arn.to_string())
            .or_insert_with(|| EnvEntity::new(kind, arn, name))
    }

    fn policy_mut(&mut self, arn: &str) -> &mut EnvPolicy {
        self.policies.entry(arn.to_string()).or_insert_with(|| EnvPolicy {
            arn: arn.to_string(),
            name: Arn::parse(arn).map(|a| a.short_name().to_string()).unwrap_or_default(),
            ..Default::default()
        })
    }

    pub fn apply(&mut self, event: MergeEvent) {
        if self.record_journal {
            self.journal.push(event.clone());
        }
        match event {
            MergeEvent::EntitySeen { kind, arn, name } => {
                self.entity_mut(kind, &arn, &name);
            }
            MergeEvent::TrustDoc { role, doc } => {
                let entity = self.entity_mut(
                    EnvEntityKind::Role,
                    &role,
                    Arn::parse(&role).map(|a| a.short_name().to_string()).unwrap_or_default().as_str(),
                );
                if entity.trust.is_none() {
                    entity.trust = Some(doc);
                }
            }
            MergeEvent::GroupsResolved { user, groups } => {
                let name = Arn::parse(&user).map(|a| a.short_name().to_string()).unwrap_or_default();
                let entity = self.entity_mut(EnvEntityKind::User, &user, &name);
                match &mut entity.groups {
                    None => entity.groups = Some(groups),
                    Some(known) => known.extend(groups),
                }
            }
            MergeEvent::GroupsUnresolvable { user } => {
                let name = Arn::parse(&user).map(|a| a.short_name().to_string()).unwrap_or_default();
                let entity = self.entity_mut(EnvEntityKind::User, &user, &name);
                if entity.groups.is_none() {
                    entity.groups_unresolvable = true;
                }
            }
            MergeEvent::GroupMembers { group, members } => {
                let name = Arn::parse(&group).map(|a| a.short_name().to_string()).unwrap_or_default();
                let entity = self.entity_mut(EnvEntityKind::Group, &group, &name);
                match &mut entity.members {
                    None => entity.members = Some(members),
                    Some(known) => known.extend(members),
                }
            }
            MergeEvent::RoleScope { user, roles } => {
                let name = Arn::parse(&user).map(|a| a.short_name().to_string()).unwrap_or_default();
                let entity = self.entity_mut(EnvEntityKind::User, &user, &name);
                match &mut entity.role_scope {
                    None => entity.role_scope = Some(roles),
                    Some(known) => {
                        for (role, chain) in roles {
                            known.entry(role).or_insert(chain);
                        }
                    }
                }
            }
            MergeEvent::InlineListed { entity, names } => {
                if let Some(e) = self.entities.get_mut(&entity) {
                    e.inline.listed = true;
                    for name in names {
                        e.inline.docs.entry(name).or_insert(None);
                    }
                }
            }
            MergeEvent::InlineDoc { entity, name, doc } => {
                if let Some(e) = self.entities.get_mut(&entity) {
                    let slot = e.inline.docs.entry(name).or_insert(None);
                    if slot.is_none() {
                        *slot = Some(doc);
                    }
                }
            }
            MergeEvent::AttachedEdge { entity, policy, name, provenance } => {
                self.policy_mut(&policy);
                if let Some(e) = self.entities.get_mut(&entity) {
                    e.attached
                        .entries
                        .entry(policy)
                        .or_insert(AttachedEntry { name, provenance });
                }
            }
            MergeEvent::AttachedListed { entity, provenance } => {
                if let Some(e) = self.entities.get_mut(&entity) {
                    if e.attached.listed.is_none() {
                        e.attached.listed = Some(provenance);
                    }
                }
            }
            MergeEvent::PolicyMeta { policy, name, aws_managed } => {
                let p = self.policy_mut(&policy);
                if !name.is_empty() {
                    p.name = name;
                }
                if p.is_aws_managed.is_none() {
                    p.is_aws_managed = aws_managed;
                }
            }
            MergeEvent::DefaultVersion { policy, vid } => {
                let p = self.policy_mut(&policy);
                if p.default_version_id.is_none() {
                    p.default_version_id = Some(vid.clone());
                }
                p.default_ambiguous = false;
                p.versions.entry(vid).or_insert(None);
            }
            MergeEvent::DefaultAmbiguous { policy } => {
                let p = self.policy_mut(&policy);
                if p.default_version_id.is_none() {
                    p.default_ambiguous = true;
                }
            }
            MergeEvent::VersionSeen { policy, vid } => {
                self.policy_mut(&policy).versions.entry(vid).or_insert(None);
            }
            MergeEvent::VersionDoc { policy, vid, doc, fuzzed } => {
                let p = self.policy_mut(&policy);
                let slot = p.versions.entry(vid).or_insert(None);
                if slot.is_none() {
                    *slot = Some(doc);
                    p.docs_fuzzed |= fuzzed;
                }
            }
            MergeEvent::SimAllowed { target, actions } => {
                self.sim_allowed.entry(target).or_default().extend(actions);
            }
            MergeEvent::FuzzAllowed { user, actions } => {
                self.fuzz_allowed.entry(user).or_default().extend(actions);
            }
            MergeEvent::SimPolicyActions { key, actions } => {
                self.sim_policies.entry(key).or_default().extend(actions);
            }
            MergeEvent::SimGroupAssoc { user, group_arn, group_name } => {
                self.sim_groups.entry(user).or_default().insert(group_arn, group_name);
            }
        }
    }

    pub fn apply_all(&mut self, events: impl IntoIterator<Item = MergeEvent>) {
        for event in events {
            self.apply(event);
        }
    }

    /// Facet status for reporting and scheduling.
    pub fn facet_status(&self, entity_arn: &str, facet: Facet) -> FacetStatus {
        let Some(entity) = self.entities.get(entity_arn) else {
            return FacetStatus::Missing;
        };
        match facet {
            Facet::GroupMembership => match &entity.groups {
                Some(_) => FacetStatus::Complete,
                None => FacetStatus::Missing,
            },
            Facet::RoleScope => match &entity.role_scope {
                Some(_) => FacetStatus::Complete,
                None => FacetStatus::Missing,
            },
            Facet::InlineNames => match entity.inline.status() {
                FacetStatus::Missing => FacetStatus::Missing,
                _ => FacetStatus::Complete,
            },
            Facet::InlineDocs => entity.inline.status(),
            Facet::AttachedList => entity.attached.list_status(),
            Facet::AttachedVersion => self.attachment_rollup(entity, |p| p.version_known()),
            Facet::AttachedDocs => self.attachment_rollup(entity, |p| {
                p.default_document().is_some()
                    || (p.default_ambiguous && p.versions.values().any(Option::is_some))
            }),
        }
    }

    fn attachment_rollup(
        &self,
        entity: &EnvEntity,
        complete: impl Fn(&EnvPolicy) -> bool,
    ) -> FacetStatus {
        if entity.attached.list_status() == FacetStatus::Missing {
            return FacetStatus::Missing;
        }
        let all = entity
            .attached
            .entries
            .keys()
            .all(|arn| self.policies.get(arn).map_or(false, &complete));
        if all && entity.attached.listed.is_some() {
            FacetStatus::Complete
        } else if all {
            FacetStatus::Names
        } else {
            FacetStatus::Names
        }
    }

    /// ARNs of users / groups / roles currently known.
    pub fn arns_of_kind(&self, kind: EnvEntityKind) -> Vec<String> {
        self.entities
            .values()
            .filter(|e| e.kind == kind)
            .map(|e| e.arn.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> PolicyDocument {
        PolicyDocument::allow_actions(&["iam:ListRoles"])
    }

    #[test]
    fn merges_are_idempotent() {
        let mut env = EnvIamData::new("123456789012").with_journal();
        let events = vec![
            MergeEvent::EntitySeen {
                kind: EnvEntityKind::User,
                arn: "arn:aws:iam::123456789012:user/a".into(),
                name: "a".into(),
            },
            MergeEvent::InlineListed {
                entity: "arn:aws:iam::123456789012:user/a".into(),
                names: BTreeSet::from(["p1".to_string()]),
            },
            MergeEvent::InlineDoc {
                entity: "arn:aws:iam::123456789012:user/a".into(),
                name: "p1".into(),
                doc: doc(),
            },
        ];
        env.apply_all(events.clone());
        let once = env.clone();
        env.apply_all(events);
        assert_eq!(env.entities, once.entities);
    }

    #[test]
    fn journal_replay_rebuilds_identical_store() {
        let mut env = EnvIamData::new("123456789012").with_journal();
        env.apply_all(vec![
            MergeEvent::EntitySeen {
                kind: EnvEntityKind::Role,
                arn: "arn:aws:iam::123456789012:role/r".into(),
                name: "r".into(),
            },
            MergeEvent::AttachedEdge {
                entity: "arn:aws:iam::123456789012:role/r".into(),
                policy: "arn:aws:iam::123456789012:policy/p".into(),
                name: "p".into(),
                provenance: Provenance::Listed,
            },
            MergeEvent::DefaultVersion {
                policy: "arn:aws:iam::123456789012:policy/p".into(),
                vid: "v1".into(),
            },
            MergeEvent::VersionDoc {
                policy: "arn:aws:iam::123456789012:policy/p".into(),
                vid: "v1".into(),
                doc: doc(),
                fuzzed: false,
            },
        ]);
        let mut replayed = EnvIamData::new("123456789012");
        replayed.apply_all(env.journal().to_vec());
        assert_eq!(replayed.entities, env.entities);
        assert_eq!(replayed.policies, env.policies);
    }

    #[test]
    fn facet_status_never_regresses() {
        let mut env = EnvIamData::new("123456789012");
        let user = "arn:aws:iam::123456789012:user/a".to_string();
        env.apply(MergeEvent::EntitySeen {
            kind: EnvEntityKind::User,
            arn: user.clone(),
            name: "a".into(),
        });
        assert_eq!(env.facet_status(&user, Facet::InlineDocs), FacetStatus::Missing);
        env.apply(MergeEvent::InlineListed {
            entity: user.clone(),
            names: BTreeSet::from(["p1".to_string()]),
        });
        assert_eq!(env.facet_status(&user, Facet::InlineDocs), FacetStatus::Names);
        env.apply(MergeEvent::InlineDoc { entity: user.clone(), name: "p1".into(), doc: doc() });
        assert_eq!(env.facet_status(&user, Facet::InlineDocs), FacetStatus::Complete);
        // Re-listing cannot demote the facet.
        env.apply(MergeEvent::InlineListed { entity: user.clone(), names: BTreeSet::new() });
        assert_eq!(env.facet_status(&user, Facet::InlineDocs), FacetStatus::Complete);
    }

    #[test]
    fn resolved_empty_groups_are_complete() {
        let mut env = EnvIamData::new("123456789012");
        let user = "arn:aws:iam::123456789012:user/a".to_string();
        env.apply(MergeEvent::GroupsResolved { user: user.clone(), groups: BTreeSet::new() });
        assert_eq!(env.facet_status(&user, Facet::GroupMembership), FacetStatus::Complete);
    }
}
