//! Work scheduling for the enumeration run.
//!
//! Facets form a work queue keyed by (target, facet); a session claims a
//! facet only if its last relevant call was not denied for that operation
//! class, and ties between capable sessions go to the lowest session
//! index. The deterministic driver executes the canonical work order on
//! one logical worker; the bounded-parallel driver executes each pass's
//! independent items on real threads and merges results in canonical
//! order, so both converge on the same store.

use std::collections::{BTreeMap, BTreeSet};

use iamlens_core::{account::trust_admits, Arn, PolicyDocument};

use crate::backend::{ApiError, ApiRequest, ApiResponse, Page};
use crate::deepenum::{
    self, fuzz_versions, inverse_enumerate, sweep_readonly_fuzz, sweep_simulation, FuzzError,
    AMBIGUOUS_VERSION, DEFAULT_MAX_NUMERIC_ID,
};
use crate::session::{PrincipalKind, Session};

use super::env::{
    EnvEntityKind, EnvIamData, FacetStatus, Facet, MergeEvent, Provenance,
};
use super::{call_retry, RunOptions};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Work {
    GroupsDirect(String),
    GroupsList,
    GroupMembers(String),
    ListRoles,
    Assume(String),
    InlineList(String),
    InlineDoc(String, String),
    AttachedList(String),
    VersionList(String),
    VersionGet(String),
    VersionFuzz(String),
    PolicyDoc(String, String),
    /// Inverse enumeration, keyed by the entities whose attachment lists
    /// currently need it so newly scoped entities re-trigger the pass.
    Inverse(String),
}

impl Work {
    fn key(&self) -> String {
        match self {
            Work::GroupsDirect(u) => format!("groups-direct:{u}"),
            Work::GroupsList => "groups-list".into(),
            Work::GroupMembers(g) => format!("group-members:{g}"),
            Work::ListRoles => "list-roles".into(),
            Work::Assume(r) => format!("assume:{r}"),
            Work::InlineList(e) => format!("inline-list:{e}"),
            Work::InlineDoc(e, n) => format!("inline-doc:{e}:{n}"),
            Work::AttachedList(e) => format!("attached-list:{e}"),
            Work::VersionList(p) => format!("version-list:{p}"),
            Work::VersionGet(p) => format!("version-get:{p}"),
            Work::VersionFuzz(p) => format!("version-fuzz:{p}"),
            Work::PolicyDoc(p, _) => format!("policy-doc:{p}"),
            Work::Inverse(needy) => format!("inverse:{needy}"),
        }
    }
}

const PROBE_CLASS: &str = "GetAccountAuthorizationDetails";

fn op_class(work: &Work, kind: EnvEntityKind) -> &'static str {
    match work {
        Work::GroupsDirect(_) => "ListGroupsForUser",
        Work::GroupsList => "ListGroups",
        Work::GroupMembers(_) => "GetGroup",
        Work::ListRoles => "ListRoles",
        Work::Assume(_) => "AssumeRole",
        Work::InlineList(_) => match kind {
            EnvEntityKind::User => "ListUserPolicies",
            EnvEntityKind::Group => "ListGroupPolicies",
            EnvEntityKind::Role => "ListRolePolicies",
        },
        Work::InlineDoc(..) => match kind {
            EnvEntityKind::User => "GetUserPolicy",
            EnvEntityKind::Group => "GetGroupPolicy",
            EnvEntityKind::Role => "GetRolePolicy",
        },
        Work::AttachedList(_) => match kind {
            EnvEntityKind::User => "ListAttachedUserPolicies",
            EnvEntityKind::Group => "ListAttachedGroupPolicies",
            EnvEntityKind::Role => "ListAttachedRolePolicies",
        },
        Work::VersionList(_) => "ListPolicyVersions",
        Work::VersionGet(_) => "GetPolicy",
        Work::VersionFuzz(_) | Work::PolicyDoc(..) => "GetPolicyVersion",
        Work::Inverse(_) => "ListEntitiesForPolicy",
    }
}

pub(super) struct Orchestrator {
    env: EnvIamData,
    sessions: Vec<Session>,
    targets: Vec<Arn>,
    options: RunOptions,
    denied: BTreeSet<(String, &'static str)>,
    attempts: BTreeSet<(String, String)>,
    done: BTreeSet<String>,
    probed: BTreeSet<String>,
    demoted: BTreeSet<String>,
    scopes_derived: bool,
    short_circuited: bool,
}

impl Orchestrator {
    pub(super) fn new(
        env: EnvIamData,
        sessions: Vec<Session>,
        targets: Vec<Arn>,
        options: RunOptions,
    ) -> Self {
        let mut orchestrator = Orchestrator {
            env,
            sessions,
            targets,
            options,
            denied: BTreeSet::new(),
            attempts: BTreeSet::new(),
            done: BTreeSet::new(),
            probed: BTreeSet::new(),
            demoted: BTreeSet::new(),
            scopes_derived: false,
            short_circuited: false,
        };
        for target in orchestrator.targets.clone() {
            orchestrator.env.apply(MergeEvent::EntitySeen {
                kind: EnvEntityKind::User,
                arn: target.render(),
                name: target.short_name().to_string(),
            });
        }
        orchestrator
    }

    pub(super) fn run(&mut self) {
        self.probe_new_sessions();
        while !self.short_circuited {
            let progress = self.pass();
            if !progress {
                break;
            }
        }
        if !self.short_circuited {
            self.gaad_fill_if_gaps();
        }
        self.record_terminal_gaps();
        self.sweeps();
    }

    pub(super) fn finish(self) -> (EnvIamData, Vec<String>) {
        let notes = self.env.notes.clone();
        (self.env, notes)
    }

    fn session_key(&self, idx: usize) -> String {
        self.sessions[idx].principal_arn.render()
    }

    fn is_denied(&self, idx: usize, class: &'static str) -> bool {
        self.denied.contains(&(self.session_key(idx), class))
    }

    fn mark_denied(&mut self, idx: usize, class: &'static str) {
        self.denied.insert((self.session_key(idx), class));
    }

    fn exhausted(&self, key: &str, class: &'static str) -> bool {
        (0..self.sessions.len()).all(|idx| {
            self.attempts.contains(&(key.to_string(), self.session_key(idx)))
                || self.is_denied(idx, class)
        })
    }

    // --- probes ---------------------------------------------------------

    /// Each session attempts the short-circuit probe before any chain
    /// enumeration; newly assumed role sessions probe as they join.
    fn probe_new_sessions(&mut self) {
        if !self.options.short_circuit_enabled {
            return;
        }
        for idx in 0..self.sessions.len() {
            let key = self.session_key(idx);
            if self.probed.contains(&key) || self.short_circuited {
                continue;
            }
            self.probed.insert(key);
            if self.try_gaad(idx) {
                self.short_circuited = true;
                return;
            }
        }
    }

    fn try_gaad(&mut self, idx: usize) -> bool {
        if self.is_denied(idx, PROBE_CLASS) {
            return false;
        }
        match call_retry(&self.sessions[idx], &ApiRequest::GetAccountAuthorizationDetails) {
            Ok(ApiResponse::AccountAuthorizationDetails(snapshot)) => {
                self.merge_snapshot(&snapshot);
                true
            }
            Ok(_) => false,
            Err(err) => {
                if err.is_access_denied() {
                    self.mark_denied(idx, PROBE_CLASS);
                }
                false
            }
        }
    }

    fn gaad_fill_if_gaps(&mut self) {
        if !self.has_gaps() {
            return;
        }
        for idx in 0..self.sessions.len() {
            if self.try_gaad(idx) {
                return;
            }
        }
    }

    // --- the pass -------------------------------------------------------

    fn pass(&mut self) -> bool {
        let items = self.generate_work();
        let mut progress = false;
        if self.options.deterministic || self.options.worker_bound == 1 {
            for item in items {
                if self.short_circuited {
                    break;
                }
                progress |= self.attempt(&item);
            }
        } else {
            progress = self.parallel_pass(items);
        }
        if !self.short_circuited {
            self.deduce_fallback_groups();
            self.derive_scopes_if_ready();
        }
        progress
    }

    fn generate_work(&self) -> Vec<Work> {
        let mut items = Vec::new();
        // Group membership per target: direct call first, account fallback
        // second.
        let mut need_fallback = false;
        for target in &self.targets {
            let arn = target.render();
            if self.groups_unknown(&arn) {
                items.push(Work::GroupsDirect(arn));
                need_fallback = true;
            }
        }
        if need_fallback {
            items.push(Work::GroupsList);
            if self.done.contains("groups-list") {
                for group in self.env.arns_of_kind(EnvEntityKind::Group) {
                    if !self.done.contains(&format!("group-members:{group}")) {
                        items.push(Work::GroupMembers(group));
                    }
                }
            }
        }
        if !self.done.contains("list-roles") {
            items.push(Work::ListRoles);
        }
        if self.options.tcrem_enabled {
            for role in self.assumable_roles() {
                items.push(Work::Assume(role));
            }
        }
        for entity in self.scope_entities() {
            let Some(record) = self.env.entity(&entity) else { continue };
            if !record.inline.listed {
                items.push(Work::InlineList(entity.clone()));
            }
            for (name, doc) in &record.inline.docs {
                if doc.is_none() {
                    items.push(Work::InlineDoc(entity.clone(), name.clone()));
                }
            }
            if record.attached.listed.is_none() {
                items.push(Work::AttachedList(entity.clone()));
            }
        }
        let mut inverse_needy: Vec<String> = Vec::new();
        for entity in self.scope_entities() {
            if self.env.facet_status(&entity, Facet::AttachedList) == FacetStatus::Missing {
                let kind =
                    self.env.entity(&entity).map(|e| e.kind).unwrap_or(EnvEntityKind::User);
                let class = op_class(&Work::AttachedList(entity.clone()), kind);
                if self.exhausted(&format!("attached-list:{entity}"), class) {
                    inverse_needy.push(entity);
                }
            }
        }
        for policy in self.scope_policies() {
            let Some(record) = self.env.policy(&policy) else { continue };
            if !record.version_known() {
                items.push(Work::VersionList(policy.clone()));
                items.push(Work::VersionGet(policy.clone()));
                let list_done = self.exhausted(&format!("version-list:{policy}"), "ListPolicyVersions");
                let get_done = self.exhausted(&format!("version-get:{policy}"), "GetPolicy");
                if list_done && get_done {
                    items.push(Work::VersionFuzz(policy.clone()));
                }
            } else if let Some(vid) = record.default_version_id.clone() {
                if record.default_document().is_none() {
                    items.push(Work::PolicyDoc(policy.clone(), vid));
                }
            }
        }
        if !inverse_needy.is_empty() {
            inverse_needy.sort();
            items.push(Work::Inverse(inverse_needy.join(",")));
        }
        items.retain(|item| !self.done.contains(&item.key()));
        items
    }

    fn attempt(&mut self, item: &Work) -> bool {
        let key = item.key();
        if self.done.contains(&key) {
            return false;
        }
        let kind = self.work_entity_kind(item);
        let class = op_class(item, kind);
        let candidates = self.candidates_for(item);
        let mut progress = false;
        for idx in candidates {
            let attempt_key = (key.clone(), self.session_key(idx));
            if self.attempts.contains(&attempt_key) || self.is_denied(idx, class) {
                continue;
            }
            self.attempts.insert(attempt_key);
            progress = true;
            match self.execute(idx, item) {
                Ok(events) => {
                    self.env.apply_all(events);
                    self.done.insert(key);
                    break;
                }
                Err(err) if err.is_access_denied() => self.mark_denied(idx, class),
                Err(ApiError::NoSuchEntity(what)) => {
                    self.env.note(format!("{} reported missing {what}", item.key()));
                    self.done.insert(key);
                    break;
                }
                Err(err) => self.env.note(format!("{}: {err}", item.key())),
            }
        }
        progress
    }

    /// Execute each item on its lowest-index capable session, fanning the
    /// independent backend calls out across a bounded pool. Results merge
    /// in canonical item order, so the store converges on the same facts
    /// the deterministic driver produces.
    fn parallel_pass(&mut self, items: Vec<Work>) -> bool {
        // Assumptions and the inverse/fuzz paths mutate orchestrator state;
        // keep them on the coordinating thread.
        let (stateful, parallel): (Vec<_>, Vec<_>) = items.into_iter().partition(|w| {
            matches!(w, Work::Assume(_) | Work::Inverse(_) | Work::VersionFuzz(_))
        });
        let mut planned: Vec<(Work, usize, &'static str)> = Vec::new();
        for item in parallel {
            let key = item.key();
            if self.done.contains(&key) {
                continue;
            }
            let class = op_class(&item, self.work_entity_kind(&item));
            let chosen = self.candidates_for(&item).into_iter().find(|idx| {
                !self.attempts.contains(&(key.clone(), self.session_key(*idx)))
                    && !self.is_denied(*idx, class)
            });
            if let Some(idx) = chosen {
                self.attempts.insert((key.clone(), self.session_key(idx)));
                planned.push((item, idx, class));
            }
        }
        let mut progress = !planned.is_empty();
        let bound = self.options.worker_bound.max(1);
        for chunk in planned.chunks(bound) {
            let results: Vec<Result<Vec<MergeEvent>, ApiError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(item, idx, _)| {
                        let session = self.sessions[*idx].clone();
                        let item = item.clone();
                        let env_view = &self.env;
                        scope.spawn(move || execute_stateless(&session, &item, env_view))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            for ((item, idx, class), result) in chunk.iter().zip(results) {
                match result {
                    Ok(events) => {
                        self.env.apply_all(events);
                        self.done.insert(item.key());
                    }
                    Err(err) if err.is_access_denied() => self.mark_denied(*idx, class),
                    Err(ApiError::NoSuchEntity(what)) => {
                        self.env.note(format!("{} reported missing {what}", item.key()));
                        self.done.insert(item.key());
                    }
                    Err(err) => self.env.note(format!("{}: {err}", item.key())),
                }
            }
        }
        for item in stateful {
            if self.short_circuited {
                break;
            }
            progress |= self.attempt(&item);
        }
        progress
    }

    fn work_entity_kind(&self, item: &Work) -> EnvEntityKind {
        match item {
            Work::InlineList(e) | Work::InlineDoc(e, _) | Work::AttachedList(e) => {
                self.env.entity(e).map(|r| r.kind).unwrap_or(EnvEntityKind::User)
            }
            _ => EnvEntityKind::User,
        }
    }

    fn candidates_for(&self, item: &Work) -> Vec<usize> {
        match item {
            Work::Assume(role) => {
                let Some(trust) =
                    self.env.entity(role).and_then(|r| r.trust.clone())
                else {
                    return Vec::new();
                };
                (0..self.sessions.len())
                    .filter(|idx| {
                        let session = &self.sessions[*idx];
                        session.chain.len() + 1 <= self.options.max_role_depth
                            && trust_admits(&trust, &session.principal_arn)
                    })
                    .collect()
            }
            _ => (0..self.sessions.len()).collect(),
        }
    }

    fn execute(&mut self, idx: usize, item: &Work) -> Result<Vec<MergeEvent>, ApiError> {
        if let Work::Assume(role) = item {
            return self.execute_assume(idx, role);
        }
        if let Work::Inverse(needy) = item {
            return self.execute_inverse(idx, needy);
        }
        if let Work::VersionFuzz(policy) = item {
            return self.execute_fuzz(idx, policy);
        }
        let events = execute_stateless(&self.sessions[idx], item, &self.env)?;
        Ok(events)
    }

    fn execute_assume(&mut self, idx: usize, role: &str) -> Result<Vec<MergeEvent>, ApiError> {
        let role_arn = Arn::parse(role).map_err(|e| ApiError::Transport(e.to_string()))?;
        match self.sessions[idx].assume_role(&role_arn) {
            Ok(session) => {
                self.sessions.push(session);
                self.probe_new_sessions();
            }
            Err(err) => {
                // Known but unassumed: its facets can still be completed by
                // other sessions' IAM reads. Denial memory stays untouched;
                // AssumeRole failures are role-specific, not an op class.
                self.demoted.insert(role.to_string());
                self.env.note(format!("role {role} known but unassumed: {err}"));
            }
        }
        Ok(Vec::new())
    }

    fn execute_fuzz(&mut self, idx: usize, policy: &str) -> Result<Vec<MergeEvent>, ApiError> {
        let arn = Arn::parse(policy).map_err(|e| ApiError::Transport(e.to_string()))?;
        match fuzz_versions(&self.sessions[idx], &arn, DEFAULT_MAX_NUMERIC_ID) {
            Ok(result) => {
                let mut events = Vec::new();
                for (vid, doc) in &result.found {
                    events.push(MergeEvent::VersionSeen { policy: policy.into(), vid: vid.clone() });
                    events.push(MergeEvent::VersionDoc {
                        policy: policy.into(),
                        vid: vid.clone(),
                        doc: doc.clone(),
                        fuzzed: true,
                    });
                }
                if result.default_version_id == AMBIGUOUS_VERSION {
                    events.push(MergeEvent::DefaultAmbiguous { policy: policy.into() });
                } else {
                    events.push(MergeEvent::DefaultVersion {
                        policy: policy.into(),
                        vid: result.default_version_id.clone(),
                    });
                }
                Ok(events)
            }
            Err(FuzzError::Unfuzzable(_)) => {
                Err(ApiError::AccessDenied { operation: "GetPolicyVersion".into() })
            }
            Err(FuzzError::Api(err)) => Err(err),
        }
    }

    fn execute_inverse(&mut self, idx: usize, needy: &str) -> Result<Vec<MergeEvent>, ApiError> {
        let scope: BTreeSet<String> = self.scope_entities().into_iter().collect();
        let session = self.sessions[idx].clone();
        let outcome =
            inverse_enumerate(&session, &mut self.env, &scope, &self.options.vendor_arns)?;
        match outcome {
            deepenum::InverseOutcome::Primary | deepenum::InverseOutcome::Fallback => {
                self.done.insert(format!("inverse:{needy}"));
            }
            deepenum::InverseOutcome::Unavailable => {
                return Err(ApiError::AccessDenied {
                    operation: "ListEntitiesForPolicy".into(),
                });
            }
        }
        Ok(Vec::new())
    }

    // --- pure derivations -------------------------------------------------

    fn groups_unknown(&self, user: &str) -> bool {
        self.env.entity(user).map_or(true, |e| e.groups.is_none())
    }

    fn deduce_fallback_groups(&mut self) {
        if !self.done.contains("groups-list") {
            return;
        }
        let groups = self.env.arns_of_kind(EnvEntityKind::Group);
        let all_members_known = groups.iter().all(|g| {
            self.env.entity(g).map_or(false, |e| e.members.is_some())
        });
        if !all_members_known {
            return;
        }
        for target in self.targets.clone() {
            let arn = target.render();
            if !self.groups_unknown(&arn) {
                continue;
            }
            let mine: BTreeSet<String> = groups
                .iter()
                .filter(|g| {
                    self.env
                        .entity(g)
                        .and_then(|e| e.members.as_ref())
                        .map_or(false, |m| m.contains(&arn))
                })
                .cloned()
                .collect();
            self.env.apply(MergeEvent::GroupsResolved { user: arn, groups: mine });
        }
    }

    fn derive_scopes_if_ready(&mut self) {
        if self.scopes_derived || !self.done.contains("list-roles") {
            return;
        }
        self.scopes_derived = true;
        self.derive_scopes();
    }

    fn derive_scopes(&mut self) {
        for target in self.targets.clone() {
            let scope = derive_role_scope(&self.env, &target);
            self.env.apply(MergeEvent::RoleScope { user: target.render(), roles: scope });
        }
    }

    /// Roles whose trust policy admits a live session, minus already-held
    /// and demoted ones.
    fn assumable_roles(&self) -> Vec<String> {
        let held: BTreeSet<String> =
            self.sessions.iter().map(|s| s.principal_arn.render()).collect();
        self.env
            .arns_of_kind(EnvEntityKind::Role)
            .into_iter()
            .filter(|role| !held.contains(role) && !self.demoted.contains(role))
            .filter(|role| {
                let Some(trust) = self.env.entity(role).and_then(|r| r.trust.as_ref()) else {
                    return false;
                };
                self.sessions.iter().any(|s| {
                    s.chain.len() + 1 <= self.options.max_role_depth
                        && trust_admits(trust, &s.principal_arn)
                })
            })
            .collect()
    }

    fn scope_entities(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for target in &self.targets {
            let arn = target.render();
            if seen.insert(arn.clone()) {
                out.push(arn.clone());
            }
            if let Some(entity) = self.env.entity(&arn) {
                if let Some(groups) = &entity.groups {
                    for group in groups {
                        if seen.insert(group.clone()) {
                            out.push(group.clone());
                        }
                    }
                }
                if let Some(scope) = &entity.role_scope {
                    for role in scope.keys() {
                        if seen.insert(role.clone()) {
                            out.push(role.clone());
                        }
                    }
                }
            }
        }
        out
    }

    fn scope_policies(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for entity in self.scope_entities() {
            if let Some(record) = self.env.entity(&entity) {
                for policy in record.attached.entries.keys() {
                    if seen.insert(policy.clone()) {
                        out.push(policy.clone());
                    }
                }
            }
        }
        out
    }

    fn has_gaps(&self) -> bool {
        for target in &self.targets {
            let arn = target.render();
            if self.env.facet_status(&arn, Facet::GroupMembership) != FacetStatus::Complete
                || self.env.facet_status(&arn, Facet::RoleScope) != FacetStatus::Complete
            {
                return true;
            }
        }
        for entity in self.scope_entities() {
            for facet in [
                Facet::InlineNames,
                Facet::InlineDocs,
                Facet::AttachedList,
                Facet::AttachedVersion,
                Facet::AttachedDocs,
            ] {
                if self.env.facet_status(&entity, facet) != FacetStatus::Complete {
                    return true;
                }
            }
        }
        false
    }

    fn record_terminal_gaps(&mut self) {
        for target in self.targets.clone() {
            let arn = target.render();
            if self.groups_unknown(&arn) {
                self.env.apply(MergeEvent::GroupsUnresolvable { user: arn.clone() });
                self.env.note(format!("group membership unresolvable for {arn}"));
            }
            if self.env.entity(&arn).map_or(true, |e| e.role_scope.is_none()) {
                self.env.note(format!("role scope unresolved for {arn}"));
            }
        }
    }

    // --- full-account snapshot merge --------------------------------------

    fn merge_snapshot(&mut self, snapshot: &iamlens_core::AccountSnapshot) {
        let mut events = Vec::new();
        for user in snapshot.users.values() {
            let arn = user.arn.render();
            events.push(MergeEvent::EntitySeen {
                kind: EnvEntityKind::User,
                arn: arn.clone(),
                name: user.name.clone(),
            });
            let groups: BTreeSet<String> = user
                .group_names
                .iter()
                .filter_map(|g| snapshot.group_by_name(g))
                .map(|g| g.arn.render())
                .collect();
            events.push(MergeEvent::GroupsResolved { user: arn.clone(), groups });
            push_entity_snapshot(&mut events, snapshot, &arn, &user.inline_policies, &user.attached);
        }
        for group in snapshot.groups.values() {
            let arn = group.arn.render();
            events.push(MergeEvent::EntitySeen {
                kind: EnvEntityKind::Group,
                arn: arn.clone(),
                name: group.name.clone(),
            });
            let members: BTreeSet<String> = snapshot
                .users
                .values()
                .filter(|u| u.group_names.contains(&group.name))
                .map(|u| u.arn.render())
                .collect();
            events.push(MergeEvent::GroupMembers { group: arn.clone(), members });
            push_entity_snapshot(&mut events, snapshot, &arn, &group.inline_policies, &group.attached);
        }
        for role in snapshot.roles.values() {
            let arn = role.arn.render();
            events.push(MergeEvent::EntitySeen {
                kind: EnvEntityKind::Role,
                arn: arn.clone(),
                name: role.name.clone(),
            });
            events.push(MergeEvent::TrustDoc { role: arn.clone(), doc: role.trust_policy.clone() });
            push_entity_snapshot(&mut events, snapshot, &arn, &role.inline_policies, &role.attached);
        }
        for policy in snapshot.managed_policies.values() {
            let arn = policy.arn.render();
            events.push(MergeEvent::PolicyMeta {
                policy: arn.clone(),
                name: policy.name.clone(),
                aws_managed: Some(policy.is_aws_managed),
            });
            events.push(MergeEvent::DefaultVersion {
                policy: arn.clone(),
                vid: policy.default_version_id.clone(),
            });
            for (vid, doc) in &policy.versions {
                events.push(MergeEvent::VersionSeen { policy: arn.clone(), vid: vid.clone() });
                events.push(MergeEvent::VersionDoc {
                    policy: arn.clone(),
                    vid: vid.clone(),
                    doc: doc.clone(),
                    fuzzed: false,
                });
            }
        }
        self.env.apply_all(events);
        // Trust documents are complete now; (re)derive role scopes.
        self.derive_scopes();
        self.scopes_derived = true;
    }

    // --- sweeps -----------------------------------------------------------

    fn sweeps(&mut self) {
        if !self.options.simulation_enabled && !self.options.fuzz_enabled {
            return;
        }
        let Some(catalog) = self.options.catalog.clone() else { return };
        for target in self.targets.clone() {
            let Some(session) = self
                .sessions
                .iter()
                .find(|s| s.kind == PrincipalKind::User && s.principal_arn == target)
                .cloned()
            else {
                continue;
            };
            let mut fuzz_after = self.options.fuzz_enabled;
            if self.options.simulation_enabled {
                let mut sim_targets = vec![target.clone()];
                if let Some(scope) =
                    self.env.entity(&target.render()).and_then(|e| e.role_scope.clone())
                {
                    for role in scope.keys() {
                        if let Ok(arn) = Arn::parse(role) {
                            sim_targets.push(arn);
                        }
                    }
                }
                match sweep_simulation(&session, &sim_targets, &catalog) {
                    Ok(findings) => {
                        for (sim_target, finding) in findings {
                            self.env.apply(MergeEvent::SimAllowed {
                                target: sim_target.clone(),
                                actions: finding.allowed.clone(),
                            });
                            for (key, actions) in finding.per_policy {
                                self.env.apply(MergeEvent::SimPolicyActions { key, actions });
                            }
                            if sim_target == target.render() {
                                for (group_arn, group_name) in finding.groups {
                                    self.env.apply(MergeEvent::SimGroupAssoc {
                                        user: sim_target.clone(),
                                        group_arn,
                                        group_name,
                                    });
                                }
                            }
                        }
                    }
                    Err(err) if err.is_access_denied() => {
                        self.env.note(format!(
                            "simulation denied for {}; falling back to read-only fuzzing",
                            target.render()
                        ));
                        fuzz_after = true;
                    }
                    Err(err) => self.env.note(format!("simulation sweep: {err}")),
                }
            }
            if fuzz_after {
                let allowed = sweep_readonly_fuzz(&session, &catalog);
                self.env.apply(MergeEvent::FuzzAllowed { user: target.render(), actions: allowed });
            }
        }
    }
}

/// Snapshot projection for one entity: inline listing plus documents, and
/// the attachment list with Gaad provenance.
fn push_entity_snapshot(
    events: &mut Vec<MergeEvent>,
    snapshot: &iamlens_core::AccountSnapshot,
    entity_arn: &str,
    inline: &BTreeMap<String, PolicyDocument>,
    attached: &[Arn],
) {
    events.push(MergeEvent::InlineListed {
        entity: entity_arn.to_string(),
        names: inline.keys().cloned().collect(),
    });
    for (name, doc) in inline {
        events.push(MergeEvent::InlineDoc {
            entity: entity_arn.to_string(),
            name: name.clone(),
            doc: doc.clone(),
        });
    }
    for policy_arn in attached {
        let rendered = policy_arn.render();
        let name = snapshot
            .policy(policy_arn)
            .map(|p| p.name.clone())
            .unwrap_or_else(|| policy_arn.short_name().to_string());
        events.push(MergeEvent::AttachedEdge {
            entity: entity_arn.to_string(),
            policy: rendered,
            name,
            provenance: Provenance::Gaad,
        });
    }
    events.push(MergeEvent::AttachedListed {
        entity: entity_arn.to_string(),
        provenance: Provenance::Gaad,
    });
}

/// Deterministic breadth-first closure over trust edges from one user. The
/// chain for a role lists every principal assumed on the way, starting at
/// the user.
pub fn derive_role_scope(env: &EnvIamData, user: &Arn) -> BTreeMap<String, Vec<String>> {
    let mut chains: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut frontier: Vec<(String, Vec<String>)> = vec![(user.render(), Vec::new())];
    let roles = env.arns_of_kind(EnvEntityKind::Role);
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (principal, chain) in &frontier {
            let Ok(principal_arn) = Arn::parse(principal) else { continue };
            for role in &roles {
                if chains.contains_key(role) {
                    continue;
                }
                let Some(trust) = env.entity(role).and_then(|r| r.trust.as_ref()) else {
                    continue;
                };
                if trust_admits(trust, &principal_arn) {
                    let mut role_chain = chain.clone();
                    role_chain.push(principal.clone());
                    chains.insert(role.clone(), role_chain.clone());
                    next.push((role.clone(), role_chain));
                }
            }
        }
        frontier = next;
    }
    chains
}

/// Work executors that only read the store and call the backend; safe to
/// fan out across threads.
fn execute_stateless(
    session: &Session,
    item: &Work,
    env: &EnvIamData,
) -> Result<Vec<MergeEvent>, ApiError> {
    let account_id = &env.account_id;
    match item {
        Work::GroupsDirect(user) => {
            let user_arn = Arn::parse(user).map_err(|e| ApiError::Transport(e.to_string()))?;
            let groups = drain(|marker| {
                call_retry(
                    session,
                    &ApiRequest::ListGroupsForUser {
                        user_name: user_arn.short_name().to_string(),
                        marker,
                    },
                )
                .and_then(group_page)
            })?;
            let mut events: Vec<MergeEvent> = groups
                .iter()
                .map(|g| MergeEvent::EntitySeen {
                    kind: EnvEntityKind::Group,
                    arn: g.arn.render(),
                    name: g.name.clone(),
                })
                .collect();
            events.push(MergeEvent::GroupsResolved {
                user: user.clone(),
                groups: groups.iter().map(|g| g.arn.render()).collect(),
            });
            Ok(events)
        }
        Work::GroupsList => {
            let groups = drain(|marker| {
                call_retry(session, &ApiRequest::ListGroups { marker }).and_then(group_page)
            })?;
            Ok(groups
                .into_iter()
                .map(|g| MergeEvent::EntitySeen {
                    kind: EnvEntityKind::Group,
                    arn: g.arn.render(),
                    name: g.name,
                })
                .collect())
        }
        Work::GroupMembers(group) => {
            let group_arn = Arn::parse(group).map_err(|e| ApiError::Transport(e.to_string()))?;
            let members = drain(|marker| {
                match call_retry(
                    session,
                    &ApiRequest::GetGroup { group_name: group_arn.short_name().to_string(), marker },
                )? {
                    ApiResponse::GroupDetail { members, .. } => Ok(members),
                    _ => Err(ApiError::Transport("wrong payload".into())),
                }
            })?;
            Ok(vec![MergeEvent::GroupMembers {
                group: group.clone(),
                members: members
                    .into_iter()
                    .map(|name| Arn::iam(account_id, "user", &name).render())
                    .collect(),
            }])
        }
        Work::ListRoles => {
            let roles = drain(|marker| match call_retry(session, &ApiRequest::ListRoles { marker })? {
                ApiResponse::RoleList(page) => Ok(page),
                _ => Err(ApiError::Transport("wrong payload".into())),
            })?;
            let mut events = Vec::new();
            for role in roles {
                events.push(MergeEvent::EntitySeen {
                    kind: EnvEntityKind::Role,
                    arn: role.arn.render(),
                    name: role.name.clone(),
                });
                events.push(MergeEvent::TrustDoc { role: role.arn.render(), doc: role.trust_policy });
            }
            Ok(events)
        }
        Work::InlineList(entity) => {
            let (kind, name) = entity_kind_name(env, entity)?;
            let names = drain(|marker| {
                let request = match kind {
                    EnvEntityKind::User => {
                        ApiRequest::ListUserPolicies { user_name: name.clone(), marker }
                    }
                    EnvEntityKind::Group => {
                        ApiRequest::ListGroupPolicies { group_name: name.clone(), marker }
                    }
                    EnvEntityKind::Role => {
                        ApiRequest::ListRolePolicies { role_name: name.clone(), marker }
                    }
                };
                match call_retry(session, &request)? {
                    ApiResponse::PolicyNameList(page) => Ok(page),
                    _ => Err(ApiError::Transport("wrong payload".into())),
                }
            })?;
            Ok(vec![MergeEvent::InlineListed {
                entity: entity.clone(),
                names: names.into_iter().collect(),
            }])
        }
        Work::InlineDoc(entity, policy_name) => {
            let (kind, name) = entity_kind_name(env, entity)?;
            let request = match kind {
                EnvEntityKind::User => ApiRequest::GetUserPolicy {
                    user_name: name,
                    policy_name: policy_name.clone(),
                },
                EnvEntityKind::Group => ApiRequest::GetGroupPolicy {
                    group_name: name,
                    policy_name: policy_name.clone(),
                },
                EnvEntityKind::Role => ApiRequest::GetRolePolicy {
                    role_name: name,
                    policy_name: policy_name.clone(),
                },
            };
            match call_retry(session, &request)? {
                ApiResponse::InlinePolicy { document, .. } => Ok(vec![MergeEvent::InlineDoc {
                    entity: entity.clone(),
                    name: policy_name.clone(),
                    doc: document,
                }]),
                _ => Err(ApiError::Transport("wrong payload".into())),
            }
        }
        Work::AttachedList(entity) => {
            let (kind, name) = entity_kind_name(env, entity)?;
            let attached = drain(|marker| {
                let request = match kind {
                    EnvEntityKind::User => {
                        ApiRequest::ListAttachedUserPolicies { user_name: name.clone(), marker }
                    }
                    EnvEntityKind::Group => {
                        ApiRequest::ListAttachedGroupPolicies { group_name: name.clone(), marker }
                    }
                    EnvEntityKind::Role => {
                        ApiRequest::ListAttachedRolePolicies { role_name: name.clone(), marker }
                    }
                };
                match call_retry(session, &request)? {
                    ApiResponse::AttachedList(page) => Ok(page),
                    _ => Err(ApiError::Transport("wrong payload".into())),
                }
            })?;
            let mut events = Vec::new();
            for policy in attached {
                events.push(MergeEvent::AttachedEdge {
                    entity: entity.clone(),
                    policy: policy.arn.render(),
                    name: policy.name.clone(),
                    provenance: Provenance::Listed,
                });
                events.push(MergeEvent::PolicyMeta {
                    policy: policy.arn.render(),
                    name: policy.name,
                    aws_managed: Some(policy.arn.account_id == "aws"),
                });
            }
            events.push(MergeEvent::AttachedListed {
                entity: entity.clone(),
                provenance: Provenance::Listed,
            });
            Ok(events)
        }
        Work::VersionList(policy) => {
            let arn = Arn::parse(policy).map_err(|e| ApiError::Transport(e.to_string()))?;
            let versions = drain(|marker| {
                match call_retry(
                    session,
                    &ApiRequest::ListPolicyVersions { policy_arn: arn.clone(), marker },
                )? {
                    ApiResponse::VersionList(page) => Ok(page),
                    _ => Err(ApiError::Transport("wrong payload".into())),
                }
            })?;
            let mut events = Vec::new();
            for version in versions {
                events.push(MergeEvent::VersionSeen {
                    policy: policy.clone(),
                    vid: version.version_id.clone(),
                });
                if version.is_default {
                    events.push(MergeEvent::DefaultVersion {
                        policy: policy.clone(),
                        vid: version.version_id,
                    });
                }
            }
            Ok(events)
        }
        Work::VersionGet(policy) => {
            let arn = Arn::parse(policy).map_err(|e| ApiError::Transport(e.to_string()))?;
            match call_retry(session, &ApiRequest::GetPolicy { policy_arn: arn })? {
                ApiResponse::PolicyMeta(summary) => Ok(vec![
                    MergeEvent::PolicyMeta {
                        policy: policy.clone(),
                        name: summary.name,
                        aws_managed: Some(summary.is_aws_managed),
                    },
                    MergeEvent::DefaultVersion {
                        policy: policy.clone(),
                        vid: summary.default_version_id,
                    },
                ]),
                _ => Err(ApiError::Transport("wrong payload".into())),
            }
        }
        Work::PolicyDoc(policy, vid) => {
            let arn = Arn::parse(policy).map_err(|e| ApiError::Transport(e.to_string()))?;
            match call_retry(
                session,
                &ApiRequest::GetPolicyVersion { policy_arn: arn, version_id: vid.clone() },
            )? {
                ApiResponse::PolicyVersion { document, version, .. } => {
                    Ok(vec![MergeEvent::VersionDoc {
                        policy: policy.clone(),
                        vid: version.version_id,
                        doc: document,
                        fuzzed: false,
                    }])
                }
                _ => Err(ApiError::Transport("wrong payload".into())),
            }
        }
        Work::Assume(_) | Work::Inverse(_) | Work::VersionFuzz(_) => {
            unreachable!("stateful items are executed by the orchestrator")
        }
    }
}

fn entity_kind_name(env: &EnvIamData, entity: &str) -> Result<(EnvEntityKind, String), ApiError> {
    env.entity(entity)
        .map(|e| (e.kind, e.name.clone()))
        .ok_or_else(|| ApiError::Transport(format!("unknown entity {entity}")))
}

fn group_page(response: ApiResponse) -> Result<Page<crate::backend::GroupSummary>, ApiError> {
    match response {
        ApiResponse::GroupList(page) => Ok(page),
        _ => Err(ApiError::Transport("wrong payload".into())),
    }
}

fn drain<T, F>(fetch: F) -> Result<Vec<T>, ApiError>
where
    F: FnMut(Option<String>) -> Result<Page<T>, ApiError>,
{
    crate::backend::drain_pages(fetch)
}
