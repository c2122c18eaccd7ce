//! In-process backend serving one simulated account. Every call is
//! authorized by evaluating the caller's effective statements; payloads are
//! read straight out of the account snapshot, never invented.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use iamlens_core::{
    account::trust_admits, evaluate, AccountSnapshot, Arn, Decision, PolicyDocument,
    PolicyStatement,
};

use crate::fixture::FixtureDocument;
use crate::session::Credential;

use super::{
    ApiBackend, ApiEnvelope, ApiError, ApiRequest, ApiResponse, AttachedPolicy, CallRecord,
    EntityAttachment, EntityKind, GroupSummary, MatchedSource, Page, PolicyScope, PolicySummary,
    RoleSummary, SimulationResult, VersionSummary,
};

pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const SIMULATION_BATCH_LIMIT: usize = 100;
pub const DEFAULT_CHAIN_DEPTH_CAP: usize = 8;
const ROLE_SESSION_NAME: &str = "vision";

#[derive(Debug, Clone)]
struct TempPrincipal {
    role_arn: Arn,
    chain_depth: usize,
}

/// One simulated account behind the [`ApiBackend`] trait. The snapshot is
/// immutable after load; only the call log and the temporary-credential
/// table mutate, both behind locks, so concurrent sessions are safe.
pub struct FixtureBackend {
    snapshot: AccountSnapshot,
    credential_map: BTreeMap<String, String>,
    secrets: BTreeMap<String, String>,
    page_size: usize,
    throttle_every: Option<u64>,
    chain_depth_cap: usize,
    temp_credentials: Mutex<BTreeMap<String, TempPrincipal>>,
    temp_seq: AtomicU64,
    call_seq: AtomicU64,
    call_log: Mutex<Vec<CallRecord>>,
}

impl FixtureBackend {
    pub fn new(document: &FixtureDocument) -> Self {
        let credential_map = document
            .credentials
            .iter()
            .map(|c| (c.access_key_id.clone(), c.user.clone()))
            .collect();
        let secrets = document
            .credentials
            .iter()
            .map(|c| (c.access_key_id.clone(), c.secret_key.clone()))
            .collect();
        FixtureBackend {
            snapshot: document.snapshot.clone(),
            credential_map,
            secrets,
            page_size: document.page_size.unwrap_or(DEFAULT_PAGE_SIZE),
            throttle_every: document.throttle_every,
            chain_depth_cap: DEFAULT_CHAIN_DEPTH_CAP,
            temp_credentials: Mutex::new(BTreeMap::new()),
            temp_seq: AtomicU64::new(1),
            call_seq: AtomicU64::new(0),
            call_log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_chain_depth_cap(mut self, cap: usize) -> Self {
        self.chain_depth_cap = cap;
        self
    }

    pub fn snapshot(&self) -> &AccountSnapshot {
        &self.snapshot
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.call_log.lock().expect("call log lock").clone()
    }

    /// The credential for a fixture user, if the fixture ships one.
    pub fn credential_for_user(&self, user: &str) -> Option<Credential> {
        let (access_key_id, _) = self.credential_map.iter().find(|(_, u)| u.as_str() == user)?;
        Some(Credential {
            access_key_id: access_key_id.clone(),
            secret_key: self.secrets.get(access_key_id).cloned().unwrap_or_default(),
            session_token: None,
        })
    }

    fn resolve(&self, credential: &Credential) -> Result<(Arn, usize), ApiError> {
        if credential.is_temporary() {
            let temps = self.temp_credentials.lock().expect("temp credential lock");
            let temp = temps
                .get(&credential.access_key_id)
                .ok_or(ApiError::InvalidClientTokenId)?;
            return Ok((temp.role_arn.clone(), temp.chain_depth));
        }
        let user = self
            .credential_map
            .get(&credential.access_key_id)
            .ok_or(ApiError::InvalidClientTokenId)?;
        Ok((Arn::iam(&self.snapshot.account_id, "user", user), 0))
    }

    fn log(
        &self,
        principal: &Arn,
        operation: &str,
        action: Option<&str>,
        resource: &str,
        decision: Decision,
    ) {
        let sequence = self.call_seq.fetch_add(1, Ordering::SeqCst);
        self.call_log.lock().expect("call log lock").push(CallRecord {
            sequence,
            session_arn: principal.render(),
            operation: operation.to_string(),
            action: action.map(str::to_string),
            resource: resource.to_string(),
            decision,
        });
    }

    fn page<T: Clone>(&self, items: Vec<T>, marker: &Option<String>) -> Result<Page<T>, ApiError> {
        let offset = match marker {
            None => 0,
            Some(m) => decode_marker(m)?,
        };
        if offset > items.len() {
            return Err(ApiError::Transport("marker beyond end of listing".into()));
        }
        let end = (offset + self.page_size).min(items.len());
        let next = if end < items.len() { Some(encode_marker(end)) } else { None };
        Ok(Page { items: items[offset..end].to_vec(), marker: next })
    }

    fn statements_for(&self, principal: &Arn) -> Result<Vec<PolicyStatement>, ApiError> {
        self.snapshot
            .effective_statements(principal)
            .map_err(|e| ApiError::NoSuchEntity(e.0))
    }

    fn policy_summary(&self, arn: &str) -> Option<PolicySummary> {
        self.snapshot.managed_policies.get(arn).map(|p| PolicySummary {
            arn: p.arn.clone(),
            name: p.name.clone(),
            default_version_id: p.default_version_id.clone(),
            is_aws_managed: p.is_aws_managed,
        })
    }

    fn assume(&self, caller: &Arn, depth: usize, role_arn: &Arn) -> Result<ApiResponse, ApiError> {
        let role = self
            .snapshot
            .role_by_name(role_arn.short_name())
            .filter(|r| r.arn == *role_arn);
        let Some(role) = role else {
            self.log(caller, "AssumeRole", Some("sts:AssumeRole"), &role_arn.render(), Decision::ImplicitDeny);
            return Err(ApiError::NoSuchEntity(role_arn.render()));
        };
        if !trust_admits(&role.trust_policy, caller) {
            self.log(caller, "AssumeRole", Some("sts:AssumeRole"), &role_arn.render(), Decision::ImplicitDeny);
            return Err(ApiError::AccessDenied { operation: "AssumeRole".into() });
        }
        let next_depth = depth + 1;
        if next_depth > self.chain_depth_cap {
            return Err(ApiError::ChainDepthExceeded { depth: next_depth, cap: self.chain_depth_cap });
        }
        let seq = self.temp_seq.fetch_add(1, Ordering::SeqCst);
        let access_key_id = format!("ASIA{:016}", seq);
        let credential = Credential {
            access_key_id: access_key_id.clone(),
            secret_key: format!("temp-secret-{seq}"),
            session_token: Some(format!("token-{}-{seq}", role.name)),
        };
        self.temp_credentials.lock().expect("temp credential lock").insert(
            access_key_id,
            TempPrincipal { role_arn: role.arn.clone(), chain_depth: next_depth },
        );
        self.log(caller, "AssumeRole", Some("sts:AssumeRole"), &role_arn.render(), Decision::Allow);
        Ok(ApiResponse::AssumedRole { role_arn: role.arn.clone(), credential })
    }

    fn simulate(
        &self,
        target: &Arn,
        actions: &[String],
    ) -> Result<Vec<SimulationResult>, ApiError> {
        if actions.len() > SIMULATION_BATCH_LIMIT {
            return Err(ApiError::BatchTooLarge {
                size: actions.len(),
                limit: SIMULATION_BATCH_LIMIT,
            });
        }
        let attributed = self.attributed_statements(target)?;
        let statements: Vec<PolicyStatement> =
            attributed.iter().map(|(_, s)| s.clone()).collect();
        Ok(actions
            .iter()
            .map(|action| {
                let decision = evaluate(&statements, action, "*");
                let matched = attributed
                    .iter()
                    .filter(|(_, stmt)| stmt.matches(action, "*"))
                    .map(|(source, _)| source.clone())
                    .collect();
                SimulationResult { action: action.clone(), decision, matched }
            })
            .collect())
    }

    /// effective_statements with source attribution, for simulation
    /// responses. A user target includes all of its groups' policies.
    fn attributed_statements(
        &self,
        principal: &Arn,
    ) -> Result<Vec<(MatchedSource, PolicyStatement)>, ApiError> {
        let mut out = Vec::new();
        let name = principal.short_name();
        let push_entity = |entity_arn: &Arn,
                               kind: EntityKind,
                               inline: &BTreeMap<String, PolicyDocument>,
                               attached: &[Arn],
                               out: &mut Vec<(MatchedSource, PolicyStatement)>| {
            for (pname, doc) in inline {
                for stmt in &doc.statements {
                    out.push((
                        MatchedSource {
                            entity_arn: entity_arn.clone(),
                            entity_kind: kind,
                            policy_name: pname.clone(),
                            policy_arn: None,
                        },
                        stmt.clone(),
                    ));
                }
            }
            for arn in attached {
                if let Some(policy) = self.snapshot.policy(arn) {
                    for stmt in &policy.default_document().statements {
                        out.push((
                            MatchedSource {
                                entity_arn: entity_arn.clone(),
                                entity_kind: kind,
                                policy_name: policy.name.clone(),
                                policy_arn: Some(policy.arn.clone()),
                            },
                            stmt.clone(),
                        ));
                    }
                }
            }
        };
        if principal.is_user() {
            let user = self
                .snapshot
                .user_by_name(name)
                .ok_or_else(|| ApiError::NoSuchEntity(principal.render()))?;
            push_entity(&user.arn, EntityKind::User, &user.inline_policies, &user.attached, &mut out);
            for group in self.snapshot.groups_of(name) {
                push_entity(
                    &group.arn,
                    EntityKind::Group,
                    &group.inline_policies,
                    &group.attached,
                    &mut out,
                );
            }
        } else if principal.is_role() {
            let role = self
                .snapshot
                .role_by_name(name)
                .ok_or_else(|| ApiError::NoSuchEntity(principal.render()))?;
            push_entity(&role.arn, EntityKind::Role, &role.inline_policies, &role.attached, &mut out);
        } else {
            return Err(ApiError::NoSuchEntity(principal.render()));
        }
        Ok(out)
    }

    fn payload(&self, _principal: &Arn, request: &ApiRequest) -> Result<ApiResponse, ApiError> {
        use ApiRequest::*;
        let snap = &self.snapshot;
        let missing = |what: &str| ApiError::NoSuchEntity(what.to_string());
        match request {
            ListGroupsForUser { user_name, marker } => {
                let user = snap.user_by_name(user_name).ok_or_else(|| missing(user_name))?;
                let groups: Vec<GroupSummary> = user
                    .group_names
                    .iter()
                    .filter_map(|g| snap.group_by_name(g))
                    .map(|g| GroupSummary { name: g.name.clone(), arn: g.arn.clone() })
                    .collect();
                Ok(ApiResponse::GroupList(self.page(groups, marker)?))
            }
            ListGroups { marker } => {
                let groups: Vec<GroupSummary> = snap
                    .groups
                    .values()
                    .map(|g| GroupSummary { name: g.name.clone(), arn: g.arn.clone() })
                    .collect();
                Ok(ApiResponse::GroupList(self.page(groups, marker)?))
            }
            GetGroup { group_name, marker } => {
                let group = snap.group_by_name(group_name).ok_or_else(|| missing(group_name))?;
                let members: Vec<String> = snap
                    .users
                    .values()
                    .filter(|u| u.group_names.iter().any(|g| g == group_name))
                    .map(|u| u.name.clone())
                    .collect();
                Ok(ApiResponse::GroupDetail {
                    group: GroupSummary { name: group.name.clone(), arn: group.arn.clone() },
                    members: self.page(members, marker)?,
                })
            }
            ListUserPolicies { user_name, marker } => {
                let user = snap.user_by_name(user_name).ok_or_else(|| missing(user_name))?;
                let names: Vec<String> = user.inline_policies.keys().cloned().collect();
                Ok(ApiResponse::PolicyNameList(self.page(names, marker)?))
            }
            GetUserPolicy { user_name, policy_name } => {
                let user = snap.user_by_name(user_name).ok_or_else(|| missing(user_name))?;
                let doc = user.inline_policies.get(policy_name).ok_or_else(|| missing(policy_name))?;
                Ok(ApiResponse::InlinePolicy { policy_name: policy_name.clone(), document: doc.clone() })
            }
            ListAttachedUserPolicies { user_name, marker } => {
                let user = snap.user_by_name(user_name).ok_or_else(|| missing(user_name))?;
                Ok(ApiResponse::AttachedList(self.page(self.attached_list(&user.attached), marker)?))
            }
            ListGroupPolicies { group_name, marker } => {
                let group = snap.group_by_name(group_name).ok_or_else(|| missing(group_name))?;
                let names: Vec<String> = group.inline_policies.keys().cloned().collect();
                Ok(ApiResponse::PolicyNameList(self.page(names, marker)?))
            }
            GetGroupPolicy { group_name, policy_name } => {
                let group = snap.group_by_name(group_name).ok_or_else(|| missing(group_name))?;
                let doc = group.inline_policies.get(policy_name).ok_or_else(|| missing(policy_name))?;
                Ok(ApiResponse::InlinePolicy { policy_name: policy_name.clone(), document: doc.clone() })
            }
            ListAttachedGroupPolicies { group_name, marker } => {
                let group = snap.group_by_name(group_name).ok_or_else(|| missing(group_name))?;
                Ok(ApiResponse::AttachedList(self.page(self.attached_list(&group.attached), marker)?))
            }
            ListRoles { marker } => {
                let roles: Vec<RoleSummary> = snap
                    .roles
                    .values()
                    .map(|r| RoleSummary {
                        name: r.name.clone(),
                        arn: r.arn.clone(),
                        trust_policy: r.trust_policy.clone(),
                    })
                    .collect();
                Ok(ApiResponse::RoleList(self.page(roles, marker)?))
            }
            ListRolePolicies { role_name, marker } => {
                let role = snap.role_by_name(role_name).ok_or_else(|| missing(role_name))?;
                let names: Vec<String> = role.inline_policies.keys().cloned().collect();
                Ok(ApiResponse::PolicyNameList(self.page(names, marker)?))
            }
            GetRolePolicy { role_name, policy_name } => {
                let role = snap.role_by_name(role_name).ok_or_else(|| missing(role_name))?;
                let doc = role.inline_policies.get(policy_name).ok_or_else(|| missing(policy_name))?;
                Ok(ApiResponse::InlinePolicy { policy_name: policy_name.clone(), document: doc.clone() })
            }
            ListAttachedRolePolicies { role_name, marker } => {
                let role = snap.role_by_name(role_name).ok_or_else(|| missing(role_name))?;
                Ok(ApiResponse::AttachedList(self.page(self.attached_list(&role.attached), marker)?))
            }
            ListPolicies { scope, only_attached, marker } => {
                let attached = super::attached_policy_arns(snap);
                let policies: Vec<PolicySummary> = snap
                    .managed_policies
                    .values()
                    .filter(|p| match scope {
                        PolicyScope::All => true,
                        PolicyScope::AwsManaged => p.is_aws_managed,
                        PolicyScope::Local => !p.is_aws_managed,
                    })
                    .filter(|p| !only_attached || attached.contains_key(&p.arn.render()))
                    .map(|p| PolicySummary {
                        arn: p.arn.clone(),
                        name: p.name.clone(),
                        default_version_id: p.default_version_id.clone(),
                        is_aws_managed: p.is_aws_managed,
                    })
                    .collect();
                Ok(ApiResponse::ManagedList(self.page(policies, marker)?))
            }
            GetPolicy { policy_arn } => {
                let summary =
                    self.policy_summary(&policy_arn.render()).ok_or_else(|| missing(&policy_arn.render()))?;
                Ok(ApiResponse::PolicyMeta(summary))
            }
            ListPolicyVersions { policy_arn, marker } => {
                let policy =
                    snap.policy(policy_arn).ok_or_else(|| missing(&policy_arn.render()))?;
                let versions: Vec<VersionSummary> = policy
                    .versions
                    .keys()
                    .map(|vid| VersionSummary {
                        version_id: vid.clone(),
                        is_default: *vid == policy.default_version_id,
                    })
                    .collect();
                Ok(ApiResponse::VersionList(self.page(versions, marker)?))
            }
            GetPolicyVersion { policy_arn, version_id } => {
                let policy =
                    snap.policy(policy_arn).ok_or_else(|| missing(&policy_arn.render()))?;
                let document = policy
                    .versions
                    .get(version_id)
                    .ok_or_else(|| missing(&format!("{} version {version_id}", policy_arn.render())))?;
                Ok(ApiResponse::PolicyVersion {
                    policy_arn: policy_arn.clone(),
                    version: VersionSummary {
                        version_id: version_id.clone(),
                        is_default: *version_id == policy.default_version_id,
                    },
                    document: document.clone(),
                })
            }
            ListEntitiesForPolicy { policy_arn, marker } => {
                if snap.policy(policy_arn).is_none() {
                    return Err(missing(&policy_arn.render()));
                }
                let mut entities = Vec::new();
                for user in snap.users.values() {
                    if user.attached.contains(policy_arn) {
                        entities.push(EntityAttachment {
                            kind: EntityKind::User,
                            name: user.name.clone(),
                            arn: user.arn.clone(),
                        });
                    }
                }
                for group in snap.groups.values() {
                    if group.attached.contains(policy_arn) {
                        entities.push(EntityAttachment {
                            kind: EntityKind::Group,
                            name: group.name.clone(),
                            arn: group.arn.clone(),
                        });
                    }
                }
                for role in snap.roles.values() {
                    if role.attached.contains(policy_arn) {
                        entities.push(EntityAttachment {
                            kind: EntityKind::Role,
                            name: role.name.clone(),
                            arn: role.arn.clone(),
                        });
                    }
                }
                Ok(ApiResponse::EntityList(self.page(entities, marker)?))
            }
            GetAccountAuthorizationDetails => {
                Ok(ApiResponse::AccountAuthorizationDetails(Box::new(snap.clone())))
            }
            SimulatePrincipalPolicy { policy_source_arn, action_names } => {
                Ok(ApiResponse::Simulation(self.simulate(policy_source_arn, action_names)?))
            }
            ProbeAction { action } => Ok(ApiResponse::ActionAllowed { action: action.clone() }),
            GetCallerIdentity | AssumeRole { .. } => unreachable!("handled before gating"),
        }
    }

    fn attached_list(&self, arns: &[Arn]) -> Vec<AttachedPolicy> {
        arns.iter()
            .map(|arn| AttachedPolicy {
                arn: arn.clone(),
                name: self
                    .snapshot
                    .policy(arn)
                    .map(|p| p.name.clone())
                    .unwrap_or_else(|| arn.short_name().to_string()),
            })
            .collect()
    }
}

impl ApiBackend for FixtureBackend {
    fn call(
        &self,
        credential: &Credential,
        correlation_id: u64,
        request: &ApiRequest,
    ) -> Result<ApiEnvelope, ApiError> {
        if let Some(every) = self.throttle_every {
            let n = self.call_seq.load(Ordering::SeqCst) + 1;
            if every > 0 && n % every == 0 {
                // Consume a sequence slot so the next attempt goes through.
                self.call_seq.fetch_add(1, Ordering::SeqCst);
                return Err(ApiError::Throttling { retry_after_ms: 10 });
            }
        }
        let (principal, depth) = self.resolve(credential)?;
        let wrap = |response| ApiEnvelope { correlation_id, response };

        match request {
            ApiRequest::GetCallerIdentity => {
                let arn = if principal.is_role() {
                    Arn::assumed_role(&self.snapshot.account_id, principal.short_name(), ROLE_SESSION_NAME)
                        .render()
                } else {
                    principal.render()
                };
                self.log(&principal, "GetCallerIdentity", None, &arn, Decision::Allow);
                return Ok(wrap(ApiResponse::CallerIdentity {
                    arn,
                    account_id: self.snapshot.account_id.clone(),
                }));
            }
            ApiRequest::AssumeRole { role_arn } => {
                return self.assume(&principal, depth, role_arn).map(wrap);
            }
            _ => {}
        }

        let (action, resource) = super::gate_for(request, &self.snapshot.account_id)
            .expect("all remaining operations are gated");
        let statements = self.statements_for(&principal)?;
        let decision = evaluate(&statements, &action, &resource);
        self.log(&principal, request.operation(), Some(&action), &resource, decision);
        if decision != Decision::Allow {
            return Err(ApiError::AccessDenied { operation: request.operation().to_string() });
        }
        self.payload(&principal, request).map(wrap)
    }

    fn calls_made(&self) -> u64 {
        self.call_seq.load(Ordering::SeqCst)
    }
}

fn encode_marker(offset: usize) -> String {
    hex::encode(format!("offset:{offset}"))
}

fn decode_marker(marker: &str) -> Result<usize, ApiError> {
    let bad = || ApiError::Transport("malformed pagination marker".into());
    let bytes = hex::decode(marker).map_err(|_| bad())?;
    let text = String::from_utf8(bytes).map_err(|_| bad())?;
    text.strip_prefix("offset:").ok_or_else(bad)?.parse().map_err(|_| bad())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::drain_pages;
    use crate::fixture::load_fixture_str;
    use crate::session::Session;

    fn scenario(n: usize) -> FixtureDocument {
        let (_, text) = crate::fixture::SCENARIO_FILES[n - 1];
        load_fixture_str(text).unwrap().document
    }

    fn open(doc: &FixtureDocument, user: &str) -> (Arc<FixtureBackend>, Session) {
        let backend = Arc::new(FixtureBackend::new(doc));
        let cred = backend.credential_for_user(user).unwrap();
        let session = Session::open(backend.clone(), cred).unwrap();
        (backend, session)
    }

    #[test]
    fn caller_identity_for_user_and_unknown_key() {
        let doc = scenario(1);
        let (backend, session) = open(&doc, "S1_UserA");
        assert_eq!(session.principal_arn.render(), "arn:aws:iam::100000000001:user/S1_UserA");
        let bogus = Credential {
            access_key_id: "AKIAXXXX".into(),
            secret_key: "nope".into(),
            session_token: None,
        };
        let err = backend.call(&bogus, 1, &ApiRequest::GetCallerIdentity).unwrap_err();
        assert_eq!(err, ApiError::InvalidClientTokenId);
    }

    #[test]
    fn group_grant_allows_list_roles_for_s1() {
        let doc = scenario(1);
        let (_, session) = open(&doc, "S1_UserA");
        let response = session.call(&ApiRequest::ListRoles { marker: None }).unwrap();
        let ApiResponse::RoleList(page) = response else { panic!("wrong payload") };
        assert_eq!(page.items.len(), 1);
        assert_eq!(page.items[0].name, "S1_RoleA");
    }

    #[test]
    fn s4_denies_version_listing_and_s1_denies_gaad() {
        let doc = scenario(4);
        let (_, session) = open(&doc, "S4_UserA");
        let arn = Arn::parse("arn:aws:iam::100000000004:policy/S4_AMP_PolicyA").unwrap();
        let err = session
            .call(&ApiRequest::ListPolicyVersions { policy_arn: arn, marker: None })
            .unwrap_err();
        assert!(err.is_access_denied());

        let doc = scenario(1);
        let (_, session) = open(&doc, "S1_UserA");
        let err = session.call(&ApiRequest::GetAccountAuthorizationDetails).unwrap_err();
        assert!(err.is_access_denied());
    }

    #[test]
    fn assume_role_respects_trust_and_chains() {
        let doc = scenario(8);
        let (_, user) = open(&doc, "S8_UserA");
        let role_a = Arn::iam("100000000008", "role", "S8_RoleA");
        let role_b = Arn::iam("100000000008", "role", "S8_RoleB");

        let err = user.assume_role(&role_b).unwrap_err();
        assert!(err.is_access_denied(), "direct assumption of RoleB must fail");

        let ra = user.assume_role(&role_a).unwrap();
        assert_eq!(ra.chain.len(), 1);
        let rb = ra.assume_role(&role_b).unwrap();
        assert_eq!(rb.chain.len(), 2);

        let identity = rb.call(&ApiRequest::GetCallerIdentity).unwrap();
        let ApiResponse::CallerIdentity { arn, .. } = identity else { panic!() };
        assert!(arn.starts_with("arn:aws:sts::100000000008:assumed-role/S8_RoleB/"));
    }

    #[test]
    fn chain_depth_cap_is_enforced() {
        let doc = scenario(8);
        let backend = Arc::new(FixtureBackend::new(&doc).with_chain_depth_cap(2));
        let cred = backend.credential_for_user("S8_UserA").unwrap();
        let user = Session::open(backend.clone(), cred).unwrap();
        let ra = user.assume_role(&Arn::iam("100000000008", "role", "S8_RoleA")).unwrap();
        let rb = ra.assume_role(&Arn::iam("100000000008", "role", "S8_RoleB")).unwrap();
        let err = rb.assume_role(&Arn::iam("100000000008", "role", "S8_RoleC")).unwrap_err();
        assert!(matches!(err, ApiError::ChainDepthExceeded { depth: 3, cap: 2 }));
    }

    #[test]
    fn simulate_is_gated_and_covers_group_inheritance() {
        let doc = scenario(21);
        let (_, session) = open(&doc, "S21_UserA");
        let me = session.principal_arn.clone();
        let response = session
            .call(&ApiRequest::SimulatePrincipalPolicy {
                policy_source_arn: me,
                action_names: vec!["iam:ListRoles".into(), "s3:CreateBucket".into()],
            })
            .unwrap();
        let ApiResponse::Simulation(results) = response else { panic!() };
        assert!(results.iter().all(|r| r.decision == Decision::Allow));
        // iam:ListRoles is granted by the group inline policy.
        let list_roles = &results[0];
        assert!(list_roles
            .matched
            .iter()
            .any(|m| m.entity_kind == EntityKind::Group && m.policy_name == "S21_IP_GroupA"));

        let role_b = Arn::iam("100000000021", "role", "S21_RoleB");
        let response = session
            .call(&ApiRequest::SimulatePrincipalPolicy {
                policy_source_arn: role_b,
                action_names: vec!["s3:CreateBucket".into()],
            })
            .unwrap();
        let ApiResponse::Simulation(results) = response else { panic!() };
        assert_eq!(results[0].decision, Decision::Allow);

        // S1 grants no simulate action at all.
        let doc = scenario(1);
        let (_, s1) = open(&doc, "S1_UserA");
        let me = s1.principal_arn.clone();
        let err = s1
            .call(&ApiRequest::SimulatePrincipalPolicy {
                policy_source_arn: me,
                action_names: vec!["iam:ListRoles".into()],
            })
            .unwrap_err();
        assert!(err.is_access_denied());
    }

    #[test]
    fn simulation_batch_limit() {
        let doc = scenario(21);
        let (_, session) = open(&doc, "S21_UserA");
        let me = session.principal_arn.clone();
        let actions: Vec<String> = (0..101).map(|i| format!("svc:Action{i}")).collect();
        let err = session
            .call(&ApiRequest::SimulatePrincipalPolicy {
                policy_source_arn: me,
                action_names: actions,
            })
            .unwrap_err();
        assert!(matches!(err, ApiError::BatchTooLarge { size: 101, limit: 100 }));
    }

    #[test]
    fn pagination_truncates_and_drains() {
        let mut doc = scenario(8);
        doc.page_size = Some(1);
        let backend = Arc::new(FixtureBackend::new(&doc));
        let cred = backend.credential_for_user("S8_UserA").unwrap();
        let session = Session::open(backend, cred).unwrap();
        let first = session.call(&ApiRequest::ListRoles { marker: None }).unwrap();
        let ApiResponse::RoleList(page) = first else { panic!() };
        assert_eq!(page.items.len(), 1);
        assert!(page.marker.is_some());

        let all = drain_pages(|marker| {
            match session.call(&ApiRequest::ListRoles { marker })? {
                ApiResponse::RoleList(page) => Ok(page),
                _ => Err(ApiError::Transport("wrong payload".into())),
            }
        })
        .unwrap();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn call_log_replay_is_sound() {
        let doc = scenario(1);
        let (backend, session) = open(&doc, "S1_UserA");
        let _ = session.call(&ApiRequest::ListRoles { marker: None });
        let _ = session.call(&ApiRequest::GetAccountAuthorizationDetails);
        let _ = session.call(&ApiRequest::ListUserPolicies {
            user_name: "S1_UserA".into(),
            marker: None,
        });
        for record in backend.call_log() {
            if let Some(action) = &record.action {
                if action.starts_with("sts:") {
                    continue;
                }
                let principal = Arn::parse(&record.session_arn).unwrap();
                let statements = backend.snapshot().effective_statements(&principal).unwrap();
                assert_eq!(
                    evaluate(&statements, action, &record.resource),
                    record.decision,
                    "log record for {action} must replay to the same decision"
                );
            }
        }
    }

    #[test]
    fn throttling_fault_injection() {
        let mut doc = scenario(1);
        doc.throttle_every = Some(3);
        let backend = Arc::new(FixtureBackend::new(&doc));
        let cred = backend.credential_for_user("S1_UserA").unwrap();
        let mut throttled = 0;
        for i in 0..10 {
            if let Err(ApiError::Throttling { .. }) =
                backend.call(&cred, i, &ApiRequest::GetCallerIdentity)
            {
                throttled += 1;
            }
        }
        assert!(throttled > 0);
    }
}
