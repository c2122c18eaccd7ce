//! The IAM/STS API surface as an abstract interface.
//!
//! Two realizations exist: [`FixtureBackend`] serves a simulated account
//! in-process and authorizes every call through the policy evaluator, and
//! the `live` module builds SigV4-signed requests for real endpoints.

mod fixture;
pub mod live;
pub mod sigv4;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iamlens_core::{AccountSnapshot, Arn, Decision, PolicyDocument};

use crate::session::Credential;

pub use fixture::FixtureBackend;

/// Every supported operation. The nineteen IAM reads plus the two STS
/// calls, policy simulation, and the generic read-only probe used by the
/// fuzzing sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApiRequest {
    GetCallerIdentity,
    AssumeRole { role_arn: Arn },
    ListGroupsForUser { user_name: String, marker: Option<String> },
    ListGroups { marker: Option<String> },
    GetGroup { group_name: String, marker: Option<String> },
    ListUserPolicies { user_name: String, marker: Option<String> },
    GetUserPolicy { user_name: String, policy_name: String },
    ListAttachedUserPolicies { user_name: String, marker: Option<String> },
    ListGroupPolicies { group_name: String, marker: Option<String> },
    GetGroupPolicy { group_name: String, policy_name: String },
    ListAttachedGroupPolicies { group_name: String, marker: Option<String> },
    ListRoles { marker: Option<String> },
    ListRolePolicies { role_name: String, marker: Option<String> },
    GetRolePolicy { role_name: String, policy_name: String },
    ListAttachedRolePolicies { role_name: String, marker: Option<String> },
    ListPolicies { scope: PolicyScope, only_attached: bool, marker: Option<String> },
    GetPolicy { policy_arn: Arn },
    ListPolicyVersions { policy_arn: Arn, marker: Option<String> },
    GetPolicyVersion { policy_arn: Arn, version_id: String },
    ListEntitiesForPolicy { policy_arn: Arn, marker: Option<String> },
    GetAccountAuthorizationDetails,
    SimulatePrincipalPolicy { policy_source_arn: Arn, action_names: Vec<String> },
    /// Read-only fuzz probe: drive `action` through the authorization gate
    /// with no arguments and report whether it was allowed.
    ProbeAction { action: String },
}

impl ApiRequest {
    /// Wire name of the operation.
    pub fn operation(&self) -> &'static str {
        use ApiRequest::*;
        match self {
            GetCallerIdentity => "GetCallerIdentity",
            AssumeRole { .. } => "AssumeRole",
            ListGroupsForUser { .. } => "ListGroupsForUser",
            ListGroups { .. } => "ListGroups",
            GetGroup { .. } => "GetGroup",
            ListUserPolicies { .. } => "ListUserPolicies",
            GetUserPolicy { .. } => "GetUserPolicy",
            ListAttachedUserPolicies { .. } => "ListAttachedUserPolicies",
            ListGroupPolicies { .. } => "ListGroupPolicies",
            GetGroupPolicy { .. } => "GetGroupPolicy",
            ListAttachedGroupPolicies { .. } => "ListAttachedGroupPolicies",
            ListRoles { .. } => "ListRoles",
            ListRolePolicies { .. } => "ListRolePolicies",
            GetRolePolicy { .. } => "GetRolePolicy",
            ListAttachedRolePolicies { .. } => "ListAttachedRolePolicies",
            ListPolicies { .. } => "ListPolicies",
            GetPolicy { .. } => "GetPolicy",
            ListPolicyVersions { .. } => "ListPolicyVersions",
            GetPolicyVersion { .. } => "GetPolicyVersion",
            ListEntitiesForPolicy { .. } => "ListEntitiesForPolicy",
            GetAccountAuthorizationDetails => "GetAccountAuthorizationDetails",
            SimulatePrincipalPolicy { .. } => "SimulatePrincipalPolicy",
            ProbeAction { .. } => "ProbeAction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyScope {
    All,
    AwsManaged,
    Local,
}

/// One page of a list response; `marker` is opaque and present iff the
/// listing was truncated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub arn: Arn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSummary {
    pub name: String,
    pub arn: Arn,
    pub trust_policy: PolicyDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachedPolicy {
    pub arn: Arn,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub arn: Arn,
    pub name: String,
    pub default_version_id: String,
    pub is_aws_managed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionSummary {
    pub version_id: String,
    pub is_default: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    User,
    Group,
    Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAttachment {
    pub kind: EntityKind,
    pub name: String,
    pub arn: Arn,
}

/// Where a simulation decision came from: one matched statement source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchedSource {
    pub entity_arn: Arn,
    pub entity_kind: EntityKind,
    /// Inline policy name, or managed policy name.
    pub policy_name: String,
    /// Present for managed policies.
    pub policy_arn: Option<Arn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub action: String,
    pub decision: Decision,
    /// Sources of the statements that produced the decision.
    pub matched: Vec<MatchedSource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApiResponse {
    CallerIdentity { arn: String, account_id: String },
    AssumedRole { role_arn: Arn, credential: Credential },
    GroupList(Page<GroupSummary>),
    GroupDetail { group: GroupSummary, members: Page<String> },
    PolicyNameList(Page<String>),
    InlinePolicy { policy_name: String, document: PolicyDocument },
    AttachedList(Page<AttachedPolicy>),
    RoleList(Page<RoleSummary>),
    ManagedList(Page<PolicySummary>),
    PolicyMeta(PolicySummary),
    VersionList(Page<VersionSummary>),
    PolicyVersion { policy_arn: Arn, version: VersionSummary, document: PolicyDocument },
    EntityList(Page<EntityAttachment>),
    AccountAuthorizationDetails(Box<AccountSnapshot>),
    Simulation(Vec<SimulationResult>),
    ActionAllowed { action: String },
}

/// Response envelope: every response echoes the request's correlation id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiEnvelope {
    pub correlation_id: u64,
    pub response: ApiResponse,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ApiError {
    #[error("access denied for {operation}")]
    AccessDenied { operation: String },
    #[error("no such entity: {0}")]
    NoSuchEntity(String),
    #[error("invalid client token id")]
    InvalidClientTokenId,
    #[error("throttled; retry after {retry_after_ms}ms")]
    Throttling { retry_after_ms: u64 },
    #[error("role session chain depth {depth} exceeds cap {cap}")]
    ChainDepthExceeded { depth: usize, cap: usize },
    #[error("batch of {size} exceeds the {limit}-action limit")]
    BatchTooLarge { size: usize, limit: usize },
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

impl ApiError {
    pub fn is_access_denied(&self) -> bool {
        matches!(self, ApiError::AccessDenied { .. })
    }
}

/// Record of one gated call: who asked, what they asked for, and how the
/// authorizer ruled. Appended for allowed and denied calls alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub sequence: u64,
    pub session_arn: String,
    pub operation: String,
    /// Gate action, absent for ungated calls (GetCallerIdentity).
    pub action: Option<String>,
    pub resource: String,
    pub decision: Decision,
}

/// The abstract API surface. Implementations must be safe for concurrent
/// invocation from many sessions.
pub trait ApiBackend: Send + Sync {
    fn call(
        &self,
        credential: &Credential,
        correlation_id: u64,
        request: &ApiRequest,
    ) -> Result<ApiEnvelope, ApiError>;

    /// Total calls issued so far, allowed or denied.
    fn calls_made(&self) -> u64;
}

/// Map an operation to the IAM action that gates it and the resource ARN it
/// targets. Returns `None` for GetCallerIdentity, which requires no
/// permissions, and AssumeRole, which is gated by the target trust policy.
pub fn gate_for(request: &ApiRequest, account_id: &str) -> Option<(String, String)> {
    use ApiRequest::*;
    let iam = |ty: &str, name: &str| Arn::iam(account_id, ty, name).render();
    let account_root = format!("arn:aws:iam::{account_id}:root");
    let pair = |action: &str, resource: String| Some((action.to_string(), resource));
    match request {
        GetCallerIdentity | AssumeRole { .. } => None,
        ListGroupsForUser { user_name, .. } => {
            pair("iam:ListGroupsForUser", iam("user", user_name))
        }
        ListGroups { .. } => pair("iam:ListGroups", account_root),
        GetGroup { group_name, .. } => pair("iam:GetGroup", iam("group", group_name)),
        ListUserPolicies { user_name, .. } => {
            pair("iam:ListUserPolicies", iam("user", user_name))
        }
        GetUserPolicy { user_name, .. } => pair("iam:GetUserPolicy", iam("user", user_name)),
        ListAttachedUserPolicies { user_name, .. } => {
            pair("iam:ListAttachedUserPolicies", iam("user", user_name))
        }
        ListGroupPolicies { group_name, .. } => {
            pair("iam:ListGroupPolicies", iam("group", group_name))
        }
        GetGroupPolicy { group_name, .. } => {
            pair("iam:GetGroupPolicy", iam("group", group_name))
        }
        ListAttachedGroupPolicies { group_name, .. } => {
            pair("iam:ListAttachedGroupPolicies", iam("group", group_name))
        }
        ListRoles { .. } => pair("iam:ListRoles", account_root),
        ListRolePolicies { role_name, .. } => {
            pair("iam:ListRolePolicies", iam("role", role_name))
        }
        GetRolePolicy { role_name, .. } => pair("iam:GetRolePolicy", iam("role", role_name)),
        ListAttachedRolePolicies { role_name, .. } => {
            pair("iam:ListAttachedRolePolicies", iam("role", role_name))
        }
        ListPolicies { .. } => pair("iam:ListPolicies", account_root),
        GetPolicy { policy_arn } => pair("iam:GetPolicy", policy_arn.render()),
        ListPolicyVersions { policy_arn, .. } => {
            pair("iam:ListPolicyVersions", policy_arn.render())
        }
        GetPolicyVersion { policy_arn, .. } => {
            pair("iam:GetPolicyVersion", policy_arn.render())
        }
        ListEntitiesForPolicy { policy_arn, .. } => {
            pair("iam:ListEntitiesForPolicy", policy_arn.render())
        }
        GetAccountAuthorizationDetails => {
            pair("iam:GetAccountAuthorizationDetails", account_root)
        }
        SimulatePrincipalPolicy { policy_source_arn, .. } => {
            pair("iam:SimulatePrincipalPolicy", policy_source_arn.render())
        }
        ProbeAction { action } => pair(action, account_root),
    }
}

/// Drain a paginated call until the marker runs out.
pub fn drain_pages<T, F>(mut fetch: F) -> Result<Vec<T>, ApiError>
where
    F: FnMut(Option<String>) -> Result<Page<T>, ApiError>,
{
    let mut items = Vec::new();
    let mut marker = None;
    loop {
        let page = fetch(marker.take())?;
        items.extend(page.items);
        match page.marker {
            Some(next) => marker = Some(next),
            None => return Ok(items),
        }
    }
}

/// Pure helper shared by the fixture backend and tests: which managed
/// policies are attached to at least one entity.
pub fn attached_policy_arns(snapshot: &AccountSnapshot) -> BTreeMap<String, ()> {
    let mut out = BTreeMap::new();
    for user in snapshot.users.values() {
        for arn in &user.attached {
            out.insert(arn.render(), ());
        }
    }
    for group in snapshot.groups.values() {
        for arn in &group.attached {
            out.insert(arn.render(), ());
        }
    }
    for role in snapshot.roles.values() {
        for arn in &role.attached {
            out.insert(arn.render(), ());
        }
    }
    out
}
