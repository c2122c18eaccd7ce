//! Account snapshots: the users, groups, roles and managed policies that
//! make up one simulated account, plus the statement-gathering step that
//! evaluation requires (user statements include everything inherited from
//! the user's groups).

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::fmt;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arn::Arn;
use crate::policy::{PolicyDocument, PolicyStatement};

pub const CUSTOMER_POLICY_VERSION_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IamUser {
    pub name: String,
    pub arn: Arn,
    #[serde(default)]
    pub group_names: Vec<String>,
    #[serde(default)]
    pub inline_policies: BTreeMap<String, PolicyDocument>,
    /// ARNs of attached managed policies.
    #[serde(default)]
    pub attached: Vec<Arn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IamGroup {
    pub name: String,
    pub arn: Arn,
    #[serde(default)]
    pub inline_policies: BTreeMap<String, PolicyDocument>,
    #[serde(default)]
    pub attached: Vec<Arn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IamRole {
    pub name: String,
    pub arn: Arn,
    /// The AssumeRolePolicyDocument.
    pub trust_policy: PolicyDocument,
    #[serde(default)]
    pub inline_policies: BTreeMap<String, PolicyDocument>,
    #[serde(default)]
    pub attached: Vec<Arn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagedPolicy {
    pub name: String,
    pub arn: Arn,
    #[serde(default)]
    pub is_aws_managed: bool,
    /// A version token of the form `v` + integer, present in `versions`.
    pub default_version_id: String,
    pub versions: BTreeMap<String, PolicyDocument>,
}

impl ManagedPolicy {
    pub fn default_document(&self) -> &PolicyDocument {
        self.versions
            .get(&self.default_version_id)
            .expect("default_version_id always resolves in a validated snapshot")
    }
}

/// The pure entity graph of one account. Immutable after construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSnapshot {
    pub account_id: String,
    #[serde(default)]
    pub users: BTreeMap<String, IamUser>,
    #[serde(default)]
    pub groups: BTreeMap<String, IamGroup>,
    #[serde(default)]
    pub roles: BTreeMap<String, IamRole>,
    /// Keyed by rendered policy ARN; includes vendor-managed policies.
    #[serde(default)]
    pub managed_policies: BTreeMap<String, ManagedPolicy>,
}

/// The named principal is not a user or role of this account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPrincipal(pub String);

impl fmt::Display for UnknownPrincipal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown principal {}", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for UnknownPrincipal {}

/// A reference inside the snapshot does not resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingReference {
    pub holder: String,
    pub missing: String,
}

impl fmt::Display for DanglingReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} references missing {}", self.holder, self.missing)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DanglingReference {}

impl AccountSnapshot {
    pub fn user_by_name(&self, name: &str) -> Option<&IamUser> {
        self.users.get(name)
    }

    pub fn group_by_name(&self, name: &str) -> Option<&IamGroup> {
        self.groups.get(name)
    }

    pub fn role_by_name(&self, name: &str) -> Option<&IamRole> {
        self.roles.get(name)
    }

    pub fn policy(&self, arn: &Arn) -> Option<&ManagedPolicy> {
        self.managed_policies.get(&arn.render())
    }

    /// Names of groups the user belongs to, in snapshot order.
    pub fn groups_of(&self, user_name: &str) -> Vec<&IamGroup> {
        self.user_by_name(user_name)
            .map(|u| u.group_names.iter().filter_map(|g| self.group_by_name(g)).collect())
            .unwrap_or_default()
    }

    /// Gather every statement governing `principal` (a user or role ARN of
    /// this account). For users this is the union of user inline
    /// statements, default-version statements of user-attached managed
    /// policies, and the same two sets for every group containing the
    /// user. For roles: role inline plus role-attached default-version
    /// statements. Order is irrelevant to evaluation.
    pub fn effective_statements(
        &self,
        principal: &Arn,
    ) -> Result<Vec<PolicyStatement>, UnknownPrincipal> {
        let mut out = Vec::new();
        let name = principal.short_name();
        if principal.is_user() {
            let user = self
                .user_by_name(name)
                .ok_or_else(|| UnknownPrincipal(principal.render()))?;
            self.push_entity_statements(&user.inline_policies, &user.attached, &mut out);
            for group in self.groups_of(name) {
                self.push_entity_statements(&group.inline_policies, &group.attached, &mut out);
            }
        } else if principal.is_role() {
            let role = self
                .role_by_name(name)
                .ok_or_else(|| UnknownPrincipal(principal.render()))?;
            self.push_entity_statements(&role.inline_policies, &role.attached, &mut out);
        } else {
            return Err(UnknownPrincipal(principal.render()));
        }
        Ok(out)
    }

    fn push_entity_statements(
        &self,
        inline: &BTreeMap<String, PolicyDocument>,
        attached: &[Arn],
        out: &mut Vec<PolicyStatement>,
    ) {
        for doc in inline.values() {
            out.extend(doc.statements.iter().cloned());
        }
        for arn in attached {
            if let Some(policy) = self.policy(arn) {
                out.extend(policy.default_document().statements.iter().cloned());
            }
        }
    }

    /// Full referential-integrity check: every attachment resolves, every
    /// group membership resolves, every default version exists, customer
    /// policies respect the five-version cap, and ARNs carry the account
    /// id of the snapshot.
    pub fn validate(&self) -> Result<(), DanglingReference> {
        let dangle = |holder: &str, missing: &str| DanglingReference {
            holder: holder.to_owned(),
            missing: missing.to_owned(),
        };
        for (arn_text, policy) in &self.managed_policies {
            if !policy.versions.contains_key(&policy.default_version_id) {
                return Err(dangle(arn_text, &policy.default_version_id));
            }
            if !policy.is_aws_managed && policy.versions.len() > CUSTOMER_POLICY_VERSION_CAP {
                return Err(DanglingReference {
                    holder: arn_text.clone(),
                    missing: "more than five versions on a customer-managed policy".to_owned(),
                });
            }
        }
        let check_attached = |holder: &str, attached: &[Arn]| {
            for arn in attached {
                let rendered = arn.render();
                if !self.managed_policies.contains_key(&rendered) {
                    return Err(dangle(holder, &rendered));
                }
            }
            Ok(())
        };
        for user in self.users.values() {
            check_attached(&user.name, &user.attached)?;
            for group in &user.group_names {
                if !self.groups.contains_key(group) {
                    return Err(dangle(&user.name, group));
                }
            }
        }
        for group in self.groups.values() {
            check_attached(&group.name, &group.attached)?;
        }
        for role in self.roles.values() {
            check_attached(&role.name, &role.attached)?;
        }
        Ok(())
    }

    /// Roles whose trust policy admits `principal` directly.
    pub fn roles_admitting(&self, principal: &Arn) -> Vec<&IamRole> {
        self.roles.values().filter(|role| trust_admits(&role.trust_policy, principal)).collect()
    }

    /// Brute-force transitive reachability over trust edges from a set of
    /// seed principals: the reference in-scope-role computation.
    pub fn trust_reachable(&self, seeds: &[Arn]) -> BTreeSet<String> {
        let mut reached: BTreeSet<String> = BTreeSet::new();
        let mut frontier: Vec<Arn> = seeds.to_vec();
        while let Some(principal) = frontier.pop() {
            for role in self.roles_admitting(&principal) {
                if reached.insert(role.arn.render()) {
                    frontier.push(role.arn.clone());
                }
            }
        }
        reached
    }
}

/// Does this trust policy admit `principal` for sts:AssumeRole? An Allow
/// whose principal matcher matches wins unless a matching Deny exists.
pub fn trust_admits(trust: &PolicyDocument, principal: &Arn) -> bool {
    let mut allowed = false;
    for stmt in &trust.statements {
        if !stmt.covers_action("sts:AssumeRole") {
            continue;
        }
        let principal_matches =
            stmt.principal.as_ref().map_or(false, |matcher| matcher.matches(principal));
        if !principal_matches {
            continue;
        }
        match stmt.effect {
            crate::policy::Effect::Deny => return false,
            crate::policy::Effect::Allow => allowed = true,
        }
    }
    allowed
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;
    use crate::policy::trust_policy_for;

    fn snapshot() -> AccountSnapshot {
        let acct = "123456789012";
        let user_arn = Arn::iam(acct, "user", "alice");
        let policy_arn = Arn::iam(acct, "policy", "shared");
        let mut users = BTreeMap::new();
        users.insert(
            "alice".to_owned(),
            IamUser {
                name: "alice".to_owned(),
                arn: user_arn.clone(),
                group_names: vec!["ops".to_owned()],
                inline_policies: BTreeMap::from([(
                    "inline".to_owned(),
                    PolicyDocument::allow_actions(&["iam:GetUser"]),
                )]),
                attached: vec![policy_arn.clone()],
            },
        );
        let mut groups = BTreeMap::new();
        groups.insert(
            "ops".to_owned(),
            IamGroup {
                name: "ops".to_owned(),
                arn: Arn::iam(acct, "group", "ops"),
                inline_policies: BTreeMap::from([(
                    "groupdoc".to_owned(),
                    PolicyDocument::allow_actions(&["iam:ListRoles"]),
                )]),
                attached: vec![],
            },
        );
        let mut roles = BTreeMap::new();
        roles.insert(
            "deploy".to_owned(),
            IamRole {
                name: "deploy".to_owned(),
                arn: Arn::iam(acct, "role", "deploy"),
                trust_policy: trust_policy_for(&[&user_arn.render()]),
                inline_policies: BTreeMap::new(),
                attached: vec![],
            },
        );
        let mut managed_policies = BTreeMap::new();
        managed_policies.insert(
            policy_arn.render(),
            ManagedPolicy {
                name: "shared".to_owned(),
                arn: policy_arn,
                is_aws_managed: false,
                default_version_id: "v1".to_owned(),
                versions: BTreeMap::from([(
                    "v1".to_owned(),
                    PolicyDocument::allow_actions(&["s3:ListBucket"]),
                )]),
            },
        );
        AccountSnapshot {
            account_id: acct.to_owned(),
            users,
            groups,
            roles,
            managed_policies,
        }
    }

    #[test]
    fn user_statements_include_group_inheritance() {
        let snap = snapshot();
        let stmts = snap.effective_statements(&Arn::iam("123456789012", "user", "alice")).unwrap();
        let actions: BTreeSet<String> =
            stmts.iter().flat_map(|s| s.actions.iter().cloned()).collect();
        assert!(actions.contains("iam:GetUser"));
        assert!(actions.contains("s3:ListBucket"));
        assert!(actions.contains("iam:ListRoles"));
    }

    #[test]
    fn unknown_principal_errors() {
        let snap = snapshot();
        let err = snap.effective_statements(&Arn::iam("123456789012", "user", "bob"));
        assert!(err.is_err());
    }

    #[test]
    fn user_without_grants_has_no_statements() {
        let mut snap = snapshot();
        snap.users.insert(
            "bob".to_owned(),
            IamUser {
                name: "bob".to_owned(),
                arn: Arn::iam("123456789012", "user", "bob"),
                group_names: vec![],
                inline_policies: BTreeMap::new(),
                attached: vec![],
            },
        );
        let stmts = snap.effective_statements(&Arn::iam("123456789012", "user", "bob")).unwrap();
        assert!(stmts.is_empty());
    }

    #[test]
    fn validate_catches_dangling_attachment() {
        let mut snap = snapshot();
        snap.users.get_mut("alice").unwrap().attached.push(Arn::iam(
            "123456789012",
            "policy",
            "ghost",
        ));
        assert!(snap.validate().is_err());
    }

    #[test]
    fn trust_reachability_walks_chains() {
        let mut snap = snapshot();
        let deploy_arn = Arn::iam("123456789012", "role", "deploy");
        snap.roles.insert(
            "inner".to_owned(),
            IamRole {
                name: "inner".to_owned(),
                arn: Arn::iam("123456789012", "role", "inner"),
                trust_policy: trust_policy_for(&[&deploy_arn.render()]),
                inline_policies: BTreeMap::new(),
                attached: vec![],
            },
        );
        let reached =
            snap.trust_reachable(&[Arn::iam("123456789012", "user", "alice")]);
        assert_eq!(reached.len(), 2);
        assert!(reached.contains(&deploy_arn.render()));
    }

    #[test]
    fn empty_trust_admits_nobody() {
        let trust = trust_policy_for(&[]);
        assert!(!trust_admits(&trust, &Arn::iam("123456789012", "user", "alice")));
    }
}
