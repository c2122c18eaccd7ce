//! The decision engine: explicit deny beats allow beats the pervasive
//! implicit deny. Condition blocks are treated as always satisfied, and
//! statement principals are never consulted here (they only matter to the
//! trust gate in the backend).

use serde::{Deserialize, Serialize};

use crate::policy::{Effect, PolicyStatement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    ExplicitDeny,
    ImplicitDeny,
}

impl Decision {
    pub fn is_allow(self) -> bool {
        self == Decision::Allow
    }
}

/// Evaluate `action` on `resource` against a gathered statement set.
/// Statement order is irrelevant: any matching Deny wins outright, any
/// matching Allow wins otherwise, and silence is an implicit deny.
pub fn evaluate(statements: &[PolicyStatement], action: &str, resource: &str) -> Decision {
    let mut allowed = false;
    for stmt in statements {
        if !stmt.matches(action, resource) {
            continue;
        }
        match stmt.effect {
            Effect::Deny => return Decision::ExplicitDeny,
            Effect::Allow => allowed = true,
        }
    }
    if allowed {
        Decision::Allow
    } else {
        Decision::ImplicitDeny
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec;
    use alloc::vec::Vec;

    use super::*;
    use crate::policy::PolicyStatement;

    #[test]
    fn explicit_deny_supersedes_allow() {
        let stmts = vec![
            PolicyStatement::allow(&["iam:*"], &["*"]),
            PolicyStatement::deny(&["iam:GetPolicy"], &["*"]),
        ];
        assert_eq!(evaluate(&stmts, "iam:GetPolicy", "*"), Decision::ExplicitDeny);
        assert_eq!(evaluate(&stmts, "iam:ListRoles", "*"), Decision::Allow);
    }

    #[test]
    fn silence_is_implicit_deny() {
        let stmts: Vec<PolicyStatement> = vec![];
        assert_eq!(evaluate(&stmts, "iam:ListRoles", "*"), Decision::ImplicitDeny);
    }

    #[test]
    fn plain_allow() {
        let stmts = vec![PolicyStatement::allow(&["iam:ListRoles"], &["*"])];
        assert_eq!(evaluate(&stmts, "iam:ListRoles", "*"), Decision::Allow);
    }

    #[test]
    fn not_action_grants_complement() {
        let mut stmt = PolicyStatement::allow(&[], &["*"]);
        stmt.not_actions.insert("iam:Delete*".into());
        let stmts = vec![stmt];
        assert_eq!(evaluate(&stmts, "iam:ListRoles", "*"), Decision::Allow);
        assert_eq!(evaluate(&stmts, "iam:DeleteUser", "*"), Decision::ImplicitDeny);
    }

    #[test]
    fn resource_scoping_applies() {
        let stmts =
            vec![PolicyStatement::allow(&["s3:GetObject"], &["arn:aws:s3:::alpha/*"])];
        assert_eq!(evaluate(&stmts, "s3:GetObject", "arn:aws:s3:::alpha/x"), Decision::Allow);
        assert_eq!(
            evaluate(&stmts, "s3:GetObject", "arn:aws:s3:::beta/x"),
            Decision::ImplicitDeny
        );
    }
}
