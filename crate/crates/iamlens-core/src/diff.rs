//! Semantic comparison between a baseline policy version and a candidate
//! version: which privilege triples would be gained, kept, or lost if the
//! candidate became the active version.
//!
//! Statements expand into canonical `(effect, action-part, resource-part)`
//! triples. Wildcards stay literal; NotAction / NotResource sets stay
//! symbolic behind a complement marker instead of being materialized
//! against any action catalog, so the comparison is exact and
//! catalog-independent.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::policy::{Effect, PolicyDocument};

/// One side of a triple: either a literal pattern or the complement of a
/// pattern set (`NotAction`/`NotResource`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriplePart {
    Pattern(String),
    /// Everything except the contained patterns, taken as one unit; the
    /// complement of a set is not the union of per-element complements.
    Complement(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrivilegeTriple {
    pub effect: Effect,
    pub action: TriplePart,
    pub resource: TriplePart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionDiff {
    pub baseline_version: String,
    pub candidate_version: String,
    /// Present in candidate only: privileges gained on activation.
    pub new: BTreeSet<PrivilegeTriple>,
    /// Present in both versions.
    pub kept: BTreeSet<PrivilegeTriple>,
    /// Present in baseline only: privileges lost on activation. A removed
    /// Deny triple is a privilege-gain signal.
    pub removed: BTreeSet<PrivilegeTriple>,
    /// Statement-level Condition blocks differ somewhere between the two
    /// versions; differences are surfaced, not classified.
    pub condition_changed: bool,
}

/// Expand a document into its canonical privilege triples.
pub fn expand_document(doc: &PolicyDocument) -> BTreeSet<PrivilegeTriple> {
    let mut out = BTreeSet::new();
    for stmt in &doc.statements {
        let action_parts: Vec<TriplePart> = if !stmt.actions.is_empty() {
            stmt.actions.iter().cloned().map(TriplePart::Pattern).collect()
        } else {
            alloc::vec![TriplePart::Complement(stmt.not_actions.clone())]
        };
        let resource_parts: Vec<TriplePart> = if !stmt.resources.is_empty() {
            stmt.resources.iter().cloned().map(TriplePart::Pattern).collect()
        } else if !stmt.not_resources.is_empty() {
            alloc::vec![TriplePart::Complement(stmt.not_resources.clone())]
        } else {
            // Trust-policy shape; identity documents are normalized before
            // they get here, but stay total regardless.
            alloc::vec![TriplePart::Pattern(String::from("*"))]
        };
        for action in &action_parts {
            for resource in &resource_parts {
                out.insert(PrivilegeTriple {
                    effect: stmt.effect,
                    action: action.clone(),
                    resource: resource.clone(),
                });
            }
        }
    }
    out
}

/// Classify the candidate's triples against the baseline's. `kept` is the
/// intersection; `new` and `removed` are the two set differences, so
/// `expand(candidate) = new U kept` and `expand(baseline) = removed U kept`
/// always partition exactly.
pub fn diff_versions(
    baseline_version: &str,
    baseline: &PolicyDocument,
    candidate_version: &str,
    candidate: &PolicyDocument,
) -> VersionDiff {
    let base = expand_document(baseline);
    let cand = expand_document(candidate);
    let kept: BTreeSet<_> = base.intersection(&cand).cloned().collect();
    let new: BTreeSet<_> = cand.difference(&base).cloned().collect();
    let removed: BTreeSet<_> = base.difference(&cand).cloned().collect();
    let conditions = |doc: &PolicyDocument| -> Vec<Option<serde_json::Value>> {
        doc.statements.iter().map(|s| s.condition.clone()).collect()
    };
    VersionDiff {
        baseline_version: String::from(baseline_version),
        candidate_version: String::from(candidate_version),
        new,
        kept,
        removed,
        condition_changed: conditions(baseline) != conditions(candidate),
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;
    use crate::policy::PolicyStatement;

    fn allow(actions: &[&str]) -> PolicyDocument {
        PolicyDocument::allow_actions(actions)
    }

    #[test]
    fn added_action_is_new() {
        let baseline = allow(&["s3:GetObject"]);
        let candidate = allow(&["s3:GetObject", "s3:PutObject"]);
        let diff = diff_versions("v1", &baseline, "v2", &candidate);
        let triple = |action: &str| PrivilegeTriple {
            effect: Effect::Allow,
            action: TriplePart::Pattern(action.into()),
            resource: TriplePart::Pattern("*".into()),
        };
        assert_eq!(diff.new, BTreeSet::from([triple("s3:PutObject")]));
        assert_eq!(diff.kept, BTreeSet::from([triple("s3:GetObject")]));
        assert!(diff.removed.is_empty());
    }

    #[test]
    fn identical_documents_only_keep() {
        let doc = allow(&["iam:ListRoles", "s3:GetObject"]);
        let diff = diff_versions("v1", &doc, "v1", &doc);
        assert!(diff.new.is_empty());
        assert!(diff.removed.is_empty());
        assert_eq!(diff.kept, expand_document(&doc));
    }

    #[test]
    fn dropped_deny_lands_in_removed() {
        let baseline = PolicyDocument::new(vec![
            PolicyStatement::allow(&["s3:*"], &["*"]),
            PolicyStatement::deny(&["s3:DeleteBucket"], &["*"]),
        ]);
        let candidate = PolicyDocument::new(vec![PolicyStatement::allow(&["s3:*"], &["*"])]);
        let diff = diff_versions("v1", &baseline, "v2", &candidate);
        let dropped = PrivilegeTriple {
            effect: Effect::Deny,
            action: TriplePart::Pattern("s3:DeleteBucket".into()),
            resource: TriplePart::Pattern("*".into()),
        };
        assert!(diff.removed.contains(&dropped));
        assert!(diff.new.is_empty());
    }

    #[test]
    fn not_action_sets_stay_symbolic() {
        let mut stmt = PolicyStatement::allow(&[], &["*"]);
        stmt.not_actions.insert("iam:Delete*".into());
        stmt.not_actions.insert("iam:Put*".into());
        let doc = PolicyDocument::new(vec![stmt]);
        let triples = expand_document(&doc);
        assert_eq!(triples.len(), 1);
        match &triples.iter().next().unwrap().action {
            TriplePart::Complement(set) => assert_eq!(set.len(), 2),
            TriplePart::Pattern(_) => panic!("NotAction must expand to a complement part"),
        }
    }

    #[test]
    fn condition_difference_is_annotated() {
        let plain = allow(&["s3:GetObject"]);
        let mut conditioned = plain.clone();
        conditioned.statements[0].condition =
            Some(serde_json::json!({"Bool": {"aws:SecureTransport": "true"}}));
        let diff = diff_versions("v1", &plain, "v2", &conditioned);
        assert!(diff.condition_changed);
        assert!(diff.new.is_empty() && diff.removed.is_empty());
    }
}
