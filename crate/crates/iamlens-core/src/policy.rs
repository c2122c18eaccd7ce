//! The JSON policy grammar: documents, statements, and principal matchers.
//!
//! Statements keep their action/resource sets in `BTreeSet`s, so structural
//! equality of two parsed documents is exactly the canonicalized comparison
//! (sorted elements, single-string and list forms unified, whitespace
//! irrelevant). Condition blocks are stored verbatim and never evaluated.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::arn::Arn;
use crate::pattern::{action_match, resource_match};

pub const POLICY_VERSION_2012: &str = "2012-10-17";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Effect {
    Allow,
    Deny,
}

/// Who a trust-policy statement admits. Only consulted by the AssumeRole
/// gate; identity-policy evaluation ignores principals entirely.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrincipalMatcher {
    Wildcard,
    /// ARNs, `arn:...:root` account roots, or bare 12-digit account ids.
    Aws(BTreeSet<String>),
}

impl PrincipalMatcher {
    pub fn matches(&self, principal: &Arn) -> bool {
        match self {
            PrincipalMatcher::Wildcard => true,
            PrincipalMatcher::Aws(entries) => {
                let rendered = principal.render();
                entries.iter().any(|entry| {
                    if entry == "*" {
                        return true;
                    }
                    let is_account_root = entry.ends_with(":root")
                        && entry.rsplit(':').nth(1).map_or(false, |acct| acct == principal.account_id);
                    let is_bare_account =
                        entry.len() == 12 && entry.as_str() == principal.account_id;
                    is_account_root || is_bare_account || resource_match(entry, &rendered)
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyStatement {
    pub sid: Option<String>,
    pub effect: Effect,
    pub actions: BTreeSet<String>,
    pub not_actions: BTreeSet<String>,
    pub resources: BTreeSet<String>,
    pub not_resources: BTreeSet<String>,
    pub principal: Option<PrincipalMatcher>,
    /// Opaque condition tree; stored, never evaluated.
    pub condition: Option<Value>,
}

impl PolicyStatement {
    pub fn allow(actions: &[&str], resources: &[&str]) -> Self {
        PolicyStatement {
            sid: None,
            effect: Effect::Allow,
            actions: actions.iter().map(|s| (*s).to_owned()).collect(),
            not_actions: BTreeSet::new(),
            resources: resources.iter().map(|s| (*s).to_owned()).collect(),
            not_resources: BTreeSet::new(),
            principal: None,
            condition: None,
        }
    }

    pub fn deny(actions: &[&str], resources: &[&str]) -> Self {
        PolicyStatement { effect: Effect::Deny, ..PolicyStatement::allow(actions, resources) }
    }

    /// Does this statement speak to `action`? Either a member of `actions`
    /// matches, or (for NotAction statements) no member of `not_actions`
    /// matches.
    pub fn covers_action(&self, action: &str) -> bool {
        if !self.actions.is_empty() {
            self.actions.iter().any(|p| action_match(p, action))
        } else if !self.not_actions.is_empty() {
            !self.not_actions.iter().any(|p| action_match(p, action))
        } else {
            false
        }
    }

    /// Resource-side counterpart of [`covers_action`]. A statement with
    /// neither resources nor not-resources (a trust-policy statement)
    /// covers every resource.
    pub fn covers_resource(&self, resource: &str) -> bool {
        if !self.resources.is_empty() {
            self.resources.iter().any(|p| resource_match(p, resource))
        } else if !self.not_resources.is_empty() {
            !self.not_resources.iter().any(|p| resource_match(p, resource))
        } else {
            true
        }
    }

    pub fn matches(&self, action: &str, resource: &str) -> bool {
        self.covers_action(action) && self.covers_resource(resource)
    }

    /// Structural invariants. Trust-policy statements may omit resources;
    /// identity statements must carry exactly one action side and at most
    /// one resource side.
    pub fn validate(&self, is_trust: bool) -> Result<(), String> {
        if self.actions.is_empty() == self.not_actions.is_empty() {
            return Err("exactly one of Action / NotAction must be non-empty".to_owned());
        }
        if !self.resources.is_empty() && !self.not_resources.is_empty() {
            return Err("at most one of Resource / NotResource may be non-empty".to_owned());
        }
        if !is_trust && self.principal.is_some() {
            return Err("Principal is only valid in trust-policy statements".to_owned());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    #[serde(rename = "Version", default = "default_version")]
    pub version_label: String,
    #[serde(rename = "Statement", with = "one_or_many_statements")]
    pub statements: Vec<PolicyStatement>,
}

fn default_version() -> String {
    POLICY_VERSION_2012.to_owned()
}

impl PolicyDocument {
    pub fn new(statements: Vec<PolicyStatement>) -> Self {
        PolicyDocument { version_label: default_version(), statements }
    }

    /// One Allow statement over the given actions on `*`. The shape every
    /// scenario fixture uses.
    pub fn allow_actions(actions: &[&str]) -> Self {
        PolicyDocument::new(alloc::vec![PolicyStatement::allow(actions, &["*"])])
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("policy documents always serialize")
    }

    /// Identity-document normalization: a statement with neither Resource
    /// nor NotResource is treated as `Resource: "*"`; each rewrite is
    /// reported as a lint line.
    pub fn normalize_identity(&mut self, origin: &str) -> Vec<String> {
        let mut lints = Vec::new();
        for (idx, stmt) in self.statements.iter_mut().enumerate() {
            if stmt.resources.is_empty() && stmt.not_resources.is_empty() {
                stmt.resources.insert("*".to_owned());
                lints.push(format!(
                    "{origin}: statement {idx} has no Resource; treating as \"*\""
                ));
            }
        }
        lints
    }

    pub fn validate(&self, is_trust: bool) -> Result<(), String> {
        if self.statements.is_empty() {
            return Err("document has no statements".to_owned());
        }
        for (idx, stmt) in self.statements.iter().enumerate() {
            stmt.validate(is_trust).map_err(|e| format!("statement {idx}: {e}"))?;
        }
        Ok(())
    }

    /// Every action pattern mentioned anywhere in the document, including
    /// NotAction members. Used by report enrichment.
    pub fn mentioned_actions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for stmt in &self.statements {
            out.extend(stmt.actions.iter().cloned());
            out.extend(stmt.not_actions.iter().cloned());
        }
        out
    }
}

/// A trust policy admitting exactly the given principal ARNs for
/// `sts:AssumeRole`.
pub fn trust_policy_for(principals: &[&str]) -> PolicyDocument {
    let matcher = PrincipalMatcher::Aws(principals.iter().map(|s| (*s).to_owned()).collect());
    PolicyDocument::new(alloc::vec![PolicyStatement {
        sid: None,
        effect: Effect::Allow,
        actions: BTreeSet::from(["sts:AssumeRole".to_owned()]),
        not_actions: BTreeSet::new(),
        resources: BTreeSet::new(),
        not_resources: BTreeSet::new(),
        principal: Some(matcher),
        condition: None,
    }])
}

// --- JSON grammar plumbing -------------------------------------------------

/// `Statement` accepts a single object or an array of objects.
mod one_or_many_statements {
    use super::*;

    pub fn serialize<S: Serializer>(
        statements: &[PolicyStatement],
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        statements.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<Vec<PolicyStatement>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(PolicyStatement),
            Many(Vec<PolicyStatement>),
        }
        Ok(match OneOrMany::deserialize(de)? {
            OneOrMany::One(stmt) => alloc::vec![stmt],
            OneOrMany::Many(stmts) => stmts,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StringOrVec {
    One(String),
    Many(Vec<String>),
}

fn set_from(value: Option<StringOrVec>) -> BTreeSet<String> {
    match value {
        None => BTreeSet::new(),
        Some(StringOrVec::One(s)) => BTreeSet::from([s]),
        Some(StringOrVec::Many(v)) => v.into_iter().collect(),
    }
}

fn set_to(set: &BTreeSet<String>) -> Option<StringOrVec> {
    if set.is_empty() {
        None
    } else {
        Some(StringOrVec::Many(set.iter().cloned().collect()))
    }
}

#[derive(Serialize, Deserialize)]
struct StatementWire {
    #[serde(rename = "Sid", skip_serializing_if = "Option::is_none")]
    sid: Option<String>,
    #[serde(rename = "Effect")]
    effect: Effect,
    #[serde(rename = "Action", skip_serializing_if = "Option::is_none")]
    action: Option<StringOrVec>,
    #[serde(rename = "NotAction", skip_serializing_if = "Option::is_none")]
    not_action: Option<StringOrVec>,
    #[serde(rename = "Resource", skip_serializing_if = "Option::is_none")]
    resource: Option<StringOrVec>,
    #[serde(rename = "NotResource", skip_serializing_if = "Option::is_none")]
    not_resource: Option<StringOrVec>,
    #[serde(rename = "Principal", skip_serializing_if = "Option::is_none")]
    principal: Option<Value>,
    #[serde(rename = "Condition", skip_serializing_if = "Option::is_none")]
    condition: Option<Value>,
}

impl Serialize for PolicyStatement {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let principal = self.principal.as_ref().map(|p| match p {
            PrincipalMatcher::Wildcard => Value::String("*".to_owned()),
            PrincipalMatcher::Aws(entries) => {
                let list: Vec<Value> =
                    entries.iter().map(|e| Value::String(e.clone())).collect();
                let inner = if list.len() == 1 {
                    list.into_iter().next().expect("len checked")
                } else {
                    Value::Array(list)
                };
                let mut map = serde_json::Map::new();
                map.insert("AWS".to_owned(), inner);
                Value::Object(map)
            }
        });
        StatementWire {
            sid: self.sid.clone(),
            effect: self.effect,
            action: set_to(&self.actions),
            not_action: set_to(&self.not_actions),
            resource: set_to(&self.resources),
            not_resource: set_to(&self.not_resources),
            principal,
            condition: self.condition.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PolicyStatement {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let wire = StatementWire::deserialize(de)?;
        let principal = match wire.principal {
            None => None,
            Some(Value::String(s)) if s == "*" => Some(PrincipalMatcher::Wildcard),
            Some(Value::Object(map)) => {
                let aws = map
                    .get("AWS")
                    .ok_or_else(|| D::Error::custom("Principal object must carry an AWS key"))?;
                let entries: BTreeSet<String> = match aws {
                    Value::String(s) => BTreeSet::from([s.clone()]),
                    Value::Array(items) => items
                        .iter()
                        .map(|v| {
                            v.as_str()
                                .map(str::to_owned)
                                .ok_or_else(|| D::Error::custom("Principal AWS entries must be strings"))
                        })
                        .collect::<Result<_, _>>()?,
                    _ => return Err(D::Error::custom("Principal AWS must be string or list")),
                };
                Some(PrincipalMatcher::Aws(entries))
            }
            Some(_) => return Err(D::Error::custom("Principal must be \"*\" or an object")),
        };
        Ok(PolicyStatement {
            sid: wire.sid,
            effect: wire.effect,
            actions: set_from(wire.action),
            not_actions: set_from(wire.not_action),
            resources: set_from(wire.resource),
            not_resources: set_from(wire.not_resource),
            principal,
            condition: wire.condition,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_single_string_and_list_forms() {
        let a: PolicyDocument = serde_json::from_str(
            r#"{"Version":"2012-10-17","Statement":{"Effect":"Allow","Action":"iam:ListRoles","Resource":"*"}}"#,
        )
        .unwrap();
        let b: PolicyDocument = serde_json::from_str(
            r#"{"Version":"2012-10-17","Statement":[{"Effect":"Allow","Action":["iam:ListRoles"],"Resource":["*"]}]}"#,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_render_reparses_equal() {
        let doc = PolicyDocument::allow_actions(&["iam:ListRoles", "iam:GetPolicy"]);
        let round = PolicyDocument::parse(&doc.render()).unwrap();
        assert_eq!(doc, round);
    }

    #[test]
    fn trust_principal_matching() {
        let user = Arn::iam("123456789012", "user", "S1_UserA");
        let other = Arn::iam("123456789012", "user", "Mallory");
        let exact = PrincipalMatcher::Aws(BTreeSet::from([user.render()]));
        assert!(exact.matches(&user));
        assert!(!exact.matches(&other));

        let root =
            PrincipalMatcher::Aws(BTreeSet::from(["arn:aws:iam::123456789012:root".to_owned()]));
        assert!(root.matches(&user));
        assert!(root.matches(&other));
        let foreign_root =
            PrincipalMatcher::Aws(BTreeSet::from(["arn:aws:iam::999999999999:root".to_owned()]));
        assert!(!foreign_root.matches(&user));

        assert!(PrincipalMatcher::Wildcard.matches(&other));
    }

    #[test]
    fn validation_rejects_two_action_sides() {
        let mut stmt = PolicyStatement::allow(&["iam:ListRoles"], &["*"]);
        stmt.not_actions.insert("iam:GetPolicy".to_owned());
        assert!(stmt.validate(false).is_err());
    }

    #[test]
    fn normalize_fills_missing_resource() {
        let mut doc = PolicyDocument::new(alloc::vec![PolicyStatement {
            resources: BTreeSet::new(),
            ..PolicyStatement::allow(&["iam:ListRoles"], &[])
        }]);
        let lints = doc.normalize_identity("test");
        assert_eq!(lints.len(), 1);
        assert!(doc.statements[0].resources.contains("*"));
    }

    #[test]
    fn condition_is_preserved_verbatim() {
        let text = r#"{"Version":"2012-10-17","Statement":[{"Effect":"Allow","Action":"s3:ListBucket","Resource":"*","Condition":{"StringEquals":{"s3:prefix":"x/"}}}]}"#;
        let doc = PolicyDocument::parse(text).unwrap();
        assert!(doc.statements[0].condition.is_some());
        let round = PolicyDocument::parse(&doc.render()).unwrap();
        assert_eq!(doc, round);
    }
}
