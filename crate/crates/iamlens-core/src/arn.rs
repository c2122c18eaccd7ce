//! Amazon Resource Name parsing and rendering.
//!
//! The grammar accepted here is the six-segment colon form used by IAM
//! entities and policies: `arn:partition:service:region:account:resource`,
//! where `resource` is `type/path-and-name` (the slash form used by users,
//! groups, roles and policies) or a bare name.

use alloc::borrow::ToOwned;
use alloc::fmt;
use alloc::string::String;

use serde::{Deserialize, Serialize};

/// A parsed ARN. `render` of a parsed value reproduces the input exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Arn {
    pub partition: String,
    pub service: String,
    /// Empty for global services such as IAM.
    pub region: String,
    /// Twelve decimal digits, or the literal `aws` for vendor-managed
    /// policy ARNs.
    pub account_id: String,
    /// `user`, `group`, `role`, `policy`, `assumed-role`, ... Empty when the
    /// resource has no type prefix.
    pub resource_type: String,
    /// Path plus name, e.g. `S1_UserA` or `service-role/MyRole`.
    pub resource_name: String,
}

/// Parse failure for [`Arn::parse`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedArn {
    pub input: String,
    pub reason: &'static str,
}

impl fmt::Display for MalformedArn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed ARN {:?}: {}", self.input, self.reason)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MalformedArn {}

impl Arn {
    pub fn parse(text: &str) -> Result<Self, MalformedArn> {
        let err = |reason| MalformedArn { input: text.to_owned(), reason };
        let mut parts = text.splitn(6, ':');
        let tag = parts.next().ok_or_else(|| err("empty input"))?;
        if tag != "arn" {
            return Err(err("missing arn: prefix"));
        }
        let partition = parts.next().ok_or_else(|| err("missing partition"))?;
        let service = parts.next().ok_or_else(|| err("missing service"))?;
        let region = parts.next().ok_or_else(|| err("missing region"))?;
        let account_id = parts.next().ok_or_else(|| err("missing account id"))?;
        let resource = parts.next().ok_or_else(|| err("missing resource"))?;
        if partition.is_empty() {
            return Err(err("empty partition"));
        }
        if service.is_empty() {
            return Err(err("empty service"));
        }
        if resource.is_empty() {
            return Err(err("empty resource"));
        }
        let account_ok = account_id == "aws"
            || (account_id.len() == 12 && account_id.bytes().all(|b| b.is_ascii_digit()));
        if !account_ok {
            return Err(err("account id must be 12 digits or the literal aws"));
        }
        let (resource_type, resource_name) = match resource.split_once('/') {
            Some((ty, name)) if !name.is_empty() => (ty.to_owned(), name.to_owned()),
            Some(_) => return Err(err("empty resource name")),
            None => (String::new(), resource.to_owned()),
        };
        Ok(Arn {
            partition: partition.to_owned(),
            service: service.to_owned(),
            region: region.to_owned(),
            account_id: account_id.to_owned(),
            resource_type,
            resource_name,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("arn:");
        out.push_str(&self.partition);
        out.push(':');
        out.push_str(&self.service);
        out.push(':');
        out.push_str(&self.region);
        out.push(':');
        out.push_str(&self.account_id);
        out.push(':');
        if self.resource_type.is_empty() {
            out.push_str(&self.resource_name);
        } else {
            out.push_str(&self.resource_type);
            out.push('/');
            out.push_str(&self.resource_name);
        }
        out
    }

    /// Last path segment of the resource name: `division/Alice` -> `Alice`.
    pub fn short_name(&self) -> &str {
        self.resource_name.rsplit('/').next().unwrap_or(&self.resource_name)
    }

    pub fn is_user(&self) -> bool {
        self.resource_type == "user"
    }

    pub fn is_role(&self) -> bool {
        self.resource_type == "role"
    }

    /// IAM entity ARN constructors. Region is empty for IAM.
    pub fn iam(account_id: &str, resource_type: &str, name: &str) -> Self {
        Arn {
            partition: "aws".to_owned(),
            service: "iam".to_owned(),
            region: String::new(),
            account_id: account_id.to_owned(),
            resource_type: resource_type.to_owned(),
            resource_name: name.to_owned(),
        }
    }

    /// The STS assumed-role ARN for a role session, e.g.
    /// `arn:aws:sts::123456789012:assumed-role/MyRole/session`.
    pub fn assumed_role(account_id: &str, role_name: &str, session_name: &str) -> Self {
        let mut resource_name = String::from(role_name);
        resource_name.push('/');
        resource_name.push_str(session_name);
        Arn {
            partition: "aws".to_owned(),
            service: "sts".to_owned(),
            region: String::new(),
            account_id: account_id.to_owned(),
            resource_type: "assumed-role".to_owned(),
            resource_name,
        }
    }
}

impl fmt::Display for Arn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl TryFrom<String> for Arn {
    type Error = MalformedArn;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Arn::parse(&value)
    }
}

impl From<Arn> for String {
    fn from(value: Arn) -> String {
        value.render()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_user_arn() {
        let arn = Arn::parse("arn:aws:iam::123456789012:user/S1_UserA").unwrap();
        assert_eq!(arn.service, "iam");
        assert_eq!(arn.account_id, "123456789012");
        assert_eq!(arn.resource_type, "user");
        assert_eq!(arn.resource_name, "S1_UserA");
    }

    #[test]
    fn parses_vendor_policy_arn() {
        let arn = Arn::parse("arn:aws:iam::aws:policy/AmazonEKSServicePolicy").unwrap();
        assert_eq!(arn.account_id, "aws");
        assert_eq!(arn.resource_type, "policy");
        assert_eq!(arn.resource_name, "AmazonEKSServicePolicy");
    }

    #[test]
    fn rejects_junk() {
        assert!(Arn::parse("not-an-arn").is_err());
        assert!(Arn::parse("arn:aws:iam").is_err());
        assert!(Arn::parse("arn:aws:iam::12345:user/x").is_err());
        assert!(Arn::parse("arn:aws:iam::12345678901b:user/x").is_err());
        assert!(Arn::parse("arn::iam::123456789012:user/x").is_err());
    }

    #[test]
    fn round_trips() {
        for text in [
            "arn:aws:iam::123456789012:user/S1_UserA",
            "arn:aws:iam::aws:policy/AmazonEKSServicePolicy",
            "arn:aws:iam::123456789012:role/path/to/RoleA",
            "arn:aws:sts::123456789012:assumed-role/RoleA/vision",
            "arn:aws:sns:us-east-1:123456789012:my-topic",
        ] {
            assert_eq!(Arn::parse(text).unwrap().render(), text);
        }
    }

    #[test]
    fn short_name_strips_path() {
        let arn = Arn::parse("arn:aws:iam::123456789012:role/path/to/RoleA").unwrap();
        assert_eq!(arn.short_name(), "RoleA");
    }
}
