//! Authenticated principal contexts and the credential format.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use iamlens_core::Arn;

use crate::backend::{ApiBackend, ApiError, ApiRequest, ApiResponse};

/// A long-lived or temporary credential. The session token is present
/// exactly when the credential is temporary (an assumed-role session).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub access_key_id: String,
    pub secret_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_token: Option<String>,
}

impl Credential {
    pub fn is_temporary(&self) -> bool {
        self.session_token.is_some()
    }
}

/// Parse the one-credential-per-line format `AccessKey,SecretKey[,Token]`.
/// Blank lines and `#` comments are skipped.
pub fn parse_credentials_file(text: &str) -> Vec<Credential> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|line| {
            let mut parts = line.splitn(3, ',').map(str::trim);
            let access_key_id = parts.next()?.to_string();
            let secret_key = parts.next()?.to_string();
            if access_key_id.is_empty() || secret_key.is_empty() {
                return None;
            }
            let session_token = parts.next().filter(|t| !t.is_empty()).map(str::to_string);
            Some(Credential { access_key_id, secret_key, session_token })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipalKind {
    User,
    Role,
}

/// An authenticated principal plus its assumption provenance. Users have an
/// empty chain; a role session's chain starts at the originating user and
/// lists every principal that was assumed on the way here.
#[derive(Clone)]
pub struct Session {
    pub principal_arn: Arn,
    pub account_id: String,
    pub kind: PrincipalKind,
    pub chain: Vec<Arn>,
    pub credential: Credential,
    backend: Arc<dyn ApiBackend>,
    correlation: Arc<AtomicU64>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("principal_arn", &self.principal_arn.render())
            .field("kind", &self.kind)
            .field("chain", &self.chain.iter().map(Arn::render).collect::<Vec<_>>())
            .finish()
    }
}

impl Session {
    /// Validate a credential against the backend and build a user session.
    pub fn open(
        backend: Arc<dyn ApiBackend>,
        credential: Credential,
    ) -> Result<Session, ApiError> {
        let envelope = backend.call(&credential, 0, &ApiRequest::GetCallerIdentity)?;
        let ApiResponse::CallerIdentity { arn, account_id } = envelope.response else {
            return Err(ApiError::Transport("unexpected GetCallerIdentity payload".into()));
        };
        let principal_arn =
            Arn::parse(&arn).map_err(|e| ApiError::Transport(e.to_string()))?;
        let kind = if principal_arn.resource_type == "assumed-role" {
            PrincipalKind::Role
        } else {
            PrincipalKind::User
        };
        // Identity comes back as the STS form for role sessions; keep the
        // IAM role ARN as the principal so policy evaluation and trust
        // matching see the stable identity.
        let principal_arn = if kind == PrincipalKind::Role {
            let role_name = principal_arn
                .resource_name
                .split('/')
                .next()
                .unwrap_or(&principal_arn.resource_name)
                .to_string();
            Arn::iam(&account_id, "role", &role_name)
        } else {
            principal_arn
        };
        Ok(Session {
            principal_arn,
            account_id,
            kind,
            chain: Vec::new(),
            credential,
            backend,
            correlation: Arc::new(AtomicU64::new(1)),
        })
    }

    /// Issue one API call with a fresh correlation id.
    pub fn call(&self, request: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let id = self.correlation.fetch_add(1, Ordering::Relaxed);
        let envelope = self.backend.call(&self.credential, id, request)?;
        debug_assert_eq!(envelope.correlation_id, id);
        Ok(envelope.response)
    }

    /// Assume `role_arn`. Succeeds iff the role's trust policy admits this
    /// session's principal; the child session extends the provenance chain.
    pub fn assume_role(&self, role_arn: &Arn) -> Result<Session, ApiError> {
        let response = self.call(&ApiRequest::AssumeRole { role_arn: role_arn.clone() })?;
        let ApiResponse::AssumedRole { role_arn, credential } = response else {
            return Err(ApiError::Transport("unexpected AssumeRole payload".into()));
        };
        let mut chain = self.chain.clone();
        chain.push(self.principal_arn.clone());
        Ok(Session {
            principal_arn: role_arn,
            account_id: self.account_id.clone(),
            kind: PrincipalKind::Role,
            chain,
            credential,
            backend: Arc::clone(&self.backend),
            correlation: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn backend(&self) -> &Arc<dyn ApiBackend> {
        &self.backend
    }

    /// User name for user sessions, role name otherwise.
    pub fn principal_name(&self) -> &str {
        self.principal_arn.short_name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credential_file_parsing() {
        let text = "AKIAX,secret\n# comment\n\nAKIAY,secret2,token\nbroken-line\n";
        let creds = parse_credentials_file(text);
        assert_eq!(creds.len(), 2);
        assert_eq!(creds[0].access_key_id, "AKIAX");
        assert!(!creds[0].is_temporary());
        assert_eq!(creds[1].session_token.as_deref(), Some("token"));
    }
}
