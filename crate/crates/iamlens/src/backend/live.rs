//! Query-protocol transport for real IAM/STS endpoints.
//!
//! Builds SigV4-signed requests for the subset of operations the engine
//! uses. Request construction and signing are always available and unit
//! tested; actually sending them requires the `live` feature, and no
//! acceptance test exercises the network path. Responses come back as XML,
//! which this stub does not parse; the fixture backend is the supported
//! execution path.


use crate::session::Credential;

use super::sigv4::{sha256_hex, sign, SignableRequest};
use super::{ApiError, ApiRequest, PolicyScope};

const IAM_VERSION: &str = "2010-05-08";
const STS_VERSION: &str = "2011-06-15";

/// A fully signed HTTP request, ready for any HTTP client.
#[derive(Debug, Clone)]
pub struct SignedCall {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct LiveEndpoints {
    pub iam_host: String,
    pub sts_host: String,
    pub region: String,
}

impl Default for LiveEndpoints {
    fn default() -> Self {
        LiveEndpoints {
            iam_host: "iam.amazonaws.com".into(),
            sts_host: "sts.amazonaws.com".into(),
            region: "us-east-1".into(),
        }
    }
}

fn form_encode(pairs: &[(String, String)]) -> String {
    let encode = |s: &str| {
        let mut out = String::new();
        for byte in s.bytes() {
            match byte {
                b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                    out.push(byte as char)
                }
                _ => out.push_str(&format!("%{byte:02X}")),
            }
        }
        out
    };
    pairs
        .iter()
        .map(|(k, v)| format!("{}={}", encode(k), encode(v)))
        .collect::<Vec<_>>()
        .join("&")
}

/// The query-protocol parameter list for a request, or
/// `UnsupportedOperation` for the fixture-only probe call.
pub fn query_parameters(request: &ApiRequest) -> Result<Vec<(String, String)>, ApiError> {
    use ApiRequest::*;
    let mut params: Vec<(String, String)> = vec![("Action".into(), request.operation().into())];
    let push = |params: &mut Vec<(String, String)>, k: &str, v: String| {
        params.push((k.to_string(), v));
    };
    match request {
        GetCallerIdentity => {}
        AssumeRole { role_arn } => {
            push(&mut params, "RoleArn", role_arn.render());
            push(&mut params, "RoleSessionName", "vision".into());
        }
        ListGroupsForUser { user_name, marker } => {
            push(&mut params, "UserName", user_name.clone());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        ListGroups { marker } | ListRoles { marker } => {
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetGroup { group_name, marker } => {
            push(&mut params, "GroupName", group_name.clone());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        ListUserPolicies { user_name, marker }
        | ListAttachedUserPolicies { user_name, marker } => {
            push(&mut params, "UserName", user_name.clone());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetUserPolicy { user_name, policy_name } => {
            push(&mut params, "UserName", user_name.clone());
            push(&mut params, "PolicyName", policy_name.clone());
        }
        ListGroupPolicies { group_name, marker }
        | ListAttachedGroupPolicies { group_name, marker } => {
            push(&mut params, "GroupName", group_name.clone());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetGroupPolicy { group_name, policy_name } => {
            push(&mut params, "GroupName", group_name.clone());
            push(&mut params, "PolicyName", policy_name.clone());
        }
        ListRolePolicies { role_name, marker }
        | ListAttachedRolePolicies { role_name, marker } => {
            push(&mut params, "RoleName", role_name.clone());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetRolePolicy { role_name, policy_name } => {
            push(&mut params, "RoleName", role_name.clone());
            push(&mut params, "PolicyName", policy_name.clone());
        }
        ListPolicies { scope, only_attached, marker } => {
            let scope = match scope {
                PolicyScope::All => "All",
                PolicyScope::AwsManaged => "AWS",
                PolicyScope::Local => "Local",
            };
            push(&mut params, "Scope", scope.into());
            push(&mut params, "OnlyAttached", only_attached.to_string());
            push(&mut params, "PolicyUsageFilter", "PermissionsPolicy".into());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetPolicy { policy_arn } => push(&mut params, "PolicyArn", policy_arn.render()),
        ListPolicyVersions { policy_arn, marker }
        | ListEntitiesForPolicy { policy_arn, marker } => {
            push(&mut params, "PolicyArn", policy_arn.render());
            if let Some(m) = marker {
                push(&mut params, "Marker", m.clone());
            }
        }
        GetPolicyVersion { policy_arn, version_id } => {
            push(&mut params, "PolicyArn", policy_arn.render());
            push(&mut params, "VersionId", version_id.clone());
        }
        GetAccountAuthorizationDetails => {}
        SimulatePrincipalPolicy { policy_source_arn, action_names } => {
            push(&mut params, "PolicySourceArn", policy_source_arn.render());
            for (i, action) in action_names.iter().enumerate() {
                push(&mut params, &format!("ActionNames.member.{}", i + 1), action.clone());
            }
        }
        ProbeAction { action } => {
            return Err(ApiError::UnsupportedOperation(format!(
                "{action}: generic probes are fixture-only"
            )))
        }
    }
    let version = if is_sts(request) { STS_VERSION } else { IAM_VERSION };
    params.push(("Version".into(), version.into()));
    params.sort();
    Ok(params)
}

fn is_sts(request: &ApiRequest) -> bool {
    matches!(request, ApiRequest::GetCallerIdentity | ApiRequest::AssumeRole { .. })
}

/// Construct and sign the HTTP form of `request` at `amz_date`
/// (`YYYYMMDDTHHMMSSZ`).
pub fn build_signed_call(
    endpoints: &LiveEndpoints,
    credential: &Credential,
    request: &ApiRequest,
    amz_date: &str,
) -> Result<SignedCall, ApiError> {
    let params = query_parameters(request)?;
    let body = form_encode(&params).into_bytes();
    let (host, service) = if is_sts(request) {
        (endpoints.sts_host.clone(), "sts")
    } else {
        (endpoints.iam_host.clone(), "iam")
    };
    let mut headers = vec![
        ("content-type".to_string(), "application/x-www-form-urlencoded; charset=utf-8".to_string()),
        ("host".to_string(), host.clone()),
        ("x-amz-date".to_string(), amz_date.to_string()),
        ("x-amz-content-sha256".to_string(), sha256_hex(&body)),
    ];
    if let Some(token) = &credential.session_token {
        headers.push(("x-amz-security-token".to_string(), token.clone()));
    }
    let signable = SignableRequest {
        method: "POST".into(),
        uri: "/".into(),
        query_string: String::new(),
        headers: headers.clone(),
        payload: body.clone(),
    };
    let signature = sign(&signable, credential, &endpoints.region, service, amz_date);
    headers.push(("authorization".to_string(), signature.authorization));
    Ok(SignedCall { method: "POST".into(), url: format!("https://{host}/"), headers, body })
}

/// Current UTC timestamp in the `YYYYMMDDTHHMMSSZ` form SigV4 expects.
pub fn now_amz_date() -> String {
    let format = time::macros::format_description!("[year][month][day]T[hour][minute][second]Z");
    time::OffsetDateTime::now_utc().format(&format).expect("static format")
}

/// Send a signed call over HTTPS with bounded retries on throttling.
/// Response parsing is out of scope for this stub: callers get the raw
/// body back.
#[cfg(feature = "live")]
pub fn execute(call: &SignedCall) -> Result<(u16, Vec<u8>), ApiError> {
    let client = reqwest::blocking::Client::new();
    let mut backoff_ms = 200u64;
    for attempt in 0..4 {
        let mut builder = client.post(&call.url).body(call.body.clone());
        for (name, value) in &call.headers {
            builder = builder.header(name, value);
        }
        let response = builder
            .send()
            .map_err(|e| ApiError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 && attempt < 3 {
            std::thread::sleep(std::time::Duration::from_millis(backoff_ms));
            backoff_ms *= 2;
            continue;
        }
        let body = response.bytes().map_err(|e| ApiError::Transport(e.to_string()))?;
        return Ok((status, body.to_vec()));
    }
    Err(ApiError::Throttling { retry_after_ms: backoff_ms })
}

#[cfg(test)]
mod tests {
    use iamlens_core::Arn;

    use super::*;

    fn credential() -> Credential {
        Credential {
            access_key_id: "AKIDEXAMPLE".into(),
            secret_key: "wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY".into(),
            session_token: None,
        }
    }

    #[test]
    fn builds_signed_list_roles_call() {
        let call = build_signed_call(
            &LiveEndpoints::default(),
            &credential(),
            &ApiRequest::ListRoles { marker: None },
            "20150830T123600Z",
        )
        .unwrap();
        assert_eq!(call.url, "https://iam.amazonaws.com/");
        let body = String::from_utf8(call.body.clone()).unwrap();
        assert!(body.contains("Action=ListRoles"));
        assert!(body.contains("Version=2010-05-08"));
        let auth = call.headers.iter().find(|(k, _)| k == "authorization").unwrap();
        assert!(auth.1.starts_with("AWS4-HMAC-SHA256 Credential=AKIDEXAMPLE/20150830/us-east-1/iam/"));
    }

    #[test]
    fn sts_calls_route_to_sts_host() {
        let call = build_signed_call(
            &LiveEndpoints::default(),
            &credential(),
            &ApiRequest::GetCallerIdentity,
            "20150830T123600Z",
        )
        .unwrap();
        assert_eq!(call.url, "https://sts.amazonaws.com/");
        let body = String::from_utf8(call.body).unwrap();
        assert!(body.contains("Version=2011-06-15"));
    }

    #[test]
    fn simulate_parameters_enumerate_members() {
        let params = query_parameters(&ApiRequest::SimulatePrincipalPolicy {
            policy_source_arn: Arn::iam("123456789012", "user", "alice"),
            action_names: vec!["iam:ListRoles".into(), "s3:ListBucket".into()],
        })
        .unwrap();
        assert!(params.iter().any(|(k, v)| k == "ActionNames.member.1" && v == "iam:ListRoles"));
        assert!(params.iter().any(|(k, v)| k == "ActionNames.member.2" && v == "s3:ListBucket"));
    }

    #[test]
    fn probe_is_rejected_on_live_transport() {
        let err = query_parameters(&ApiRequest::ProbeAction { action: "s3:ListAllMyBuckets".into() })
            .unwrap_err();
        assert!(matches!(err, ApiError::UnsupportedOperation(_)));
    }
}
