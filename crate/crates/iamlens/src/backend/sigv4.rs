//! AWS Signature Version 4 request signing.
//!
//! Pure functions over a prepared request: canonical request, string to
//! sign, signing-key derivation, and the final Authorization header. The
//! live transport uses this to sign query-protocol calls; nothing here
//! performs IO.

use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use crate::session::Credential;

type HmacSha256 = Hmac<Sha256>;

const ALGORITHM: &str = "AWS4-HMAC-SHA256";

/// A request prepared for signing. Headers must include `host`; the
/// canonicalization lowercases names and trims values.
#[derive(Debug, Clone)]
pub struct SignableRequest {
    pub method: String,
    pub uri: String,
    pub query_string: String,
    pub headers: Vec<(String, String)>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub authorization: String,
    pub amz_date: String,
    pub signed_headers: String,
    pub signature: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn hmac(key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().to_vec()
}

fn canonical_headers(headers: &[(String, String)]) -> (String, String) {
    let mut normalized: Vec<(String, String)> = headers
        .iter()
        .map(|(k, v)| (k.to_ascii_lowercase(), v.trim().to_string()))
        .collect();
    normalized.sort();
    let canonical = normalized
        .iter()
        .map(|(k, v)| format!("{k}:{v}\n"))
        .collect::<String>();
    let signed = normalized.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(";");
    (canonical, signed)
}

pub fn canonical_request(request: &SignableRequest) -> (String, String) {
    let (canonical_headers, signed_headers) = canonical_headers(&request.headers);
    let canonical = format!(
        "{}\n{}\n{}\n{}\n{}\n{}",
        request.method,
        request.uri,
        request.query_string,
        canonical_headers,
        signed_headers,
        sha256_hex(&request.payload),
    );
    (canonical, signed_headers)
}

pub fn string_to_sign(
    canonical_request: &str,
    amz_date: &str,
    credential_scope: &str,
) -> String {
    format!(
        "{ALGORITHM}\n{amz_date}\n{credential_scope}\n{}",
        sha256_hex(canonical_request.as_bytes())
    )
}

pub fn signing_key(secret_key: &str, date_stamp: &str, region: &str, service: &str) -> Vec<u8> {
    let k_date = hmac(format!("AWS4{secret_key}").as_bytes(), date_stamp.as_bytes());
    let k_region = hmac(&k_date, region.as_bytes());
    let k_service = hmac(&k_region, service.as_bytes());
    hmac(&k_service, b"aws4_request")
}

/// Sign a prepared request. `amz_date` is `YYYYMMDDTHHMMSSZ`; the date
/// stamp for the credential scope is its first eight characters.
pub fn sign(
    request: &SignableRequest,
    credential: &Credential,
    region: &str,
    service: &str,
    amz_date: &str,
) -> Signature {
    let date_stamp = &amz_date[..8];
    let credential_scope = format!("{date_stamp}/{region}/{service}/aws4_request");
    let (canonical, signed_headers) = canonical_request(request);
    let to_sign = string_to_sign(&canonical, amz_date, &credential_scope);
    let key = signing_key(&credential.secret_key, date_stamp, region, service);
    let signature = hex::encode(hmac(&key, to_sign.as_bytes()));
    let authorization = format!(
        "{ALGORITHM} Credential={}/{credential_scope}, SignedHeaders={signed_headers}, Signature={signature}",
        credential.access_key_id
    );
    Signature { authorization, amz_date: amz_date.to_string(), signed_headers, signature }
}

#[cfg(test)]
mod tests {
    use super::*;

    // The worked GET example from the vendor's signing documentation:
    // IAM-style request signed with the published demo credentials.
    fn demo_credential() -> Credential {
        Credential {
            access_key_id: "AKIDEXAMPLE".into(),
            secret_key: "wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY".into(),
            session_token: None,
        }
    }

    fn demo_request() -> SignableRequest {
        SignableRequest {
            method: "GET".into(),
            uri: "/".into(),
            query_string: "Action=ListUsers&Version=2010-05-08".into(),
            headers: vec![
                ("content-type".into(), "application/x-www-form-urlencoded; charset=utf-8".into()),
                ("host".into(), "iam.amazonaws.com".into()),
                ("x-amz-date".into(), "20150830T123600Z".into()),
            ],
            payload: Vec::new(),
        }
    }

    #[test]
    fn canonical_request_hash_matches_published_example() {
        let (canonical, signed) = canonical_request(&demo_request());
        assert_eq!(signed, "content-type;host;x-amz-date");
        assert_eq!(
            sha256_hex(canonical.as_bytes()),
            "f536975d06c0309214f805bb90ccff089219ecd68b2577efef23edd43b7e1a59"
        );
    }

    #[test]
    fn string_to_sign_matches_published_example() {
        let (canonical, _) = canonical_request(&demo_request());
        let sts = string_to_sign(
            &canonical,
            "20150830T123600Z",
            "20150830/us-east-1/iam/aws4_request",
        );
        assert!(sts.ends_with("f536975d06c0309214f805bb90ccff089219ecd68b2577efef23edd43b7e1a59"));
        assert!(sts.starts_with("AWS4-HMAC-SHA256\n20150830T123600Z\n"));
    }

    #[test]
    fn signature_matches_published_example() {
        let sig = sign(
            &demo_request(),
            &demo_credential(),
            "us-east-1",
            "iam",
            "20150830T123600Z",
        );
        assert_eq!(
            sig.signature,
            "5d672d79c15b13162d9279b0855cfba6789a8edb4c82c400e06b5924a6f2b5d7"
        );
        assert_eq!(
            sig.authorization,
            "AWS4-HMAC-SHA256 Credential=AKIDEXAMPLE/20150830/us-east-1/iam/aws4_request, \
             SignedHeaders=content-type;host;x-amz-date, \
             Signature=5d672d79c15b13162d9279b0855cfba6789a8edb4c82c400e06b5924a6f2b5d7"
        );
    }

    #[test]
    fn signing_key_derivation_matches_published_example() {
        let key = signing_key(
            "wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY",
            "20150830",
            "us-east-1",
            "iam",
        );
        assert_eq!(
            hex::encode(key),
            "c4afb1cc5771d871763a393e44b703571b55cc28424d1a5e86da6ed3c154a4b9"
        );
    }
}
