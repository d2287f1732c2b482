//! Stateless resumption tokens.
//!
//! A token carries everything needed to continue a list request: the verb,
//! the original arguments, the cursor, when it was issued and the size of the
//! complete list. It is base64url-encoded JSON plus a digest, so a token that
//! was altered, minted for another verb or replayed with different arguments
//! is detected.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datestamp::Datestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumptionToken {
    pub verb: String,
    /// Arguments of the original request, sorted by name, without the
    /// verb and token.
    pub arguments: Vec<(String, String)>,
    pub cursor: usize,
    pub issued_at: i64,
    pub complete_list_size: usize,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    #[serde(rename = "v")]
    verb: String,
    #[serde(rename = "a")]
    arguments: Vec<(String, String)>,
    #[serde(rename = "c")]
    cursor: usize,
    #[serde(rename = "t")]
    issued_at: i64,
    #[serde(rename = "n")]
    complete_list_size: usize,
    #[serde(rename = "f")]
    fingerprint: String,
    #[serde(rename = "h")]
    digest: String,
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the verb and the arguments, independent of position in the list.
pub fn request_fingerprint(verb: &str, arguments: &[(String, String)]) -> String {
    let mut sorted = arguments.to_vec();
    sorted.sort();
    let mut hasher = Sha256::new();
    hasher.update(verb.as_bytes());
    for (k, v) in &sorted {
        hasher.update([0u8]);
        hasher.update(k.as_bytes());
        hasher.update([1u8]);
        hasher.update(v.as_bytes());
    }
    hex16(&hasher.finalize())
}

fn digest(fingerprint: &str, cursor: usize, issued_at: i64, size: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{fingerprint}|{cursor}|{issued_at}|{size}").as_bytes());
    hex16(&hasher.finalize())
}

impl ResumptionToken {
    pub fn new(
        verb: &str,
        mut arguments: Vec<(String, String)>,
        cursor: usize,
        issued_at: Datestamp,
        complete_list_size: usize,
    ) -> Self {
        arguments.sort();
        ResumptionToken {
            verb: verb.to_string(),
            arguments,
            cursor,
            issued_at: issued_at.unix(),
            complete_list_size,
        }
    }

    pub fn fingerprint(&self) -> String {
        request_fingerprint(&self.verb, &self.arguments)
    }

    pub fn encode(&self) -> String {
        let fingerprint = self.fingerprint();
        let wire = Wire {
            verb: self.verb.clone(),
            arguments: self.arguments.clone(),
            cursor: self.cursor,
            issued_at: self.issued_at,
            complete_list_size: self.complete_list_size,
            digest: digest(&fingerprint, self.cursor, self.issued_at, self.complete_list_size),
            fingerprint,
        };
        URL_SAFE_NO_PAD.encode(serde_json::to_vec(&wire).expect("token serializes"))
    }

    /// Decodes a token and checks its integrity. Returns `None` for anything
    /// that was not produced by [`encode`](Self::encode).
    pub fn decode(text: &str) -> Option<Self> {
        let bytes = URL_SAFE_NO_PAD.decode(text.trim()).ok()?;
        let wire: Wire = serde_json::from_slice(&bytes).ok()?;
        let token = ResumptionToken {
            verb: wire.verb,
            arguments: wire.arguments,
            cursor: wire.cursor,
            issued_at: wire.issued_at,
            complete_list_size: wire.complete_list_size,
        };
        let fingerprint = token.fingerprint();
        let expected = digest(&fingerprint, token.cursor, token.issued_at, token.complete_list_size);
        (fingerprint == wire.fingerprint && expected == wire.digest).then_some(token)
    }

    pub fn expires_at(&self, expiry_hours: u64) -> Datestamp {
        Datestamp::from_unix(self.issued_at + expiry_hours as i64 * 3600)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResumptionToken {
        ResumptionToken::new(
            "ListRecords",
            vec![
                ("metadataPrefix".into(), "olac".into()),
                ("from".into(), "2002-01-01".into()),
            ],
            10,
            Datestamp::from_unix(1_000_000),
            95,
        )
    }

    #[test]
    fn encode_decode() {
        let token = sample();
        assert_eq!(ResumptionToken::decode(&token.encode()), Some(token));
    }

    #[test]
    fn fingerprint_ignores_argument_order() {
        let a = request_fingerprint("V", &[("a".into(), "1".into()), ("b".into(), "2".into())]);
        let b = request_fingerprint("V", &[("b".into(), "2".into()), ("a".into(), "1".into())]);
        assert_eq!(a, b);
        assert_ne!(a, request_fingerprint("W", &[("a".into(), "1".into()), ("b".into(), "2".into())]));
    }

    #[test]
    fn tampering_is_detected() {
        let encoded = sample().encode();
        let json = String::from_utf8(URL_SAFE_NO_PAD.decode(&encoded).unwrap()).unwrap();
        let forged = URL_SAFE_NO_PAD.encode(json.replace("\"c\":10", "\"c\":20"));
        assert_eq!(ResumptionToken::decode(&forged), None);
        assert_eq!(ResumptionToken::decode("garbage!"), None);
        assert_eq!(ResumptionToken::decode(""), None);
    }
}
