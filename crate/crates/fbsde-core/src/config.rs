//! JSON input documents.
//!
//! Three document kinds are accepted, discriminated by a top-level
//! `"kind"` field: `"fbsde"` (a single linear FBSDE), `"lq"` (a scalar
//! LQ control problem) and `"fbsde_envelope"` (entrywise coefficient
//! intervals for the dominating-equation envelope). Unknown keys are
//! rejected so that typos fail loudly instead of silently using
//! defaults.

use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use crate::dominating::CoeffBounds;
use crate::lq::LqProblem;
use crate::types::{CoeffMatrix, LinearFbsde};

/// Errors from reading or validating an input document.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing or non-string \"kind\" field")]
    MissingKind,
    #[error("unknown document kind {kind:?} (expected \"fbsde\", \"lq\" or \"fbsde_envelope\")")]
    UnknownKind { kind: String },
    #[error("invalid document: {detail}")]
    Invalid { detail: String },
}

/// An envelope problem: coefficient intervals plus a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeProblem {
    pub bounds: CoeffBounds,
    pub t: f64,
}

/// A parsed and validated input document.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigDocument {
    Fbsde(LinearFbsde),
    Lq(LqProblem),
    Envelope(EnvelopeProblem),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffRows {
    f: [f64; 3],
    b: [f64; 3],
    sigma: [f64; 3],
}

impl CoeffRows {
    fn matrix(&self) -> CoeffMatrix {
        CoeffMatrix::new(self.f, self.b, self.sigma)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FbsdeDoc {
    #[allow(dead_code)]
    kind: String,
    coeffs: CoeffRows,
    h: f64,
    x0: f64,
    #[serde(rename = "T")]
    t: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LqDoc {
    #[allow(dead_code)]
    kind: String,
    #[serde(flatten)]
    problem: LqProblem,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeDoc {
    #[allow(dead_code)]
    kind: String,
    lo: CoeffRows,
    hi: CoeffRows,
    h_lo: f64,
    h_hi: f64,
    #[serde(rename = "T")]
    t: f64,
}

/// Parses a JSON document string.
pub fn parse_config(text: &str) -> Result<ConfigDocument, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or(ConfigError::MissingKind)?;
    let invalid = |detail: String| ConfigError::Invalid { detail };
    match kind {
        "fbsde" => {
            let doc: FbsdeDoc = serde_json::from_value(value)?;
            let f = LinearFbsde::new(doc.coeffs.matrix(), doc.h, doc.x0, doc.t)
                .map_err(|e| invalid(e.to_string()))?;
            Ok(ConfigDocument::Fbsde(f))
        }
        "lq" => {
            let doc: LqDoc = serde_json::from_value(value)?;
            doc.problem
                .validate()
                .map_err(|e| invalid(e.to_string()))?;
            Ok(ConfigDocument::Lq(doc.problem))
        }
        "fbsde_envelope" => {
            let doc: EnvelopeDoc = serde_json::from_value(value)?;
            let bounds = CoeffBounds {
                lo: doc.lo.matrix(),
                hi: doc.hi.matrix(),
                h_lo: doc.h_lo,
                h_hi: doc.h_hi,
            };
            bounds.validate().map_err(|e| invalid(e.to_string()))?;
            if !doc.t.is_finite() || doc.t <= 0.0 {
                return Err(invalid(format!("horizon T = {} must be positive", doc.t)));
            }
            Ok(ConfigDocument::Envelope(EnvelopeProblem {
                bounds,
                t: doc.t,
            }))
        }
        other => Err(ConfigError::UnknownKind {
            kind: other.to_string(),
        }),
    }
}

/// Reads and parses a JSON document from disk.
pub fn load_config(path: &Path) -> Result<ConfigDocument, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn rows_json(c: &CoeffMatrix) -> serde_json::Value {
    json!({ "f": c.f(), "b": c.b(), "sigma": c.s() })
}

/// Serializes a document back to the input schema (pretty-printed).
pub fn write_config(doc: &ConfigDocument) -> String {
    let value = match doc {
        ConfigDocument::Fbsde(f) => json!({
            "kind": "fbsde",
            "coeffs": rows_json(&f.coeffs),
            "h": f.h,
            "x0": f.x0,
            "T": f.t,
        }),
        ConfigDocument::Lq(lq) => {
            let mut v = serde_json::to_value(lq).expect("serializable");
            v.as_object_mut()
                .expect("object")
                .insert("kind".to_string(), json!("lq"));
            v
        }
        ConfigDocument::Envelope(env) => json!({
            "kind": "fbsde_envelope",
            "lo": rows_json(&env.bounds.lo),
            "hi": rows_json(&env.bounds.hi),
            "h_lo": env.bounds.h_lo,
            "h_hi": env.bounds.h_hi,
            "T": env.t,
        }),
    };
    serde_json::to_string_pretty(&value).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FBSDE_DOC: &str = r#"{
        "kind": "fbsde",
        "coeffs": { "f": [2.0, 0.0, 1.0], "b": [1.0, 1.0, -1.0], "sigma": [1.0, 2.0, 1.0] },
        "h": -1.0, "x0": 1.0, "T": 1.0
    }"#;

    #[test]
    fn parses_fbsde() {
        let doc = parse_config(FBSDE_DOC).unwrap();
        match doc {
            ConfigDocument::Fbsde(f) => {
                assert_eq!(f.coeffs.f(), [2.0, 0.0, 1.0]);
                assert_eq!(f.coeffs.b(), [1.0, 1.0, -1.0]);
                assert_eq!(f.coeffs.s(), [1.0, 2.0, 1.0]);
                assert_eq!((f.h, f.x0, f.t), (-1.0, 1.0, 1.0));
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn parses_lq() {
        let text = r#"{ "kind": "lq", "A": 1.0, "B": 1.0, "C": 1.0, "D": 2.0,
                        "R": 1.0, "S": 2.0, "N": -1.0, "Q": -4.0, "x0": 1.0, "T": 1.0 }"#;
        match parse_config(text).unwrap() {
            ConfigDocument::Lq(lq) => {
                assert_eq!(lq.n, -1.0);
                assert_eq!(lq.q, -4.0);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn parses_envelope() {
        let text = r#"{
            "kind": "fbsde_envelope",
            "lo": { "f": [1.9, 0.0, 0.9], "b": [1.0, 1.0, -1.1], "sigma": [0.9, 1.9, 0.9] },
            "hi": { "f": [2.1, 0.0, 1.1], "b": [1.0, 1.0, -0.9], "sigma": [1.1, 2.1, 1.1] },
            "h_lo": -1.1, "h_hi": -0.9, "T": 1.0
        }"#;
        match parse_config(text).unwrap() {
            ConfigDocument::Envelope(env) => {
                assert_eq!(env.bounds.h_lo, -1.1);
                assert_eq!(env.t, 1.0);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        let extra = FBSDE_DOC.replace("\"x0\": 1.0", "\"x0\": 1.0, \"bogus\": 3");
        assert!(matches!(parse_config(&extra), Err(ConfigError::Json(_))));
        let bad_kind = FBSDE_DOC.replace("\"fbsde\"", "\"fbsdex\"");
        assert!(matches!(
            parse_config(&bad_kind),
            Err(ConfigError::UnknownKind { .. })
        ));
        assert!(matches!(
            parse_config("{\"h\": 1}"),
            Err(ConfigError::MissingKind)
        ));
        // Unknown key inside a row object.
        let nested = FBSDE_DOC.replace("\"sigma\"", "\"sigmaa\"");
        assert!(parse_config(&nested).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        // Singular terminal pairing h = 1/sigma3.
        let singular = r#"{
            "kind": "fbsde",
            "coeffs": { "f": [0,0,0], "b": [0,0,0], "sigma": [0,0,2.0] },
            "h": 0.5, "x0": 1.0, "T": 1.0
        }"#;
        assert!(matches!(
            parse_config(singular),
            Err(ConfigError::Invalid { .. })
        ));
        // Zero control weight.
        let lq = r#"{ "kind": "lq", "A": 0, "B": 0, "C": 0, "D": 0,
                      "R": 0, "S": 0, "N": 0, "Q": 0, "x0": 1, "T": 1 }"#;
        assert!(matches!(parse_config(lq), Err(ConfigError::Invalid { .. })));
        // Crossed interval.
        let env = r#"{
            "kind": "fbsde_envelope",
            "lo": { "f": [1,0,0], "b": [0,0,0], "sigma": [0,0,0] },
            "hi": { "f": [0,0,0], "b": [0,0,0], "sigma": [0,0,0] },
            "h_lo": 0, "h_hi": 0, "T": 1
        }"#;
        assert!(matches!(parse_config(env), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn roundtrip() {
        let doc = parse_config(FBSDE_DOC).unwrap();
        let emitted = write_config(&doc);
        let doc2 = parse_config(&emitted).unwrap();
        assert_eq!(doc, doc2);
        let lq = r#"{ "kind": "lq", "A": 1.0, "B": 1.0, "C": 1.0, "D": 2.0,
                      "R": 1.0, "S": 2.0, "N": -1.0, "Q": -4.0, "x0": 1.0, "T": 1.0 }"#;
        let doc = parse_config(lq).unwrap();
        assert_eq!(parse_config(&write_config(&doc)).unwrap(), doc);
    }
}
