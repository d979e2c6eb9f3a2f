//! Newline-delimited JSON wire format shared by the HTTP and exec clients.
//!
//! Request:  `{"image_id": .., "image_path": ..}` or `{"image_id": .., "image_b64": ..}`
//! Response: `{"image_id": .., "detections": [{"category", "box", "score"}]}`

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::OracleError;
use crate::metrics::Detection;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    /// Base64 PNG bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

impl PredictRequest {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serializes");
        s.push('\n');
        s
    }
}

/// Parses and validates one response. Structural problems are protocol
/// errors; a bad detection record reports the record itself.
pub fn parse_response(text: &str, expected_id: &str) -> Result<Vec<Detection>, OracleError> {
    let v: Value = serde_json::from_str(text.trim())
        .map_err(|e| OracleError::Protocol(format!("response is not JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| OracleError::Protocol("response is not an object".into()))?;
    match obj.get("image_id") {
        Some(Value::String(id)) if id == expected_id => {}
        Some(Value::String(id)) => {
            return Err(OracleError::Protocol(format!(
                "response for '{id}' while waiting for '{expected_id}'"
            )))
        }
        _ => return Err(OracleError::Protocol("missing string field 'image_id'".into())),
    }
    let dets = obj
        .get("detections")
        .and_then(Value::as_array)
        .ok_or_else(|| OracleError::Protocol("missing array field 'detections'".into()))?;
    dets.iter()
        .map(|d| {
            let malformed = |reason: String| OracleError::MalformedDetection {
                payload: d.to_string(),
                reason,
            };
            let det: Detection =
                serde_json::from_value(d.clone()).map_err(|e| malformed(e.to_string()))?;
            det.check().map_err(|e| malformed(e.to_string()))?;
            Ok(det)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BBox;

    #[test]
    fn request_field_names() {
        let r = PredictRequest {
            image_id: "a1".into(),
            image_path: Some("/x.png".into()),
            image_b64: None,
        };
        assert_eq!(r.to_line(), "{\"image_id\":\"a1\",\"image_path\":\"/x.png\"}\n");
    }

    #[test]
    fn response_round_trip() {
        let resp = PredictResponse {
            image_id: "7".into(),
            detections: vec![Detection::new(BBox::new(1.0, 2.0, 30.0, 40.0), 0.9)],
        };
        let text = serde_json::to_string(&resp).unwrap();
        assert!(text.contains("\"box\":[1.0,2.0,30.0,40.0]"));
        assert_eq!(parse_response(&text, "7").unwrap(), resp.detections);
    }

    #[test]
    fn score_out_of_range_reports_payload() {
        let text = r#"{"image_id":"7","detections":[{"category":"car","box":[0,0,5,5],"score":1.5}]}"#;
        match parse_response(text, "7").unwrap_err() {
            OracleError::MalformedDetection { payload, .. } => assert!(payload.contains("1.5")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn structural_violations() {
        for (text, id) in [
            ("not json", "1"),
            ("[]", "1"),
            (r#"{"detections":[]}"#, "1"),
            (r#"{"image_id":"2","detections":[]}"#, "1"),
            (r#"{"image_id":"1"}"#, "1"),
            (r#"{"image_id":"1","detections":{}}"#, "1"),
        ] {
            assert!(matches!(parse_response(text, id), Err(OracleError::Protocol(_))), "{text}");
        }
        let bad_box = r#"{"image_id":"1","detections":[{"category":"car","box":[5,5,1,1],"score":0.5}]}"#;
        assert!(matches!(
            parse_response(bad_box, "1"),
            Err(OracleError::MalformedDetection { .. })
        ));
        let short_box = r#"{"image_id":"1","detections":[{"category":"car","box":[5,5,1],"score":0.5}]}"#;
        assert!(parse_response(short_box, "1").unwrap_err().is_protocol());
    }
}
