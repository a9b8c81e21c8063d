//! JSON bodies of the remote denoiser protocol.
//!
//! Tensors travel as `{"shape": [...], "b64": "..."}` where the payload is
//! base64 (standard alphabet, padded) of the raw little-endian `f32` values in
//! row-major order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use elect_core::denoiser::{DenoiserRequest, PredictionMode};
use elect_core::{Error, Result, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTensor {
    pub shape: Vec<usize>,
    pub b64: String,
}

impl WireTensor {
    pub fn encode(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape: t.shape().to_vec(),
            b64: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(self.b64.as_bytes())
            .map_err(|e| Error::Protocol(format!("tensor payload is not valid base64: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Protocol(format!(
                "payload of {} bytes is not a whole number of f32 values",
                bytes.len()
            )));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| Error::Protocol(format!("bad tensor in response: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub mode: PredictionMode,
    pub t: usize,
    pub latent: WireTensor,
    pub image_latent: Option<WireTensor>,
    pub prompt: Option<String>,
}

impl PredictRequest {
    pub fn from_request(req: &DenoiserRequest<'_>) -> Self {
        Self {
            mode: req.mode,
            t: req.t,
            latent: WireTensor::encode(req.latent),
            image_latent: req.image_latent.map(WireTensor::encode),
            prompt: req.prompt.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub output: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EncodeRequest {
    Path { image_path: String },
    Png { image_b64_png: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let w = WireTensor::encode(&t);
        // 1.0 = 00 00 80 3f, -2.0 = 00 00 00 c0
        assert_eq!(w.b64, "AACAPwAAAMA=");
        assert!(w.decode().unwrap().bit_eq(&t));
    }

    #[test]
    fn malformed_payloads() {
        let bad = WireTensor {
            shape: vec![2],
            b64: "not base64!".into(),
        };
        assert!(matches!(bad.decode(), Err(Error::Protocol(_))));
        let short = WireTensor {
            shape: vec![2],
            b64: "AACAPw==".into(),
        };
        assert!(matches!(short.decode(), Err(Error::Protocol(_))));
        let ragged = WireTensor {
            shape: vec![1],
            b64: "AACA".into(),
        };
        assert!(matches!(ragged.decode(), Err(Error::Protocol(_))));
    }

    #[test]
    fn null_fields_serialize_as_null() {
        let z = Tensor::zeros(&[1]).unwrap();
        let req = DenoiserRequest {
            latent: &z,
            t: 3,
            image_latent: None,
            prompt: None,
            mode: PredictionMode::Velocity,
        };
        let v = serde_json::to_value(PredictRequest::from_request(&req)).unwrap();
        assert_eq!(v["mode"], "velocity");
        assert!(v["image_latent"].is_null());
        assert!(v["prompt"].is_null());
    }
}
