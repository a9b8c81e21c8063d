//! Generic JSON-over-HTTP multimodal model adapter.
//!
//! Each call POSTs `{"system": <rendered template>, "inputs": {...}}` to one
//! URL and hands the response body to the caller unparsed.

use std::path::Path;
use std::time::Duration;

use elect_core::prompt::MllmClient;
use elect_core::{Error, Result, Tensor};
use serde_json::json;

use crate::wire::WireTensor;

pub const EVALUATE_TEMPLATE: &str = include_str!("../templates/evaluate.txt");
pub const VARIANTS_TEMPLATE: &str = include_str!("../templates/variants.txt");

/// Python `str.format`-style rendering: `{{` and `}}` are literal braces and
/// each `{}` takes the next argument.
pub fn render(template: &str, args: &[&str]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut next = args.iter();
    let mut chars = template.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match (c, chars.peek().map(|&(_, n)| n)) {
            ('{', Some('{')) | ('}', Some('}')) => {
                out.push(c);
                chars.next();
            }
            ('{', Some('}')) => {
                chars.next();
                let arg = next
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("template has more placeholders than arguments".into()))?;
                out.push_str(arg);
            }
            ('{', _) | ('}', _) => {
                return Err(Error::InvalidArgument(format!(
                    "unescaped brace at byte {pos} of template"
                )));
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HttpMllm {
    url: String,
    agent: ureq::Agent,
    evaluate_template: String,
    variants_template: String,
}

impl HttpMllm {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
            evaluate_template: EVALUATE_TEMPLATE.to_string(),
            variants_template: VARIANTS_TEMPLATE.to_string(),
        }
    }

    pub fn with_templates(mut self, evaluate: Option<&Path>, variants: Option<&Path>) -> std::io::Result<Self> {
        if let Some(p) = evaluate {
            self.evaluate_template = std::fs::read_to_string(p)?;
        }
        if let Some(p) = variants {
            self.variants_template = std::fs::read_to_string(p)?;
        }
        Ok(self)
    }

    fn call(&self, body: serde_json::Value) -> Result<String> {
        let transport = |message: String, retryable: bool| Error::Transport {
            message,
            attempts: 1,
            retryable,
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| transport(format!("{}: {e}", self.url), true))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(format!("{}: reading body: {e}", self.url), true))?;
        if !(200..300).contains(&status) {
            return Err(transport(format!("{}: HTTP {status}", self.url), status >= 500));
        }
        Ok(text)
    }
}

impl MllmClient for HttpMllm {
    fn evaluate(&self, source: &Tensor, edited: &Tensor, instruction: &str) -> Result<String> {
        let system = render(&self.evaluate_template, &[])?;
        self.call(json!({
            "system": system,
            "inputs": {
                "instruction": instruction,
                "source": WireTensor::encode(source),
                "edited": WireTensor::encode(edited),
            }
        }))
    }

    fn variants(&self, source: &Tensor, instruction: &str, n: usize) -> Result<String> {
        let system = render(&self.variants_template, &[instruction])?;
        self.call(json!({
            "system": system,
            "inputs": {
                "instruction": instruction,
                "n": n,
                "source": WireTensor::encode(source),
            }
        }))
    }
}
