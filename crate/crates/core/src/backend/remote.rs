use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_dims, Backend};
use crate::error::{Error, Result};
use crate::types::{AccessLevel, FeatureVector, ModelOutput};

#[derive(Clone, Debug)]
pub struct RemoteOptions {
    pub timeout: Duration,
    /// Extra attempts after a timeout or connection failure.
    pub retries: u32,
    /// Idle connections kept per host.
    pub pool_size: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(10),
            retries: 2,
            pool_size: 8,
        }
    }
}

/// Server metadata returned by `GET /v1/info`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub access_level: AccessLevel,
    pub num_classes: usize,
    pub dim: usize,
    pub max_batch: usize,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    inputs: Vec<&'a [f64]>,
    level: AccessLevel,
}

#[derive(Deserialize)]
struct PredictResponse {
    outputs: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Client for the model-serving protocol. Batches larger than the server's
/// limit are split transparently.
pub struct RemoteBackend {
    base: String,
    client: reqwest::blocking::Client,
    info: ServerInfo,
    retries: u32,
}

impl RemoteBackend {
    pub fn connect(endpoint: &str, opts: RemoteOptions) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(opts.timeout)
            .pool_max_idle_per_host(opts.pool_size)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let base = endpoint.trim_end_matches('/').to_string();
        let mut backend = Self {
            base,
            client,
            info: ServerInfo {
                access_level: AccessLevel::Logits,
                num_classes: 0,
                dim: 0,
                max_batch: 1,
            },
            retries: opts.retries,
        };
        backend.info = backend.fetch_info()?;
        if backend.info.max_batch == 0 {
            return Err(Error::Backend("server reports max_batch = 0".into()));
        }
        Ok(backend)
    }

    pub fn info(&self) -> &ServerInfo {
        &self.info
    }

    fn with_retries<T>(&self, mut op: impl FnMut() -> reqwest::Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if (e.is_timeout() || e.is_connect()) && attempt < self.retries => {
                    attempt += 1;
                    log::warn!("request to {} failed ({e}); retry {attempt}", self.base);
                }
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        }
    }

    fn fetch_info(&self) -> Result<ServerInfo> {
        let url = format!("{}/v1/info", self.base);
        let resp = self.with_retries(|| self.client.get(&url).send())?;
        if !resp.status().is_success() {
            return Err(Error::Backend(format!("/v1/info returned {}", resp.status())));
        }
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("malformed /v1/info response: {e}")))
    }

    fn predict_chunk(&self, chunk: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>> {
        let url = format!("{}/v1/predict", self.base);
        let body = serde_json::to_vec(&PredictRequest {
            inputs: chunk.iter().map(FeatureVector::as_slice).collect(),
            level,
        })?;
        let resp = self.with_retries(|| {
            self.client
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if status == reqwest::StatusCode::FORBIDDEN {
            return Err(Error::AccessDenied);
        }
        if !status.is_success() {
            let detail = serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or(text);
            return Err(Error::Backend(format!("server returned {status}: {detail}")));
        }
        let parsed: PredictResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("malformed predict response: {e}")))?;
        if parsed.outputs.len() != chunk.len() {
            return Err(Error::Backend(format!(
                "server returned {} outputs for {} inputs",
                parsed.outputs.len(),
                chunk.len()
            )));
        }
        let expected = match level {
            AccessLevel::Embeddings => self.info.dim,
            _ => self.info.num_classes,
        };
        parsed
            .outputs
            .into_iter()
            .map(|v| {
                if v.len() != expected {
                    return Err(Error::Backend(format!(
                        "output of length {} where {expected} was expected",
                        v.len()
                    )));
                }
                ModelOutput::new(level.output_kind(), v)
                    .map_err(|e| Error::Backend(format!("malformed output: {e}")))
            })
            .collect()
    }
}

impl Backend for RemoteBackend {
    fn dim(&self) -> usize {
        self.info.dim
    }

    fn num_classes(&self) -> usize {
        self.info.num_classes
    }

    fn supports(&self, level: AccessLevel) -> bool {
        level == self.info.access_level
    }

    fn predict(&self, batch: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>> {
        check_dims(batch, self.info.dim)?;
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.info.max_batch) {
            out.extend(self.predict_chunk(chunk, level)?);
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("remote {} ({})", self.base, self.info.access_level)
    }
}
