//! Thin async client for the what-if service.

use kes_core::wire::{
    AllocationResponse, ErrorBody, InstanceSummary, ReceiptResponse, SweepParam, SweepResponse, UploadConfig,
};
use kes_core::Rule;
use reqwest::multipart::{Form, Part};
use reqwest::{Response, Url};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid service url: {0}")]
    Url(String),
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service answered {status}: {} ({})", body.message, body.error)]
    Api { status: u16, body: ErrorBody },
}

/// Scenario query parameters; unset entries use the stored configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub rule: Option<Rule>,
    /// Decimal amount, e.g. `250000` or `1200.50`.
    pub budget: Option<String>,
    /// Decimal or `n/d`.
    pub split_r: Option<String>,
    /// `field:weight,...`
    pub weights: Option<String>,
}

impl Scenario {
    pub fn rule(rule: Rule) -> Self {
        Scenario { rule: Some(rule), ..Default::default() }
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(rule) = self.rule {
            out.push(("rule", rule.as_str().to_string()));
        }
        for (key, value) in [("budget", &self.budget), ("split_r", &self.split_r), ("weights", &self.weights)] {
            if let Some(v) = value {
                out.push((key, v.clone()));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct KesClient {
    base: Url,
    http: reqwest::Client,
}

impl KesClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let base = Url::parse(base).map_err(|e| ClientError::Url(e.to_string()))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Url(format!("`{base}` cannot be a base url")));
        }
        Ok(KesClient { base, http: reqwest::Client::new() })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut().expect("checked base").pop_if_empty().extend(segments);
        url
    }

    pub async fn health(&self) -> Result<bool, ClientError> {
        let resp = self.http.get(self.url(&["health"])).send().await?;
        Ok(resp.status().is_success())
    }

    pub async fn upload(
        &self,
        pb: Vec<u8>,
        groups: Option<Vec<u8>>,
        config: Option<&UploadConfig>,
    ) -> Result<InstanceSummary, ClientError> {
        let mut form = Form::new().part("pb", Part::bytes(pb).file_name("ballots.pb"));
        if let Some(sheet) = groups {
            form = form.part("groups", Part::bytes(sheet).file_name("groups.csv"));
        }
        if let Some(config) = config {
            let json = serde_json::to_vec(config).expect("config serializes");
            form = form.part("config", Part::bytes(json).file_name("config.json"));
        }
        let resp = self.http.post(self.url(&["instances"])).multipart(form).send().await?;
        decode(resp).await
    }

    pub async fn instance(&self, id: &str) -> Result<InstanceSummary, ClientError> {
        decode(self.http.get(self.url(&["instances", id])).send().await?).await
    }

    pub async fn allocation(&self, id: &str, scenario: &Scenario) -> Result<AllocationResponse, ClientError> {
        let url = self.url(&["instances", id, "allocation"]);
        decode(self.http.get(url).query(&scenario.pairs()).send().await?).await
    }

    pub async fn receipts(&self, id: &str, agent: &str, scenario: &Scenario) -> Result<ReceiptResponse, ClientError> {
        let url = self.url(&["instances", id, "receipts", agent]);
        decode(self.http.get(url).query(&scenario.pairs()).send().await?).await
    }

    pub async fn sweep(
        &self,
        id: &str,
        param: SweepParam,
        from: &str,
        to: &str,
        steps: usize,
        scenario: &Scenario,
    ) -> Result<SweepResponse, ClientError> {
        let mut pairs = scenario.pairs();
        pairs.retain(|(k, _)| *k != param.query_key());
        pairs.extend([
            ("param", param.as_str().to_string()),
            ("from", from.to_string()),
            ("to", to.to_string()),
            ("steps", steps.to_string()),
        ]);
        let url = self.url(&["instances", id, "sweep"]);
        decode(self.http.get(url).query(&pairs).send().await?).await
    }
}

async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp.json().await?);
    }
    let text = resp.text().await?;
    let body = serde_json::from_str(&text).unwrap_or(ErrorBody { error: "Http".into(), message: text, line: None });
    Err(ClientError::Api { status: status.as_u16(), body })
}
