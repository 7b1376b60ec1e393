use std::time::Duration;

use log::debug;

use super::{SearchBudgetMeter, SearchError, SearchResponse, SearchSource, VocabResponse};
use crate::corpus::Item;

/// HTTP client for the search protocol. Never retries on its own.
#[derive(Debug)]
pub struct RemoteSearch {
    endpoint: String,
    agent: ureq::Agent,
    meter: SearchBudgetMeter,
}

impl RemoteSearch {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, query_cap: Option<u64>) -> Self {
        let endpoint = endpoint.into().trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            endpoint,
            agent,
            meter: SearchBudgetMeter::new(query_cap),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn get(&self, req: ureq::Request) -> Result<String, SearchError> {
        match req.call() {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| classify_io(&e).unwrap_or_else(|| SearchError::Malformed(e.to_string()))),
            Err(ureq::Error::Status(status, _)) => Err(SearchError::Status { status }),
            Err(ureq::Error::Transport(t)) => {
                let timed_out = std::error::Error::source(&t)
                    .and_then(|s| s.downcast_ref::<std::io::Error>())
                    .and_then(classify_io);
                Err(timed_out.unwrap_or_else(|| SearchError::Transport(t.to_string())))
            }
        }
    }
}

fn classify_io(e: &std::io::Error) -> Option<SearchError> {
    matches!(
        e.kind(),
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
    )
    .then_some(SearchError::Timeout)
}

impl SearchSource for RemoteSearch {
    fn search(&self, tag: &str, limit: usize, seed_token: u64) -> Result<Vec<Item>, SearchError> {
        self.meter.try_acquire()?;
        debug!("remote search tag={tag} limit={limit} token={seed_token}");
        let req = self
            .agent
            .get(&format!("{}/api/search", self.endpoint))
            .query("tag", tag)
            .query("limit", &limit.to_string())
            .query("token", &seed_token.to_string());
        let body = self.get(req)?;
        let parsed: SearchResponse =
            serde_json::from_str(&body).map_err(|e| SearchError::Malformed(e.to_string()))?;
        if parsed.items.len() > limit {
            return Err(SearchError::Malformed(format!(
                "{} items returned for limit {limit}",
                parsed.items.len()
            )));
        }
        if let Some(bad) = parsed
            .items
            .iter()
            .find(|it| it.id.is_empty() || it.features.iter().any(|v| !v.is_finite()))
        {
            return Err(SearchError::Malformed(format!("invalid item `{}`", bad.id)));
        }
        Ok(parsed.items)
    }

    fn vocabulary(&self) -> Result<Vec<String>, SearchError> {
        let body = self.get(self.agent.get(&format!("{}/api/vocab", self.endpoint)))?;
        let parsed: VocabResponse =
            serde_json::from_str(&body).map_err(|e| SearchError::Malformed(e.to_string()))?;
        Ok(parsed.tags)
    }

    fn meter(&self) -> &SearchBudgetMeter {
        &self.meter
    }
}
