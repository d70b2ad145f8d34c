//! JSON-over-HTTP inference client.
//!
//! Request: `{"tokens": [...]}`, or `{"tokens_a": [...], "tokens_b": [...]}`
//! for paired inputs. Response: `{"probs": [...]}`. Any non-2xx status is an
//! error.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ModelInput, ProbabilityDistribution, ProbabilityProvider, ProviderError, Result};
use crate::num::Real;

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Request<'a> {
    Single {
        tokens: &'a [String],
    },
    Paired {
        tokens_a: &'a [String],
        tokens_b: &'a [String],
    },
}

#[derive(Debug, Deserialize)]
struct Response {
    probs: Vec<f64>,
}

pub struct RemoteProvider {
    endpoint: String,
    num_classes: usize,
    max_in_flight: usize,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(endpoint: impl Into<String>, num_classes: usize) -> Self {
        RemoteProvider {
            endpoint: endpoint.into(),
            num_classes,
            max_in_flight: 4,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }

    /// Upper bound on concurrent requests issued by `predict_batch`.
    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl<T: Real> ProbabilityProvider<T> for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, input: &ModelInput) -> Result<ProbabilityDistribution<T>> {
        if input.tokens.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = match input.segments() {
            (a, Some(b)) => Request::Paired {
                tokens_a: a,
                tokens_b: b,
            },
            (tokens, None) => Request::Single { tokens },
        };
        let response = match self.agent.post(&self.endpoint).send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(ProviderError::Transport(format!(
                    "{} returned status {code}",
                    self.endpoint
                )))
            }
            Err(e) => return Err(ProviderError::Transport(e.to_string())),
        };
        let parsed: Response = response
            .into_json()
            .map_err(|e| ProviderError::Protocol(format!("malformed response body: {e}")))?;
        if parsed.probs.len() != self.num_classes {
            return Err(ProviderError::Protocol(format!(
                "expected {} probabilities, got {}",
                self.num_classes,
                parsed.probs.len()
            )));
        }
        let probs = parsed
            .probs
            .into_iter()
            .map(|p| {
                T::from_f64(p).ok_or_else(|| {
                    ProviderError::Protocol(format!("unrepresentable probability {p}"))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        ProbabilityDistribution::new(probs).map_err(|e| ProviderError::Protocol(e.to_string()))
    }

    fn predict_batch(&self, inputs: &[ModelInput]) -> Vec<Result<ProbabilityDistribution<T>>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ProbabilityDistribution<T>>>>> =
            inputs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.max_in_flight.min(inputs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= inputs.len() {
                        break;
                    }
                    let result = self.predict(&inputs[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .expect("slot lock")
                    .expect("every slot filled")
            })
            .collect()
    }
}
