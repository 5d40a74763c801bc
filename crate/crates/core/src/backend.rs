//! Plumbing shared by the remote-service clients.

use std::time::Duration;

/// A backend reply together with the time it took.
///
/// Mock backends report their configured latency with `simulated = true`; the
/// driver is then responsible for applying that delay (virtually or by
/// sleeping). Live backends report measured wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct Timed<T> {
    pub value: T,
    pub latency: Duration,
    pub simulated: bool,
}

impl<T> Timed<T> {
    pub fn simulated(value: T, latency: Duration) -> Self {
        Self {
            value,
            latency,
            simulated: true,
        }
    }

    pub fn measured(value: T, latency: Duration) -> Self {
        Self {
            value,
            latency,
            simulated: false,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Timed<U> {
        Timed {
            value: f(self.value),
            latency: self.latency,
            simulated: self.simulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

impl BackendError {
    /// Failures worth one retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Unavailable(_) | BackendError::Timeout(_))
    }
}


pub(crate) fn http_error(err: reqwest::Error, timeout: Duration) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout(timeout)
    } else if let Some(status) = err.status() {
        if status.is_client_error() {
            BackendError::Rejected(err.to_string())
        } else {
            BackendError::Unavailable(err.to_string())
        }
    } else {
        BackendError::Unavailable(err.to_string())
    }
}
