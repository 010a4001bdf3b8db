//! Blocking HTTP access shared by every networked stage.
//!
//! All requests go through [`HttpClient`], which never follows redirects on
//! its own: callers that want redirects use [`HttpClient::get_following`], so
//! every hop is checked against the optional host allowlist. Retries and rate
//! limiting live in [`fetch_with_retry`].

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("invalid url `{0}`")]
    InvalidUrl(String),
    #[error("request to `{url}` blocked: host not in allowlist")]
    Blocked { url: String },
    #[error("transport error for `{url}`: {message}")]
    Transport { url: String, message: String },
    #[error("response body from `{url}` exceeds {limit} bytes")]
    BodyTooLarge { url: String, limit: u64 },
    #[error("too many redirects starting at `{url}`")]
    TooManyRedirects { url: String },
    #[error("redirect loop at `{url}`")]
    RedirectLoop { url: String },
    #[error("io error writing download: {0}")]
    Io(#[from] std::io::Error),
}

impl HttpError {
    pub fn is_transient(&self) -> bool {
        matches!(self, HttpError::Transport { .. })
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub url: String,
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn is_redirect(&self) -> bool {
        matches!(self.status, 301 | 302 | 303 | 307 | 308)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    /// Whether the provider signalled throttling rather than a real refusal.
    pub fn is_rate_limited(&self) -> bool {
        self.status == 429
            || (self.status == 403 && self.header("x-ratelimit-remaining") == Some("0"))
    }

    /// Seconds the server asked us to wait, from `Retry-After` or an epoch
    /// `X-RateLimit-Reset`.
    pub fn retry_after(&self) -> Option<Duration> {
        if let Some(v) = self.header("retry-after") {
            if let Ok(secs) = v.trim().parse::<u64>() {
                return Some(Duration::from_secs(secs));
            }
        }
        let reset = self.header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
        let now = chrono::Utc::now().timestamp();
        Some(Duration::from_secs((reset - now).max(0) as u64))
    }
}

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub user_agent: String,
    pub timeout: Duration,
    /// Hosts (optionally `host:port`) requests may reach. `None` allows all.
    pub allowed_hosts: Option<Vec<String>>,
    /// Cap on bodies read into memory.
    pub max_body_bytes: u64,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            user_agent: concat!("repro-audit/", env!("CARGO_PKG_VERSION")).to_string(),
            timeout: Duration::from_secs(60),
            allowed_hosts: None,
            max_body_bytes: 64 * 1024 * 1024,
        }
    }
}

pub struct HttpClient {
    agent: ureq::Agent,
    options: HttpOptions,
}

impl HttpClient {
    pub fn new(options: HttpOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(options.timeout))
            .user_agent(options.user_agent.clone())
            .build();
        Self {
            agent: config.into(),
            options,
        }
    }

    pub fn options(&self) -> &HttpOptions {
        &self.options
    }

    fn check_allowed(&self, url: &str) -> Result<Url, HttpError> {
        let parsed = Url::parse(url).map_err(|_| HttpError::InvalidUrl(url.to_string()))?;
        if let Some(allowed) = &self.options.allowed_hosts {
            let host = parsed.host_str().unwrap_or_default();
            let with_port = match parsed.port() {
                Some(p) => format!("{host}:{p}"),
                None => host.to_string(),
            };
            if !allowed.iter().any(|a| a == host || *a == with_port) {
                return Err(HttpError::Blocked {
                    url: url.to_string(),
                });
            }
        }
        Ok(parsed)
    }

    fn send_get(
        &self,
        url: &str,
        headers: &[(String, String)],
    ) -> Result<ureq::http::Response<ureq::Body>, HttpError> {
        self.check_allowed(url)?;
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        req.call().map_err(|e| HttpError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })
    }

    fn collect_headers(resp: &ureq::http::Response<ureq::Body>) -> Vec<(String, String)> {
        resp.headers()
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v.to_str().unwrap_or_default().to_string()))
            .collect()
    }

    /// Single GET, redirects are returned as-is.
    pub fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, HttpError> {
        let mut resp = self.send_get(url, headers)?;
        let status = resp.status().as_u16();
        let hdrs = Self::collect_headers(&resp);
        let limit = self.options.max_body_bytes;
        let body = resp
            .body_mut()
            .with_config()
            .limit(limit)
            .read_to_vec()
            .map_err(|e| match e {
                ureq::Error::BodyExceedsLimit(_) => HttpError::BodyTooLarge {
                    url: url.to_string(),
                    limit,
                },
                other => HttpError::Transport {
                    url: url.to_string(),
                    message: other.to_string(),
                },
            })?;
        Ok(HttpResponse {
            url: url.to_string(),
            status,
            headers: hdrs,
            body,
        })
    }

    /// GET that follows up to `max_hops` redirects, checking every hop
    /// against the allowlist and rejecting loops.
    pub fn get_following(
        &self,
        url: &str,
        headers: &[(String, String)],
        max_hops: usize,
    ) -> Result<HttpResponse, HttpError> {
        let mut current = url.to_string();
        let mut seen = vec![current.clone()];
        for _ in 0..=max_hops {
            let resp = self.get(&current, headers)?;
            if !resp.is_redirect() {
                return Ok(resp);
            }
            let next = redirect_target(&current, &resp)?;
            if seen.contains(&next) {
                return Err(HttpError::RedirectLoop { url: next });
            }
            seen.push(next.clone());
            current = next;
        }
        Err(HttpError::TooManyRedirects {
            url: url.to_string(),
        })
    }

    /// Streams a (redirect-following) GET body into `dest`, aborting once
    /// `limit` bytes have been written. Non-2xx responses are returned
    /// without touching `dest`.
    pub fn download_to(
        &self,
        url: &str,
        headers: &[(String, String)],
        dest: &Path,
        limit: u64,
    ) -> Result<HttpResponse, HttpError> {
        let mut current = url.to_string();
        for _ in 0..=10 {
            let mut resp = self.send_get(&current, headers)?;
            let status = resp.status().as_u16();
            let hdrs = Self::collect_headers(&resp);
            let meta = HttpResponse {
                url: current.clone(),
                status,
                headers: hdrs,
                body: Vec::new(),
            };
            if meta.is_redirect() {
                current = redirect_target(&current, &meta)?;
                continue;
            }
            if !meta.is_success() {
                let mut small = meta;
                small.body = resp
                    .body_mut()
                    .with_config()
                    .limit(1024 * 1024)
                    .read_to_vec()
                    .unwrap_or_default();
                return Ok(small);
            }
            let mut reader = resp
                .body_mut()
                .with_config()
                .limit(limit.saturating_add(1))
                .reader();
            let mut file = File::create(dest)?;
            let mut buf = [0u8; 64 * 1024];
            let mut written: u64 = 0;
            loop {
                let n = match reader.read(&mut buf) {
                    Ok(n) => n,
                    Err(e) => {
                        if e.to_string().contains("limit") {
                            return Err(HttpError::BodyTooLarge {
                                url: current.clone(),
                                limit,
                            });
                        }
                        return Err(HttpError::Transport {
                            url: current.clone(),
                            message: e.to_string(),
                        });
                    }
                };
                if n == 0 {
                    break;
                }
                written += n as u64;
                if written > limit {
                    return Err(HttpError::BodyTooLarge {
                        url: current.clone(),
                        limit,
                    });
                }
                file.write_all(&buf[..n])?;
            }
            file.flush()?;
            return Ok(meta);
        }
        Err(HttpError::TooManyRedirects {
            url: url.to_string(),
        })
    }

    pub fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpResponse, HttpError> {
        self.check_allowed(url)?;
        let mut req = self.agent.post(url).content_type("application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| HttpError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let hdrs = Self::collect_headers(&resp);
        let body = resp
            .body_mut()
            .with_config()
            .limit(self.options.max_body_bytes)
            .read_to_vec()
            .map_err(|e| HttpError::Transport {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        Ok(HttpResponse {
            url: url.to_string(),
            status,
            headers: hdrs,
            body,
        })
    }
}

/// Absolute target of a redirect response, resolving relative `Location`s.
pub fn redirect_target(current: &str, resp: &HttpResponse) -> Result<String, HttpError> {
    let location = resp.header("location").ok_or_else(|| HttpError::Transport {
        url: current.to_string(),
        message: format!("redirect status {} without Location", resp.status),
    })?;
    let base = Url::parse(current).map_err(|_| HttpError::InvalidUrl(current.to_string()))?;
    base.join(location)
        .map(|u| u.to_string())
        .map_err(|_| HttpError::InvalidUrl(location.to_string()))
}

/// Spaces requests to at most `rate` per second.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        let interval = if rate.is_finite() && rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    /// Pushes the next slot out, e.g. after a server-side throttle.
    pub fn pause_for(&self, d: Duration) {
        let mut next = self.next.lock().unwrap();
        let until = Instant::now() + d;
        if until > *next {
            *next = until;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    /// Upper bound on any single server-requested wait.
    pub max_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            max_wait: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

#[derive(Debug, Error)]
pub enum RetryError {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error(transparent)]
    Fatal(HttpError),
}

impl RetryError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RetryError::Exhausted { .. })
    }
}

/// Runs `op` under the rate limiter, retrying transport errors, 5xx and
/// throttling responses with exponential backoff. Any other response,
/// including 4xx, is handed back to the caller.
pub fn fetch_with_retry<F>(
    limiter: Option<&RateLimiter>,
    policy: &RetryPolicy,
    mut op: F,
) -> Result<HttpResponse, RetryError>
where
    F: FnMut() -> Result<HttpResponse, HttpError>,
{
    let attempts = policy.attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if let Some(l) = limiter {
            l.acquire();
        }
        let mut wait = policy.backoff(attempt);
        match op() {
            Ok(resp) if resp.is_rate_limited() || resp.status >= 500 => {
                last = format!("HTTP {} from {}", resp.status, resp.url);
                if let Some(d) = resp.retry_after() {
                    wait = d.min(policy.max_wait);
                    if let Some(l) = limiter {
                        l.pause_for(wait);
                    }
                }
            }
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_transient() => last = e.to_string(),
            Err(e) => return Err(RetryError::Fatal(e)),
        }
        tracing::debug!(attempt, %last, "retrying request");
        if attempt + 1 < attempts && !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
    Err(RetryError::Exhausted { attempts, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(status: u16, headers: &[(&str, &str)]) -> HttpResponse {
        HttpResponse {
            url: "http://x/".into(),
            status,
            headers: headers
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            body: Vec::new(),
        }
    }

    fn quick() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
            max_wait: Duration::ZERO,
        }
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(0), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(4));
    }

    #[test]
    fn retries_server_errors_then_gives_up() {
        let mut calls = 0;
        let err = fetch_with_retry(None, &quick(), || {
            calls += 1;
            Ok(resp(503, &[]))
        })
        .unwrap_err();
        assert_eq!(calls, 3);
        assert!(err.is_retryable());
    }

    #[test]
    fn not_found_is_returned_not_retried() {
        let mut calls = 0;
        let r = fetch_with_retry(None, &quick(), || {
            calls += 1;
            Ok(resp(404, &[]))
        })
        .unwrap();
        assert_eq!(r.status, 404);
        assert_eq!(calls, 1);
    }

    #[test]
    fn github_style_throttle_is_rate_limited() {
        assert!(resp(403, &[("X-RateLimit-Remaining", "0")]).is_rate_limited());
        assert!(!resp(403, &[]).is_rate_limited());
        assert_eq!(
            resp(429, &[("Retry-After", "7")]).retry_after(),
            Some(Duration::from_secs(7))
        );
    }

    #[test]
    fn allowlist_blocks_other_hosts() {
        let client = HttpClient::new(HttpOptions {
            allowed_hosts: Some(vec!["127.0.0.1".into()]),
            ..Default::default()
        });
        let err = client.get("https://example.org/", &[]).unwrap_err();
        assert!(matches!(err, HttpError::Blocked { .. }));
    }

    #[test]
    fn relative_location_is_resolved() {
        let r = resp(302, &[("Location", "/b/c")]);
        assert_eq!(redirect_target("http://h:1/a", &r).unwrap(), "http://h:1/b/c");
    }
}
