use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

use super::{Engine, EngineId, TransportError};

// RFC 3986 unreserved characters stay literal.
const TERM_ENCODE_SET: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

/// A single autocomplete request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuggestRequest {
    pub engine: EngineId,
    pub query: String,
    pub issued_at: DateTime<Utc>,
}

/// Source of raw autocomplete responses.
pub trait SuggestTransport: Send + Sync {
    /// Returns the raw response body for `request`.
    fn get(&self, request: &SuggestRequest) -> Result<Vec<u8>, TransportError>;
}

impl<T: SuggestTransport + ?Sized> SuggestTransport for &T {
    fn get(&self, request: &SuggestRequest) -> Result<Vec<u8>, TransportError> {
        (**self).get(request)
    }
}

fn encode_term(term: &str) -> String {
    utf8_percent_encode(term, TERM_ENCODE_SET).to_string()
}

/// Endpoint URL for a live request.
pub(crate) fn endpoint_url(engine: &EngineId, query: &str) -> String {
    let q = encode_term(query);
    let locale = encode_term(&engine.locale);
    match engine.engine {
        Engine::Google => format!(
            "http://suggestqueries.google.com/complete/search?client=firefox&hl={locale}&q={q}"
        ),
        Engine::Bing => format!("https://api.bing.com/osjson.aspx?market={locale}&query={q}"),
        Engine::DuckDuckGo => format!("https://duckduckgo.com/ac/?q={q}"),
    }
}

/// Live HTTP transport against the public autocomplete endpoints.
#[derive(Debug)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(concat!("suggest-audit/", env!("CARGO_PKG_VERSION")))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

impl SuggestTransport for HttpTransport {
    fn get(&self, request: &SuggestRequest) -> Result<Vec<u8>, TransportError> {
        let engine = request.engine.engine;
        let query = request.query.clone();
        let url = endpoint_url(&request.engine, &request.query);
        let response = self.agent.get(&url).call().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout {
                engine,
                query: query.clone(),
            },
            other => TransportError::Network {
                engine,
                query: query.clone(),
                message: other.to_string(),
            },
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status {
                engine,
                query,
                status,
            });
        }
        response
            .into_body()
            .read_to_vec()
            .map_err(|e| TransportError::Network {
                engine,
                query,
                message: e.to_string(),
            })
    }
}

/// Location of a recorded response:
/// `<root>/<engine>/<urlencoded-term>/<ISO8601-instant>.json`.
pub fn fixture_path(root: &Path, engine: Engine, term: &str, at: DateTime<Utc>) -> PathBuf {
    root.join(engine.as_str())
        .join(encode_term(term))
        .join(format!(
            "{}.json",
            at.to_rfc3339_opts(SecondsFormat::Secs, true)
        ))
}

/// One request observed by a [`ReplayTransport`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLogEntry {
    pub engine: Engine,
    pub query: String,
    pub issued_at: DateTime<Utc>,
}

/// Serves recorded responses from a fixture directory.
///
/// Fixtures for one (engine, term) pair are served in file-name order, one
/// per request; once they are used up the pair fails with
/// [`TransportError::NoFixture`]. Every request is logged.
#[derive(Debug)]
pub struct ReplayTransport {
    root: PathBuf,
    cursors: Mutex<HashMap<(Engine, String), usize>>,
    log: Mutex<Vec<RequestLogEntry>>,
}

impl ReplayTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cursors: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Requests seen so far, in arrival order.
    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    fn recorded(&self, engine: Engine, term: &str) -> Vec<PathBuf> {
        let dir = self.root.join(engine.as_str()).join(encode_term(term));
        let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect(),
            Err(_) => Vec::new(),
        };
        files.sort();
        files
    }
}

impl SuggestTransport for ReplayTransport {
    fn get(&self, request: &SuggestRequest) -> Result<Vec<u8>, TransportError> {
        let engine = request.engine.engine;
        self.log.lock().expect("log lock").push(RequestLogEntry {
            engine,
            query: request.query.clone(),
            issued_at: request.issued_at,
        });
        let missing = || TransportError::NoFixture {
            engine,
            query: request.query.clone(),
        };
        let index = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let cursor = cursors.entry((engine, request.query.clone())).or_insert(0);
            let index = *cursor;
            *cursor += 1;
            index
        };
        let files = self.recorded(engine, &request.query);
        let path = files.get(index).ok_or_else(missing)?;
        fs::read(path).map_err(|_| missing())
    }
}
