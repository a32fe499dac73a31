//! Fetching query suggestions from search-engine autocomplete endpoints.

mod clock;
mod parse;
mod schedule;
mod strip;
mod transport;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use parse::{parse_engine_response, serialize_engine_response};
pub use schedule::{run_crawl_schedule, CrawlError, CrawlPlan, CrawlStats, EngineStats};
pub use strip::strip_prefix;
pub use transport::{
    fixture_path, HttpTransport, ReplayTransport, RequestLogEntry, SuggestRequest, SuggestTransport,
};

/// Longest suggestion list accepted from an engine.
pub const MAX_SUGGESTIONS: usize = 20;

/// The three supported autocomplete providers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Google,
    Bing,
    #[serde(rename = "duckduckgo")]
    DuckDuckGo,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Google, Engine::Bing, Engine::DuckDuckGo];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Google => "google",
            Engine::Bing => "bing",
            Engine::DuckDuckGo => "duckduckgo",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown engine `{0}` (expected google, bing or duckduckgo)")]
pub struct UnknownEngine(pub String);

impl FromStr for Engine {
    type Err = UnknownEngine;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "google" => Ok(Engine::Google),
            "bing" => Ok(Engine::Bing),
            "duckduckgo" | "ddg" => Ok(Engine::DuckDuckGo),
            _ => Err(UnknownEngine(s.to_string())),
        }
    }
}

/// An engine together with the language/region setting used to query it.
///
/// The locale is recorded with the request but is only interpreted by the
/// Google and Bing endpoints. Serialized as `engine:locale`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EngineId {
    pub engine: Engine,
    pub locale: String,
}

impl EngineId {
    pub fn new(engine: Engine, locale: impl Into<String>) -> Self {
        Self {
            engine,
            locale: locale.into(),
        }
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.engine, self.locale)
    }
}

/// Parses `engine` or `engine:locale`; the locale defaults to `en`.
impl FromStr for EngineId {
    type Err = UnknownEngine;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, locale) = match s.split_once(':') {
            Some((name, locale)) => (name, locale.trim()),
            None => (s, "en"),
        };
        Ok(EngineId::new(name.parse()?, locale))
    }
}

impl TryFrom<String> for EngineId {
    type Error = UnknownEngine;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<EngineId> for String {
    fn from(id: EngineId) -> String {
        id.to_string()
    }
}

/// One engine response for one query term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionList {
    pub query_term: String,
    pub engine: EngineId,
    pub timestamp: DateTime<Utc>,
    /// Suggestions in engine order; the position of an item is its index.
    pub suggestions: Vec<String>,
}

impl SuggestionList {
    /// Checks the list invariants: at most [`MAX_SUGGESTIONS`] items and no
    /// repeated strings.
    pub fn validate(&self) -> Result<(), String> {
        if self.suggestions.len() > MAX_SUGGESTIONS {
            return Err(format!(
                "{} suggestions exceeds the limit of {MAX_SUGGESTIONS}",
                self.suggestions.len()
            ));
        }
        let mut seen = HashSet::with_capacity(self.suggestions.len());
        for s in &self.suggestions {
            if !seen.insert(s.as_str()) {
                return Err(format!("duplicate suggestion `{s}`"));
            }
        }
        Ok(())
    }
}

/// Failure while talking to an engine or a replay directory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("{engine} `{query}`: network failure: {message}")]
    Network {
        engine: Engine,
        query: String,
        message: String,
    },
    #[error("{engine} `{query}`: HTTP status {status}")]
    Status {
        engine: Engine,
        query: String,
        status: u16,
    },
    #[error("{engine} `{query}`: request timed out")]
    Timeout { engine: Engine, query: String },
    #[error("{engine} `{query}`: no recorded response available")]
    NoFixture { engine: Engine, query: String },
}

/// Errors raised by suggestion parsing and fetching.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcquisitionError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{engine}: malformed response at byte {offset}: {message}")]
    Parse {
        engine: Engine,
        offset: usize,
        message: String,
    },
    #[error("{engine}: empty response body")]
    Empty { engine: Engine },
    #[error("{engine} `{query}`: invalid suggestion list: {reason}")]
    Malformed {
        engine: Engine,
        query: String,
        reason: String,
    },
}

/// Requests the suggestions for `query` and parses them into a
/// [`SuggestionList`] stamped with `at`.
///
/// The suggestions are returned verbatim; prefix stripping and cleaning
/// happen later.
pub fn fetch_suggestions(
    engine: &EngineId,
    query: &str,
    transport: &dyn SuggestTransport,
    at: DateTime<Utc>,
) -> Result<SuggestionList, AcquisitionError> {
    if query.trim().is_empty() {
        return Err(AcquisitionError::EmptyQuery);
    }
    let request = SuggestRequest {
        engine: engine.clone(),
        query: query.to_string(),
        issued_at: at,
    };
    let body = transport.get(&request)?;
    let suggestions = parse_engine_response(engine.engine, &body)?;
    let list = SuggestionList {
        query_term: query.to_string(),
        engine: engine.clone(),
        timestamp: at,
        suggestions,
    };
    list.validate()
        .map_err(|reason| AcquisitionError::Malformed {
            engine: engine.engine,
            query: query.to_string(),
            reason,
        })?;
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_names_round_trip() {
        for engine in Engine::ALL {
            assert_eq!(engine.as_str().parse::<Engine>().unwrap(), engine);
            let json = serde_json::to_string(&engine).unwrap();
            assert_eq!(json, format!("\"{}\"", engine.as_str()));
        }
        assert!("yahoo".parse::<Engine>().is_err());
    }

    #[test]
    fn engine_id_parses_locale() {
        let id: EngineId = "google:de".parse().unwrap();
        assert_eq!(id, EngineId::new(Engine::Google, "de"));
        let id: EngineId = "duckduckgo".parse().unwrap();
        assert_eq!(id.locale, "en");
        assert!("altavista:de".parse::<EngineId>().is_err());
    }

    #[test]
    fn list_validation() {
        let mut list = SuggestionList {
            query_term: "x".into(),
            engine: EngineId::new(Engine::Bing, "de"),
            timestamp: Utc::now(),
            suggestions: vec!["a".into(), "b".into()],
        };
        assert!(list.validate().is_ok());
        list.suggestions.push("a".into());
        assert!(list.validate().unwrap_err().contains("duplicate"));
        list.suggestions = (0..21).map(|i| i.to_string()).collect();
        assert!(list.validate().is_err());
    }
}
