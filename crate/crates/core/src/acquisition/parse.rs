use std::fmt;

use serde::de::{self, Deserializer, IgnoredAny, SeqAccess, Visitor};
use serde::Deserialize;

use super::{AcquisitionError, Engine};

/// OpenSearch-style payload shared by Google and Bing:
/// `[query, [s1, s2, ...], ...]`. Trailing elements are ignored.
struct OpenSearch(Vec<String>);

impl<'de> Deserialize<'de> for OpenSearch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OpenSearchVisitor;

        impl<'de> Visitor<'de> for OpenSearchVisitor {
            type Value = OpenSearch;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array [query, [suggestions...]]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<OpenSearch, A::Error> {
                let _query: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let suggestions: Vec<String> = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                while seq.next_element::<IgnoredAny>()?.is_some() {}
                Ok(OpenSearch(suggestions))
            }
        }

        deserializer.deserialize_seq(OpenSearchVisitor)
    }
}

#[derive(Deserialize)]
struct Phrase {
    phrase: String,
}

/// Extracts the ordered suggestion strings from a raw engine response.
///
/// An empty (or all-whitespace) body is reported as
/// [`AcquisitionError::Empty`]; a well-formed payload with no suggestions
/// yields an empty list.
pub fn parse_engine_response(engine: Engine, body: &[u8]) -> Result<Vec<String>, AcquisitionError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(AcquisitionError::Empty { engine });
    }
    let parsed = match engine {
        Engine::Google | Engine::Bing => serde_json::from_slice::<OpenSearch>(body).map(|p| p.0),
        Engine::DuckDuckGo => serde_json::from_slice::<Vec<Phrase>>(body)
            .map(|items| items.into_iter().map(|p| p.phrase).collect()),
    };
    parsed.map_err(|e| AcquisitionError::Parse {
        engine,
        offset: byte_offset(body, e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Writes `suggestions` back into the engine's wire format.
pub fn serialize_engine_response(engine: Engine, query: &str, suggestions: &[String]) -> Vec<u8> {
    let value = match engine {
        Engine::Google | Engine::Bing => serde_json::json!([query, suggestions]),
        Engine::DuckDuckGo => serde_json::Value::Array(
            suggestions
                .iter()
                .map(|s| serde_json::json!({ "phrase": s }))
                .collect(),
        ),
    };
    serde_json::to_vec(&value).expect("json values always serialize")
}

// serde_json reports 1-based line/column; column counts bytes within the line.
fn byte_offset(body: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = body
        .split(|&b| b == b'\n')
        .take(line - 1)
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(body.len())
}
