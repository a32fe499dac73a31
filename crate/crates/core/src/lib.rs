//! Collection and statistical auditing of web search-engine query suggestions.
//!
//! The crate is organised along the audit pipeline:
//!
//! * [`acquisition`] fetches suggestion lists from the Google, Bing and
//!   DuckDuckGo autocomplete endpoints (or replays recorded responses) on a
//!   polite, rate-limited schedule.
//! * [`store`] persists suggestion records as JSON lines and computes corpus
//!   statistics such as the per-engine overlap of unique suggestions.
//! * [`preprocess`] cleans, filters and lemmatizes suggestions into a
//!   per-entity vocabulary.
//! * [`embedding`] loads word2vec tables and maps the vocabulary onto vectors.
//! * [`clustering`] groups the embedded lemmas with k-means and turns the
//!   groups into per-entity topic proportions.
//! * [`bias`] regresses topic proportions on entity attributes with OLS and
//!   reports coefficient, t and F inference.
//! * [`stability`] measures ranking drift with rank-biased overlap.
//! * [`synth`] generates corpora with planted effects for end-to-end checks.
//! * [`pipeline`] wires the analysis stages together from one config.

pub mod acquisition;
pub mod bias;
pub mod clustering;
pub mod embedding;
pub mod pipeline;
pub mod preprocess;
pub mod provenance;
pub mod stability;
pub mod store;
pub mod synth;

pub use acquisition::{Engine, EngineId, SuggestionList};
pub use store::{Entity, SuggestionRecord};
