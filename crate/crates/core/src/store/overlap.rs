use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::records::distinct_engines;
use super::{StoreError, SuggestionRecord};
use crate::acquisition::Engine;

/// Grouping used by [`unique_suggestions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    PerTerm,
    PerEngine,
    Global,
}

/// Key used for the single [`Scope::Global`] group.
pub const GLOBAL_KEY: &str = "all";

/// Distinct suggestion strings grouped by query term, engine, or not at all.
///
/// Strings are compared as stored, without any normalization.
pub fn unique_suggestions(
    records: &[SuggestionRecord],
    scope: Scope,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        let key = match scope {
            Scope::PerTerm => r.query_term.clone(),
            Scope::PerEngine => r.engine.as_str().to_string(),
            Scope::Global => GLOBAL_KEY.to_string(),
        };
        out.entry(key).or_default().insert(r.suggestion.clone());
    }
    out
}

/// Unique-suggestion counts per engine and for every combination of engines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub google: usize,
    pub bing: usize,
    pub duckduckgo: usize,
    pub google_bing: usize,
    pub google_duckduckgo: usize,
    pub bing_duckduckgo: usize,
    pub all_three: usize,
    pub total: usize,
}

impl OverlapReport {
    /// `total` recomputed from the other counts by inclusion-exclusion.
    pub fn inclusion_exclusion_total(&self) -> usize {
        self.google + self.bing + self.duckduckgo + self.all_three
            - self.google_bing
            - self.google_duckduckgo
            - self.bing_duckduckgo
    }

    /// Two-column CSV (`set,count`) with one row per count.
    pub fn to_csv(&self) -> String {
        let rows = [
            ("google", self.google),
            ("bing", self.bing),
            ("duckduckgo", self.duckduckgo),
            ("google&bing", self.google_bing),
            ("google&duckduckgo", self.google_duckduckgo),
            ("bing&duckduckgo", self.bing_duckduckgo),
            ("google&bing&duckduckgo", self.all_three),
            ("total", self.total),
        ];
        let mut out = String::from("set,count\n");
        for (name, count) in rows {
            writeln!(out, "{name},{count}").unwrap();
        }
        out
    }
}

/// Compares the unique suggestion sets of the three engines.
pub fn engine_overlap(records: &[SuggestionRecord]) -> Result<OverlapReport, StoreError> {
    let present = distinct_engines(records).len();
    if present < 2 {
        return Err(StoreError::Degenerate(present));
    }
    let by_engine = unique_suggestions(records, Scope::PerEngine);
    let empty = BTreeSet::new();
    let set = |e: Engine| by_engine.get(e.as_str()).unwrap_or(&empty);
    let (g, b, d) = (
        set(Engine::Google),
        set(Engine::Bing),
        set(Engine::DuckDuckGo),
    );
    let both = |x: &BTreeSet<String>, y: &BTreeSet<String>| x.intersection(y).count();
    Ok(OverlapReport {
        google: g.len(),
        bing: b.len(),
        duckduckgo: d.len(),
        google_bing: both(g, b),
        google_duckduckgo: both(g, d),
        bing_duckduckgo: both(b, d),
        all_three: g
            .iter()
            .filter(|s| b.contains(*s) && d.contains(*s))
            .count(),
        total: g.union(b).chain(d.iter()).collect::<BTreeSet<_>>().len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn rec(engine: Engine, term: &str, s: &str) -> SuggestionRecord {
        SuggestionRecord {
            session_id: 1,
            engine,
            query_term: term.into(),
            timestamp: Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).unwrap(),
            suggestion: s.into(),
            position: 0,
        }
    }

    #[test]
    fn per_term_sets() {
        let rs = vec![
            rec(Engine::Google, "t", "a"),
            rec(Engine::Google, "t", "a"),
            rec(Engine::Google, "t", "b"),
        ];
        let u = unique_suggestions(&rs, Scope::PerTerm);
        assert_eq!(u.len(), 1);
        assert_eq!(u["t"], BTreeSet::from(["a".to_string(), "b".to_string()]));
    }

    #[test]
    fn hand_counted_overlap() {
        let rs = vec![
            rec(Engine::Google, "t", "x"),
            rec(Engine::Google, "t", "y"),
            rec(Engine::Bing, "t", "y"),
            rec(Engine::Bing, "t", "z"),
            rec(Engine::DuckDuckGo, "t", "y"),
        ];
        let r = engine_overlap(&rs).unwrap();
        assert_eq!((r.google, r.bing, r.duckduckgo), (2, 2, 1));
        assert_eq!(
            (r.google_bing, r.google_duckduckgo, r.bing_duckduckgo),
            (1, 1, 1)
        );
        assert_eq!((r.all_three, r.total), (1, 3));
        assert!(r.to_csv().contains("google&bing&duckduckgo,1\n"));
    }

    #[test]
    fn single_engine_is_degenerate() {
        let rs = vec![rec(Engine::Google, "t", "x")];
        assert!(matches!(
            engine_overlap(&rs),
            Err(StoreError::Degenerate(1))
        ));
    }

    #[test]
    fn disjoint_engines_sum_to_global() {
        let rs = vec![
            rec(Engine::Google, "t", "a"),
            rec(Engine::Bing, "t", "b"),
            rec(Engine::Bing, "u", "c"),
            rec(Engine::DuckDuckGo, "t", "d"),
        ];
        let per = unique_suggestions(&rs, Scope::PerEngine);
        let global = unique_suggestions(&rs, Scope::Global);
        assert_eq!(
            per.values().map(BTreeSet::len).sum::<usize>(),
            global[GLOBAL_KEY].len()
        );
    }

    proptest! {
        #[test]
        fn inclusion_exclusion_holds(items in proptest::collection::vec((0u8..3, 0u8..12), 2..60)) {
            let mut rs: Vec<_> = items
                .iter()
                .map(|&(e, s)| rec(Engine::ALL[e as usize], "t", &s.to_string()))
                .collect();
            rs.push(rec(Engine::Google, "t", "g"));
            rs.push(rec(Engine::Bing, "t", "b"));
            let r = engine_overlap(&rs).unwrap();
            prop_assert_eq!(r.total, r.inclusion_exclusion_total());

            let per = unique_suggestions(&rs, Scope::PerEngine);
            let union: BTreeSet<String> = per.values().flatten().cloned().collect();
            prop_assert_eq!(&union, &unique_suggestions(&rs, Scope::Global)[GLOBAL_KEY]);
        }
    }
}
