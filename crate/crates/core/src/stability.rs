//! Ranking stability over time measured with rank-biased overlap.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::Engine;
use crate::store::SuggestionRecord;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("ranking contains `{0}` more than once")]
    DuplicateItem(String),
    #[error("persistence p = {0} must lie strictly between 0 and 1")]
    Config(f64),
    #[error("series for `{0}` needs at least 2 snapshots")]
    TooShort(String),
    #[error("series for `{0}` has non-increasing timestamps")]
    Order(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RboVariant {
    /// Lower bound: unseen depths count as zero agreement.
    Min,
    /// Point estimate extrapolating the last observed agreement.
    #[default]
    Ext,
}

impl FromStr for RboVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(RboVariant::Min),
            "ext" => Ok(RboVariant::Ext),
            other => Err(format!("unknown RBO variant `{other}` (min|ext)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RboConfig {
    pub p: f64,
    pub variant: RboVariant,
}

impl Default for RboConfig {
    fn default() -> Self {
        Self {
            p: 0.9,
            variant: RboVariant::Ext,
        }
    }
}

impl RboConfig {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.p > 0.0 && self.p < 1.0 {
            Ok(())
        } else {
            Err(StabilityError::Config(self.p))
        }
    }
}

fn check_unique<T: Eq + Hash + std::fmt::Debug>(list: &[T]) -> Result<(), StabilityError> {
    let mut seen = HashSet::with_capacity(list.len());
    for item in list {
        if !seen.insert(item) {
            return Err(StabilityError::DuplicateItem(format!("{item:?}")));
        }
    }
    Ok(())
}

/// Overlap sizes `X_d` of the depth-`d` prefixes for `d = 1..=max(len)`.
/// Past its end, a list's prefix is the whole list.
fn overlaps<T: Eq + Hash>(a: &[T], b: &[T]) -> Vec<usize> {
    let depth = a.len().max(b.len());
    let mut seen_a = HashSet::with_capacity(a.len());
    let mut seen_b = HashSet::with_capacity(b.len());
    let mut x = 0;
    let mut out = Vec::with_capacity(depth);
    for d in 0..depth {
        match (a.get(d), b.get(d)) {
            (Some(u), Some(v)) if u == v => x += 1,
            (u, v) => {
                if let Some(u) = u {
                    if seen_b.contains(u) {
                        x += 1;
                    }
                    seen_a.insert(u);
                }
                if let Some(v) = v {
                    if seen_a.contains(v) {
                        x += 1;
                    }
                    seen_b.insert(v);
                }
            }
        }
        out.push(x);
    }
    out
}

/// Rank-biased overlap of two rankings with unique items.
///
/// Two empty rankings score 1, one empty ranking scores 0.
pub fn rbo<T: Eq + Hash + std::fmt::Debug>(
    a: &[T],
    b: &[T],
    config: &RboConfig,
) -> Result<f64, StabilityError> {
    config.validate()?;
    check_unique(a)?;
    check_unique(b)?;
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let p = config.p;
    let x = overlaps(a, b);
    let value = match config.variant {
        RboVariant::Min => {
            let mut weight = 1.0 - p;
            let mut sum = 0.0;
            for (d, &xd) in x.iter().enumerate() {
                sum += weight * xd as f64 / (d + 1) as f64;
                weight *= p;
            }
            sum
        }
        RboVariant::Ext => {
            let s = a.len().min(b.len());
            let l = x.len();
            let xs = x[s - 1] as f64;
            let xl = x[l - 1] as f64;
            let mut sum = 0.0;
            let mut pd = 1.0;
            for (i, &xd) in x.iter().enumerate() {
                let d = i + 1;
                pd *= p;
                sum += xd as f64 / d as f64 * pd;
                if d > s {
                    sum += xs * (d - s) as f64 / (s * d) as f64 * pd;
                }
            }
            (1.0 - p) / p * sum + ((xl - xs) / l as f64 + xs / s as f64) * pd
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Total weight RBO places on ranks `1..=d`.
pub fn rbo_prefix_weight(p: f64, d: usize) -> Result<f64, StabilityError> {
    RboConfig {
        p,
        variant: RboVariant::Ext,
    }
    .validate()?;
    assert!(d >= 1, "depth must be positive");
    let partial: f64 = (1..d).map(|i| p.powi(i as i32) / i as f64).sum();
    let w =
        1.0 - p.powi(d as i32 - 1) + (1.0 - p) / p * d as f64 * ((1.0 / (1.0 - p)).ln() - partial);
    Ok(w.clamp(0.0, 1.0))
}

/// Time-ordered rankings of one entity on one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSeries {
    pub entity: String,
    pub engine: Engine,
    pub snapshots: Vec<(DateTime<Utc>, Vec<String>)>,
}

impl RankingSeries {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.snapshots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(StabilityError::Order(self.entity.clone()));
        }
        for (_, ranking) in &self.snapshots {
            check_unique(ranking)?;
        }
        Ok(())
    }
}

/// Groups records of `engine` into one series per query term. Each fetch
/// session becomes a snapshot ranked by position. Sessions of one term that
/// share a timestamp keep only the highest session id.
pub fn series_from_records(records: &[SuggestionRecord], engine: Engine) -> Vec<RankingSeries> {
    let mut sessions: BTreeMap<&str, BTreeMap<u64, (DateTime<Utc>, Vec<(u32, &str)>)>> =
        BTreeMap::new();
    for r in records.iter().filter(|r| r.engine == engine) {
        sessions
            .entry(&r.query_term)
            .or_default()
            .entry(r.session_id)
            .or_insert_with(|| (r.timestamp, Vec::new()))
            .1
            .push((r.position, &r.suggestion));
    }
    sessions
        .into_iter()
        .map(|(term, by_session)| {
            let mut by_time: BTreeMap<DateTime<Utc>, Vec<String>> = BTreeMap::new();
            for (_, (ts, mut items)) in by_session {
                items.sort_unstable();
                let mut ranking: Vec<String> = Vec::with_capacity(items.len());
                for (_, s) in items {
                    if !ranking.iter().any(|r| r == s) {
                        ranking.push(s.to_string());
                    }
                }
                by_time.insert(ts, ranking);
            }
            RankingSeries {
                entity: term.to_string(),
                engine,
                snapshots: by_time.into_iter().collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub timestamp: DateTime<Utc>,
    pub rbo_vs_first: f64,
    pub rbo_vs_prev: f64,
}

/// RBO of every snapshot against the first and the previous one. The first
/// snapshot scores (1, 1).
pub fn stability_series(
    series: &RankingSeries,
    config: &RboConfig,
) -> Result<Vec<StabilityPoint>, StabilityError> {
    config.validate()?;
    if series.snapshots.len() < 2 {
        return Err(StabilityError::TooShort(series.entity.clone()));
    }
    series.validate()?;
    let first = &series.snapshots[0].1;
    let mut out = vec![StabilityPoint {
        timestamp: series.snapshots[0].0,
        rbo_vs_first: 1.0,
        rbo_vs_prev: 1.0,
    }];
    for w in series.snapshots.windows(2) {
        let (ts, current) = &w[1];
        out.push(StabilityPoint {
            timestamp: *ts,
            rbo_vs_first: rbo(current, first, config)?,
            rbo_vs_prev: rbo(current, &w[0].1, config)?,
        });
    }
    Ok(out)
}

/// [`stability_series`] over many series in parallel. Series with fewer
/// than two snapshots are skipped.
pub fn stability_all(
    series: &[RankingSeries],
    config: &RboConfig,
) -> Result<Vec<Vec<StabilityPoint>>, StabilityError> {
    series
        .par_iter()
        .filter(|s| s.snapshots.len() >= 2)
        .map(|s| stability_series(s, config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub window_start: DateTime<Utc>,
    pub mean_vs_first: f64,
    pub std_vs_first: f64,
    pub mean_vs_prev: f64,
    pub std_vs_prev: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Buckets points into half-open windows `[t0 + iw, t0 + (i+1)w)` with `t0`
/// the earliest timestamp; reports mean and population standard deviation
/// per non-empty window.
pub fn aggregate_window(points: &[StabilityPoint], window: Duration) -> Vec<WindowStat> {
    assert!(window > Duration::zero(), "window must be positive");
    let Some(t0) = points.iter().map(|p| p.timestamp).min() else {
        return Vec::new();
    };
    let width = window.num_milliseconds();
    let mut buckets: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points {
        let idx = (p.timestamp - t0).num_milliseconds() / width;
        let b = buckets.entry(idx).or_default();
        b.0.push(p.rbo_vs_first);
        b.1.push(p.rbo_vs_prev);
    }
    buckets
        .into_iter()
        .map(|(idx, (first, prev))| {
            let (mean_vs_first, std_vs_first) = mean_std(&first);
            let (mean_vs_prev, std_vs_prev) = mean_std(&prev);
            WindowStat {
                window_start: t0 + Duration::milliseconds(idx * width),
                mean_vs_first,
                std_vs_first,
                mean_vs_prev,
                std_vs_prev,
                n: first.len(),
            }
        })
        .collect()
}

pub fn windows_to_csv(windows: &[WindowStat]) -> String {
    let mut s =
        String::from("window_start,mean_vs_first,std_vs_first,mean_vs_prev,std_vs_prev,n\n");
    for w in windows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            w.window_start.format("%Y-%m-%dT%H:%M:%SZ"),
            w.mean_vs_first,
            w.std_vs_first,
            w.mean_vs_prev,
            w.std_vs_prev,
            w.n
        )
        .unwrap();
    }
    s
}

/// Line chart of both means with shaded ±1 standard deviation bands.
pub fn plot_svg(windows: &[WindowStat]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const M: f64 = 40.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - M,
        W - M,
        H - M,
        H - M
    );
    if windows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let span = (windows.len() - 1).max(1) as f64;
    let x = |i: usize| M + (W - 2.0 * M) * i as f64 / span;
    let y = |v: f64| H - M - (H - 2.0 * M) * v.clamp(0.0, 1.0);
    let series: [(&str, fn(&WindowStat) -> (f64, f64)); 2] = [
        ("#1f77b4", |w| (w.mean_vs_first, w.std_vs_first)),
        ("#d62728", |w| (w.mean_vs_prev, w.std_vs_prev)),
    ];
    for (color, get) in series {
        let upper: Vec<String> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let (m, s) = get(w);
                format!("{:.1},{:.1}", x(i), y(m + s))
            })
            .collect();
        let lower: Vec<String> = windows
            .iter()
            .enumerate()
            .rev()
            .map(|(i, w)| {
                let (m, s) = get(w);
                format!("{:.1},{:.1}", x(i), y(m - s))
            })
            .collect();
        let mean: Vec<String> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| format!("{:.1},{:.1}", x(i), y(get(w).0)))
            .collect();
        writeln!(
            svg,
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
            upper.join(" "),
            lower.join(" ")
        )
        .unwrap();
        writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            mean.join(" ")
        )
        .unwrap();
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"#1f77b4\">vs first</text>\n\
         <text x=\"{}\" y=\"36\" font-size=\"12\" fill=\"#d62728\">vs previous</text>\n</svg>\n",
        W - 120.0,
        W - 120.0
    ));
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    const EXT: RboConfig = RboConfig {
        p: 0.9,
        variant: RboVariant::Ext,
    };
    const MIN: RboConfig = RboConfig {
        p: 0.9,
        variant: RboVariant::Min,
    };

    #[test]
    fn swapped_pair() {
        assert!((rbo(&["a", "b"], &["b", "a"], &EXT).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let a = ["x", "y", "z"];
        assert_eq!(rbo(&a, &a, &EXT).unwrap(), 1.0);
        assert_eq!(rbo(&a, &["u", "v"], &EXT).unwrap(), 0.0);
        assert_eq!(rbo(&a, &["u", "v"], &MIN).unwrap(), 0.0);
        assert!((rbo(&a, &a, &MIN).unwrap() - (1.0 - 0.9f64.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn empty_lists() {
        let e: [&str; 0] = [];
        assert_eq!(rbo(&e, &e, &EXT).unwrap(), 1.0);
        assert_eq!(rbo(&e, &["a"], &EXT).unwrap(), 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            rbo(&["a", "a"], &["b"], &EXT),
            Err(StabilityError::DuplicateItem(_))
        ));
        let bad = RboConfig {
            p: 1.0,
            variant: RboVariant::Ext,
        };
        assert!(matches!(
            rbo(&["a"], &["a"], &bad),
            Err(StabilityError::Config(_))
        ));
        assert!(rbo_prefix_weight(0.0, 3).is_err());
    }

    #[test]
    fn prefix_weight() {
        assert!((rbo_prefix_weight(0.9, 9).unwrap() - 0.8313).abs() < 1e-4);
        assert!((rbo_prefix_weight(0.5, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let mut prev = 0.0;
        for d in 1..200 {
            let w = rbo_prefix_weight(0.9, d).unwrap();
            assert!(w > prev);
            prev = w;
        }
        assert!(prev > 1.0 - 1e-6);
    }

    fn ts(day: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2017, 6, 1, 0, 0, 0).unwrap() + Duration::days(day)
    }

    fn series(rankings: &[&[&str]]) -> RankingSeries {
        RankingSeries {
            entity: "e".into(),
            engine: Engine::Google,
            snapshots: rankings
                .iter()
                .enumerate()
                .map(|(i, r)| (ts(i as i64), r.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }

    #[test]
    fn constant_series() {
        let pts = stability_series(&series(&[&["a", "b"] as &[&str]; 5]), &EXT).unwrap();
        assert!(pts
            .iter()
            .all(|p| p.rbo_vs_first == 1.0 && p.rbo_vs_prev == 1.0));
    }

    #[test]
    fn wholesale_replacement() {
        let s = series(&[
            &["a", "b"],
            &["a", "b"],
            &["c", "d"],
            &["c", "d"],
            &["c", "d"],
        ]);
        let pts = stability_series(&s, &EXT).unwrap();
        let first: Vec<f64> = pts.iter().map(|p| p.rbo_vs_first).collect();
        let prev: Vec<f64> = pts.iter().map(|p| p.rbo_vs_prev).collect();
        assert_eq!(first, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(prev, vec![1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn series_errors() {
        assert!(matches!(
            stability_series(&series(&[&["a"]]), &EXT),
            Err(StabilityError::TooShort(_))
        ));
        let mut s = series(&[&["a"], &["b"]]);
        s.snapshots[1].0 = s.snapshots[0].0;
        assert!(matches!(
            stability_series(&s, &EXT),
            Err(StabilityError::Order(_))
        ));
    }

    #[test]
    fn window_arithmetic() {
        let p = |day: i64, f: f64| StabilityPoint {
            timestamp: ts(day),
            rbo_vs_first: f,
            rbo_vs_prev: 1.0,
        };
        let w = aggregate_window(&[p(0, 0.4), p(1, 0.6), p(7, 0.5)], Duration::days(3));
        assert_eq!(w.len(), 2);
        assert!((w[0].mean_vs_first - 0.5).abs() < 1e-12);
        assert!((w[0].std_vs_first - 0.1).abs() < 1e-12);
        assert_eq!(w[0].std_vs_prev, 0.0);
        assert_eq!((w[0].n, w[1].n), (2, 1));
        assert_eq!(w[1].window_start, ts(6));
        assert!(windows_to_csv(&w).starts_with("window_start,mean_vs_first"));
        assert!(plot_svg(&w).contains("<polyline"));
    }

    #[test]
    fn records_to_series() {
        let rec = |session: u64, day: i64, pos: u32, s: &str| SuggestionRecord {
            session_id: session,
            engine: Engine::Google,
            query_term: "t".into(),
            timestamp: ts(day),
            suggestion: s.into(),
            position: pos,
        };
        let rs = vec![rec(2, 1, 1, "y"), rec(2, 1, 0, "x"), rec(1, 0, 0, "x")];
        let s = series_from_records(&rs, Engine::Google);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].snapshots[1].1, vec!["x", "y"]);
        assert!(series_from_records(&rs, Engine::Bing).is_empty());
    }

    fn unique_list(max: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::btree_set(0u8..30, 0..max)
            .prop_flat_map(|s| Just(s.into_iter().collect::<Vec<_>>()).prop_shuffle())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn rbo_properties(a in unique_list(12), b in unique_list(12), p in 0.05f64..0.95) {
            let ext = RboConfig { p, variant: RboVariant::Ext };
            let min = RboConfig { p, variant: RboVariant::Min };
            let x = rbo(&a, &b, &ext).unwrap();
            let m = rbo(&a, &b, &min).unwrap();
            prop_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&m));
            prop_assert!((x - rbo(&b, &a, &ext).unwrap()).abs() < 1e-12);
            prop_assert!((m - rbo(&b, &a, &min).unwrap()).abs() < 1e-12);
            prop_assert!(m <= x + 1e-12);
            if !a.is_empty() {
                prop_assert!((rbo(&a, &a, &ext).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
