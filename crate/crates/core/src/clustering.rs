//! k-means over embedded lemmas, choice of K, and per-entity cluster scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::ops::RangeInclusive;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddedVocab;
use crate::preprocess::Vocabulary;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {n} points")]
    Degenerate { n: usize, k: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("invalid k range: {0}")]
    Range(String),
    #[error("model does not match the embedded vocabulary: {0}")]
    Mismatch(String),
    #[error("score table: {0}")]
    Format(String),
}

/// Row-major view over `n × dim` points.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(
            dim > 0 && data.len().is_multiple_of(dim),
            "data length must be a multiple of dim"
        );
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn check_finite(&self) -> Result<(), ClusterError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(at) => Err(ClusterError::NonFinite(at / self.dim)),
            None => Ok(()),
        }
    }
}

impl<'a> From<&'a EmbeddedVocab> for Points<'a> {
    fn from(e: &'a EmbeddedVocab) -> Self {
        Points::new(&e.matrix, e.dim)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-10,
            restarts: 10,
        }
    }
}

/// A fitted partition. Labels are canonical: cluster `j` is the one whose
/// smallest member index is the `j`-th smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub wss: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Lemma of each clustered point, when fitted on a vocabulary.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lemmas: Vec<String>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Renames cluster `j` to `perm[j]`.
    pub fn relabel(&mut self, perm: &[usize]) {
        assert_eq!(perm.len(), self.k);
        let mut centroids = vec![Vec::new(); self.k];
        for (j, c) in self.centroids.drain(..).enumerate() {
            centroids[perm[j]] = c;
        }
        self.centroids = centroids;
        for a in &mut self.assignments {
            *a = perm[*a];
        }
    }

    fn canonicalize(&mut self) {
        let mut first = vec![usize::MAX; self.k];
        for (i, &a) in self.assignments.iter().enumerate() {
            first[a] = first[a].min(i);
        }
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by_key(|&j| (first[j], j));
        let mut perm = vec![0; self.k];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        self.relabel(&perm);
    }
}

/// Outcome of Lloyd iterations from fixed initial centroids.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub wss: f64,
    pub iterations: usize,
    /// WSS of each (assignment, centroid) state visited, ending with `wss`.
    pub history: Vec<f64>,
}

fn assign(points: Points, centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..points.len())
        .into_par_iter()
        .map(|i| nearest(points.row(i), centroids))
        .collect();
    let wss = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), wss)
}

/// Centroids as cluster means. An empty cluster takes over the point lying
/// farthest from its current centroid among clusters with at least two
/// members; `assignments` is updated accordingly.
fn update(points: Points, assignments: &mut [usize], centroids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| (i, sq_dist(points.row(i), &centroids[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
        }
    }
    let mut sums = vec![vec![0.0; points.dim()]; k];
    for (i, &a) in assignments.iter().enumerate() {
        for (s, x) in sums[a].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(&counts)
        .zip(centroids)
        .map(|((s, &n), old)| {
            if n == 0 {
                old.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

fn total_wss(points: Points, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), &centroids[a]))
        .sum()
}

/// Lloyd iterations until assignments stop changing, the centroid shift
/// drops below `tol`, or `max_iter` updates have run.
pub fn lloyd(points: Points, initial: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> LloydRun {
    let mut centroids = initial;
    let (mut assignments, wss) = assign(points, &centroids);
    let mut history = vec![wss];
    let mut iterations = 0;
    while iterations < max_iter {
        let next = update(points, &mut assignments, &centroids);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        let (reassigned, wss) = assign(points, &centroids);
        history.push(wss);
        let changed = reassigned != assignments;
        assignments = reassigned;
        if !changed {
            break;
        }
        if shift < tol {
            centroids = update(points, &mut assignments, &centroids);
            history.push(total_wss(points, &assignments, &centroids));
            break;
        }
    }
    let wss = *history.last().expect("history is never empty");
    LloydRun {
        centroids,
        assignments,
        wss,
        iterations,
        history,
    }
}

/// k-means++ seeding: the first centre is uniform, later ones are drawn with
/// probability proportional to the squared distance to the nearest centre.
pub fn kmeans_plus_plus<R: Rng>(points: Points, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            while d2[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn check_input(points: Points, k: usize) -> Result<(), ClusterError> {
    if k == 0 || points.len() < k {
        return Err(ClusterError::Degenerate { n: points.len(), k });
    }
    points.check_finite()
}

/// Best-of-`params.restarts` k-means. Restart `r` draws its seeding from
/// stream `r` of a ChaCha8 generator keyed by `seed`; the lowest WSS wins,
/// ties going to the earlier restart.
pub fn kmeans(
    points: Points,
    k: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    let restarts = params.restarts.max(1) as u64;
    let best = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let init = kmeans_plus_plus(points, k, &mut rng);
            (r, lloyd(points, init, params.max_iter, params.tol))
        })
        .reduce_with(|a, b| {
            if (b.1.wss, b.0) < (a.1.wss, a.0) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart")
        .1;
    let mut model = ClusterModel {
        k,
        centroids: best.centroids,
        assignments: best.assignments,
        wss: best.wss,
        iterations: best.iterations,
        seed,
        lemmas: Vec::new(),
    };
    model.canonicalize();
    Ok(model)
}

/// Mean silhouette with Euclidean distance. Singleton clusters contribute 0.
pub fn silhouette(points: Points, assignments: &[usize], k: usize) -> f64 {
    silhouette_of(
        points,
        assignments,
        k,
        &(0..points.len()).collect::<Vec<_>>(),
    )
}

fn silhouette_of(points: Points, assignments: &[usize], k: usize, subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return 0.0;
    }
    let sum: f64 = subset
        .par_iter()
        .map(|&i| {
            let mut totals = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for &j in subset {
                if j != i {
                    totals[assignments[j]] += sq_dist(points.row(i), points.row(j)).sqrt();
                    counts[assignments[j]] += 1;
                }
            }
            let own = assignments[i];
            if counts[own] == 0 {
                return 0.0;
            }
            let a = totals[own] / counts[own] as f64;
            let b = (0..k)
                .filter(|&c| c != own && counts[c] > 0)
                .map(|c| totals[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .sum();
    sum / subset.len() as f64
}

/// Calinski–Harabasz index: (between-SS / (k−1)) / (within-SS / (n−k)).
pub fn calinski_harabasz(points: Points, model: &ClusterModel) -> f64 {
    let n = points.len();
    let k = model.k;
    if k < 2 || n <= k {
        return f64::NAN;
    }
    let mut mean = vec![0.0; points.dim()];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(points.row(i)) {
            *m += x / n as f64;
        }
    }
    let between: f64 = model
        .sizes()
        .iter()
        .zip(&model.centroids)
        .map(|(&s, c)| s as f64 * sq_dist(c, &mean))
        .sum();
    let within = total_wss(points, &model.assignments, &model.centroids);
    if within == 0.0 {
        return f64::INFINITY;
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

/// Points above which silhouettes are computed on a sample.
pub const SILHOUETTE_FULL_LIMIT: usize = 20_000;
/// Sample size used past [`SILHOUETTE_FULL_LIMIT`].
pub const SILHOUETTE_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub wss: f64,
    pub silhouette: f64,
    pub calinski_harabasz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<KCandidate>,
    pub elbow: usize,
    pub silhouette: usize,
    pub calinski_harabasz: usize,
    pub k: usize,
}

impl KSelectionReport {
    pub fn unanimous(&self) -> bool {
        self.elbow == self.k && self.silhouette == self.k && self.calinski_harabasz == self.k
    }
}

fn argmax_by(cands: &[KCandidate], key: impl Fn(&KCandidate) -> f64) -> usize {
    let mut best = &cands[0];
    for c in &cands[1..] {
        if key(c) > key(best) {
            best = c;
        }
    }
    best.k
}

/// Fits every `k` in `range` and recommends K by the elbow (largest second
/// difference of WSS), the largest mean silhouette, and the largest
/// Calinski–Harabasz index. The final K is the majority recommendation, or
/// the silhouette choice when all three differ.
pub fn select_k(
    points: Points,
    range: RangeInclusive<usize>,
    seed: u64,
    params: &KMeansParams,
) -> Result<KSelectionReport, ClusterError> {
    let n = points.len();
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 2 || hi < lo || hi + 1 > n {
        return Err(ClusterError::Range(format!(
            "{lo}..={hi} must lie within 2..={} for {n} points",
            n.saturating_sub(1)
        )));
    }
    points.check_finite()?;
    let subset: Vec<usize> = if n > SILHOUETTE_FULL_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let mut idx = sample(&mut rng, n, SILHOUETTE_SAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    // WSS at lo−1 and hi+1 give every candidate a second difference.
    let wss: BTreeMap<usize, f64> = ((lo - 1)..=(hi + 1))
        .map(|k| kmeans(points, k, seed, params).map(|m| (k, m.wss)))
        .collect::<Result<_, _>>()?;
    let mut candidates = Vec::new();
    for k in range {
        let model = kmeans(points, k, seed, params)?;
        candidates.push(KCandidate {
            k,
            wss: model.wss,
            silhouette: silhouette_of(points, &model.assignments, k, &subset),
            calinski_harabasz: calinski_harabasz(points, &model),
        });
    }
    let elbow = argmax_by(&candidates, |c| {
        wss[&(c.k - 1)] - 2.0 * c.wss + wss[&(c.k + 1)]
    });
    let sil = argmax_by(&candidates, |c| c.silhouette);
    let ch = argmax_by(&candidates, |c| c.calinski_harabasz);
    let k = if elbow == ch { elbow } else { sil };
    Ok(KSelectionReport {
        candidates,
        elbow,
        silhouette: sil,
        calinski_harabasz: ch,
        k,
    })
}

/// Per-entity topic proportions `y[i][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScoreMatrix {
    pub k: usize,
    pub entities: Vec<String>,
    /// Unique embedded lemmas per entity (`n_i`).
    pub counts: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    /// Entities without any embedded lemma.
    pub excluded: Vec<String>,
}

impl ClusterScoreMatrix {
    /// Proportions for 1-based cluster `cluster`, row-aligned with `entities`.
    pub fn column(&self, cluster: usize) -> Vec<f64> {
        self.scores.iter().map(|row| row[cluster - 1]).collect()
    }

    pub fn row_of(&self, entity: &str) -> Option<&[f64]> {
        self.entities
            .iter()
            .position(|e| e == entity)
            .map(|i| self.scores[i].as_slice())
    }

    /// CSV with header `entity,n_i,y_1..y_K`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["entity".to_string(), "n_i".to_string()];
        header.extend((1..=self.k).map(|j| format!("y_{j}")));
        w.write_record(&header).expect("in-memory write");
        for ((e, n), row) in self.entities.iter().zip(&self.counts).zip(&self.scores) {
            let mut rec = vec![e.clone(), n.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 output")
    }

    /// Inverse of [`to_csv`](Self::to_csv); `#` lines are ignored.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ClusterError> {
        let err = |m: String| ClusterError::Format(m);
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
        let k = header.len().saturating_sub(2);
        if header.get(0) != Some("entity") || header.get(1) != Some("n_i") || k == 0 {
            return Err(err("expected header entity,n_i,y_1..y_K".into()));
        }
        let mut out = ClusterScoreMatrix {
            k,
            entities: Vec::new(),
            counts: Vec::new(),
            scores: Vec::new(),
            excluded: Vec::new(),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let bad = |what: &str| err(format!("row {}: bad {what}", line + 2));
            out.entities.push(rec[0].to_string());
            out.counts.push(rec[1].parse().map_err(|_| bad("n_i"))?);
            let row = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad("score")))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != k {
                return Err(bad("column count"));
            }
            out.scores.push(row);
        }
        Ok(out)
    }
}

/// `y[i][k]` = share of entity `i`'s unique embedded lemmas assigned to
/// cluster `k`. Entities with no embedded lemma are listed in `excluded`.
pub fn cluster_scores(
    vocab: &Vocabulary,
    embedded: &EmbeddedVocab,
    model: &ClusterModel,
) -> Result<ClusterScoreMatrix, ClusterError> {
    scores_for_lemmas(vocab, &embedded.lemmas, model)
}

/// [`cluster_scores`] given only the clustered lemmas, row-aligned with
/// `model.assignments`.
pub fn scores_for_lemmas(
    vocab: &Vocabulary,
    lemmas: &[String],
    model: &ClusterModel,
) -> Result<ClusterScoreMatrix, ClusterError> {
    if model.assignments.len() != lemmas.len() {
        return Err(ClusterError::Mismatch(format!(
            "{} assignments for {} embedded lemmas",
            model.assignments.len(),
            lemmas.len()
        )));
    }
    if !model.lemmas.is_empty() && model.lemmas != lemmas {
        return Err(ClusterError::Mismatch("lemma lists differ".into()));
    }
    let cluster_of: HashMap<&str, usize> = lemmas
        .iter()
        .map(String::as_str)
        .zip(model.assignments.iter().copied())
        .collect();
    let mut out = ClusterScoreMatrix {
        k: model.k,
        entities: Vec::new(),
        counts: Vec::new(),
        scores: Vec::new(),
        excluded: Vec::new(),
    };
    for entity in vocab.incidence.keys() {
        let mut tally = vec![0usize; model.k];
        for lemma in vocab.lemmas_of(entity) {
            if let Some(&c) = cluster_of.get(lemma) {
                tally[c] += 1;
            }
        }
        let n: usize = tally.iter().sum();
        if n == 0 {
            out.excluded.push(entity.clone());
            continue;
        }
        out.entities.push(entity.clone());
        out.counts.push(n);
        out.scores
            .push(tally.iter().map(|&c| c as f64 / n as f64).collect());
    }
    Ok(out)
}

/// Human-readable cluster sizes, one line per 1-based cluster.
pub fn describe_sizes(model: &ClusterModel) -> String {
    let mut s = String::new();
    for (j, size) in model.sizes().iter().enumerate() {
        writeln!(s, "cluster {}: {size}", j + 1).unwrap();
    }
    s
}
