use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;

use chrono::{DateTime, Duration, SubsecRound, Utc};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{fetch_suggestions, strip_prefix, AcquisitionError, Clock, EngineId, SuggestTransport};
use crate::acquisition::{Engine, SuggestionList};
use crate::store::{RecordSink, StoreError, SuggestionRecord};

fn default_requests_per_day() -> u32 {
    2
}
fn default_rounds() -> u32 {
    1
}
fn default_min_delay_ms() -> u64 {
    1000
}
fn default_jitter_ms() -> u64 {
    200
}
fn default_retry_limit() -> u32 {
    2
}
fn default_concurrency() -> usize {
    3
}

/// What to crawl and how politely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlPlan {
    pub terms: Vec<String>,
    pub engines: Vec<EngineId>,
    /// Rounds per day; consecutive rounds start `24h / requests_per_term_per_day` apart.
    #[serde(default = "default_requests_per_day")]
    pub requests_per_term_per_day: u32,
    /// Total number of rounds to run.
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    /// Minimum gap between two requests to the same engine.
    #[serde(default = "default_min_delay_ms")]
    pub min_delay_ms: u64,
    /// Upper bound of the random extra delay added on top of `min_delay_ms`.
    #[serde(default = "default_jitter_ms")]
    pub jitter_ms: u64,
    /// Retries after a transport failure.
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    /// Number of engines crawled in parallel.
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub seed: u64,
    /// Schedule origin; defaults to the clock's current time.
    #[serde(default)]
    pub start: Option<DateTime<Utc>>,
}

impl CrawlPlan {
    pub fn new(terms: Vec<String>, engines: Vec<EngineId>) -> Self {
        Self {
            terms,
            engines,
            requests_per_term_per_day: default_requests_per_day(),
            rounds: default_rounds(),
            min_delay_ms: default_min_delay_ms(),
            jitter_ms: default_jitter_ms(),
            retry_limit: default_retry_limit(),
            max_concurrency: default_concurrency(),
            seed: 0,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        let invalid = |m: &str| Err(CrawlError::InvalidPlan(m.to_string()));
        if self.requests_per_term_per_day == 0 {
            return invalid("requests_per_term_per_day must be at least 1");
        }
        if self.min_delay_ms == 0 {
            return invalid("min_delay_ms must be positive");
        }
        if self.max_concurrency == 0 {
            return invalid("max_concurrency must be at least 1");
        }
        if self.engines.is_empty() {
            return invalid("no engines configured");
        }
        let mut seen = HashSet::new();
        if !self.engines.iter().all(|e| seen.insert(e.engine)) {
            return invalid("each engine may appear only once");
        }
        if let Some(term) = self.terms.iter().find(|t| t.trim().is_empty()) {
            return Err(CrawlError::InvalidPlan(format!(
                "empty query term {term:?}"
            )));
        }
        Ok(())
    }

    fn round_interval(&self) -> Duration {
        Duration::seconds(86_400 / i64::from(self.requests_per_term_per_day))
    }
}

/// Request counters for one engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    /// (term, round) jobs started.
    pub attempted: u64,
    pub succeeded: u64,
    pub failed: u64,
    /// Extra requests issued after transport failures.
    pub retries: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CrawlStats {
    pub per_engine: BTreeMap<Engine, EngineStats>,
    pub records_written: u64,
}

impl CrawlStats {
    pub fn attempted(&self) -> u64 {
        self.per_engine.values().map(|s| s.attempted).sum()
    }
    pub fn succeeded(&self) -> u64 {
        self.per_engine.values().map(|s| s.succeeded).sum()
    }
    pub fn failed(&self) -> u64 {
        self.per_engine.values().map(|s| s.failed).sum()
    }
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl plan: {0}")]
    InvalidPlan(String),
    #[error("failed to write records: {0}")]
    Sink(#[from] StoreError),
}

/// Per-engine state that lives across rounds.
struct EngineWorker<C> {
    engine: EngineId,
    clock: C,
    last_request: Option<DateTime<Utc>>,
    rng: ChaCha8Rng,
    stats: EngineStats,
}

struct JobOutcome {
    job: usize,
    records: Option<Vec<SuggestionRecord>>,
}

/// Converts a fetched list into records sharing `session_id`.
///
/// Suggestions are prefix-stripped; when stripping leaves nothing the
/// original text is kept. Blank suggestions are dropped and positions are
/// renumbered densely.
pub(crate) fn list_to_records(list: &SuggestionList, session_id: u64) -> Vec<SuggestionRecord> {
    let timestamp = list.timestamp.trunc_subsecs(0);
    list.suggestions
        .iter()
        .filter(|s| !s.trim().is_empty())
        .enumerate()
        .map(|(position, raw)| {
            let stripped = strip_prefix(&list.query_term, raw);
            let suggestion = if stripped.is_empty() {
                raw.trim().to_string()
            } else {
                stripped
            };
            SuggestionRecord {
                session_id,
                engine: list.engine.engine,
                query_term: list.query_term.clone(),
                timestamp,
                suggestion,
                position: position as u32,
            }
        })
        .collect()
}

impl<C: Clock> EngineWorker<C> {
    fn wait_turn(&mut self, min_delay: Duration, jitter_ms: u64) -> DateTime<Utc> {
        if let Some(last) = self.last_request {
            let jitter = if jitter_ms > 0 {
                Duration::milliseconds(self.rng.random_range(0..=jitter_ms) as i64)
            } else {
                Duration::zero()
            };
            self.clock.sleep_until(last + min_delay + jitter);
        }
        let now = self.clock.now();
        self.last_request = Some(now);
        now
    }

    #[allow(clippy::too_many_arguments)]
    fn run_round(
        &mut self,
        plan: &CrawlPlan,
        round: usize,
        round_start: DateTime<Utc>,
        engine_index: usize,
        first_session_id: u64,
        transport: &dyn SuggestTransport,
        cancel: &AtomicBool,
        tx: &mpsc::Sender<JobOutcome>,
    ) {
        let min_delay = Duration::milliseconds(plan.min_delay_ms as i64);
        self.clock.sleep_until(round_start);
        for (term_index, term) in plan.terms.iter().enumerate() {
            if cancel.load(Ordering::Relaxed) {
                return;
            }
            let job = (round * plan.terms.len() + term_index) * plan.engines.len() + engine_index;
            self.stats.attempted += 1;
            let mut outcome = None;
            for attempt in 0..=plan.retry_limit {
                if attempt > 0 {
                    self.stats.retries += 1;
                }
                let at = self.wait_turn(min_delay, plan.jitter_ms);
                match fetch_suggestions(&self.engine, term, transport, at) {
                    Ok(list) => {
                        outcome = Some(list_to_records(&list, first_session_id + job as u64));
                        break;
                    }
                    Err(AcquisitionError::Transport(e)) => {
                        debug!("attempt {} failed: {e}", attempt + 1);
                    }
                    Err(e) => {
                        warn!("{e}");
                        break;
                    }
                }
            }
            match outcome {
                Some(_) => self.stats.succeeded += 1,
                None => {
                    warn!("giving up on {} `{term}` in round {round}", self.engine);
                    self.stats.failed += 1;
                }
            }
            if tx
                .send(JobOutcome {
                    job,
                    records: outcome,
                })
                .is_err()
            {
                return;
            }
        }
    }
}

/// Runs every (term, engine) request of `plan` and appends the results to `sink`.
///
/// Each engine is crawled on its own timeline: requests to one engine are at
/// least `min_delay_ms` apart (plus random jitter), engines run in parallel
/// up to `max_concurrency`, and round `r` starts no earlier than
/// `start + r * 24h / requests_per_term_per_day`. Each successful fetch
/// becomes one session whose id is `first_session_id` plus the job's index in
/// (round, term, engine) order, and sessions reach the sink in that order.
/// Transport failures are retried and then counted; only sink failures abort.
pub fn run_crawl_schedule<C: Clock>(
    plan: &CrawlPlan,
    transport: &dyn SuggestTransport,
    clock: C,
    sink: &mut dyn RecordSink,
    first_session_id: u64,
) -> Result<CrawlStats, CrawlError> {
    plan.validate()?;
    let start = plan.start.unwrap_or_else(|| clock.now());
    let mut workers: Vec<EngineWorker<C>> = plan
        .engines
        .iter()
        .map(|engine| EngineWorker {
            engine: engine.clone(),
            clock: clock.clone(),
            last_request: None,
            rng: ChaCha8Rng::seed_from_u64(
                plan.seed ^ (engine.engine as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ),
            stats: EngineStats::default(),
        })
        .collect();
    let engine_count = plan.engines.len();
    let cancel = AtomicBool::new(false);
    let mut records_written = 0u64;
    let mut sink_error = None;

    'rounds: for round in 0..plan.rounds as usize {
        let round_start = start + plan.round_interval() * round as i32;
        for (batch_index, batch) in workers.chunks_mut(plan.max_concurrency).enumerate() {
            let first_engine = batch_index * plan.max_concurrency;
            let batch_engines: Vec<usize> = (first_engine..first_engine + batch.len()).collect();
            let mut expected: Vec<usize> = (0..plan.terms.len())
                .flat_map(|t| {
                    batch_engines
                        .iter()
                        .map(move |&e| (round * plan.terms.len() + t) * engine_count + e)
                })
                .collect();
            expected.sort_unstable();
            let (tx, rx) = mpsc::channel::<JobOutcome>();
            std::thread::scope(|scope| {
                for (offset, worker) in batch.iter_mut().enumerate() {
                    let tx = tx.clone();
                    let cancel = &cancel;
                    scope.spawn(move || {
                        worker.run_round(
                            plan,
                            round,
                            round_start,
                            first_engine + offset,
                            first_session_id,
                            transport,
                            cancel,
                            &tx,
                        )
                    });
                }
                drop(tx);

                let mut pending: BTreeMap<usize, Option<Vec<SuggestionRecord>>> = BTreeMap::new();
                let mut next = 0;
                for outcome in rx {
                    pending.insert(outcome.job, outcome.records);
                    while next < expected.len() {
                        let Some(records) = pending.remove(&expected[next]) else {
                            break;
                        };
                        next += 1;
                        let Some(records) = records else { continue };
                        if sink_error.is_some() {
                            continue;
                        }
                        match sink.append(&records) {
                            Ok(n) => records_written += n as u64,
                            Err(e) => {
                                cancel.store(true, Ordering::Relaxed);
                                sink_error = Some(e);
                            }
                        }
                    }
                }
            });
            if sink_error.is_some() {
                break 'rounds;
            }
        }
    }
    if let Some(e) = sink_error {
        return Err(CrawlError::Sink(e));
    }
    Ok(CrawlStats {
        per_engine: workers.iter().map(|w| (w.engine.engine, w.stats)).collect(),
        records_written,
    })
}
