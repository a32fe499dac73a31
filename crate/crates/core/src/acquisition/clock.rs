use chrono::{DateTime, Utc};

/// Time source for the crawl scheduler.
///
/// Each scheduler worker owns its own clone, so a virtual clock advances on
/// independent per-engine timelines.
pub trait Clock: Clone + Send {
    /// Current instant.
    fn now(&self) -> DateTime<Utc>;
    /// Blocks (or advances) until `until`; returns immediately if it has passed.
    fn sleep_until(&mut self, until: DateTime<Utc>);
}

/// Wall clock backed by [`std::thread::sleep`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&mut self, until: DateTime<Utc>) {
        let wait = until - Utc::now();
        if let Ok(wait) = wait.to_std() {
            std::thread::sleep(wait);
        }
    }
}

/// Simulated clock that jumps forward instead of sleeping.
///
/// Used with replayed responses so long schedules complete instantly while
/// preserving the timestamps a live crawl would have produced.
#[derive(Debug, Clone, Copy)]
pub struct VirtualClock {
    now: DateTime<Utc>,
}

impl VirtualClock {
    pub fn starting_at(start: DateTime<Utc>) -> Self {
        Self { now: start }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        self.now
    }

    fn sleep_until(&mut self, until: DateTime<Utc>) {
        if until > self.now {
            self.now = until;
        }
    }
}
