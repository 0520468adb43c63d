//! Wall-clock access for the agents, swappable for a virtual clock in tests.

use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, NaiveDate, Utc};

#[async_trait]
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    fn today(&self) -> NaiveDate {
        self.now().date_naive()
    }

    /// Sleeps until `deadline`; returns at once if it has passed.
    async fn sleep_until(&self, deadline: DateTime<Utc>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

#[async_trait]
impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    async fn sleep_until(&self, deadline: DateTime<Utc>) {
        if let Ok(wait) = (deadline - Utc::now()).to_std() {
            tokio::time::sleep(wait).await;
        }
    }
}

/// A clock that starts at a chosen instant and advances with the tokio
/// timer. Under a paused runtime (`start_paused`) time only moves when every
/// task is idle, so schedules become exact and instantaneous.
#[derive(Debug, Clone)]
pub struct SimClock {
    epoch: DateTime<Utc>,
    origin: tokio::time::Instant,
}

impl SimClock {
    /// Must be called inside a tokio runtime.
    pub fn starting_at(epoch: DateTime<Utc>) -> Self {
        SimClock { epoch, origin: tokio::time::Instant::now() }
    }

    pub fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }
}

#[async_trait]
impl Clock for SimClock {
    fn now(&self) -> DateTime<Utc> {
        self.epoch + chrono::Duration::from_std(self.origin.elapsed()).unwrap_or_default()
    }

    async fn sleep_until(&self, deadline: DateTime<Utc>) {
        if let Ok(wait) = (deadline - self.now()).to_std() {
            tokio::time::sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[tokio::test(start_paused = true)]
    async fn sim_clock_advances_exactly() {
        let epoch = Utc.with_ymd_and_hms(2006, 3, 7, 9, 0, 0).unwrap();
        let clock = SimClock::starting_at(epoch);
        assert_eq!(clock.now(), epoch);
        clock.sleep_until(epoch + chrono::Duration::seconds(900)).await;
        assert_eq!(clock.now(), epoch + chrono::Duration::seconds(900));
        assert_eq!(clock.today(), NaiveDate::from_ymd_opt(2006, 3, 7).unwrap());
        clock.sleep_until(epoch).await;
        assert_eq!(clock.elapsed(), Duration::from_secs(900));
    }
}
