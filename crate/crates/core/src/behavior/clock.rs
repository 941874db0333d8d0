//! Virtual time.
//!
//! Twin time is kept as milliseconds since a calendar epoch. It only moves
//! when the runtime is told to advance, so runs are reproducible and a
//! ten-hour experiment costs no wall time. [`WallPacer`] maps wall time to
//! virtual time for live servers.

use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub const DEFAULT_ACCELERATION: f64 = 60.0;

/// 2024-01-01 08:30, half an hour before the first default intake.
pub fn default_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(8, 30, 0)
        .unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualClock {
    epoch: NaiveDateTime,
    now_ms: u64,
}

impl VirtualClock {
    pub fn new(epoch: NaiveDateTime) -> Self {
        Self { epoch, now_ms: 0 }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn epoch(&self) -> NaiveDateTime {
        self.epoch
    }

    pub fn now_datetime(&self) -> NaiveDateTime {
        self.datetime_at(self.now_ms)
    }

    pub fn datetime_at(&self, ms: u64) -> NaiveDateTime {
        self.epoch + chrono::Duration::milliseconds(ms as i64)
    }

    /// Virtual offset of a calendar instant, or `None` if it precedes the epoch.
    pub fn offset_of(&self, at: NaiveDateTime) -> Option<u64> {
        let d = (at - self.epoch).num_milliseconds();
        (d >= 0).then_some(d as u64)
    }

    /// Moves time forward. Never moves backwards.
    pub fn advance_to(&mut self, ms: u64) {
        self.now_ms = self.now_ms.max(ms);
    }

    pub fn advance_by(&mut self, delta_ms: u64) {
        self.now_ms += delta_ms;
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new(default_epoch())
    }
}

/// Converts elapsed wall time into virtual time at a fixed acceleration.
#[derive(Debug, Clone, Copy)]
pub struct WallPacer {
    started: Instant,
    acceleration: f64,
}

impl WallPacer {
    pub fn new(acceleration: f64) -> Self {
        assert!(acceleration > 0.0, "acceleration must be positive");
        Self {
            started: Instant::now(),
            acceleration,
        }
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn virtual_now_ms(&self) -> u64 {
        (self.started.elapsed().as_secs_f64() * 1000.0 * self.acceleration) as u64
    }

    /// Wall duration that corresponds to `virtual_ms`.
    pub fn wall_for(&self, virtual_ms: u64) -> Duration {
        Duration::from_secs_f64(virtual_ms as f64 / 1000.0 / self.acceleration)
    }

    /// Sleeps until the virtual clock reaches `virtual_ms`.
    pub fn sleep_until(&self, virtual_ms: u64) {
        let target = self.wall_for(virtual_ms);
        let elapsed = self.started.elapsed();
        if target > elapsed {
            std::thread::sleep(target - elapsed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonic() {
        let mut c = VirtualClock::default();
        c.advance_to(500);
        c.advance_to(100);
        assert_eq!(c.now_ms(), 500);
        c.advance_by(250);
        assert_eq!(c.now_ms(), 750);
    }

    #[test]
    fn calendar_offsets() {
        let c = VirtualClock::default();
        let nine = NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(9, 0, 0)
            .unwrap();
        assert_eq!(c.offset_of(nine), Some(30 * 60 * 1000));
        assert_eq!(c.offset_of(nine - chrono::Duration::hours(1)), None);
        assert_eq!(c.datetime_at(30 * 60 * 1000), nine);
    }

    #[test]
    fn pacer_scales() {
        let p = WallPacer::new(60.0);
        assert_eq!(p.wall_for(60_000), Duration::from_secs(1));
    }
}
