//! Continuous time-of-week arithmetic.
//!
//! Times are seconds since Monday 00:00, wrapping at one week. Distances are
//! measured on the circle so late Sunday and early Monday are neighbours.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const SECONDS_PER_WEEK: f64 = 604_800.0;
pub const HALF_WEEK: f64 = SECONDS_PER_WEEK / 2.0;

/// Width of one time-of-day interval used by the time embedding.
pub const INTERVAL_SECONDS: f64 = 900.0;
pub const INTERVALS_PER_DAY: usize = 96;
pub const DAYS_PER_WEEK: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeOfWeek(f64);

impl TimeOfWeek {
    pub fn new(seconds: f64) -> Result<Self> {
        if seconds.is_finite() && (0.0..SECONDS_PER_WEEK).contains(&seconds) {
            Ok(TimeOfWeek(seconds))
        } else {
            Err(Error::InvalidValue(format!(
                "time of week must lie in [0, {SECONDS_PER_WEEK}), got {seconds}"
            )))
        }
    }

    /// Reduces any finite number of seconds onto the week.
    pub fn wrapping(seconds: f64) -> Self {
        let mut s = seconds.rem_euclid(SECONDS_PER_WEEK);
        // rem_euclid can round up to the modulus for tiny negative inputs
        if s >= SECONDS_PER_WEEK {
            s = 0.0;
        }
        TimeOfWeek(s)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn advance(self, seconds: f64) -> Self {
        Self::wrapping(self.0 + seconds)
    }

    /// Day index, 0 = Monday.
    pub fn day(self) -> usize {
        ((self.0 / SECONDS_PER_DAY) as usize).min(DAYS_PER_WEEK - 1)
    }

    pub fn seconds_of_day(self) -> f64 {
        self.0 - self.day() as f64 * SECONDS_PER_DAY
    }

    /// Index of the 15-minute interval within the day, 0..96.
    pub fn interval(self) -> usize {
        ((self.seconds_of_day() / INTERVAL_SECONDS) as usize).min(INTERVALS_PER_DAY - 1)
    }
}

impl TryFrom<f64> for TimeOfWeek {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        TimeOfWeek::new(value)
    }
}

impl From<TimeOfWeek> for f64 {
    fn from(t: TimeOfWeek) -> f64 {
        t.0
    }
}

impl fmt::Display for TimeOfWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const DAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
        let sod = self.seconds_of_day();
        let h = (sod / 3600.0) as u32;
        let m = ((sod - h as f64 * 3600.0) / 60.0) as u32;
        let s = sod - h as f64 * 3600.0 - m as f64 * 60.0;
        write!(f, "{} {:02}:{:02}:{:05.2}", DAYS[self.day()], h, m, s)
    }
}

/// Circular distance in seconds between two times of week.
pub fn tow_distance(a: TimeOfWeek, b: TimeOfWeek) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(SECONDS_PER_WEEK - d)
}
