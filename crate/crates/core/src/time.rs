//! Virtual and wall-clock time.

use std::fmt;
use std::ops::{Add, Sub};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulation timestamp with nanosecond resolution.
///
/// Serialized as floating-point seconds on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !(secs > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.as_secs_f64())
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        if secs.is_nan() || secs < 0.0 {
            return Err(serde::de::Error::custom("timestamp must be a non-negative number of seconds"));
        }
        Ok(SimTime::from_secs_f64(secs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClockMode {
    #[default]
    Virtual,
    Realtime,
}

/// Monotone clock. In `Virtual` mode time only moves through explicit
/// advances; in `Realtime` mode it follows the wall clock since creation,
/// optionally sped up.
#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    now: SimTime,
    origin: Instant,
    speed: f64,
}

impl Clock {
    pub fn virtual_clock() -> Self {
        Clock {
            mode: ClockMode::Virtual,
            now: SimTime::ZERO,
            origin: Instant::now(),
            speed: 1.0,
        }
    }

    /// A wall clock running `speed` times faster than real time.
    pub fn realtime(speed: f64) -> Self {
        Clock {
            mode: ClockMode::Realtime,
            now: SimTime::ZERO,
            origin: Instant::now(),
            speed: if speed > 0.0 { speed } else { 1.0 },
        }
    }

    pub fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Virtual => Self::virtual_clock(),
            ClockMode::Realtime => Self::realtime(1.0),
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    /// Current time. For a realtime clock this samples the wall clock and
    /// never goes backwards.
    pub fn now(&mut self) -> SimTime {
        if self.mode == ClockMode::Realtime {
            let elapsed = self.origin.elapsed().as_secs_f64() * self.speed;
            let wall = SimTime::from_secs_f64(elapsed);
            if wall > self.now {
                self.now = wall;
            }
        }
        self.now
    }

    /// Last observed time without sampling the wall clock.
    pub fn peek(&self) -> SimTime {
        self.now
    }

    pub(crate) fn set_virtual(&mut self, t: SimTime) {
        debug_assert_eq!(self.mode, ClockMode::Virtual);
        if t > self.now {
            self.now = t;
        }
    }
}
