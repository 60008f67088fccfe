//! Time sources. Replay runs use the logical clock so snapshots are reproducible.

use std::cell::Cell;
use std::time::{SystemTime, UNIX_EPOCH};

use sckg_core::model::Timestamp;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Logical,
    System,
}

#[derive(Debug)]
pub enum Clock {
    /// Each reading returns the current counter and advances it by one.
    Logical(Cell<i64>),
    System,
}

impl Clock {
    pub fn new(kind: ClockKind, start: i64) -> Self {
        match kind {
            ClockKind::Logical => Clock::Logical(Cell::new(start)),
            ClockKind::System => Clock::System,
        }
    }

    pub fn now(&self) -> Timestamp {
        match self {
            Clock::Logical(c) => {
                let t = c.get();
                c.set(t + 1);
                Timestamp(t)
            }
            Clock::System => Timestamp(
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as i64)
                    .unwrap_or(0),
            ),
        }
    }

    /// Current reading without advancing. Used when writing checkpoints.
    pub fn peek(&self) -> Timestamp {
        match self {
            Clock::Logical(c) => Timestamp(c.get()),
            Clock::System => self.now(),
        }
    }

    /// Counter to persist so a resumed run continues the same sequence.
    pub fn logical_state(&self) -> Option<i64> {
        match self {
            Clock::Logical(c) => Some(c.get()),
            Clock::System => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_ticks() {
        let c = Clock::new(ClockKind::Logical, 10);
        assert_eq!(c.now(), Timestamp(10));
        assert_eq!(c.peek(), Timestamp(11));
        assert_eq!(c.now(), Timestamp(11));
        assert_eq!(c.logical_state(), Some(12));
    }
}
