use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

/// Microseconds since the engine epoch.
pub type Timestamp = u64;

/// Strictly increasing clock: every call returns a value greater than the
/// previous one, even when two calls land in the same microsecond.
#[derive(Debug)]
pub struct Clock {
    epoch: Instant,
    last: AtomicU64,
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock {
    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
            last: AtomicU64::new(0),
        }
    }

    pub fn now(&self) -> Timestamp {
        let real = self.epoch.elapsed().as_micros() as u64;
        let mut prev = self.last.load(Ordering::Relaxed);
        loop {
            let next = real.max(prev + 1);
            match self
                .last
                .compare_exchange_weak(prev, next, Ordering::AcqRel, Ordering::Relaxed)
            {
                Ok(_) => return next,
                Err(actual) => prev = actual,
            }
        }
    }
}

pub fn micros_to_ms(us: u64) -> f64 {
    us as f64 / 1000.0
}
