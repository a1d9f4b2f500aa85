use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch, pinned to a monotonic clock at start-up
/// so event timestamps never run backwards when the wall clock is adjusted.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    wall0: u64,
    t0: Instant,
}

impl Clock {
    pub fn start() -> Self {
        let wall0 = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self { wall0, t0: Instant::now() }
    }

    pub fn now(&self) -> u64 {
        self.wall0 + self.t0.elapsed().as_millis() as u64
    }
}
