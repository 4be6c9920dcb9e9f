//! Process-wide monotonic clock. All run timestamps are nanoseconds since
//! the first use of this clock in the process, so records from one session
//! are mutually comparable.

use std::time::Instant;

use once_cell::sync::Lazy;

static EPOCH: Lazy<Instant> = Lazy::new(Instant::now);

/// Nanoseconds elapsed on the monotonic clock since process epoch.
pub fn monotonic_ns() -> u64 {
    EPOCH.elapsed().as_nanos() as u64
}

/// Current wall-clock time as UTC milliseconds since the Unix epoch.
pub fn wall_utc_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}
