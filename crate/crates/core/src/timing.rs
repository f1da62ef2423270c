//! Per-thread CPU clock used to account optimizer time.
//!
//! Thread CPU time is used rather than wall time so that seeds running
//! concurrently (or a busy machine) do not inflate the totals.

use std::time::Duration;

pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

/// Accumulating stopwatch over [`thread_cpu_time`].
#[derive(Debug, Default, Clone, Copy)]
pub struct CpuStopwatch {
    total: Duration,
}

impl CpuStopwatch {
    pub fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = thread_cpu_time();
        let out = f();
        self.total += thread_cpu_time().saturating_sub(start);
        out
    }

    pub fn total(&self) -> Duration {
        self.total
    }

    pub fn take(&mut self) -> Duration {
        std::mem::take(&mut self.total)
    }
}
