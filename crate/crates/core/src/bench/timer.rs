//! Wall-clock measurement of fit and score phases behind a global gate, so a
//! measurement never overlaps other jobs' CPU work.

use std::cell::Cell;
use std::time::Instant;

use parking_lot::RwLock;

use crate::error::{MtadError, Result};

/// Timed phases hold the write side; concurrent untimed work holds the read
/// side and therefore parks while any measurement is in flight.
static GATE: RwLock<()> = RwLock::new(());

thread_local! {
    // Nonzero while this thread is inside time_phase or untimed.
    static GATE_DEPTH: Cell<u32> = const { Cell::new(0) };
}

struct DepthGuard;

impl DepthGuard {
    fn enter() -> DepthGuard {
        GATE_DEPTH.with(|d| d.set(d.get() + 1));
        DepthGuard
    }
}

impl Drop for DepthGuard {
    fn drop(&mut self) {
        GATE_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

/// Runs `f` alone (no sibling job executes concurrently) and returns its
/// value together with the elapsed wall-clock seconds. The measurement covers
/// exactly the call to `f`; do the loading and preprocessing outside.
///
/// Calling `time_phase` inside `time_phase` or [`untimed`] is refused rather
/// than deadlocking on the gate.
pub fn time_phase<T>(f: impl FnOnce() -> T) -> Result<(T, f64)> {
    if GATE_DEPTH.with(|d| d.get()) > 0 {
        return Err(MtadError::NestedTiming);
    }
    let _gate = GATE.write();
    let _depth = DepthGuard::enter();
    let start = Instant::now();
    let value = f();
    let seconds = start.elapsed().as_secs_f64();
    Ok((value, seconds))
}

/// Runs `f` on the shared side of the gate: it may proceed concurrently with
/// other untimed work but parks while any timed phase runs. Every benchmark
/// job wraps its untimed stretches in this so timings stay contention-free.
pub fn untimed<T>(f: impl FnOnce() -> T) -> T {
    let _gate = if GATE_DEPTH.with(|d| d.get()) == 0 {
        Some(GATE.read())
    } else {
        None
    };
    let _depth = DepthGuard::enter();
    f()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread::sleep;
    use std::time::Duration;

    #[test]
    fn sleep_duration_lands_in_sane_bounds() {
        let ((), secs) = time_phase(|| sleep(Duration::from_millis(50))).unwrap();
        assert!((0.045..=0.5).contains(&secs), "measured {secs}s");
    }

    #[test]
    fn nesting_is_refused() {
        let (inner, _) = time_phase(|| time_phase(|| 0)).unwrap();
        assert!(matches!(inner, Err(MtadError::NestedTiming)));

        let inner = untimed(|| time_phase(|| 0));
        assert!(matches!(inner, Err(MtadError::NestedTiming)));
    }

    #[test]
    fn untimed_sections_nest_freely() {
        let v = untimed(|| untimed(|| 7));
        assert_eq!(v, 7);
    }

    #[test]
    fn work_before_the_phase_does_not_count() {
        // Simulates expensive ingestion ahead of a cheap fit: only the
        // closure's own time is reported.
        let mut burn = 0.0f64;
        for i in 0..4_000_000 {
            burn += (i as f64).sqrt();
        }
        assert!(burn > 0.0);
        let (_, secs) = time_phase(|| burn.to_bits()).unwrap();
        assert!(secs < 0.040, "cheap phase reported {secs}s");
    }
}
