use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};

/// Time source for sampling. `wait_until` is passive (used by the sampler
/// thread); `sleep_until` may move simulated time forward itself.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    /// Blocks until `now() ≥ t`, returning `true`; returns `false` early if
    /// `cancel` is set while `now() < t`.
    fn wait_until(&self, t: DateTime<Utc>, cancel: &AtomicBool) -> bool;

    /// Blocks (or, for simulated time, jumps) until `now() ≥ t`.
    fn sleep_until(&self, t: DateTime<Utc>);

    /// Wakes waiters so they re-check cancellation.
    fn wake(&self) {}
}

/// Wall-clock time, truncated to milliseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

fn ms(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(t.timestamp_millis()).single().unwrap_or(t)
}

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        ms(Utc::now())
    }

    fn wait_until(&self, t: DateTime<Utc>, cancel: &AtomicBool) -> bool {
        loop {
            let now = self.now();
            if now >= t {
                return true;
            }
            if cancel.load(Ordering::Acquire) {
                return false;
            }
            let left = (t - now).to_std().unwrap_or_default();
            std::thread::sleep(left.min(Duration::from_millis(20)));
        }
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        if let Ok(d) = (t - self.now()).to_std() {
            std::thread::sleep(d);
        }
    }
}

/// Simulated time that only moves when told to. Lets a 12-minute session run
/// in milliseconds while every sample still carries its nominal timestamp.
#[derive(Debug)]
pub struct SimClock {
    now: Mutex<DateTime<Utc>>,
    moved: Condvar,
}

impl SimClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        SimClock {
            now: Mutex::new(ms(start)),
            moved: Condvar::new(),
        }
    }

    /// A fixed, reproducible epoch (2024-01-01T00:00:00Z).
    pub fn at_epoch() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
    }

    pub fn advance(&self, d: chrono::Duration) {
        let mut now = self.now.lock().unwrap();
        *now += d;
        self.moved.notify_all();
    }

    pub fn advance_secs(&self, secs: f64) {
        self.advance(chrono::Duration::milliseconds((secs * 1000.0).round() as i64));
    }
}

impl Clock for SimClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn wait_until(&self, t: DateTime<Utc>, cancel: &AtomicBool) -> bool {
        let mut now = self.now.lock().unwrap();
        loop {
            if *now >= t {
                return true;
            }
            if cancel.load(Ordering::Acquire) {
                return false;
            }
            now = self.moved.wait(now).unwrap();
        }
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        if *now < t {
            *now = t;
            self.moved.notify_all();
        }
    }

    fn wake(&self) {
        let _guard = self.now.lock().unwrap();
        self.moved.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn sim_clock_releases_waiters() {
        let c = Arc::new(SimClock::at_epoch());
        let t0 = c.now();
        let target = t0 + chrono::Duration::seconds(5);
        let cancel = Arc::new(AtomicBool::new(false));
        let (c2, x) = (Arc::clone(&c), Arc::clone(&cancel));
        let h = std::thread::spawn(move || c2.wait_until(target, &x));
        c.advance_secs(2.0);
        c.advance_secs(3.0);
        assert!(h.join().unwrap());

        let far = c.now() + chrono::Duration::hours(1);
        let (c3, x) = (Arc::clone(&c), Arc::clone(&cancel));
        let h = std::thread::spawn(move || c3.wait_until(far, &x));
        cancel.store(true, Ordering::Release);
        c.wake();
        assert!(!h.join().unwrap());
    }

    #[test]
    fn sleep_until_jumps() {
        let c = SimClock::at_epoch();
        let t = c.now() + chrono::Duration::milliseconds(1500);
        c.sleep_until(t);
        assert_eq!(c.now(), t);
        c.sleep_until(t - chrono::Duration::seconds(1));
        assert_eq!(c.now(), t);
    }
}
