use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;

use crate::error::ProviderError;

/// How the retry loop waits. Swapped for a recorder in tests.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested waits instead of sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    waits: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn waits(&self) -> Vec<Duration> {
        self.waits.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.waits.lock().unwrap().push(d);
    }
}

/// Exponential-ish backoff: waits of 1s, 4s, 9s (attempt squared) with
/// +/- `jitter` relative noise, up to `max_attempts` calls in total.
#[derive(Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base: Duration,
    pub jitter: f64,
    pub sleeper: Arc<dyn Sleeper>,
}

impl fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_attempts", &self.max_attempts)
            .field("base", &self.base)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base: Duration::from_secs(1),
            jitter: 0.1,
            sleeper: Arc::new(ThreadSleeper),
        }
    }
}

impl RetryPolicy {
    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Nominal wait after the `attempt`-th failure (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base * attempt.pow(2)
    }

    fn jittered(&self, attempt: u32) -> Duration {
        let nominal = self.delay(attempt).as_secs_f64();
        let noise = if self.jitter > 0.0 {
            rand::rng().random_range(-self.jitter..=self.jitter)
        } else {
            0.0
        };
        Duration::from_secs_f64((nominal * (1.0 + noise)).max(0.0))
    }

    /// Run `op` until it succeeds, fails permanently, or attempts run out.
    /// `op` receives the 1-based attempt number.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < max => {
                    tracing::debug!(attempt, error = %e, "retrying provider call");
                    self.sleeper.sleep(self.jittered(attempt));
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(ProviderError::Exhausted {
                        attempts: attempt,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore capping concurrent requests to one provider.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().unwrap() += 1;
        self.sem.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> (RetryPolicy, Arc<RecordingSleeper>) {
        let sleeper = Arc::new(RecordingSleeper::default());
        let policy = RetryPolicy {
            jitter: 0.0,
            ..RetryPolicy::default()
        }
        .with_sleeper(sleeper.clone());
        (policy, sleeper)
    }

    #[test]
    fn two_transient_failures_then_success() {
        let (policy, sleeper) = policy();
        let mut attempts = 0;
        let out = policy.run(|n| {
            attempts = n;
            if n < 3 {
                Err(ProviderError::Transient("503".into()))
            } else {
                Ok("ok")
            }
        });
        assert_eq!(out, Ok("ok"));
        assert_eq!(attempts, 3);
        assert_eq!(sleeper.waits(), vec![Duration::from_secs(1), Duration::from_secs(4)]);
    }

    #[test]
    fn exhausts_after_three() {
        let (policy, _) = policy();
        let mut calls = 0;
        let out: Result<(), _> = policy.run(|_| {
            calls += 1;
            Err(ProviderError::Transient("timeout".into()))
        });
        assert!(matches!(out, Err(ProviderError::Exhausted { attempts: 3, .. })));
        assert_eq!(calls, 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (policy, sleeper) = policy();
        let mut calls = 0;
        let out: Result<(), _> = policy.run(|_| {
            calls += 1;
            Err(ProviderError::Auth("bad key".into()))
        });
        assert!(matches!(out, Err(ProviderError::Auth(_))));
        assert_eq!(calls, 1);
        assert!(sleeper.waits().is_empty());
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(
            (1..=3).map(|a| p.delay(a).as_secs()).collect::<Vec<_>>(),
            vec![1, 4, 9]
        );
    }

    #[test]
    fn jitter_stays_in_band() {
        let p = RetryPolicy::default();
        for _ in 0..100 {
            let d = p.jittered(2).as_secs_f64();
            assert!((3.6..=4.4).contains(&d), "{d}");
        }
    }

    #[test]
    fn semaphore_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let sem = Arc::new(Semaphore::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (sem, live, peak) = (sem.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = sem.acquire();
                    let n = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(n, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(3));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
