//! Bounded fan-out used by every per-item stage of a run (deep-research
//! queries, suggestion generation, mention resolution, anchor checks).
//!
//! With the `parallel` feature the work runs on a rayon pool whose width is
//! the configured cap. Without it, or with `Parallelism::Sequential`, items
//! are processed in order on the calling thread. Results always come back in
//! input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    Bounded(usize),
}

impl Parallelism {
    pub fn from_width(width: usize) -> Self {
        if width <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Bounded(width)
        }
    }

    pub fn width(self) -> usize {
        match self {
            Parallelism::Sequential => 1,
            Parallelism::Bounded(n) => n.max(1),
        }
    }
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Bounded(4)
    }
}

/// Map `f` over `items` with at most `par.width()` items in flight.
pub fn bounded_map<T, R, F>(par: Parallelism, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    if par.width() <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    imp::bounded_map(par.width(), items, f)
}

#[cfg(feature = "parallel")]
mod imp {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    use rayon::prelude::*;
    use rayon::ThreadPool;

    fn pool(width: usize) -> Arc<ThreadPool> {
        static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
        let mut pools = POOLS.get_or_init(Default::default).lock().unwrap();
        pools
            .entry(width)
            .or_insert_with(|| {
                Arc::new(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(width)
                        .thread_name(move |i| format!("fanout-{width}-{i}"))
                        .build()
                        .expect("failed to build fan-out pool"),
                )
            })
            .clone()
    }

    pub(super) fn bounded_map<T, R, F>(width: usize, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        pool(width).install(|| items.into_par_iter().map(f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(super) fn bounded_map<T, R, F>(_width: usize, items: Vec<T>, f: F) -> Vec<R>
    where
        F: Fn(T) -> R,
    {
        items.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[test]
    fn preserves_input_order() {
        let out = bounded_map(Parallelism::Bounded(4), (0..100).collect(), |i: i32| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn never_exceeds_width() {
        let in_flight = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        bounded_map(Parallelism::Bounded(3), (0..24).collect(), |_: i32| {
            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            in_flight.fetch_sub(1, Ordering::SeqCst);
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn width_of_sequential_is_one() {
        assert_eq!(Parallelism::from_width(0), Parallelism::Sequential);
        assert_eq!(Parallelism::from_width(1).width(), 1);
        assert_eq!(Parallelism::from_width(6).width(), 6);
    }
}
