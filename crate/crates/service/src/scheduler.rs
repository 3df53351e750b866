//! Background heartbeat driving scheduled update runs.

use std::sync::Arc;
use std::time::Duration;

use litscout_core::tracking::UpdateRun;
use litscout_core::Engine;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

/// One heartbeat at the engine's current time: check due projects, then
/// execute the triggered runs on the worker pool.
pub fn tick(engine: &Engine) -> Vec<litscout_core::Result<UpdateRun>> {
    let now = engine.clock().now();
    let triggered = engine.heartbeat_tick(now);
    if triggered.is_empty() {
        return Vec::new();
    }
    tracing::info!(count = triggered.len(), "scheduled runs triggered");
    engine.run_triggered(triggered)
}

/// Tick every `every` until the task is aborted. A slow tick delays the
/// next one instead of stacking up.
pub fn spawn(engine: Arc<Engine>, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(every);
        interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            let engine = engine.clone();
            match tokio::task::spawn_blocking(move || tick(&engine)).await {
                Ok(results) => {
                    for r in results {
                        match r {
                            Ok(run) => tracing::info!(project = %run.project_id, run = %run.run_id, status = ?run.status, "scheduled run finished"),
                            Err(e) => tracing::warn!(error = %e, "scheduled run not started"),
                        }
                    }
                }
                Err(e) => tracing::error!(error = %e, "heartbeat task panicked"),
            }
        }
    })
}
