//! Periodic background tasks.
//!
//! Each iteration runs in its own task, so an error or a panic is counted
//! and logged and the next tick still fires.

use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

#[derive(Debug, Default)]
pub struct LoopStats {
    invocations: AtomicU64,
    failures: AtomicU64,
    last_error: Mutex<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopSnapshot {
    pub name: String,
    pub enabled: bool,
    pub interval_secs: f64,
    pub invocations: u64,
    pub failures: u64,
    pub last_error: Option<String>,
}

impl LoopStats {
    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::SeqCst)
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().expect("loop stats lock").clone()
    }

    fn fail(&self, message: String) {
        self.failures.fetch_add(1, Ordering::SeqCst);
        *self.last_error.lock().expect("loop stats lock") = Some(message);
    }
}

/// A scheduled loop. Dropping the handle does not stop it; call [`stop`](Self::stop).
#[derive(Debug)]
pub struct LoopHandle {
    pub name: &'static str,
    pub interval: Duration,
    pub stats: Arc<LoopStats>,
    task: Option<JoinHandle<()>>,
}

impl LoopHandle {
    /// A loop that never runs.
    pub fn disabled(name: &'static str, interval: Duration) -> Self {
        Self { name, interval, stats: Arc::default(), task: None }
    }

    pub fn is_enabled(&self) -> bool {
        self.task.is_some()
    }

    pub fn stop(&self) {
        if let Some(t) = &self.task {
            t.abort();
        }
    }

    pub fn snapshot(&self) -> LoopSnapshot {
        LoopSnapshot {
            name: self.name.to_owned(),
            enabled: self.is_enabled(),
            interval_secs: self.interval.as_secs_f64(),
            invocations: self.stats.invocations(),
            failures: self.stats.failures(),
            last_error: self.stats.last_error(),
        }
    }
}

/// Runs `task` every `interval`, first after one interval. Iterations do
/// not overlap; a slow iteration delays the next tick instead of stacking.
pub fn spawn_periodic<F, Fut>(name: &'static str, interval: Duration, task: F) -> LoopHandle
where
    F: Fn() -> Fut + Send + Sync + 'static,
    Fut: Future<Output = anyhow::Result<()>> + Send + 'static,
{
    let stats = Arc::new(LoopStats::default());
    let s = Arc::clone(&stats);
    let handle = tokio::spawn(async move {
        let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + interval, interval);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            s.invocations.fetch_add(1, Ordering::SeqCst);
            match tokio::spawn(task()).await {
                Ok(Ok(())) => tracing::debug!(task = name, "loop iteration done"),
                Ok(Err(e)) => {
                    tracing::error!(task = name, error = %e, "loop iteration failed");
                    s.fail(e.to_string());
                }
                Err(join) => {
                    let message = if join.is_panic() { "iteration panicked".to_owned() } else { join.to_string() };
                    tracing::error!(task = name, error = %message, "loop iteration aborted");
                    s.fail(message);
                }
            }
        }
    });
    LoopHandle { name, interval, stats, task: Some(handle) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn first_tick_waits_one_interval() {
        let h = spawn_periodic("t", Duration::from_secs(10), || async { Ok(()) });
        tokio::time::sleep(Duration::from_secs(9)).await;
        assert_eq!(h.stats.invocations(), 0);
        tokio::time::sleep(Duration::from_secs(2)).await;
        assert_eq!(h.stats.invocations(), 1);
        tokio::time::sleep(Duration::from_secs(20)).await;
        assert_eq!(h.stats.invocations(), 3);
        h.stop();
    }

    #[tokio::test(start_paused = true)]
    async fn errors_are_counted_and_do_not_stop_the_loop() {
        let h = spawn_periodic("t", Duration::from_secs(1), || async { anyhow::bail!("boom") });
        tokio::time::sleep(Duration::from_millis(3500)).await;
        assert_eq!(h.stats.invocations(), 3);
        assert_eq!(h.stats.failures(), 3);
        assert_eq!(h.stats.last_error().as_deref(), Some("boom"));
    }

    #[test]
    fn disabled_loop_reports_nothing() {
        let h = LoopHandle::disabled("off", Duration::from_secs(1));
        let s = h.snapshot();
        assert!(!s.enabled);
        assert_eq!(s.invocations, 0);
    }
}
