use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::SyncSender;
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::error::{Error, Result};

/// Handles of running rollout workers sharing one stop flag.
pub struct WorkerPool {
    stop: Arc<AtomicBool>,
    handles: Vec<Option<JoinHandle<()>>>,
}

impl WorkerPool {
    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Joins worker `id`; a panicked worker is a runtime error.
    pub fn join_one(&mut self, id: usize) -> Result<()> {
        match self.handles.get_mut(id).and_then(Option::take) {
            Some(h) => h.join().map_err(|_| Error::Runtime(format!("rollout worker {id} panicked"))),
            None => Ok(()),
        }
    }

    /// Signals stop and joins every worker.
    pub fn shutdown(&mut self) -> Result<()> {
        self.stop();
        let mut first = Ok(());
        for id in 0..self.handles.len() {
            if let Err(e) = self.join_one(id) {
                first = first.and(Err(e));
            }
        }
        first
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Starts `count` threads. Worker `w` gets the sampler built by
/// `make_sampler(w, seed + w)` and pushes every item it yields into `sink`
/// until the sampler returns `None`, the stop flag is raised or the receiver
/// is gone. Samplers should poll the flag between environment steps.
pub fn spawn_rollout_workers<T, S, F>(count: usize, seed: u64, mut make_sampler: F, sink: SyncSender<T>) -> Result<WorkerPool>
where
    T: Send + 'static,
    S: FnMut(&AtomicBool) -> Option<T> + Send + 'static,
    F: FnMut(usize, u64) -> S,
{
    if count == 0 {
        return Err(Error::Config("rollout_threads must be at least 1".into()));
    }
    let stop = Arc::new(AtomicBool::new(false));
    let mut pool = WorkerPool {
        stop: Arc::clone(&stop),
        handles: Vec::with_capacity(count),
    };
    for w in 0..count {
        let mut sampler = make_sampler(w, seed.wrapping_add(w as u64));
        let (stop, sink) = (Arc::clone(&stop), sink.clone());
        let h = std::thread::Builder::new()
            .name(format!("rollout-{w}"))
            .spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match sampler(&stop) {
                        Some(item) => {
                            if sink.send(item).is_err() {
                                break;
                            }
                        }
                        None => break,
                    }
                }
            })
            .map_err(|e| Error::Runtime(format!("failed to spawn rollout worker {w}: {e}")))?;
        pool.handles.push(Some(h));
    }
    Ok(pool)
}
