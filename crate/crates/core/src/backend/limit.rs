use std::sync::{Arc, Condvar, Mutex};

/// Counting semaphore bounding in-flight requests across every backend that
/// shares it.
#[derive(Debug, Clone)]
pub struct InFlightLimit {
    inner: Arc<(Mutex<usize>, Condvar)>,
    max: usize,
}

pub struct InFlightGuard {
    inner: Arc<(Mutex<usize>, Condvar)>,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit { inner: Arc::new((Mutex::new(0), Condvar::new())), max: max.max(1) }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> InFlightGuard {
        let (lock, cvar) = &*self.inner;
        let mut used = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.max {
            used = cvar.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        InFlightGuard { inner: Arc::clone(&self.inner) }
    }

    pub fn in_flight(&self) -> usize {
        *self.inner.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        let (lock, cvar) = &*self.inner;
        let mut used = lock.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        cvar.notify_one();
    }
}
