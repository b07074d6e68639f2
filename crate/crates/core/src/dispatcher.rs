//! Registry of runtime callbacks that idle workers run on their own thread.

use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

pub type Callback<C> = Arc<dyn Fn(&C, usize) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("a callback named {0:?} is already registered")]
    DuplicateName(String),
}

pub struct CallbackRegistration<C: ?Sized> {
    pub name: String,
    pub entry: Callback<C>,
    pub enabled: bool,
}

impl<C: ?Sized> Clone for CallbackRegistration<C> {
    fn clone(&self) -> Self {
        CallbackRegistration {
            name: self.name.clone(),
            entry: self.entry.clone(),
            enabled: self.enabled,
        }
    }
}

/// Callbacks run in registration order. Readers take a snapshot, so a
/// registration racing with `notify_idle` is either fully visible or not at
/// all, and a callback may itself register new callbacks.
pub struct Dispatcher<C: ?Sized> {
    snapshot: RwLock<Arc<Vec<CallbackRegistration<C>>>>,
    writer: Mutex<()>,
}

impl<C: ?Sized> Default for Dispatcher<C> {
    fn default() -> Self {
        Dispatcher {
            snapshot: RwLock::new(Arc::new(Vec::new())),
            writer: Mutex::new(()),
        }
    }
}

impl<C: ?Sized> Dispatcher<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_callback<F>(&self, name: &str, entry: F) -> Result<(), DispatchError>
    where
        F: Fn(&C, usize) + Send + Sync + 'static,
    {
        let _guard = self.writer.lock();
        let current = self.snapshot.read().clone();
        if current.iter().any(|r| r.name == name) {
            return Err(DispatchError::DuplicateName(name.to_owned()));
        }
        let mut next = Vec::with_capacity(current.len() + 1);
        next.extend(current.iter().cloned());
        next.push(CallbackRegistration {
            name: name.to_owned(),
            entry: Arc::new(entry),
            enabled: true,
        });
        *self.snapshot.write() = Arc::new(next);
        Ok(())
    }

    /// Enables or disables a registered callback; false if `name` is unknown.
    pub fn set_enabled(&self, name: &str, enabled: bool) -> bool {
        let _guard = self.writer.lock();
        let mut next: Vec<_> = self.snapshot.read().iter().cloned().collect();
        let Some(reg) = next.iter_mut().find(|r| r.name == name) else {
            return false;
        };
        reg.enabled = enabled;
        *self.snapshot.write() = Arc::new(next);
        true
    }

    pub fn names(&self) -> Vec<String> {
        self.snapshot.read().iter().map(|r| r.name.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot.read().is_empty()
    }

    /// Called by an idle worker: runs every enabled callback once, in order,
    /// on the calling thread.
    pub fn notify_idle(&self, ctx: &C, worker: usize) {
        let callbacks = self.snapshot.read().clone();
        for reg in callbacks.iter().filter(|r| r.enabled) {
            (reg.entry)(ctx, worker);
        }
    }
}
