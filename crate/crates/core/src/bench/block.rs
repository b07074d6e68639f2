use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::task::Token;

/// A block of benchmark data shared between tasks.
///
/// Tasks only touch a block as their clauses declare, so the lock is never
/// contended; a failed `try_*` means the runtime broke a dependence.
#[derive(Debug, Clone)]
pub struct Block(Arc<RwLock<Vec<f64>>>);

impl Block {
    pub fn new(data: Vec<f64>) -> Self {
        Block(Arc::new(RwLock::new(data)))
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn token(&self) -> Token {
        Token::of(&*self.0)
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.0
            .try_read()
            .expect("dependence violation: block read while being written")
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Vec<f64>> {
        self.0
            .try_write()
            .expect("dependence violation: block written while in use")
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.0.read().clone()
    }
}

/// Bitwise equality of two result vectors.
pub fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
