use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Counts true simulator calls against a hard cap. Updates are atomic, so a
/// ledger can be shared by concurrent dispatchers.
#[derive(Debug)]
pub struct BudgetLedger {
    used: AtomicUsize,
    cap: usize,
}

impl BudgetLedger {
    pub fn new(cap: usize) -> Self {
        BudgetLedger {
            used: AtomicUsize::new(0),
            cap,
        }
    }

    pub fn with_used(cap: usize, used: usize) -> Result<Self> {
        if used > cap {
            return Err(Error::BudgetExhausted { used, cap });
        }
        Ok(BudgetLedger {
            used: AtomicUsize::new(used),
            cap,
        })
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn remaining(&self) -> usize {
        self.cap - self.used()
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() == 0
    }

    /// Reserves `n` simulations, all or nothing.
    pub fn try_spend(&self, n: usize) -> Result<()> {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                (used + n <= self.cap).then_some(used + n)
            })
            .map(|_| ())
            .map_err(|used| Error::BudgetExhausted {
                used,
                cap: self.cap,
            })
    }
}

impl Clone for BudgetLedger {
    fn clone(&self) -> Self {
        BudgetLedger {
            used: AtomicUsize::new(self.used()),
            cap: self.cap,
        }
    }
}
