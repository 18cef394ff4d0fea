use std::sync::atomic::{AtomicU64, Ordering};

/// Audit counters for oracle traffic.
///
/// Every full residual vector, full preconditioner matrix and single-entry
/// evaluation is tallied here; normalized complexities compare these totals
/// against the cost of a per-sample Monte-Carlo sweep.
#[derive(Debug, Default)]
pub struct OracleLedger {
    residual_vector_calls: AtomicU64,
    residual_entry_calls: AtomicU64,
    precond_matrix_calls: AtomicU64,
    precond_entry_calls: AtomicU64,
}

/// A point-in-time copy of the ledger counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerSnapshot {
    pub residual_vector_calls: u64,
    pub residual_entry_calls: u64,
    pub precond_matrix_calls: u64,
    pub precond_entry_calls: u64,
}

impl OracleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count_residual_vector(&self) {
        self.residual_vector_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_residual_entry(&self) {
        self.residual_entry_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_precond_matrix(&self) {
        self.precond_matrix_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_precond_entry(&self) {
        self.precond_entry_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            residual_vector_calls: self.residual_vector_calls.load(Ordering::Relaxed),
            residual_entry_calls: self.residual_entry_calls.load(Ordering::Relaxed),
            precond_matrix_calls: self.precond_matrix_calls.load(Ordering::Relaxed),
            precond_entry_calls: self.precond_entry_calls.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.residual_vector_calls.store(0, Ordering::Relaxed);
        self.residual_entry_calls.store(0, Ordering::Relaxed);
        self.precond_matrix_calls.store(0, Ordering::Relaxed);
        self.precond_entry_calls.store(0, Ordering::Relaxed);
    }
}

impl LedgerSnapshot {
    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            residual_vector_calls: self.residual_vector_calls - earlier.residual_vector_calls,
            residual_entry_calls: self.residual_entry_calls - earlier.residual_entry_calls,
            precond_matrix_calls: self.precond_matrix_calls - earlier.precond_matrix_calls,
            precond_entry_calls: self.precond_entry_calls - earlier.precond_entry_calls,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_accumulate_independently() {
        let ledger = OracleLedger::new();
        for _ in 0..3 {
            ledger.count_residual_vector();
        }
        ledger.count_residual_entry();
        ledger.count_precond_matrix();
        ledger.count_precond_matrix();
        let snap = ledger.snapshot();
        assert_eq!(snap.residual_vector_calls, 3);
        assert_eq!(snap.residual_entry_calls, 1);
        assert_eq!(snap.precond_matrix_calls, 2);
        assert_eq!(snap.precond_entry_calls, 0);
    }

    #[test]
    fn since_subtracts_counterwise() {
        let ledger = OracleLedger::new();
        ledger.count_residual_vector();
        let before = ledger.snapshot();
        ledger.count_residual_vector();
        ledger.count_precond_entry();
        let delta = ledger.snapshot().since(&before);
        assert_eq!(delta.residual_vector_calls, 1);
        assert_eq!(delta.precond_entry_calls, 1);
        assert_eq!(delta.residual_entry_calls, 0);
    }
}
