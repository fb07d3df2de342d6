//! Per-iteration solver records.

use serde::Serialize;

/// Penalty weight and smoothing accuracy in force during an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyState {
    pub rho: f64,
    pub u: f64,
}

/// One iteration of an iterative solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Objective value in the solver's own sign convention.
    pub objective: f64,
    pub grad_norm: f64,
    /// Worst constraint violation, `max_k -C_k`, when constraints exist.
    pub violation: Option<f64>,
    pub penalty: Option<PenaltyState>,
    /// Accepted step length (line-search step or embedding distance).
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }
}
