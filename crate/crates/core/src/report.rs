//! Solve reports and trace events shared by the primal-dual solvers and
//! the weighted bang-per-buck specialization.

use serde::{Deserialize, Serialize};

use crate::dual::DualState;
use crate::instance::Allocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Defect,
    SlopeUpdate,
    BidUpdate,
    AgentDone,
}

/// One trace line; serializes as
/// `{"t":step,"event":"defect","agent":i,"item":j,"slope":s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: u64,
    pub event: EventKind,
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bid: Option<f64>,
}

impl TraceEvent {
    /// Structural identity ignoring the numeric payload; bid updates and
    /// slope updates are the same move in two coordinate systems.
    pub fn same_step(&self, other: &TraceEvent) -> bool {
        let kind_eq = match (self.event, other.event) {
            (EventKind::SlopeUpdate, EventKind::BidUpdate)
            | (EventKind::BidUpdate, EventKind::SlopeUpdate) => true,
            (a, b) => a == b,
        };
        kind_eq && self.t == other.t && self.agent == other.agent && self.item == other.item
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// Every agent satisfies its loop condition.
    Converged,
    /// The iteration budget (a multiple of the analytic ceiling) was hit;
    /// this indicates a bug, not an acceptable outcome.
    IterationBudget,
    /// An agent became under-allocated while violating its bound, which
    /// the theory rules out; the report carries the trace for diagnosis.
    UnderAllocation { agent: usize },
}

/// Outcome of a solve, sufficient to re-derive every claim it makes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: crate::dual::DualMode,
    pub epsilon: f64,
    /// `Σ_i v_i(u_i)` of the final allocation.
    pub primal: f64,
    /// Objective of the verified scaled/slacked dual built from the final
    /// owner prices; an upper bound on the optimum when `dual_feasible`.
    pub dual_objective: f64,
    pub dual_feasible: bool,
    /// `dual/primal` (multiplicative) or `dual − primal` (additive).
    pub certificate: f64,
    /// Per-agent loop thresholds actually used (mu or alpha).
    pub targets: Vec<f64>,
    /// Whether each agent's threshold was clamped up to `1 + ε`.
    pub clamped: Vec<bool>,
    pub allocation: Allocation,
    pub final_utilities: Vec<f64>,
    pub dual: DualState,
    pub reassignments: u64,
    pub slope_updates: Vec<u64>,
    pub saturated: Vec<bool>,
    pub under_allocation_events: u64,
    pub termination: TerminationReason,
    /// Accepted guess when produced by the guessing wrapper.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted_guess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == TerminationReason::Converged
    }

    pub fn total_slope_updates(&self) -> u64 {
        self.slope_updates.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
