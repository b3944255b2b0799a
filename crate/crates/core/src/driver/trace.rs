use std::fmt;
use std::io::{self, Write};

use crate::state::PrimalDualState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The initial point, before any step.
    Start,
    Basic,
    Accept,
    Reject,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::Basic => "basic",
            Self::Accept => "accept",
            Self::Reject => "reject",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Both sides of the two safeguard inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeguardValues {
    /// `V(z+)`
    pub merit: f64,
    /// `C V(z0) (1 + k_aa)^-(1 + delta)`
    pub merit_bound: f64,
    /// `||z+ - z_k||_Gamma`
    pub distance: f64,
    /// `D V(z_k)`
    pub distance_bound: f64,
}

impl SafeguardValues {
    pub fn satisfied(&self) -> bool {
        self.merit <= self.merit_bound && self.distance <= self.distance_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub k_aa: usize,
    pub event: EventKind,
    /// `F + g` at the iterate after the event; NaN when not evaluated.
    pub objective: f64,
    /// Merit of the iterate after the event; NaN when not evaluated.
    pub merit: f64,
    pub passes: f64,
    pub flops: f64,
    /// Cost charged for this event alone.
    pub event_flops: f64,
    pub event_passes: f64,
    pub safeguard: Option<SafeguardValues>,
}

/// States logged around one candidate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLog {
    pub k: usize,
    pub k_aa: usize,
    pub current: PrimalDualState,
    /// `None` when the accelerator failed to produce a point.
    pub candidate: Option<PrimalDualState>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Tolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub v0: f64,
    pub f_star: Option<f64>,
    pub stop: StopReason,
    pub final_state: PrimalDualState,
    pub candidates: Vec<CandidateLog>,
    /// `(k, state)` after every step, when requested.
    pub iterates: Vec<(usize, PrimalDualState)>,
}

impl RunTrace {
    pub fn initial_objective(&self) -> f64 {
        self.records[0].objective
    }

    /// `(obj - F*) / (obj_0 - F*)`, NaN without a reference value.
    pub fn suboptimality(&self, objective: f64) -> f64 {
        match self.f_star {
            Some(f) => (objective - f) / (self.initial_objective() - f),
            None => f64::NAN,
        }
    }

    pub fn count(&self, event: EventKind) -> usize {
        self.records.iter().filter(|r| r.event == event).count()
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has a start record")
    }

    /// First cumulative FLOP count at which the suboptimality is `<= target`.
    pub fn flops_to_reach(&self, target: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.objective.is_finite() && self.suboptimality(r.objective) <= target)
            .map(|r| r.flops)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,k_aa,event,objective,subopt,merit,passes,flops")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{:e},{:e}",
                r.k,
                r.k_aa,
                r.event,
                r.objective,
                self.suboptimality(r.objective),
                r.merit,
                r.passes,
                r.flops
            )?;
        }
        Ok(())
    }
}
