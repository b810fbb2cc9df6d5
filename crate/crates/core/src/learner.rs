//! Learning by enumeration.
//!
//! The learner keeps the least index whose hypothesis reproduces every sample
//! seen so far. Refuted indices stay refuted as samples accumulate, so each
//! rescan starts just above the previous guess and the guess never decreases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vm::{self, EnumCursor, ExecBudget};

/// Default upper bound on the indices a scan may reach. Covers every program
/// of length at most six.
pub const DEFAULT_SCAN_CAP: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub x: u8,
    pub y: u8,
    pub n: u64,
    pub b: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnerError {
    #[error("sample for round {got} arrived after round {last}")]
    OutOfOrder { last: u64, got: u64 },
}

/// An enumerated class of hypotheses `h_i(x, y, n)`.
pub trait HypothesisSpace {
    /// Output of hypothesis `index`, or `None` if it does not produce one
    /// (for programs: the clock ran out).
    fn eval(&self, index: u64, x: u8, y: u8, n: u64) -> Option<u8>;

    /// Least index in `start..=cap` consistent with all samples.
    fn first_consistent(&self, start: u64, cap: u64, samples: &[Sample]) -> Option<u64> {
        (start..=cap).find(|&i| {
            samples
                .iter()
                .all(|s| self.eval(i, s.x, s.y, s.n) == Some(s.b))
        })
    }
}

/// The canonical program enumeration under a fuel budget.
#[derive(Debug, Clone, Copy)]
pub struct ClockedPrograms {
    pub budget: ExecBudget,
}

impl HypothesisSpace for ClockedPrograms {
    fn eval(&self, index: u64, x: u8, y: u8, n: u64) -> Option<u8> {
        vm::run(&vm::enumerate(index), x, y, n, &self.budget).bit()
    }

    /// A run that reads only the first `j` instructions behaves identically
    /// for every program of the same length sharing those instructions, so a
    /// refutation clears that whole contiguous block of indices.
    fn first_consistent(&self, start: u64, cap: u64, samples: &[Sample]) -> Option<u64> {
        let mut cursor = EnumCursor::at(start);
        // Neighbouring candidates tend to fail on the same sample, so the last
        // refuting sample is tried first.
        let mut order: Vec<usize> = (0..samples.len()).collect();
        'scan: while cursor.index() <= cap {
            for k in 0..order.len() {
                let s = &samples[order[k]];
                let run = vm::execute(cursor.code(), s.x, s.y, s.n, self.budget.fuel(s.n));
                if run.result.bit() != Some(s.b) {
                    order[..=k].rotate_right(1);
                    if !cursor.skip_prefix(run.touched) {
                        return None;
                    }
                    continue 'scan;
                }
            }
            return Some(cursor.index());
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerStatus {
    Active,
    /// No index up to the scan cap fits the samples.
    ClassExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerState {
    samples: Vec<Sample>,
    guess_index: u64,
    mind_changes: u64,
    scan_cap: u64,
    status: LearnerStatus,
}

impl Default for LearnerState {
    fn default() -> Self {
        LearnerState::new(DEFAULT_SCAN_CAP)
    }
}

impl LearnerState {
    pub fn new(scan_cap: u64) -> Self {
        LearnerState {
            samples: Vec::new(),
            guess_index: 0,
            mind_changes: 0,
            scan_cap,
            status: LearnerStatus::Active,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn guess_index(&self) -> u64 {
        self.guess_index
    }

    pub fn mind_changes(&self) -> u64 {
        self.mind_changes
    }

    pub fn scan_cap(&self) -> u64 {
        self.scan_cap
    }

    pub fn status(&self) -> LearnerStatus {
        self.status
    }

    pub fn is_exhausted(&self) -> bool {
        self.status == LearnerStatus::ClassExhausted
    }

    /// Feed one sample, rescanning the enumeration if the guess is refuted.
    pub fn update_in<H: HypothesisSpace + ?Sized>(
        mut self,
        sample: Sample,
        space: &H,
    ) -> Result<Self, LearnerError> {
        if let Some(last) = self.samples.last() {
            if sample.n <= last.n {
                return Err(LearnerError::OutOfOrder {
                    last: last.n,
                    got: sample.n,
                });
            }
        }
        self.samples.push(sample);
        if self.is_exhausted() {
            return Ok(self);
        }
        if space.eval(self.guess_index, sample.x, sample.y, sample.n) == Some(sample.b) {
            return Ok(self);
        }
        let next = self
            .guess_index
            .checked_add(1)
            .filter(|&start| start <= self.scan_cap)
            .and_then(|start| space.first_consistent(start, self.scan_cap, &self.samples));
        match next {
            Some(index) => {
                self.guess_index = index;
                self.mind_changes += 1;
            }
            None => self.status = LearnerStatus::ClassExhausted,
        }
        Ok(self)
    }

    /// [`update_in`](Self::update_in) over the clocked program class.
    pub fn update(self, sample: Sample, budget: &ExecBudget) -> Result<Self, LearnerError> {
        self.update_in(sample, &ClockedPrograms { budget: *budget })
    }

    pub fn predict_in<H: HypothesisSpace + ?Sized>(
        &self,
        x: u8,
        y: u8,
        n: u64,
        space: &H,
    ) -> Option<u8> {
        if self.is_exhausted() {
            return None;
        }
        space.eval(self.guess_index, x, y, n)
    }

    /// Output of the current guess, or `None` when it is unknown.
    pub fn predict(&self, x: u8, y: u8, n: u64, budget: &ExecBudget) -> Option<u8> {
        self.predict_in(x, y, n, &ClockedPrograms { budget: *budget })
    }
}

/// One row of an exported learner trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: u64,
    pub x: u8,
    pub y: u8,
    pub b: u8,
    pub guess_index: u64,
    pub mind_changes: u64,
    pub status: LearnerStatus,
}

/// Run the learner over a sample stream, recording the state after each update.
pub fn learn_trace(
    samples: &[Sample],
    budget: &ExecBudget,
    scan_cap: u64,
) -> Result<(LearnerState, Vec<TraceRow>), LearnerError> {
    let space = ClockedPrograms { budget: *budget };
    let mut state = LearnerState::new(scan_cap);
    let mut rows = Vec::with_capacity(samples.len());
    for &s in samples {
        state = state.update_in(s, &space)?;
        rows.push(TraceRow {
            round: s.n,
            x: s.x,
            y: s.y,
            b: s.b,
            guess_index: state.guess_index,
            mind_changes: state.mind_changes,
            status: state.status,
        });
    }
    Ok((state, rows))
}
