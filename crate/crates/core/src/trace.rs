//! Per-step observation hooks shared by all run drivers.

use crate::delay::{DelaySchedule, DelayedFeedback, QueryHistory};
use crate::domain::Vector;
use crate::error::{Error, Result};
use crate::oco::WeightSchedule;
use crate::oracle::ProblemSpec;
use crate::rng::RunStreams;

/// Everything a driver exposes after finishing step `t`.
#[derive(Debug)]
pub struct StepView<'a> {
    pub t: usize,
    pub alpha: f64,
    /// Learner decision used at this step (`w_t`, or `x_t` for the
    /// strongly convex methods).
    pub decision: &'a Vector,
    /// Point registered with the oracle at this step.
    pub query: &'a Vector,
    /// The algorithm's current output estimate.
    pub output: &'a Vector,
    pub feedback: &'a DelayedFeedback,
    /// Step multiplying the gradient in this step's update.
    pub effective_step: f64,
    pub history: &'a QueryHistory,
}

pub trait StepObserver {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()>;
}

/// Observer that ignores every step.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn observe(&mut self, _view: &StepView<'_>) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&StepView<'_>) -> Result<()>> StepObserver for F {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        self(view)
    }
}

/// Result of a run. When `error` is set the run stopped early and `output`
/// is the last output computed before the failure.
#[derive(Debug)]
pub struct RunOutcome {
    pub output: Vector,
    pub steps_completed: usize,
    pub delays: Vec<usize>,
    pub fresh_deliveries: usize,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }

    /// Converts an aborted run into its error.
    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Inputs shared by every run driver.
#[derive(Clone, Debug)]
pub struct RunSetup<'a> {
    pub problem: &'a ProblemSpec,
    pub schedule: DelaySchedule,
    pub weights: WeightSchedule,
    pub steps: usize,
    pub streams: RunStreams,
    /// Keep only the queries a bounded delay schedule can still request.
    pub bounded_history: bool,
}

impl<'a> RunSetup<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        schedule: DelaySchedule,
        weights: WeightSchedule,
        steps: usize,
        seed: u64,
    ) -> Self {
        Self {
            problem,
            schedule,
            weights,
            steps,
            streams: RunStreams::new(seed, 0),
            bounded_history: false,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        self.schedule.validate()
    }
}
