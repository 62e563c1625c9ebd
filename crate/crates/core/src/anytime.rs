//! Anytime online-to-batch conversion under delayed gradients.
//!
//! Gradients are queried at the running weighted average
//! `x_t = sum_{i<=t} alpha_i w_i / alpha_{1:t}` of the learner's iterates, and
//! the learner is fed the linear loss `alpha_t g_{t - tau_t}' x`. A learner
//! that accepts hints additionally receives `alpha_t` times the gradient
//! delivered at the previous step (zero at the first step).

use crate::delay::{DelayedOracle, QueryHistory};
use crate::domain::{DomainSpec, Vector};
use crate::error::{Error, Result};
use crate::oco::{OnlineLearner, OptimisticState, WeightSchedule};
use crate::oracle::NoiseSource;
use crate::trace::{RunOutcome, RunSetup, StepObserver, StepView};

/// Compensated running sum of `alpha_i w_i` and the resulting average.
#[derive(Clone, Debug)]
pub struct AnytimeState {
    weights: WeightSchedule,
    t: usize,
    sum: Vector,
    compensation: Vector,
    denominator: f64,
    x: Vector,
}

impl AnytimeState {
    pub fn new(dim: usize, weights: WeightSchedule) -> Self {
        Self {
            weights,
            t: 0,
            sum: Vector::zeros(dim),
            compensation: Vector::zeros(dim),
            denominator: 0.0,
            x: Vector::zeros(dim),
        }
    }

    /// Adds `w_{t+1}` and returns the updated average.
    pub fn push(&mut self, w: &Vector) -> &Vector {
        self.t += 1;
        let alpha = self.weights.alpha(self.t);
        for i in 0..w.len() {
            let term = alpha * w[i];
            let s = self.sum[i] + term;
            self.compensation[i] += if self.sum[i].abs() >= term.abs() {
                (self.sum[i] - s) + term
            } else {
                (term - s) + self.sum[i]
            };
            self.sum[i] = s;
        }
        self.denominator = self.weights.prefix(self.t);
        self.x = (&self.sum + &self.compensation) / self.denominator;
        &self.x
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn numerator(&self) -> Vector {
        &self.sum + &self.compensation
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }
}

/// `||x_t - x_{t - tau}||` over stored queries.
pub fn stability_gap(history: &QueryHistory, t: usize, tau: usize) -> Result<f64> {
    if tau >= t {
        return Err(Error::InvalidArgument(format!("delay {tau} reaches before step 1 at step {t}")));
    }
    Ok((history.get(t)? - history.get(t - tau)?).norm())
}

/// Runs the anytime conversion with `learner`, which must start at a point
/// of the problem's domain.
pub fn anytime_run<L: OnlineLearner>(
    learner: &mut L,
    setup: RunSetup<'_>,
    observer: &mut dyn StepObserver,
) -> Result<RunOutcome> {
    setup.check()?;
    let problem = setup.problem;
    let domain = problem.domain();
    let mut oracle = DelayedOracle::new(setup.schedule, setup.streams.delay, setup.bounded_history)?;
    let mut noise = NoiseSource::new(setup.streams.noise);
    let mut state = AnytimeState::new(problem.dim(), setup.weights);
    let mut hint = Vector::zeros(problem.dim());
    let mut output = learner.decision().clone();
    let mut error = None;

    for t in 1..=setup.steps {
        let alpha = setup.weights.alpha(t);
        let step = (|| -> Result<()> {
            learner.hint(t, alpha, &hint, domain)?;
            let w = learner.decision().clone();
            let eta = learner.effective_step(t, alpha);
            let x = state.push(&w).clone();
            let fb = oracle.oracle_step(t, x.clone(), problem, &mut noise)?;
            learner.feedback(t, alpha, &fb.gradient.g, domain)?;
            observer.observe(&StepView {
                t,
                alpha,
                decision: &w,
                query: &x,
                output: &x,
                feedback: &fb,
                effective_step: eta,
                history: oracle.history(),
            })?;
            hint = fb.gradient.g;
            output = x;
            Ok(())
        })();
        if let Err(e) = step {
            error = Some(e);
            break;
        }
    }
    Ok(RunOutcome {
        output,
        steps_completed: oracle.delays().len(),
        fresh_deliveries: oracle.fresh_deliveries(),
        delays: oracle.delays().to_vec(),
        error,
    })
}

/// Optimistic variant: adaptive optimistic OGD started at `y0`, or at the
/// domain center when `y0` is `None`. Only the domain diameter is used.
pub fn optimistic_anytime_run(
    y0: Option<Vector>,
    setup: RunSetup<'_>,
    observer: &mut dyn StepObserver,
) -> Result<RunOutcome> {
    let domain: &DomainSpec = setup.problem.domain();
    let mut learner = OptimisticState::new(y0.unwrap_or_else(|| domain.center()), domain)?;
    anytime_run(&mut learner, setup, observer)
}
