//! Per-step invariant checks used by audit mode.

use crate::anytime::stability_gap;
use crate::domain::Vector;
use crate::error::{Error, Result};
use crate::harness::config::AlgorithmConfig;
use crate::oco::WeightSchedule;
use crate::oracle::{Optimum, ProblemSpec};
use crate::trace::{StepObserver, StepView};

const DECISION_TOL: f64 = 1e-12;
const OUTPUT_TOL: f64 = 1e-9;
const STABILITY_SLACK: f64 = 1e-9;
const AVERAGE_TOL: f64 = 1e-12;

/// Observer that fails the run with [`Error::InvariantViolation`] at the
/// first step where a module invariant does not hold.
pub struct Auditor<'a> {
    problem: &'a ProblemSpec,
    optimum: &'a Optimum,
    optimum_tolerance: f64,
    algorithm: AlgorithmConfig,
    weights: WeightSchedule,
    steps: usize,
    diameter: f64,
    /// Decisions kept for the from-scratch average check; `None` when the
    /// output is not an average.
    decisions: Option<Vec<Vector>>,
    last_eta: Option<f64>,
    checks: usize,
}

impl<'a> Auditor<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        optimum: &'a Optimum,
        optimum_tolerance: f64,
        algorithm: &AlgorithmConfig,
        weights: WeightSchedule,
        steps: usize,
    ) -> Self {
        let averaged = !matches!(algorithm, AlgorithmConfig::SgdConstant { .. });
        Self {
            problem,
            optimum,
            optimum_tolerance,
            algorithm: algorithm.clone(),
            weights,
            steps,
            diameter: problem.domain().diameter(),
            decisions: averaged.then(Vec::new),
            last_eta: None,
            checks: 0,
        }
    }

    /// Number of individual checks performed so far.
    pub fn checks(&self) -> usize {
        self.checks
    }

    fn fail(&self, view: &StepView<'_>, what: String) -> Error {
        let fmt = |v: &Vector| format!("{:?}", v.as_slice());
        Error::InvariantViolation {
            step: view.t,
            message: format!(
                "{what}\nstate: t={} alpha={} effective_step={:e} delay={} origin={} fresh={}\n  decision={}\n  query={}\n  output={}\n  gradient={}",
                view.t,
                view.alpha,
                view.effective_step,
                view.feedback.delay,
                view.feedback.origin,
                view.feedback.fresh,
                fmt(view.decision),
                fmt(view.query),
                fmt(view.output),
                fmt(&view.feedback.gradient.g),
            ),
        }
    }

    fn infeasibility(&self, x: &Vector) -> Result<f64> {
        Ok((self.problem.domain().project(x)? - x).norm())
    }

    fn checkpoint(&self, t: usize) -> bool {
        t.is_power_of_two() || t == self.steps
    }
}

impl StepObserver for Auditor<'_> {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        let t = view.t;
        let fb = view.feedback;
        self.checks += 1;
        if fb.delay >= t || fb.origin + fb.delay != t {
            return Err(self.fail(view, format!("delay {} from origin {} is not causal", fb.delay, fb.origin)));
        }

        self.checks += 2;
        for (name, x) in [("decision", view.decision), ("query", view.query)] {
            let gap = self.infeasibility(x)?;
            if gap > DECISION_TOL * (1.0 + x.norm()) {
                return Err(self.fail(view, format!("{name} is {gap:e} outside the domain")));
            }
        }
        self.checks += 1;
        let gap = self.infeasibility(view.output)?;
        if gap > OUTPUT_TOL * (1.0 + view.output.norm()) {
            return Err(self.fail(view, format!("output is {gap:e} outside the domain")));
        }

        if self.algorithm.is_anytime() && self.weights == WeightSchedule::Linear {
            self.checks += 1;
            let tau = fb.delay;
            let gap = stability_gap(view.history, t, tau)?;
            let bound = 8.0 * tau as f64 * self.diameter / t as f64;
            if gap > bound + STABILITY_SLACK {
                return Err(self.fail(
                    view,
                    format!("||x_t - x_(t-tau)|| = {gap:e} exceeds 8 tau D / t = {bound:e}"),
                ));
            }
        }

        match self.algorithm {
            AlgorithmConfig::OptimisticAnytime {} => {
                self.checks += 1;
                let eta = view.effective_step / view.alpha;
                if let Some(prev) = self.last_eta {
                    if eta > prev {
                        return Err(self.fail(view, format!("step size grew from {prev:e} to {eta:e}")));
                    }
                }
                self.last_eta = Some(eta);
            }
            AlgorithmConfig::ScOptimistic { h } | AlgorithmConfig::ScOptimisticDelayed { h } => {
                self.checks += 1;
                let expected = 8.0 * self.weights.alpha(t) / (h * self.weights.prefix(t));
                if (view.effective_step - expected).abs() > 1e-12 * expected {
                    return Err(self.fail(view, format!("step {:e} differs from 8 alpha_t / (H alpha_1:t) = {expected:e}", view.effective_step)));
                }
            }
            _ => {}
        }

        if let Some(decisions) = self.decisions.as_mut() {
            decisions.push(view.decision.clone());
        }
        if self.checkpoint(t) {
            if let Some(decisions) = &self.decisions {
                self.checks += 1;
                let sum = pairwise_weighted_sum(decisions, self.weights, 0, decisions.len());
                let expected = sum / self.weights.prefix(t);
                let scale = 1.0 + decisions.iter().map(|d| d.norm()).fold(0.0, f64::max);
                let err = (view.output - &expected).norm();
                if err > AVERAGE_TOL * scale {
                    return Err(self.fail(view, format!("output is {err:e} from the weighted average of the decisions")));
                }
            }
            self.checks += 1;
            let excess = self.problem.excess_loss(view.output, self.optimum)?;
            if excess < -2.0 * self.optimum_tolerance {
                return Err(self.fail(view, format!("excess loss {excess:e} is below the optimum tolerance")));
            }
        }
        Ok(())
    }
}

/// `sum_{i in [lo, hi)} alpha_{i+1} d_i` by pairwise summation.
fn pairwise_weighted_sum(d: &[Vector], weights: WeightSchedule, lo: usize, hi: usize) -> Vector {
    if hi - lo <= 8 {
        let mut s = Vector::zeros(d[lo].len());
        for (i, v) in d.iter().enumerate().take(hi).skip(lo) {
            s.axpy(weights.alpha(i + 1), v, 1.0);
        }
        return s;
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_weighted_sum(d, weights, lo, mid) + pairwise_weighted_sum(d, weights, mid, hi)
}
