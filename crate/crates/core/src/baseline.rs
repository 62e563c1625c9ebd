//! Delayed SGD baselines that query gradients at the learner's own iterates.

use crate::anytime::AnytimeState;
use crate::delay::DelayedOracle;
use crate::oco::{ogd_update, OgdState, OnlineLearner};
use crate::oracle::NoiseSource;
use crate::trace::{RunOutcome, RunSetup, StepObserver, StepView};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineOutput {
    /// The most recent iterate `w_{t+1}`.
    LastIterate,
    /// `sum alpha_i w_i / alpha_{1:t}` over the queried iterates.
    WeightedAverage,
}

/// Runs `w_{t+1} = Pi(w_t - eta_t alpha_t g_{t - tau_t})` with gradients
/// queried at `w_t`.
pub fn delayed_sgd_run(
    learner: &mut OgdState,
    output_kind: BaselineOutput,
    setup: RunSetup<'_>,
    observer: &mut dyn StepObserver,
) -> crate::Result<RunOutcome> {
    setup.check()?;
    let problem = setup.problem;
    let domain = problem.domain();
    let mut oracle = DelayedOracle::new(setup.schedule, setup.streams.delay, setup.bounded_history)?;
    let mut noise = NoiseSource::new(setup.streams.noise);
    let mut average = AnytimeState::new(problem.dim(), setup.weights);
    let mut output = learner.w().clone();
    let mut error = None;

    for t in 1..=setup.steps {
        let alpha = setup.weights.alpha(t);
        let step = (|| -> crate::Result<()> {
            let w = learner.w().clone();
            let eta = learner.effective_step(t, alpha);
            let fb = oracle.oracle_step(t, w.clone(), problem, &mut noise)?;
            let next = ogd_update(learner, t, alpha, &fb.gradient.g, domain)?;
            let out = match output_kind {
                BaselineOutput::LastIterate => next,
                BaselineOutput::WeightedAverage => average.push(&w).clone(),
            };
            observer.observe(&StepView {
                t,
                alpha,
                decision: &w,
                query: &w,
                output: &out,
                feedback: &fb,
                effective_step: eta,
                history: oracle.history(),
            })?;
            output = out;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelaySchedule;
    use crate::domain::{DomainSpec, Vector};
    use crate::oco::{StepRule, WeightSchedule};
    use crate::oracle::{NoiseModel, ProblemSpec};
    use crate::trace::NoObserver;
    use nalgebra::DMatrix;

    #[test]
    fn undelayed_sgd_matches_direct_loop() {
        let p = ProblemSpec::quadratic(
            DMatrix::from_diagonal(&Vector::from_column_slice(&[2.0, 1.0])),
            Vector::from_column_slice(&[3.0, -0.5]),
            DomainSpec::origin_ball(2, 1.0).unwrap(),
            NoiseModel::None,
        )
        .unwrap();
        let mut ogd = OgdState::new(p.domain().center(), StepRule::Constant(0.1), p.domain()).unwrap();
        let out = delayed_sgd_run(
            &mut ogd,
            BaselineOutput::LastIterate,
            RunSetup::new(&p, DelaySchedule::Constant(0), WeightSchedule::Uniform, 50, 0),
            &mut NoObserver,
        )
        .unwrap();
        let mut w = p.domain().center();
        for _ in 0..50 {
            w = p.domain().project(&(&w - p.exact_grad(&w).unwrap() * 0.1)).unwrap();
        }
        assert_eq!(out.output, w);
    }

    #[test]
    fn averaged_output_uses_queried_iterates() {
        let p = ProblemSpec::quadratic(
            DMatrix::identity(1, 1),
            Vector::from_column_slice(&[0.5]),
            DomainSpec::origin_ball(1, 1.0).unwrap(),
            NoiseModel::None,
        )
        .unwrap();
        let mut ws = Vec::new();
        let mut ogd = OgdState::new(p.domain().center(), StepRule::Constant(0.5), p.domain()).unwrap();
        let out = delayed_sgd_run(
            &mut ogd,
            BaselineOutput::WeightedAverage,
            RunSetup::new(&p, DelaySchedule::Constant(1), WeightSchedule::Linear, 3, 0),
            &mut |view: &StepView<'_>| {
                ws.push(view.query[0]);
                Ok(())
            },
        )
        .unwrap();
        // w_1 = 0; tau_1 = 0 -> w_2 = 0 + 0.5 * 1 * 0.5 = 0.25;
        // tau_2 = 1 (gradient -0.5 at w_1) -> w_3 = 0.25 + 0.5 * 2 * 0.5 = 0.75
        assert_eq!(ws, vec![0.0, 0.25, 0.75]);
        assert!((out.output[0] - (0.0 + 2.0 * 0.25 + 3.0 * 0.75) / 6.0).abs() < 1e-15);
    }
}
