//! Optimistic OGD for strongly convex objectives, with and without delays.
//!
//! With `eta_t = 8 / (H alpha_{1:t})` and `eta~_t = alpha_t eta_t`, each step is
//! `x_t = Pi(y_{t-1} - eta~_t M_t)` followed by `y_t = Pi(y_{t-1} - eta~_t g_t)`.
//! The output is the weighted average of the `x_t`. Only `H` is required.

use crate::anytime::AnytimeState;
use crate::delay::{DelayedFeedback, DelayedOracle, QueryHistory};
use crate::domain::{DomainSpec, Vector};
use crate::error::{Error, Result};
use crate::oco::WeightSchedule;
use crate::oracle::{NoiseSource, ProblemSpec};
use crate::trace::{RunOutcome, RunSetup, StepObserver, StepView};

const PROX_MAX_ITERATIONS: usize = 10_000;

fn check_h(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::config("algorithm.h", format!("strong convexity must be positive, got {h}")))
    }
}

fn check_vector(t: usize, v: &Vector, dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::InvalidArgument(format!("{what} has dimension {}, expected {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            step: t,
            message: format!("{what} is not finite"),
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ScState {
    h: f64,
    weights: WeightSchedule,
    x: Vector,
    y: Vector,
    average: AnytimeState,
    next_t: usize,
    pending: bool,
}

impl ScState {
    pub fn new(y0: Vector, h: f64, weights: WeightSchedule, domain: &DomainSpec) -> Result<Self> {
        check_h(h)?;
        if y0.len() != domain.dim() || !domain.contains(&y0) {
            return Err(Error::InvalidArgument("initial point must lie in the domain".into()));
        }
        Ok(Self {
            h,
            weights,
            x: y0.clone(),
            average: AnytimeState::new(y0.len(), weights),
            y: y0,
            next_t: 1,
            pending: false,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> WeightSchedule {
        self.weights
    }

    /// `eta_t = 8 / (H alpha_{1:t})`.
    pub fn eta(&self, t: usize) -> f64 {
        8.0 / (self.h * self.weights.prefix(t))
    }

    /// `eta~_t = 8 alpha_t / (H alpha_{1:t})`.
    pub fn effective_step(&self, t: usize) -> f64 {
        8.0 * self.weights.alpha(t) / (self.h * self.weights.prefix(t))
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    /// Weighted average `sum alpha_t x_t / alpha_{1:t}` of the `x_t` so far.
    pub fn average(&self) -> &Vector {
        self.average.x()
    }

    pub fn steps(&self) -> usize {
        self.next_t - 1
    }

    /// Hint phase: computes `x_t` from the hint `m`.
    pub fn hint_step(&mut self, t: usize, m: &Vector, domain: &DomainSpec) -> Result<&Vector> {
        if self.pending || t != self.next_t {
            return Err(Error::ProtocolViolation(format!(
                "hint for step {t} out of order (next step {}, feedback pending: {})",
                self.next_t, self.pending
            )));
        }
        check_vector(t, m, domain.dim(), "hint")?;
        self.x = domain.project_update(&(&self.y - m * self.effective_step(t)), t)?;
        self.average.push(&self.x);
        self.pending = true;
        Ok(&self.x)
    }

    /// Feedback phase: computes `y_t` from the gradient `g`.
    pub fn feedback_step(&mut self, t: usize, g: &Vector, domain: &DomainSpec) -> Result<&Vector> {
        if !self.pending || t != self.next_t {
            return Err(Error::ProtocolViolation(format!("feedback for step {t} without a matching hint")));
        }
        check_vector(t, g, domain.dim(), "gradient")?;
        self.y = domain.project_update(&(&self.y - g * self.effective_step(t)), t)?;
        self.pending = false;
        self.next_t += 1;
        Ok(&self.y)
    }
}

/// One full step with hint `m` and gradient `g`; returns `(x_t, y_t)`.
pub fn sc_step(state: &mut ScState, t: usize, m: &Vector, g: &Vector, domain: &DomainSpec) -> Result<(Vector, Vector)> {
    let x = state.hint_step(t, m, domain)?.clone();
    let y = state.feedback_step(t, g, domain)?.clone();
    Ok((x, y))
}

/// Minimizes `alpha v'z + ||z - anchor||^2 / (2 eta)` over the domain by
/// projected gradient with step `eta / 2`.
fn prox_solve(anchor: &Vector, alpha: f64, eta: f64, v: &Vector, domain: &DomainSpec, tolerance: f64) -> Result<Vector> {
    let step = eta / 2.0;
    let mut z = domain.center();
    for _ in 0..PROX_MAX_ITERATIONS {
        let grad = v * alpha + (&z - anchor) / eta;
        let next = domain.project(&(&z - grad * step))?;
        let moved = (&next - &z).norm();
        z = next;
        if moved <= tolerance {
            return Ok(z);
        }
    }
    let grad = v * alpha + (&z - anchor) / eta;
    Err(Error::OptimizerFailure {
        iterations: PROX_MAX_ITERATIONS,
        residual: (domain.project(&(&z - grad * step))? - &z).norm(),
    })
}

/// Solves both argmin subproblems of step `t` numerically, starting from
/// `state`'s current anchor. Does not modify `state`.
pub fn sc_step_prox_reference(
    state: &ScState,
    t: usize,
    m: &Vector,
    g: &Vector,
    domain: &DomainSpec,
    tolerance: f64,
) -> Result<(Vector, Vector)> {
    let alpha = state.weights.alpha(t);
    let eta = state.eta(t);
    let x = prox_solve(&state.y, alpha, eta, m, domain, tolerance)?;
    let y = prox_solve(&state.y, alpha, eta, g, domain, tolerance)?;
    Ok((x, y))
}

fn initial_state(problem: &ProblemSpec, h: f64, weights: WeightSchedule, y0: Option<Vector>) -> Result<ScState> {
    let domain = problem.domain();
    ScState::new(y0.unwrap_or_else(|| domain.center()), h, weights, domain)
}

fn outcome(state: &ScState, delays: Vec<usize>, fresh: usize, error: Option<Error>) -> RunOutcome {
    RunOutcome {
        output: if state.steps() == 0 && error.is_some() {
            state.y().clone()
        } else {
            state.average().clone()
        },
        steps_completed: delays.len(),
        delays,
        fresh_deliveries: fresh,
        error,
    }
}

/// Undelayed run: the hint at step `t` is the gradient sample drawn at
/// `x_{t-1}`, and the first hint is a sample at `y0`. The delay schedule in
/// `setup` is ignored.
pub fn sc_run(h: f64, y0: Option<Vector>, setup: RunSetup<'_>, observer: &mut dyn StepObserver) -> Result<RunOutcome> {
    setup.check()?;
    let problem = setup.problem;
    let domain = problem.domain();
    let mut state = initial_state(problem, h, setup.weights, y0)?;
    let mut noise = NoiseSource::new(setup.streams.noise);
    let mut history = QueryHistory::new(Some(1));
    let mut hint = problem.noisy_grad(state.y(), &mut noise)?.g;
    let mut delays = Vec::with_capacity(setup.steps);
    let mut error = None;

    for t in 1..=setup.steps {
        let step = (|| -> Result<()> {
            let eta = state.effective_step(t);
            let x = state.hint_step(t, &hint, domain)?.clone();
            history.push(t, x.clone())?;
            let gradient = problem.noisy_grad(&x, &mut noise)?;
            state.feedback_step(t, &gradient.g, domain)?;
            let fb = DelayedFeedback {
                gradient,
                origin: t,
                delay: 0,
                fresh: true,
            };
            observer.observe(&StepView {
                t,
                alpha: setup.weights.alpha(t),
                decision: &x,
                query: &x,
                output: state.average(),
                feedback: &fb,
                effective_step: eta,
                history: &history,
            })?;
            delays.push(0);
            hint = fb.gradient.g;
            Ok(())
        })();
        if let Err(e) = step {
            error = Some(e);
            break;
        }
    }
    let fresh = delays.len();
    Ok(outcome(&state, delays, fresh, error))
}

/// Delayed run: the hint at step `t` is the gradient delivered at step
/// `t - 1`, and the first hint is a sample at `y0`.
pub fn sc_delayed_run(
    h: f64,
    y0: Option<Vector>,
    setup: RunSetup<'_>,
    observer: &mut dyn StepObserver,
) -> Result<RunOutcome> {
    setup.check()?;
    let problem = setup.problem;
    let domain = problem.domain();
    let mut state = initial_state(problem, h, setup.weights, y0)?;
    let mut oracle = DelayedOracle::new(setup.schedule, setup.streams.delay, setup.bounded_history)?;
    let mut noise = NoiseSource::new(setup.streams.noise);
    let mut hint = problem.noisy_grad(state.y(), &mut noise)?.g;
    let mut error = None;

    for t in 1..=setup.steps {
        let step = (|| -> Result<()> {
            let eta = state.effective_step(t);
            let x = state.hint_step(t, &hint, domain)?.clone();
            let fb = oracle.oracle_step(t, x.clone(), problem, &mut noise)?;
            state.feedback_step(t, &fb.gradient.g, domain)?;
            observer.observe(&StepView {
                t,
                alpha: setup.weights.alpha(t),
                decision: &x,
                query: &x,
                output: state.average(),
                feedback: &fb,
                effective_step: eta,
                history: oracle.history(),
            })?;
            hint = fb.gradient.g;
            Ok(())
        })();
        if let Err(e) = step {
            error = Some(e);
            break;
        }
    }
    Ok(outcome(&state, oracle.delays().to_vec(), oracle.fresh_deliveries(), error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelaySchedule;
    use crate::oracle::{constrained_optimum, NoiseModel};
    use crate::rng;
    use crate::trace::NoObserver;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn interval() -> DomainSpec {
        DomainSpec::boxed(v(&[-1.0]), v(&[1.0])).unwrap()
    }

    #[test]
    fn step_size_examples() {
        let d = interval();
        let s = ScState::new(v(&[0.0]), 3.0, WeightSchedule::Quadratic, &d).unwrap();
        assert!((s.effective_step(2) - 32.0 / 15.0).abs() < 1e-15);
        for t in 1..=1000 {
            let p = WeightSchedule::Quadratic.prefix(t);
            assert!((s.eta(t) * p - 8.0 / 3.0).abs() <= 4.0 * f64::EPSILON);
            assert!((s.effective_step(t) / s.eta(t) - (t * t) as f64).abs() <= 4.0 * f64::EPSILON * (t * t) as f64);
        }
        assert!(matches!(ScState::new(v(&[0.0]), 0.0, WeightSchedule::Quadratic, &d), Err(Error::InvalidConfiguration { .. })));
    }

    #[test]
    fn zero_hint_and_gradient_stay_put() {
        let d = interval();
        let mut s = ScState::new(v(&[0.4]), 1.0, WeightSchedule::Quadratic, &d).unwrap();
        let z = v(&[0.0]);
        assert_eq!(sc_step(&mut s, 1, &z, &z, &d).unwrap(), (v(&[0.4]), v(&[0.4])));
    }

    #[test]
    fn clamped_first_step() {
        let d = interval();
        let mut s = ScState::new(v(&[0.0]), 8.0, WeightSchedule::Quadratic, &d).unwrap();
        let reference = sc_step_prox_reference(&s, 1, &v(&[2.0]), &v(&[-2.0]), &d, 1e-12).unwrap();
        assert_eq!(sc_step(&mut s, 1, &v(&[2.0]), &v(&[-2.0]), &d).unwrap(), (v(&[-1.0]), v(&[1.0])));
        assert!((reference.0[0] + 1.0).abs() < 1e-11 && (reference.1[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn prox_reference_interior_case() {
        let d = DomainSpec::origin_ball(2, 10.0).unwrap();
        let s = ScState::new(v(&[0.5, -0.5]), 2.0, WeightSchedule::Quadratic, &d).unwrap();
        let (m, g) = (v(&[0.3, 0.1]), v(&[-0.2, 0.4]));
        let (x, y) = sc_step_prox_reference(&s, 1, &m, &g, &d, 1e-13).unwrap();
        let eta = s.effective_step(1);
        assert!((x - (v(&[0.5, -0.5]) - &m * eta)).norm() < 1e-12);
        assert!((y - (v(&[0.5, -0.5]) - &g * eta)).norm() < 1e-12);
    }

    #[test]
    fn weighted_average_of_first_two_points() {
        let d = interval();
        let mut s = ScState::new(v(&[0.0]), 100.0, WeightSchedule::Quadratic, &d).unwrap();
        let (x1, _) = sc_step(&mut s, 1, &v(&[1.0]), &v(&[2.0]), &d).unwrap();
        let (x2, _) = sc_step(&mut s, 2, &v(&[-3.0]), &v(&[1.0]), &d).unwrap();
        assert!((s.average() - (x1 + x2 * 4.0) / 5.0).norm() < 1e-15);
    }

    #[test]
    fn protocol_is_enforced() {
        let d = interval();
        let mut s = ScState::new(v(&[0.0]), 1.0, WeightSchedule::Quadratic, &d).unwrap();
        let z = v(&[0.0]);
        assert!(matches!(s.feedback_step(1, &z, &d), Err(Error::ProtocolViolation(_))));
        s.hint_step(1, &z, &d).unwrap();
        assert!(matches!(s.hint_step(1, &z, &d), Err(Error::ProtocolViolation(_))));
        assert!(matches!(s.hint_step(1, &v(&[f64::NAN]), &d), Err(Error::ProtocolViolation(_))));
        assert!(matches!(s.feedback_step(1, &v(&[f64::NAN]), &d), Err(Error::Numeric { step: 1, .. })));
    }

    fn equivalence_deviation(domain: &DomainSpec, seed: u64) -> f64 {
        let mut r = rng::stream(seed, 7);
        let dim = domain.dim();
        let mut s = ScState::new(domain.center(), 0.5, WeightSchedule::Quadratic, domain).unwrap();
        let mut worst = 0.0f64;
        for t in 1..=1000 {
            let m = Vector::from_fn(dim, |_, _| r.random_range(-3.0..3.0));
            let g = Vector::from_fn(dim, |_, _| r.random_range(-3.0..3.0));
            let (xr, yr) = sc_step_prox_reference(&s, t, &m, &g, domain, 1e-12).unwrap();
            let (x, y) = sc_step(&mut s, t, &m, &g, domain).unwrap();
            worst = worst.max((x - xr).norm()).max((y - yr).norm());
        }
        worst
    }

    #[test]
    fn projected_form_matches_prox_form() {
        let ball = DomainSpec::ball(v(&[0.2, -0.1, 0.0]), 1.5).unwrap();
        let boxed = DomainSpec::boxed(v(&[-1.0, 0.0, -2.0]), v(&[1.0, 0.5, 2.0])).unwrap();
        assert!(equivalence_deviation(&ball, 1) <= 1e-9);
        assert!(equivalence_deviation(&boxed, 2) <= 1e-9);
    }

    fn sc_quadratic(sigma: f64) -> ProblemSpec {
        // H = 1, L = 4, unconstrained optimum outside the unit ball.
        ProblemSpec::quadratic(
            DMatrix::from_diagonal(&v(&[4.0, 2.0, 1.0])),
            v(&[3.0, -1.0, 1.5]),
            DomainSpec::origin_ball(3, 1.0).unwrap(),
            if sigma > 0.0 { NoiseModel::Gaussian { sigma } } else { NoiseModel::None },
        )
        .unwrap()
    }

    #[test]
    fn zero_delay_is_bit_identical_to_undelayed_run() {
        let p = sc_quadratic(0.3);
        let record = |delayed: bool| {
            let mut xs = Vec::new();
            let mut obs = |view: &StepView<'_>| {
                xs.push((view.query.clone(), view.feedback.gradient.g.clone()));
                Ok(())
            };
            let setup = RunSetup::new(&p, DelaySchedule::Constant(0), WeightSchedule::Quadratic, 500, 11);
            let out = if delayed {
                sc_delayed_run(1.0, None, setup, &mut obs)
            } else {
                sc_run(1.0, None, setup, &mut obs)
            }
            .unwrap();
            (xs, out.output)
        };
        assert_eq!(record(true), record(false));
    }

    #[test]
    fn average_is_feasible_and_matches_trace() {
        let p = sc_quadratic(0.3);
        let mut xs = Vec::new();
        let out = sc_delayed_run(
            1.0,
            None,
            RunSetup::new(&p, DelaySchedule::Uniform { lo: 0, hi: 20 }, WeightSchedule::Quadratic, 2000, 3),
            &mut |view: &StepView<'_>| {
                xs.push(view.query.clone());
                Ok(())
            },
        )
        .unwrap();
        let num = xs.iter().enumerate().fold(Vector::zeros(3), |acc, (i, x)| acc + x * ((i + 1) * (i + 1)) as f64);
        let avg = num / WeightSchedule::Quadratic.prefix(xs.len());
        assert!((&avg - &out.output).norm() < 1e-12);
        assert!((p.domain().project(&out.output).unwrap() - &out.output).norm() < 1e-12);
    }

    #[test]
    fn moderate_delay_costs_less_than_a_factor_ten() {
        // The delay penalty decays like 1/T^2, so with noise the sigma^2/T term
        // dominates at this horizon.
        let p = sc_quadratic(0.1);
        let opt = constrained_optimum(&p, 1e-13).unwrap();
        let run = |tau, seed| {
            let out = sc_delayed_run(
                1.0,
                None,
                RunSetup::new(&p, DelaySchedule::Constant(tau), WeightSchedule::Quadratic, 10_000, seed),
                &mut NoObserver,
            )
            .unwrap();
            p.excess_loss(&out.output, &opt).unwrap()
        };
        let mut ratios: Vec<f64> = (0..5).map(|seed| run(10, seed) / run(0, seed)).collect();
        ratios.sort_by(f64::total_cmp);
        assert!(ratios[2] < 10.0, "{ratios:?}");
    }
}
