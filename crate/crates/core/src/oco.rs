//! Online convex optimization learners fed with linear losses `alpha_t g'x`.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Vector};
use crate::error::{Error, Result};

/// Per-step weights `alpha_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSchedule {
    /// `alpha_t = 1`
    Uniform,
    /// `alpha_t = t`
    Linear,
    /// `alpha_t = t^2`
    Quadratic,
}

impl WeightSchedule {
    pub fn alpha(self, t: usize) -> f64 {
        let t = t as f64;
        match self {
            WeightSchedule::Uniform => 1.0,
            WeightSchedule::Linear => t,
            WeightSchedule::Quadratic => t * t,
        }
    }

    /// `alpha_{1:t}` in closed form, exact while it fits in 53 bits.
    pub fn prefix(self, t: usize) -> f64 {
        let n = t as u128;
        let exact = match self {
            WeightSchedule::Uniform => n,
            WeightSchedule::Linear => n * (n + 1) / 2,
            WeightSchedule::Quadratic => n * (n + 1) * (2 * n + 1) / 6,
        };
        exact as f64
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightSchedule::Uniform => "uniform",
            WeightSchedule::Linear => "linear",
            WeightSchedule::Quadratic => "quadratic",
        }
    }
}

fn check_step(t: usize, alpha: f64) -> Result<()> {
    if t == 0 {
        return Err(Error::ProtocolViolation("steps are numbered from 1".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("weight at step {t} must be positive, got {alpha}")));
    }
    Ok(())
}

fn check_gradient(t: usize, g: &Vector, dim: usize, what: &str) -> Result<()> {
    if g.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "{what} has dimension {} but the domain has {dim}",
            g.len()
        )));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            step: t,
            message: format!("{what} has a non-finite entry at index {i}"),
        });
    }
    Ok(())
}

/// Step-size rule for weighted OGD. `eta_t` multiplies `alpha_t g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `eta_t = eta`.
    Constant(f64),
    /// Effective step `alpha_t eta_t = c / sqrt(t)`.
    Decaying(f64),
    /// `eta_t = D / (alpha_t sqrt(t G2))` with `G2 = 2G^2 + 2 sigma^2`: this is
    /// `D/sqrt(t G2)` for uniform and `D/sqrt(t^3 G2)` for linear weights.
    AppendixC { grad_bound_sq: f64 },
}

impl StepRule {
    fn validate(self) -> Result<()> {
        let (v, key) = match self {
            StepRule::Constant(v) => (v, "lr"),
            StepRule::Decaying(v) => (v, "lr"),
            StepRule::AppendixC { grad_bound_sq } => (grad_bound_sq, "grad_bound_sq"),
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::config(format!("algorithm.{key}"), format!("must be positive and finite, got {v}")))
        }
    }
}

/// Projected OGD on weighted linear losses.
#[derive(Clone, Debug)]
pub struct OgdState {
    w: Vector,
    rule: StepRule,
    diameter: f64,
}

impl OgdState {
    pub fn new(w1: Vector, rule: StepRule, domain: &DomainSpec) -> Result<Self> {
        rule.validate()?;
        if w1.len() != domain.dim() || !domain.contains(&w1) {
            return Err(Error::InvalidArgument("initial OGD iterate must lie in the domain".into()));
        }
        Ok(Self {
            w: w1,
            rule,
            diameter: domain.diameter(),
        })
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    /// `eta_t` for step `t` with weight `alpha_t`.
    pub fn step_size(&self, t: usize, alpha: f64) -> f64 {
        let t = t as f64;
        match self.rule {
            StepRule::Constant(eta) => eta,
            StepRule::Decaying(c) => c / (alpha * t.sqrt()),
            StepRule::AppendixC { grad_bound_sq } => self.diameter / (alpha * (t * grad_bound_sq).sqrt()),
        }
    }
}

/// `w_{t+1} = Pi_K(w_t - eta_t alpha_t g)`; returns the new iterate.
pub fn ogd_update(state: &mut OgdState, t: usize, alpha: f64, g: &Vector, domain: &DomainSpec) -> Result<Vector> {
    check_step(t, alpha)?;
    check_gradient(t, g, domain.dim(), "gradient")?;
    let eta = state.step_size(t, alpha);
    let next = domain.project_update(&(&state.w - g * (eta * alpha)), t)?;
    state.w = next.clone();
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Hint,
    Feedback { t: usize, alpha: f64, eta: f64, hint: Vector },
}

/// Adaptive optimistic OGD with decision `w_t` and anchor `y_t`:
/// `w_t = Pi(y_{t-1} - eta_t alpha_t M_t)`, `y_t = Pi(y_{t-1} - eta_t alpha_t g_t)`,
/// `eta_t = D / sqrt(1 + sum_{i<t} alpha_i^2 ||g_i - M_i||^2)`.
///
/// Each step is a hint phase followed by a feedback phase.
#[derive(Clone, Debug)]
pub struct OptimisticState {
    w: Vector,
    y: Vector,
    s: f64,
    diameter: f64,
    next_t: usize,
    phase: Phase,
}

impl OptimisticState {
    /// Starts from `y_0 = w_1 = y0`.
    pub fn new(y0: Vector, domain: &DomainSpec) -> Result<Self> {
        if y0.len() != domain.dim() || !domain.contains(&y0) {
            return Err(Error::InvalidArgument("initial optimistic anchor must lie in the domain".into()));
        }
        Ok(Self {
            w: y0.clone(),
            y: y0,
            s: 0.0,
            diameter: domain.diameter(),
            next_t: 1,
            phase: Phase::Hint,
        })
    }

    pub fn w(&self) -> &Vector {
        &self.w
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    /// Accumulated `sum alpha_i^2 ||g_i - M_i||^2` over completed steps.
    pub fn accumulator(&self) -> f64 {
        self.s
    }

    /// Step size for the next (or current) step.
    pub fn eta(&self) -> f64 {
        match self.phase {
            Phase::Feedback { eta, .. } => eta,
            Phase::Hint => self.diameter / (1.0 + self.s).sqrt(),
        }
    }

    /// Hint phase of step `t`; stores and returns the decision `w_t`.
    pub fn hint_step(&mut self, t: usize, alpha: f64, m: &Vector, domain: &DomainSpec) -> Result<&Vector> {
        if self.phase != Phase::Hint {
            return Err(Error::ProtocolViolation(format!(
                "hint for step {t} sent before feedback for the previous hint"
            )));
        }
        if t != self.next_t {
            return Err(Error::ProtocolViolation(format!("expected step {}, got {t}", self.next_t)));
        }
        check_step(t, alpha)?;
        check_gradient(t, m, domain.dim(), "hint")?;
        let eta = self.eta();
        self.w = domain.project_update(&(&self.y - m * (eta * alpha)), t)?;
        self.phase = Phase::Feedback {
            t,
            alpha,
            eta,
            hint: m.clone(),
        };
        Ok(&self.w)
    }

    /// Feedback phase of step `t`; updates and returns the anchor `y_t`.
    pub fn feedback_step(&mut self, t: usize, alpha: f64, g: &Vector, domain: &DomainSpec) -> Result<&Vector> {
        let Phase::Feedback {
            t: expected,
            alpha: hint_alpha,
            eta,
            ref hint,
        } = self.phase
        else {
            return Err(Error::ProtocolViolation(format!("feedback for step {t} without a hint")));
        };
        if t != expected || alpha != hint_alpha {
            return Err(Error::ProtocolViolation(format!(
                "feedback (t={t}, alpha={alpha}) does not match hint (t={expected}, alpha={hint_alpha})"
            )));
        }
        check_gradient(t, g, domain.dim(), "gradient")?;
        let y = domain.project_update(&(&self.y - g * (eta * alpha)), t)?;
        self.s += alpha * alpha * (g - hint).norm_squared();
        self.y = y;
        self.next_t += 1;
        self.phase = Phase::Hint;
        Ok(&self.y)
    }
}

/// Learner interface used by the anytime drivers.
pub trait OnlineLearner {
    /// Receives the hint for step `t`. Learners without optimism ignore it.
    fn hint(&mut self, t: usize, alpha: f64, m: &Vector, domain: &DomainSpec) -> Result<()>;
    /// Current decision `w_t`.
    fn decision(&self) -> &Vector;
    /// Effective step `alpha_t eta_t` applied at step `t`.
    fn effective_step(&self, t: usize, alpha: f64) -> f64;
    /// Receives the linear loss `alpha g'x` for step `t`.
    fn feedback(&mut self, t: usize, alpha: f64, g: &Vector, domain: &DomainSpec) -> Result<()>;
}

impl OnlineLearner for OgdState {
    fn hint(&mut self, _t: usize, _alpha: f64, _m: &Vector, _domain: &DomainSpec) -> Result<()> {
        Ok(())
    }

    fn decision(&self) -> &Vector {
        &self.w
    }

    fn effective_step(&self, t: usize, alpha: f64) -> f64 {
        alpha * self.step_size(t, alpha)
    }

    fn feedback(&mut self, t: usize, alpha: f64, g: &Vector, domain: &DomainSpec) -> Result<()> {
        ogd_update(self, t, alpha, g, domain).map(|_| ())
    }
}

impl OnlineLearner for OptimisticState {
    fn hint(&mut self, t: usize, alpha: f64, m: &Vector, domain: &DomainSpec) -> Result<()> {
        self.hint_step(t, alpha, m, domain).map(|_| ())
    }

    fn decision(&self) -> &Vector {
        &self.w
    }

    fn effective_step(&self, _t: usize, alpha: f64) -> f64 {
        alpha * self.eta()
    }

    fn feedback(&mut self, t: usize, alpha: f64, g: &Vector, domain: &DomainSpec) -> Result<()> {
        self.feedback_step(t, alpha, g, domain).map(|_| ())
    }
}

/// Running weighted linear regret `sum alpha_t g_t'(w_t - comparator)`.
#[derive(Clone, Debug)]
pub struct RegretLedger {
    comparator: Vector,
    total: f64,
    steps: usize,
}

impl RegretLedger {
    pub fn new(comparator: Vector) -> Self {
        Self {
            comparator,
            total: 0.0,
            steps: 0,
        }
    }

    pub fn record(&mut self, alpha: f64, g: &Vector, w: &Vector) -> f64 {
        self.total += alpha * g.dot(&(w - &self.comparator));
        self.steps += 1;
        self.total
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn interval() -> DomainSpec {
        DomainSpec::boxed(v(&[-1.0]), v(&[1.0])).unwrap()
    }

    #[test]
    fn weight_prefix_sums() {
        assert_eq!(WeightSchedule::Uniform.prefix(7), 7.0);
        assert_eq!(WeightSchedule::Linear.prefix(4), 10.0);
        assert_eq!(WeightSchedule::Quadratic.prefix(3), 14.0);
        for kind in [WeightSchedule::Uniform, WeightSchedule::Linear, WeightSchedule::Quadratic] {
            let mut acc = 0.0;
            for t in 1..=500 {
                acc += kind.alpha(t);
                assert_eq!(kind.prefix(t), acc);
            }
        }
    }

    #[test]
    fn zero_gradient_keeps_iterate() {
        let d = interval();
        let mut s = OgdState::new(v(&[0.3]), StepRule::Constant(0.7), &d).unwrap();
        assert_eq!(ogd_update(&mut s, 1, 1.0, &v(&[0.0]), &d).unwrap(), v(&[0.3]));
    }

    #[test]
    fn ogd_step_is_clamped() {
        let d = interval();
        let mut s = OgdState::new(v(&[0.0]), StepRule::Constant(0.5), &d).unwrap();
        // alpha * eta * g = 2 * 0.5 * 3 = 3
        assert_eq!(ogd_update(&mut s, 1, 2.0, &v(&[1.5]), &d).unwrap(), v(&[-1.0]));
    }

    #[test]
    fn appendix_c_step_sizes() {
        let d = DomainSpec::boxed(v(&[0.0]), v(&[1.0])).unwrap();
        let s = OgdState::new(v(&[0.0]), StepRule::AppendixC { grad_bound_sq: 4.0 }, &d).unwrap();
        assert_eq!(s.step_size(4, 1.0), 0.25);
        // linear weights: D / sqrt(t^3 G2)
        assert!((s.step_size(4, 4.0) - 1.0 / (64.0f64 * 4.0).sqrt()).abs() < 1e-15);
        let c = OgdState::new(v(&[0.0]), StepRule::Decaying(0.6), &d).unwrap();
        assert!((c.effective_step(9, 9.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_numeric_error() {
        let d = interval();
        let mut s = OgdState::new(v(&[0.0]), StepRule::Constant(0.5), &d).unwrap();
        assert!(matches!(
            ogd_update(&mut s, 3, 1.0, &v(&[f64::NAN]), &d),
            Err(Error::Numeric { step: 3, .. })
        ));
    }

    #[test]
    fn optimistic_first_steps() {
        let d = DomainSpec::boxed(v(&[-1.0]), v(&[1.0])).unwrap();
        let mut s = OptimisticState::new(v(&[0.0]), &d).unwrap();
        assert_eq!(s.eta(), 2.0);
        // zero hint leaves the decision at the anchor
        assert_eq!(s.hint_step(1, 1.0, &v(&[0.0]), &d).unwrap(), &v(&[0.0]));

        let d1 = DomainSpec::boxed(v(&[0.0]), v(&[1.0])).unwrap();
        let mut s = OptimisticState::new(v(&[0.5]), &d1).unwrap();
        s.hint_step(1, 1.0, &v(&[0.0]), &d1).unwrap();
        s.feedback_step(1, 1.0, &v(&[3f64.sqrt()]), &d1).unwrap();
        assert!((s.accumulator() - 3.0).abs() < 1e-15);
        assert!((s.eta() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimistic_golden_trace() {
        // Hand trace on [-1, 1] (D = 2), y_0 = 0.
        // t=1 (alpha=1, M=0, g=1): eta=2, w=0, y=clamp(-2)=-1, S=1.
        // t=2 (alpha=2, M=1, g=1): eta=2/sqrt(2), w=y=clamp(-1-2*sqrt(2))=-1, S=1.
        let d = interval();
        let mut s = OptimisticState::new(v(&[0.0]), &d).unwrap();
        let mut trace = Vec::new();
        for (t, alpha, m, g) in [(1, 1.0, 0.0, 1.0), (2, 2.0, 1.0, 1.0)] {
            let eta = s.eta();
            let w = s.hint_step(t, alpha, &v(&[m]), &d).unwrap()[0];
            let y = s.feedback_step(t, alpha, &v(&[g]), &d).unwrap()[0];
            trace.push((w, y, s.accumulator(), eta));
        }
        assert_eq!(trace[0], (0.0, -1.0, 1.0, 2.0));
        assert_eq!((trace[1].0, trace[1].1, trace[1].2), (-1.0, -1.0, 1.0));
        assert!((trace[1].3 - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn protocol_is_enforced() {
        let d = interval();
        let mut s = OptimisticState::new(v(&[0.0]), &d).unwrap();
        let z = v(&[0.0]);
        assert!(matches!(s.feedback_step(1, 1.0, &z, &d), Err(Error::ProtocolViolation(_))));
        s.hint_step(1, 1.0, &z, &d).unwrap();
        assert!(matches!(s.hint_step(1, 1.0, &z, &d), Err(Error::ProtocolViolation(_))));
        assert!(matches!(s.feedback_step(2, 1.0, &z, &d), Err(Error::ProtocolViolation(_))));
        s.feedback_step(1, 1.0, &z, &d).unwrap();
        assert!(matches!(s.hint_step(3, 1.0, &z, &d), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn perfect_hints_keep_step_size() {
        let d = DomainSpec::origin_ball(2, 1.0).unwrap();
        let mut s = OptimisticState::new(v(&[0.0, 0.0]), &d).unwrap();
        for t in 1..=50 {
            let g = v(&[(t as f64).sin(), (t as f64).cos()]);
            let w = s.hint_step(t, t as f64, &g, &d).unwrap().clone();
            s.feedback_step(t, t as f64, &g, &d).unwrap();
            assert_eq!(&w, s.y());
            assert_eq!(s.accumulator(), 0.0);
            assert_eq!(s.eta(), 2.0);
        }
    }

    #[test]
    fn regret_ledger_examples() {
        let mut l = RegretLedger::new(v(&[0.0, 0.0]));
        assert_eq!(l.record(2.0, &v(&[1.0, 0.0]), &v(&[3.0, 0.0])), 6.0);
        let mut l = RegretLedger::new(v(&[0.5]));
        for _ in 0..10 {
            l.record(1.0, &v(&[7.0]), &v(&[0.5]));
        }
        assert_eq!(l.total(), 0.0);
    }

    /// Scripted adversarial sequence: the sign flips whenever the iterate
    /// crosses zero, pushing OGD back and forth.
    fn adversarial_regret(weights: WeightSchedule, t_max: usize) -> (f64, f64, f64) {
        let d = interval();
        let g_bound = 1.0;
        let g2 = 2.0 * g_bound * g_bound;
        let mut s = OgdState::new(v(&[0.0]), StepRule::AppendixC { grad_bound_sq: g2 }, &d).unwrap();
        let comparator = v(&[1.0]);
        let mut ledger = RegretLedger::new(comparator);
        for t in 1..=t_max {
            let g = v(&[if s.w()[0] >= 0.0 { g_bound } else { -g_bound }]);
            let alpha = weights.alpha(t);
            ledger.record(alpha, &g, &s.w().clone());
            ogd_update(&mut s, t, alpha, &g, &d).unwrap();
        }
        (ledger.total(), d.diameter(), g2)
    }

    #[test]
    fn appendix_c_regret_bounds_hold() {
        let t = 100.0f64;
        let (reg, dd, g2) = adversarial_regret(WeightSchedule::Uniform, 100);
        assert!(reg <= 3.0 * dd * (t * g2).sqrt(), "{reg}");
        let (reg, dd, g2) = adversarial_regret(WeightSchedule::Linear, 100);
        assert!(reg <= 2.0 * dd * t.powf(1.5) * g2.sqrt(), "{reg}");
    }

    proptest! {
        #[test]
        fn optimistic_invariants(steps in proptest::collection::vec(((-3.0f64..3.0), (-3.0f64..3.0), (-3.0f64..3.0), (-3.0f64..3.0)), 1..60)) {
            let d = DomainSpec::origin_ball(2, 1.5).unwrap();
            let mut s = OptimisticState::new(v(&[0.0, 0.0]), &d).unwrap();
            let (mut last_eta, mut last_s) = (f64::INFINITY, 0.0);
            for (i, (a, b, c, e)) in steps.into_iter().enumerate() {
                let t = i + 1;
                let eta = s.eta();
                prop_assert!(eta <= last_eta);
                last_eta = eta;
                let w = s.hint_step(t, t as f64, &v(&[a, b]), &d).unwrap().clone();
                prop_assert!((d.project(&w).unwrap() - &w).norm() <= 1e-12);
                s.feedback_step(t, t as f64, &v(&[c, e]), &d).unwrap();
                prop_assert!(d.contains(s.y()));
                prop_assert!(s.accumulator() >= last_s);
                last_s = s.accumulator();
            }
        }
    }
}
