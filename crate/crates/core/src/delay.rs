//! Simulated delayed gradient oracle.
//!
//! At server step `t` the caller registers its query `x_t` and receives the
//! gradient of some earlier query `x_{t - tau_t}`. In schedule mode `tau_t`
//! is drawn from a [`DelaySchedule`]; in queue mode it emerges from a pool of
//! simulated workers that pick up queries, compute for a service time, and
//! hand their results back.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Vector;
use crate::error::{Error, Result};
use crate::oracle::{GradientSample, NoiseSource, ProblemSpec};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub enum ServiceTime {
    Constant(usize),
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelaySchedule {
    Constant(usize),
    /// Explicit delays; entry `t - 1` is used at step `t`.
    Sequence(Vec<usize>),
    /// `round(exp(N(mu, sigma^2)))`.
    LogNormal { mu: f64, sigma: f64 },
    /// Uniform integer in `[lo, hi]`.
    Uniform { lo: usize, hi: usize },
    /// Update-queue simulation with `workers` parallel workers.
    Queue { workers: usize, service: ServiceTime },
}

fn lognormal(mu: f64, sigma: f64, key: &str) -> Result<LogNormal<f64>> {
    if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::config(key, format!("lognormal needs finite mu and sigma >= 0, got ({mu}, {sigma})")));
    }
    LogNormal::new(mu, sigma).map_err(|e| Error::config(key, e.to_string()))
}

/// Rounds a nonnegative real draw to the nearest integer, saturating at `cap`.
fn round_capped(x: f64, cap: usize) -> usize {
    let r = x.round();
    if r >= cap as f64 {
        cap
    } else {
        r as usize
    }
}

impl DelaySchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            DelaySchedule::LogNormal { mu, sigma } => lognormal(*mu, *sigma, "delay").map(|_| ()),
            DelaySchedule::Uniform { lo, hi } if lo > hi => Err(Error::config(
                "delay.hi",
                format!("uniform delay needs lo <= hi, got [{lo}, {hi}]"),
            )),
            DelaySchedule::Queue { workers: 0, .. } => {
                Err(Error::config("delay.workers", "queue needs at least one worker"))
            }
            DelaySchedule::Queue {
                service: ServiceTime::LogNormal { mu, sigma },
                ..
            } => lognormal(*mu, *sigma, "delay.service").map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn is_queue(&self) -> bool {
        matches!(self, DelaySchedule::Queue { .. })
    }

    /// A bound on every realised delay, when one is known in advance.
    pub fn max_delay(&self) -> Option<usize> {
        match self {
            DelaySchedule::Constant(tau) => Some(*tau),
            DelaySchedule::Sequence(v) => v.iter().copied().max().or(Some(0)),
            DelaySchedule::Uniform { hi, .. } => Some(*hi),
            DelaySchedule::LogNormal { .. } | DelaySchedule::Queue { .. } => None,
        }
    }
}

/// Delay used at step `t` (1-based) in schedule mode, clamped into `[0, t-1]`.
pub fn next_delay(schedule: &DelaySchedule, t: usize, rng: &mut SeededRng) -> Result<usize> {
    if t == 0 {
        return Err(Error::ProtocolViolation("steps are numbered from 1".into()));
    }
    let cap = t - 1;
    let raw = match schedule {
        DelaySchedule::Constant(tau) => *tau,
        DelaySchedule::Sequence(v) => *v.get(t - 1).ok_or_else(|| {
            Error::config(
                "delay.values",
                format!("sequence has {} entries but step {t} was requested", v.len()),
            )
        })?,
        DelaySchedule::LogNormal { mu, sigma } => {
            round_capped(lognormal(*mu, *sigma, "delay")?.sample(rng), cap)
        }
        DelaySchedule::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
        DelaySchedule::Queue { .. } => {
            return Err(Error::InvalidArgument(
                "queue delays come from the simulation, not from a per-step draw".into(),
            ))
        }
    };
    Ok(raw.min(cap))
}

/// A delivered gradient, tagged with the step of the query it was computed
/// at and the resulting staleness.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayedFeedback {
    pub gradient: GradientSample,
    pub origin: usize,
    pub delay: usize,
    /// False when no new delivery was ready and the previous one was reused.
    pub fresh: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub mean: f64,
    /// Population variance `mean(tau^2) - mean(tau)^2`.
    pub variance: f64,
    pub max: usize,
    pub count: usize,
    pub histogram: BTreeMap<usize, usize>,
}

pub fn delay_stats(delays: &[usize]) -> Result<DelayStats> {
    if delays.is_empty() {
        return Err(Error::InvalidArgument("delay statistics need at least one delay".into()));
    }
    let n = delays.len() as f64;
    let mut histogram = BTreeMap::new();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &d in delays {
        *histogram.entry(d).or_insert(0) += 1;
        sum += d as f64;
        sum_sq += (d as f64) * (d as f64);
    }
    let mean = sum / n;
    Ok(DelayStats {
        mean,
        variance: (sum_sq / n - mean * mean).max(0.0),
        max: delays.iter().copied().max().unwrap_or(0),
        count: delays.len(),
        histogram,
    })
}

/// Queries `x_1, x_2, ...` in registration order, optionally keeping only the
/// most recent `capacity` of them.
#[derive(Clone, Debug)]
pub struct QueryHistory {
    capacity: Option<usize>,
    first: usize,
    buf: VecDeque<Vector>,
}

impl QueryHistory {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            capacity: capacity.map(|c| c.max(1)),
            first: 1,
            buf: VecDeque::new(),
        }
    }

    /// Number of queries registered so far (the latest step).
    pub fn len(&self) -> usize {
        self.first + self.buf.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, t: usize, x: Vector) -> Result<()> {
        if t != self.len() + 1 {
            return Err(Error::ProtocolViolation(format!(
                "query for step {t} registered after step {}",
                self.len()
            )));
        }
        self.buf.push_back(x);
        if let Some(cap) = self.capacity {
            while self.buf.len() > cap {
                self.buf.pop_front();
                self.first += 1;
            }
        }
        Ok(())
    }

    pub fn get(&self, t: usize) -> Result<&Vector> {
        if t < self.first || t > self.len() {
            return Err(Error::InvalidArgument(format!(
                "query {t} is not stored (available: {}..={})",
                self.first,
                self.len()
            )));
        }
        Ok(&self.buf[t - self.first])
    }
}

#[derive(Clone, Copy, Debug)]
enum Worker {
    Idle,
    Busy { origin: usize, done_at: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Completed {
    done_at: usize,
    origin: usize,
    worker: usize,
}

#[derive(Clone, Debug)]
struct QueueState {
    workers: Vec<Worker>,
    service: ServiceTime,
    /// Registered queries no worker has picked up, newest last.
    pending: Vec<usize>,
    ready: Vec<Completed>,
}

impl QueueState {
    fn for_schedule(schedule: &DelaySchedule) -> Option<Self> {
        match schedule {
            DelaySchedule::Queue { workers, service } => Some(QueueState {
                workers: vec![Worker::Idle; *workers],
                service: service.clone(),
                pending: Vec::new(),
                ready: Vec::new(),
            }),
            _ => None,
        }
    }

    fn service_time(&self, rng: &mut SeededRng) -> Result<usize> {
        Ok(match self.service {
            ServiceTime::Constant(k) => k,
            ServiceTime::LogNormal { mu, sigma } => {
                round_capped(lognormal(mu, sigma, "delay.service")?.sample(rng), usize::MAX / 4)
            }
        })
    }

    fn collect_completions(&mut self, t: usize) {
        for (i, w) in self.workers.iter_mut().enumerate() {
            if let Worker::Busy { origin, done_at } = *w {
                if done_at <= t {
                    self.ready.push(Completed {
                        done_at,
                        origin,
                        worker: i,
                    });
                    *w = Worker::Idle;
                }
            }
        }
    }

    /// Runs one server tick and returns the origin of the result to consume,
    /// if any is ready.
    fn tick(&mut self, t: usize, any_delivered: bool, rng: &mut SeededRng) -> Result<Option<usize>> {
        self.pending.push(t);
        self.collect_completions(t);
        for i in 0..self.workers.len() {
            if matches!(self.workers[i], Worker::Idle) {
                let Some(origin) = self.pending.pop() else { break };
                let done_at = t.saturating_add(self.service_time(rng)?);
                self.workers[i] = Worker::Busy { origin, done_at };
            }
        }
        self.collect_completions(t);
        if self.ready.is_empty() && !any_delivered {
            // Nothing has ever been delivered: the server waits for the
            // earliest in-flight computation instead of stepping without a
            // gradient.
            let next = self
                .workers
                .iter()
                .enumerate()
                .filter_map(|(i, w)| match *w {
                    Worker::Busy { origin, done_at } => Some(Completed { done_at, origin, worker: i }),
                    Worker::Idle => None,
                })
                .min();
            if let Some(c) = next {
                self.workers[c.worker] = Worker::Idle;
                self.ready.push(c);
            }
        }
        if self.ready.is_empty() {
            return Ok(None);
        }
        let (idx, _) = self
            .ready
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| **c)
            .expect("nonempty");
        Ok(Some(self.ready.swap_remove(idx).origin))
    }
}

/// Stateful delayed oracle for one run.
#[derive(Clone, Debug)]
pub struct DelayedOracle {
    schedule: DelaySchedule,
    rng: SeededRng,
    history: QueryHistory,
    queue: Option<QueueState>,
    last: Option<DelayedFeedback>,
    delays: Vec<usize>,
    fresh_deliveries: usize,
}

impl DelayedOracle {
    /// With `bounded_history`, schedules that have a known maximum delay
    /// keep only the queries that can still be requested.
    pub fn new(schedule: DelaySchedule, rng: SeededRng, bounded_history: bool) -> Result<Self> {
        schedule.validate()?;
        let capacity = if bounded_history {
            schedule.max_delay().map(|m| m + 1)
        } else {
            None
        };
        Ok(Self {
            queue: QueueState::for_schedule(&schedule),
            schedule,
            rng,
            history: QueryHistory::new(capacity),
            last: None,
            delays: Vec::new(),
            fresh_deliveries: 0,
        })
    }

    pub fn schedule(&self) -> &DelaySchedule {
        &self.schedule
    }

    pub fn history(&self) -> &QueryHistory {
        &self.history
    }

    /// Realised delays `tau_1, ..., tau_t` so far.
    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn registered(&self) -> usize {
        self.history.len()
    }

    /// Number of newly computed gradients handed to the server (re-dated
    /// deliveries are not counted).
    pub fn fresh_deliveries(&self) -> usize {
        self.fresh_deliveries
    }

    /// Registers `query` as `x_t` and returns the gradient consumed at step
    /// `t`. Fresh deliveries are evaluated at the stored origin query with a
    /// new noise draw.
    pub fn oracle_step(
        &mut self,
        t: usize,
        query: Vector,
        problem: &ProblemSpec,
        noise: &mut NoiseSource,
    ) -> Result<DelayedFeedback> {
        if t == 0 {
            return Err(Error::ProtocolViolation("steps are numbered from 1".into()));
        }
        self.history.push(t, query)?;
        let origin = match &mut self.queue {
            Some(q) => q.tick(t, self.last.is_some(), &mut self.rng)?,
            None => Some(t - next_delay(&self.schedule, t, &mut self.rng)?),
        };
        let feedback = match origin {
            Some(origin) => {
                let x = self.history.get(origin)?;
                let gradient = problem.noisy_grad(x, noise)?;
                self.fresh_deliveries += 1;
                DelayedFeedback {
                    gradient,
                    origin,
                    delay: t - origin,
                    fresh: true,
                }
            }
            None => {
                let prev = self
                    .last
                    .as_ref()
                    .expect("the queue always delivers at the first step");
                DelayedFeedback {
                    delay: t - prev.origin,
                    fresh: false,
                    ..prev.clone()
                }
            }
        };
        debug_assert!(feedback.delay < t);
        self.delays.push(feedback.delay);
        self.last = Some(feedback.clone());
        Ok(feedback)
    }
}

/// Realised delays of `schedule` over `steps` server steps, without
/// evaluating any gradients. Matches the delays a [`DelayedOracle`] built
/// from the same delay stream would produce.
pub fn simulate_delays(schedule: &DelaySchedule, steps: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    schedule.validate()?;
    let mut queue = QueueState::for_schedule(schedule);
    let mut last = None;
    let mut delays = Vec::with_capacity(steps);
    for t in 1..=steps {
        let origin = match &mut queue {
            Some(q) => q.tick(t, last.is_some(), rng)?,
            None => Some(t - next_delay(schedule, t, rng)?),
        };
        let origin = origin.or(last).expect("the queue always delivers at the first step");
        delays.push(t - origin);
        last = Some(origin);
    }
    Ok(delays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::oracle::NoiseModel;
    use crate::rng;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn problem() -> ProblemSpec {
        ProblemSpec::quadratic(
            DMatrix::identity(2, 2),
            Vector::from_column_slice(&[0.3, 0.1]),
            DomainSpec::origin_ball(2, 1.0).unwrap(),
            NoiseModel::Gaussian { sigma: 0.1 },
        )
        .unwrap()
    }

    fn query(t: usize) -> Vector {
        Vector::from_column_slice(&[t as f64 * 1e-3, -(t as f64) * 1e-3])
    }

    fn run(schedule: DelaySchedule, steps: usize, seed: u64) -> (Vec<DelayedFeedback>, DelayedOracle) {
        let p = problem();
        let mut noise = NoiseSource::new(rng::stream(seed, 0));
        let mut oracle = DelayedOracle::new(schedule, rng::stream(seed, 1), false).unwrap();
        let out = (1..=steps)
            .map(|t| oracle.oracle_step(t, query(t), &p, &mut noise).unwrap())
            .collect();
        (out, oracle)
    }

    #[test]
    fn constant_delay_and_clamp() {
        let mut r = rng::stream(0, 0);
        assert_eq!(next_delay(&DelaySchedule::Constant(500), 1000, &mut r).unwrap(), 500);
        assert_eq!(next_delay(&DelaySchedule::Constant(500), 3, &mut r).unwrap(), 2);
        assert!(next_delay(&DelaySchedule::Constant(1), 0, &mut r).is_err());
    }

    #[test]
    fn lognormal_is_deterministic_given_seed() {
        let s = DelaySchedule::LogNormal { mu: 7.0, sigma: 0.4 };
        let a = next_delay(&s, 1_000_000, &mut rng::stream(5, 1)).unwrap();
        let b = next_delay(&s, 1_000_000, &mut rng::stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_sequence_is_a_configuration_error() {
        let s = DelaySchedule::Sequence(vec![0, 1]);
        let mut r = rng::stream(0, 0);
        assert_eq!(next_delay(&s, 2, &mut r).unwrap(), 1);
        assert!(matches!(next_delay(&s, 3, &mut r), Err(Error::InvalidConfiguration { .. })));
    }

    #[test]
    fn zero_delay_is_fresh() {
        let (fb, _) = run(DelaySchedule::Constant(0), 20, 1);
        for (i, f) in fb.iter().enumerate() {
            assert_eq!(f.origin, i + 1);
            assert_eq!(f.gradient.query, query(i + 1));
        }
    }

    #[test]
    fn constant_two_evaluates_three_steps_back() {
        let (fb, _) = run(DelaySchedule::Constant(2), 5, 1);
        assert_eq!(fb[4].origin, 3);
        assert_eq!(fb[4].gradient.query, query(3));
    }

    #[test]
    fn single_worker_queue_matches_hand_trace() {
        // One worker, service time 3. Hand trace: step 1 waits for the first
        // result (tau = 0); steps 2..4 reuse it (1, 2, 3); from step 5 on the
        // worker returns every third step, giving the cycle 3, 4, 5.
        let expected: Vec<usize> = vec![0, 1, 2, 3, 3, 4, 5, 3, 4, 5, 3, 4, 5, 3, 4, 5, 3, 4, 5, 3];
        let (_, oracle) = run(
            DelaySchedule::Queue { workers: 1, service: ServiceTime::Constant(3) },
            20,
            2,
        );
        assert_eq!(oracle.delays(), expected.as_slice());
        let stats = delay_stats(oracle.delays()).unwrap();
        assert!((stats.mean - 69.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn queue_conserves_queries() {
        let (fb, oracle) = run(
            DelaySchedule::Queue {
                workers: 4,
                service: ServiceTime::LogNormal { mu: 2.0, sigma: 0.8 },
            },
            2000,
            3,
        );
        let mut origins: Vec<usize> = fb.iter().filter(|f| f.fresh).map(|f| f.origin).collect();
        let n = origins.len();
        assert_eq!(n, oracle.fresh_deliveries());
        origins.sort_unstable();
        origins.dedup();
        assert_eq!(origins.len(), n, "a query was delivered twice");
        assert!(n <= oracle.registered());
        for (i, f) in fb.iter().enumerate() {
            assert!(f.delay < i + 1);
        }
    }

    #[test]
    fn simulation_matches_oracle() {
        for s in [
            DelaySchedule::LogNormal { mu: 2.0, sigma: 0.7 },
            DelaySchedule::Queue { workers: 3, service: ServiceTime::LogNormal { mu: 1.5, sigma: 0.5 } },
        ] {
            let (_, oracle) = run(s.clone(), 500, 8);
            let sim = simulate_delays(&s, 500, &mut rng::stream(8, 1)).unwrap();
            assert_eq!(sim, oracle.delays());
        }
    }

    #[test]
    fn stats_examples() {
        let s = delay_stats(&[0, 2, 4]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.variance - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.max, 4);
        let s = delay_stats(&[5, 5, 5]).unwrap();
        assert_eq!((s.mean, s.variance), (5.0, 0.0));
        assert!(delay_stats(&[]).is_err());
    }

    #[test]
    fn constant_schedule_variance_comes_from_clamped_prefix() {
        let (_, oracle) = run(DelaySchedule::Constant(10), 1000, 1);
        let d = oracle.delays();
        assert_eq!(&d[..11], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let tail = delay_stats(&d[10..]).unwrap();
        assert_eq!(tail.variance, 0.0);
        assert!(delay_stats(d).unwrap().variance > 0.0);
    }

    #[test]
    fn lognormal_mean_matches_monte_carlo_oracle() {
        // Independent oracle: the mean of exp(N(7, 0.4^2)) is exp(7 + 0.08);
        // rounding shifts it by far less than the 5% allowance.
        let s = DelaySchedule::LogNormal { mu: 7.0, sigma: 0.4 };
        let mut r = rng::stream(9, 1);
        let draws: Vec<usize> = (0..10_000).map(|_| next_delay(&s, usize::MAX / 2, &mut r).unwrap()).collect();
        let stats = delay_stats(&draws).unwrap();
        let target = (7.08f64).exp();
        assert!((stats.mean - target).abs() < 0.05 * target, "{} vs {target}", stats.mean);
    }

    #[test]
    fn bounded_history_evicts_old_queries() {
        let mut h = QueryHistory::new(Some(3));
        for t in 1..=5 {
            h.push(t, query(t)).unwrap();
        }
        assert!(h.get(2).is_err());
        assert_eq!(h.get(3).unwrap(), &query(3));
        assert!(h.push(7, query(7)).is_err());
    }

    #[test]
    fn out_of_order_registration_is_rejected() {
        let p = problem();
        let mut noise = NoiseSource::new(rng::stream(0, 0));
        let mut o = DelayedOracle::new(DelaySchedule::Constant(0), rng::stream(0, 1), false).unwrap();
        o.oracle_step(1, query(1), &p, &mut noise).unwrap();
        assert!(matches!(o.oracle_step(3, query(3), &p, &mut noise), Err(Error::ProtocolViolation(_))));
        assert!(matches!(o.oracle_step(0, query(0), &p, &mut noise), Err(Error::ProtocolViolation(_))));
    }

    fn schedules() -> impl Strategy<Value = DelaySchedule> {
        prop_oneof![
            (0usize..200).prop_map(DelaySchedule::Constant),
            (0.0f64..5.0, 0.0f64..1.0).prop_map(|(mu, sigma)| DelaySchedule::LogNormal { mu, sigma }),
            (0usize..50, 0usize..50).prop_map(|(a, b)| DelaySchedule::Uniform { lo: a.min(b), hi: a.max(b) }),
            (1usize..6, 0usize..20).prop_map(|(w, k)| DelaySchedule::Queue { workers: w, service: ServiceTime::Constant(k) }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn delays_stay_in_range_and_are_reproducible(s in schedules(), seed in 0u64..1000) {
            let (a, oa) = run(s.clone(), 300, seed);
            let (b, _) = run(s, 300, seed);
            prop_assert_eq!(&a, &b);
            for (i, &d) in oa.delays().iter().enumerate() {
                prop_assert!(d <= i);
            }
        }
    }
}
