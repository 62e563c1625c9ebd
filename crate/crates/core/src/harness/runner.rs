//! Single runs: algorithm dispatch, metric recording and the optimum cache.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use super::audit::Auditor;
use super::config::{AlgorithmConfig, AnytimeStepRule, BuiltProblem, ExperimentConfig};
use super::record::{ErrorReport, GradientEstimates, RunRecord, SeriesPoint};
use crate::anytime::{anytime_run, optimistic_anytime_run};
use crate::baseline::{delayed_sgd_run, BaselineOutput};
use crate::delay::delay_stats;
use crate::error::{Error, Result};
use crate::oco::{OgdState, StepRule};
use crate::oracle::{accuracy, constrained_optimum, Dataset, Optimum, ProblemSpec};
use crate::rng::{RunStreams, RNG_ALGORITHM};
use crate::strongly_convex::{sc_delayed_run, sc_run};
use crate::trace::{RunOutcome, RunSetup, StepObserver, StepView};

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// File stem for the run's outputs.
    pub label: String,
    /// Check every module invariant at every step.
    pub audit: bool,
    /// Store wall time in the record (which makes it non-reproducible).
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            label: "run".into(),
            audit: false,
            timing: false,
        }
    }
}

type OptimumKey = (String, u64);

fn optimum_cache() -> &'static Mutex<HashMap<OptimumKey, Arc<Optimum>>> {
    static CACHE: OnceLock<Mutex<HashMap<OptimumKey, Arc<Optimum>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Reference optimum of the configured problem, computed once per process
/// for each (problem hash, tolerance).
pub fn reference_optimum(cfg: &ExperimentConfig, built: &BuiltProblem) -> Result<Arc<Optimum>> {
    let key = (cfg.problem_hash(), cfg.optimum_tolerance.to_bits());
    if let Some(opt) = optimum_cache().lock().expect("cache lock").get(&key) {
        return Ok(opt.clone());
    }
    let opt = Arc::new(constrained_optimum(&built.problem, cfg.optimum_tolerance)?);
    Ok(optimum_cache().lock().expect("cache lock").entry(key).or_insert(opt).clone())
}

/// Loads, builds and runs a configuration.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, opts: &RunOptions) -> Result<RunRecord> {
    let built = cfg.build(base_dir)?;
    let optimum = reference_optimum(cfg, &built)?;
    run_built(cfg, &built, &optimum, opts)
}

struct Recorder<'a> {
    problem: &'a ProblemSpec,
    test: Option<&'a Dataset>,
    optimum: &'a Optimum,
    record_at: Vec<usize>,
    next: usize,
    series: Vec<SeriesPoint>,
    grads: GradientEstimates,
    sum_sq: f64,
}

impl StepObserver for Recorder<'_> {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        if view.feedback.fresh {
            let n = view.feedback.gradient.g.norm();
            self.grads.count += 1;
            self.grads.max_norm = self.grads.max_norm.max(n);
            self.sum_sq += n * n;
        }
        if self.record_at.get(self.next) == Some(&view.t) {
            self.next += 1;
            let excess_loss = self.problem.excess_loss(view.output, self.optimum)?;
            if !excess_loss.is_finite() {
                return Err(Error::Numeric {
                    step: view.t,
                    message: format!("excess loss is {excess_loss}"),
                });
            }
            self.series.push(SeriesPoint {
                t: view.t,
                excess_loss,
                accuracy: self.test.map(|d| accuracy(d, view.output)),
                eta: view.effective_step,
                tau: view.feedback.delay,
            });
        }
        Ok(())
    }
}

/// Step rule for the known-constants OGD baseline.
fn appendix_c_rule(problem: &ProblemSpec, grad_bound_sq: Option<f64>) -> Result<StepRule> {
    if let Some(g2) = grad_bound_sq {
        return Ok(StepRule::AppendixC { grad_bound_sq: g2 });
    }
    let m = problem.metadata();
    match (m.grad_bound, m.noise_variance) {
        (Some(g), Some(s2)) => Ok(StepRule::AppendixC {
            grad_bound_sq: 2.0 * g * g + 2.0 * s2,
        }),
        _ => Err(Error::config(
            "algorithm.grad_bound_sq",
            "required: the gradient or noise bound of this problem is not known",
        )),
    }
}

fn dispatch(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    observer: &mut dyn StepObserver,
) -> Result<RunOutcome> {
    let problem = &built.problem;
    let domain = problem.domain();
    let y0 = built.initial_point.clone().unwrap_or_else(|| domain.center());
    let setup = RunSetup {
        problem,
        schedule: cfg.delay.schedule(),
        weights: cfg.weights(),
        steps: cfg.iterations,
        streams: RunStreams::new(cfg.seed, 0),
        bounded_history: true,
    };
    match &cfg.algorithm {
        AlgorithmConfig::SgdConstant { lr } => {
            let mut ogd = OgdState::new(y0, StepRule::Constant(*lr), domain)?;
            delayed_sgd_run(&mut ogd, BaselineOutput::LastIterate, setup, observer)
        }
        AlgorithmConfig::OgdAppendixC { grad_bound_sq } => {
            let mut ogd = OgdState::new(y0, appendix_c_rule(problem, *grad_bound_sq)?, domain)?;
            delayed_sgd_run(&mut ogd, BaselineOutput::WeightedAverage, setup, observer)
        }
        AlgorithmConfig::AnytimeSgd { lr, step_rule } => {
            let rule = match step_rule {
                AnytimeStepRule::Decaying => StepRule::Decaying(*lr),
                AnytimeStepRule::Constant => StepRule::Constant(*lr),
            };
            let mut ogd = OgdState::new(y0, rule, domain)?;
            anytime_run(&mut ogd, setup, observer)
        }
        AlgorithmConfig::OptimisticAnytime {} => optimistic_anytime_run(Some(y0), setup, observer),
        AlgorithmConfig::ScOptimistic { h } => sc_run(*h, Some(y0), setup, observer),
        AlgorithmConfig::ScOptimisticDelayed { h } => sc_delayed_run(*h, Some(y0), setup, observer),
    }
}

/// Runs an already-built problem. Configuration errors are returned as
/// `Err`; failures during the run produce a record flagged invalid.
pub fn run_built(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    optimum: &Optimum,
    opts: &RunOptions,
) -> Result<RunRecord> {
    let start = Instant::now();
    let mut recorder = Recorder {
        problem: &built.problem,
        test: built.test.as_ref(),
        optimum,
        record_at: cfg.record_schedule().steps(cfg.iterations),
        next: 0,
        series: Vec::new(),
        grads: GradientEstimates::default(),
        sum_sq: 0.0,
    };
    let mut auditor = opts.audit.then(|| {
        Auditor::new(
            &built.problem,
            optimum,
            cfg.optimum_tolerance,
            &cfg.algorithm,
            cfg.weights(),
            cfg.iterations,
        )
    });
    let outcome = dispatch(cfg, built, &mut |view: &StepView<'_>| {
        recorder.observe(view)?;
        if let Some(a) = auditor.as_mut() {
            a.observe(view)?;
        }
        Ok(())
    })?;
    if let Some(Error::InvalidConfiguration { .. }) = outcome.error {
        return Err(outcome.error.expect("checked above"));
    }

    let finite = |v: f64| v.is_finite().then_some(v);
    let output_finite = outcome.output.iter().all(|v| v.is_finite());
    let final_excess_loss = if output_finite {
        built
            .problem
            .excess_loss(&outcome.output, optimum)
            .ok()
            .and_then(finite)
    } else {
        None
    };
    let final_accuracy = match (&built.test, output_finite) {
        (Some(d), true) => Some(accuracy(d, &outcome.output)),
        _ => None,
    };
    let mut grads = recorder.grads;
    if grads.count > 0 {
        grads.mean_sq_norm = recorder.sum_sq / grads.count as f64;
    }
    Ok(RunRecord {
        label: opts.label.clone(),
        algorithm: cfg.algorithm.name().to_string(),
        iterations: cfg.iterations,
        steps_completed: outcome.steps_completed,
        valid: outcome.is_valid(),
        error: outcome.error.as_ref().map(ErrorReport::from),
        final_excess_loss,
        final_accuracy,
        optimum_value: optimum.value,
        delay_stats: delay_stats(&outcome.delays).ok(),
        fresh_deliveries: outcome.fresh_deliveries,
        gradient_estimates: grads,
        output: outcome.output.iter().copied().collect(),
        config_hash: cfg.hash(),
        problem_hash: cfg.problem_hash(),
        rng: RNG_ALGORITHM.to_string(),
        wall_time_seconds: opts.timing.then(|| start.elapsed().as_secs_f64()),
        config: cfg.clone(),
        series: recorder.series,
    })
}
