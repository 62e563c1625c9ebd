//! Objectives, their noisy first-order oracles, and deterministic reference
//! optima.

mod dataset;

pub use dataset::{load_dataset, synth_classification, Dataset, DatasetFormat};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::domain::{ensure_finite, DomainSpec, Vector};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Noise added by the stochastic oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    None,
    /// Zero-mean Gaussian with total second moment `E||xi||^2 = sigma^2`,
    /// i.e. per-coordinate variance `sigma^2 / d`.
    Gaussian { sigma: f64 },
    /// Gradient of the loss on a fresh minibatch drawn uniformly without
    /// replacement. A batch at least as large as the dataset is exact.
    Sample { batch: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// `f(x) = 0.5 x'Ax - b'x`.
    Quadratic { a: DMatrix<f64>, b: Vector },
    /// Mean multinomial log loss plus `(lambda/2)||W||^2`. The parameter
    /// vector is the `classes x features` weight matrix flattened row-major.
    Logistic { data: Dataset, lambda: f64 },
}

/// Known or declared problem constants. `None` means unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProblemMetadata {
    pub smoothness: Option<f64>,
    pub strong_convexity: Option<f64>,
    pub grad_bound: Option<f64>,
    pub noise_variance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    objective: Objective,
    domain: DomainSpec,
    noise: NoiseModel,
    metadata: ProblemMetadata,
}

/// A gradient estimate together with the point it was evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSample {
    pub g: Vector,
    pub query: Vector,
    /// Index of the noise draw that produced this sample within its stream.
    pub sample_id: u64,
}

/// RNG stream dedicated to oracle noise, counting the draws it has served.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    rng: SeededRng,
    draws: u64,
}

impl NoiseSource {
    pub fn new(rng: SeededRng) -> Self {
        Self { rng, draws: 0 }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

fn validate_noise(noise: &NoiseModel, dataset_backed: bool) -> Result<()> {
    match *noise {
        NoiseModel::None => Ok(()),
        NoiseModel::Gaussian { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
        NoiseModel::Gaussian { sigma } => Err(Error::config(
            "noise.sigma",
            format!("must be finite and nonnegative, got {sigma}"),
        )),
        NoiseModel::Sample { .. } if !dataset_backed => Err(Error::config(
            "noise.kind",
            "sample noise requires a dataset-backed problem",
        )),
        NoiseModel::Sample { batch: 0 } => Err(Error::config("noise.batch", "must be positive")),
        NoiseModel::Sample { .. } => Ok(()),
    }
}

impl ProblemSpec {
    /// Quadratic `0.5 x'Ax - b'x` over `domain`. `A` must be symmetric PSD;
    /// smoothness and strong convexity are read off its spectrum and the
    /// gradient bound is `||A|| max_{x in K} ||x|| + ||b||`.
    pub fn quadratic(a: DMatrix<f64>, b: Vector, domain: DomainSpec, noise: NoiseModel) -> Result<Self> {
        let d = domain.dim();
        if a.nrows() != d || a.ncols() != d || b.len() != d {
            return Err(Error::InvalidArgument(format!(
                "quadratic of shape {}x{} with linear term of length {} does not match domain dimension {d}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("quadratic matrix has non-finite entries".into()));
        }
        ensure_finite(&b, "quadratic linear term")?;
        let scale = a.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "quadratic matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        validate_noise(&noise, false)?;
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let lmin = eig.min();
        let lmax = eig.max();
        if lmin < -1e-10 * scale {
            return Err(Error::InvalidArgument(format!(
                "quadratic matrix is not positive semidefinite (min eigenvalue {lmin:e})"
            )));
        }
        let metadata = ProblemMetadata {
            smoothness: Some(lmax),
            strong_convexity: Some(lmin.max(0.0)),
            grad_bound: Some(lmax * domain.max_norm() + b.norm()),
            noise_variance: noise_variance(&noise),
        };
        Ok(Self {
            objective: Objective::Quadratic { a, b },
            domain,
            noise,
            metadata,
        })
    }

    /// Multinomial logistic regression over the flattened weight matrix.
    pub fn logistic(data: Dataset, lambda: f64, domain: DomainSpec, noise: NoiseModel) -> Result<Self> {
        let d = data.classes() * data.feature_count();
        if domain.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "logistic model has {d} parameters but the domain has dimension {}",
                domain.dim()
            )));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config("problem.lambda", format!("must be nonnegative, got {lambda}")));
        }
        validate_noise(&noise, true)?;
        let metadata = ProblemMetadata {
            smoothness: None,
            strong_convexity: (lambda > 0.0).then_some(lambda),
            grad_bound: None,
            noise_variance: noise_variance(&noise),
        };
        Ok(Self {
            objective: Objective::Logistic { data, lambda },
            domain,
            noise,
            metadata,
        })
    }

    /// Overrides declared constants. Declared smoothness and strong convexity
    /// of a quadratic are checked against its spectrum.
    pub fn with_metadata(mut self, declared: ProblemMetadata) -> Result<Self> {
        if let Objective::Quadratic { .. } = self.objective {
            if let (Some(h), Some(actual)) = (declared.strong_convexity, self.metadata.strong_convexity) {
                if actual < h * (1.0 - 1e-9) {
                    return Err(Error::config(
                        "problem.strong_convexity",
                        format!("declared {h} exceeds the minimum eigenvalue {actual}"),
                    ));
                }
            }
            if let (Some(l), Some(actual)) = (declared.smoothness, self.metadata.smoothness) {
                if actual > l * (1.0 + 1e-9) {
                    return Err(Error::config(
                        "problem.smoothness",
                        format!("declared {l} is below the maximum eigenvalue {actual}"),
                    ));
                }
            }
        }
        let m = &mut self.metadata;
        m.smoothness = declared.smoothness.or(m.smoothness);
        m.strong_convexity = declared.strong_convexity.or(m.strong_convexity);
        m.grad_bound = declared.grad_bound.or(m.grad_bound);
        m.noise_variance = declared.noise_variance.or(m.noise_variance);
        Ok(self)
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn metadata(&self) -> &ProblemMetadata {
        &self.metadata
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        match &self.objective {
            Objective::Logistic { data, .. } => Some(data),
            Objective::Quadratic { .. } => None,
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {} but the problem has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn exact_grad(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(match &self.objective {
            Objective::Quadratic { a, b } => a * x - b,
            Objective::Logistic { data, lambda } => {
                let rows: Vec<usize> = (0..data.example_count()).collect();
                logistic_grad(data, *lambda, x, &rows)
            }
        })
    }

    /// Unbiased gradient estimate at `x`, drawing fresh noise from `source`.
    pub fn noisy_grad(&self, x: &Vector, source: &mut NoiseSource) -> Result<GradientSample> {
        self.check_dim(x)?;
        let sample_id = source.draws;
        source.draws += 1;
        let g = match (self.noise, &self.objective) {
            (NoiseModel::None, _) => self.exact_grad(x)?,
            (NoiseModel::Gaussian { sigma }, _) => {
                let mut g = self.exact_grad(x)?;
                if sigma > 0.0 {
                    let per_coord = Normal::new(0.0, sigma / (self.dim() as f64).sqrt())
                        .expect("finite positive std");
                    for gi in g.iter_mut() {
                        *gi += per_coord.sample(&mut source.rng);
                    }
                }
                g
            }
            (NoiseModel::Sample { batch }, Objective::Logistic { data, lambda }) => {
                let n = data.example_count();
                if batch >= n {
                    self.exact_grad(x)?
                } else {
                    let rows = index::sample(&mut source.rng, n, batch).into_vec();
                    logistic_grad(data, *lambda, x, &rows)
                }
            }
            (NoiseModel::Sample { .. }, Objective::Quadratic { .. }) => {
                return Err(Error::config(
                    "noise.kind",
                    "sample noise requires a dataset-backed problem",
                ))
            }
        };
        Ok(GradientSample {
            g,
            query: x.clone(),
            sample_id,
        })
    }

    /// Full deterministic objective value.
    pub fn loss(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.objective {
            Objective::Quadratic { a, b } => 0.5 * x.dot(&(a * x)) - b.dot(x),
            Objective::Logistic { data, lambda } => logistic_loss(data, *lambda, x),
        })
    }

    /// `f(x) - f(w*)`. For quadratics this is evaluated from the displacement
    /// `x - w*`, which avoids cancellation between two nearly equal values.
    pub fn excess_loss(&self, x: &Vector, optimum: &Optimum) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.objective {
            Objective::Quadratic { a, b } => {
                let delta = x - &optimum.point;
                let g_star = a * &optimum.point - b;
                g_star.dot(&delta) + 0.5 * delta.dot(&(a * &delta))
            }
            Objective::Logistic { .. } => self.loss(x)? - optimum.value,
        })
    }
}

fn noise_variance(noise: &NoiseModel) -> Option<f64> {
    match noise {
        NoiseModel::None => Some(0.0),
        NoiseModel::Gaussian { sigma } => Some(sigma * sigma),
        NoiseModel::Sample { .. } => None,
    }
}

/// Log-softmax of `logits` in place; returns nothing, leaves log-probabilities.
fn log_softmax(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    for l in logits.iter_mut() {
        *l -= lse;
    }
}

fn logits_for(data: &Dataset, w: &Vector, row: usize, out: &mut [f64]) {
    let p = data.feature_count();
    let z = data.features().row(row);
    for (c, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..p {
            s += w[c * p + j] * z[j];
        }
        *o = s;
    }
}

fn logistic_grad(data: &Dataset, lambda: f64, w: &Vector, rows: &[usize]) -> Vector {
    let p = data.feature_count();
    let classes = data.classes();
    let mut grad = Vector::zeros(classes * p);
    let mut logits = vec![0.0; classes];
    for &r in rows {
        logits_for(data, w, r, &mut logits);
        log_softmax(&mut logits);
        let z = data.features().row(r);
        let y = data.labels()[r];
        for c in 0..classes {
            let coef = logits[c].exp() - if c == y { 1.0 } else { 0.0 };
            if coef != 0.0 {
                for j in 0..p {
                    grad[c * p + j] += coef * z[j];
                }
            }
        }
    }
    grad /= rows.len() as f64;
    if lambda > 0.0 {
        grad.axpy(lambda, w, 1.0);
    }
    grad
}

fn logistic_loss(data: &Dataset, lambda: f64, w: &Vector) -> f64 {
    let mut logits = vec![0.0; data.classes()];
    let mut total = 0.0;
    for r in 0..data.example_count() {
        logits_for(data, w, r, &mut logits);
        log_softmax(&mut logits);
        total -= logits[data.labels()[r]];
    }
    total / data.example_count() as f64 + 0.5 * lambda * w.norm_squared()
}

/// Fraction of examples whose highest-scoring class (lowest index on ties)
/// matches the label.
pub fn accuracy(data: &Dataset, w: &Vector) -> f64 {
    let mut logits = vec![0.0; data.classes()];
    let mut correct = 0usize;
    for r in 0..data.example_count() {
        logits_for(data, w, r, &mut logits);
        let mut best = 0;
        for c in 1..logits.len() {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        if best == data.labels()[r] {
            correct += 1;
        }
    }
    correct as f64 / data.example_count() as f64
}

/// Reference minimiser of a problem over its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub point: Vector,
    pub value: f64,
    /// Certified upper bound on `f(point) - min f`.
    pub gap_bound: f64,
    pub iterations: usize,
}

const OPTIMUM_MAX_ITERATIONS: usize = 500_000;

/// Minimises the exact objective by projected gradient descent with
/// backtracking. The step never grows again once reduced: near the optimum the
/// sufficient-decrease test drowns in rounding noise and would otherwise
/// accept oversized steps. Stops once the gradient-mapping certificate
/// `||G|| * diameter` falls below `tolerance`, then keeps iterating while the
/// iterate still moves to squeeze out remaining rounding-level error.
pub fn constrained_optimum(problem: &ProblemSpec, tolerance: f64) -> Result<Optimum> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    let domain = problem.domain();
    let diam = domain.diameter();
    let mut x = domain.center();
    let mut fx = problem.loss(&x)?;
    let mut step = problem
        .metadata()
        .smoothness
        .filter(|l| *l > 0.0)
        .map_or(1.0, |l| 1.0 / l);
    let mut certified: Option<(usize, f64)> = None;
    let mut residual = f64::INFINITY;
    for k in 0..OPTIMUM_MAX_ITERATIONS {
        let g = problem.exact_grad(&x)?;
        let (next, fnext) = loop {
            let cand = domain.project(&(&x - &g * step))?;
            let d = &cand - &x;
            let fc = problem.loss(&cand)?;
            let model = fx + g.dot(&d) + d.norm_squared() / (2.0 * step);
            let rounding = 1e-15 * fx.abs().max(1.0);
            // A move whose predicted change is below rounding cannot be tested.
            let untestable = d.norm_squared() / (2.0 * step) <= rounding;
            if fc <= model + rounding || untestable || step < 1e-30 {
                break (cand, fc);
            }
            step *= 0.5;
        };
        let moved = (&next - &x).norm();
        residual = moved / step * diam;
        match certified {
            None if residual <= tolerance => certified = Some((k, residual)),
            Some((at, _)) => {
                let polish_done = moved <= 4.0 * f64::EPSILON * (1.0 + x.norm()) || k >= 2 * at + 1000;
                if polish_done || fnext > fx {
                    let value = problem.loss(&x)?;
                    return Ok(Optimum {
                        point: x,
                        value,
                        gap_bound: certified.map_or(residual, |c| c.1.min(residual)),
                        iterations: k,
                    });
                }
            }
            None => {}
        }
        x = next;
        fx = fnext;
    }
    if let Some((_, bound)) = certified {
        let value = problem.loss(&x)?;
        return Ok(Optimum {
            point: x,
            value,
            gap_bound: bound,
            iterations: OPTIMUM_MAX_ITERATIONS,
        });
    }
    Err(Error::OptimizerFailure {
        iterations: OPTIMUM_MAX_ITERATIONS,
        residual,
    })
}

/// Quadratic `(A, b)` with spectrum spread evenly over
/// `[strong_convexity, smoothness]` in a random orthonormal basis, and
/// unconstrained minimizer `A^{-1} b` of norm `optimum_norm` in a random
/// direction.
pub fn random_quadratic(
    dim: usize,
    smoothness: f64,
    strong_convexity: f64,
    optimum_norm: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, Vector)> {
    if dim == 0 {
        return Err(Error::config("problem.dim", "must be positive"));
    }
    if !(strong_convexity.is_finite() && strong_convexity >= 0.0 && smoothness.is_finite() && smoothness >= strong_convexity && smoothness > 0.0) {
        return Err(Error::config(
            "problem.smoothness",
            format!("need 0 <= strong_convexity <= smoothness, got [{strong_convexity}, {smoothness}]"),
        ));
    }
    if !(optimum_norm.is_finite() && optimum_norm >= 0.0) {
        return Err(Error::config("problem.optimum_norm", format!("must be nonnegative, got {optimum_norm}")));
    }
    let mut rng = crate::rng::stream(seed, 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let g = DMatrix::from_fn(dim, dim, |_, _| normal.sample(&mut rng));
    let q = g.qr().q();
    let spectrum = Vector::from_fn(dim, |i, _| {
        if dim == 1 {
            smoothness
        } else {
            strong_convexity + (smoothness - strong_convexity) * i as f64 / (dim - 1) as f64
        }
    });
    let a = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let mut direction = Vector::from_fn(dim, |_, _| normal.sample(&mut rng));
    direction /= direction.norm();
    let b = &a * direction * optimum_norm;
    Ok((a, b))
}
