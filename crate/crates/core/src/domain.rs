//! Compact convex feasible sets: Euclidean projection, exact diameter and a
//! canonical interior starting point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real coordinate vector.
pub type Vector = DVector<f64>;

/// Convergence tolerance on the iterate change between two Dykstra cycles.
pub const DYKSTRA_TOLERANCE: f64 = 1e-10;
/// Maximum number of Dykstra cycles before giving up on further refinement.
pub const DYKSTRA_MAX_CYCLES: usize = 10_000;

/// Upper bound on the number of constraint subsets inspected when enumerating
/// polytope vertices.
const MAX_VERTEX_SUBSETS: u64 = 200_000;

pub(crate) fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{what} has a non-finite entry at index {i}"
        )));
    }
    Ok(())
}

/// One closed halfspace `{x : normal·x <= offset}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Vector,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
    /// `{x >= 0 : sum(x) = scale}`.
    Simplex { scale: f64 },
    /// Bounded intersection of halfspaces. Vertices are enumerated once at
    /// construction; they back the exact diameter and the centroid.
    Polytope {
        halfspaces: Vec<Halfspace>,
        vertices: Vec<Vector>,
    },
}

/// A validated, nonempty, bounded convex domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    kind: DomainKind,
    dim: usize,
    diameter: f64,
}

impl DomainSpec {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidArgument("ball dimension must be positive".into()));
        }
        ensure_finite(&center, "ball center")?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        let dim = center.len();
        Ok(Self {
            kind: DomainKind::Ball { center, radius },
            dim,
            diameter: 2.0 * radius,
        })
    }

    /// Ball of the given radius centred at the origin.
    pub fn origin_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(Vector::zeros(dim), radius)
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "box bounds must have equal positive length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        ensure_finite(&lower, "box lower bound")?;
        ensure_finite(&upper, "box upper bound")?;
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::InvalidArgument(format!(
                "box lower bound exceeds upper bound at coordinate {i}"
            )));
        }
        let diameter = (&upper - &lower).norm();
        if diameter <= 0.0 {
            return Err(Error::InvalidArgument("box must have positive diameter".into()));
        }
        let dim = lower.len();
        Ok(Self {
            kind: DomainKind::Box { lower, upper },
            dim,
            diameter,
        })
    }

    pub fn simplex(dim: usize, scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(
                "simplex needs dimension >= 2 to have positive diameter".into(),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "simplex scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self {
            kind: DomainKind::Simplex { scale },
            dim,
            diameter: scale * std::f64::consts::SQRT_2,
        })
    }

    /// Intersection of `normal·x <= offset` constraints. Rejects empty and
    /// unbounded intersections.
    pub fn halfspaces(halfspaces: Vec<Halfspace>) -> Result<Self> {
        let dim = halfspaces
            .first()
            .map(|h| h.normal.len())
            .ok_or_else(|| Error::UnsupportedDomain("no halfspaces given".into()))?;
        if dim == 0 {
            return Err(Error::InvalidArgument("halfspace dimension must be positive".into()));
        }
        for (i, h) in halfspaces.iter().enumerate() {
            if h.normal.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "halfspace {i} has dimension {} but expected {dim}",
                    h.normal.len()
                )));
            }
            ensure_finite(&h.normal, "halfspace normal")?;
            if !h.offset.is_finite() {
                return Err(Error::InvalidArgument(format!("halfspace {i} has a non-finite offset")));
            }
            if h.normal.norm() == 0.0 {
                return Err(Error::InvalidArgument(format!("halfspace {i} has a zero normal")));
            }
        }
        check_bounded(&halfspaces, dim)?;
        let vertices = enumerate_vertices(&halfspaces, dim)?;
        if vertices.is_empty() {
            return Err(Error::UnsupportedDomain("halfspace intersection is empty".into()));
        }
        let mut diameter: f64 = 0.0;
        for (i, a) in vertices.iter().enumerate() {
            for b in &vertices[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        if diameter <= 0.0 {
            return Err(Error::UnsupportedDomain(
                "halfspace intersection is a single point".into(),
            ));
        }
        Ok(Self {
            kind: DomainKind::Polytope {
                halfspaces,
                vertices,
            },
            dim,
            diameter,
        })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact supremum distance between two points of the domain.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// A canonical point of the domain: ball center, box midpoint, simplex
    /// barycenter, or the vertex centroid of a polytope.
    pub fn center(&self) -> Vector {
        match &self.kind {
            DomainKind::Ball { center, .. } => center.clone(),
            DomainKind::Box { lower, upper } => (lower + upper) * 0.5,
            DomainKind::Simplex { scale } => Vector::from_element(self.dim, scale / self.dim as f64),
            DomainKind::Polytope { vertices, .. } => {
                let mut c = Vector::zeros(self.dim);
                for v in vertices {
                    c += v;
                }
                c / vertices.len() as f64
            }
        }
    }

    /// Largest Euclidean norm attained on the domain.
    pub fn max_norm(&self) -> f64 {
        match &self.kind {
            DomainKind::Ball { center, radius } => center.norm() + radius,
            DomainKind::Box { lower, upper } => lower
                .iter()
                .zip(upper.iter())
                .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            DomainKind::Simplex { scale } => *scale,
            DomainKind::Polytope { vertices, .. } => {
                vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
        }
    }

    /// Two domain points realising the diameter.
    pub fn diameter_witnesses(&self) -> (Vector, Vector) {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                let mut e = Vector::zeros(self.dim);
                e[0] = *radius;
                (center + &e, center - &e)
            }
            DomainKind::Box { lower, upper } => (lower.clone(), upper.clone()),
            DomainKind::Simplex { scale } => {
                let mut a = Vector::zeros(self.dim);
                let mut b = Vector::zeros(self.dim);
                a[0] = *scale;
                b[1] = *scale;
                (a, b)
            }
            DomainKind::Polytope { vertices, .. } => {
                let mut best = (0, 0, -1.0);
                for i in 0..vertices.len() {
                    for j in i + 1..vertices.len() {
                        let d = (&vertices[i] - &vertices[j]).norm();
                        if d > best.2 {
                            best = (i, j, d);
                        }
                    }
                }
                (vertices[best.0].clone(), vertices[best.1].clone())
            }
        }
    }

    /// Membership test. Polytope membership allows a violation of 1e-12 per
    /// unit normal (scaled by the point magnitude) so projected points are
    /// recognised as members.
    pub fn contains(&self, p: &Vector) -> bool {
        if p.len() != self.dim {
            return false;
        }
        match &self.kind {
            DomainKind::Ball { center, radius } => (p - center).norm() <= *radius,
            DomainKind::Box { lower, upper } => {
                (0..self.dim).all(|i| lower[i] <= p[i] && p[i] <= upper[i])
            }
            DomainKind::Simplex { scale } => in_simplex(p, *scale),
            DomainKind::Polytope { halfspaces, .. } => {
                let slack = polytope_slack(p);
                halfspaces
                    .iter()
                    .all(|h| h.normal.dot(p) - h.offset <= slack * h.normal.norm())
            }
        }
    }

    /// Projects the result of an update at step `t`; an update that overflowed
    /// is reported as a numeric failure of that step.
    pub(crate) fn project_update(&self, p: &Vector, t: usize) -> Result<Vector> {
        if let Some(i) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: t,
                message: format!("update produced a non-finite coordinate {} at index {i}", p[i]),
            });
        }
        self.project(p)
    }

    /// Euclidean projection onto the domain. Points already inside are
    /// returned unchanged, so `project(project(p)) == project(p)` bit for bit.
    ///
    /// Polytope projections run Dykstra's alternating projections and then
    /// solve exactly on the detected active set. If that point fails the KKT
    /// check, every small active set is tried; only when there are too many
    /// is the Dykstra iterate returned, accurate to roughly
    /// `DYKSTRA_TOLERANCE`.
    pub fn project(&self, p: &Vector) -> Result<Vector> {
        if p.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {} but domain has dimension {}",
                p.len(),
                self.dim
            )));
        }
        ensure_finite(p, "point")?;
        if self.contains(p) {
            return Ok(p.clone());
        }
        Ok(match &self.kind {
            DomainKind::Ball { center, radius } => project_ball(p, center, *radius),
            DomainKind::Box { lower, upper } => {
                Vector::from_fn(self.dim, |i, _| p[i].clamp(lower[i], upper[i]))
            }
            DomainKind::Simplex { scale } => {
                let mut q = project_simplex(p, *scale);
                for _ in 0..3 {
                    if in_simplex(&q, *scale) {
                        break;
                    }
                    q = project_simplex(&q, *scale);
                }
                q
            }
            DomainKind::Polytope { halfspaces, .. } => project_polytope(p, halfspaces),
        })
    }
}

fn project_ball(p: &Vector, center: &Vector, radius: f64) -> Vector {
    let offset = p - center;
    let n = offset.norm();
    let mut q = center + offset * (radius / n);
    // Rounding can leave the scaled point a hair outside the sphere; shrink
    // toward the center until the membership test holds exactly.
    let mut shrink = 1.0 - f64::EPSILON;
    while (&q - center).norm() > radius {
        q = center + (&q - center) * shrink;
        shrink *= 1.0 - f64::EPSILON;
    }
    q
}

fn in_simplex(p: &Vector, scale: f64) -> bool {
    p.iter().all(|&x| x >= 0.0) && (p.sum() - scale).abs() <= 1e-12 * scale
}

/// Sort-and-threshold projection onto `{x >= 0 : sum(x) = scale}`.
pub(crate) fn project_simplex(p: &Vector, scale: f64) -> Vector {
    let mut u: Vec<f64> = p.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - scale) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    p.map(|x| (x - theta).max(0.0))
}

fn polytope_slack(p: &Vector) -> f64 {
    1e-12 * (1.0 + p.amax())
}

fn project_halfspace(z: &Vector, h: &Halfspace) -> Vector {
    let excess = h.normal.dot(z) - h.offset;
    if excess <= 0.0 {
        z.clone()
    } else {
        z - &h.normal * (excess / h.normal.norm_squared())
    }
}

fn project_polytope(p: &Vector, halfspaces: &[Halfspace]) -> Vector {
    let m = halfspaces.len();
    let mut x = p.clone();
    let mut corrections = vec![Vector::zeros(p.len()); m];
    for _ in 0..DYKSTRA_MAX_CYCLES {
        let start = x.clone();
        let mut correction_change = 0.0;
        for (h, c) in halfspaces.iter().zip(corrections.iter_mut()) {
            let shifted = &x + &*c;
            let next = project_halfspace(&shifted, h);
            let updated = shifted - &next;
            correction_change += (&updated - &*c).norm();
            *c = updated;
            x = next;
        }
        // The iterate alone can stall for a cycle before convergence.
        if (&x - &start).norm() <= DYKSTRA_TOLERANCE && correction_change <= DYKSTRA_TOLERANCE {
            break;
        }
    }
    let active: Vec<&Halfspace> = halfspaces
        .iter()
        .filter(|h| h.normal.dot(&x) - h.offset >= -1e-7 * h.normal.norm() * (1.0 + x.amax()))
        .collect();
    kkt_point(p, &active, halfspaces)
        .or_else(|| enumerate_active_sets(p, halfspaces))
        .unwrap_or(x)
}

/// Projection of `p` onto the affine hull of `active`, accepted only if it is
/// feasible and its KKT multipliers are nonnegative, i.e. it is the exact
/// projection onto the polytope.
fn kkt_point(p: &Vector, active: &[&Halfspace], halfspaces: &[Halfspace]) -> Option<Vector> {
    if active.is_empty() || active.len() > p.len() {
        return None;
    }
    let k = active.len();
    let n = DMatrix::from_fn(k, p.len(), |i, j| active[i].normal[j]);
    let rhs = DVector::from_fn(k, |i, _| active[i].normal.dot(p) - active[i].offset);
    let gram = &n * n.transpose();
    let lambda = gram.lu().solve(&rhs)?;
    if lambda.iter().any(|&l| !(l.is_finite() && l >= -1e-12)) {
        return None;
    }
    let z = p - n.transpose() * lambda;
    let slack = polytope_slack(&z);
    halfspaces
        .iter()
        .all(|h| h.normal.dot(&z) - h.offset <= slack * h.normal.norm())
        .then_some(z)
}

/// Exact projection by trying every active set of at most `dim` constraints;
/// `None` when there are too many subsets.
fn enumerate_active_sets(p: &Vector, halfspaces: &[Halfspace]) -> Option<Vector> {
    let (m, dim) = (halfspaces.len(), p.len());
    let max_k = dim.min(m);
    let total = (1..=max_k).fold(0u64, |acc, k| acc.saturating_add(binomial(m, k)));
    if total > MAX_VERTEX_SUBSETS {
        return None;
    }
    let mut best: Option<(f64, Vector)> = None;
    for k in 1..=max_k {
        for_each_subset(m, k, |rows| {
            let active: Vec<&Halfspace> = rows.iter().map(|&r| &halfspaces[r]).collect();
            if let Some(z) = kkt_point(p, &active, halfspaces) {
                let d = (&z - p).norm();
                if best.as_ref().is_none_or(|b| d < b.0) {
                    best = Some((d, z));
                }
            }
        });
    }
    best.map(|b| b.1)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn constraint_matrix(halfspaces: &[Halfspace], rows: &[usize], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), dim, |i, j| halfspaces[rows[i]].normal[j])
}

/// A nonempty polyhedron `{Ax <= b}` is bounded iff its recession cone
/// `{Ay <= 0}` is trivial: `A` must have full column rank and the cone must
/// have no extreme ray (a direction fixed by `dim - 1` independent active rows).
fn check_bounded(halfspaces: &[Halfspace], dim: usize) -> Result<()> {
    let m = halfspaces.len();
    let all: Vec<usize> = (0..m).collect();
    let a = constraint_matrix(halfspaces, &all, dim);
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < dim {
        return Err(Error::UnsupportedDomain(
            "halfspace intersection is unbounded (normals do not span the space)".into(),
        ));
    }
    if binomial(m, dim - 1) > MAX_VERTEX_SUBSETS {
        return Err(Error::UnsupportedDomain(
            "too many halfspaces to certify boundedness".into(),
        ));
    }
    let mut unbounded = false;
    for_each_subset(m, dim - 1, |rows| {
        if unbounded {
            return;
        }
        // Null direction of the selected rows: pad to a square matrix and take
        // the right singular vector of the smallest singular value.
        let mut sq = DMatrix::zeros(dim, dim);
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..dim {
                sq[(i, j)] = halfspaces[r].normal[j];
            }
        }
        let svd = sq.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let second_smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != min_idx)
            .map(|(_, s)| *s)
            .fold(f64::INFINITY, f64::min);
        let scale = svd.singular_values.iter().copied().fold(1.0, f64::max);
        if dim > 1 && second_smallest <= 1e-10 * scale {
            // Rows are dependent; no unique direction from this subset.
            return;
        }
        let y = v_t.row(min_idx).transpose();
        for sign in [1.0, -1.0] {
            let dir = &y * sign;
            if halfspaces
                .iter()
                .all(|h| h.normal.dot(&dir) <= 1e-10 * h.normal.norm())
            {
                unbounded = true;
            }
        }
    });
    if unbounded {
        return Err(Error::UnsupportedDomain(
            "halfspace intersection is unbounded".into(),
        ));
    }
    Ok(())
}

fn enumerate_vertices(halfspaces: &[Halfspace], dim: usize) -> Result<Vec<Vector>> {
    let m = halfspaces.len();
    if binomial(m, dim) > MAX_VERTEX_SUBSETS {
        return Err(Error::UnsupportedDomain(
            "too many halfspaces for exact vertex enumeration".into(),
        ));
    }
    let mut vertices: Vec<Vector> = Vec::new();
    for_each_subset(m, dim, |rows| {
        let a = constraint_matrix(halfspaces, rows, dim);
        let b = DVector::from_fn(dim, |i, _| halfspaces[rows[i]].offset);
        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if sv.iter().any(|&s| s <= 1e-10 * smax) {
            return;
        }
        let Some(x) = a.lu().solve(&b) else { return };
        let tol = 1e-9 * (1.0 + x.amax());
        let feasible = halfspaces
            .iter()
            .all(|h| h.normal.dot(&x) - h.offset <= tol * h.normal.norm());
        if feasible && !vertices.iter().any(|v| (v - &x).norm() <= tol) {
            vertices.push(x);
        }
    });
    Ok(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
                assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
            }};
        }
        pub(crate) use assert_close;
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn unit_square() -> DomainSpec {
        let hs = vec![
            Halfspace { normal: v(&[1.0, 0.0]), offset: 1.0 },
            Halfspace { normal: v(&[-1.0, 0.0]), offset: 0.0 },
            Halfspace { normal: v(&[0.0, 1.0]), offset: 1.0 },
            Halfspace { normal: v(&[0.0, -1.0]), offset: 0.0 },
        ];
        DomainSpec::halfspaces(hs).unwrap()
    }

    #[test]
    fn ball_projection_scales_radially() {
        let d = DomainSpec::origin_ball(2, 1.0).unwrap();
        let p = d.project(&v(&[3.0, 4.0])).unwrap();
        assert_close!(p[0], 0.6, 1e-15);
        assert_close!(p[1], 0.8, 1e-15);
    }

    #[test]
    fn interior_points_are_fixed() {
        let p = v(&[0.2, 0.3]);
        for d in [
            DomainSpec::origin_ball(2, 1.0).unwrap(),
            DomainSpec::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap(),
            unit_square(),
        ] {
            assert_eq!(d.project(&p).unwrap(), p);
        }
        let s = DomainSpec::simplex(3, 1.0).unwrap();
        let q = v(&[0.25, 0.25, 0.5]);
        assert_eq!(s.project(&q).unwrap(), q);
    }

    #[test]
    fn simplex_projection_matches_grid_search() {
        // Brute-force oracle: minimise ||x - y|| over a fine grid on the
        // 2-simplex, then refine once around the best cell.
        let y = v(&[0.5, 0.5, 0.8]);
        let dist = |a: f64, b: f64| {
            let c = 1.0 - a - b;
            ((a - y[0]).powi(2) + (b - y[1]).powi(2) + (c - y[2]).powi(2)).sqrt()
        };
        let mut best = (0.0, 0.0, f64::INFINITY);
        let n = 2000;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                let dd = dist(a, b);
                if dd < best.2 {
                    best = (a, b, dd);
                }
            }
        }
        let h = 1.0 / n as f64;
        let m = 400;
        let (a0, b0) = (best.0, best.1);
        for i in 0..=2 * m {
            for j in 0..=2 * m {
                let a = a0 - h + i as f64 * h / m as f64;
                let b = b0 - h + j as f64 * h / m as f64;
                if a < 0.0 || b < 0.0 || a + b > 1.0 {
                    continue;
                }
                let dd = dist(a, b);
                if dd < best.2 {
                    best = (a, b, dd);
                }
            }
        }
        // Frozen from the grid oracle: (7/30, 7/30, 8/15).
        assert_close!(best.0, 7.0 / 30.0, 1e-6);
        assert_close!(best.1, 7.0 / 30.0, 1e-6);

        let s = DomainSpec::simplex(3, 1.0).unwrap();
        let p = s.project(&y).unwrap();
        assert_close!(p[0], best.0, 1e-6);
        assert_close!(p[1], best.1, 1e-6);
        assert_close!(p[2], 1.0 - best.0 - best.1, 1e-6);
    }

    #[test]
    fn diameters() {
        assert_eq!(DomainSpec::origin_ball(3, 1.0).unwrap().diameter(), 2.0);
        assert_eq!(DomainSpec::boxed(v(&[0.0, 0.0]), v(&[3.0, 4.0])).unwrap().diameter(), 5.0);
        // Pairwise vertex distances of the scaled simplex.
        let s = DomainSpec::simplex(3, 2.0).unwrap();
        let mut vmax: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut a = Vector::zeros(3);
                let mut b = Vector::zeros(3);
                a[i] = 2.0;
                b[j] = 2.0;
                vmax = vmax.max((a - b).norm());
            }
        }
        assert_close!(s.diameter(), vmax, 1e-15);
        assert_close!(s.diameter(), 2.0 * 2f64.sqrt(), 1e-15);
        assert_close!(unit_square().diameter(), 2f64.sqrt(), 1e-12);
    }

    #[test]
    fn centers() {
        assert_eq!(DomainSpec::ball(v(&[1.0, 1.0]), 2.0).unwrap().center(), v(&[1.0, 1.0]));
        assert_eq!(DomainSpec::boxed(v(&[0.0, 0.0]), v(&[2.0, 4.0])).unwrap().center(), v(&[1.0, 2.0]));
        assert_eq!(DomainSpec::simplex(4, 1.0).unwrap().center(), v(&[0.25; 4]));
        let c = unit_square().center();
        assert_close!(c[0], 0.5, 1e-12);
        assert_close!(c[1], 0.5, 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let d = DomainSpec::origin_ball(2, 1.0).unwrap();
        assert!(matches!(d.project(&v(&[1.0])), Err(Error::InvalidArgument(_))));
        assert!(matches!(d.project(&v(&[f64::NAN, 0.0])), Err(Error::InvalidArgument(_))));
        assert!(DomainSpec::boxed(v(&[1.0]), v(&[0.0])).is_err());
        assert!(DomainSpec::origin_ball(2, 0.0).is_err());
    }

    #[test]
    fn unbounded_halfspaces_rejected() {
        let hs = vec![
            Halfspace { normal: v(&[1.0, 0.0]), offset: 1.0 },
            Halfspace { normal: v(&[0.0, 1.0]), offset: 1.0 },
            Halfspace { normal: v(&[-1.0, 0.0]), offset: 0.0 },
        ];
        assert!(matches!(DomainSpec::halfspaces(hs), Err(Error::UnsupportedDomain(_))));
        let one_sided = vec![Halfspace { normal: v(&[1.0]), offset: 1.0 }];
        assert!(matches!(DomainSpec::halfspaces(one_sided), Err(Error::UnsupportedDomain(_))));
        let empty = vec![
            Halfspace { normal: v(&[1.0]), offset: 0.0 },
            Halfspace { normal: v(&[-1.0]), offset: -1.0 },
        ];
        assert!(DomainSpec::halfspaces(empty).is_err());
    }

    #[test]
    fn polytope_projection_matches_box_clamp() {
        let sq = unit_square();
        let bx = DomainSpec::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        for p in [v(&[2.0, 0.5]), v(&[-1.0, 3.0]), v(&[0.3, -0.2]), v(&[5.0, 5.0])] {
            let a = sq.project(&p).unwrap();
            let b = bx.project(&p).unwrap();
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn triangle_polytope() {
        // x >= 0, y >= 0, x + y <= 1
        let hs = vec![
            Halfspace { normal: v(&[-1.0, 0.0]), offset: 0.0 },
            Halfspace { normal: v(&[0.0, -1.0]), offset: 0.0 },
            Halfspace { normal: v(&[1.0, 1.0]), offset: 1.0 },
        ];
        let t = DomainSpec::halfspaces(hs).unwrap();
        assert_close!(t.diameter(), 2f64.sqrt(), 1e-12);
        let p = t.project(&v(&[1.0, 1.0])).unwrap();
        assert_close!(p[0], 0.5, 1e-12);
        assert_close!(p[1], 0.5, 1e-12);
    }

    #[test]
    fn cut_cube_projection_is_optimal_against_every_vertex() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let mut hs = Vec::new();
            for i in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut n = Vector::zeros(3);
                    n[i] = sign;
                    hs.push(Halfspace { normal: n, offset: 1.0 });
                }
            }
            for _ in 0..rng.random_range(1..=3) {
                let n = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                hs.push(Halfspace { normal: n, offset: rng.random_range(0.1..1.0) });
            }
            let vertices = enumerate_vertices(&hs, 3).unwrap();
            let d = DomainSpec::halfspaces(hs).unwrap();
            let p = Vector::from_fn(3, |_, _| rng.random_range(-4.0..4.0));
            let z = d.project(&p).unwrap();
            assert!(d.contains(&z));
            assert_eq!(d.project(&z).unwrap(), z);
            for u in &vertices {
                assert!((&p - &z).dot(&(u - &z)) <= 1e-9);
            }
        }
    }

    #[test]
    fn subset_enumeration() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[5], vec![2, 3]);
        let mut count = 0;
        for_each_subset(3, 0, |s| {
            assert!(s.is_empty());
            count += 1;
        });
        assert_eq!(count, 1);
        assert_eq!(binomial(10, 3), 120);
    }
}
