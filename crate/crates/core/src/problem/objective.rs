//! Objectives and their gradient oracles.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{pairwise_sum, pairwise_vector_sum, RealVector};

/// Analytic smoothness bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    /// Lipschitz constant of the full gradient.
    pub global: f64,
    /// Mean of the per-component constants.
    pub mean_component: f64,
    /// Largest per-component constant.
    pub max_component: f64,
}

/// A smooth function with an exact gradient.
pub trait SmoothObjective: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &RealVector) -> Result<f64>;

    fn full_gradient(&self, x: &RealVector) -> Result<RealVector>;

    fn smoothness(&self) -> Smoothness;

    /// Lower bound on the strong-convexity modulus (0 when unknown).
    fn strong_convexity(&self) -> f64;

    /// Closed-form minimiser, when one is cheap to compute.
    fn exact_minimizer(&self) -> Option<RealVector> {
        None
    }
}

/// `f(x) = (1/m) sum_j f_j(x)` with per-component gradients.
pub trait FiniteSumObjective: SmoothObjective {
    fn num_components(&self) -> usize;

    /// Adds `scale * grad f_j(x)` into `out`. Bounds and dimensions are checked by callers.
    fn accumulate_component_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// `(1/b) sum_{j in batch} grad f_j(x)`.
    fn minibatch_gradient(&self, batch: &[usize], x: &RealVector) -> Result<RealVector> {
        self.check_batch(batch)?;
        check_dim(self.dim(), x.dim())?;
        let scale = 1.0 / batch.len() as f64;
        Ok(pairwise_vector_sum(self.dim(), batch.len(), &mut |i, acc| {
            self.accumulate_component_gradient(batch[i], x.as_slice(), scale, acc)
        }))
    }

    /// `(1/b) sum_{j in batch} (grad f_j(x_new) - grad f_j(x_old))`, the same batch at both points.
    fn minibatch_delta(
        &self,
        batch: &[usize],
        x_new: &RealVector,
        x_old: &RealVector,
    ) -> Result<RealVector> {
        self.check_batch(batch)?;
        check_dim(self.dim(), x_new.dim())?;
        check_dim(self.dim(), x_old.dim())?;
        let scale = 1.0 / batch.len() as f64;
        Ok(pairwise_vector_sum(self.dim(), batch.len(), &mut |i, acc| {
            self.accumulate_component_gradient(batch[i], x_new.as_slice(), scale, acc);
            self.accumulate_component_gradient(batch[i], x_old.as_slice(), -scale, acc);
        }))
    }

    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let len = self.num_components();
        match batch.iter().find(|&&j| j >= len) {
            Some(&index) => Err(Error::InvalidIndex { index, len }),
            None => Ok(()),
        }
    }
}

/// Stable `log(1 + exp(s))`.
pub(crate) fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Stable logistic sigmoid.
pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// L2-regularised logistic regression:
/// `f_j(x) = -y_j log h(x, a_j) - (1 - y_j) log(1 - h(x, a_j)) + eta |x|^2`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    data: Arc<Dataset>,
    eta: f64,
}

impl LogisticObjective {
    pub fn new(data: Arc<Dataset>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be >= 0, got {eta}")));
        }
        Ok(Self { data, eta })
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn margin(&self, j: usize, x: &[f64]) -> f64 {
        self.data.row(j).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

impl SmoothObjective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &RealVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        // -y log s(t) - (1-y) log(1-s(t)) = softplus(t) - y t
        let losses: Vec<f64> = (0..self.data.len())
            .map(|j| {
                let t = self.margin(j, x.as_slice());
                softplus(t) - self.data.label(j) * t
            })
            .collect();
        Ok(pairwise_sum(&losses) / self.data.len() as f64 + self.eta * x.norm_sq())
    }

    fn full_gradient(&self, x: &RealVector) -> Result<RealVector> {
        check_dim(self.dim(), x.dim())?;
        let m = self.data.len();
        let scale = 1.0 / m as f64;
        Ok(pairwise_vector_sum(self.dim(), m, &mut |j, acc| {
            self.accumulate_component_gradient(j, x.as_slice(), scale, acc)
        }))
    }

    fn smoothness(&self) -> Smoothness {
        let d = self.dim();
        let m = self.data.len();
        let per_sample: Vec<f64> = (0..m)
            .map(|j| 0.25 * self.data.row(j).iter().map(|v| v * v).sum::<f64>() + 2.0 * self.eta)
            .collect();
        // Hessian <= (1/4m) A^T A + 2 eta I
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for j in 0..m {
            let row = DVector::from_column_slice(self.data.row(j));
            gram.ger(1.0, &row, &row, 1.0);
        }
        gram /= m as f64;
        let top = gram
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        Smoothness {
            global: 0.25 * top + 2.0 * self.eta,
            mean_component: pairwise_sum(&per_sample) / m as f64,
            max_component: per_sample.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn strong_convexity(&self) -> f64 {
        2.0 * self.eta
    }
}

impl FiniteSumObjective for LogisticObjective {
    fn num_components(&self) -> usize {
        self.data.len()
    }

    fn accumulate_component_gradient(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let row = self.data.row(j);
        let t: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        let coef = scale * (sigmoid(t) - self.data.label(j));
        let reg = scale * 2.0 * self.eta;
        for ((o, a), xi) in out.iter_mut().zip(row).zip(x) {
            *o += coef * a + reg * xi;
        }
    }
}

/// `f(x) = 1/2 x^T A x - b^T x` with symmetric positive semidefinite `A`; a single component.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    matrix: DMatrix<f64>,
    linear: RealVector,
    eigenvalues: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(rows: Vec<Vec<f64>>, linear: RealVector) -> Result<Self> {
        let d = linear.dim();
        if d == 0 || rows.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rows.len(),
            });
        }
        for row in &rows {
            check_dim(d, row.len())?;
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        for i in 0..d {
            for j in 0..d {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig("quadratic matrix is not symmetric".into()));
                }
            }
        }
        let mut eigenvalues: Vec<f64> = matrix.symmetric_eigenvalues().iter().cloned().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues[0] < -1e-12 {
            return Err(Error::InvalidConfig(format!(
                "quadratic matrix has negative eigenvalue {}",
                eigenvalues[0]
            )));
        }
        Ok(Self {
            matrix,
            linear,
            eigenvalues,
        })
    }

    pub fn diagonal(diag: &[f64], linear: RealVector) -> Result<Self> {
        let d = diag.len();
        let rows = (0..d)
            .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        Self::new(rows, linear)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.linear.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)] * x[j]).sum())
            .collect()
    }
}

impl SmoothObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn value(&self, x: &RealVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        let ax = RealVector::from(self.apply(x.as_slice()));
        Ok(0.5 * x.dot(&ax) - self.linear.dot(x))
    }

    fn full_gradient(&self, x: &RealVector) -> Result<RealVector> {
        check_dim(self.dim(), x.dim())?;
        let mut g = RealVector::zeros(self.dim());
        self.accumulate_component_gradient(0, x.as_slice(), 1.0, g.as_mut_slice());
        Ok(g)
    }

    fn smoothness(&self) -> Smoothness {
        let top = *self.eigenvalues.last().expect("nonempty spectrum");
        Smoothness {
            global: top,
            mean_component: top,
            max_component: top,
        }
    }

    fn strong_convexity(&self) -> f64 {
        self.eigenvalues[0].max(0.0)
    }

    fn exact_minimizer(&self) -> Option<RealVector> {
        if self.eigenvalues[0] <= 0.0 {
            return None;
        }
        let b = DVector::from_column_slice(self.linear.as_slice());
        let solution = self.matrix.clone().cholesky()?.solve(&b);
        Some(RealVector::from(solution.as_slice().to_vec()))
    }
}

impl FiniteSumObjective for QuadraticObjective {
    fn num_components(&self) -> usize {
        1
    }

    fn accumulate_component_gradient(&self, _j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let ax = self.apply(x);
        for ((o, a), b) in out.iter_mut().zip(&ax).zip(self.linear.iter()) {
            *o += scale * (a - b);
        }
    }
}

/// `f(x) = (1/G) sum_i f_i(x)` over distinct client objectives.
///
/// Shared `Arc`s are evaluated once and weighted by multiplicity.
#[derive(Debug, Clone)]
pub struct AveragedObjective {
    parts: Vec<(Arc<dyn FiniteSumObjective>, usize)>,
    total: usize,
}

impl AveragedObjective {
    pub fn new(parts: &[Arc<dyn FiniteSumObjective>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let dim = first.dim();
        let mut grouped: Vec<(Arc<dyn FiniteSumObjective>, usize)> = Vec::new();
        for part in parts {
            check_dim(dim, part.dim())?;
            match grouped.iter_mut().find(|(p, _)| Arc::ptr_eq(p, part)) {
                Some((_, count)) => *count += 1,
                None => grouped.push((part.clone(), 1)),
            }
        }
        Ok(Self {
            parts: grouped,
            total: parts.len(),
        })
    }

    pub fn distinct_parts(&self) -> usize {
        self.parts.len()
    }
}

impl SmoothObjective for AveragedObjective {
    fn dim(&self) -> usize {
        self.parts[0].0.dim()
    }

    fn value(&self, x: &RealVector) -> Result<f64> {
        if self.parts.len() == 1 {
            return self.parts[0].0.value(x);
        }
        let mut acc = 0.0;
        for (p, w) in &self.parts {
            acc += *w as f64 * p.value(x)?;
        }
        Ok(acc / self.total as f64)
    }

    fn full_gradient(&self, x: &RealVector) -> Result<RealVector> {
        if self.parts.len() == 1 {
            return self.parts[0].0.full_gradient(x);
        }
        let mut acc = RealVector::zeros(self.dim());
        for (p, w) in &self.parts {
            acc.axpy(*w as f64, &p.full_gradient(x)?);
        }
        acc.scale(1.0 / self.total as f64);
        Ok(acc)
    }

    fn smoothness(&self) -> Smoothness {
        let mut global = 0.0;
        let mut mean_component = 0.0;
        let mut max_component: f64 = 0.0;
        for (p, w) in &self.parts {
            let s = p.smoothness();
            global += *w as f64 * s.global;
            mean_component += *w as f64 * s.mean_component;
            max_component = max_component.max(s.max_component);
        }
        Smoothness {
            global: global / self.total as f64,
            mean_component: mean_component / self.total as f64,
            max_component,
        }
    }

    fn strong_convexity(&self) -> f64 {
        let mut acc = 0.0;
        for (p, w) in &self.parts {
            acc += *w as f64 * p.strong_convexity();
        }
        acc / self.total as f64
    }

    fn exact_minimizer(&self) -> Option<RealVector> {
        if self.parts.len() == 1 {
            self.parts[0].0.exact_minimizer()
        } else {
            None
        }
    }
}

/// `(1/G) sum_i |grad f_i(x) - grad f(x)|^2` over the given client objectives.
pub fn heterogeneity(parts: &[Arc<dyn FiniteSumObjective>], x: &RealVector) -> Result<f64> {
    let grads: Vec<RealVector> = parts
        .iter()
        .map(|p| p.full_gradient(x))
        .collect::<Result<_>>()?;
    if grads.is_empty() {
        return Err(Error::EmptyInput);
    }
    // (1/G) sum_i |g_i - mean|^2 written over pairs, so identical gradients give exactly 0
    let g = grads.len();
    let pairs: Vec<f64> = (0..g)
        .flat_map(|i| (i + 1..g).map(move |l| (i, l)))
        .map(|(i, l)| grads[i].distance_sq(&grads[l]))
        .collect();
    Ok(pairwise_sum(&pairs) / (g * g) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::dataset::{synthetic_logistic, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy_logistic(eta: f64) -> LogisticObjective {
        let ds = synthetic_logistic(&SyntheticSpec {
            samples: 10,
            dim: 3,
            seed: 5,
            sharpness: 2.0,
        })
        .unwrap();
        LogisticObjective::new(Arc::new(ds), eta).unwrap()
    }

    fn single_sample(a: Vec<f64>, y: f64, eta: f64) -> LogisticObjective {
        let ds = Dataset::new(vec![a], vec![y]).unwrap();
        LogisticObjective::new(Arc::new(ds), eta).unwrap()
    }

    #[test]
    fn logistic_at_origin_is_log_two() {
        let obj = single_sample(vec![0.3, -2.0], 1.0, 0.0);
        let v = obj.value(&RealVector::zeros(2)).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_scalar_evaluation() {
        // Oracle: -ln(1 / (1 + e^-1)) + 0.01 * 1 evaluated directly.
        let oracle = -(1.0 / (1.0 + (-1.0f64).exp())).ln() + 0.01;
        let obj = single_sample(vec![1.0, 0.0], 1.0, 0.01);
        let v = obj.value(&RealVector::from([1.0, 0.0])).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.323_261_687_6).abs() < 1e-9, "{v}");
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let obj = toy_logistic(0.0);
        let g = obj.full_gradient(&RealVector::zeros(3)).unwrap();
        let ds = obj.dataset();
        for i in 0..3 {
            let expected: f64 =
                (0..ds.len()).map(|j| (0.5 - ds.label(j)) * ds.row(j)[i]).sum::<f64>() / ds.len() as f64;
            assert!((g[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        let obj = single_sample(vec![100.0], 0.0, 0.0);
        let v = obj.value(&RealVector::from([10.0])).unwrap();
        assert!((v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_basics() {
        let q = QuadraticObjective::diagonal(&[1.0, 1.0], RealVector::from([1.0, 2.0])).unwrap();
        assert_eq!(q.value(&RealVector::zeros(2)).unwrap(), 0.0);
        let xstar = q.exact_minimizer().unwrap();
        assert!(q.full_gradient(&xstar).unwrap().norm() < 1e-14);
        assert!((q.value(&xstar).unwrap() + 2.5).abs() < 1e-14);
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        let b = RealVector::zeros(2);
        assert!(QuadraticObjective::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], b.clone()).is_err());
        assert!(QuadraticObjective::diagonal(&[1.0, -1.0], b.clone()).is_err());
        assert!(QuadraticObjective::new(vec![vec![1.0, 0.0]], b).is_err());
    }

    #[test]
    fn smoothness_values() {
        let q = QuadraticObjective::diagonal(&[1.0, 4.0], RealVector::zeros(2)).unwrap();
        assert!((q.smoothness().global - 4.0).abs() < 1e-12);
        let obj = single_sample(vec![2.0, 0.0], 1.0, 0.0);
        let s = obj.smoothness();
        assert!((s.max_component - 1.0).abs() < 1e-15);
        assert!((s.global - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_bound_holds_on_random_pairs() {
        let obj = toy_logistic(0.01);
        let l = obj.smoothness().global;
        assert!(l <= obj.smoothness().mean_component + 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let x: RealVector = (0..3).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>().into();
            let y: RealVector = (0..3).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>().into();
            let lhs = obj.full_gradient(&x).unwrap().distance(&obj.full_gradient(&y).unwrap());
            assert!(lhs <= l * x.distance(&y) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn minibatch_delta_cases() {
        let obj = toy_logistic(0.01);
        let x = RealVector::from([0.4, -0.2, 1.0]);
        let y = RealVector::from([-0.1, 0.3, 0.5]);
        assert!(obj.minibatch_delta(&[0, 3, 3], &x, &x).unwrap().is_zero());

        let all: Vec<usize> = (0..10).collect();
        let full = obj.full_gradient(&x).unwrap().sub(&obj.full_gradient(&y).unwrap());
        let batch = obj.minibatch_delta(&all, &x, &y).unwrap();
        assert!(batch.distance(&full) < 1e-15);

        // average over all singleton batches
        let mut avg = RealVector::zeros(3);
        for j in 0..10 {
            avg.add_assign(&obj.minibatch_delta(&[j], &x, &y).unwrap());
        }
        avg.scale(0.1);
        assert!(avg.distance(&full) < 1e-12);
    }

    #[test]
    fn minibatch_delta_unbiased_over_all_pairs() {
        // every ordered size-2 batch drawn with replacement
        let obj = toy_logistic(0.01);
        let x = RealVector::from([1.0, 0.0, -1.0]);
        let y = RealVector::from([0.5, 0.5, 0.5]);
        let full = obj.full_gradient(&x).unwrap().sub(&obj.full_gradient(&y).unwrap());
        let mut avg = RealVector::zeros(3);
        for a in 0..10 {
            for b in 0..10 {
                avg.add_assign(&obj.minibatch_delta(&[a, b], &x, &y).unwrap());
            }
        }
        avg.scale(0.01);
        assert!(avg.distance(&full) < 1e-12);
    }

    #[test]
    fn minibatch_errors() {
        let obj = toy_logistic(0.01);
        let x = RealVector::zeros(3);
        assert!(matches!(obj.minibatch_delta(&[], &x, &x), Err(Error::EmptyBatch)));
        assert!(matches!(
            obj.minibatch_delta(&[10], &x, &x),
            Err(Error::InvalidIndex { index: 10, len: 10 })
        ));
        assert!(matches!(
            obj.value(&RealVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn averaged_objective_dedupes_shared_parts() {
        let part: Arc<dyn FiniteSumObjective> = Arc::new(toy_logistic(0.01));
        let avg = AveragedObjective::new(&[part.clone(), part.clone(), part.clone()]).unwrap();
        assert_eq!(avg.distinct_parts(), 1);
        let x = RealVector::from([0.2, 0.1, 0.0]);
        assert_eq!(avg.value(&x).unwrap(), part.value(&x).unwrap());
        assert_eq!(heterogeneity(&[part.clone(), part.clone()], &x).unwrap(), 0.0);
    }
}
