//! Estimated mean-squared-error quadratic forms and weight selection.
//!
//! For `K` candidate models the estimated risk of the weighted estimator is
//! `Q̂(w) = wᵀ (b bᵀ + AᵀA) w`, where `b_k` is model `k`'s estimated bias for
//! the target functional and column `a_k` of `A` is its influence vector, so
//! that `a_kᵀ a_k'` is the plug-in covariance of the two model estimates.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    full_linear_fit, logistic_mle_model, logistic_pseudo_fit, ols_with_qr, sigmoid, FitResult,
    ProbVector,
};
use crate::linalg::{dot, norm2, Matrix, Qr};
use crate::model_space::{subset_columns, subset_point, CandidateModel, ModelSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    /// Estimated bias of each model's estimate of the functional.
    pub bias: Vec<f64>,
    /// `n × K`; column `k` is model `k`'s influence vector.
    pub gram_factor: Matrix,
    /// `K × K`, `b bᵀ + AᵀA`.
    pub matrix: Matrix,
}

impl QuadraticForm {
    pub fn from_parts(bias: Vec<f64>, gram_factor: Matrix) -> Result<Self> {
        let k = bias.len();
        if gram_factor.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "gram factor columns",
                expected: k,
                found: gram_factor.ncols(),
            });
        }
        let cols: Vec<Vec<f64>> = (0..k).map(|j| gram_factor.column(j)).collect();
        let mut matrix = Matrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = bias[i] * bias[j] + dot(&cols[i], &cols[j]);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("quadratic form"));
        }
        Ok(QuadraticForm {
            bias,
            gram_factor,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bias.is_empty()
    }

    /// `wᵀ Q w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        quad(&self.matrix, w)
    }
}

fn quad(q: &Matrix, w: &[f64]) -> f64 {
    dot(w, &q.mul_vec(w))
}

fn check_point(x_star: &[f64], models: &ModelSet) -> Result<()> {
    if x_star.len() != models.full_dim() {
        return Err(Error::DimensionMismatch {
            context: "target point length",
            expected: models.full_dim(),
            found: x_star.len(),
        });
    }
    Ok(())
}

/// Least-squares fits of every candidate model, reusable across target points.
#[derive(Debug, Clone)]
pub struct LinearFits {
    models: ModelSet,
    fits: Vec<FitResult>,
    factors: Vec<Qr>,
    beta_full: Vec<f64>,
    sigma2: f64,
    nrows: usize,
}

impl LinearFits {
    pub fn new(x: &Matrix, y: &[f64], models: &ModelSet) -> Result<Self> {
        if x.ncols() != models.full_dim() {
            return Err(Error::DimensionMismatch {
                context: "design columns",
                expected: models.full_dim(),
                found: x.ncols(),
            });
        }
        let full = full_linear_fit(x, y)?;
        let mut fits = Vec::with_capacity(models.len());
        let mut factors = Vec::with_capacity(models.len());
        for model in models {
            let x_k = subset_columns(x, model)?;
            let qr = Qr::new(&x_k).map_err(|e| e.with_model(model.included()))?;
            fits.push(ols_with_qr(&x_k, &qr, y).for_model(model)?);
            factors.push(qr);
        }
        Ok(LinearFits {
            models: models.clone(),
            fits,
            factors,
            beta_full: full.beta_full,
            sigma2: full.sigma2,
            nrows: x.nrows(),
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn fits(&self) -> &[FitResult] {
        &self.fits
    }

    pub fn beta_full(&self) -> &[f64] {
        &self.beta_full
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `x*_kᵀβ̂_k` for each model.
    pub fn estimates(&self, x_star: &[f64]) -> Result<Vec<f64>> {
        check_point(x_star, &self.models)?;
        self.models
            .iter()
            .zip(&self.fits)
            .map(|(m, f)| Ok(dot(&subset_point(x_star, m)?, &f.beta)))
            .collect()
    }

    /// Bias `x*_kᵀβ̂_k − x*ᵀβ̂_full`; influence vectors
    /// `σ̂_full · X_k (X_kᵀX_k)⁻¹ x*_k`.
    pub fn analyze(&self, x_star: &[f64]) -> Result<LinearAnalysis> {
        let estimates = self.estimates(x_star)?;
        let full_estimate = dot(x_star, &self.beta_full);
        let sigma = libm::sqrt(self.sigma2);
        let k = self.models.len();
        let mut gram = Matrix::zeros(self.nrows, k);
        for (j, (model, qr)) in self.models.iter().zip(&self.factors).enumerate() {
            let a = qr.hat_direction(&subset_point(x_star, model)?);
            for (i, v) in a.iter().enumerate() {
                gram[(i, j)] = sigma * v;
            }
        }
        let bias = estimates.iter().map(|e| e - full_estimate).collect();
        Ok(LinearAnalysis {
            estimates,
            full_estimate,
            sigma2: self.sigma2,
            q_hat: QuadraticForm::from_parts(bias, gram)?,
        })
    }
}

/// Linear-family risk form at one target point.
#[derive(Debug, Clone)]
pub struct LinearAnalysis {
    /// `x*_kᵀβ̂_k` for each model.
    pub estimates: Vec<f64>,
    pub full_estimate: f64,
    pub sigma2: f64,
    pub q_hat: QuadraticForm,
}

pub fn build_q_linear(x: &Matrix, y: &[f64], models: &ModelSet, x_star: &[f64]) -> Result<QuadraticForm> {
    Ok(LinearFits::new(x, y, models)?.analyze(x_star)?.q_hat)
}

/// Logistic fits of every candidate model: data MLEs for the averaged
/// estimate and pseudo-fits against the full-model fitted probabilities for
/// the risk form.
#[derive(Debug, Clone)]
pub struct LogisticFits {
    models: ModelSet,
    fits: Vec<FitResult>,
    pseudo_fits: Vec<FitResult>,
    /// QR of `diag(p̂*_k(1 − p̂*_k))^{1/2} X_k`, so `RᵀR = M_k`.
    weighted_factors: Vec<Qr>,
    design_blocks: Vec<Matrix>,
    full_fit: FitResult,
    sqrt_w_true: Vec<f64>,
}

impl LogisticFits {
    pub fn new(x: &Matrix, y: &[f64], models: &ModelSet) -> Result<Self> {
        if x.ncols() != models.full_dim() {
            return Err(Error::DimensionMismatch {
                context: "design columns",
                expected: models.full_dim(),
                found: x.ncols(),
            });
        }
        let full_model = CandidateModel::full(models.p_fixed(), models.q())?;
        let full_fit = logistic_mle_model(x, y, &full_model)?;
        let p_full = ProbVector::fitted(x, &full_fit.beta)?;
        let sqrt_w_true = p_full.variances().into_iter().map(libm::sqrt).collect();

        let k = models.len();
        let mut fits = Vec::with_capacity(k);
        let mut pseudo_fits = Vec::with_capacity(k);
        let mut weighted_factors = Vec::with_capacity(k);
        let mut design_blocks = Vec::with_capacity(k);
        for model in models {
            let tag = |e: Error| e.with_model(model.included());
            let x_k = subset_columns(x, model)?;
            fits.push(logistic_mle_model(x, y, model)?);
            let pseudo = logistic_pseudo_fit(&x_k, &p_full).map_err(tag)?.for_model(model)?;
            let sqrt_v: Vec<f64> = x_k
                .mul_vec(&pseudo.beta)
                .into_iter()
                .map(|e| {
                    let p = sigmoid(e);
                    libm::sqrt(p * (1.0 - p))
                })
                .collect();
            weighted_factors.push(Qr::new(&x_k.scale_rows(&sqrt_v)).map_err(tag)?);
            pseudo_fits.push(pseudo);
            design_blocks.push(x_k);
        }
        Ok(LogisticFits {
            models: models.clone(),
            fits,
            pseudo_fits,
            weighted_factors,
            design_blocks,
            full_fit,
            sqrt_w_true,
        })
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn fits(&self) -> &[FitResult] {
        &self.fits
    }

    pub fn pseudo_fits(&self) -> &[FitResult] {
        &self.pseudo_fits
    }

    pub fn full_fit(&self) -> &FitResult {
        &self.full_fit
    }

    /// `p(x*_kᵀβ̂_k)` from the data MLEs.
    pub fn estimates(&self, x_star: &[f64]) -> Result<Vec<f64>> {
        check_point(x_star, &self.models)?;
        self.models
            .iter()
            .zip(&self.fits)
            .map(|(m, f)| Ok(sigmoid(dot(&subset_point(x_star, m)?, &f.beta))))
            .collect()
    }

    /// With `p̂*_k(x*) = p(x*_kᵀβ̂*_k)` from the pseudo-fits:
    ///
    /// * bias `b_k = p̂*_k(x*) − p(x*ᵀβ̂_full)`,
    /// * `a_k = diag(p̂_full(1 − p̂_full))^{1/2} X_k M_k⁻¹ x*_k · p̂*_k(x*)(1 − p̂*_k(x*))`
    ///   where `M_k = X_kᵀ diag(p̂*_k(1 − p̂*_k)) X_k`.
    pub fn analyze(&self, x_star: &[f64]) -> Result<LogisticAnalysis> {
        let estimates = self.estimates(x_star)?;
        let full_estimate = sigmoid(dot(x_star, &self.full_fit.beta));
        let k = self.models.len();
        let mut gram = Matrix::zeros(self.sqrt_w_true.len(), k);
        let mut bias = Vec::with_capacity(k);
        let mut pseudo_estimates = Vec::with_capacity(k);
        for (j, model) in self.models.iter().enumerate() {
            let xs_k = subset_point(x_star, model)?;
            let p_star = sigmoid(dot(&xs_k, &self.pseudo_fits[j].beta));
            let m_inv_x = self.weighted_factors[j].gram_solve(&xs_k);
            let dir = self.design_blocks[j].mul_vec(&m_inv_x);
            let s = p_star * (1.0 - p_star);
            for (i, v) in dir.iter().enumerate() {
                gram[(i, j)] = self.sqrt_w_true[i] * v * s;
            }
            bias.push(p_star - full_estimate);
            pseudo_estimates.push(p_star);
        }
        Ok(LogisticAnalysis {
            estimates,
            pseudo_estimates,
            full_estimate,
            q_hat: QuadraticForm::from_parts(bias, gram)?,
        })
    }
}

/// Logistic-family risk form at one target point.
#[derive(Debug, Clone)]
pub struct LogisticAnalysis {
    /// `p(x*_kᵀβ̂_k)` from the data MLEs.
    pub estimates: Vec<f64>,
    /// `p(x*_kᵀβ̂*_k)` from the pseudo-fits.
    pub pseudo_estimates: Vec<f64>,
    pub full_estimate: f64,
    pub q_hat: QuadraticForm,
}

pub fn build_q_logistic(x: &Matrix, y: &[f64], models: &ModelSet, x_star: &[f64]) -> Result<QuadraticForm> {
    Ok(LogisticFits::new(x, y, models)?.analyze(x_star)?.q_hat)
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}` by sort-and-threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if *u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| f64::max(x - theta, 0.0)).collect();
    // Renormalize away the last few ulps of drift.
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `‖w − Π(w − ∇f(w))‖₂` at the returned point.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Stop when `L · ‖w − Π(w − ∇f/L)‖` falls below this.
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

/// Minimizes `wᵀQw` over the probability simplex.
pub fn solve_simplex_qp(q: &QuadraticForm) -> Result<WeightSolution> {
    // bbᵀ + AᵀA is positive semidefinite by construction.
    solve(&q.matrix, &QpOptions::default(), true)
}

fn sym_gradient(q: &Matrix, w: &[f64]) -> Vec<f64> {
    q.mul_vec(w).into_iter().map(|g| 2.0 * g).collect()
}

/// Largest eigenvalue of a symmetric matrix by power iteration.
fn power_iteration(q: &Matrix, iterations: usize) -> f64 {
    let k = q.nrows();
    let mut v: Vec<f64> = (0..k).map(|i| 1.0 + (i as f64) * 1e-3).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let mv = q.mul_vec(&v);
        let n = norm2(&mv);
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &mv) / dot(&v, &v);
        v = mv.into_iter().map(|x| x / n).collect();
    }
    lambda
}

/// Smallest eigenvalue estimate via power iteration on `λ_max I − Q`.
fn smallest_eigenvalue(q: &Matrix, lambda_max: f64, iterations: usize) -> f64 {
    let k = q.nrows();
    let shifted = Matrix::from_fn(k, k, |i, j| {
        let d = if i == j { lambda_max } else { 0.0 };
        d - q[(i, j)]
    });
    lambda_max - power_iteration(&shifted, iterations)
}

/// Minimizes `wᵀQw` over the probability simplex for any symmetric `Q`.
///
/// A slightly indefinite `Q` has its diagonal raised by the magnitude of its
/// smallest eigenvalue first.
pub fn solve_simplex_qp_matrix(q_in: &Matrix, opts: &QpOptions) -> Result<WeightSolution> {
    solve(q_in, opts, false)
}

fn solve(q_in: &Matrix, opts: &QpOptions, known_psd: bool) -> Result<WeightSolution> {
    let k = q_in.nrows();
    if q_in.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "quadratic form must be square",
            expected: k,
            found: q_in.ncols(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("empty quadratic form".into()));
    }
    if !q_in.is_finite() {
        return Err(Error::NonFinite("quadratic form"));
    }
    let sym = Matrix::from_fn(k, k, |i, j| 0.5 * (q_in[(i, j)] + q_in[(j, i)]));
    if k == 1 {
        return Ok(WeightSolution {
            weights: vec![1.0],
            objective: sym[(0, 0)],
            iterations: 0,
            kkt_residual: 0.0,
        });
    }

    let work = if known_psd {
        sym.clone()
    } else {
        let lambda_max = power_iteration(&sym, 200);
        let shift = f64::max(0.0, -smallest_eigenvalue(&sym, lambda_max, 200));
        Matrix::from_fn(k, k, |i, j| sym[(i, j)] + if i == j { shift } else { 0.0 })
    };
    let (mut w, iterations) = match min_norm_point(&work, opts) {
        Some(found) => found,
        None => {
            let (w, it) = projected_gradient(&work, opts);
            match polish_on_support(&sym, &w) {
                Some(p) if quad(&sym, &p) <= quad(&sym, &w) => (p, it),
                _ => (w, it),
            }
        }
    };
    // No vertex may beat the returned point.
    let mut best = quad(&sym, &w);
    for v in 0..k {
        if sym[(v, v)] < best {
            best = sym[(v, v)];
            w = vec![0.0; k];
            w[v] = 1.0;
        }
    }

    let g = sym_gradient(&sym, &w);
    let proj = project_simplex(&w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect::<Vec<_>>());
    let kkt = norm2(&proj.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(WeightSolution {
        objective: best,
        weights: w,
        iterations,
        kkt_residual: kkt,
    })
}

/// Accelerated projected gradient with backtracking and adaptive restart.
fn projected_gradient(work: &Matrix, opts: &QpOptions) -> (Vec<f64>, usize) {
    let k = work.nrows();
    let lambda_max = power_iteration(work, 200);
    // Lipschitz constant of ∇(wᵀQw) = 2Qw; grown by backtracking if the
    // power-iteration estimate falls short.
    let mut lip = f64::max(2.0 * lambda_max * 1.05, f64::MIN_POSITIVE);
    let scale = (0..k).map(|i| libm::fabs(work[(i, i)])).fold(0.0, f64::max);
    if scale == 0.0 && lambda_max == 0.0 {
        // Q = 0: every simplex point is optimal.
        return (vec![1.0 / k as f64; k], 0);
    }

    let mut w = vec![1.0 / k as f64; k];
    let mut qw = work.mul_vec(&w);
    let mut fw = dot(&w, &qw);
    let mut y = w.clone();
    let mut qy = qw.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let fy = dot(&y, &qy);
        let gy: Vec<f64> = qy.iter().map(|g| 2.0 * g).collect();
        let (next, q_next, f_next) = loop {
            let cand = project_simplex(
                &y.iter().zip(&gy).map(|(yi, gi)| yi - gi / lip).collect::<Vec<_>>(),
            );
            let q_cand = work.mul_vec(&cand);
            let f_cand = dot(&cand, &q_cand);
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(c, y)| c - y).collect();
            let bound = fy + dot(&gy, &diff) + 0.5 * lip * dot(&diff, &diff);
            if f_cand <= bound + 1e-15 * (1.0 + libm::fabs(bound)) || lip > 1e300 {
                break (cand, q_cand, f_cand);
            }
            lip *= 2.0;
        };
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        if f_next > fw {
            // Adaptive restart: drop momentum and retry from the last iterate.
            y = w.clone();
            qy = qw.clone();
            t = 1.0;
            continue;
        }
        let momentum = (t - 1.0) / t_next;
        y = next.iter().zip(&w).map(|(n, o)| n + momentum * (n - o)).collect();
        qy = q_next.iter().zip(&qw).map(|(n, o)| n + momentum * (n - o)).collect();
        let moved = next.iter().zip(&w).any(|(a, b)| a != b);
        w = next;
        qw = q_next;
        fw = f_next;
        t = t_next;

        let pg_norm = projected_gradient_norm(&w, &qw, lip);
        if pg_norm <= opts.tolerance || (!moved && pg_norm <= libm::sqrt(opts.tolerance)) {
            break;
        }
        // The support settles long before the iterates converge; an exact
        // solve on it usually finishes the job.
        if it % 25 == 24 {
            if let Some(p) = polish_on_support(&work, &w) {
                let qp = work.mul_vec(&p);
                if projected_gradient_norm(&p, &qp, lip) <= opts.tolerance {
                    w = p;
                    break;
                }
            }
        }
    }

    (w, iterations)
}

/// Wolfe's minimum-norm-point method. The candidate models are treated as
/// points whose Gram matrix is `q`; the nearest point of their convex hull to
/// the origin minimizes `wᵀQw` on the simplex. Returns `None` when a reduced
/// system turns singular, leaving the caller to fall back.
fn min_norm_point(q: &Matrix, opts: &QpOptions) -> Option<(Vec<f64>, usize)> {
    let k = q.nrows();
    let scale = (0..k).map(|i| libm::fabs(q[(i, i)])).fold(0.0, f64::max);
    let tol = 1e-13 * f64::max(scale, f64::MIN_POSITIVE);
    let start = (0..k).min_by(|&a, &b| q[(a, a)].total_cmp(&q[(b, b)]))?;
    let mut support = vec![start];
    let mut lambda = vec![1.0];
    let mut steps = 0;
    let q_times = |support: &[usize], lambda: &[f64]| -> Vec<f64> {
        (0..k).map(|i| support.iter().zip(lambda).map(|(&s, l)| q[(i, s)] * l).sum()).collect()
    };
    let mut qx = q_times(&support, &lambda);
    while steps < opts.max_iterations {
        let xx: f64 = support.iter().zip(&lambda).map(|(&s, l)| qx[s] * l).sum();
        let j = (0..k).min_by(|&a, &b| qx[a].total_cmp(&qx[b]))?;
        // xx − qx[j] is half the Frank-Wolfe gap, an upper bound on the
        // distance to the optimal objective.
        if xx - qx[j] <= tol {
            let mut w = vec![0.0; k];
            for (&s, l) in support.iter().zip(&lambda) {
                w[s] = *l;
            }
            return Some((w, steps));
        }
        if support.contains(&j) {
            return None;
        }
        support.push(j);
        lambda.push(0.0);
        loop {
            steps += 1;
            if steps > opts.max_iterations {
                return None;
            }
            let alpha = affine_minimizer(q, &support)?;
            if alpha.iter().all(|a| *a > 0.0) {
                lambda = alpha;
                break;
            }
            // Move toward the affine minimizer until a weight hits zero.
            let (mut theta, mut leaving) = (1.0, 0);
            for (i, (l, a)) in lambda.iter().zip(&alpha).enumerate() {
                if *a <= 0.0 && l - a > 0.0 {
                    let r = l / (l - a);
                    if r < theta {
                        theta = r;
                        leaving = i;
                    }
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            lambda[leaving] = 0.0;
            let keep: Vec<bool> = lambda.iter().map(|l| *l > 1e-15).collect();
            support = support.iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| *s).collect();
            lambda = lambda.iter().zip(&keep).filter(|(_, k)| **k).map(|(l, _)| *l).collect();
            if support.is_empty() {
                return None;
            }
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        qx = q_times(&support, &lambda);
    }
    None
}

/// Minimizer of `αᵀQ_SSα` subject to `Σα = 1` alone.
fn affine_minimizer(q: &Matrix, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut a = Matrix::zeros(s + 1, s + 1);
    let mut rhs = vec![0.0; s + 1];
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[(r, c)] = q[(i, j)];
        }
        a[(r, s)] = 1.0;
        a[(s, r)] = 1.0;
    }
    rhs[s] = 1.0;
    let mut sol = gaussian_solve(a, rhs)?;
    sol.truncate(s);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// `L‖w − P(w − ∇f/L)‖` with `∇f = 2Qw`.
fn projected_gradient_norm(w: &[f64], qw: &[f64], lip: f64) -> f64 {
    let pg = project_simplex(&w.iter().zip(qw).map(|(wi, gi)| wi - 2.0 * gi / lip).collect::<Vec<_>>());
    lip * norm2(&pg.iter().zip(w).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Solves the equality-constrained problem on the support of `w` exactly:
/// `min wᵀQw s.t. Σw = 1` over the coordinates where `w > 0`. Returns `None`
/// when the reduced system is singular or the solution leaves the simplex.
fn polish_on_support(q: &Matrix, w: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1e-12).collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    // [Q_SS 1; 1ᵀ 0] [w; ν] = [0; 1]
    let m = s + 1;
    let mut a = Matrix::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[(r, c)] = q[(i, j)];
        }
        a[(r, s)] = 1.0;
        a[(s, r)] = 1.0;
    }
    rhs[s] = 1.0;
    let sol = gaussian_solve(a, rhs)?;
    let mut out = vec![0.0; w.len()];
    for (r, &i) in support.iter().enumerate() {
        if !(sol[r] >= -1e-14) || !sol[r].is_finite() {
            return None;
        }
        out[i] = f64::max(sol[r], 0.0);
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= total);
    Some(out)
}

/// Gaussian elimination with partial pivoting; `None` on a (near-)singular pivot.
fn gaussian_solve(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.as_slice().iter().fold(0.0, |m, x| f64::max(m, libm::fabs(*x)));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| libm::fabs(a[(i, col)]).total_cmp(&libm::fabs(a[(j, col)])))?;
        if libm::fabs(a[(piv, col)]) <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                let tmp = a[(col, c)];
                a[(col, c)] = a[(piv, c)];
                a[(piv, c)] = tmp;
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let factor = a[(r, col)] / a[(col, col)];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[(r, c)] -= factor * a[(col, c)];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for c in i + 1..n {
            s -= a[(i, c)] * x[c];
        }
        x[i] = s / a[(i, i)];
    }
    Some(x)
}

/// Smoothed-AIC weights `exp(−ΔAIC/2) / Σ exp(−ΔAIC/2)`.
///
/// Models with infinite log-likelihood (exact fits) share all the weight.
pub fn aic_weights(fits: &[FitResult]) -> Result<Vec<f64>> {
    let aics: Vec<f64> = fits.iter().map(FitResult::aic).collect();
    aic_weights_from_values(&aics)
}

pub fn aic_weights_from_values(aics: &[f64]) -> Result<Vec<f64>> {
    if aics.is_empty() {
        return Err(Error::InvalidArgument("no models to weight".into()));
    }
    if aics.iter().any(|a| a.is_nan() || *a == f64::INFINITY) {
        return Err(Error::NonFinite("AIC values"));
    }
    let exact = aics.iter().filter(|a| **a == f64::NEG_INFINITY).count();
    if exact > 0 {
        let share = 1.0 / exact as f64;
        return Ok(aics
            .iter()
            .map(|a| if *a == f64::NEG_INFINITY { share } else { 0.0 })
            .collect());
    }
    let min = aics.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = aics.iter().map(|a| libm::exp(-0.5 * (a - min))).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

pub fn equal_weights(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("no models to weight".into()));
    }
    Ok(vec![1.0 / k as f64; k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{normal_design, SplitMix};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        libm::fabs(a - b) <= tol
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[0.5, 0.5, 2.0]), vec![0.0, 0.0, 1.0]);
    }

    /// Projection by brute force over support sets: for each support `S`, the
    /// candidate is `v_S − (Σv_S − 1)/|S|`; keep the feasible one closest to `v`.
    fn brute_projection(v: &[f64]) -> Vec<f64> {
        let k = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << k) {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
            let mut w = vec![0.0; k];
            let mut ok = true;
            for &i in &idx {
                w[i] = v[i] - shift;
                ok &= w[i] >= -1e-15;
            }
            if !ok {
                continue;
            }
            let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, w));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn projection_matches_support_enumeration(v in proptest::collection::vec(-3.0f64..3.0, 1..6)) {
            let got = project_simplex(&v);
            let want = brute_projection(&v);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(got.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn qp_examples() {
        let one = Matrix::from_rows(&[[3.0]]).unwrap();
        let s = solve_simplex_qp_matrix(&one, &QpOptions::default()).unwrap();
        assert_eq!(s.weights, vec![1.0]);

        let diag = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let s = solve_simplex_qp_matrix(&diag, &QpOptions::default()).unwrap();
        assert!(close(s.weights[0], 2.0 / 3.0, 1e-10));
        assert!(close(s.objective, 2.0 / 3.0, 1e-12));

        let ones = Matrix::from_fn(3, 3, |_, _| 1.0);
        let s = solve_simplex_qp_matrix(&ones, &QpOptions::default()).unwrap();
        assert!(close(s.objective, 1.0, 1e-12));
        assert!(close(s.weights.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn fallback_solver_agrees_with_active_set() {
        let mut rng = SplitMix(77);
        for _ in 0..20 {
            let g = Matrix::from_fn(6, 5, |_, _| rng.normal());
            let q = g.transpose().mul(&g);
            let (w_as, _) = min_norm_point(&q, &QpOptions::default()).unwrap();
            let (w_pg, _) = projected_gradient(&q, &QpOptions::default());
            assert!(close(quad(&q, &w_as), quad(&q, &w_pg), 1e-9));
            assert!(close(w_pg.iter().sum::<f64>(), 1.0, 1e-12));
        }
    }

    #[test]
    fn qp_rejects_non_finite() {
        let bad = Matrix::from_rows(&[[1.0, f64::NAN], [f64::NAN, 1.0]]).unwrap();
        assert!(matches!(
            solve_simplex_qp_matrix(&bad, &QpOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn qp_handles_slightly_indefinite_input() {
        let q = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0 - 1e-13]]).unwrap();
        let s = solve_simplex_qp_matrix(&q, &QpOptions::default()).unwrap();
        assert!(s.objective <= 1.0 + 1e-12);
        assert!(s.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn aic_examples() {
        let w = aic_weights_from_values(&[10.0, 10.0, 10.0]).unwrap();
        assert!(w.iter().all(|x| close(*x, 1.0 / 3.0, 1e-15)));
        let w = aic_weights_from_values(&[100.0, 102.0]).unwrap();
        assert!(close(w[0], 0.7311, 1e-4) && close(w[1], 0.2689, 1e-4));
        let base = [3.5, 7.25, 4.0];
        let shifted: Vec<f64> = base.iter().map(|a| a + 1024.0).collect();
        assert_eq!(
            aic_weights_from_values(&base).unwrap(),
            aic_weights_from_values(&shifted).unwrap()
        );
        let w = aic_weights_from_values(&[f64::NEG_INFINITY, 3.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(w, vec![0.5, 0.0, 0.5]);
        assert!(aic_weights_from_values(&[f64::NAN]).is_err());
    }

    #[test]
    fn equal_weight_examples() {
        assert_eq!(equal_weights(1).unwrap(), vec![1.0]);
        assert_eq!(equal_weights(4).unwrap(), vec![0.25; 4]);
        assert!(close(equal_weights(7).unwrap().iter().sum::<f64>(), 1.0, 1e-15));
        assert!(equal_weights(0).is_err());
    }

    fn linear_data(seed: u64, n: usize) -> (Matrix, Vec<f64>) {
        let mut rng = SplitMix(seed);
        let x = normal_design(&mut rng, n, 4);
        let y: Vec<f64> = x
            .mul_vec(&[0.3, 0.5, -0.2, 0.1])
            .into_iter()
            .map(|m| m + rng.normal())
            .collect();
        (x, y)
    }

    #[test]
    fn full_only_linear_form() {
        let (x, y) = linear_data(1, 50);
        let models = ModelSet::new(vec![CandidateModel::full(1, 3).unwrap()]).unwrap();
        let xs = [1.0, 0.2, -0.4, 1.5];
        let q = build_q_linear(&x, &y, &models, &xs).unwrap();
        assert!(close(q.bias[0], 0.0, 1e-12));
        let full = full_linear_fit(&x, &y).unwrap();
        let var = full.sigma2 * dot(&xs, &Qr::new(&x).unwrap().gram_solve(&xs));
        assert!(close(q.matrix[(0, 0)], var, 1e-12 * var.max(1.0)));
    }

    #[test]
    fn duplicated_model_gives_constant_block() {
        let (x, y) = linear_data(2, 50);
        let m = CandidateModel::new(1, 3, vec![0, 2]).unwrap();
        // ModelSet forbids duplicates, so assemble the form from one column twice.
        let models = ModelSet::new(vec![m]).unwrap();
        let xs = [1.0, 0.2, -0.4, 1.5];
        let q1 = build_q_linear(&x, &y, &models, &xs).unwrap();
        let col = q1.gram_factor.column(0);
        let gram = Matrix::from_fn(col.len(), 2, |i, _| col[i]);
        let q2 = QuadraticForm::from_parts(vec![q1.bias[0]; 2], gram).unwrap();
        let v = q2.matrix[(0, 0)];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(q2.matrix[(i, j)], v);
            }
        }
    }

    #[test]
    fn logistic_full_only_form_is_positive() {
        let mut rng = SplitMix(4);
        let x = normal_design(&mut rng, 200, 3);
        let y: Vec<f64> = x
            .mul_vec(&[0.2, 0.8, -0.5])
            .into_iter()
            .map(|e| if rng.uniform() < sigmoid(e) { 1.0 } else { 0.0 })
            .collect();
        let models = ModelSet::new(vec![CandidateModel::full(1, 2).unwrap()]).unwrap();
        let q = build_q_logistic(&x, &y, &models, &[1.0, 0.5, 0.5]).unwrap();
        assert!(close(q.bias[0], 0.0, 1e-9));
        assert!(q.matrix[(0, 0)] > 0.0);
    }

    #[test]
    fn logistic_constant_response_propagates_separation() {
        let mut rng = SplitMix(5);
        let x = normal_design(&mut rng, 50, 2);
        let models = ModelSet::all_subsets(1, 1).unwrap();
        let err = build_q_logistic(&x, &[0.0; 50], &models, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }
}
