//! Library results checked against independent, deliberately naive
//! reimplementations: explicit inverses, literal double sums, plain Newton.

use fma_core::glm::{
    full_linear_fit, logistic_mle, logistic_prob, logistic_pseudo_fit, ols_fit, pseudo_true_linear, sigmoid, ProbVector,
};
use fma_core::model_space::{subset_columns, subset_point};
use fma_core::rng::{stream, Purpose};
use fma_core::weights::{build_q_linear, build_q_logistic, solve_simplex_qp_matrix, QpOptions};
use fma_core::{CandidateModel, Matrix, ModelSet};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Dense = Vec<Vec<f64>>;

fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn mat_vec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `X_aᵀ diag(w) X_b`.
fn cross(xa: &Matrix, xb: &Matrix, w: &[f64]) -> Dense {
    (0..xa.ncols())
        .map(|i| (0..xb.ncols()).map(|j| (0..xa.nrows()).map(|r| xa[(r, i)] * w[r] * xb[(r, j)]).sum()).collect())
        .collect()
}

fn tr_vec(x: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..x.ncols()).map(|j| (0..x.nrows()).map(|r| x[(r, j)] * v[r]).sum()).collect()
}

fn normal_design(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, Purpose::Design, 0);
    Matrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut rng) })
}

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Noise, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn bernoulli(eta: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Response, 0);
    eta.iter().map(|e| if rng.random::<f64>() < sigmoid(*e) { 1.0 } else { 0.0 }).collect()
}

fn random_models(q: usize, count: usize, seed: u64) -> ModelSet {
    let all = ModelSet::all_subsets(1, q).unwrap();
    let mut rng = stream(seed, Purpose::Point, 1);
    let mut picked: Vec<CandidateModel> = Vec::new();
    while picked.len() < count {
        let m = all.models()[rng.random_range(0..all.len())].clone();
        if !picked.contains(&m) {
            picked.push(m);
        }
    }
    ModelSet::new(picked).unwrap()
}

fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    mat_vec(&inverse(&cross(x, x, &vec![1.0; x.nrows()])), &tr_vec(x, y))
}

/// Undamped Newton on `Σ t η − log(1 + e^η)` run far past the library tolerance.
fn newton_oracle(x: &Matrix, target: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; x.ncols()];
    for _ in 0..200 {
        let p: Vec<f64> = x.mul_vec(&beta).iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let score = tr_vec(x, &target.iter().zip(&p).map(|(t, p)| t - p).collect::<Vec<_>>());
        if score.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
        let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let step = mat_vec(&inverse(&cross(x, x, &w)), &score);
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
    }
    beta
}

#[test]
fn ols_matches_normal_equations() {
    for seed in 0..10 {
        let x = normal_design(50, 3, seed);
        let y = normals(50, seed);
        let fit = ols_fit(&x, &y).unwrap();
        for (a, b) in fit.beta.iter().zip(ols_oracle(&x, &y)) {
            assert!((a - b).abs() < 1e-10);
        }
        let resid: Vec<f64> = y.iter().zip(x.mul_vec(&fit.beta)).map(|(y, f)| y - f).collect();
        let scale = tr_vec(&x, &y).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(tr_vec(&x, &resid).iter().all(|v| v.abs() <= 1e-8 * scale));
    }
}

#[test]
fn residual_variance_is_projection_of_noise() {
    let x = normal_design(40, 4, 3);
    let e = normals(40, 3);
    let y: Vec<f64> = x.mul_vec(&[1.0, -2.0, 0.5, 0.0]).iter().zip(&e).map(|(a, b)| a + b).collect();
    // (I − P_X)e computed with the explicit inverse.
    let coef = ols_oracle(&x, &e);
    let resid: Vec<f64> = e.iter().zip(x.mul_vec(&coef)).map(|(a, b)| a - b).collect();
    let expected = dot(&resid, &resid) / 40.0;
    assert!((full_linear_fit(&x, &y).unwrap().sigma2 - expected).abs() < 1e-12);
}

#[test]
fn logistic_mle_matches_newton_oracle() {
    for seed in 0..5 {
        let x = normal_design(100, 2, seed);
        let y = bernoulli(&x.mul_vec(&[0.2, 0.8]), seed);
        let fit = logistic_mle(&x, &y).unwrap();
        for (a, b) in fit.beta.iter().zip(newton_oracle(&x, &y)) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn pseudo_fit_intercept_only_is_logit_of_mean() {
    let target = ProbVector::new(vec![0.2, 0.3, 0.6, 0.7, 0.45]).unwrap();
    let x = Matrix::from_fn(5, 1, |_, _| 1.0);
    let fit = logistic_pseudo_fit(&x, &target).unwrap();
    let m: f64 = 2.25 / 5.0;
    assert!((fit.beta[0] - (m / (1.0 - m)).ln()).abs() < 1e-10);
}

#[test]
fn linear_q_matches_literal_double_sum() {
    for seed in 0..20u64 {
        let q = 3;
        let x = normal_design(100, q + 1, seed);
        let y: Vec<f64> = x
            .mul_vec(&[0.3, 0.1, 0.3, 0.2])
            .iter()
            .zip(normals(100, seed))
            .map(|(a, b)| a + b)
            .collect();
        let models = random_models(q, 3 + (seed as usize % 3), seed);
        let x_star: Vec<f64> = std::iter::once(1.0).chain(normals(q, seed + 1000)).collect();
        let form = build_q_linear(&x, &y, &models, &x_star).unwrap();

        let beta_full = ols_oracle(&x, &y);
        let resid: Vec<f64> = y.iter().zip(x.mul_vec(&beta_full)).map(|(a, b)| a - b).collect();
        let sigma2 = dot(&resid, &resid) / 100.0;
        let full_est = dot(&x_star, &beta_full);
        let parts: Vec<(Matrix, Vec<f64>, Dense, f64)> = models
            .iter()
            .map(|m| {
                let xk = subset_columns(&x, m).unwrap();
                let xs = subset_point(&x_star, m).unwrap();
                let inv = inverse(&cross(&xk, &xk, &vec![1.0; 100]));
                let est = dot(&xs, &mat_vec(&inv, &tr_vec(&xk, &y)));
                (xk, xs, inv, est - full_est)
            })
            .collect();
        for (a, (xa, sa, ia, ba)) in parts.iter().enumerate() {
            for (b, (xb, sb, ib, bb)) in parts.iter().enumerate() {
                let left = mat_vec(ia, sa);
                let right = mat_vec(ib, sb);
                let var = sigma2 * dot(&left, &mat_vec(&cross(xa, xb, &vec![1.0; 100]), &right));
                let expected = ba * bb + var;
                assert!((form.matrix[(a, b)] - expected).abs() < 1e-10, "seed {seed} ({a},{b})");
            }
        }
    }
}

#[test]
fn logistic_q_matches_literal_double_sum() {
    for seed in 0..20u64 {
        let q = 3;
        let x = normal_design(100, q + 1, seed + 50);
        let y = bernoulli(&x.mul_vec(&[0.3, 0.5, -0.4, 0.2]), seed);
        let models = random_models(q, 3 + (seed as usize % 3), seed);
        let x_star: Vec<f64> = std::iter::once(1.0).chain(normals(q, seed + 2000)).collect();
        let form = build_q_logistic(&x, &y, &models, &x_star).unwrap();

        let beta_full = newton_oracle(&x, &y);
        let p_full: Vec<f64> = x.mul_vec(&beta_full).iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let w_true: Vec<f64> = p_full.iter().map(|p| p * (1.0 - p)).collect();
        let full_est = 1.0 / (1.0 + (-dot(&x_star, &beta_full)).exp());
        let parts: Vec<(Matrix, Vec<f64>, Dense, f64, f64)> = models
            .iter()
            .map(|m| {
                let xk = subset_columns(&x, m).unwrap();
                let xs = subset_point(&x_star, m).unwrap();
                let b = newton_oracle(&xk, &p_full);
                let pk: Vec<f64> = xk.mul_vec(&b).iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
                let wk: Vec<f64> = pk.iter().map(|p| p * (1.0 - p)).collect();
                let p_star = 1.0 / (1.0 + (-dot(&xs, &b)).exp());
                let inv = inverse(&cross(&xk, &xk, &wk));
                (xk, xs, inv, p_star - full_est, p_star * (1.0 - p_star))
            })
            .collect();
        for (a, (xa, sa, ia, ba, va)) in parts.iter().enumerate() {
            for (b, (xb, sb, ib, bb, vb)) in parts.iter().enumerate() {
                let left = mat_vec(ia, sa);
                let right = mat_vec(ib, sb);
                let var = va * vb * dot(&left, &mat_vec(&cross(xa, xb, &w_true), &right));
                let expected = ba * bb + var;
                assert!((form.matrix[(a, b)] - expected).abs() < 1e-10, "seed {seed} ({a},{b})");
            }
        }
    }
}

#[test]
fn plug_in_identity() {
    for seed in 0..20u64 {
        let x = normal_design(60, 5, seed + 300);
        let y = normals(60, seed + 300);
        let beta_full = full_linear_fit(&x, &y).unwrap().beta_full;
        for m in ModelSet::all_subsets(1, 4).unwrap().iter() {
            let xk = subset_columns(&x, m).unwrap();
            let via_plug_in = pseudo_true_linear(&xk, &x, &beta_full).unwrap();
            let direct = ols_fit(&xk, &y).unwrap().beta;
            for (a, b) in via_plug_in.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn irls_contracts_hold() {
    for seed in 0..20u64 {
        let d = 2 + (seed as usize % 4);
        let x = normal_design(200, d, seed + 400);
        let beta: Vec<f64> = (0..d).map(|j| 0.4 - 0.2 * j as f64).collect();
        let y = bernoulli(&x.mul_vec(&beta), seed);
        let fit = logistic_mle(&x, &y).unwrap();
        assert!(fit.converged && fit.score_residual <= 1e-8);
        let target = ProbVector::fitted(&x, &fit.beta).unwrap();
        let xk = x.select_columns(&(0..d - 1).collect::<Vec<_>>());
        let pseudo = logistic_pseudo_fit(&xk, &target).unwrap();
        let pk: Vec<f64> = xk.mul_vec(&pseudo.beta).iter().map(|e| sigmoid(*e)).collect();
        let score = tr_vec(&xk, &target.as_slice().iter().zip(&pk).map(|(t, p)| t - p).collect::<Vec<_>>());
        assert!(score.iter().all(|s| s.abs() <= 1e-8));
    }
}

#[test]
fn logistic_prob_reference_points() {
    let x = [1.0, -1.86, -1.019, -1.045];
    let p = |b3: f64| logistic_prob(&x, &[0.3, 0.1, 0.3, b3]).unwrap();
    assert!((p(0.001) - 0.452).abs() < 5e-4);
    assert!((p(0.5) - 0.329).abs() < 5e-4);
    assert_eq!(logistic_prob(&x, &[0.0; 4]).unwrap(), 0.5);
    let far = logistic_prob(&[700.0], &[1.0]).unwrap();
    assert!(far.is_finite() && far <= 1.0);
}

fn grid_minimum(q: &Matrix, step: f64) -> f64 {
    let k = q.nrows();
    let steps = (1.0 / step).round() as usize;
    let quad = |w: &[f64]| dot(w, &q.mul_vec(w));
    let mut best = f64::INFINITY;
    match k {
        1 => best = q[(0, 0)],
        2 => {
            for i in 0..=steps {
                let a = i as f64 / steps as f64;
                best = best.min(quad(&[a, 1.0 - a]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let a = i as f64 / steps as f64;
                    let b = j as f64 / steps as f64;
                    best = best.min(quad(&[a, b, (1.0 - a - b).max(0.0)]));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

fn random_psd(k: usize, rank: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, Purpose::Design, 7);
    let g = Matrix::from_fn(rank, k, |_, _| StandardNormal.sample(&mut rng));
    g.transpose().mul(&g)
}

#[test]
fn qp_beats_exhaustive_grid() {
    for seed in 0..50u64 {
        let k = 2 + (seed as usize % 2);
        let q = random_psd(k, 1 + (seed as usize % 3), seed);
        let sol = solve_simplex_qp_matrix(&q, &QpOptions::default()).unwrap();
        assert!(sol.objective <= grid_minimum(&q, 1e-3) + 1e-6, "seed {seed}");
    }
}

#[test]
fn qp_beats_vertices_equal_weights_and_random_points() {
    for seed in 0..20u64 {
        let k = 2 + (seed as usize % 10);
        let q = random_psd(k, 1 + (seed as usize % 6), seed + 100);
        let sol = solve_simplex_qp_matrix(&q, &QpOptions::default()).unwrap();
        let quad = |w: &[f64]| dot(w, &q.mul_vec(w));
        assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sol.weights.iter().all(|w| *w >= 0.0));
        for v in 0..k {
            assert!(sol.objective <= q[(v, v)] + 1e-9);
        }
        assert!(sol.objective <= quad(&vec![1.0 / k as f64; k]) + 1e-9);
        let mut rng = stream(seed, Purpose::Point, 9);
        for _ in 0..10_000 {
            // Flat Dirichlet via normalized exponentials.
            let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = e.iter().sum();
            let w: Vec<f64> = e.iter().map(|v| v / s).collect();
            assert!(sol.objective <= quad(&w) + 1e-9);
        }
    }
}
