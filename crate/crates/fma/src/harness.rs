//! Seeded Monte Carlo studies comparing weighting schemes with an oracle fit.
//!
//! Replication `r` of every configuration draws its design from stream
//! `(seed, Design, r)` and its noise or Bernoulli uniforms from
//! `(seed, Noise, r)`, so configurations that differ only in `β` or in the
//! candidate set see common random numbers. Results are collected in
//! replication order before any reduction, which makes reports independent
//! of the number of worker threads.

use fma_core::averaging::{average_linear_fits, average_logistic_fits};
use fma_core::glm::{logistic_mle, ols_fit, sigmoid};
use fma_core::linalg::dot;
use fma_core::model_space::{subset_columns, subset_point};
use fma_core::rng::{stream, Purpose};
use fma_core::weights::{LinearFits, LogisticFits};
use fma_core::{CandidateModel, Matrix, ModelSet, Scheme};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub family: Family,
    pub case: String,
    pub n: usize,
    pub beta_true: Vec<f64>,
    pub candidate_set: ModelSet,
    /// Columns of the true support, fit directly by the oracle.
    pub oracle: CandidateModel,
    pub x_star: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    /// Draw a fresh design in every replication rather than reusing one.
    pub redraw_design: bool,
}

impl StudyConfig {
    fn validate(&self) -> Result<(), fma_core::Error> {
        let d = self.candidate_set.full_dim();
        for (what, len) in [("true coefficients", self.beta_true.len()), ("target point", self.x_star.len())] {
            if len != d {
                return Err(fma_core::Error::InvalidArgument(format!(
                    "{what} have length {len}, expected {d}"
                )));
            }
        }
        if self.oracle.full_dim() != d {
            return Err(fma_core::Error::InvalidArgument("oracle model has the wrong shape".into()));
        }
        if self.n <= self.candidate_set.max_dim() {
            return Err(fma_core::Error::InvalidArgument(format!(
                "n = {} is too small for a model of dimension {}",
                self.n,
                self.candidate_set.max_dim()
            )));
        }
        if self.n_reps == 0 {
            return Err(fma_core::Error::InvalidArgument("need at least one replication".into()));
        }
        Ok(())
    }

    /// The estimand: `x*ᵀβ` or its logistic transform.
    pub fn truth(&self) -> f64 {
        let eta = dot(&self.x_star, &self.beta_true);
        match self.family {
            Family::Linear => eta,
            Family::Logistic => sigmoid(eta),
        }
    }
}

/// Standard normal design with a leading column of ones.
pub fn draw_design(n: usize, d: usize, seed: u64, index: u64) -> Matrix {
    let mut rng = stream(seed, Purpose::Design, index);
    Matrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut rng) })
}

/// Response for one replication given the linear predictor.
pub fn draw_response(family: Family, eta: &[f64], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Noise, index);
    match family {
        Family::Linear => eta
            .iter()
            .map(|e| {
                let z: f64 = StandardNormal.sample(&mut rng);
                e + z
            })
            .collect(),
        Family::Logistic => eta
            .iter()
            .map(|e| if rng.random::<f64>() < sigmoid(*e) { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Fit on exactly the true-support columns and apply the functional.
pub fn oracle_estimate(
    family: Family,
    x: &Matrix,
    y: &[f64],
    true_support: &CandidateModel,
    x_star: &[f64],
) -> Result<f64, fma_core::Error> {
    let x_k = subset_columns(x, true_support)?;
    let xs_k = subset_point(x_star, true_support)?;
    let wrap = |e: fma_core::Error| e.with_model(true_support.included());
    match family {
        Family::Linear => Ok(dot(&xs_k, &ols_fit(&x_k, y).map_err(wrap)?.beta)),
        Family::Logistic => Ok(sigmoid(dot(&xs_k, &logistic_mle(&x_k, y).map_err(wrap)?.beta))),
    }
}

/// Root-mean-square deviation of the estimates from the truth.
pub fn error_metric(estimates: &[f64], truth: f64) -> Result<f64, fma_core::Error> {
    if estimates.is_empty() {
        return Err(fma_core::Error::InvalidArgument("no estimates to score".into()));
    }
    let ss = neumaier_sum(estimates.iter().map(|e| (e - truth) * (e - truth)));
    Ok((ss / estimates.len() as f64).sqrt())
}

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean, squared bias, variance (divisor `len`) and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

pub fn moments(estimates: &[f64], truth: f64) -> Moments {
    let k = estimates.len() as f64;
    let mean = neumaier_sum(estimates.iter().copied()) / k;
    let variance = neumaier_sum(estimates.iter().map(|e| (e - mean) * (e - mean))) / k;
    let bias2 = (mean - truth) * (mean - truth);
    Moments {
        mean,
        bias2,
        variance,
        mse: bias2 + variance,
    }
}

/// Estimator label used in reports: a weighting scheme or the oracle.
pub fn estimator_names(schemes: &[Scheme]) -> Vec<&'static str> {
    schemes.iter().map(|s| s.name()).chain(std::iter::once("oracle")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub family: Family,
    pub beta3: Option<f64>,
    pub n: usize,
    pub scheme: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub error: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub seed: u64,
    pub n_reps: usize,
    pub rows: Vec<ReportRow>,
    /// Replications dropped per configuration because a fit failed.
    pub failures: Vec<FailureCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub case: String,
    pub beta3: Option<f64>,
    pub n: usize,
    pub failed: usize,
    pub first_error: Option<String>,
}

fn one_replication(cfg: &StudyConfig, r: u64) -> Result<Vec<f64>, fma_core::Error> {
    let d = cfg.candidate_set.full_dim();
    let x = draw_design(cfg.n, d, cfg.seed, if cfg.redraw_design { r } else { 0 });
    let eta = x.mul_vec(&cfg.beta_true);
    let y = draw_response(cfg.family, &eta, cfg.seed, r);
    let mut out = Vec::with_capacity(cfg.schemes.len() + 1);
    match cfg.family {
        Family::Linear => {
            let fits = LinearFits::new(&x, &y, &cfg.candidate_set)?;
            for &s in &cfg.schemes {
                out.push(average_linear_fits(&fits, &cfg.x_star, s)?.value);
            }
        }
        Family::Logistic => {
            let fits = LogisticFits::new(&x, &y, &cfg.candidate_set)?;
            for &s in &cfg.schemes {
                out.push(average_logistic_fits(&fits, &cfg.x_star, s)?.value);
            }
        }
    }
    out.push(oracle_estimate(cfg.family, &x, &y, &cfg.oracle, &cfg.x_star)?);
    Ok(out)
}

/// Runs one configuration. Replications whose fits fail are dropped for
/// every estimator alike and counted.
pub fn run_config(cfg: &StudyConfig, beta3: Option<f64>) -> Result<(Vec<ReportRow>, FailureCount), fma_core::Error> {
    cfg.validate()?;
    let results: Vec<Result<Vec<f64>, fma_core::Error>> =
        (0..cfg.n_reps as u64).into_par_iter().map(|r| one_replication(cfg, r)).collect();
    let mut first_error = None;
    let mut failed = 0;
    let names = estimator_names(&cfg.schemes);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_reps); names.len()];
    for res in results {
        match res {
            Ok(vals) => columns.iter_mut().zip(vals).for_each(|(c, v)| c.push(v)),
            Err(e) => {
                failed += 1;
                if e.is_numerical() {
                    first_error.get_or_insert_with(|| e.to_string());
                } else {
                    return Err(e);
                }
            }
        }
    }
    if columns[0].is_empty() {
        return Err(fma_core::Error::InvalidArgument(format!(
            "every replication failed; first error: {}",
            first_error.unwrap_or_default()
        )));
    }
    let truth = cfg.truth();
    let rows = names
        .iter()
        .zip(&columns)
        .map(|(name, est)| {
            let m = moments(est, truth);
            ReportRow {
                case: cfg.case.clone(),
                family: cfg.family,
                beta3,
                n: cfg.n,
                scheme: (*name).to_owned(),
                truth,
                mean_estimate: m.mean,
                error: m.mse.sqrt(),
                bias2: m.bias2,
                variance: m.variance,
                mse: m.mse,
            }
        })
        .collect();
    Ok((
        rows,
        FailureCount {
            case: cfg.case.clone(),
            beta3,
            n: cfg.n,
            failed,
            first_error,
        },
    ))
}

fn run_all(study: &str, seed: u64, n_reps: usize, configs: Vec<(StudyConfig, Option<f64>)>) -> Result<StudyReport, fma_core::Error> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cfg, beta3) in &configs {
        let (r, f) = run_config(cfg, *beta3)?;
        rows.extend(r);
        failures.push(f);
    }
    Ok(StudyReport {
        study: study.to_owned(),
        seed,
        n_reps,
        rows,
        failures,
    })
}

pub const STUDY1_BETA: [f64; 10] = [0.3, 0.3, 0.5, 0.1, 0.5, 0.0, 0.6, 0.0, 0.1, 0.0];
pub const STUDY1_N_GRID: [usize; 10] = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];

/// Two cases of the nested design with five fixed and five optional
/// coefficients: `A` adds the true-support model to the six nested ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Case {
    A,
    B,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::A => "A",
            Case::B => "B",
        }
    }
}

pub fn study1_models(case: Case) -> Result<(ModelSet, CandidateModel), fma_core::Error> {
    let oracle = CandidateModel::new(5, 5, vec![1, 3])?;
    let mut set = ModelSet::nested_dropping(5, 5)?;
    if case == Case::A {
        set.push(oracle.clone())?;
    }
    Ok((set, oracle))
}

/// Target point for the first study: one followed by nine standard normals
/// from stream `(seed, Point, 0)`.
pub fn study1_point(seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Point, 0);
    std::iter::once(1.0)
        .chain((0..9).map(|_| StandardNormal.sample(&mut rng)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study1Options {
    pub cases: Vec<Case>,
    pub n_grid: Vec<usize>,
    pub n_reps: usize,
    pub seed: u64,
    pub redraw_design: bool,
}

impl Default for Study1Options {
    fn default() -> Self {
        Study1Options {
            cases: vec![Case::A, Case::B],
            n_grid: STUDY1_N_GRID.to_vec(),
            n_reps: 1000,
            seed: 1,
            redraw_design: true,
        }
    }
}

pub fn run_study1(opts: &Study1Options) -> Result<StudyReport, fma_core::Error> {
    let x_star = study1_point(opts.seed);
    let mut configs = Vec::new();
    for &case in &opts.cases {
        let (set, oracle) = study1_models(case)?;
        for &n in &opts.n_grid {
            configs.push((
                StudyConfig {
                    family: Family::Linear,
                    case: case.name().to_owned(),
                    n,
                    beta_true: STUDY1_BETA.to_vec(),
                    candidate_set: set.clone(),
                    oracle: oracle.clone(),
                    x_star: x_star.clone(),
                    n_reps: opts.n_reps,
                    seed: opts.seed,
                    schemes: vec![Scheme::Optimal],
                    redraw_design: opts.redraw_design,
                },
                None,
            ));
        }
    }
    run_all("study1", opts.seed, opts.n_reps, configs)
}

pub const STUDY2_BETA3_GRID: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5];
pub const STUDY2_LINEAR_POINT: [f64; 4] = [1.0, -1.855445, -1.018565, -1.045111];
pub const STUDY2_LOGISTIC_POINT: [f64; 4] = [1.0, -1.86, -1.019, -1.045];

pub fn study2_beta(beta3: f64) -> Vec<f64> {
    vec![0.3, 0.1, 0.3, beta3]
}

pub fn study2_point(family: Family) -> Vec<f64> {
    match family {
        Family::Linear => STUDY2_LINEAR_POINT.to_vec(),
        Family::Logistic => STUDY2_LOGISTIC_POINT.to_vec(),
    }
}

/// Nested intercept-first models; case `B` omits the largest.
pub fn study2_models(case: Case) -> Result<(ModelSet, CandidateModel), fma_core::Error> {
    let all = ModelSet::nested_adding(1, 3)?;
    let set = match case {
        Case::A => all,
        Case::B => ModelSet::new(all.models()[..3].to_vec())?,
    };
    Ok((set, CandidateModel::full(1, 3)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study2Options {
    pub families: Vec<Family>,
    pub cases: Vec<Case>,
    pub beta3_grid: Vec<f64>,
    pub n: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub redraw_design: bool,
}

impl Default for Study2Options {
    fn default() -> Self {
        Study2Options {
            families: vec![Family::Linear, Family::Logistic],
            cases: vec![Case::A, Case::B],
            beta3_grid: STUDY2_BETA3_GRID.to_vec(),
            n: 100,
            n_reps: 500,
            seed: 1,
            schemes: vec![Scheme::Optimal, Scheme::Aic],
            redraw_design: true,
        }
    }
}

pub fn run_study2(opts: &Study2Options) -> Result<StudyReport, fma_core::Error> {
    let mut configs = Vec::new();
    for &family in &opts.families {
        for &case in &opts.cases {
            let (set, oracle) = study2_models(case)?;
            for &b3 in &opts.beta3_grid {
                configs.push((
                    StudyConfig {
                        family,
                        case: case.name().to_owned(),
                        n: opts.n,
                        beta_true: study2_beta(b3),
                        candidate_set: set.clone(),
                        oracle: oracle.clone(),
                        x_star: study2_point(family),
                        n_reps: opts.n_reps,
                        seed: opts.seed,
                        schemes: opts.schemes.clone(),
                        redraw_design: opts.redraw_design,
                    },
                    Some(b3),
                ));
            }
        }
    }
    run_all("study2", opts.seed, opts.n_reps, configs)
}
