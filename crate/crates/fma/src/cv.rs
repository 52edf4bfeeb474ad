//! Repeated train/test comparison of averaging against selection and the
//! full model.

use fma_core::averaging::average_linear_fits;
use fma_core::glm::ols_fit;
use fma_core::linalg::dot;
use fma_core::model_space::{subset_columns, subset_point};
use fma_core::weights::LinearFits;
use fma_core::{CandidateModel, ModelSet, Scheme};
use fma_core::rng::{derive_seed, stream, Purpose};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset, Family};

#[derive(Debug, thiserror::Error)]
pub enum CvError {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Fit(#[from] fma_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AvgOptimal,
    AvgAic,
    BestSubset,
    FullModel,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::AvgOptimal, Method::AvgAic, Method::BestSubset, Method::FullModel];

    pub fn name(self) -> &'static str {
        match self {
            Method::AvgOptimal => "avg_optimal",
            Method::AvgAic => "avg_aic",
            Method::BestSubset => "best_subset",
            Method::FullModel => "full_model",
        }
    }
}

/// How best-subset selection picks its model from the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectBy {
    /// K-fold cross-validation inside the training set.
    Cv,
    Aic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub n_train: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub select_by: SelectBy,
    pub inner_folds: usize,
}

impl CvOptions {
    pub fn new(n_train: usize, seed: u64) -> Self {
        CvOptions {
            n_train,
            n_repeats: 5,
            seed,
            methods: Method::ALL.to_vec(),
            select_by: SelectBy::Cv,
            inner_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatLog {
    pub repeat: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Training-set residual standard deviation of the full model.
    pub sigma_full: f64,
    /// Mean squared test error per method, in `methods` order.
    pub errors: Vec<f64>,
    pub selected: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub methods: Vec<Method>,
    pub mean_errors: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub select_by: SelectBy,
    pub repeats: Vec<RepeatLog>,
}

impl CvReport {
    pub fn error_of(&self, method: Method) -> Option<f64> {
        self.methods.iter().position(|m| *m == method).map(|i| self.mean_errors[i])
    }
}

fn all_subsets_for(data: &Dataset) -> Result<ModelSet, fma_core::Error> {
    ModelSet::all_subsets(1, data.n_predictors())
}

fn mean_sq_error(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / y.len() as f64
}

fn model_predictions(train: &Dataset, test: &Dataset, model: &CandidateModel) -> Result<Vec<f64>, fma_core::Error> {
    let x_k = subset_columns(&train.design, model)?;
    let fit = ols_fit(&x_k, &train.response).map_err(|e| e.with_model(model.included()))?;
    (0..test.len())
        .map(|i| Ok(dot(&subset_point(test.design.row(i), model)?, &fit.beta)))
        .collect()
}

/// Best-subset model chosen on the training data alone.
pub fn select_subset(train: &Dataset, models: &ModelSet, select_by: SelectBy, folds: usize, seed: u64) -> Result<CandidateModel, CvError> {
    match select_by {
        SelectBy::Aic => {
            let fits = LinearFits::new(&train.design, &train.response, models)?;
            let best = fits
                .fits()
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.aic().total_cmp(&b.1.aic()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(models.models()[best].clone())
        }
        SelectBy::Cv => {
            let n = train.len();
            if folds < 2 || folds > n {
                return Err(fma_core::Error::InvalidArgument(format!("cannot make {folds} folds from {n} rows")).into());
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream(seed, Purpose::Fold, 0));
            let fold_of = |pos: usize| pos * folds / n;
            let mut cv_err = vec![0.0; models.len()];
            for f in 0..folds {
                let inner_train: Vec<usize> = (0..n).filter(|&p| fold_of(p) != f).map(|p| order[p]).collect();
                let inner_test: Vec<usize> = (0..n).filter(|&p| fold_of(p) == f).map(|p| order[p]).collect();
                let tr = train.subset(&inner_train);
                let te = train.subset(&inner_test);
                for (k, model) in models.iter().enumerate() {
                    let pred = model_predictions(&tr, &te, model)?;
                    cv_err[k] += pred.iter().zip(&te.response).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
                }
            }
            let best = cv_err
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(models.models()[best].clone())
        }
    }
}

/// Mean over repeats of the best-subset test error.
pub fn best_subset_cv(data: &Dataset, opts: &CvOptions) -> Result<f64, CvError> {
    let mut o = opts.clone();
    o.methods = vec![Method::BestSubset];
    Ok(cv_compare(data, &o)?.mean_errors[0])
}

fn run_repeat(data: &Dataset, models: &ModelSet, opts: &CvOptions, repeat: usize) -> Result<RepeatLog, CvError> {
    let (train_rows, test_rows) = split_indices(data.len(), opts.n_train, opts.seed, repeat as u64)?;
    let train = data.subset(&train_rows);
    let test = data.subset(&test_rows);
    let full_model = CandidateModel::full(1, data.n_predictors())?;
    let fits = LinearFits::new(&train.design, &train.response, models)?;
    let mut errors = Vec::with_capacity(opts.methods.len());
    let mut selected = None;
    for &m in &opts.methods {
        let pred: Vec<f64> = match m {
            Method::AvgOptimal | Method::AvgAic => {
                let scheme = if m == Method::AvgOptimal { Scheme::Optimal } else { Scheme::Aic };
                (0..test.len())
                    .map(|i| average_linear_fits(&fits, test.design.row(i), scheme).map(|e| e.value))
                    .collect::<Result<_, _>>()?
            }
            Method::BestSubset => {
                let choice = select_subset(
                    &train,
                    models,
                    opts.select_by,
                    opts.inner_folds,
                    derive_seed(opts.seed, Purpose::Fold, repeat as u64),
                )?;
                let p = model_predictions(&train, &test, &choice)?;
                selected = Some(choice.included().to_vec());
                p
            }
            Method::FullModel => model_predictions(&train, &test, &full_model)?,
        };
        errors.push(mean_sq_error(&pred, &test.response));
    }
    Ok(RepeatLog {
        repeat,
        train_rows,
        test_rows,
        sigma_full: fits.sigma2().sqrt(),
        errors,
        selected,
    })
}

/// Every method sees the same split within a repeat.
pub fn cv_compare(data: &Dataset, opts: &CvOptions) -> Result<CvReport, CvError> {
    if data.family != Family::Linear {
        return Err(fma_core::Error::InvalidArgument("cross-validated comparison needs a linear response".into()).into());
    }
    if opts.n_repeats == 0 || opts.methods.is_empty() {
        return Err(fma_core::Error::InvalidArgument("need at least one repeat and one method".into()).into());
    }
    let models = all_subsets_for(data)?;
    let repeats: Vec<RepeatLog> = (0..opts.n_repeats)
        .into_par_iter()
        .map(|r| run_repeat(data, &models, opts, r))
        .collect::<Result<_, _>>()?;
    let mean_errors = (0..opts.methods.len())
        .map(|j| repeats.iter().map(|r| r.errors[j]).sum::<f64>() / repeats.len() as f64)
        .collect();
    Ok(CvReport {
        methods: opts.methods.clone(),
        mean_errors,
        n_train: opts.n_train,
        n_test: data.len() - opts.n_train,
        seed: opts.seed,
        select_by: opts.select_by,
        repeats,
    })
}
