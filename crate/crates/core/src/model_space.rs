//! Candidate models over `p_fixed` always-included coefficients and `q`
//! optional ones, plus the column/point subsetting and augmentation that move
//! between a sub-model's coordinates and the full coefficient vector.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Largest `q` accepted by [`ModelSet::all_subsets`].
pub const MAX_ENUMERATED_Q: usize = 20;

/// One candidate model: the fixed prefix plus a strictly increasing set of
/// optional-coefficient indices in `0..q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct CandidateModel {
    p_fixed: usize,
    q: usize,
    included: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    p_fixed: usize,
    q: usize,
    included: Vec<usize>,
}

impl TryFrom<RawModel> for CandidateModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        CandidateModel::new(raw.p_fixed, raw.q, raw.included)
    }
}

impl From<CandidateModel> for RawModel {
    fn from(m: CandidateModel) -> Self {
        RawModel {
            p_fixed: m.p_fixed,
            q: m.q,
            included: m.included,
        }
    }
}

impl CandidateModel {
    pub fn new(p_fixed: usize, q: usize, included: Vec<usize>) -> Result<Self> {
        if let Some(w) = included.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(format!(
                "optional indices must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        if let Some(&bad) = included.iter().find(|&&j| j >= q) {
            return Err(Error::InvalidModel(format!(
                "optional index {bad} out of range for q = {q}"
            )));
        }
        if p_fixed + included.len() == 0 {
            return Err(Error::InvalidModel("model has no coefficients".into()));
        }
        Ok(CandidateModel {
            p_fixed,
            q,
            included,
        })
    }

    /// The model with every optional coefficient.
    pub fn full(p_fixed: usize, q: usize) -> Result<Self> {
        CandidateModel::new(p_fixed, q, (0..q).collect())
    }

    pub fn p_fixed(&self) -> usize {
        self.p_fixed
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn included(&self) -> &[usize] {
        &self.included
    }

    /// Number of coefficients fitted by this model.
    pub fn dim(&self) -> usize {
        self.p_fixed + self.included.len()
    }

    /// Length of the full coefficient vector.
    pub fn full_dim(&self) -> usize {
        self.p_fixed + self.q
    }

    pub fn is_full(&self) -> bool {
        self.included.len() == self.q
    }

    /// Positions of this model's coefficients within the full vector.
    pub fn columns(&self) -> Vec<usize> {
        (0..self.p_fixed)
            .chain(self.included.iter().map(|j| self.p_fixed + j))
            .collect()
    }

    /// True when every optional index of `other` is also in `self`.
    pub fn contains(&self, other: &CandidateModel) -> bool {
        other
            .included
            .iter()
            .all(|j| self.included.binary_search(j).is_ok())
    }

    fn check_full_len(&self, found: usize, context: &'static str) -> Result<()> {
        if found != self.full_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.full_dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Fixed columns followed by the model's optional columns.
pub fn subset_columns(full_design: &Matrix, model: &CandidateModel) -> Result<Matrix> {
    model.check_full_len(full_design.ncols(), "design columns")?;
    Ok(full_design.select_columns(&model.columns()))
}

/// Components of a full-length point that belong to `model`.
pub fn subset_point(x_star: &[f64], model: &CandidateModel) -> Result<Vec<f64>> {
    model.check_full_len(x_star.len(), "point length")?;
    Ok(model.columns().into_iter().map(|c| x_star[c]).collect())
}

/// A sub-model coefficient vector padded to full length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedVector {
    pub values: Vec<f64>,
    pub fill: f64,
}

/// Pads `beta_k` to full length, placing `fill` at coordinates the model omits.
pub fn augment(beta_k: &[f64], model: &CandidateModel, fill: f64) -> Result<AugmentedVector> {
    if beta_k.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "sub-model coefficients",
            expected: model.dim(),
            found: beta_k.len(),
        });
    }
    let mut values = alloc::vec![fill; model.full_dim()];
    for (c, b) in model.columns().into_iter().zip(beta_k) {
        values[c] = *b;
    }
    Ok(AugmentedVector { values, fill })
}

/// Non-empty ordered list of distinct candidate models sharing `p_fixed` and `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    models: Vec<CandidateModel>,
}

impl ModelSet {
    pub fn new(models: Vec<CandidateModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidModel("empty model set".into()))?;
        let (p, q) = (first.p_fixed, first.q);
        for (i, m) in models.iter().enumerate() {
            if m.p_fixed != p || m.q != q {
                return Err(Error::InvalidModel(format!(
                    "model {i} has (p_fixed, q) = ({}, {}), expected ({p}, {q})",
                    m.p_fixed, m.q
                )));
            }
            if models[..i].iter().any(|o| o.included == m.included) {
                return Err(Error::InvalidModel(format!("model {i} is a duplicate")));
            }
        }
        Ok(ModelSet { models })
    }

    /// All `2^q` subsets in binary-counting order: bit `j` of the counter
    /// selects optional index `j`.
    pub fn all_subsets(p_fixed: usize, q: usize) -> Result<Self> {
        if q > MAX_ENUMERATED_Q {
            return Err(Error::Capacity {
                q,
                max: MAX_ENUMERATED_Q,
            });
        }
        let models = (0u32..1 << q)
            .filter_map(|mask| {
                let included = (0..q).filter(|j| mask & (1 << j) != 0).collect();
                CandidateModel::new(p_fixed, q, included).ok()
            })
            .collect();
        // Only the all-empty model can be rejected, and only when p_fixed = 0.
        ModelSet::new(models)
    }

    /// `q + 1` nested models dropping optional coefficients from the lowest
    /// index upward: model `j` holds `{j, …, q−1}`, so the first is the full
    /// model and the last holds none.
    pub fn nested_dropping(p_fixed: usize, q: usize) -> Result<Self> {
        let models = (0..=q)
            .filter_map(|j| CandidateModel::new(p_fixed, q, (j..q).collect()).ok())
            .collect();
        ModelSet::new(models)
    }

    /// `q + 1` nested models adding optional coefficients from the lowest
    /// index upward: `{}`, `{0}`, `{0,1}`, …
    pub fn nested_adding(p_fixed: usize, q: usize) -> Result<Self> {
        let models = (0..=q)
            .filter_map(|j| CandidateModel::new(p_fixed, q, (0..j).collect()).ok())
            .collect();
        ModelSet::new(models)
    }

    pub fn models(&self) -> &[CandidateModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn p_fixed(&self) -> usize {
        self.models[0].p_fixed
    }

    pub fn q(&self) -> usize {
        self.models[0].q
    }

    pub fn full_dim(&self) -> usize {
        self.p_fixed() + self.q()
    }

    /// Largest number of coefficients among the models.
    pub fn max_dim(&self) -> usize {
        self.models.iter().map(CandidateModel::dim).max().unwrap_or(0)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, CandidateModel> {
        self.models.iter()
    }

    /// Appends a model, rejecting duplicates and mismatched shapes.
    pub fn push(&mut self, model: CandidateModel) -> Result<()> {
        let mut models = self.models.clone();
        models.push(model);
        *self = ModelSet::new(models)?;
        Ok(())
    }
}

impl<'a> IntoIterator for &'a ModelSet {
    type Item = &'a CandidateModel;
    type IntoIter = core::slice::Iter<'a, CandidateModel>;
    fn into_iter(self) -> Self::IntoIter {
        self.models.iter()
    }
}
