//! Budget-choice datasets.
//!
//! A [`ChoiceDataset`] is an ordered list of observations `(p, x)`: the
//! price vector faced and the bundle chosen. Every analysis in the crate
//! consumes one. Construction validates the data once so that downstream
//! code can rely on strictly positive prices, non-negative quantities and
//! strictly positive expenditure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed choice: prices faced and bundle bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    obs_id: String,
    prices: Vec<f64>,
    bundle: Vec<f64>,
}

impl Observation {
    /// Validates a single row. `row` is the 1-based position used in error
    /// messages.
    pub(crate) fn checked(
        row: usize,
        obs_id: String,
        prices: Vec<f64>,
        bundle: Vec<f64>,
    ) -> Result<Self> {
        if prices.len() != bundle.len() {
            return Err(Error::DimensionMismatch {
                row,
                expected: prices.len(),
                found: bundle.len(),
            });
        }
        if prices.is_empty() {
            return Err(Error::DimensionMismatch {
                row,
                expected: 1,
                found: 0,
            });
        }
        if prices.iter().chain(bundle.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return Err(Error::NonPositivePrice { row });
        }
        if bundle.iter().any(|&q| q < 0.0) {
            return Err(Error::NegativeQuantity { row });
        }
        let obs = Observation {
            obs_id,
            prices,
            bundle,
        };
        if obs.expenditure() <= 0.0 {
            return Err(Error::ZeroExpenditure { row });
        }
        Ok(obs)
    }

    pub(crate) fn unchecked(obs_id: String, prices: Vec<f64>, bundle: Vec<f64>) -> Self {
        debug_assert_eq!(prices.len(), bundle.len());
        Observation {
            obs_id,
            prices,
            bundle,
        }
    }

    pub fn obs_id(&self) -> &str {
        &self.obs_id
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn bundle(&self) -> &[f64] {
        &self.bundle
    }

    /// Number of goods.
    pub fn goods(&self) -> usize {
        self.prices.len()
    }

    /// Money spent on the chosen bundle, `p · x`.
    pub fn expenditure(&self) -> f64 {
        dot(&self.prices, &self.bundle)
    }

    /// Cost of `bundle` at this observation's prices.
    pub fn cost_of(&self, bundle: &[f64]) -> f64 {
        dot(&self.prices, bundle)
    }

    /// Expenditure shares `p_k x_k / (p · x)`.
    pub fn shares(&self) -> Vec<f64> {
        let total = self.expenditure();
        self.prices
            .iter()
            .zip(&self.bundle)
            .map(|(p, x)| p * x / total)
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An ordered set of observations sharing the same number of goods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    label: String,
    observations: Vec<Observation>,
}

impl ChoiceDataset {
    /// Builds a dataset from `(obs_id, prices, bundle)` rows, validating
    /// every row and the common number of goods.
    pub fn new<S, I>(label: impl Into<String>, rows: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<f64>, Vec<f64>)>,
    {
        let mut observations = Vec::new();
        let mut goods = None;
        for (idx, (id, prices, bundle)) in rows.into_iter().enumerate() {
            let row = idx + 1;
            let obs = Observation::checked(row, id.into(), prices, bundle)?;
            match goods {
                None => goods = Some(obs.goods()),
                Some(k) if k != obs.goods() => {
                    return Err(Error::DimensionMismatch {
                        row,
                        expected: k,
                        found: obs.goods(),
                    })
                }
                Some(_) => {}
            }
            observations.push(obs);
        }
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(ChoiceDataset {
            label: label.into(),
            observations,
        })
    }

    pub(crate) fn from_observations_unchecked(
        label: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Self {
        debug_assert!(!observations.is_empty());
        ChoiceDataset {
            label: label.into(),
            observations,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn get(&self, index: usize) -> &Observation {
        &self.observations[index]
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// Always false for a constructed dataset; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of goods `K`.
    pub fn goods(&self) -> usize {
        self.observations[0].goods()
    }

    pub fn expenditures(&self) -> Vec<f64> {
        self.observations.iter().map(Observation::expenditure).collect()
    }

    pub fn total_expenditure(&self) -> f64 {
        self.observations.iter().map(Observation::expenditure).sum()
    }

    /// The sub-dataset induced by `indices` (0-based, in the given order).
    ///
    /// Panics if `indices` is empty or out of range.
    pub fn subset(&self, indices: &[usize]) -> ChoiceDataset {
        assert!(!indices.is_empty(), "subset must be non-empty");
        let observations = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        ChoiceDataset::from_observations_unchecked(self.label.clone(), observations)
    }

    /// Observations of `self` followed by those of `other`.
    pub fn concat(&self, other: &ChoiceDataset) -> Result<ChoiceDataset> {
        if self.goods() != other.goods() {
            return Err(Error::DimensionMismatch {
                row: self.len() + 1,
                expected: self.goods(),
                found: other.goods(),
            });
        }
        let mut observations = self.observations.clone();
        observations.extend(other.observations.iter().cloned());
        Ok(ChoiceDataset::from_observations_unchecked(
            self.label.clone(),
            observations,
        ))
    }
}

/// Builds an unlabeled dataset from `(prices, bundle)` rows; observation ids
/// are the 1-based row numbers.
pub fn make_dataset<I>(rows: I) -> Result<ChoiceDataset>
where
    I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
{
    ChoiceDataset::new(
        "",
        rows.into_iter()
            .enumerate()
            .map(|(i, (p, x))| ((i + 1).to_string(), p, x)),
    )
}

/// Expenditure of a single observation.
pub fn expenditure(obs: &Observation) -> f64 {
    obs.expenditure()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dagger() -> ChoiceDataset {
        make_dataset(vec![
            (vec![1.0, 2.0], vec![0.0, 1.0]),
            (vec![2.0, 1.0], vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn builds_two_by_two() {
        let ds = dagger();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.goods(), 2);
        assert_eq!(ds.get(0).obs_id(), "1");
        assert_eq!(ds.get(1).bundle(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_zero_price_with_row() {
        let err = make_dataset(vec![
            (vec![1.0, 2.0], vec![0.0, 1.0]),
            (vec![0.0, 1.0], vec![1.0, 0.0]),
        ])
        .unwrap_err();
        assert_eq!(err, Error::NonPositivePrice { row: 2 });
        assert_eq!(err.to_string(), "non-positive price at row 2");
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = make_dataset(vec![
            (vec![1.0, 2.0], vec![0.0, 1.0]),
            (vec![1.0, 1.0, 1.0], vec![1.0, 0.0, 2.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { row: 2, .. }));
    }

    #[test]
    fn rejects_negative_and_zero_spend() {
        assert_eq!(
            make_dataset(vec![(vec![1.0, 2.0], vec![-1.0, 1.0])]).unwrap_err(),
            Error::NegativeQuantity { row: 1 }
        );
        assert_eq!(
            make_dataset(vec![(vec![1.0, 2.0], vec![0.0, 0.0])]).unwrap_err(),
            Error::ZeroExpenditure { row: 1 }
        );
        assert_eq!(
            make_dataset(Vec::<(Vec<f64>, Vec<f64>)>::new()).unwrap_err(),
            Error::EmptyDataset
        );
    }

    #[test]
    fn expenditure_examples() {
        let cases = [
            ([1.0, 2.0], [0.0, 1.0], 2.0),
            ([2.0, 1.0], [3.0, 1.0], 7.0),
            ([10.0, 20.0], [0.0, 5.0], 100.0),
        ];
        for (p, x, e) in cases {
            let ds = make_dataset(vec![(p.to_vec(), x.to_vec())]).unwrap();
            assert_eq!(expenditure(ds.get(0)), e);
        }
    }

    #[test]
    fn shares_sum_to_one() {
        let ds = make_dataset(vec![(vec![2.0, 1.0, 4.0], vec![3.0, 1.0, 0.5])]).unwrap();
        let s: f64 = ds.get(0).shares().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
