//! Power diagnostics.
//!
//! Random choosers on the observed budgets give the benchmark against which
//! an observed CCEI is judged: uniform draws over discrete allocation
//! options (experiment style) or over budget shares (scanner style). The
//! share-permutation test keeps prices and expenditures fixed and shuffles
//! a consumer's own expenditure-share vectors across rounds.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::indices::ccei_of_costs;
use crate::relations::{CrossCosts, Tolerance};
use crate::rng::substream;

/// Budget lines for simulation: one price vector and one expenditure per round.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetDesign {
    label: String,
    prices: Vec<Vec<f64>>,
    expenditures: Vec<f64>,
}

impl BudgetDesign {
    pub fn new(label: impl Into<String>, prices: Vec<Vec<f64>>, expenditures: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if prices.len() != expenditures.len() {
            return Err(Error::InvalidArgument(
                "one expenditure per budget is required".into(),
            ));
        }
        let k = prices[0].len();
        for (row, p) in prices.iter().enumerate() {
            if p.len() != k {
                return Err(Error::DimensionMismatch {
                    row: row + 1,
                    expected: k,
                    found: p.len(),
                });
            }
            if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::NonPositivePrice { row: row + 1 });
            }
        }
        if let Some(row) = expenditures.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::ZeroExpenditure { row: row + 1 });
        }
        Ok(BudgetDesign {
            label: label.into(),
            prices,
            expenditures,
        })
    }

    /// Experiment style: every budget spends the same number of tokens.
    pub fn with_tokens(label: impl Into<String>, prices: Vec<Vec<f64>>, tokens: f64) -> Result<Self> {
        let n = prices.len();
        BudgetDesign::new(label, prices, vec![tokens; n])
    }

    /// Scanner style: the budgets and expenditures of an observed dataset.
    pub fn from_dataset(ds: &ChoiceDataset) -> Self {
        BudgetDesign {
            label: ds.label().to_string(),
            prices: ds.observations().iter().map(|o| o.prices().to_vec()).collect(),
            expenditures: ds.expenditures(),
        }
    }

    /// Default experiment-like design: `rounds` two-good budgets of 100
    /// tokens whose log price ratio is uniform on `[-ln 3, ln 3]`.
    ///
    /// Prices are `(r^{1/2}, r^{-1/2})` for price ratio `r`, so every budget
    /// line passes through a common neighbourhood of the diagonal and the
    /// lines cross one another.
    pub fn experiment_like(rounds: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "experiment-design", 0);
        let bound = 3f64.ln();
        let prices = (0..rounds)
            .map(|_| {
                let log_ratio: f64 = rng.random_range(-bound..=bound);
                vec![(0.5 * log_ratio).exp(), (-0.5 * log_ratio).exp()]
            })
            .collect();
        BudgetDesign {
            label: "experiment".into(),
            prices,
            expenditures: vec![100.0; rounds],
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rounds(&self) -> usize {
        self.prices.len()
    }

    pub fn goods(&self) -> usize {
        self.prices[0].len()
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn expenditures(&self) -> &[f64] {
        &self.expenditures
    }

    /// Bundle buying expenditure shares `shares` on budget `round`.
    pub fn bundle(&self, round: usize, shares: &[f64]) -> Vec<f64> {
        let m = self.expenditures[round];
        self.prices[round]
            .iter()
            .zip(shares)
            .map(|(p, s)| s * m / p)
            .collect()
    }

    /// Dataset of choices given per-round expenditure shares.
    pub fn dataset_from_shares(&self, shares: &[Vec<f64>]) -> ChoiceDataset {
        let rows = shares
            .iter()
            .enumerate()
            .map(|(t, s)| {
                crate::dataset::Observation::unchecked(
                    (t + 1).to_string(),
                    self.prices[t].clone(),
                    self.bundle(t, s),
                )
            })
            .collect();
        ChoiceDataset::from_observations_unchecked(self.label.clone(), rows)
    }
}

/// Scores from a batch of simulated choosers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub n_sims: usize,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl SimulationSummary {
    /// Summary statistics of `scores`; `sd` uses the `n - 1` denominator
    /// and is 0 for a single score.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        assert!(n > 0, "at least one simulated score is required");
        let mean = scores.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        SimulationSummary {
            n_sims: n,
            mean,
            sd,
            min: sorted[0],
            median,
            max: sorted[n - 1],
            scores,
        }
    }
}

fn ccei_fast(ds: &ChoiceDataset) -> f64 {
    ccei_of_costs(&CrossCosts::new(ds), Tolerance::default())
}

/// Uniform random choice among `n_options` equally spaced allocations on
/// every two-good budget: option `k` spends share `k / (n_options - 1)` on
/// the first good.
pub fn bronars_discrete(
    design: &BudgetDesign,
    n_options: usize,
    n_sims: usize,
    seed: u64,
) -> Result<SimulationSummary> {
    if n_options < 2 {
        return Err(Error::InvalidArgument("at least two options are required".into()));
    }
    if n_sims == 0 {
        return Err(Error::InvalidArgument("at least one simulation is required".into()));
    }
    if design.goods() != 2 {
        return Err(Error::WrongGoodsCount {
            expected: 2,
            found: design.goods(),
        });
    }
    let step = 1.0 / (n_options - 1) as f64;
    let scores = (0..n_sims)
        .into_par_iter()
        .map(|sim| {
            let mut rng = substream(seed, design.label(), sim as u64);
            let shares: Vec<Vec<f64>> = (0..design.rounds())
                .map(|_| {
                    let s = rng.random_range(0..n_options) as f64 * step;
                    vec![s, 1.0 - s]
                })
                .collect();
            ccei_fast(&design.dataset_from_shares(&shares))
        })
        .collect();
    Ok(SimulationSummary::from_scores(scores))
}

/// Shares drawn uniformly from the simplex (flat Dirichlet).
fn uniform_shares<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Uniform random budget shares on the observed budgets, same expenditures.
pub fn bronars_shares(ds: &ChoiceDataset, n_sims: usize, seed: u64) -> Result<SimulationSummary> {
    if n_sims == 0 {
        return Err(Error::InvalidArgument("at least one simulation is required".into()));
    }
    let design = BudgetDesign::from_dataset(ds);
    let k = design.goods();
    let scores = (0..n_sims)
        .into_par_iter()
        .map(|sim| {
            let mut rng = substream(seed, design.label(), sim as u64);
            let shares: Vec<Vec<f64>> = (0..design.rounds())
                .map(|_| uniform_shares(&mut rng, k))
                .collect();
            ccei_fast(&design.dataset_from_shares(&shares))
        })
        .collect();
    Ok(SimulationSummary::from_scores(scores))
}

/// Observed index minus the random-chooser benchmark mean.
pub fn selten_score(observed_ccei: f64, simulated: &SimulationSummary) -> f64 {
    observed_ccei - simulated.mean
}

/// Which variable is the regressand in [`power_adjusted_ccei`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressionDirection {
    /// Simulated CCEI regressed on observed CCEI.
    #[default]
    SimulatedOnObserved,
    /// Observed CCEI regressed on simulated CCEI.
    ObservedOnSimulated,
}

/// OLS residuals (with intercept) of one CCEI series on the other.
pub fn power_adjusted_ccei(
    observed: &[f64],
    simulated_means: &[f64],
    direction: RegressionDirection,
) -> Result<Vec<f64>> {
    if observed.len() != simulated_means.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    if observed.len() < 3 {
        return Err(Error::InvalidArgument("at least three consumers are required".into()));
    }
    let (y, x) = match direction {
        RegressionDirection::SimulatedOnObserved => (simulated_means, observed),
        RegressionDirection::ObservedOnSimulated => (observed, simulated_means),
    };
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0) {
        return Err(Error::Degenerate("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect())
}

/// Settings for [`permutation_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub abort_threshold: f64,
    pub abort_check_at: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            n_perm: 10_000,
            abort_threshold: 0.2,
            abort_check_at: 1_000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationOutcome {
    pub observed_ccei: f64,
    pub p_value: f64,
    pub aborted: bool,
    /// Permutations actually evaluated.
    pub draws: usize,
    /// `p_value < alpha`.
    pub approximate_maximizer: bool,
}

/// CCEI of the dataset with share vectors reassigned by permutation `draw`.
fn permuted_ccei(design: &BudgetDesign, shares: &[Vec<f64>], seed: u64, draw: usize) -> f64 {
    let mut rng = substream(seed, design.label(), draw as u64);
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.shuffle(&mut rng);
    let assigned: Vec<Vec<f64>> = order.iter().map(|&t| shares[t].clone()).collect();
    ccei_fast(&design.dataset_from_shares(&assigned))
}

/// Permuted CCEI scores for draws `0..n`, in draw order.
pub fn permuted_ccei_scores(ds: &ChoiceDataset, n: usize, seed: u64) -> Vec<f64> {
    let design = BudgetDesign::from_dataset(ds);
    let shares: Vec<Vec<f64>> = ds.observations().iter().map(|o| o.shares()).collect();
    (0..n)
        .into_par_iter()
        .map(|d| permuted_ccei(&design, &shares, seed, d))
        .collect()
}

/// Share of permuted scores at or above `observed`.
pub fn exceedance(observed: f64, permuted: &[f64]) -> f64 {
    let hits = permuted.iter().filter(|&&s| s >= observed - 1e-12).count();
    hits as f64 / permuted.len() as f64
}

/// Budget-fixing share-permutation test of random choice against
/// approximate utility maximization.
///
/// After `abort_check_at` draws the running exceedance share is compared
/// with `abort_threshold`; above it the test stops and reports the running
/// value.
pub fn permutation_test(ds: &ChoiceDataset, config: &PermutationConfig) -> Result<PermutationOutcome> {
    if ds.len() < 2 {
        return Err(Error::InvalidArgument("permutation test needs at least two rounds".into()));
    }
    if config.n_perm == 0 {
        return Err(Error::InvalidArgument("at least one permutation is required".into()));
    }
    let observed = ccei_fast(ds);
    let design = BudgetDesign::from_dataset(ds);
    let shares: Vec<Vec<f64>> = ds.observations().iter().map(|o| o.shares()).collect();
    let run = |range: std::ops::Range<usize>| -> usize {
        range
            .into_par_iter()
            .filter(|&d| permuted_ccei(&design, &shares, config.seed, d) >= observed - 1e-12)
            .count()
    };

    let first = config.abort_check_at.min(config.n_perm);
    let mut hits = run(0..first);
    let mut draws = first;
    let mut aborted = false;
    if first < config.n_perm {
        if first > 0 && hits as f64 / first as f64 > config.abort_threshold {
            aborted = true;
        } else {
            hits += run(first..config.n_perm);
            draws = config.n_perm;
        }
    }
    let p_value = hits as f64 / draws as f64;
    Ok(PermutationOutcome {
        observed_ccei: observed,
        p_value,
        aborted,
        draws,
        approximate_maximizer: p_value < config.alpha,
    })
}
