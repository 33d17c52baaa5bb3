//! Statistics across datasets and behavioral metrics.

use chrono::{Datelike, Timelike};
use rand::seq::SliceRandom;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::etl::TransactionRecord;
use crate::indices::ccei;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Pearson correlation with a t-based two-sided p-value on `n - 2` df.
fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero rank variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
    Ok(CorrelationResult {
        r,
        p_value: two_sided_t(t, n as f64 - 2.0),
        n,
    })
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("at least three pairs are required".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CceiDiff {
    /// `min(CCEI(s1), CCEI(s2)) - CCEI(s1 ∪ s2)`.
    pub diff: f64,
    /// Mean of the same statistic over random splits of the pooled data.
    pub benchmark_mean: f64,
    pub ccei_s1: f64,
    pub ccei_s2: f64,
    pub ccei_combined: f64,
}

/// Consistency gained by separating two scenarios, against random splits
/// of the same observations into parts of the same sizes.
pub fn ccei_diff(s1: &ChoiceDataset, s2: &ChoiceDataset, n_splits: usize, seed: u64) -> Result<CceiDiff> {
    if n_splits == 0 {
        return Err(Error::InvalidArgument("at least one split is required".into()));
    }
    let combined = s1.concat(s2)?;
    let ccei_combined = ccei(&combined);
    let (ccei_s1, ccei_s2) = (ccei(s1), ccei(s2));
    let label = format!("{}|{}", s1.label(), s2.label());
    let mut total = 0.0;
    for split in 0..n_splits {
        let mut rng = substream(seed, &label, split as u64);
        let mut idx: Vec<usize> = (0..combined.len()).collect();
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at(s1.len());
        total += ccei(&combined.subset(a)).min(ccei(&combined.subset(b))) - ccei_combined;
    }
    Ok(CceiDiff {
        diff: ccei_s1.min(ccei_s2) - ccei_combined,
        benchmark_mean: total / n_splits as f64,
        ccei_s1,
        ccei_s2,
        ccei_combined,
    })
}

/// Spearman correlation of `ln(x1/x2)` with `ln(p1/p2)` over rounds with
/// both quantities positive. Demand that slopes down gives `r` near -1.
pub fn downward_sloping_score(ds: &ChoiceDataset) -> Result<CorrelationResult> {
    if ds.goods() != 2 {
        return Err(Error::WrongGoodsCount {
            expected: 2,
            found: ds.goods(),
        });
    }
    let (mut q, mut p) = (Vec::new(), Vec::new());
    for obs in ds.observations() {
        let (x, pr) = (obs.bundle(), obs.prices());
        if x[0] > 0.0 && x[1] > 0.0 {
            q.push((x[0] / x[1]).ln());
            p.push((pr[0] / pr[1]).ln());
        }
    }
    if q.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} rounds with both goods bought, at least three are required",
            q.len()
        )));
    }
    spearman(&q, &p)
}

/// 1-based index of the allocation option chosen in a two-good round with
/// `n_options` equally spaced token splits, or `None` off the grid.
pub fn option_index(prices: &[f64], bundle: &[f64], n_options: usize) -> Option<usize> {
    let e = prices[0] * bundle[0] + prices[1] * bundle[1];
    let k = prices[0] * bundle[0] / e * (n_options - 1) as f64;
    let nearest = k.round();
    ((k - nearest).abs() <= 1e-6).then(|| nearest as usize + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiddleChooserRule {
    /// Budget share of good 1 counted as middle (inclusive).
    pub band: (f64, f64),
    /// Price ratios `p1/p2` of the rounds examined (inclusive).
    pub ratio_range: (f64, f64),
    /// Require only a strict majority of examined rounds instead of all.
    pub majority: bool,
}

impl Default for MiddleChooserRule {
    fn default() -> Self {
        MiddleChooserRule {
            band: (0.4, 0.6),
            ratio_range: (0.9, 1.1),
            majority: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MiddleChooser {
    pub is_middle: bool,
    pub qualifying_rounds: usize,
    pub middle_rounds: usize,
}

/// Whether a chooser splits the budget near evenly in rounds with near-equal
/// prices. With no such rounds the answer is no.
pub fn middle_chooser(ds: &ChoiceDataset, rule: &MiddleChooserRule) -> Result<MiddleChooser> {
    if ds.goods() != 2 {
        return Err(Error::WrongGoodsCount {
            expected: 2,
            found: ds.goods(),
        });
    }
    const EPS: f64 = 1e-9;
    let mut qualifying = 0;
    let mut middle = 0;
    for obs in ds.observations() {
        let ratio = obs.prices()[0] / obs.prices()[1];
        if ratio < rule.ratio_range.0 - EPS || ratio > rule.ratio_range.1 + EPS {
            continue;
        }
        qualifying += 1;
        let share = obs.shares()[0];
        if share >= rule.band.0 - EPS && share <= rule.band.1 + EPS {
            middle += 1;
        }
    }
    let is_middle = qualifying > 0
        && if rule.majority {
            2 * middle > qualifying
        } else {
            middle == qualifying
        };
    Ok(MiddleChooser {
        is_middle,
        qualifying_rounds: qualifying,
        middle_rounds: middle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// 24 clock hours.
    HoursOfDay,
    /// Monday to Sunday.
    DaysOfWeek,
    /// Days 1-10, 11-20 and 21 to month end.
    TenDayPeriods,
}

impl Grouping {
    pub fn groups(self) -> usize {
        match self {
            Grouping::HoursOfDay => 24,
            Grouping::DaysOfWeek => 7,
            Grouping::TenDayPeriods => 3,
        }
    }

    fn of(self, r: &TransactionRecord) -> usize {
        let ts = &r.timestamp;
        match self {
            Grouping::HoursOfDay => ts.hour() as usize,
            Grouping::DaysOfWeek => ts.weekday().num_days_from_monday() as usize,
            Grouping::TenDayPeriods => ((ts.day() as usize - 1) / 10).min(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Expenditure.
    Amount,
    /// Number of transactions.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolatilityResult {
    pub grouping: Grouping,
    pub basis: Basis,
    pub v: f64,
}

/// Month-to-month volatility of when a consumer shops.
///
/// For each of the 12 months the activity share of every group is taken
/// (all zero in a month without activity); each group's shares get a
/// sample standard deviation across months and `V` is their mean over all
/// groups.
pub fn volatility(
    records: &[TransactionRecord],
    consumer: &str,
    year: i32,
    grouping: Grouping,
    basis: Basis,
) -> Result<VolatilityResult> {
    let g = grouping.groups();
    let mut v = vec![vec![0.0; g]; 12];
    let mut any = false;
    for r in records
        .iter()
        .filter(|r| r.membership_id == consumer && r.timestamp.year() == year)
    {
        any = true;
        let amount = match basis {
            Basis::Amount => r.expenditure,
            Basis::Count => 1.0,
        };
        v[r.timestamp.month0() as usize][grouping.of(r)] += amount;
    }
    if !any {
        return Err(Error::InvalidArgument(format!(
            "no transactions for {consumer} in {year}"
        )));
    }
    let shares: Vec<Vec<f64>> = v
        .iter()
        .map(|month| {
            let total: f64 = month.iter().sum();
            if total > 0.0 {
                month.iter().map(|x| x / total).collect()
            } else {
                vec![0.0; g]
            }
        })
        .collect();
    let sd_sum: f64 = (0..g)
        .map(|k| {
            let mean = shares.iter().map(|m| m[k]).sum::<f64>() / 12.0;
            (shares.iter().map(|m| (m[k] - mean).powi(2)).sum::<f64>() / 11.0).sqrt()
        })
        .sum();
    Ok(VolatilityResult {
        grouping,
        basis,
        v: sd_sum / g as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscountMetrics {
    pub prop_discounted: f64,
    pub aggregate_rate: f64,
    pub mean_txn_rate: f64,
    pub transactions: usize,
}

/// Money saved through discounts in one year. Shelf amounts default to the
/// amount paid when missing.
pub fn discount_metrics(records: &[TransactionRecord], consumer: &str, year: i32) -> Result<DiscountMetrics> {
    let txns: Vec<&TransactionRecord> = records
        .iter()
        .filter(|r| r.membership_id == consumer && r.timestamp.year() == year)
        .collect();
    if txns.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no transactions for {consumer} in {year}"
        )));
    }
    let shelf: f64 = txns.iter().map(|r| r.shelf_or_final()).sum();
    if shelf <= 0.0 {
        return Err(Error::Degenerate("zero shelf expenditure".into()));
    }
    let paid: f64 = txns.iter().map(|r| r.expenditure).sum();
    let n = txns.len() as f64;
    let rate_sum: f64 = txns
        .iter()
        .map(|r| {
            let s = r.shelf_or_final();
            if s > 0.0 {
                (s - r.expenditure) / s
            } else {
                0.0
            }
        })
        .sum();
    Ok(DiscountMetrics {
        prop_discounted: txns.iter().filter(|r| r.discount_flag).count() as f64 / n,
        aggregate_rate: (shelf - paid) / shelf,
        mean_txn_rate: rate_sum / n,
        transactions: txns.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Paired t-test of `a - b` against zero, two-sided.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("at least two pairs are required".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(TTest {
        t,
        p_value: two_sided_t(t, (n - 1) as f64),
        df: n - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_dataset;
    use crate::etl::parse_transactions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[2.0, 5.0, 7.0, 9.0]).unwrap().r, 1.0);
        let down = spearman(&x, &[9.0, 5.0, 2.0, 1.0]).unwrap();
        assert_eq!(down.r, -1.0);
        assert_eq!(down.p_value, 0.0);
        assert!(spearman(&x, &[1.0; 4]).is_err());
    }

    #[test]
    fn spearman_with_ties() {
        // ranks (1, 2.5, 2.5, 4) and (1, 3, 2, 4)
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().r;
        let (rx, ry) = ([1.0, 2.5, 2.5, 4.0], [1.0, 3.0, 2.0, 4.0]);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - 2.5) * (b - 2.5)).sum();
        let vx: f64 = rx.iter().map(|a| (a - 2.5f64).powi(2)).sum();
        let vy: f64 = ry.iter().map(|a| (a - 2.5f64).powi(2)).sum();
        assert!((r - cov / (vx * vy).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_ignores_monotone_transforms() {
        let x = [0.3, 1.2, -0.4, 2.2, 0.9, 1.7];
        let y = [1.0, 0.2, 0.5, 3.0, -1.0, 2.0];
        let a = spearman(&x, &y).unwrap();
        let fx: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0).collect();
        assert_eq!(a, spearman(&fx, &gy).unwrap());
    }

    fn d_dagger() -> ChoiceDataset {
        make_dataset(vec![
            (vec![1.0, 2.0], vec![0.0, 1.0]),
            (vec![2.0, 1.0], vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn ccei_diff_of_duplicated_d_dagger() {
        let d = ccei_diff(&d_dagger(), &d_dagger(), 20, 1).unwrap();
        assert_eq!(d.ccei_s1, 0.5);
        assert_eq!(d.ccei_combined, 0.5);
        assert_eq!(d.diff, 0.0);
        assert!(d.benchmark_mean >= 0.0);
    }

    #[test]
    fn ccei_diff_zero_when_consistent() {
        let a = make_dataset(vec![(vec![1.0, 1.0], vec![2.0, 1.0])]).unwrap();
        let b = make_dataset(vec![(vec![1.0, 2.0], vec![3.0, 0.5])]).unwrap();
        let d = ccei_diff(&a, &b, 5, 0).unwrap();
        assert_eq!((d.diff, d.benchmark_mean), (0.0, 0.0));
    }

    #[test]
    fn downward_sloping_for_ces_and_constant_share() {
        let rows = |share_of: &dyn Fn(f64) -> f64| {
            make_dataset((0..8).map(|t| {
                let r = 0.4 + 0.3 * t as f64;
                let s = share_of(r);
                (vec![r, 1.0], vec![s * 10.0 / r, (1.0 - s) * 10.0])
            }))
            .unwrap()
        };
        let ces = rows(&|r| crate::estimation::predicted_share(1.5, 0.8, r));
        assert_eq!(downward_sloping_score(&ces).unwrap().r, -1.0);
        assert_eq!(downward_sloping_score(&rows(&|_| 0.3)).unwrap().r, -1.0);
        let flat = make_dataset(vec![(vec![1.0, 1.0], vec![1.0, 2.0]); 4]).unwrap();
        assert!(downward_sloping_score(&flat).is_err());
    }

    fn rounds(choices: &[(f64, usize)]) -> ChoiceDataset {
        make_dataset(choices.iter().map(|&(ratio, option)| {
            let p = vec![ratio, 1.0];
            let s = (option - 1) as f64 / 10.0;
            (p.clone(), vec![s * 100.0 / p[0], (1.0 - s) * 100.0])
        }))
        .unwrap()
    }

    #[test]
    fn middle_chooser_rules() {
        let rule = MiddleChooserRule::default();
        let all_sixth = rounds(&[(1.0, 6), (0.95, 6), (2.0, 1), (1.1, 6)]);
        let r = middle_chooser(&all_sixth, &rule).unwrap();
        assert_eq!((r.is_middle, r.qualifying_rounds), (true, 3));
        let one_corner = rounds(&[(1.0, 6), (0.95, 1), (1.05, 7)]);
        assert!(!middle_chooser(&one_corner, &rule).unwrap().is_middle);
        let majority = MiddleChooserRule { majority: true, ..rule };
        assert!(middle_chooser(&one_corner, &majority).unwrap().is_middle);
        let none = rounds(&[(2.0, 6), (0.5, 6)]);
        let r = middle_chooser(&none, &rule).unwrap();
        assert_eq!((r.is_middle, r.qualifying_rounds), (false, 0));
        let o = all_sixth.get(2);
        assert_eq!(option_index(o.prices(), o.bundle(), 11), Some(1));
        assert_eq!(option_index(&[1.0, 1.0], &[33.0, 67.0], 11), None);
    }

    fn txns(rows: &[(&str, &str, f64, Option<f64>)]) -> Vec<TransactionRecord> {
        let mut text = String::from(
            "membership_id,store_id,timestamp,category,quantity_kg,expenditure,shelf_expenditure\n",
        );
        for (who, ts, paid, shelf) in rows {
            let shelf = shelf.map(|s| s.to_string()).unwrap_or_default();
            text.push_str(&format!("{who},S,{ts},Meat,1,{paid},{shelf}\n"));
        }
        parse_transactions(text.as_bytes(), false).unwrap().records
    }

    #[test]
    fn volatility_cases() {
        // same hour every month
        let steady: Vec<_> = (1..=12)
            .map(|m| ("c", format!("2019-{m:02}-05 10:00:00"), 5.0, None))
            .collect();
        let steady: Vec<_> = steady.iter().map(|(a, b, c, d)| (*a, b.as_str(), *c, *d)).collect();
        let v = volatility(&txns(&steady), "c", 2019, Grouping::HoursOfDay, Basis::Amount).unwrap();
        assert_eq!(v.v, 0.0);

        // alternating between 10:00 and 18:00
        let alt: Vec<_> = (1..=12)
            .map(|m| {
                let h = if m % 2 == 0 { 10 } else { 18 };
                ("c", format!("2019-{m:02}-05 {h}:00:00"), 5.0, None)
            })
            .collect();
        let alt: Vec<_> = alt.iter().map(|(a, b, c, d)| (*a, b.as_str(), *c, *d)).collect();
        let recs = txns(&alt);
        let v = volatility(&recs, "c", 2019, Grouping::HoursOfDay, Basis::Count).unwrap();
        let sd = (12.0 * 0.25f64 / 11.0).sqrt();
        assert!((v.v - 2.0 * sd / 24.0).abs() < 1e-12);
        assert!(volatility(&recs, "c", 2018, Grouping::HoursOfDay, Basis::Count).is_err());
    }

    #[test]
    fn volatility_scale_free() {
        let a = txns(&[
            ("c", "2019-01-03 10:00:00", 4.0, None),
            ("c", "2019-01-15 10:00:00", 2.0, None),
            ("c", "2019-03-25 10:00:00", 7.0, None),
        ]);
        let b: Vec<_> = a
            .iter()
            .cloned()
            .map(|mut r| {
                r.expenditure *= 3.0;
                r
            })
            .collect();
        let va = volatility(&a, "c", 2019, Grouping::TenDayPeriods, Basis::Amount).unwrap();
        let vb = volatility(&b, "c", 2019, Grouping::TenDayPeriods, Basis::Amount).unwrap();
        assert!((va.v - vb.v).abs() < 1e-12);
    }

    #[test]
    fn discount_examples() {
        let none = txns(&[("c", "2019-01-03 10:00:00", 4.0, None)]);
        let m = discount_metrics(&none, "c", 2019).unwrap();
        assert_eq!((m.prop_discounted, m.aggregate_rate, m.mean_txn_rate), (0.0, 0.0, 0.0));
        let one = txns(&[("c", "2019-01-03 10:00:00", 8.0, Some(10.0))]);
        let m = discount_metrics(&one, "c", 2019).unwrap();
        assert_eq!(m.prop_discounted, 1.0);
        assert!((m.aggregate_rate - 0.2).abs() < 1e-12 && (m.mean_txn_rate - 0.2).abs() < 1e-12);
        let two = txns(&[
            ("c", "2019-01-03 10:00:00", 10.0, Some(10.0)),
            ("c", "2019-02-03 10:00:00", 5.0, Some(10.0)),
        ]);
        let m = discount_metrics(&two, "c", 2019).unwrap();
        assert_eq!((m.prop_discounted, m.aggregate_rate, m.mean_txn_rate), (0.5, 0.25, 0.25));
        assert!(discount_metrics(&two, "x", 2019).is_err());
    }

    #[test]
    fn paired_t_behaviour() {
        assert!(paired_ttest(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shift = Normal::new(1.0, 0.1).unwrap();
        let b: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let a: Vec<f64> = b.iter().map(|v| v + shift.sample(&mut rng)).collect();
        assert!(paired_ttest(&a, &b).unwrap().p_value < 1e-6);

        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut accepted = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..100).map(|_| noise.sample(&mut rng)).collect();
            let b = vec![0.0; 100];
            if paired_ttest(&a, &b).unwrap().p_value > 0.05 {
                accepted += 1;
            }
        }
        assert!(accepted >= 180, "{accepted}");
    }
}
