//! Consistency under extra preference structure.
//!
//! * FOSD for two equiprobable states, by mirror augmentation.
//! * Homotheticity: every cycle of cost ratios `p^i·x^j / p^i·x^i` must
//!   multiply to at least one. The efficiency is the exponentiated minimum
//!   mean log-ratio over cycles (Karp's minimum mean cycle).
//! * Quasilinearity (cyclical monotonicity): every cycle must satisfy
//!   `Σ p^i·x^next ≥ Σ p^i·x^i`. The efficiency is the minimum cycle ratio.
//! * GAPP: acyclicity of the price relation `p^i ≿ p^j ⇔ p^i·x^j ≤ e·p^j·x^j`.

use serde::Serialize;

use crate::dataset::{ChoiceDataset, Observation};
use crate::error::{Error, Result};
use crate::garp::passes_at;
use crate::indices::{ccei, critical_efficiency, efficiency_candidates};
use crate::relations::{CrossCosts, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RestrictionKind {
    Fosd,
    Homothetic,
    Quasilinear,
    Gapp,
}

impl RestrictionKind {
    pub const ALL: [RestrictionKind; 4] = [
        RestrictionKind::Homothetic,
        RestrictionKind::Quasilinear,
        RestrictionKind::Fosd,
        RestrictionKind::Gapp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RestrictionKind::Fosd => "fosd",
            RestrictionKind::Homothetic => "homothetic",
            RestrictionKind::Quasilinear => "quasilinear",
            RestrictionKind::Gapp => "gapp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictionReport {
    pub kind: RestrictionKind,
    pub efficiency: f64,
    pub passes_at_1: bool,
    /// Efficiency level the `passes` verdict refers to.
    pub tested_efficiency: f64,
    pub passes: bool,
}

// values within this distance of 1 are reported as exactly 1
const SNAP: f64 = 1e-12;

fn snap_unit(v: f64) -> f64 {
    if v >= 1.0 - SNAP {
        1.0
    } else {
        v.max(0.0)
    }
}

fn require_two_goods(ds: &ChoiceDataset) -> Result<()> {
    if ds.goods() != 2 {
        return Err(Error::WrongGoodsCount {
            expected: 2,
            found: ds.goods(),
        });
    }
    Ok(())
}

/// The dataset followed by its mirror image: each observation with both
/// prices and quantities swapped between the two states.
pub fn mirror_augment(ds: &ChoiceDataset) -> Result<ChoiceDataset> {
    require_two_goods(ds)?;
    let mut obs: Vec<Observation> = ds.observations().to_vec();
    for o in ds.observations() {
        let p = o.prices();
        let x = o.bundle();
        obs.push(Observation::unchecked(
            format!("{}~", o.obs_id()),
            vec![p[1], p[0]],
            vec![x[1], x[0]],
        ));
    }
    Ok(ChoiceDataset::from_observations_unchecked(ds.label(), obs))
}

/// CCEI of the mirror-augmented dataset.
pub fn fosd_ccei(ds: &ChoiceDataset) -> Result<f64> {
    Ok(ccei(&mirror_augment(ds)?))
}

/// Karp's minimum mean cycle weight on a complete digraph without
/// self-loops. `None` when there is no cycle (fewer than two nodes).
pub(crate) fn min_mean_cycle(n: usize, weight: impl Fn(usize, usize) -> f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    // walks[k][v]: lightest walk of exactly k arcs ending at v, from any start
    let mut walks = vec![vec![f64::INFINITY; n]; n + 1];
    walks[0].fill(0.0);
    for k in 1..=n {
        for v in 0..n {
            let mut best = f64::INFINITY;
            for u in 0..n {
                if u != v {
                    let c = walks[k - 1][u] + weight(u, v);
                    if c < best {
                        best = c;
                    }
                }
            }
            walks[k][v] = best;
        }
    }
    (0..n)
        .filter(|&v| walks[n][v].is_finite())
        .map(|v| {
            (0..n)
                .filter(|&k| walks[k][v].is_finite())
                .map(|k| (walks[n][v] - walks[k][v]) / (n - k) as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .min_by(f64::total_cmp)
}

/// Homothetic efficiency: `exp` of the minimum mean log cost ratio over
/// cycles, clamped to `[0, 1]`.
pub fn harp_efficiency(ds: &ChoiceDataset) -> f64 {
    let costs = CrossCosts::new(ds);
    match min_mean_cycle(costs.len(), |i, j| costs.ratio(i, j).ln()) {
        None => 1.0,
        Some(mu) => snap_unit(mu.exp()),
    }
}

/// A negative cycle under arc weights `w`, found by Bellman-Ford from a
/// virtual source joined to every node.
fn negative_cycle(n: usize, w: &[f64], eps: f64) -> Option<Vec<usize>> {
    let mut dist = vec![0.0; n];
    let mut pred = vec![usize::MAX; n];
    let mut last = None;
    for _ in 0..n {
        last = None;
        for u in 0..n {
            for v in 0..n {
                if u != v && dist[u] + w[u * n + v] < dist[v] - eps {
                    dist[v] = dist[u] + w[u * n + v];
                    pred[v] = u;
                    last = Some(v);
                }
            }
        }
        last?;
    }
    // still relaxing after n rounds: walking back n steps lands on a cycle
    let mut v = last?;
    for _ in 0..n {
        v = pred[v];
    }
    let start = v;
    let mut cycle = vec![start];
    let mut u = pred[start];
    while u != start {
        cycle.push(u);
        u = pred[u];
    }
    cycle.reverse();
    Some(cycle)
}

/// Minimum over cycles of `Σ num(arc) / Σ den(arc)` with positive
/// denominators, by repeated negative-cycle detection on `num - λ·den`.
pub(crate) fn min_ratio_cycle(
    n: usize,
    num: impl Fn(usize, usize) -> f64,
    den: impl Fn(usize, usize) -> f64,
) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let ratio_of = |cycle: &[usize]| {
        let mut a = 0.0;
        let mut b = 0.0;
        for (k, &u) in cycle.iter().enumerate() {
            let v = cycle[(k + 1) % cycle.len()];
            a += num(u, v);
            b += den(u, v);
        }
        a / b
    };
    let mut lambda = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| ratio_of(&[i, j]))
        .fold(f64::INFINITY, f64::min);
    let scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| num(i, j).abs().max(den(i, j).abs()))
        .fold(0.0, f64::max);
    let eps = 1e-12 * scale.max(1.0);
    let mut w = vec![0.0; n * n];
    loop {
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    w[u * n + v] = num(u, v) - lambda * den(u, v);
                }
            }
        }
        match negative_cycle(n, &w, eps) {
            Some(cycle) => {
                let r = ratio_of(&cycle);
                if r < lambda {
                    lambda = r;
                } else {
                    return Some(lambda);
                }
            }
            None => return Some(lambda),
        }
    }
}

/// Quasilinear efficiency: the minimum over cycles of the ratio of
/// cross-valuations to own expenditures, clamped to `[0, 1]`.
pub fn quasilinear_efficiency(ds: &ChoiceDataset) -> f64 {
    let costs = CrossCosts::new(ds);
    match min_ratio_cycle(costs.len(), |i, j| costs.cost(i, j), |i, _| costs.expenditure(i)) {
        None => 1.0,
        Some(r) => snap_unit(r),
    }
}

/// Largest `e` at which GAPP holds.
pub fn gapp_efficiency(ds: &ChoiceDataset) -> f64 {
    let tol = Tolerance::default();
    let costs = CrossCosts::new(ds).price_side();
    if costs.len() < 2 {
        return 1.0;
    }
    let cand = efficiency_candidates(&costs, tol);
    critical_efficiency(&cand, |e| passes_at(&costs, e, tol))
}

/// GAPP verdict at `e` together with the GAPP efficiency.
pub fn check_gapp(ds: &ChoiceDataset, e: f64) -> Result<RestrictionReport> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::EfficiencyOutOfRange(e));
    }
    let tol = Tolerance::default();
    let costs = CrossCosts::new(ds).price_side();
    Ok(RestrictionReport {
        kind: RestrictionKind::Gapp,
        efficiency: gapp_efficiency(ds),
        passes_at_1: passes_at(&costs, 1.0, tol),
        tested_efficiency: e,
        passes: passes_at(&costs, e, tol),
    })
}

/// Report for any restriction at full efficiency.
pub fn restriction_report(ds: &ChoiceDataset, kind: RestrictionKind) -> Result<RestrictionReport> {
    if kind == RestrictionKind::Gapp {
        return check_gapp(ds, 1.0);
    }
    let efficiency = match kind {
        RestrictionKind::Fosd => fosd_ccei(ds)?,
        RestrictionKind::Homothetic => harp_efficiency(ds),
        RestrictionKind::Quasilinear => quasilinear_efficiency(ds),
        RestrictionKind::Gapp => unreachable!(),
    };
    let passes = efficiency == 1.0;
    Ok(RestrictionReport {
        kind,
        efficiency,
        passes_at_1: passes,
        tested_efficiency: 1.0,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_dataset;

    fn ds(rows: &[([f64; 2], [f64; 2])]) -> ChoiceDataset {
        make_dataset(rows.iter().map(|(p, x)| (p.to_vec(), x.to_vec()))).unwrap()
    }

    fn dagger() -> ChoiceDataset {
        ds(&[([1.0, 2.0], [0.0, 1.0]), ([2.0, 1.0], [1.0, 0.0])])
    }

    #[test]
    fn dagger_values() {
        let d = dagger();
        assert_eq!(fosd_ccei(&d).unwrap(), 0.5);
        assert!((harp_efficiency(&d) - 0.5).abs() < 1e-12);
        assert_eq!(quasilinear_efficiency(&d), 0.5);
        let g = check_gapp(&d, 1.0).unwrap();
        assert!(!g.passes && !g.passes_at_1);
    }

    #[test]
    fn mirror_of_single_observation_violates() {
        let d = ds(&[([1.0, 2.0], [0.0, 1.0])]);
        assert_eq!(fosd_ccei(&d).unwrap(), 0.5);
        assert_eq!(mirror_augment(&d).unwrap().len(), 2);
    }

    #[test]
    fn fosd_needs_two_goods() {
        let d = make_dataset(vec![(vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0])]).unwrap();
        assert!(matches!(
            fosd_ccei(&d),
            Err(Error::WrongGoodsCount { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn gapp_footnote_example() {
        let d = ds(&[([1.0, 2.0], [0.0, 2.0]), ([2.0, 1.0], [3.0, 1.0])]);
        assert!(crate::garp::check_garp(&d, 1.0).unwrap().passes);
        let g = check_gapp(&d, 1.0).unwrap();
        assert!(!g.passes);
        assert!(g.efficiency < 1.0);
        // p²·x¹ = 2 vs p¹·x¹ = 4 and p¹·x² = 5 vs p²·x² = 7
        assert_eq!(g.efficiency, 5.0 / 7.0);
    }

    #[test]
    fn single_observation_is_fully_efficient() {
        let d = ds(&[([1.0, 2.0], [3.0, 1.0])]);
        assert_eq!(harp_efficiency(&d), 1.0);
        assert_eq!(quasilinear_efficiency(&d), 1.0);
        assert!(check_gapp(&d, 1.0).unwrap().passes);
    }

    #[test]
    fn cobb_douglas_choices_are_homothetic() {
        // half of income on each good at every budget
        let budgets = [([1.0, 1.0], 10.0), ([2.0, 1.0], 6.0), ([1.0, 3.0], 8.0), ([0.5, 2.0], 4.0)];
        let rows: Vec<_> = budgets
            .iter()
            .map(|&(p, m)| (p, [0.5 * m / p[0], 0.5 * m / p[1]]))
            .collect();
        let d = ds(&rows);
        assert_eq!(harp_efficiency(&d), 1.0);
        assert_eq!(crate::indices::ccei(&d), 1.0);
    }

    #[test]
    fn karp_matches_known_cycle_means() {
        // 0→1 (1), 1→2 (1), 2→0 (1), 1→0 (-1): cycles {0,1} mean 0, {0,1,2} mean 1
        let w = |u: usize, v: usize| match (u, v) {
            (0, 1) | (1, 2) | (2, 0) => 1.0,
            (1, 0) => -1.0,
            _ => 10.0,
        };
        assert_eq!(min_mean_cycle(3, w), Some(0.0));
        assert_eq!(min_mean_cycle(1, w), None);
    }
}
