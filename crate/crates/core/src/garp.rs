//! GARP verdicts and violation evidence.

use serde::Serialize;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::relations::{BitMatrix, CrossCosts, Tolerance};

/// Outcome of a GARP test at one efficiency level.
///
/// Indices are 0-based in memory and 1-based when serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct GarpReport {
    pub passes: bool,
    pub efficiency: f64,
    /// Ordered pairs `(i, j)` with `x^i ≿** x^j` and `x^j ≻* x^i`.
    pub violating_pairs: Vec<(usize, usize)>,
    /// Unordered pairs `{i, j}` (stored `i < j`) that violate GARP through
    /// their direct relations alone.
    pub two_cycles: Vec<(usize, usize)>,
}

impl Serialize for GarpReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            passes: bool,
            efficiency: f64,
            violating_pairs: Vec<(usize, usize)>,
            two_cycles: Vec<(usize, usize)>,
        }
        let one_based = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| (i + 1, j + 1)).collect();
        Wire {
            passes: self.passes,
            efficiency: self.efficiency,
            violating_pairs: one_based(&self.violating_pairs),
            two_cycles: one_based(&self.two_cycles),
        }
        .serialize(s)
    }
}

/// Closure and strict relation at `e`; shared by every GARP-style test.
pub(crate) fn closure_and_strict(
    costs: &CrossCosts,
    e: f64,
    tol: Tolerance,
) -> (BitMatrix, BitMatrix) {
    let (weak, strict) = costs.relation_bits(e, tol);
    (weak.reflexive_transitive_closure(), strict)
}

/// Fast pass/fail without collecting evidence.
pub(crate) fn passes_at(costs: &CrossCosts, e: f64, tol: Tolerance) -> bool {
    let (closure, strict) = closure_and_strict(costs, e, tol);
    let strict_t = strict.transpose();
    (0..costs.len()).all(|i| {
        closure
            .row(i)
            .iter()
            .zip(strict_t.row(i))
            .all(|(c, s)| c & s == 0)
    })
}

/// Whether observations `i` and `j` alone violate GARP at `e`.
pub(crate) fn pair_violates(costs: &CrossCosts, i: usize, j: usize, e: f64, tol: Tolerance) -> bool {
    costs.weak_at(i, j, e, tol)
        && costs.weak_at(j, i, e, tol)
        && (costs.strict_at(i, j, e, tol) || costs.strict_at(j, i, e, tol))
}

pub(crate) fn two_cycles_of(costs: &CrossCosts, e: f64, tol: Tolerance) -> Vec<(usize, usize)> {
    let n = costs.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if pair_violates(costs, i, j, e, tol) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn check_garp(ds: &ChoiceDataset, e: f64) -> Result<GarpReport> {
    check_garp_with(ds, e, Tolerance::default())
}

pub fn check_garp_with(ds: &ChoiceDataset, e: f64, tol: Tolerance) -> Result<GarpReport> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::EfficiencyOutOfRange(e));
    }
    let costs = CrossCosts::new(ds);
    let (closure, strict) = closure_and_strict(&costs, e, tol);
    let violating_pairs: Vec<_> = closure
        .pairs()
        .filter(|&(i, j)| strict.get(j, i))
        .collect();
    Ok(GarpReport {
        passes: violating_pairs.is_empty(),
        efficiency: e,
        violating_pairs,
        two_cycles: two_cycles_of(&costs, e, tol),
    })
}

/// Unordered pairs violating GARP at full efficiency using only their own
/// direct relations.
pub fn violation_two_cycles(ds: &ChoiceDataset) -> Vec<(usize, usize)> {
    two_cycles_of(&CrossCosts::new(ds), 1.0, Tolerance::default())
}

/// Share of pairs `(a, b)`, `a ∈ A`, `b ∈ B`, whose two-observation
/// sub-dataset violates GARP.
///
/// With `A = B` every unordered pair inside the group is counted once; with
/// disjoint groups every cross pair is counted.
pub fn pairwise_violation_proportion(
    ds: &ChoiceDataset,
    group_a: &[usize],
    group_b: &[usize],
) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::InvalidArgument("empty group".into()));
    }
    if let Some(&bad) = group_a.iter().chain(group_b).find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidArgument(format!(
            "observation index {bad} out of range"
        )));
    }
    let mut a: Vec<usize> = group_a.to_vec();
    let mut b: Vec<usize> = group_b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();

    let costs = CrossCosts::new(ds);
    let tol = Tolerance::default();
    let (hits, total) = if a == b {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (x, &i) in a.iter().enumerate() {
            for &j in &a[x + 1..] {
                total += 1;
                hits += pair_violates(&costs, i, j, 1.0, tol) as usize;
            }
        }
        (hits, total)
    } else {
        if a.iter().any(|i| b.binary_search(i).is_ok()) {
            return Err(Error::InvalidArgument(
                "groups must be disjoint or identical".into(),
            ));
        }
        let hits = a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| pair_violates(&costs, i, j, 1.0, tol))
            .count();
        (hits, a.len() * b.len())
    };
    if total == 0 {
        return Err(Error::InvalidArgument(
            "identical groups need at least two observations".into(),
        ));
    }
    Ok(hits as f64 / total as f64)
}
