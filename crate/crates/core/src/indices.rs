//! Consistency indices: CCEI, Houtman-Maks, money pump and minimum cost.
//!
//! All four agree on a GARP-consistent dataset (`1, 1, 0, 0`) and measure
//! departures differently:
//!
//! * **CCEI** deflates every budget by a common factor `e` until GARP holds.
//! * **HMI** keeps the largest consistent subset of observations.
//! * **MPI** averages the money an arbitrager extracts from violating pairs.
//! * **MCI** removes the cheapest set of revealed-preference relations that
//!   leaves the relation acyclic, normalized by total expenditure.

use serde::Serialize;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::garp::{passes_at, two_cycles_of};
use crate::relations::{BitMatrix, CrossCosts, Tolerance};

/// Node budget for the exact HMI and MCI searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    pub node_cap: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            node_cap: 10_000_000,
        }
    }
}

// ---------------------------------------------------------------------------
// CCEI

/// Sorted efficiency levels at which some direct relation switches on.
pub(crate) fn efficiency_candidates(costs: &CrossCosts, tol: Tolerance) -> Vec<f64> {
    let n = costs.len();
    let mut cand: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| costs.ratio(i, j))
        .filter(|&r| r > 0.0 && r <= 1.0)
        .collect();
    cand.push(1.0);
    cand.sort_by(f64::total_cmp);
    cand.dedup_by(|a, b| (*a - *b).abs() <= tol.abs);
    // dedup keeps the first of a run; make sure 1 itself survives
    if let Some(last) = cand.last_mut() {
        if (*last - 1.0).abs() <= tol.abs {
            *last = 1.0;
        }
    }
    cand
}

/// Largest `e` in `[0, 1]` at which `passes(e)` holds, given that `passes`
/// is monotone and only changes at `candidates`.
///
/// Between two consecutive thresholds the relations are constant, so the
/// answer is either a threshold where the test passes or, when the test
/// passes just above a threshold but fails on the next one, the supremum
/// of that open interval.
pub(crate) fn critical_efficiency(candidates: &[f64], passes: impl Fn(f64) -> bool) -> f64 {
    if passes(1.0) {
        return 1.0;
    }
    // Invariant: passes(at(lo)) with lo = -1 meaning e = 0, and !passes(at(hi)).
    let at = |k: isize| if k < 0 { 0.0 } else { candidates[k as usize] };
    let mut lo: isize = -1;
    let mut hi: isize = candidates.len() as isize - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if passes(at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (at(lo), at(hi));
    if passes(0.5 * (a + b)) {
        b
    } else {
        a
    }
}

/// Critical cost efficiency index with the default tolerance.
pub fn ccei(ds: &ChoiceDataset) -> f64 {
    ccei_with(ds, Tolerance::default())
}

pub fn ccei_with(ds: &ChoiceDataset, tol: Tolerance) -> f64 {
    ccei_of_costs(&CrossCosts::new(ds), tol)
}

pub(crate) fn ccei_of_costs(costs: &CrossCosts, tol: Tolerance) -> f64 {
    if costs.len() < 2 {
        return 1.0;
    }
    let cand = efficiency_candidates(costs, tol);
    critical_efficiency(&cand, |e| passes_at(costs, e, tol))
}

// ---------------------------------------------------------------------------
// HMI

/// Size of the largest GARP-consistent subset and the implied index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HmiResult {
    pub value: f64,
    pub kept: usize,
}

struct Hmi<'a> {
    weak: &'a BitMatrix,
    strict: &'a BitMatrix,
    n: usize,
    nodes: u64,
    cap: u64,
}

impl Hmi<'_> {
    /// A shortest violating cycle among `active` observations, if any.
    ///
    /// A cycle is a weak path `i → … → j` closed by a strict edge `j → i`.
    fn violating_cycle(&self, active: &[bool]) -> Option<Vec<usize>> {
        let n = self.n;
        let mut best: Option<Vec<usize>> = None;
        let mut parent = vec![usize::MAX; n];
        let mut queue = Vec::with_capacity(n);
        for src in (0..n).filter(|&i| active[i]) {
            parent.fill(usize::MAX);
            parent[src] = src;
            queue.clear();
            queue.push(src);
            let mut head = 0;
            while head < queue.len() {
                let u = queue[head];
                head += 1;
                // u reachable from src; a strict edge u → src closes a violation
                if self.strict.get(u, src) {
                    let mut path = vec![u];
                    let mut v = u;
                    while v != src {
                        v = parent[v];
                        path.push(v);
                    }
                    if best.as_ref().is_none_or(|b| path.len() < b.len()) {
                        best = Some(path);
                    }
                    break;
                }
                for v in 0..n {
                    if active[v] && parent[v] == usize::MAX && self.weak.get(u, v) {
                        parent[v] = u;
                        queue.push(v);
                    }
                }
            }
            if best.as_ref().is_some_and(|b| b.len() == 2) {
                break;
            }
        }
        best
    }

    /// Can consistency be reached by removing at most `budget` more observations?
    fn search(&mut self, active: &mut [bool], budget: usize) -> Result<bool> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(Error::SearchBudgetExceeded { cap: self.cap });
        }
        let Some(cycle) = self.violating_cycle(active) else {
            return Ok(true);
        };
        if budget == 0 {
            return Ok(false);
        }
        for &v in &cycle {
            active[v] = false;
            let ok = self.search(active, budget - 1)?;
            active[v] = true;
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Greedy removal count: an upper bound on the optimum.
    fn greedy_removals(&self) -> usize {
        let mut active = vec![true; self.n];
        let mut removed = 0;
        while let Some(cycle) = self.violating_cycle(&active) {
            // drop the cycle member with most strict edges inside the active set
            let v = *cycle
                .iter()
                .max_by_key(|&&v| {
                    (0..self.n)
                        .filter(|&u| active[u] && (self.strict.get(u, v) || self.strict.get(v, u)))
                        .count()
                })
                .expect("cycle is non-empty");
            active[v] = false;
            removed += 1;
        }
        removed
    }

    /// Disjoint violating cycles found greedily: a lower bound on the optimum.
    fn packing_bound(&self) -> usize {
        let mut active = vec![true; self.n];
        let mut count = 0;
        while let Some(cycle) = self.violating_cycle(&active) {
            for v in cycle {
                active[v] = false;
            }
            count += 1;
        }
        count
    }
}

pub fn hmi(ds: &ChoiceDataset) -> Result<HmiResult> {
    hmi_with(ds, SearchLimits::default())
}

pub fn hmi_with(ds: &ChoiceDataset, limits: SearchLimits) -> Result<HmiResult> {
    let costs = CrossCosts::new(ds);
    let (weak, strict) = costs.relation_bits(1.0, Tolerance::default());
    let n = ds.len();
    let mut h = Hmi {
        weak: &weak,
        strict: &strict,
        n,
        nodes: 0,
        cap: limits.node_cap,
    };
    let upper = h.greedy_removals();
    let lower = h.packing_bound();
    let mut removals = upper;
    let mut active = vec![true; n];
    for budget in lower..upper {
        if h.search(&mut active, budget)? {
            removals = budget;
            break;
        }
    }
    let kept = n - removals;
    Ok(HmiResult {
        value: kept as f64 / n as f64,
        kept,
    })
}

// ---------------------------------------------------------------------------
// MPI

/// Money pump cost of the pair `{i, j}` as a share of their joint spending.
pub(crate) fn pump_cost(costs: &CrossCosts, i: usize, j: usize) -> f64 {
    let (ei, ej) = (costs.expenditure(i), costs.expenditure(j));
    (ei - costs.cost(i, j) + ej - costs.cost(j, i)) / (ei + ej)
}

/// Mean money pump cost over violating two-cycles; 0 when there are none.
pub fn mpi(ds: &ChoiceDataset) -> f64 {
    let costs = CrossCosts::new(ds);
    let cycles = two_cycles_of(&costs, 1.0, Tolerance::default());
    if cycles.is_empty() {
        return 0.0;
    }
    cycles.iter().map(|&(i, j)| pump_cost(&costs, i, j)).sum::<f64>() / cycles.len() as f64
}

// ---------------------------------------------------------------------------
// MCI

/// Minimum cost index and whether the search finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MciResult {
    pub value: f64,
    pub exact: bool,
}

/// Strongly connected components of the weak relation, as groups of at
/// least two observations.
fn cyclic_components(weak: &BitMatrix) -> Vec<Vec<usize>> {
    let closure = weak.reflexive_transitive_closure();
    let n = weak.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (i..n)
            .filter(|&j| closure.get(i, j) && closure.get(j, i))
            .collect();
        for &j in &comp {
            seen[j] = true;
        }
        if comp.len() > 1 {
            out.push(comp);
        }
    }
    out
}

/// Exact minimum-weight feedback arc set of a small dense digraph.
///
/// Every acyclic subgraph is consistent with some vertex order, and the
/// cheapest arc set to delete for a given order is its backward arcs. The
/// search therefore builds orders prefix by prefix, memoizing the cheapest
/// cost seen for each prefix set and pruning with a bound that charges every
/// remaining two-cycle its cheaper arc.
struct FeedbackArcSearch {
    n: usize,
    /// `w[u * n + v]`: cost of arc `u → v`, 0 when absent.
    w: Vec<f64>,
    pair_bound: Vec<f64>,
    best: f64,
    memo: std::collections::HashMap<u64, f64>,
    nodes: u64,
    cap: u64,
}

impl FeedbackArcSearch {
    fn new(w: Vec<f64>, n: usize, cap: u64) -> Self {
        let mut pair_bound = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    pair_bound[u * n + v] = w[u * n + v].min(w[v * n + u]);
                }
            }
        }
        FeedbackArcSearch {
            n,
            w,
            pair_bound,
            best: f64::INFINITY,
            memo: Default::default(),
            nodes: 0,
            cap,
        }
    }

    /// Cost of appending `v` after the vertices in `placed`.
    fn backward_cost(&self, placed: u64, v: usize) -> f64 {
        let mut c = 0.0;
        let mut m = placed;
        while m != 0 {
            let u = m.trailing_zeros() as usize;
            m &= m - 1;
            c += self.w[v * self.n + u];
        }
        c
    }

    fn order_cost(&self, order: &[usize]) -> f64 {
        let mut placed = 0u64;
        let mut total = 0.0;
        for &v in order {
            total += self.backward_cost(placed, v);
            placed |= 1 << v;
        }
        total
    }

    /// Greedy order: repeatedly place the vertex with the cheapest arcs into
    /// the already-placed prefix, breaking ties by heavier outgoing arcs to
    /// the rest.
    fn greedy(&self) -> f64 {
        let full = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        let mut placed = 0u64;
        let mut order = Vec::with_capacity(self.n);
        while placed != full {
            let rest = full & !placed;
            let v = (0..self.n)
                .filter(|&v| rest >> v & 1 == 1)
                .min_by(|&a, &b| {
                    let ka = self.backward_cost(placed, a) - self.backward_cost(rest, a) * 1e-3;
                    let kb = self.backward_cost(placed, b) - self.backward_cost(rest, b) * 1e-3;
                    ka.total_cmp(&kb)
                })
                .expect("rest is non-empty");
            placed |= 1 << v;
            order.push(v);
        }
        self.order_cost(&order)
    }

    fn remaining_bound(&self, rest: u64) -> f64 {
        let mut b = 0.0;
        let mut m = rest;
        while m != 0 {
            let u = m.trailing_zeros() as usize;
            m &= m - 1;
            let mut k = m;
            while k != 0 {
                let v = k.trailing_zeros() as usize;
                k &= k - 1;
                b += self.pair_bound[u * self.n + v];
            }
        }
        b
    }

    fn dfs(&mut self, placed: u64, rest: u64, cost: f64) -> bool {
        self.nodes += 1;
        if self.nodes > self.cap {
            return false;
        }
        if rest == 0 {
            if cost < self.best {
                self.best = cost;
            }
            return true;
        }
        if let Some(&seen) = self.memo.get(&placed) {
            if seen <= cost {
                return true;
            }
        }
        self.memo.insert(placed, cost);
        if cost + self.remaining_bound(rest) >= self.best - 1e-12 {
            return true;
        }
        let mut children: Vec<(f64, usize)> = {
            let mut m = rest;
            let mut v = Vec::new();
            while m != 0 {
                let u = m.trailing_zeros() as usize;
                m &= m - 1;
                v.push((self.backward_cost(placed, u), u));
            }
            v
        };
        children.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (step, v) in children {
            if !self.dfs(placed | 1 << v, rest & !(1 << v), cost + step) {
                return false;
            }
        }
        true
    }

    /// Returns `(cost, exact, nodes used)`.
    fn solve(mut self) -> (f64, bool, u64) {
        self.best = self.greedy();
        let full = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        let exact = self.dfs(0, full, 0.0);
        (self.best, exact, self.nodes)
    }
}

pub fn mci(ds: &ChoiceDataset) -> MciResult {
    mci_with(ds, SearchLimits::default())
}

pub fn mci_with(ds: &ChoiceDataset, limits: SearchLimits) -> MciResult {
    let costs = CrossCosts::new(ds);
    let (weak, _) = costs.relation_bits(1.0, Tolerance::default());
    let mut removed = 0.0;
    let mut exact = true;
    let mut budget = limits.node_cap;
    for comp in cyclic_components(&weak) {
        let n = comp.len();
        let mut w = vec![0.0; n * n];
        for (a, &i) in comp.iter().enumerate() {
            for (b, &j) in comp.iter().enumerate() {
                if a != b && weak.get(i, j) {
                    w[a * n + b] = (costs.expenditure(i) - costs.cost(i, j)).max(0.0);
                }
            }
        }
        let (cost, done) = if n <= 64 {
            let (cost, done, used) = FeedbackArcSearch::new(w, n, budget).solve();
            budget = budget.saturating_sub(used);
            (cost, done)
        } else {
            (greedy_large(&w, n), false)
        };
        removed += cost;
        exact &= done;
    }
    MciResult {
        value: removed / ds.total_expenditure(),
        exact,
    }
}

/// Order-based greedy for components too large for bitmask search.
fn greedy_large(w: &[f64], n: usize) -> f64 {
    let mut placed = vec![false; n];
    let mut total = 0.0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !placed[v])
            .min_by(|&a, &b| {
                let ca: f64 = (0..n).filter(|&u| placed[u]).map(|u| w[a * n + u]).sum();
                let cb: f64 = (0..n).filter(|&u| placed[u]).map(|u| w[b * n + u]).sum();
                ca.total_cmp(&cb)
            })
            .expect("unplaced vertex");
        total += (0..n).filter(|&u| placed[u]).map(|u| w[v * n + u]).sum::<f64>();
        placed[v] = true;
    }
    total
}

// ---------------------------------------------------------------------------
// Report

/// Violation counts attached to an [`IndexReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub violating_pairs: usize,
    pub two_cycles: usize,
}

/// All four indices for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub label: String,
    pub ccei: f64,
    pub hmi: f64,
    pub mpi: f64,
    pub mci: f64,
    pub hmi_kept: usize,
    pub mci_exact: bool,
    pub diagnostics: Diagnostics,
}

impl IndexReport {
    pub const CSV_HEADER: &'static str = "label,ccei,hmi,mpi,mci,hmi_kept,mci_exact,two_cycles";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.label,
            self.ccei,
            self.hmi,
            self.mpi,
            self.mci,
            self.hmi_kept,
            self.mci_exact,
            self.diagnostics.two_cycles
        )
    }

    /// GARP holds at full efficiency.
    pub fn is_consistent(&self) -> bool {
        self.diagnostics.violating_pairs == 0
    }
}

pub fn index_report(ds: &ChoiceDataset) -> Result<IndexReport> {
    index_report_with(ds, SearchLimits::default())
}

pub fn index_report_with(ds: &ChoiceDataset, limits: SearchLimits) -> Result<IndexReport> {
    let garp = crate::garp::check_garp(ds, 1.0)?;
    let h = hmi_with(ds, limits)?;
    let m = mci_with(ds, limits);
    Ok(IndexReport {
        label: ds.label().to_string(),
        ccei: ccei(ds),
        hmi: h.value,
        mpi: mpi(ds),
        mci: m.value,
        hmi_kept: h.kept,
        mci_exact: m.exact,
        diagnostics: Diagnostics {
            violating_pairs: garp.violating_pairs.len(),
            two_cycles: garp.two_cycles.len(),
        },
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

    fn consistent() -> ChoiceDataset {
        ds(&[
            ([1.0, 1.0], [2.0, 2.0]),
            ([1.0, 2.0], [3.0, 0.5]),
            ([2.0, 1.0], [0.5, 3.0]),
        ])
    }

    #[test]
    fn dagger_indices() {
        let d = dagger();
        assert_eq!(ccei(&d), 0.5);
        assert_eq!(hmi(&d).unwrap(), HmiResult { value: 0.5, kept: 1 });
        assert_eq!(mpi(&d), 0.5);
        assert_eq!(mci(&d), MciResult { value: 0.25, exact: true });
    }

    #[test]
    fn consistent_indices() {
        let r = index_report(&consistent()).unwrap();
        assert_eq!((r.ccei, r.hmi, r.mpi, r.mci), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(r.diagnostics.two_cycles, 0);
        assert!(r.is_consistent());
    }

    #[test]
    fn single_observation() {
        let d = ds(&[([1.0, 3.0], [2.0, 1.0])]);
        assert_eq!(ccei(&d), 1.0);
        assert_eq!(hmi(&d).unwrap().kept, 1);
    }

    #[test]
    fn csv_row_format() {
        let r = index_report(&dagger().with_label("d")).unwrap();
        assert_eq!(r.csv_row(), "d,0.5,0.5,0.5,0.25,1,true,1");
    }

    #[test]
    fn open_interval_supremum() {
        // x^2 sits exactly on budget 1 while budget 2 strictly reveals x^1:
        // GARP fails at e = 1 but holds for every e < 1.
        let d = ds(&[([1.0, 1.0], [1.0, 1.0]), ([2.0, 1.0], [2.0, 0.0])]);
        assert!(!crate::garp::check_garp(&d, 1.0).unwrap().passes);
        assert!(crate::garp::check_garp(&d, 0.999_999).unwrap().passes);
        assert_eq!(ccei(&d), 1.0);
        // the relation that fails is free to remove
        assert_eq!(mci(&d).value, 0.0);
        assert_eq!(hmi(&d).unwrap().kept, 1);
        assert!(mpi(&d) > 0.0);
    }

    #[test]
    fn node_cap_is_reported() {
        // three mutual violators: the bounds disagree so the search must run
        let d = ds(&[
            ([1.0, 4.0], [0.0, 1.0]),
            ([4.0, 1.0], [1.0, 0.0]),
            ([1.0, 1.0], [0.5, 0.5]),
        ]);
        assert_eq!(hmi(&d).unwrap().kept, 1);
        assert_eq!(
            hmi_with(&d, SearchLimits { node_cap: 0 }),
            Err(Error::SearchBudgetExceeded { cap: 0 })
        );
        let m = mci_with(&dagger(), SearchLimits { node_cap: 0 });
        assert!(!m.exact);
        assert_eq!(m.value, 0.25);
    }

    #[test]
    fn feedback_arc_search_on_triangle() {
        // 0→1→2→0 with costs 3, 1, 2 plus a reverse arc 1→0 of cost 5
        let n = 3;
        let mut w = vec![0.0; 9];
        w[1] = 3.0;
        w[n + 2] = 1.0;
        w[2 * n] = 2.0;
        w[n] = 5.0;
        let (cost, exact, _) = FeedbackArcSearch::new(w, n, 1000).solve();
        assert!(exact);
        // cycles {0,1,2} and {0,1}: drop 0→1 (3) breaks both
        assert_eq!(cost, 3.0);
    }
}
