//! Brute-force reference implementations used only by tests.
//!
//! Nothing here calls into the library's index code: datasets are plain
//! `(prices, bundle)` rows and every quantity is recomputed from the
//! defining inequalities by enumeration.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<(Vec<f64>, Vec<f64>)>;

pub const TOL: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c[i][j] = p^i · x^j`.
pub fn cross(rows: &Rows) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|(p, _)| rows.iter().map(|(_, x)| dot(p, x)).collect())
        .collect()
}

pub fn relations(c: &[Vec<f64>], e: f64) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let n = c.len();
    let mut weak = vec![vec![false; n]; n];
    let mut strict = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            weak[i][j] = c[i][j] <= e * c[i][i] + TOL;
            strict[i][j] = c[i][j] < e * c[i][i] - TOL;
        }
    }
    (weak, strict)
}

/// Floyd-Warshall reachability including the empty path.
pub fn reach(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r = adj.to_vec();
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

fn garp_on(c: &[Vec<f64>], keep: &[usize], e: f64) -> bool {
    let sub: Vec<Vec<f64>> = keep
        .iter()
        .map(|&i| keep.iter().map(|&j| c[i][j]).collect())
        .collect();
    let (weak, strict) = relations(&sub, e);
    let r = reach(&weak);
    let n = sub.len();
    !(0..n).any(|i| (0..n).any(|j| r[i][j] && strict[j][i]))
}

pub fn garp(rows: &Rows, e: f64) -> bool {
    let c = cross(rows);
    let all: Vec<usize> = (0..rows.len()).collect();
    garp_on(&c, &all, e)
}

/// Largest grid point `k / 10_000` at which GARP holds.
pub fn ccei_grid(rows: &Rows) -> f64 {
    let c = cross(rows);
    let all: Vec<usize> = (0..rows.len()).collect();
    (0..=10_000)
        .rev()
        .map(|k| k as f64 / 10_000.0)
        .find(|&e| garp_on(&c, &all, e))
        .unwrap_or(0.0)
}

/// Largest GARP-consistent subset, by enumerating all subsets.
pub fn hmi_kept(rows: &Rows) -> usize {
    let c = cross(rows);
    let n = rows.len();
    (1u32..1 << n)
        .filter(|mask| {
            let keep: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            garp_on(&c, &keep, 1.0)
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

pub fn mpi(rows: &Rows) -> f64 {
    let c = cross(rows);
    let n = rows.len();
    let mut costs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = |a: usize, b: usize| c[a][b] <= c[a][a] + TOL;
            let s = |a: usize, b: usize| c[a][b] < c[a][a] - TOL;
            if w(i, j) && w(j, i) && (s(i, j) || s(j, i)) {
                let pump = (c[i][i] - c[i][j]) + (c[j][j] - c[j][i]);
                costs.push(pump / (c[i][i] + c[j][j]));
            }
        }
    }
    if costs.is_empty() {
        0.0
    } else {
        costs.iter().sum::<f64>() / costs.len() as f64
    }
}

fn acyclic(n: usize, arcs: &[(usize, usize)]) -> bool {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in arcs {
        adj[u][v] = true;
    }
    // a cycle exists iff some arc u→v has v reaching u
    let r = reach(&adj);
    !arcs.iter().any(|&(u, v)| r[v][u])
}

/// Minimum total cost of a removal set that leaves the weak relation
/// acyclic, by enumerating removal sets.
///
/// Zero-cost arcs are removed up front (removing them is free and never
/// hurts acyclicity), and the enumeration stops expanding a branch whose
/// cost already matches the best complete set, which cannot change the
/// minimum because costs are non-negative.
pub fn mci(rows: &Rows) -> f64 {
    let c = cross(rows);
    let n = rows.len();
    let (weak, _) = relations(&c, 1.0);
    let mut arcs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && weak[i][j] {
                let cost = (c[i][i] - c[i][j]).max(0.0);
                if cost > 0.0 {
                    arcs.push((i, j, cost));
                }
            }
        }
    }
    let total: f64 = (0..n).map(|i| c[i][i]).sum();
    let mut best = arcs.iter().map(|a| a.2).sum::<f64>();
    fn go(
        k: usize,
        arcs: &[(usize, usize, f64)],
        kept: &mut Vec<(usize, usize)>,
        removed: f64,
        best: &mut f64,
        n: usize,
    ) {
        if removed >= *best {
            return;
        }
        if !acyclic(n, kept) {
            return;
        }
        if k == arcs.len() {
            *best = removed;
            return;
        }
        let (u, v, w) = arcs[k];
        kept.push((u, v));
        go(k + 1, arcs, kept, removed, best, n);
        kept.pop();
        go(k + 1, arcs, kept, removed + w, best, n);
    }
    go(0, &arcs, &mut Vec::new(), 0.0, &mut best, n);
    best / total
}

/// Every simple cycle of the complete digraph on `n` nodes (length ≥ 2),
/// each listed once starting from its smallest node.
pub fn simple_cycles(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn extend(path: &mut Vec<usize>, used: &mut [bool], n: usize, out: &mut Vec<Vec<usize>>) {
        if path.len() >= 2 {
            out.push(path.clone());
        }
        for v in path[0] + 1..n {
            if !used[v] {
                used[v] = true;
                path.push(v);
                extend(path, used, n, out);
                path.pop();
                used[v] = false;
            }
        }
    }
    for s in 0..n {
        let mut used = vec![false; n];
        used[s] = true;
        extend(&mut vec![s], &mut used, n, &mut out);
    }
    out
}

fn arcs_of(cycle: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..cycle.len()).map(move |k| (cycle[k], cycle[(k + 1) % cycle.len()]))
}

pub fn harp(rows: &Rows) -> f64 {
    let c = cross(rows);
    let mu = simple_cycles(rows.len())
        .iter()
        .map(|cy| {
            arcs_of(cy).map(|(i, j)| (c[i][j] / c[i][i]).ln()).sum::<f64>() / cy.len() as f64
        })
        .fold(f64::INFINITY, f64::min);
    if mu.is_infinite() {
        1.0
    } else {
        mu.exp().min(1.0)
    }
}

pub fn quasilinear(rows: &Rows) -> f64 {
    let c = cross(rows);
    simple_cycles(rows.len())
        .iter()
        .map(|cy| {
            let a: f64 = arcs_of(cy).map(|(i, j)| c[i][j]).sum();
            let b: f64 = arcs_of(cy).map(|(i, _)| c[i][i]).sum();
            a / b
        })
        .fold(1.0, f64::min)
}

/// Random dataset with `1..=max_t` observations, two goods and integer
/// prices and quantities in `1..=4`.
pub fn random_integer_rows(rng: &mut ChaCha8Rng, max_t: usize) -> Rows {
    let t = rng.random_range(1..=max_t);
    (0..t)
        .map(|_| {
            let p = vec![rng.random_range(1..=4) as f64, rng.random_range(1..=4) as f64];
            let x = vec![rng.random_range(1..=4) as f64, rng.random_range(1..=4) as f64];
            (p, x)
        })
        .collect()
}

/// Random dataset with continuous prices and bundles on the budget line,
/// two goods. Ties between cross costs have probability zero.
pub fn random_real_rows(rng: &mut ChaCha8Rng, max_t: usize) -> Rows {
    let t = rng.random_range(1..=max_t);
    (0..t)
        .map(|_| {
            let p = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
            let share: f64 = rng.random_range(0.0..1.0);
            let m: f64 = rng.random_range(5.0..15.0);
            let x = vec![share * m / p[0], (1.0 - share) * m / p[1]];
            (p, x)
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
