//! Revealed-preference relations with efficiency scaling.
//!
//! Observation `i` is directly revealed preferred to `j` at efficiency `e`
//! when `p^i · x^j <= e · p^i · x^i`, and strictly so when the inequality is
//! strict. Comparisons carry an absolute tolerance (see [`Tolerance`]).

use serde::Serialize;

use crate::dataset::{dot, ChoiceDataset};
use crate::error::{Error, Result};

/// Absolute slack applied to affordability comparisons.
///
/// `weak`: `p·x <= e·E + abs`; `strict`: `p·x < e·E - abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-9 }
    }
}

/// Square boolean matrix stored as packed rows.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BitMatrix::new(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let w = &mut self.bits[i * self.words + j / 64];
        if value {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Row `i` OR-ed with row `k`, in place.
    #[inline]
    fn or_row_into(&mut self, k: usize, i: usize) {
        let w = self.words;
        let (src, dst) = if k < i {
            let (a, b) = self.bits.split_at_mut(i * w);
            (&a[k * w..(k + 1) * w], &mut b[..w])
        } else {
            let (a, b) = self.bits.split_at_mut(k * w);
            (&b[..w], &mut a[i * w..(i + 1) * w])
        };
        for (d, s) in dst.iter_mut().zip(src) {
            *d |= *s;
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::new(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    t.set(j, i, true);
                }
            }
        }
        t
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Pairs `(i, j)` with the bit set, in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).filter(move |&j| self.get(i, j)).map(move |j| (i, j)))
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Reflexive-transitive closure by Warshall's path composition.
    pub fn reflexive_transitive_closure(&self) -> BitMatrix {
        let mut c = self.clone();
        for i in 0..self.n {
            c.set(i, i, true);
        }
        for k in 0..self.n {
            for i in 0..self.n {
                if i != k && c.get(i, k) {
                    c.or_row_into(k, i);
                }
            }
        }
        c
    }
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.n {
            let row: String = (0..self.n)
                .map(|j| if self.get(i, j) { '1' } else { '.' })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl Serialize for BitMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// Cross costs `p^i · x^j` for every ordered pair of observations.
#[derive(Debug, Clone)]
pub struct CrossCosts {
    n: usize,
    costs: Vec<f64>,
}

impl CrossCosts {
    pub fn new(ds: &ChoiceDataset) -> Self {
        let n = ds.len();
        let mut costs = vec![0.0; n * n];
        for (i, oi) in ds.observations().iter().enumerate() {
            for (j, oj) in ds.observations().iter().enumerate() {
                costs[i * n + j] = dot(oi.prices(), oj.bundle());
            }
        }
        CrossCosts { n, costs }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `p^i · x^j`.
    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }

    /// `p^i · x^i`.
    #[inline]
    pub fn expenditure(&self, i: usize) -> f64 {
        self.cost(i, i)
    }

    /// `p^i · x^j / p^i · x^i`, the efficiency level at which `i` starts to
    /// reveal `x^j` as affordable.
    #[inline]
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.cost(i, j) / self.expenditure(i)
    }

    pub(crate) fn weak_at(&self, i: usize, j: usize, e: f64, tol: Tolerance) -> bool {
        self.cost(i, j) <= e * self.expenditure(i) + tol.abs
    }

    pub(crate) fn strict_at(&self, i: usize, j: usize, e: f64, tol: Tolerance) -> bool {
        self.cost(i, j) < e * self.expenditure(i) - tol.abs
    }

    /// Direct weak and strict relation matrices at efficiency `e`.
    pub(crate) fn relation_bits(&self, e: f64, tol: Tolerance) -> (BitMatrix, BitMatrix) {
        let mut weak = BitMatrix::new(self.n);
        let mut strict = BitMatrix::new(self.n);
        for i in 0..self.n {
            let bound = e * self.expenditure(i);
            for j in 0..self.n {
                let c = self.cost(i, j);
                if c <= bound + tol.abs {
                    weak.set(i, j, true);
                    if c < bound - tol.abs {
                        strict.set(i, j, true);
                    }
                }
            }
        }
        (weak, strict)
    }

    /// Transposed costs, `p^j · x^i` at `(i, j)`. Relation `(a, b)` of the
    /// result is the price relation `p^b ≿ p^a`; cycle tests are unaffected
    /// by the reversal.
    pub(crate) fn price_side(&self) -> CrossCosts {
        let n = self.n;
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                costs[i * n + j] = self.cost(j, i);
            }
        }
        CrossCosts { n, costs }
    }
}

/// Direct and transitive revealed-preference relations at one efficiency level.
#[derive(Debug, Clone, Serialize)]
pub struct RelationMatrix {
    weak: BitMatrix,
    strict: BitMatrix,
    closure: Option<BitMatrix>,
    efficiency: f64,
}

impl RelationMatrix {
    /// Directly revealed preferred, `x^i ≿* x^j`.
    pub fn weak(&self) -> &BitMatrix {
        &self.weak
    }

    /// Directly strictly revealed preferred, `x^i ≻* x^j`.
    pub fn strict(&self) -> &BitMatrix {
        &self.strict
    }

    /// Revealed preferred (transitive closure), once computed.
    pub fn closure(&self) -> Option<&BitMatrix> {
        self.closure.as_ref()
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn len(&self) -> usize {
        self.weak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak.is_empty()
    }
}

fn check_efficiency(e: f64) -> Result<()> {
    if (0.0..=1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::EfficiencyOutOfRange(e))
    }
}

/// Direct relations at efficiency `e` with the default tolerance.
pub fn direct_relations(ds: &ChoiceDataset, e: f64) -> Result<RelationMatrix> {
    direct_relations_with(ds, e, Tolerance::default())
}

pub fn direct_relations_with(ds: &ChoiceDataset, e: f64, tol: Tolerance) -> Result<RelationMatrix> {
    check_efficiency(e)?;
    let (weak, strict) = CrossCosts::new(ds).relation_bits(e, tol);
    Ok(RelationMatrix {
        weak,
        strict,
        closure: None,
        efficiency: e,
    })
}

/// Fills in the reflexive-transitive closure of the weak relation.
/// Idempotent: the closure is always recomputed from `weak`.
pub fn transitive_closure(rel: RelationMatrix) -> RelationMatrix {
    let closure = rel.weak.reflexive_transitive_closure();
    RelationMatrix {
        closure: Some(closure),
        ..rel
    }
}

/// Direct relations plus closure in one call.
pub fn relations(ds: &ChoiceDataset, e: f64) -> Result<RelationMatrix> {
    direct_relations(ds, e).map(transitive_closure)
}
