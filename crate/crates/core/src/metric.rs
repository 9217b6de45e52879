//! Pseudometric matrices and their quotients.
//!
//! Distances live in `[0, +inf]`. Infinity is stored as `f64::INFINITY` and
//! serialized as the string `"inf"`; min/plus arithmetic propagates it without
//! sentinel values.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::unionfind::DisjointSet;

/// Default tolerance for identifying points at zero distance.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("entry ({i},{j}) is {value}, expected a value in [0, inf]")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error("diagonal entry {i} is {value}, expected 0")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("asymmetric entries at ({i},{j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("triangle inequality fails on ({i},{j},{k}) by {excess}")]
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        excess: f64,
    },
    #[error("tolerance {tol} merges classes so that the triangle inequality fails by {excess} (> 2*tol)")]
    ToleranceTooLarge { tol: f64, excess: f64 },
    #[error("matrix rows have inconsistent lengths")]
    Ragged,
}

/// Symmetric `n x n` matrix of distances in `[0, inf]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudometricMatrix {
    n: usize,
    d: Vec<f64>,
}

impl PseudometricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            d: vec![0.0; n * n],
        }
    }

    /// All off-diagonal entries infinite.
    pub fn disconnected(n: usize) -> Self {
        let mut m = Self {
            n,
            d: vec![f64::INFINITY; n * n],
        };
        for i in 0..n {
            m.d[i * n + i] = 0.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = f(i, j);
            }
        }
        Self { n, d }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(MetricError::Ragged);
        }
        Ok(Self {
            n,
            d: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Sets both `(i,j)` and `(j,i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
        self.d[j * self.n + i] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.d.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }

    /// Checks zero diagonal, symmetry, and the triangle inequality on finite
    /// triples, each up to `tol`.
    pub fn verify(&self, tol: f64) -> Result<(), MetricError> {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                if v.is_nan() || v < 0.0 {
                    return Err(MetricError::BadEntry { i, j, value: v });
                }
            }
            let dii = self.get(i, i);
            if dii.abs() > tol {
                return Err(MetricError::NonzeroDiagonal { i, value: dii });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                let same = (a.is_infinite() && b.is_infinite()) || (a - b).abs() <= tol;
                if !same {
                    return Err(MetricError::Asymmetric { i, j, a, b });
                }
            }
        }
        if let Some((i, j, k, excess)) = self.worst_triangle_excess() {
            if excess > tol {
                return Err(MetricError::Triangle { i, j, k, excess });
            }
        }
        Ok(())
    }

    /// Largest `d(i,k) - d(i,j) - d(j,k)` over triples with all entries finite.
    pub fn worst_triangle_excess(&self) -> Option<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let dij = self.get(i, j);
                if !dij.is_finite() {
                    continue;
                }
                for k in 0..n {
                    let (djk, dik) = (self.get(j, k), self.get(i, k));
                    if !djk.is_finite() || !dik.is_finite() {
                        continue;
                    }
                    let excess = dik - dij - djk;
                    if worst.map_or(true, |w| excess > w.3) {
                        worst = Some((i, j, k, excess));
                    }
                }
            }
        }
        worst
    }

    /// Min-plus closure (Floyd-Warshall); the largest pseudometric below `self`.
    pub fn metric_closure(&self) -> Self {
        let n = self.n;
        let mut m = self.clone();
        for k in 0..n {
            for i in 0..n {
                let dik = m.get(i, k);
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dik + m.get(k, j);
                    if cand < m.d[i * n + j] {
                        m.d[i * n + j] = cand;
                    }
                }
            }
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest `self - other` over entries (infinite entries compare equal to
    /// each other). Positive means `self` exceeds `other` somewhere.
    pub fn max_excess_over(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.d
            .iter()
            .zip(&other.d)
            .map(|(&a, &b)| match (a.is_infinite(), b.is_infinite()) {
                (true, true) => 0.0,
                (true, false) => f64::INFINITY,
                (false, true) => f64::NEG_INFINITY,
                _ => a - b,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entrywise `self <= other + slack`.
    pub fn dominated_by(&self, other: &Self, slack: f64) -> bool {
        self.max_excess_over(other) <= slack
    }
}

/// Row-major JSON: finite entries as numbers, infinity as `"inf"`.
impl Serialize for PseudometricMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Distance>> = self
            .rows()
            .into_iter()
            .map(|r| r.into_iter().map(Distance).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PseudometricMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<Distance>> = Vec::deserialize(deserializer)?;
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(|d| d.0).collect())
            .collect();
        PseudometricMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// A distance value that serializes infinity as `"inf"`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Distance(pub f64);

impl Serialize for Distance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Distance(v)),
            Raw::Str(s) if s == "inf" => Ok(Distance(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", found {s:?}"
            ))),
        }
    }
}

/// Points identified at zero distance, with the induced metric on classes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientSpace {
    pub class_of: Vec<usize>,
    /// Lowest-index member of each class.
    pub representatives: Vec<usize>,
    pub metric: PseudometricMatrix,
}

impl QuotientSpace {
    pub fn class_count(&self) -> usize {
        self.representatives.len()
    }

    pub fn members(&self, class: usize) -> Vec<usize> {
        (0..self.class_of.len())
            .filter(|&i| self.class_of[i] == class)
            .collect()
    }
}

/// Identifies points with `d <= tol` (transitively) and takes class minima.
///
/// Errors when the merged matrix violates the triangle inequality by more
/// than `2 * tol`, which signals that `tol` glued genuinely distinct points.
pub fn metric_quotient(p: &PseudometricMatrix, tol: f64) -> Result<QuotientSpace, MetricError> {
    let n = p.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if p.get(i, j) <= tol {
                ds.union(i, j);
            }
        }
    }
    let (class_of, k) = ds.labels();
    let mut representatives = vec![usize::MAX; k];
    for (i, &c) in class_of.iter().enumerate() {
        if representatives[c] == usize::MAX {
            representatives[c] = i;
        }
    }
    let mut metric = PseudometricMatrix::disconnected(k);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (class_of[i], class_of[j]);
            if a != b && p.get(i, j) < metric.get(a, b) {
                metric.set(a, b, p.get(i, j));
            }
        }
    }
    if let Some((_, _, _, excess)) = metric.worst_triangle_excess() {
        if excess > 2.0 * tol + 1e-12 {
            return Err(MetricError::ToleranceTooLarge { tol, excess });
        }
    }
    Ok(QuotientSpace {
        class_of,
        representatives,
        metric,
    })
}

/// Connected components of the relation `d < inf`, as sorted index lists.
pub fn metric_components(p: &PseudometricMatrix) -> Vec<Vec<usize>> {
    let n = p.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if p.get(i, j).is_finite() {
                ds.union(i, j);
            }
        }
    }
    let (labels, k) = ds.labels();
    let mut comps = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        comps[l].push(i);
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn all_zero_collapses_to_one_class() {
        let q = metric_quotient(&PseudometricMatrix::zeros(3), 0.0).unwrap();
        assert_eq!(q.class_count(), 1);
        assert_eq!(q.class_of, vec![0, 0, 0]);
    }

    #[test]
    fn distinct_positive_entries_keep_every_point() {
        let p = PseudometricMatrix::from_rows(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.5],
            vec![2.0, 1.5, 0.0],
        ])
        .unwrap();
        let q = metric_quotient(&p, 0.0).unwrap();
        assert_eq!(q.class_count(), 3);
        assert_eq!(q.metric, p);
    }

    #[test]
    fn single_zero_pair_inherits_class_minima() {
        // d(0,1) = 0; class {0,1} sees 2 at distance min(2, 1.5) and 3 at min(3, 2.5)
        let p = PseudometricMatrix::from_rows(vec![
            vec![0.0, 0.0, 2.0, 3.0],
            vec![0.0, 0.0, 1.5, 2.5],
            vec![2.0, 1.5, 0.0, 1.0],
            vec![3.0, 2.5, 1.0, 0.0],
        ])
        .unwrap();
        let q = metric_quotient(&p, 0.0).unwrap();
        assert_eq!(q.class_of, vec![0, 0, 1, 2]);
        assert_eq!(q.metric.get(0, 1), 1.5);
        assert_eq!(q.metric.get(0, 2), 2.5);
        assert_eq!(q.metric.get(1, 2), 1.0);
        assert_eq!(q.representatives, vec![0, 2, 3]);
    }

    #[test]
    fn oversized_tolerance_is_reported() {
        // points on a line; tol 0.1 chains 0..3 into one class, leaving
        // d(4,5) = 2.3 against 1 + 1 through the class
        let x: [f64; 6] = [0.0, 0.1, 0.2, 0.3, -1.0, 1.3];
        let p = PseudometricMatrix::from_fn(6, |i, j| (x[i] - x[j]).abs());
        assert!(matches!(
            metric_quotient(&p, 0.1 + 1e-12),
            Err(MetricError::ToleranceTooLarge { .. })
        ));
    }

    #[test]
    fn components_follow_finiteness() {
        let finite = PseudometricMatrix::zeros(4);
        assert_eq!(metric_components(&finite), vec![vec![0, 1, 2, 3]]);

        let block = PseudometricMatrix::from_rows(vec![
            vec![0.0, 1.0, INF, INF],
            vec![1.0, 0.0, INF, INF],
            vec![INF, INF, 0.0, 2.0],
            vec![INF, INF, 2.0, 0.0],
        ])
        .unwrap();
        assert_eq!(metric_components(&block), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn finite_chain_joins_components() {
        let p = PseudometricMatrix::from_rows(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(metric_components(&p).len(), 1);
    }

    #[test]
    fn verify_rejects_asymmetry_and_triangle() {
        let mut p = PseudometricMatrix::zeros(3);
        p.d[1] = 1.0;
        assert!(matches!(p.verify(1e-9), Err(MetricError::Asymmetric { .. })));
        let p = PseudometricMatrix::from_rows(vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(p.verify(1e-9), Err(MetricError::Triangle { .. })));
        assert!(p.metric_closure().verify(1e-12).is_ok());
    }

    #[test]
    fn json_uses_inf_strings() {
        let p = PseudometricMatrix::disconnected(2);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"[[0.0,"inf"],["inf",0.0]]"#);
        let back: PseudometricMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    fn random_metric() -> impl Strategy<Value = PseudometricMatrix> {
        (2usize..7).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), n).prop_map(
                move |pts| {
                    PseudometricMatrix::from_fn(n, |i, j| {
                        // rounding coordinates to a coarse lattice produces exact zeros
                        let (a, b) = (&pts[i], &pts[j]);
                        let r = |v: f64| (v * 2.0).round() / 2.0;
                        (r(a[0]) - r(b[0])).abs() + (r(a[1]) - r(b[1])).abs()
                    })
                },
            )
        })
    }

    proptest! {
        #[test]
        fn quotient_at_zero_is_idempotent(p in random_metric()) {
            let q1 = metric_quotient(&p, 0.0).unwrap();
            let q2 = metric_quotient(&q1.metric, 0.0).unwrap();
            prop_assert_eq!(q2.class_count(), q1.class_count());
            prop_assert_eq!(&q2.metric, &q1.metric);
            for i in 0..q1.class_count() {
                for j in 0..q1.class_count() {
                    if i != j {
                        prop_assert!(q1.metric.get(i, j) > 0.0);
                    }
                }
            }
        }

        #[test]
        fn matrix_json_roundtrip(p in random_metric()) {
            let s = serde_json::to_string(&p).unwrap();
            let back: PseudometricMatrix = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
