//! Euclidean point sets and k-center selection.
//!
//! The greedy selector is farthest-point sampling: after a random first
//! center, each step adds the point whose distance to its nearest chosen
//! center is largest. It keeps one "distance to nearest center" entry per
//! point, so a run costs O(n k d) time and O(n) extra memory.
//!
//! [`exact_kcenter`] enumerates every k-subset and exists to check the greedy
//! selector on small instances.

use itertools::Itertools;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` accepted by [`exact_kcenter`].
pub const EXACT_ORACLE_MAX_POINTS: usize = 20;

/// An `n x d` matrix of finite points. Row `i` always denotes the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Array2<f64>,
}

impl PointSet {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::contract(format!(
                "point set must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "point set entry {} (row {}) is not finite",
                pos,
                pos / data.ncols()
            )));
        }
        // Row access below relies on standard (C) layout.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(PointSet { data })
    }

    /// Builds a point set from row vectors of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::contract(format!(
                    "row {i} has dimension {} but row 0 has {d}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::contract(e.to_string()))?;
        Self::new(data)
    }

    /// 1-D convenience constructor.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let data = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::contract(e.to_string()))?;
        Self::new(data)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.as_slice()[i * d..(i + 1) * d]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("point set is kept in standard layout")
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// New point set holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<PointSet> {
        check_indices(self.len(), indices)?;
        PointSet::new(self.data.select(Axis(0), indices))
    }
}

/// Selected row indices plus the coverage radius they achieve over the source
/// point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetResult {
    pub indices: Vec<usize>,
    pub coverage_radius: f64,
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance between two points of equal dimension.
pub fn pairwise_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::contract("non-finite coordinate"));
    }
    Ok(squared_distance(a, b).sqrt())
}

/// Same as [`pairwise_distance`] for ndarray rows.
pub fn row_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => pairwise_distance(a, b),
        _ => pairwise_distance(&a.to_vec(), &b.to_vec()),
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if k > n {
        return Err(Error::contract(format!(
            "k = {k} exceeds the number of points n = {n}"
        )));
    }
    Ok(())
}

fn check_indices(n: usize, indices: &[usize]) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::contract(format!(
            "index {bad} out of range for {n} points"
        )));
    }
    Ok(())
}

/// Greedy k-center selection with the first center drawn uniformly from
/// `seed`.
pub fn greedy_coreset(points: &PointSet, k: usize, seed: u64) -> Result<CoresetResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    greedy_coreset_with_rng(points, k, &mut rng)
}

/// Greedy k-center selection drawing the first center from `rng`.
pub fn greedy_coreset_with_rng<R: Rng + ?Sized>(
    points: &PointSet,
    k: usize,
    rng: &mut R,
) -> Result<CoresetResult> {
    check_k(points.len(), k)?;
    let first = rng.gen_range(0..points.len());
    greedy_coreset_from(points, k, first)
}

/// Greedy k-center selection starting from a fixed first center.
///
/// Each later center is the unselected row farthest from its nearest center;
/// ties go to the lowest row index.
pub fn greedy_coreset_from(points: &PointSet, k: usize, first: usize) -> Result<CoresetResult> {
    let n = points.len();
    check_k(n, k)?;
    check_indices(n, &[first])?;

    let d = points.dim();
    let data = points.as_slice();
    let mut nearest_sq = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut indices = Vec::with_capacity(k);

    let mut center = first;
    loop {
        selected[center] = true;
        indices.push(center);

        let c = &data[center * d..(center + 1) * d];
        let mut best = usize::MAX;
        let mut best_sq = f64::NEG_INFINITY;
        for (i, (row, near)) in data.chunks_exact(d).zip(nearest_sq.iter_mut()).enumerate() {
            let sq = squared_distance(row, c);
            if sq < *near {
                *near = sq;
            }
            if !selected[i] && *near > best_sq {
                best_sq = *near;
                best = i;
            }
        }

        if indices.len() == k {
            break;
        }
        center = best;
    }

    let max_sq = nearest_sq.iter().copied().fold(0.0_f64, f64::max);
    Ok(CoresetResult {
        indices,
        coverage_radius: max_sq.sqrt(),
    })
}

/// Max over all rows of the distance to the nearest selected row.
pub fn coverage_radius(points: &PointSet, selected: &[usize]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::contract("selection must be nonempty"));
    }
    check_indices(points.len(), selected)?;
    let d = points.dim();
    let data = points.as_slice();
    let max_sq = data
        .chunks_exact(d)
        .map(|row| {
            selected
                .iter()
                .map(|&j| squared_distance(row, &data[j * d..(j + 1) * d]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0_f64, f64::max);
    Ok(max_sq.sqrt())
}

/// Optimal k-center by enumerating all k-subsets in lexicographic order.
///
/// Among optimal subsets the lexicographically smallest index list wins.
/// Rejects `n > EXACT_ORACLE_MAX_POINTS`.
pub fn exact_kcenter(points: &PointSet, k: usize) -> Result<CoresetResult> {
    let n = points.len();
    if n > EXACT_ORACLE_MAX_POINTS {
        return Err(Error::OracleTooLarge {
            n,
            cap: EXACT_ORACLE_MAX_POINTS,
        });
    }
    check_k(n, k)?;

    let mut dist_sq = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist_sq[i * n + j] = squared_distance(points.row(i), points.row(j));
        }
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..n).combinations(k) {
        let radius_sq = (0..n)
            .map(|i| {
                subset
                    .iter()
                    .map(|&j| dist_sq[i * n + j])
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0_f64, f64::max);
        // Strict comparison keeps the first (lexicographically smallest) optimum.
        if best.as_ref().is_none_or(|(b, _)| radius_sq < *b) {
            best = Some((radius_sq, subset));
        }
    }

    let (radius_sq, indices) = best.expect("k <= n guarantees at least one subset");
    Ok(CoresetResult {
        indices,
        coverage_radius: radius_sq.sqrt(),
    })
}
