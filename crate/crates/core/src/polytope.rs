//! The Birkhoff polytope of `m x m` doubly stochastic matrices.
//!
//! Points are stored as [`DoublyStochasticMatrix`]. The orthonormal
//! coordinates `alpha = G' P G` ([`AlphaCoordinates`]) give an isometry
//! between the polytope and a full-dimensional convex body in
//! `R^{(m-1)^2}`, which is where the sampler moves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// Entries down to `-FEASIBILITY_TOL` are treated as zero and clamped.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Maximum allowed deviation of a row or column sum from one.
pub const SUM_TOL: f64 = 1e-12;

/// An `m x m` nonnegative matrix with unit row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticMatrix {
    entries: DMatrix<f64>,
}

impl DoublyStochasticMatrix {
    /// Validates `entries`, clamping entries in `[-FEASIBILITY_TOL, 0)` to zero.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_sum_tolerance(entries, SUM_TOL)
    }

    pub fn with_sum_tolerance(mut entries: DMatrix<f64>, sum_tol: f64) -> Result<Self> {
        let m = entries.nrows();
        if entries.ncols() != m {
            return Err(Error::NotDoublyStochastic(format!(
                "matrix is {}x{}, not square",
                m,
                entries.ncols()
            )));
        }
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        for r in 0..m {
            for c in 0..m {
                let x = entries[(r, c)];
                if !x.is_finite() {
                    return Err(Error::NotDoublyStochastic(format!(
                        "entry ({r}, {c}) is not finite"
                    )));
                }
                if x < -FEASIBILITY_TOL {
                    return Err(Error::OutsidePolytope {
                        row: r,
                        col: c,
                        value: x,
                    });
                }
                if x < 0.0 {
                    entries[(r, c)] = 0.0;
                }
            }
        }
        let out = Self { entries };
        let residual = out.sum_residual();
        if residual > sum_tol {
            return Err(Error::NotDoublyStochastic(format!(
                "row/column sums deviate from 1 by {residual:e}"
            )));
        }
        Ok(out)
    }

    /// Builds from row-major nested slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::NotDoublyStochastic("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |r, c| rows[r][c]))
    }

    pub(crate) fn from_trusted(entries: DMatrix<f64>) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        Self { entries }
    }

    /// The polytope center `11'/m`.
    pub fn center(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        Ok(Self::from_trusted(DMatrix::from_element(
            m,
            m,
            1.0 / m as f64,
        )))
    }

    pub fn identity(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        Ok(Self::from_trusted(DMatrix::identity(m, m)))
    }

    /// Permutation matrix with a one at `(i, perm[i])`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let m = perm.len();
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let mut seen = vec![false; m];
        for &j in perm {
            if j >= m || seen[j] {
                return Err(Error::NotDoublyStochastic(format!(
                    "{perm:?} is not a permutation"
                )));
            }
            seen[j] = true;
        }
        let mut e = DMatrix::zeros(m, m);
        for (i, &j) in perm.iter().enumerate() {
            e[(i, j)] = 1.0;
        }
        Ok(Self::from_trusted(e))
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// The mixing-weight view `W = P / m`.
    pub fn mixing_weights(&self) -> DMatrix<f64> {
        &self.entries / self.m() as f64
    }

    pub fn min_entry(&self) -> f64 {
        self.entries.min()
    }

    /// Largest absolute deviation of any row or column sum from one.
    pub fn sum_residual(&self) -> f64 {
        let rows = self.entries.row_sum();
        let cols = self.entries.column_sum();
        rows.iter()
            .chain(cols.iter())
            .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()))
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if self.m() != other.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: other.m(),
            });
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("mixing weight {lambda} not in [0, 1]")));
        }
        Self::new(&self.entries * lambda + &other.entries * (1.0 - lambda))
    }

    /// Frobenius distance from the polytope center.
    pub fn radius(&self) -> f64 {
        radius(self)
    }
}

/// Free coordinates of `P` in the orthonormal basis `{v_i v_j'}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCoordinates {
    m: usize,
    alpha: DMatrix<f64>,
}

impl AlphaCoordinates {
    pub fn new(m: usize, alpha: DMatrix<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        if alpha.nrows() != m - 1 || alpha.ncols() != m - 1 {
            return Err(Error::DimensionMismatch {
                expected: m - 1,
                got: alpha.nrows().max(alpha.ncols()),
            });
        }
        Ok(Self { m, alpha })
    }

    /// The polytope center.
    pub fn zeros(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        Self::new(m, DMatrix::zeros(m - 1, m - 1))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha[(i, j)]
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, delta: f64) {
        self.alpha[(i, j)] += delta;
    }

    /// Whether `11'/m + G alpha G'` is entrywise `>= -FEASIBILITY_TOL`.
    pub fn is_valid(&self) -> bool {
        let basis = HilbertBasis::new(self.m).expect("order checked on construction");
        basis.raw_matrix(self).iter().all(|&x| x >= -FEASIBILITY_TOL)
    }
}

/// The orthonormal vectors `v_1..v_{m-1}` (columns of `G`), each orthogonal to `1`.
///
/// `v_i = (1, ..., 1, -i, 0, ..., 0)' / sqrt(i (i + 1))` with `i` leading ones.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertBasis {
    g: DMatrix<f64>,
}

impl HilbertBasis {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let mut g = DMatrix::zeros(m, m - 1);
        for col in 0..m - 1 {
            let i = (col + 1) as f64;
            let scale = 1.0 / (i * (i + 1.0)).sqrt();
            for row in 0..=col {
                g[(row, col)] = scale;
            }
            g[(col + 1, col)] = -i * scale;
        }
        Ok(Self { g })
    }

    pub fn m(&self) -> usize {
        self.g.nrows()
    }

    /// The `m x (m-1)` matrix `G = (v_1, ..., v_{m-1})`.
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `v_{i+1}` (zero-based column index).
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.g.column(i).into_owned()
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        (0..self.m() - 1).map(|i| self.vector(i)).collect()
    }

    /// `alpha = G' P G`.
    pub fn to_alpha(&self, p: &DoublyStochasticMatrix) -> Result<AlphaCoordinates> {
        if p.m() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: p.m(),
            });
        }
        AlphaCoordinates::new(self.m(), self.g.transpose() * p.as_matrix() * &self.g)
    }

    /// `P = 11'/m + G alpha G'`, rejecting points outside the polytope.
    pub fn from_alpha(&self, coords: &AlphaCoordinates) -> Result<DoublyStochasticMatrix> {
        if coords.m() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: coords.m(),
            });
        }
        let mut p = self.raw_matrix(coords);
        for r in 0..p.nrows() {
            for c in 0..p.ncols() {
                let x = p[(r, c)];
                if x < -FEASIBILITY_TOL {
                    return Err(Error::OutsidePolytope {
                        row: r,
                        col: c,
                        value: x,
                    });
                }
                if x < 0.0 {
                    p[(r, c)] = 0.0;
                }
            }
        }
        Ok(DoublyStochasticMatrix::from_trusted(p))
    }

    pub(crate) fn raw_matrix(&self, coords: &AlphaCoordinates) -> DMatrix<f64> {
        let m = self.m();
        let mut p = &self.g * coords.as_matrix() * self.g.transpose();
        p.add_scalar_mut(1.0 / m as f64);
        p
    }
}

/// Convenience wrapper around [`HilbertBasis::new`].
pub fn basis_vectors(m: usize) -> Result<HilbertBasis> {
    HilbertBasis::new(m)
}

pub fn to_alpha(p: &DoublyStochasticMatrix) -> AlphaCoordinates {
    HilbertBasis::new(p.m())
        .and_then(|b| b.to_alpha(p))
        .expect("order of a valid matrix is >= 2")
}

pub fn from_alpha(coords: &AlphaCoordinates) -> Result<DoublyStochasticMatrix> {
    HilbertBasis::new(coords.m())?.from_alpha(coords)
}

/// Frobenius distance `||P - 11'/m||`.
pub fn radius(p: &DoublyStochasticMatrix) -> f64 {
    let c = 1.0 / p.m() as f64;
    p.as_matrix()
        .iter()
        .map(|x| (x - c) * (x - c))
        .sum::<f64>()
        .sqrt()
}

/// Radius of the largest ball centered at `11'/m` inside the polytope.
pub fn inscribed_radius(m: usize) -> f64 {
    1.0 / (m as f64 - 1.0)
}

/// One term `weight * sigma` of a Birkhoff decomposition; `permutation[i]` is
/// the column of the one in row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffTerm {
    pub weight: f64,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffDecomposition {
    pub m: usize,
    pub terms: Vec<BirkhoffTerm>,
}

impl BirkhoffDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m);
        for t in &self.terms {
            for (i, &j) in t.permutation.iter().enumerate() {
                out[(i, j)] += t.weight;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

const SUPPORT_TOL: f64 = 1e-12;

/// Greedy Birkhoff algorithm: repeatedly peel off a permutation supported on
/// the positive entries, with weight equal to its smallest matched entry.
///
/// Each step moves the residual onto a proper face of the face containing it,
/// so at most `(m-1)^2 + 1` terms are produced.
pub fn birkhoff_decompose(p: &DoublyStochasticMatrix) -> Result<BirkhoffDecomposition> {
    let m = p.m();
    let max_terms = (m - 1) * (m - 1) + 1;
    let mut residual = p.as_matrix().clone();
    residual.iter_mut().for_each(|x| {
        if *x <= SUPPORT_TOL {
            *x = 0.0
        }
    });
    let mut terms = Vec::new();
    while residual.iter().any(|&x| x > SUPPORT_TOL) {
        if terms.len() == max_terms {
            return Err(Error::NumericalDegeneracy(format!(
                "residual mass {:e} left after {max_terms} terms",
                residual.sum() / m as f64
            )));
        }
        let perm = perfect_matching(&residual).ok_or_else(|| {
            Error::NumericalDegeneracy("no perfect matching on the positive support".into())
        })?;
        let weight = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| residual[(i, j)])
            .fold(f64::INFINITY, f64::min);
        for (i, &j) in perm.iter().enumerate() {
            residual[(i, j)] -= weight;
        }
        residual.iter_mut().for_each(|x| {
            if *x <= SUPPORT_TOL {
                *x = 0.0
            }
        });
        terms.push(BirkhoffTerm {
            weight,
            permutation: perm,
        });
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    for t in &mut terms {
        t.weight /= total;
    }
    Ok(BirkhoffDecomposition { m, terms })
}

/// Kuhn's augmenting-path matching on the bipartite graph of positive entries.
/// Columns are tried in decreasing order of entry so large entries are preferred.
fn perfect_matching(a: &DMatrix<f64>) -> Option<Vec<usize>> {
    let m = a.nrows();
    let order: Vec<Vec<usize>> = (0..m)
        .map(|r| {
            let mut cols: Vec<usize> = (0..m).filter(|&c| a[(r, c)] > SUPPORT_TOL).collect();
            cols.sort_by(|&x, &y| a[(r, y)].total_cmp(&a[(r, x)]));
            cols
        })
        .collect();
    let mut col_owner: Vec<Option<usize>> = vec![None; m];

    fn augment(
        r: usize,
        order: &[Vec<usize>],
        visited: &mut [bool],
        col_owner: &mut [Option<usize>],
    ) -> bool {
        for &c in &order[r] {
            if visited[c] {
                continue;
            }
            visited[c] = true;
            if col_owner[c].is_none_or(|r2| augment(r2, order, visited, col_owner)) {
                col_owner[c] = Some(r);
                return true;
            }
        }
        false
    }

    for r in 0..m {
        let mut visited = vec![false; m];
        if !augment(r, &order, &mut visited, &mut col_owner) {
            return None;
        }
    }
    let mut perm = vec![0; m];
    for (c, owner) in col_owner.iter().enumerate() {
        perm[owner.expect("perfect matching covers every column")] = c;
    }
    Some(perm)
}

/// Scales a positive matrix to (near) double stochasticity by alternating
/// row and column normalization.
pub fn sinkhorn(mut a: DMatrix<f64>, max_iter: usize, tol: f64) -> DMatrix<f64> {
    for _ in 0..max_iter {
        for mut row in a.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        for mut col in a.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let resid = a
            .column_sum()
            .iter()
            .fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()));
        if resid < tol {
            break;
        }
    }
    a
}

/// An interior point drawn by Sinkhorn-normalizing i.i.d. exponential draws,
/// then projected onto the affine hull so sums are exact to rounding.
pub fn random_interior<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<DoublyStochasticMatrix> {
    let basis = HilbertBasis::new(m)?;
    let raw = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(Exp1) + 1e-3);
    let scaled = sinkhorn(raw, 10_000, 1e-14);
    let alpha = AlphaCoordinates::new(m, basis.g().transpose() * scaled * basis.g())?;
    basis.from_alpha(&alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn m2_basis_vector() {
        let b = basis_vectors(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b.vector(0)[0], s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.vector(0)[1], -s, epsilon = 1e-15);
    }

    #[test]
    fn m3_second_basis_vector() {
        let b = basis_vectors(3).unwrap();
        let s = 1.0 / 6f64.sqrt();
        let v = b.vector(1);
        assert_abs_diff_eq!(v[0], s, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], -2.0 * s, epsilon = 1e-15);
    }

    #[test]
    fn basis_is_orthonormal_and_orthogonal_to_ones() {
        for m in 2..12 {
            let b = basis_vectors(m).unwrap();
            let gtg = b.g().transpose() * b.g();
            assert!((gtg - DMatrix::<f64>::identity(m - 1, m - 1)).amax() < 1e-14);
            assert!(b.g().row_sum().amax() < 1e-14);
        }
    }

    #[test]
    fn invalid_order() {
        assert!(matches!(basis_vectors(1), Err(Error::InvalidOrder(1))));
        assert!(matches!(
            DoublyStochasticMatrix::center(0),
            Err(Error::InvalidOrder(0))
        ));
    }

    #[test]
    fn alpha_zero_is_center() {
        let p = from_alpha(&AlphaCoordinates::zeros(5).unwrap()).unwrap();
        assert!((p.as_matrix().add_scalar(-0.2)).amax() < 1e-15);
    }

    #[test]
    fn m2_alpha_one_is_identity() {
        let a = AlphaCoordinates::new(2, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = from_alpha(&a).unwrap();
        assert!((p.as_matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn m3_identity_alpha() {
        let id = DoublyStochasticMatrix::identity(3).unwrap();
        let a = to_alpha(&id);
        assert!((a.as_matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let back = from_alpha(&a).unwrap();
        assert!((back.as_matrix() - id.as_matrix()).amax() < 1e-15);
    }

    #[test]
    fn center_alpha_is_zero() {
        let a = to_alpha(&DoublyStochasticMatrix::center(4).unwrap());
        assert!(a.as_matrix().amax() < 1e-15);
    }

    #[test]
    fn outside_polytope_rejected() {
        let a = AlphaCoordinates::new(2, DMatrix::from_element(1, 1, 1.5)).unwrap();
        assert!(!a.is_valid());
        assert!(matches!(from_alpha(&a), Err(Error::OutsidePolytope { .. })));
    }

    #[test]
    fn tiny_negative_entries_are_clamped() {
        let p = DoublyStochasticMatrix::from_rows(&[&[1.0 + 5e-13, -5e-13], &[-5e-13, 1.0 + 5e-13]])
            .unwrap();
        assert_eq!(p.get(0, 1), 0.0);
    }

    #[test]
    fn bad_sums_rejected() {
        let r = DoublyStochasticMatrix::from_rows(&[&[0.5, 0.4], &[0.5, 0.6]]);
        assert!(matches!(r, Err(Error::NotDoublyStochastic(_))));
    }

    #[test]
    fn permutation_decomposes_to_single_term() {
        let p = DoublyStochasticMatrix::permutation(&[2, 0, 3, 1]).unwrap();
        let d = birkhoff_decompose(&p).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.terms[0].weight, 1.0);
        assert_eq!(d.terms[0].permutation, vec![2, 0, 3, 1]);
    }

    #[test]
    fn m2_decomposition_by_hand() {
        let p = DoublyStochasticMatrix::from_rows(&[&[0.75, 0.25], &[0.25, 0.75]]).unwrap();
        let d = birkhoff_decompose(&p).unwrap();
        assert_eq!(d.len(), 2);
        let mut terms = d.terms.clone();
        terms.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        assert_abs_diff_eq!(terms[0].weight, 0.75, epsilon = 1e-15);
        assert_eq!(terms[0].permutation, vec![0, 1]);
        assert_abs_diff_eq!(terms[1].weight, 0.25, epsilon = 1e-15);
        assert_eq!(terms[1].permutation, vec![1, 0]);
    }

    #[test]
    fn center_decomposition_reconstructs() {
        let p = DoublyStochasticMatrix::center(3).unwrap();
        let d = birkhoff_decompose(&p).unwrap();
        assert!((d.reconstruct() - p.as_matrix()).amax() < 1e-10);
        assert!(d.len() <= 5);
    }

    #[test]
    fn radius_of_vertices() {
        for m in 2..8 {
            let perm: Vec<usize> = (0..m).rev().collect();
            let p = DoublyStochasticMatrix::permutation(&perm).unwrap();
            assert_abs_diff_eq!(radius(&p), ((m - 1) as f64).sqrt(), epsilon = 1e-14);
            assert_eq!(radius(&DoublyStochasticMatrix::center(m).unwrap()), 0.0);
        }
        assert_abs_diff_eq!(inscribed_radius(4), 1.0 / 3.0);
    }

    #[test]
    fn radius_equals_alpha_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_interior(5, &mut rng).unwrap();
        assert_abs_diff_eq!(radius(&p), to_alpha(&p).as_matrix().norm(), epsilon = 1e-14);
    }

    #[test]
    fn random_interior_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [2, 3, 6, 10] {
            let p = random_interior(m, &mut rng).unwrap();
            assert!(p.sum_residual() < 1e-13);
            assert!(p.min_entry() > 0.0);
        }
    }
}
