//! Maximum likelihood for the indicator-basis model.
//!
//! With frequencies `f = N / n`, maximizing `sum f_ij log P_ij` over doubly
//! stochastic `P` has the Lagrange dual
//!
//! ```text
//! minimize  sum_i a_i + sum_j b_j - sum_ij f_ij log(a_i + b_j)
//! subject to a_i + b_j >= 0 for all i, j
//! ```
//!
//! The constraint only involves `min a + min b`, and shifting `a` up and `b`
//! down by the same constant leaves the objective unchanged, so the feasible
//! set can be taken to be `a, b >= 0`. That is a `2m`-dimensional convex
//! problem with bounds, solved here by projected Newton. The primal optimum
//! is `P_ij = f_ij / (a_i + b_j)` on counted cells; the remaining row and
//! column mass sits on cells with `a_i = b_j = 0`, which are never counted,
//! and is spread there in product form.

use nalgebra::{DMatrix, DVector};

use crate::data::CountMatrix;
use crate::error::{Error, Result};
use crate::polytope::{sinkhorn, DoublyStochasticMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Cap on Newton steps.
    pub max_iterations: usize,
    /// Stop once the projected dual gradient, i.e. the row and column sum
    /// defect of the primal point, is below this.
    pub tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-13,
        }
    }
}

/// `sum_ij N_ij log P_ij`, `-inf` if a counted cell is empty.
pub fn objective(counts: &CountMatrix, p: &DMatrix<f64>) -> f64 {
    let m = counts.m();
    let mut acc = 0.0;
    for r in 0..m {
        for c in 0..m {
            let n = counts.get(r, c);
            if n > 0 {
                let x = p[(r, c)];
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                acc += n as f64 * x.ln();
            }
        }
    }
    acc
}

struct Dual {
    m: usize,
    /// Counted cells `(row, col, f)`.
    cells: Vec<(usize, usize, f64)>,
}

impl Dual {
    /// Objective at `x = (a, b)`; `+inf` outside the domain.
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = x.sum();
        for &(r, c, f) in &self.cells {
            let s = x[r] + x[self.m + c];
            if s <= 0.0 {
                return f64::INFINITY;
            }
            v -= f * s.ln();
        }
        v
    }

    fn gradient_and_hessian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = 2 * self.m;
        let mut g = DVector::from_element(k, 1.0);
        let mut h = DMatrix::zeros(k, k);
        for &(r, c, f) in &self.cells {
            let (i, j) = (r, self.m + c);
            let s = x[i] + x[j];
            g[i] -= f / s;
            g[j] -= f / s;
            let q = f / (s * s);
            h[(i, i)] += q;
            h[(j, j)] += q;
            h[(i, j)] += q;
            h[(j, i)] += q;
        }
        (g, h)
    }

    /// Counted-cell part of the primal point.
    fn primal(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.m, self.m);
        for &(r, c, f) in &self.cells {
            p[(r, c)] = f / (x[r] + x[self.m + c]);
        }
        p
    }
}

/// Solves `h d = g` after Jacobi scaling. The Hessian is singular along
/// the shift `(a + t, b - t)` of each connected block of counted cells;
/// the ridge picks one solution without touching the other directions.
fn newton_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let k = g.len();
    if k == 0 {
        return Some(DVector::zeros(0));
    }
    let scale = DVector::from_fn(k, |i, _| {
        let d = h[(i, i)];
        if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
    });
    let mut scaled = DMatrix::from_fn(k, k, |i, j| h[(i, j)] * scale[i] * scale[j]);
    for i in 0..k {
        scaled[(i, i)] += 1e-12;
    }
    let b = g.component_mul(&scale);
    let y = match scaled.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => scaled.lu().solve(&b)?,
    };
    Some(y.component_mul(&scale))
}

fn projected_step(x: &DVector<f64>, d: &DVector<f64>, t: f64) -> DVector<f64> {
    x.zip_map(d, |x, d| (x - t * d).max(0.0))
}

/// Fills the row and column defects of the counted part `p` and removes
/// the remaining rounding by Sinkhorn scaling.
fn complete(mut p: DMatrix<f64>) -> DMatrix<f64> {
    let r: Vec<f64> = p.column_sum().iter().map(|s| (1.0 - s).max(0.0)).collect();
    let c: Vec<f64> = p.row_sum().iter().map(|s| (1.0 - s).max(0.0)).collect();
    let total: f64 = r.iter().sum::<f64>().max(c.iter().sum());
    if total > 0.0 {
        for (i, ri) in r.iter().enumerate() {
            for (j, cj) in c.iter().enumerate() {
                p[(i, j)] += ri * cj / total;
            }
        }
    }
    sinkhorn(p, 100, 1e-15)
}

/// Maximizes `sum N_ij log P_ij` over doubly stochastic `P`.
pub fn mle_matrix(counts: &CountMatrix) -> Result<DoublyStochasticMatrix> {
    mle_matrix_with(counts, &MleOptions::default())
}

pub fn mle_matrix_with(counts: &CountMatrix, opts: &MleOptions) -> Result<DoublyStochasticMatrix> {
    let m = counts.m();
    let total = counts.total();
    if total == 0 {
        return Err(Error::MissingData);
    }
    let mut cells = Vec::new();
    for r in 0..m {
        for c in 0..m {
            let k = counts.get(r, c);
            if k > 0 {
                cells.push((r, c, k as f64 / total as f64));
            }
        }
    }
    let dual = Dual { m, cells };
    let k = 2 * m;
    // A row or column without counts enters the dual linearly with slope 1,
    // so its variable sits at 0.
    let mut touched = vec![false; k];
    for &(r, c, _) in &dual.cells {
        touched[r] = true;
        touched[m + c] = true;
    }
    let mut x = DVector::from_fn(k, |i, _| if touched[i] { 0.5 } else { 0.0 });
    let mut fx = dual.value(&x);
    let mut iterations = 0;
    loop {
        let (g, h) = dual.gradient_and_hessian(&x);
        // Distance to the projected gradient step measures stationarity.
        let stat = (0..k)
            .map(|i| (x[i] - (x[i] - g[i]).max(0.0)).abs())
            .fold(0.0, f64::max);
        if stat <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            let best = DoublyStochasticMatrix::with_sum_tolerance(complete(dual.primal(&x)), 1e-9)?;
            return Err(Error::ConvergenceFailure {
                iterations,
                best: Box::new(best),
            });
        }
        iterations += 1;

        // Variables at (or near) their bound that want to decrease are held.
        let eps = stat.min(1e-6);
        let free: Vec<usize> = (0..k)
            .filter(|&i| touched[i] && !(x[i] <= eps && g[i] > 0.0))
            .collect();
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let gf = DVector::from_fn(free.len(), |a, _| g[free[a]]);
        let Some(df) = newton_solve(&hf, &gf) else {
            return Err(Error::NumericalDegeneracy("singular dual Newton system".into()));
        };
        let mut d = g.clone();
        for (a, &i) in free.iter().enumerate() {
            d[i] = df[a];
        }

        let full = projected_step(&x, &d, 1.0);
        let predicted: f64 = (0..k).map(|i| g[i] * (x[i] - full[i])).sum();
        if predicted > 0.0 && predicted <= 1e-12 * (1.0 + fx.abs()) {
            // The decrease is at rounding level, so the sufficient-decrease
            // test is meaningless; Newton is in its quadratic regime here.
            let ft = dual.value(&full);
            if ft.is_finite() {
                x = full;
                fx = ft;
                continue;
            }
        }
        // Newton direction first, projected gradient as the fallback.
        let mut accepted = false;
        for dir in [&d, &g] {
            let mut t = 1.0;
            for _ in 0..60 {
                let trial = projected_step(&x, dir, t);
                let ft = dual.value(&trial);
                let decrease: f64 = (0..k).map(|i| g[i] * (x[i] - trial[i])).sum();
                if ft.is_finite() && decrease > 0.0 && fx - ft >= 1e-4 * decrease {
                    x = trial;
                    fx = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            let best = DoublyStochasticMatrix::with_sum_tolerance(complete(dual.primal(&x)), 1e-9)?;
            return Err(Error::ConvergenceFailure {
                iterations,
                best: Box::new(best),
            });
        }
    }
    DoublyStochasticMatrix::with_sum_tolerance(complete(dual.primal(&x)), 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::rng::stream_rng;

    #[test]
    fn uniform_counts_give_center() {
        let n = CountMatrix::from_rows(&[&[3, 3, 3], &[3, 3, 3], &[3, 3, 3]]).unwrap();
        let p = mle_matrix(&n).unwrap();
        assert!(p.as_matrix().add_scalar(-1.0 / 3.0).amax() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..100 {
            let k: Vec<u64> = (0..4).map(|_| rng.random_range(0..20)).collect();
            if k.iter().sum::<u64>() == 0 {
                continue;
            }
            let n = CountMatrix::from_rows(&[&k[0..2], &k[2..4]]).unwrap();
            let p = mle_matrix(&n).unwrap();
            let expect = (k[0] + k[3]) as f64 / k.iter().sum::<u64>() as f64;
            assert!((p.get(0, 0) - expect).abs() <= 1e-8, "{k:?}");
        }
    }

    #[test]
    fn diagonal_counts_reach_the_identity() {
        let n = CountMatrix::from_rows(&[&[5, 0, 0], &[0, 4, 0], &[0, 0, 6]]).unwrap();
        let p = mle_matrix(&n).unwrap();
        assert!((p.as_matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-9);
    }

    #[test]
    fn boundary_optimum() {
        let n = CountMatrix::from_rows(&[
            &[4, 1, 0, 0],
            &[0, 3, 2, 0],
            &[0, 0, 5, 1],
            &[2, 0, 0, 6],
        ])
        .unwrap();
        let p = mle_matrix(&n).unwrap();
        let f = objective(&n, p.as_matrix());
        let mut rng = stream_rng(12, 0);
        for _ in 0..200 {
            let q = crate::polytope::random_interior(4, &mut rng).unwrap();
            let mixed = p.mix(&q, 1e-3).unwrap();
            assert!(objective(&n, mixed.as_matrix()) <= f + 1e-12);
        }
    }

    #[test]
    fn beats_random_points() {
        let mut rng = stream_rng(6, 0);
        for _ in 0..20 {
            let k: Vec<u64> = (0..36).map(|_| rng.random_range(0..4)).collect();
            let rows: Vec<&[u64]> = k.chunks(6).collect();
            let n = CountMatrix::from_rows(&rows).unwrap();
            let p = mle_matrix(&n).unwrap();
            let f = objective(&n, p.as_matrix());
            for _ in 0..20 {
                let q = crate::polytope::random_interior(6, &mut rng).unwrap();
                assert!(objective(&n, q.as_matrix()) <= f);
                let near = p.mix(&q, 1e-4).unwrap();
                assert!(objective(&n, near.as_matrix()) <= f + 1e-10);
            }
        }
    }

    #[test]
    fn converges_on_sparse_and_dense_counts() {
        let mut rng = stream_rng(21, 0);
        for m in 2..=8 {
            for n in [5u64, 30, 100, 1000] {
                for rep in 0..10 {
                    let mut k = vec![0u64; m * m];
                    for _ in 0..n {
                        // Half the matrices use only near-diagonal cells, so
                        // optima sit on faces.
                        let r = rng.random_range(0..m);
                        let c = if rep % 2 == 0 {
                            (r + rng.random_range(0..2)) % m
                        } else {
                            rng.random_range(0..m)
                        };
                        k[r * m + c] += 1;
                    }
                    let rows: Vec<&[u64]> = k.chunks(m).collect();
                    let counts = CountMatrix::from_rows(&rows).unwrap();
                    let p = mle_matrix(&counts).unwrap_or_else(|e| panic!("{k:?}: {e:?}"));
                    let f = objective(&counts, p.as_matrix());
                    for _ in 0..5 {
                        let q = crate::polytope::random_interior(m, &mut rng).unwrap();
                        let near = p.mix(&q, 1e-3).unwrap();
                        let slack = 1e-9 * n as f64;
                        let g = objective(&counts, near.as_matrix());
                        assert!(g <= f + slack, "{k:?}: {g} > {f}\n{}", p.as_matrix());
                    }
                }
            }
        }
    }
}
