//! Shared independent oracles for the integration and acceptance suites.
//!
//! Everything here recomputes results straight from definitions, on purpose
//! avoiding the code paths used by the library (Gram-cached pursuit,
//! reweighted least squares), so agreement is meaningful.

// Each test binary includes this module and uses its own subset.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Draws an `m x n` matrix of standard normals.
pub fn randn<R: Rng>(rng: &mut R, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

/// Random dictionary with unit-normalized Gaussian atoms.
pub fn random_unit_dictionary<R: Rng>(rng: &mut R, m: usize, n: usize) -> DMatrix<f64> {
    let mut atoms = randn(rng, m, n);
    for j in 0..n {
        let norm = atoms.column(j).norm();
        atoms.column_mut(j).scale_mut(1.0 / norm);
    }
    atoms
}

/// Random orthonormal basis: QR of a Gaussian square matrix.
pub fn random_orthonormal<R: Rng>(rng: &mut R, m: usize) -> DMatrix<f64> {
    randn(rng, m, m).qr().q()
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Coordinate-descent solver for `min 1/2 ||y - D c||^2 + lambda ||c||_1`
/// with unit-norm atoms. Independent of the library's M-FOCUSS path.
pub fn lasso_cd(dict: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, sweeps: usize) -> DVector<f64> {
    let n = dict.ncols();
    let mut c = DVector::zeros(n);
    let mut residual = y.clone();
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for j in 0..n {
            let atom = dict.column(j);
            let rho = atom.dot(&residual) + c[j];
            let updated = soft_threshold(rho, lambda);
            let delta = updated - c[j];
            if delta != 0.0 {
                residual -= atom * delta;
                c[j] = updated;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    c
}

/// The single-signal l1 objective.
pub fn l1_objective(dict: &DMatrix<f64>, y: &DVector<f64>, c: &DVector<f64>, lambda: f64) -> f64 {
    let residual = y - dict * c;
    0.5 * residual.norm_squared() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Plain orthogonal matching pursuit, written from the textbook recipe:
/// recompute the residual from scratch each iteration and refit by SVD
/// least squares on the explicit active submatrix.
pub fn direct_omp(dict: &DMatrix<f64>, y: &DVector<f64>, sparsity: usize) -> DVector<f64> {
    let n = dict.ncols();
    let mut coefficients = DVector::zeros(n);
    let mut active: Vec<usize> = Vec::new();
    for _ in 0..sparsity {
        let residual = y - dict * &coefficients;
        let mut best = 0usize;
        let mut best_score = -1.0;
        for j in 0..n {
            if active.contains(&j) {
                continue;
            }
            let score = dict.column(j).dot(&residual).abs();
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        if best_score == 0.0 {
            break;
        }
        active.push(best);
        let sub = dict.select_columns(active.iter());
        let rhs = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        let solution = sub
            .svd(true, true)
            .solve(&rhs, 1e-13)
            .expect("oracle least squares");
        coefficients.fill(0.0);
        for (slot, &j) in active.iter().enumerate() {
            coefficients[j] = solution[(slot, 0)];
        }
    }
    coefficients
}

/// Intersection-over-union by literally counting integer pixels. Boxes are
/// `(x, y, w, h)` with non-negative integer coordinates.
pub fn pixel_count_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |bx: (i64, i64, i64, i64), x: i64, y: i64| {
        x >= bx.0 && x < bx.0 + bx.2 && y >= bx.1 && y < bx.1 + bx.3
    };
    let x0 = a.0.min(b.0);
    let x1 = (a.0 + a.2).max(b.0 + b.2);
    let y0 = a.1.min(b.1);
    let y1 = (a.1 + a.3).max(b.1 + b.3);
    let mut intersection = 0u64;
    let mut union = 0u64;
    for y in y0..y1 {
        for x in x0..x1 {
            let in_a = inside(a, x, y);
            let in_b = inside(b, x, y);
            if in_a && in_b {
                intersection += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    intersection as f64 / union as f64
}
