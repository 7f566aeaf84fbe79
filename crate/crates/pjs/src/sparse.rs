//! Single-signal and joint (MMV) sparse recovery.
//!
//! Two solvers cover the coding needs of the tracker. [`somp`] greedily
//! approximates the row-sparsity-constrained problem
//!
//! ```text
//! min ||Y - D C||_F^2   s.t.   (number of nonzero rows of C) <= L
//! ```
//!
//! by repeatedly selecting the atom with the largest correlation against the
//! shared residual and refitting the active coefficients by least squares.
//! [`mfocuss`] solves the convex relaxation
//!
//! ```text
//! min 1/2 ||Y - D C||_F^2 + lambda * sum_j ||C_j||_2
//! ```
//!
//! (the l2,1-regularized multiple-measurement-vector problem) by iteratively
//! reweighted least squares: with `W = diag(||C_j||_2)` computed from the
//! previous iterate, the update `C <- W D^T (D W D^T + lambda I)^-1 Y` is a
//! majorize-minimize step, so the objective never increases.
//!
//! Both operate on a shared [`Dictionary`] whose atoms are unit-norm columns.
//! All functions are pure; dictionaries may be shared read-only across
//! threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default convergence threshold on `||C_new - C_old||_F` in [`mfocuss`].
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default iteration cap for [`mfocuss`].
pub const DEFAULT_MAX_ITER: usize = 100;

/// Rows whose l2 norm falls below this are frozen at zero during
/// reweighting, keeping the diagonal weight matrix well conditioned.
pub const ROW_FREEZE_EPS: f64 = 1e-12;

const UNIT_NORM_TOL: f64 = 1e-9;

/// A dictionary of unit-norm atoms, one per column.
///
/// The Gram matrix `D^T D` is precomputed at construction; it lets the
/// pursuit update residual correlations without touching the full signal
/// dimension on every iteration.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps an `M x N` matrix of atoms. Every column must have unit l2
    /// norm (within `1e-9`) and all entries must be finite.
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(Error::InvalidInput("dictionary must be non-empty".into()));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dictionary contains non-finite entries".into(),
            ));
        }
        for j in 0..atoms.ncols() {
            let norm = atoms.column(j).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "atom {j} has norm {norm}, expected 1"
                )));
            }
        }
        let gram = atoms.tr_mul(&atoms);
        Ok(Dictionary { atoms, gram })
    }

    /// Signal dimension `M`.
    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `N`.
    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// Precomputed `D^T D`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// A group of signals coded jointly: an `M x (k+1)` matrix whose columns
/// share a sparsity pattern. A single signal is the one-column special case.
#[derive(Clone, Debug)]
pub struct SignalGroup {
    signals: DMatrix<f64>,
}

impl SignalGroup {
    pub fn new(signals: DMatrix<f64>) -> Result<Self> {
        if signals.nrows() == 0 || signals.ncols() == 0 {
            return Err(Error::InvalidInput("signal group must be non-empty".into()));
        }
        if signals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "signal group contains non-finite entries".into(),
            ));
        }
        Ok(SignalGroup { signals })
    }

    pub fn from_column(signal: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(
            signal.len(),
            1,
            signal.as_slice(),
        ))
    }

    /// Builds a group from columns laid out left to right.
    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::InvalidInput("signal group must be non-empty".into()))?;
        let m = first.len();
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidInput(
                "signal group columns differ in length".into(),
            ));
        }
        let mut signals = DMatrix::zeros(m, columns.len());
        for (j, col) in columns.iter().enumerate() {
            signals.set_column(j, col);
        }
        Self::new(signals)
    }

    pub fn signals(&self) -> &DMatrix<f64> {
        &self.signals
    }

    pub fn signal_dim(&self) -> usize {
        self.signals.nrows()
    }

    /// Number of jointly coded signals, `k + 1`.
    pub fn group_size(&self) -> usize {
        self.signals.ncols()
    }
}

/// Joint sparse coefficients: an `N x (k+1)` matrix plus the set of rows
/// with nonzero l2 norm.
#[derive(Clone, Debug)]
pub struct SparseCodeMatrix {
    coefficients: DMatrix<f64>,
    active_rows: Vec<usize>,
    converged: bool,
}

impl SparseCodeMatrix {
    fn from_coefficients(coefficients: DMatrix<f64>, converged: bool) -> Self {
        let active_rows = (0..coefficients.nrows())
            .filter(|&r| coefficients.row(r).norm() > 0.0)
            .collect();
        SparseCodeMatrix {
            coefficients,
            active_rows,
            converged,
        }
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Row indices with nonzero l2 norm, ascending.
    pub fn active_rows(&self) -> &[usize] {
        &self.active_rows
    }

    /// False when [`mfocuss`] stopped on its iteration cap instead of the
    /// convergence threshold. Always true for [`somp`].
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Coefficient vector of signal `j` in the group.
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.coefficients.column(j).into_owned()
    }

    /// Coefficients of the last (most recent) signal in the group.
    pub fn last_column(&self) -> DVector<f64> {
        self.column(self.coefficients.ncols() - 1)
    }
}

fn check_dims(dict: &Dictionary, group: &SignalGroup) -> Result<()> {
    if dict.signal_dim() != group.signal_dim() {
        return Err(Error::InvalidInput(format!(
            "dictionary rows ({}) do not match signal rows ({})",
            dict.signal_dim(),
            group.signal_dim()
        )));
    }
    Ok(())
}

/// The l2,1-regularized objective `1/2 ||Y - D C||_F^2 + lambda ||C||_2,1`.
pub fn joint_objective(
    dict: &Dictionary,
    group: &SignalGroup,
    coefficients: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let residual = group.signals() - dict.atoms() * coefficients;
    let row_norm_sum: f64 = (0..coefficients.nrows())
        .map(|r| coefficients.row(r).norm())
        .sum();
    0.5 * residual.norm_squared() + lambda * row_norm_sum
}

/// Simultaneous orthogonal matching pursuit.
///
/// Selects at most `sparsity` atoms. Each iteration picks the inactive atom
/// `d_j` maximizing `||R^T d_j||_2` (ties broken by lowest index, where `R`
/// is the current residual), then refits all active coefficients by least
/// squares against every column of the group. Returns an all-zero code for
/// `sparsity == 0`.
pub fn somp(dict: &Dictionary, group: &SignalGroup, sparsity: usize) -> Result<SparseCodeMatrix> {
    check_dims(dict, group)?;
    let n = dict.n_atoms();
    let cols = group.group_size();
    if sparsity > dict.signal_dim().min(n) {
        return Err(Error::InvalidInput(format!(
            "sparsity {} exceeds min(M, N) = {}",
            sparsity,
            dict.signal_dim().min(n)
        )));
    }

    let mut coefficients = DMatrix::zeros(n, cols);
    if sparsity == 0 {
        return Ok(SparseCodeMatrix::from_coefficients(coefficients, true));
    }

    // Residual correlations D^T R, maintained via the Gram matrix:
    // D^T (Y - D_A X) = D^T Y - G[:, A] X.
    let targets = dict.atoms().tr_mul(group.signals()); // N x cols
    let mut correlations = targets.clone();
    let mut active: Vec<usize> = Vec::with_capacity(sparsity);
    let mut is_active = vec![false; n];

    for _ in 0..sparsity {
        let mut best: Option<(usize, f64)> = None;
        for (j, &taken) in is_active.iter().enumerate() {
            if taken {
                continue;
            }
            let score = correlations.row(j).norm_squared();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let (pick, score) = best.expect("sparsity <= N leaves an inactive atom");
        if score == 0.0 {
            break; // residual orthogonal to every remaining atom
        }
        active.push(pick);
        is_active[pick] = true;

        let solution = refit_active(dict, group, &targets, &active)?;
        let atoms_sub = dict.gram().select_columns(active.iter());
        correlations = &targets - &atoms_sub * &solution;

        coefficients.fill(0.0);
        for (slot, &row) in active.iter().enumerate() {
            coefficients.set_row(row, &solution.row(slot));
        }
    }

    let mut code = SparseCodeMatrix::from_coefficients(coefficients, true);
    // The refit can zero a coefficient exactly; the support is still the
    // selected atom set, capped at `sparsity`.
    let mut support = active;
    support.sort_unstable();
    code.active_rows = support;
    Ok(code)
}

/// Least-squares refit over the active atoms, all group columns at once.
/// Normal equations via the cached Gram blocks; SVD fallback when the
/// active set is numerically rank deficient.
fn refit_active(
    dict: &Dictionary,
    group: &SignalGroup,
    targets: &DMatrix<f64>,
    active: &[usize],
) -> Result<DMatrix<f64>> {
    let k = active.len();
    let mut gram_sub = DMatrix::zeros(k, k);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            gram_sub[(a, b)] = dict.gram()[(i, j)];
        }
    }
    let mut rhs = DMatrix::zeros(k, targets.ncols());
    for (a, &i) in active.iter().enumerate() {
        rhs.set_row(a, &targets.row(i));
    }
    if let Some(chol) = gram_sub.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    let atoms_sub = dict.atoms().select_columns(active.iter());
    atoms_sub
        .svd(true, true)
        .solve(group.signals(), 1e-12)
        .map_err(|e| Error::Numerical(format!("rank-deficient pursuit refit: {e}")))
}

/// Regularized M-FOCUSS for the l2,1 joint sparse problem.
///
/// Iterates `C <- W D^T (D W D^T + lambda I)^-1 Y` with
/// `W = diag(||C_j||_2)` from the previous iterate, starting from
/// `C_0 = D^T Y`. Rows whose norm falls below [`ROW_FREEZE_EPS`] are frozen
/// at zero. Stops when `||C_new - C_old||_F < tol`; if `max_iter` is
/// exhausted first the last iterate is returned with
/// [`SparseCodeMatrix::converged`] set to false.
pub fn mfocuss(
    dict: &Dictionary,
    group: &SignalGroup,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SparseCodeMatrix> {
    mfocuss_with_trace(dict, group, lambda, tol, max_iter).map(|(code, _)| code)
}

/// [`mfocuss`] plus the objective value after the initial iterate and each
/// update. Majorize-minimize guarantees the trace is non-increasing.
pub fn mfocuss_with_trace(
    dict: &Dictionary,
    group: &SignalGroup,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(SparseCodeMatrix, Vec<f64>)> {
    check_dims(dict, group)?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::InvalidInput(format!(
            "tol must be finite and >= 0, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be positive".into()));
    }

    let m = dict.signal_dim();
    let n = dict.n_atoms();
    let mut coefficients = dict.atoms().tr_mul(group.signals()); // C0 = D^T Y
    let mut trace = vec![joint_objective(dict, group, &coefficients, lambda)];
    let mut converged = false;

    for _ in 0..max_iter {
        let mut weights = DVector::zeros(n);
        let mut any_live = false;
        for r in 0..n {
            let norm = coefficients.row(r).norm();
            if norm >= ROW_FREEZE_EPS {
                weights[r] = norm;
                any_live = true;
            }
        }
        if !any_live {
            // Zero signal (or everything frozen): the minimizer is C = 0.
            coefficients.fill(0.0);
            converged = true;
            break;
        }

        let mut weighted_atoms = dict.atoms().clone();
        for j in 0..n {
            weighted_atoms.column_mut(j).scale_mut(weights[j]);
        }
        let mut system = &weighted_atoms * dict.atoms().transpose();
        for i in 0..m {
            system[(i, i)] += lambda;
        }
        let chol = system.cholesky().ok_or_else(|| {
            Error::Numerical(
                "D W D^T + lambda I is not positive definite; \
                 lambda = 0 requires an invertible weighted system"
                    .into(),
            )
        })?;
        let solved = chol.solve(group.signals()); // (D W D^T + lambda I)^-1 Y
        let mut next = dict.atoms().tr_mul(&solved);
        for r in 0..n {
            next.row_mut(r).scale_mut(weights[r]);
        }

        let delta = (&next - &coefficients).norm();
        coefficients = next;
        trace.push(joint_objective(dict, group, &coefficients, lambda));
        if delta < tol {
            converged = true;
            break;
        }
    }

    Ok((
        SparseCodeMatrix::from_coefficients(coefficients, converged),
        trace,
    ))
}

/// Sparse-codes a single signal: the one-column group makes the l2,1
/// penalty coincide with the l1 norm, so this solves
/// `min 1/2 ||y - D c||_2^2 + lambda ||c||_1` via [`mfocuss`] with the
/// default tolerance and iteration cap.
pub fn sparse_code_single(
    dict: &Dictionary,
    signal: &DVector<f64>,
    lambda: f64,
) -> Result<SparseCodeMatrix> {
    let group = SignalGroup::from_column(signal)?;
    mfocuss(dict, &group, lambda, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dict(n: usize) -> Dictionary {
        Dictionary::new(DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn dictionary_rejects_unnormalized_atoms() {
        let atoms = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            Dictionary::new(atoms),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dictionary_rejects_non_finite() {
        let atoms = DMatrix::from_column_slice(2, 1, &[f64::NAN, 0.0]);
        assert!(matches!(
            Dictionary::new(atoms),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn somp_identity_single_atom() {
        // Orthonormal identity case: one pursuit step picks the dominant
        // coordinate and leaves the rest as residual.
        let dict = identity_dict(3);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![0.9, 0.1, 0.0])).unwrap();
        let code = somp(&dict, &group, 1).unwrap();
        assert_eq!(code.active_rows(), &[0]);
        assert!((code.coefficients()[(0, 0)] - 0.9).abs() < 1e-12);
        let residual = group.signals() - dict.atoms() * code.coefficients();
        assert!((residual.norm() - 0.01f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn somp_zero_sparsity_returns_zero_code() {
        let dict = identity_dict(3);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let code = somp(&dict, &group, 0).unwrap();
        assert!(code.coefficients().iter().all(|&v| v == 0.0));
        assert!(code.active_rows().is_empty());
    }

    #[test]
    fn somp_dimension_mismatch_errors() {
        let dict = identity_dict(3);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            somp(&dict, &group, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn somp_sparsity_above_dims_errors() {
        let dict = identity_dict(3);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            somp(&dict, &group, 4),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn somp_breaks_correlation_ties_by_lowest_index() {
        // Two identical atoms: the earlier column wins the tie.
        let mut atoms = DMatrix::zeros(3, 3);
        atoms[(0, 0)] = 1.0;
        atoms[(0, 1)] = 1.0;
        atoms[(1, 2)] = 1.0;
        let dict = Dictionary::new(atoms).unwrap();
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.2, 0.0])).unwrap();
        let code = somp(&dict, &group, 1).unwrap();
        assert_eq!(code.active_rows(), &[0]);
    }

    #[test]
    fn mfocuss_zero_lambda_on_singular_system_is_a_numerical_error() {
        // With lambda = 0 and a weight matrix that zeroes one coordinate,
        // D W D^T is singular and the solve must fail loudly.
        let dict = identity_dict(2);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            mfocuss(&dict, &group, 0.0, 1e-8, 10),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn mfocuss_zero_signal_is_zero_after_one_iteration() {
        let dict = identity_dict(4);
        let group = SignalGroup::new(DMatrix::zeros(4, 2)).unwrap();
        let (code, trace) = mfocuss_with_trace(&dict, &group, 0.01, 1e-6, 50).unwrap();
        assert!(code.converged());
        assert!(code.coefficients().iter().all(|&v| v == 0.0));
        assert!(code.active_rows().is_empty());
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn mfocuss_rejects_bad_lambda() {
        let dict = identity_dict(2);
        let group = SignalGroup::from_column(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(mfocuss(&dict, &group, -1.0, 1e-6, 10).is_err());
        assert!(mfocuss(&dict, &group, f64::NAN, 1e-6, 10).is_err());
        assert!(mfocuss(&dict, &group, 0.1, 1e-6, 0).is_err());
    }

    #[test]
    fn sparse_code_single_soft_thresholds_orthonormal_case() {
        // For an orthonormal dictionary the l1 minimizer is the
        // soft-threshold of D^T y: value 1 at coordinate 1 shrinks to 0.9.
        let dict = identity_dict(3);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let code = sparse_code_single(&dict, &y, 0.1).unwrap();
        let c = code.column(0);
        assert!((c[1] - 0.9).abs() < 1e-3, "c = {c:?}");
        assert!(c[0].abs() < 1e-9 && c[2].abs() < 1e-9);
    }

    #[test]
    fn sparse_code_single_zero_signal() {
        let dict = identity_dict(3);
        let code = sparse_code_single(&dict, &DVector::zeros(3), 0.1).unwrap();
        assert!(code.coefficients().iter().all(|&v| v == 0.0));
    }
}
