//! Linear complementarity problems `0 <= y ⊥ My + q >= 0`.
//!
//! The workhorse is [`solve_pd_lcp`]: a semismooth Newton method on the
//! minimum map `min(y, My + q)` with Armijo damping, falling back to Lemke's
//! complementary pivoting when Newton stops making progress. For instances
//! whose symmetric part is positive definite the solution is unique, which is
//! what the Tikhonov regularization `M + εI` of a monotone `M` buys.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stationarity::{classify_indices, IndexPartition};

/// Natural-residual target for a successful solve.
pub const SOLVE_TOL: f64 = 1e-10;
/// Activity tolerance shared with the stationarity certifier.
pub const TOL_ACT: f64 = 1e-7;
/// Feasibility slack used by the enumeration oracle.
pub const BRUTE_FORCE_TOL: f64 = 1e-9;
/// Largest dimension accepted by [`brute_force_lcp`].
pub const BRUTE_FORCE_MAX_DIM: usize = 12;

const MONOTONE_TOL: f64 = 1e-10;

/// What is known about the matrix of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixClass {
    General,
    /// Symmetric part positive semidefinite.
    Monotone,
    /// Symmetric part positive definite.
    PositiveDefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpInstance {
    m: DMatrix<f64>,
    q: DVector<f64>,
    class: MatrixClass,
}

impl LcpInstance {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() != q.len() || q.is_empty() {
            return Err(Error::Dimension(format!(
                "M is {}x{}, q has length {}",
                m.nrows(),
                m.ncols(),
                q.len()
            )));
        }
        Ok(Self {
            m,
            q,
            class: MatrixClass::General,
        })
    }

    /// Builds an instance tagged monotone, checking the tag.
    pub fn monotone(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let mut inst = Self::new(m, q)?;
        let min_eig = inst.min_sym_eigenvalue();
        if min_eig < -MONOTONE_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not monotone (smallest eigenvalue of symmetric part {min_eig:.3e})"
            )));
        }
        inst.class = if min_eig > 0.0 {
            MatrixClass::PositiveDefinite
        } else {
            MatrixClass::Monotone
        };
        Ok(inst)
    }

    pub fn from_rows(rows: &[Vec<f64>], q: &[f64]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("M must be square".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m, DVector::from_column_slice(q))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn class(&self) -> MatrixClass {
        self.class
    }

    pub fn is_monotone(&self) -> bool {
        matches!(
            self.class,
            MatrixClass::Monotone | MatrixClass::PositiveDefinite
        )
    }

    /// Smallest eigenvalue of `(M + Mᵀ)/2`.
    pub fn min_sym_eigenvalue(&self) -> f64 {
        let sym = (&self.m + self.m.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// `w = My + q`.
    pub fn slack(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.m * y + &self.q
    }

    pub fn with_q(&self, q: DVector<f64>) -> Result<Self> {
        if q.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "q has length {}, expected {}",
                q.len(),
                self.dim()
            )));
        }
        Ok(Self {
            m: self.m.clone(),
            q,
            class: self.class,
        })
    }
}

/// A certified solution of an LCP.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub residual: f64,
    pub partition: IndexPartition,
}

impl LcpSolution {
    fn certify(inst: &LcpInstance, y: DVector<f64>) -> Result<Self> {
        let w = inst.slack(&y);
        let residual = min_map(&y, &w).amax();
        let partition = classify_indices(&y, &w, TOL_ACT)?;
        Ok(Self {
            y,
            w,
            residual,
            partition,
        })
    }
}

/// Returns the instance `(M + εI, q)`.
pub fn regularize(inst: &LcpInstance, eps: f64) -> Result<LcpInstance> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization parameter must be positive, got {eps}"
        )));
    }
    let n = inst.dim();
    let m = &inst.m + DMatrix::<f64>::identity(n, n) * eps;
    let class = if inst.is_monotone() {
        MatrixClass::PositiveDefinite
    } else {
        MatrixClass::General
    };
    Ok(LcpInstance {
        m,
        q: inst.q.clone(),
        class,
    })
}

fn min_map(y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    y.zip_map(w, f64::min)
}

/// `max_i |min(y_i, (My + q)_i)|`.
pub fn natural_residual(inst: &LcpInstance, y: &DVector<f64>) -> Result<f64> {
    if y.len() != inst.dim() {
        return Err(Error::Dimension(format!(
            "y has length {}, instance has dimension {}",
            y.len(),
            inst.dim()
        )));
    }
    Ok(min_map(y, &inst.slack(y)).amax())
}

/// Tuning knobs for [`solve_pd_lcp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcpSolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Newton iterations without progress before switching to pivoting.
    pub stall_window: usize,
    pub armijo_c: f64,
}

impl Default for LcpSolverOptions {
    fn default() -> Self {
        Self {
            tol: SOLVE_TOL,
            max_iter: 200,
            stall_window: 5,
            armijo_c: 1e-4,
        }
    }
}

/// Solves an LCP whose matrix has a positive definite symmetric part.
pub fn solve_pd_lcp(inst: &LcpInstance) -> Result<LcpSolution> {
    solve_pd_lcp_with(inst, &LcpSolverOptions::default())
}

pub fn solve_pd_lcp_with(inst: &LcpInstance, opts: &LcpSolverOptions) -> Result<LcpSolution> {
    let min_eig = inst.min_sym_eigenvalue();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    let newton = semismooth_newton(inst, opts);
    let mut best = match newton {
        NewtonOutcome::Converged(y) => return LcpSolution::certify(inst, y),
        NewtonOutcome::Stalled(y) => y,
    };
    let mut best_res = natural_residual(inst, &best)?;
    log::debug!("newton stalled at residual {best_res:.3e}, switching to Lemke");
    if let Some(y) = lemke(inst) {
        let y = polish(inst, &y).unwrap_or(y);
        let res = natural_residual(inst, &y)?;
        if res < best_res {
            best = y;
            best_res = res;
        }
    }
    if best_res <= opts.tol {
        LcpSolution::certify(inst, best)
    } else {
        Err(Error::IterationLimit {
            best_residual: best_res,
        })
    }
}

enum NewtonOutcome {
    Converged(DVector<f64>),
    Stalled(DVector<f64>),
}

fn semismooth_newton(inst: &LcpInstance, opts: &LcpSolverOptions) -> NewtonOutcome {
    let n = inst.dim();
    let mut y = DVector::zeros(n);
    let mut w = inst.slack(&y);
    let mut phi = min_map(&y, &w);
    let mut merit = 0.5 * phi.norm_squared();
    let mut best_res = phi.amax();
    let mut stall = 0;

    for _ in 0..opts.max_iter {
        if phi.amax() <= opts.tol {
            return NewtonOutcome::Converged(y);
        }
        // Generalized Jacobian of the minimum map: row e_i where y_i <= w_i, row M_i otherwise.
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            if y[i] <= w[i] {
                jac[(i, i)] = 1.0;
            } else {
                jac.row_mut(i).copy_from(&inst.m.row(i));
            }
        }
        let dir = match jac.lu().solve(&(-&phi)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return NewtonOutcome::Stalled(y),
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let y_try = &y + &dir * t;
            let w_try = inst.slack(&y_try);
            let phi_try = min_map(&y_try, &w_try);
            let merit_try = 0.5 * phi_try.norm_squared();
            if merit_try <= (1.0 - 2.0 * opts.armijo_c * t) * merit {
                y = y_try;
                w = w_try;
                phi = phi_try;
                merit = merit_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return NewtonOutcome::Stalled(y);
        }
        let res = phi.amax();
        if res < best_res * (1.0 - 1e-3) {
            best_res = res;
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_window {
                return NewtonOutcome::Stalled(y);
            }
        }
    }
    if phi.amax() <= opts.tol {
        NewtonOutcome::Converged(y)
    } else {
        NewtonOutcome::Stalled(y)
    }
}

/// Re-solves the linear system on the support guessed from `y`.
fn polish(inst: &LcpInstance, y: &DVector<f64>) -> Option<DVector<f64>> {
    let w = inst.slack(y);
    let active: Vec<usize> = (0..inst.dim()).filter(|&i| y[i] > w[i]).collect();
    solve_on_support(inst, &active).filter(|cand| {
        let wc = inst.slack(cand);
        cand.iter().all(|v| *v >= -BRUTE_FORCE_TOL) && wc.iter().all(|v| *v >= -BRUTE_FORCE_TOL)
    })
}

/// Solves `M_AA y_A = -q_A`, `y_{Aᶜ} = 0`; `None` when the basis is singular.
fn solve_on_support(inst: &LcpInstance, support: &[usize]) -> Option<DVector<f64>> {
    let n = inst.dim();
    let mut y = DVector::zeros(n);
    if support.is_empty() {
        return Some(y);
    }
    let a = DMatrix::from_fn(support.len(), support.len(), |r, c| {
        inst.m[(support[r], support[c])]
    });
    let rhs = DVector::from_iterator(support.len(), support.iter().map(|&i| -inst.q[i]));
    let scale = a.amax().max(1.0);
    let lu = a.full_piv_lu();
    let u = lu.u();
    let min_pivot = (0..support.len())
        .map(|i| u[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * scale {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    for (r, &i) in support.iter().enumerate() {
        y[i] = sol[r];
    }
    Some(y)
}

/// Lemke's method with covering vector `e` and lexicographic ratio test.
///
/// Returns `None` on ray termination or pivot budget exhaustion.
pub fn lemke(inst: &LcpInstance) -> Option<DVector<f64>> {
    let n = inst.dim();
    if inst.q.iter().all(|v| *v >= 0.0) {
        return Some(DVector::zeros(n));
    }
    // Tableau columns: w (0..n), z (n..2n), z0 (2n), rhs (2n+1).
    // Rows encode w - M z - e z0 = q.
    let cols = 2 * n + 2;
    let mut tab = DMatrix::<f64>::zeros(n, cols);
    for i in 0..n {
        tab[(i, i)] = 1.0;
        for j in 0..n {
            tab[(i, n + j)] = -inst.m[(i, j)];
        }
        tab[(i, 2 * n)] = -1.0;
        tab[(i, 2 * n + 1)] = inst.q[i];
    }
    let mut basis: Vec<usize> = (0..n).collect();

    let pivot = |tab: &mut DMatrix<f64>, row: usize, col: usize| {
        let pv = tab[(row, col)];
        for c in 0..cols {
            tab[(row, c)] /= pv;
        }
        for r in 0..n {
            if r != row {
                let f = tab[(r, col)];
                if f != 0.0 {
                    for c in 0..cols {
                        let v = tab[(row, c)];
                        tab[(r, c)] -= f * v;
                    }
                }
            }
        }
    };

    // z0 enters; the most negative q leaves.
    let first = (0..n)
        .min_by(|&a, &b| inst.q[a].partial_cmp(&inst.q[b]).unwrap())
        .unwrap();
    pivot(&mut tab, first, 2 * n);
    let mut leaving = basis[first];
    basis[first] = 2 * n;

    let max_pivots = 50 * (n + 1).pow(2);
    for _ in 0..max_pivots {
        let entering = if leaving < n { leaving + n } else { leaving - n };
        let row = lex_min_ratio(&tab, entering, n)?;
        pivot(&mut tab, row, entering);
        leaving = basis[row];
        basis[row] = entering;
        if leaving == 2 * n {
            let mut y = DVector::zeros(n);
            for (r, &b) in basis.iter().enumerate() {
                if (n..2 * n).contains(&b) {
                    y[b - n] = tab[(r, 2 * n + 1)].max(0.0);
                }
            }
            return Some(y);
        }
    }
    None
}

/// Lexicographic minimum ratio test on column `col`; the `w` block of the
/// tableau holds the current basis inverse.
fn lex_min_ratio(tab: &DMatrix<f64>, col: usize, n: usize) -> Option<usize> {
    let rhs = 2 * n + 1;
    let piv_tol = 1e-12;
    let mut candidates: Vec<usize> = (0..n).filter(|&r| tab[(r, col)] > piv_tol).collect();
    if candidates.is_empty() {
        return None;
    }
    let keys = std::iter::once(rhs).chain(0..n);
    for key in keys {
        let ratio = |r: usize| tab[(r, key)] / tab[(r, col)];
        let best = candidates
            .iter()
            .map(|&r| ratio(r))
            .fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * best.abs().max(1.0);
        candidates.retain(|&r| ratio(r) <= best + tie);
        if candidates.len() == 1 {
            break;
        }
    }
    candidates.first().copied()
}

/// Enumerates every complementary basis and keeps the feasible solutions.
pub fn brute_force_lcp(inst: &LcpInstance) -> Result<Vec<LcpSolution>> {
    let n = inst.dim();
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(Error::TooLarge(n));
    }
    let mut found: Vec<DVector<f64>> = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let Some(y) = solve_on_support(inst, &support) else {
            continue;
        };
        let w = inst.slack(&y);
        let feasible = y.iter().all(|v| *v >= -BRUTE_FORCE_TOL)
            && (0..n).all(|i| support.contains(&i) || w[i] >= -BRUTE_FORCE_TOL);
        if !feasible {
            continue;
        }
        let y = y.map(|v| v.max(0.0));
        if found.iter().all(|f| (f - &y).amax() > BRUTE_FORCE_TOL) {
            found.push(y);
        }
    }
    found
        .into_iter()
        .map(|y| LcpSolution::certify(inst, y))
        .collect()
}

/// One point of a Tikhonov path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub eps: f64,
    pub solution: LcpSolution,
    pub norm: f64,
}

/// Solves `LCP(M + εI, q)` along a decreasing list of `ε`.
pub fn regularization_path(inst: &LcpInstance, eps_list: &[f64]) -> Result<Vec<PathPoint>> {
    if !inst.is_monotone() {
        return Err(Error::InvalidArgument(
            "regularization path requires a monotone instance".into(),
        ));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "eps list must be strictly decreasing".into(),
        ));
    }
    eps_list
        .iter()
        .map(|&eps| {
            let solution = solve_pd_lcp(&regularize(inst, eps)?)?;
            let norm = solution.y.norm();
            Ok(PathPoint {
                eps,
                solution,
                norm,
            })
        })
        .collect()
}

/// JSON debug dump: `{"M": rows, "q", "y", "w", "residual"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcpDump {
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
}

impl LcpDump {
    pub fn new(inst: &LcpInstance, sol: Option<&LcpSolution>) -> Self {
        let n = inst.dim();
        Self {
            m: (0..n)
                .map(|i| inst.m.row(i).iter().copied().collect())
                .collect(),
            q: inst.q.iter().copied().collect(),
            y: sol.map(|s| s.y.iter().copied().collect()),
            w: sol.map(|s| s.w.iter().copied().collect()),
            residual: sol.map(|s| s.residual),
        }
    }

    pub fn instance(&self) -> Result<LcpInstance> {
        LcpInstance::from_rows(&self.m, &self.q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_instance(q: &[f64]) -> LcpInstance {
        LcpInstance::monotone(
            DMatrix::identity(q.len(), q.len()),
            DVector::from_column_slice(q),
        )
        .unwrap()
    }

    #[test]
    fn regularize_adds_diagonal() {
        let inst = LcpInstance::monotone(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
        )
        .unwrap();
        let reg = regularize(&inst, 0.5).unwrap();
        assert_eq!(
            reg.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.5])
        );
        assert_eq!(reg.class(), MatrixClass::PositiveDefinite);
        assert_eq!(reg.q(), inst.q());
        assert!(regularize(&inst, 0.0).is_err());
        assert!(regularize(&inst, -1.0).is_err());

        let zero = LcpInstance::monotone(DMatrix::zeros(1, 1), DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(regularize(&zero, 0.1).unwrap().matrix()[(0, 0)], 0.1);
    }

    #[test]
    fn natural_residual_examples() {
        let inst = identity_instance(&[1.0, 1.0]);
        assert_eq!(natural_residual(&inst, &DVector::zeros(2)).unwrap(), 0.0);
        let inst = identity_instance(&[-1.0, 2.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(natural_residual(&inst, &y).unwrap(), 0.0);
        assert_eq!(natural_residual(&inst, &DVector::zeros(2)).unwrap(), 1.0);
        assert!(natural_residual(&inst, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn identity_solves() {
        let sol = solve_pd_lcp(&identity_instance(&[-1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(sol.y[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.y[1], 0.0, epsilon = 1e-12);
        assert_eq!(sol.partition.plus_zero, vec![0]);
        assert_eq!(sol.partition.zero_plus, vec![1]);

        let sol = solve_pd_lcp(&identity_instance(&[0.5, 2.0, 0.0])).unwrap();
        assert_eq!(sol.y.amax(), 0.0);
    }

    #[test]
    fn rejects_indefinite() {
        let inst = LcpInstance::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::from_column_slice(&[-1.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(
            solve_pd_lcp(&inst),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn lemke_fallback_matches_newton() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 1.5, 0.3, 0.2, -0.4, 1.0]);
        let q = DVector::from_column_slice(&[-1.0, 0.5, -0.7]);
        let inst = LcpInstance::new(m, q).unwrap();
        let newton = solve_pd_lcp(&inst).unwrap();
        let forced = solve_pd_lcp_with(
            &inst,
            &LcpSolverOptions {
                max_iter: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let pivot = lemke(&inst).unwrap();
        assert!((&newton.y - &forced.y).amax() < 1e-10);
        assert!((&newton.y - &pivot).amax() < 1e-9);
    }

    #[test]
    fn brute_force_examples() {
        let sols = brute_force_lcp(&identity_instance(&[-1.0, 2.0])).unwrap();
        assert_eq!(sols.len(), 1);
        assert_abs_diff_eq!(sols[0].y[0], 1.0, epsilon = 1e-12);

        let skew = LcpInstance::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let sols = brute_force_lcp(&skew).unwrap();
        assert!(sols.iter().any(|s| s.y.amax() == 0.0));

        let big = LcpInstance::new(DMatrix::identity(13, 13), DVector::zeros(13)).unwrap();
        assert!(matches!(brute_force_lcp(&big), Err(Error::TooLarge(13))));
    }

    #[test]
    fn path_on_identity_shrinks_toward_solution() {
        let inst = identity_instance(&[-1.0, 2.0]);
        let path = regularization_path(&inst, &[0.5, 0.1, 0.01]).unwrap();
        for p in &path {
            assert_abs_diff_eq!(p.solution.y[0], 1.0 / (1.0 + p.eps), epsilon = 1e-12);
            assert_abs_diff_eq!(p.solution.y[1], 0.0, epsilon = 1e-12);
        }
        assert!(regularization_path(&inst, &[]).unwrap().is_empty());
        assert!(regularization_path(&inst, &[0.1, 0.5]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let inst = identity_instance(&[-1.0, 2.0]);
        let sol = solve_pd_lcp(&inst).unwrap();
        let text = serde_json::to_string(&LcpDump::new(&inst, Some(&sol))).unwrap();
        assert!(text.contains("\"M\""));
        let back: LcpDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.instance().unwrap().matrix(), inst.matrix());
    }
}
