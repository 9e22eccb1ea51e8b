//! W/C/M/S stationarity for programs with linear complementarity constraints.
//!
//! For a lower-level solution `y` with slack `w = My + q` the indices split
//! into `I₊₀` (y > 0 = w), `I₀₊` (y = 0 < w) and the biactive set `I₀₀`.
//! Multipliers `(λ, μ)` solve `∇_y G − λ − Mᵀμ = 0` with `λ = 0` on `I₊₀` and
//! `μ = 0` on `I₀₊`; the classes differ only in the sign conditions imposed
//! on the biactive pairs `(λ_i, μ_i)`.

use std::fmt;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::WeightVector;
use crate::error::{Error, Result};
use crate::minimax::{projection_residual, MinimaxObjective};

/// Default sign tolerance for [`classify_stationarity`].
pub const TOL_SIGN: f64 = 1e-8;
/// Largest KKT residual for which any class is assigned.
pub const TOL_KKT: f64 = 1e-6;
/// Rank tolerance for the MPEC-LICQ family.
pub const TOL_RANK: f64 = 1e-10;

/// Biactive sets larger than this are classified from the recovered pair only.
const MAX_ENUMERATED_BIACTIVE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexPartition {
    pub plus_zero: Vec<usize>,
    pub zero_plus: Vec<usize>,
    pub zero_zero: Vec<usize>,
    pub tol_act: f64,
}

impl IndexPartition {
    pub fn dim(&self) -> usize {
        self.plus_zero.len() + self.zero_plus.len() + self.zero_zero.len()
    }

    fn validate(&self, m: usize) -> Result<()> {
        let mut seen = vec![false; m];
        for &i in self
            .plus_zero
            .iter()
            .chain(&self.zero_plus)
            .chain(&self.zero_zero)
        {
            if i >= m || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "index partition does not cover 0..{m} disjointly"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "index partition does not cover 0..{m}"
            )));
        }
        Ok(())
    }
}

/// Splits indices into `I₊₀`, `I₀₊`, `I₀₀` using the activity tolerance.
pub fn classify_indices(y: &DVector<f64>, w: &DVector<f64>, tol_act: f64) -> Result<IndexPartition> {
    if y.len() != w.len() {
        return Err(Error::Dimension(format!(
            "y has length {}, w has length {}",
            y.len(),
            w.len()
        )));
    }
    let mut part = IndexPartition {
        plus_zero: Vec::new(),
        zero_plus: Vec::new(),
        zero_zero: Vec::new(),
        tol_act,
    };
    for (i, (&yi, &wi)) in y.iter().zip(w.iter()).enumerate() {
        match (yi > tol_act, wi > tol_act) {
            (true, false) => part.plus_zero.push(i),
            (false, true) => part.zero_plus.push(i),
            (false, false) => part.zero_zero.push(i),
            (true, true) => return Err(Error::NonComplementary { index: i, y: yi, w: wi }),
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPair {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub kkt_residual: f64,
}

fn kkt_residual(grad_y: &DVector<f64>, m: &DMatrix<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    (grad_y - lambda - m.transpose() * mu).amax()
}

/// Minimum-norm multipliers for `∇_y G − λ − Mᵀμ = 0` under the partition's
/// fixed zeros.
pub fn recover_multipliers(
    grad_y: &DVector<f64>,
    m: &DMatrix<f64>,
    partition: &IndexPartition,
) -> Result<MultiplierPair> {
    let n = grad_y.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "M is {}x{}, gradient has length {n}",
            m.nrows(),
            m.ncols()
        )));
    }
    partition.validate(n)?;
    let mut free_lambda = vec![true; n];
    let mut free_mu = vec![true; n];
    for &i in &partition.plus_zero {
        free_lambda[i] = false;
    }
    for &i in &partition.zero_plus {
        free_mu[i] = false;
    }
    let lam_idx: Vec<usize> = (0..n).filter(|&i| free_lambda[i]).collect();
    let mu_idx: Vec<usize> = (0..n).filter(|&i| free_mu[i]).collect();
    let cols = lam_idx.len() + mu_idx.len();

    let mut lambda = DVector::zeros(n);
    let mut mu = DVector::zeros(n);
    if cols > 0 {
        // Column for λ_i is e_i, column for μ_j is M_jᵀ (row j of M).
        let a = DMatrix::from_fn(n, cols, |r, c| {
            if c < lam_idx.len() {
                if r == lam_idx[c] {
                    1.0
                } else {
                    0.0
                }
            } else {
                m[(mu_idx[c - lam_idx.len()], r)]
            }
        });
        let svd = a.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
        let z = svd
            .solve(grad_y, cutoff)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for (c, &i) in lam_idx.iter().enumerate() {
            lambda[i] = z[c];
        }
        for (c, &j) in mu_idx.iter().enumerate() {
            mu[j] = z[lam_idx.len() + c];
        }
    }
    let kkt_residual = kkt_residual(grad_y, m, &lambda, &mu);
    Ok(MultiplierPair {
        lambda: lambda.iter().copied().collect(),
        mu: mu.iter().copied().collect(),
        kkt_residual,
    })
}

/// Stationarity classes, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StationarityClass {
    None,
    W,
    C,
    M,
    S,
}

impl fmt::Display for StationarityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::W => "W",
            Self::C => "C",
            Self::M => "M",
            Self::S => "S",
        };
        f.write_str(s)
    }
}

fn sign(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Sign predicate of one biactive pair.
pub fn pair_satisfies(class: StationarityClass, lambda: f64, mu: f64, tol: f64) -> bool {
    let (sl, sm) = (sign(lambda, tol), sign(mu, tol));
    match class {
        StationarityClass::None | StationarityClass::W => true,
        StationarityClass::C => sl * sm >= 0,
        StationarityClass::M => sl * sm == 0 || (sl > 0 && sm > 0),
        StationarityClass::S => sl >= 0 && sm >= 0,
    }
}

/// Strongest class whose sign conditions hold for the given multiplier pair.
pub fn classify_stationarity(
    mult: &MultiplierPair,
    partition: &IndexPartition,
    tol_sign: f64,
) -> StationarityClass {
    if !(mult.kkt_residual <= TOL_KKT) {
        return StationarityClass::None;
    }
    [StationarityClass::S, StationarityClass::M, StationarityClass::C]
        .into_iter()
        .find(|&class| {
            partition
                .zero_zero
                .iter()
                .all(|&i| pair_satisfies(class, mult.lambda[i], mult.mu[i], tol_sign))
        })
        .unwrap_or(StationarityClass::W)
}

/// Closed polyhedral pieces whose union is a class's sign region for one pair.
#[derive(Debug, Clone, Copy)]
enum Piece {
    BothNonneg,
    BothNonpos,
    LambdaZero,
    MuZero,
    Free,
}

fn pieces(class: StationarityClass) -> &'static [Piece] {
    match class {
        StationarityClass::S => &[Piece::BothNonneg],
        StationarityClass::M => &[Piece::BothNonneg, Piece::LambdaZero, Piece::MuZero],
        StationarityClass::C => &[Piece::BothNonneg, Piece::BothNonpos],
        StationarityClass::W | StationarityClass::None => &[Piece::Free],
    }
}

/// Smallest ℓ₁ residual of the multiplier system with the biactive pairs
/// restricted to the chosen pieces, with the minimizing multipliers.
fn restricted_residual(
    grad_y: &DVector<f64>,
    m: &DMatrix<f64>,
    partition: &IndexPartition,
    choice: &[Piece],
) -> Option<(f64, MultiplierPair)> {
    let n = grad_y.len();
    let inf = f64::INFINITY;
    let mut lam_bounds = vec![Some((-inf, inf)); n];
    let mut mu_bounds = vec![Some((-inf, inf)); n];
    for &i in &partition.plus_zero {
        lam_bounds[i] = None;
    }
    for &i in &partition.zero_plus {
        mu_bounds[i] = None;
    }
    for (&i, piece) in partition.zero_zero.iter().zip(choice) {
        let (lb, mb) = match piece {
            Piece::BothNonneg => (Some((0.0, inf)), Some((0.0, inf))),
            Piece::BothNonpos => (Some((-inf, 0.0)), Some((-inf, 0.0))),
            Piece::LambdaZero => (None, Some((-inf, inf))),
            Piece::MuZero => (Some((-inf, inf)), None),
            Piece::Free => (Some((-inf, inf)), Some((-inf, inf))),
        };
        lam_bounds[i] = lb;
        mu_bounds[i] = mb;
    }

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lam: Vec<_> = lam_bounds
        .iter()
        .map(|b| b.map(|b| lp.add_var(0.0, b)))
        .collect();
    let mu: Vec<_> = mu_bounds
        .iter()
        .map(|b| b.map(|b| lp.add_var(0.0, b)))
        .collect();
    for r in 0..n {
        let rp = lp.add_var(1.0, (0.0, inf));
        let rm = lp.add_var(1.0, (0.0, inf));
        // λ_r + Σ_j M_jr μ_j + r⁺ − r⁻ = g_r
        let mut row = vec![(rp, 1.0), (rm, -1.0)];
        if let Some(v) = lam[r] {
            row.push((v, 1.0));
        }
        for j in 0..n {
            if let Some(v) = mu[j] {
                if m[(j, r)] != 0.0 {
                    row.push((v, m[(j, r)]));
                }
            }
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, grad_y[r]);
    }
    let sol = lp.solve().ok()?;
    let value = |v: &Option<minilp::Variable>| v.map_or(0.0, |v| sol[v]);
    let lambda = DVector::from_iterator(n, lam.iter().map(value));
    let mu = DVector::from_iterator(n, mu.iter().map(value));
    let kkt_residual = kkt_residual(grad_y, m, &lambda, &mu);
    Some((
        sol.objective(),
        MultiplierPair { lambda: lambda.as_slice().to_vec(), mu: mu.as_slice().to_vec(), kkt_residual },
    ))
}

/// Strongest class attainable by *some* multiplier pair, found by enumerating
/// the polyhedral pieces of each class on the biactive set.
///
/// Falls back to [`classify_stationarity`] on the minimum-norm pair when the
/// biactive set is too large to enumerate.
pub fn attainable_class(
    grad_y: &DVector<f64>,
    m: &DMatrix<f64>,
    partition: &IndexPartition,
) -> Result<StationarityClass> {
    attaining_multipliers(grad_y, m, partition).map(|(class, _)| class)
}

/// [`attainable_class`] together with a multiplier pair that attains it.
///
/// Without biactive indices, or with too many to enumerate, the pair is the
/// minimum-norm one.
pub fn attaining_multipliers(
    grad_y: &DVector<f64>,
    m: &DMatrix<f64>,
    partition: &IndexPartition,
) -> Result<(StationarityClass, MultiplierPair)> {
    let mult = recover_multipliers(grad_y, m, partition)?;
    let k = partition.zero_zero.len();
    if k == 0 || k > MAX_ENUMERATED_BIACTIVE {
        return Ok((classify_stationarity(&mult, partition, TOL_SIGN), mult));
    }
    let tol = TOL_KKT;
    for class in [
        StationarityClass::S,
        StationarityClass::M,
        StationarityClass::C,
        StationarityClass::W,
    ] {
        let options = pieces(class);
        let combos = options.len().pow(k as u32);
        for code in 0..combos {
            let mut c = code;
            let choice: Vec<Piece> = (0..k)
                .map(|_| {
                    let p = options[c % options.len()];
                    c /= options.len();
                    p
                })
                .collect();
            if let Some((res, pair)) = restricted_residual(grad_y, m, partition, &choice) {
                if res <= tol {
                    return Ok((class, pair));
                }
            }
        }
    }
    Ok((StationarityClass::None, mult))
}

/// MPEC-LICQ check in two readings of the vector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LicqReport {
    /// `{e_i : i ∈ I₀₊ ∪ I₀₀} ∪ {M_iᵀ + e_i : i ∈ I₊₀ ∪ I₀₀}`.
    pub shifted_rows: bool,
    /// Same family with `M_iᵀ` in place of `M_iᵀ + e_i`.
    pub plain_rows: bool,
}

fn full_column_rank(cols: &[DVector<f64>], n: usize) -> bool {
    if cols.is_empty() {
        return true;
    }
    if cols.len() > n {
        return false;
    }
    let a = DMatrix::from_columns(cols);
    let qr = a.col_piv_qr();
    let r = qr.r();
    let scale = r[(0, 0)].abs().max(1.0);
    (0..cols.len()).all(|i| r[(i, i)].abs() > TOL_RANK * scale)
}

pub fn mpec_licq_report(m: &DMatrix<f64>, partition: &IndexPartition) -> Result<LicqReport> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::Dimension("M must be square".into()));
    }
    partition.validate(n)?;
    let unit = |i: usize| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    };
    let row = |i: usize| m.row(i).transpose();
    let y_active = partition.zero_plus.iter().chain(&partition.zero_zero);
    let w_active: Vec<usize> = partition
        .plus_zero
        .iter()
        .chain(&partition.zero_zero)
        .copied()
        .collect();

    let units: Vec<DVector<f64>> = y_active.map(|&i| unit(i)).collect();
    let mut shifted = units.clone();
    shifted.extend(w_active.iter().map(|&i| row(i) + unit(i)));
    let mut plain = units;
    plain.extend(w_active.iter().map(|&i| row(i)));
    Ok(LicqReport {
        shifted_rows: full_column_rank(&shifted, n),
        plain_rows: full_column_rank(&plain, n),
    })
}

/// MPEC-LICQ with the family as printed (`M_iᵀ + e_i`).
pub fn check_mpec_licq(m: &DMatrix<f64>, partition: &IndexPartition) -> Result<bool> {
    Ok(mpec_licq_report(m, partition)?.shifted_rows)
}

/// Per-block record inside a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCertificate {
    pub partition: IndexPartition,
    pub multipliers: MultiplierPair,
    pub class: StationarityClass,
    pub licq: LicqReport,
    pub lcp_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    /// Weakest class over all lower-level blocks.
    #[serde(rename = "class")]
    pub klass: StationarityClass,
    pub licq: bool,
    pub licq_plain_rows: bool,
    pub res_x: f64,
    pub res_p: f64,
    /// Largest natural residual of the lower-level LCPs.
    pub inner_residual: f64,
    pub kkt_residual: f64,
    /// Largest violation of the constraints of `X` and `𝒫_k`.
    pub feasibility: f64,
    pub tol: f64,
    pub passed: bool,
    pub blocks: Vec<BlockCertificate>,
}

/// Checks the block-coordinatewise stationarity system at `(x, p)`.
pub fn certify_block_stationarity<O: MinimaxObjective + ?Sized>(
    model: &O,
    x: &[f64],
    p: &[f64],
    fd_step: f64,
    tol: f64,
) -> Result<StationarityCertificate> {
    let set = model.ambiguity();
    let x_box = model.x_box();
    if x.len() != x_box.dim() || p.len() != set.len() {
        return Err(Error::Dimension("state does not match the model".into()));
    }
    let x_violation = x
        .iter()
        .zip(x_box.lo.iter().zip(&x_box.hi))
        .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
        .fold(0.0, f64::max);
    let p_violation = set.infeasibility(p)?;
    let feasibility = x_violation.max(p_violation);

    let (res_x, res_p) = if feasibility <= 1e-8 {
        let xp = x_box.project(x);
        let weights = WeightVector::from_raw(p.iter().map(|v| v.max(0.0)).collect());
        projection_residual(model, &xp, &weights, fd_step)?
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    let mut blocks = Vec::new();
    for block in model.inner_blocks(x, p)? {
        let partition = classify_indices(&block.y, &block.w, crate::lcp::TOL_ACT)?;
        let m = block.instance.matrix();
        let (class, multipliers) = attaining_multipliers(&block.grad_y, m, &partition)?;
        let licq = mpec_licq_report(m, &partition)?;
        let lcp_residual = crate::lcp::natural_residual(&block.instance, &block.y)?;
        blocks.push(BlockCertificate {
            partition,
            multipliers,
            class,
            licq,
            lcp_residual,
        });
    }
    let klass = blocks
        .iter()
        .map(|b| b.class)
        .min()
        .unwrap_or(StationarityClass::S);
    let inner_residual = blocks.iter().map(|b| b.lcp_residual).fold(0.0, f64::max);
    let kkt = blocks
        .iter()
        .map(|b| b.multipliers.kkt_residual)
        .fold(0.0, f64::max);
    let passed = feasibility <= 1e-8 && res_x <= tol && res_p <= tol && inner_residual <= tol;
    Ok(StationarityCertificate {
        klass,
        licq: blocks.iter().all(|b| b.licq.shifted_rows),
        licq_plain_rows: blocks.iter().all(|b| b.licq.plain_rows),
        res_x,
        res_p,
        inner_residual,
        kkt_residual: kkt,
        feasibility,
        tol,
        passed,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(pz: &[usize], zp: &[usize], zz: &[usize]) -> IndexPartition {
        IndexPartition {
            plus_zero: pz.to_vec(),
            zero_plus: zp.to_vec(),
            zero_zero: zz.to_vec(),
            tol_act: 1e-7,
        }
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn index_examples() {
        let p = classify_indices(&v(&[1.0, 0.0]), &v(&[0.0, 2.0]), 1e-7).unwrap();
        assert_eq!(p, part(&[0], &[1], &[]));
        let p = classify_indices(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), 1e-7).unwrap();
        assert_eq!(p.zero_zero, vec![0, 1]);
        let p = classify_indices(&v(&[1e-9, 1.0]), &v(&[1e-9, 0.0]), 1e-7).unwrap();
        assert_eq!(p, part(&[1], &[], &[0]));
        assert!(matches!(
            classify_indices(&v(&[1.0]), &v(&[1.0]), 1e-7),
            Err(Error::NonComplementary { index: 0, .. })
        ));
    }

    #[test]
    fn multiplier_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        let g = v(&[0.7, -1.2]);
        let mult = recover_multipliers(&g, &m, &part(&[], &[0, 1], &[])).unwrap();
        assert_eq!(mult.mu, vec![0.0, 0.0]);
        assert!((mult.lambda[0] - 0.7).abs() < 1e-14 && (mult.lambda[1] + 1.2).abs() < 1e-14);
        assert!(mult.kkt_residual < 1e-14);

        let id = DMatrix::identity(2, 2);
        let mult = recover_multipliers(&g, &id, &part(&[0, 1], &[], &[])).unwrap();
        assert_eq!(mult.lambda, vec![0.0, 0.0]);
        assert!((mult.mu[0] - 0.7).abs() < 1e-14 && (mult.mu[1] + 1.2).abs() < 1e-14);
    }

    #[test]
    fn classification_examples() {
        let empty = MultiplierPair {
            lambda: vec![1.0],
            mu: vec![0.0],
            kkt_residual: 0.0,
        };
        assert_eq!(
            classify_stationarity(&empty, &part(&[], &[0], &[]), TOL_SIGN),
            StationarityClass::S
        );
        let p = part(&[], &[], &[0]);
        let opposite = MultiplierPair {
            lambda: vec![1.0],
            mu: vec![-1.0],
            kkt_residual: 0.0,
        };
        assert_eq!(classify_stationarity(&opposite, &p, TOL_SIGN), StationarityClass::W);
        let m_only = MultiplierPair {
            lambda: vec![0.0],
            mu: vec![-3.0],
            kkt_residual: 0.0,
        };
        assert_eq!(classify_stationarity(&m_only, &p, TOL_SIGN), StationarityClass::M);
        let bad = MultiplierPair {
            kkt_residual: 1e-3,
            ..m_only
        };
        assert_eq!(classify_stationarity(&bad, &p, TOL_SIGN), StationarityClass::None);
    }

    #[test]
    fn attainable_beats_minimum_norm() {
        // One biactive index, g = −1, M = [1]: λ + μ = −1. The minimum-norm pair
        // (−½, −½) is only C, while (−1, 0) certifies M.
        let m = DMatrix::from_element(1, 1, 1.0);
        let g = v(&[-1.0]);
        let p = part(&[], &[], &[0]);
        let mult = recover_multipliers(&g, &m, &p).unwrap();
        assert_eq!(classify_stationarity(&mult, &p, TOL_SIGN), StationarityClass::C);
        assert_eq!(attainable_class(&g, &m, &p).unwrap(), StationarityClass::M);
        assert_eq!(attainable_class(&v(&[1.0]), &m, &p).unwrap(), StationarityClass::S);
    }

    #[test]
    fn licq_examples() {
        let m = DMatrix::identity(3, 3);
        assert!(check_mpec_licq(&m, &part(&[], &[0, 1, 2], &[])).unwrap());
        let one = DMatrix::from_element(1, 1, 1.0);
        let report = mpec_licq_report(&one, &part(&[], &[], &[0])).unwrap();
        assert!(!report.shifted_rows && !report.plain_rows);

        let block = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0]);
        let all_positive = part(&[0, 1, 2], &[], &[]);
        let report = mpec_licq_report(&block, &all_positive).unwrap();
        assert!(report.shifted_rows);
        assert!(!report.plain_rows);
        assert!(check_mpec_licq(&block, &part(&[0, 2], &[1], &[])).unwrap());
    }
}
