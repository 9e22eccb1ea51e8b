//! Discrete moment ambiguity sets
//! `𝒫_k = {p ∈ Δ_k : ‖Σ p_i ξ^i − μ₀‖² ≤ η}` and projections onto them.
//!
//! The projection onto `𝒫_k` is solved through its ν-dimensional dual with a
//! semismooth Newton method ([`DiscreteAmbiguitySet::project`]). Dykstra's
//! alternating projections between the simplex and the mean ball
//! ([`DiscreteAmbiguitySet::project_dykstra`]) back it up when the dual
//! solve leaves a violation, and serve as an independent cross-check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

pub const MEMBER_SLACK: f64 = 1e-9;
pub const FEASIBILITY_TOL: f64 = 1e-8;
pub const WEIGHT_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;
pub const DYKSTRA_STEP_TOL: f64 = 1e-10;
const BISECTION_STEPS: usize = 200;

/// Scenario points `ξ^1..ξ^k` in a box `Ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// ν × k, one column per sample.
    points: DMatrix<f64>,
    domain: BoxDomain,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>, domain: BoxDomain) -> Result<Self> {
        let nu = domain.dim();
        if points.is_empty() {
            return Err(Error::Empty("sample set needs at least one point".into()));
        }
        for (i, pt) in points.iter().enumerate() {
            if pt.len() != nu {
                return Err(Error::Dimension(format!(
                    "sample {i} has dimension {}, domain has {nu}",
                    pt.len()
                )));
            }
            if !domain.contains(pt, 1e-12) {
                return Err(Error::OutsideDomain(format!("sample {i} = {pt:?}")));
            }
        }
        let k = points.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
        if order.windows(2).any(|w| points[w[0]] == points[w[1]]) {
            return Err(Error::InvalidArgument("samples must be pairwise distinct".into()));
        }
        let points = DMatrix::from_fn(nu, k, |r, c| points[c][r]);
        Ok(Self { points, domain })
    }

    pub fn nu(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The ν × k matrix of sample columns.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.column(i).iter().copied().collect()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// `Σ p_i ξ^i`.
    pub fn mean(&self, p: &[f64]) -> DVector<f64> {
        &self.points * DVector::from_column_slice(p)
    }
}

/// `{m : ‖m − μ₀‖² ≤ η}` on the mean of the distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBallSet {
    pub mu0: Vec<f64>,
    pub eta: f64,
}

impl MeanBallSet {
    pub fn new(mu0: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(Self { mu0, eta })
    }
}

/// A probability vector on the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Empty("weight vector".into()));
        }
        if let Some(i) = p.iter().position(|v| !(*v >= -WEIGHT_TOL)) {
            return Err(Error::InvalidArgument(format!("weight {i} is negative: {}", p[i])));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_ball(samples: &SampleSet, ball: &MeanBallSet) -> Result<()> {
    if ball.mu0.len() != samples.nu() {
        return Err(Error::Dimension(format!(
            "mu0 has dimension {}, samples have {}",
            ball.mu0.len(),
            samples.nu()
        )));
    }
    Ok(())
}

fn check_len(samples: &SampleSet, p: &[f64]) -> Result<()> {
    if p.len() != samples.len() {
        return Err(Error::Dimension(format!(
            "weight vector has length {}, there are {} samples",
            p.len(),
            samples.len()
        )));
    }
    Ok(())
}

fn ball_violation(samples: &SampleSet, ball: &MeanBallSet, p: &[f64]) -> f64 {
    let mu0 = DVector::from_column_slice(&ball.mu0);
    (samples.mean(p) - mu0).norm_squared() - ball.eta
}

/// Simplex invariants plus the mean-ball constraint, with slack `1e-9`.
pub fn member(samples: &SampleSet, ball: &MeanBallSet, p: &[f64]) -> Result<bool> {
    check_ball(samples, ball)?;
    check_len(samples, p)?;
    if WeightVector::new(p.to_vec()).is_err() {
        return Ok(false);
    }
    Ok(ball_violation(samples, ball, p) <= MEMBER_SLACK)
}

/// Euclidean projection onto the probability simplex (sorted-threshold rule).
pub fn project_simplex(z: &[f64]) -> WeightVector {
    WeightVector(simplex_projection(z).0)
}

/// Projection plus the threshold `θ` with `p = max(z − θ, 0)`.
fn simplex_projection(z: &[f64]) -> (Vec<f64>, f64) {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    (z.iter().map(|v| (v - theta).max(0.0)).collect(), theta)
}

/// Result of [`project_mean_ball`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanBallProjection {
    pub p: Vec<f64>,
    pub multiplier: f64,
    /// False when the scalar root-find ended outside tolerance; `p` is still feasible.
    pub converged: bool,
}

/// Projection onto `{p : ‖Qp − μ₀‖² ≤ η}` (no simplex constraint).
pub fn project_mean_ball(samples: &SampleSet, ball: &MeanBallSet, z: &[f64]) -> Result<MeanBallProjection> {
    check_ball(samples, ball)?;
    check_len(samples, z)?;
    if !(ball.eta > 0.0) {
        return Err(Error::InvalidArgument("mean-ball projection needs eta > 0".into()));
    }
    Ok(GramCache::new(samples).project_ball(samples, ball, z)?)
}

/// Eigendecomposition of `G = QQᵀ`, reused across ball projections.
#[derive(Debug, Clone)]
struct GramCache {
    basis: DMatrix<f64>,
    eig: DVector<f64>,
}

impl GramCache {
    fn new(samples: &SampleSet) -> Self {
        let q = samples.matrix();
        let se = SymmetricEigen::new(q * q.transpose());
        Self {
            basis: se.eigenvectors,
            eig: se.eigenvalues.map(|v| v.max(0.0)),
        }
    }

    fn project_ball(&self, samples: &SampleSet, ball: &MeanBallSet, z: &[f64]) -> Result<MeanBallProjection> {
        let q = samples.matrix();
        let mu0 = DVector::from_column_slice(&ball.mu0);
        let r = q * DVector::from_column_slice(z) - &mu0;
        if r.norm_squared() <= ball.eta {
            return Ok(MeanBallProjection {
                p: z.to_vec(),
                multiplier: 0.0,
                converged: true,
            });
        }
        // ‖(I + λG)⁻¹ r‖² in the eigenbasis of G; decreasing in λ.
        let rt = self.basis.transpose() * &r;
        let spread = |lam: f64| -> f64 {
            rt.iter()
                .zip(self.eig.iter())
                .map(|(ri, gi)| (ri / (1.0 + lam * gi)).powi(2))
                .sum()
        };
        let floor: f64 = rt
            .iter()
            .zip(self.eig.iter())
            .filter(|(_, g)| **g <= 1e-14)
            .map(|(ri, _)| ri * ri)
            .sum();
        if floor > ball.eta {
            return Err(Error::EmptySet(format!(
                "mean offset outside the span of the samples exceeds eta ({floor:.3e} > {})",
                ball.eta
            )));
        }
        let mut hi = 1.0;
        let mut bracketed = false;
        for _ in 0..BISECTION_STEPS {
            if spread(hi) <= ball.eta {
                bracketed = true;
                break;
            }
            hi *= 2.0;
        }
        if !bracketed {
            return Err(Error::EmptySet("mean ball cannot be reached".into()));
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if spread(mid) <= ball.eta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lam = hi;
        let converged = (spread(lam) - ball.eta).abs() <= 1e-12 * ball.eta.max(1.0);
        // v = (I + λG)⁻¹ r, p = z − λ Qᵀ v.
        let v = &self.basis
            * DVector::from_iterator(
                rt.len(),
                rt.iter().zip(self.eig.iter()).map(|(ri, gi)| ri / (1.0 + lam * gi)),
            );
        let shift = q.transpose() * v * lam;
        let p = z.iter().zip(shift.iter()).map(|(a, b)| a - b).collect();
        if !converged {
            log::warn!("mean-ball root-find ended with spread {:.3e} vs eta {}", spread(lam), ball.eta);
        }
        Ok(MeanBallProjection {
            p,
            multiplier: lam,
            converged,
        })
    }
}

/// Outcome of a projection onto `𝒫_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityProjection {
    pub p: WeightVector,
    /// Dykstra sweeps used; zero when the dual solve sufficed.
    pub sweeps: usize,
    pub infeasibility: f64,
}

/// Euclidean projection onto `𝒫_k` (see [`DiscreteAmbiguitySet::project`]).
pub fn project_ambiguity(samples: &SampleSet, ball: &MeanBallSet, z: &[f64]) -> Result<AmbiguityProjection> {
    DiscreteAmbiguitySet::new(samples.clone(), ball.clone())?.project_detailed(z, None)
}

fn dykstra(samples: &SampleSet, ball: &MeanBallSet, gram: &GramCache, z: &[f64]) -> Result<AmbiguityProjection> {
    let k = z.len();
    let mut x = z.to_vec();
    let mut inc_ball = vec![0.0; k];
    let mut inc_simplex = vec![0.0; k];
    let mut infeasibility = f64::INFINITY;
    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        let shifted: Vec<f64> = x.iter().zip(&inc_ball).map(|(a, b)| a + b).collect();
        let y = if ball.eta > 0.0 {
            gram.project_ball(samples, ball, &shifted)?.p
        } else {
            return Err(Error::InvalidArgument("Dykstra projection needs eta > 0".into()));
        };
        // x can sit still for a few sweeps while the corrections keep
        // moving, so both enter the stopping test.
        let mut step: f64 = 0.0;
        for i in 0..k {
            let inc = shifted[i] - y[i];
            step = step.max((inc - inc_ball[i]).abs());
            inc_ball[i] = inc;
        }
        let shifted: Vec<f64> = y.iter().zip(&inc_simplex).map(|(a, b)| a + b).collect();
        let next = simplex_projection(&shifted).0;
        for i in 0..k {
            let inc = shifted[i] - next[i];
            step = step.max((inc - inc_simplex[i]).abs()).max((next[i] - x[i]).abs());
            inc_simplex[i] = inc;
        }
        x = next;
        infeasibility = ball_violation(samples, ball, &x).max(0.0);
        if step < DYKSTRA_STEP_TOL && infeasibility <= FEASIBILITY_TOL {
            return Ok(AmbiguityProjection {
                p: WeightVector(x),
                sweeps: sweep,
                infeasibility,
            });
        }
    }
    Err(Error::ProjectionNotConverged { infeasibility })
}

/// Either a feasible witness or the size of the mean-ball violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlaterWitness {
    Feasible { p: WeightVector },
    Infeasible { violation: f64 },
}

/// Tests whether the Voronoi cell masses of a base distribution lie in `𝒫_k`.
pub fn slater_witness(samples: &SampleSet, ball: &MeanBallSet, cell_weights: &[f64]) -> Result<SlaterWitness> {
    check_ball(samples, ball)?;
    check_len(samples, cell_weights)?;
    let p = WeightVector::new(cell_weights.to_vec())?;
    if member(samples, ball, p.as_slice())? {
        Ok(SlaterWitness::Feasible { p })
    } else {
        Ok(SlaterWitness::Infeasible {
            violation: ball_violation(samples, ball, p.as_slice()),
        })
    }
}

/// `(Δ/α)·max(0, ‖E_Q[ξ] − μ₀‖ − √η)` for a distribution `Q` on the samples.
pub fn hoffman_bound(
    samples: &SampleSet,
    ball: &MeanBallSet,
    q_weights: &[f64],
    delta: f64,
    alpha: f64,
) -> Result<f64> {
    check_ball(samples, ball)?;
    check_len(samples, q_weights)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be nonnegative, got {delta}")));
    }
    let mu0 = DVector::from_column_slice(&ball.mu0);
    let dist = (samples.mean(q_weights) - mu0).norm() - ball.eta.sqrt();
    Ok(delta / alpha * dist.max(0.0))
}

/// Result of [`nearest_mean`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullDistance {
    /// Weights attaining `upper`.
    pub p: Vec<f64>,
    /// `‖Qp − μ₀‖²` at `p`.
    pub upper: f64,
    /// Lower bound on the squared distance from the duality gap.
    pub lower: f64,
}

/// Minimizes `‖Qp − μ₀‖²` over the simplex by pairwise Frank–Wolfe with
/// exact line search, which converges linearly over a polytope.
pub fn nearest_mean(samples: &SampleSet, mu0: &[f64]) -> HullDistance {
    let q = samples.matrix();
    let k = samples.len();
    let mu0 = DVector::from_column_slice(mu0);
    let mut p = vec![0.0; k];
    let start = (0..k)
        .map(|i| (q.column(i) - &mu0).norm_squared())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(i, _)| i);
    p[start] = 1.0;
    let mut v = q.column(start) - &mu0;
    let mut lower = 0.0;
    for _ in 0..100_000 {
        let g: Vec<f64> = (0..k).map(|i| 2.0 * q.column(i).dot(&v)).collect();
        let toward = (0..k).min_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap_or(0);
        let away = (0..k)
            .filter(|&i| p[i] > 0.0)
            .max_by(|&a, &b| g[a].total_cmp(&g[b]))
            .unwrap_or(toward);
        let f = v.norm_squared();
        let gap: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() - g[toward];
        lower = (f - gap).max(0.0);
        if gap <= 1e-15 * f.max(1.0) || toward == away {
            break;
        }
        let w = q.column(toward) - q.column(away);
        let ww = w.norm_squared();
        if ww == 0.0 {
            break;
        }
        let t = (-v.dot(&w) / ww).clamp(0.0, p[away]);
        if t == 0.0 {
            break;
        }
        p[toward] += t;
        p[away] -= t;
        if p[away] < 1e-300 {
            p[away] = 0.0;
        }
        v += w * t;
    }
    let upper = v.norm_squared();
    HullDistance { p, upper, lower: lower.min(upper) }
}

/// The set `𝒫_k` with cached factorizations for repeated projections.
#[derive(Debug, Clone)]
pub struct DiscreteAmbiguitySet {
    samples: SampleSet,
    ball: MeanBallSet,
    gram: GramCache,
}

/// Newton iteration cap for the dual projection.
const DUAL_MAX_ITER: usize = 500;
const DUAL_GRAD_TOL: f64 = 1e-12;
const LMO_MAX_ITER: usize = 500;

impl DiscreteAmbiguitySet {
    pub fn new(samples: SampleSet, ball: MeanBallSet) -> Result<Self> {
        check_ball(&samples, &ball)?;
        let gram = GramCache::new(&samples);
        Ok(Self { samples, ball, gram })
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn ball(&self) -> &MeanBallSet {
        &self.ball
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn member(&self, p: &[f64]) -> Result<bool> {
        member(&self.samples, &self.ball, p)
    }

    /// Largest violation among the simplex and mean-ball constraints.
    pub fn infeasibility(&self, p: &[f64]) -> Result<f64> {
        check_len(&self.samples, p)?;
        let neg = p.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        let sum = (p.iter().sum::<f64>() - 1.0).abs();
        Ok(neg.max(sum).max(ball_violation(&self.samples, &self.ball, p).max(0.0)))
    }

    /// Dykstra's alternating projections between the mean ball and the
    /// simplex. Slow when `z` is far from the set: the corrections grow by a
    /// bounded amount per sweep.
    pub fn project_dykstra(&self, z: &[f64]) -> Result<AmbiguityProjection> {
        check_len(&self.samples, z)?;
        dykstra(&self.samples, &self.ball, &self.gram, z)
    }

    /// Exact projection through the dual in the mean space.
    ///
    /// With `y` the multiplier of `Qp − μ₀ = v`, the primal point is
    /// `p(y) = Π_Δ(z − Qᵀy)` and `y` maximizes the concave function
    /// `½‖p(y) − z‖² + yᵀ(Qp(y) − μ₀) − √η‖y‖`. `warm` carries `y` between
    /// calls.
    pub fn project(&self, z: &[f64], warm: Option<&mut Vec<f64>>) -> Result<WeightVector> {
        self.project_detailed(z, warm).map(|r| r.p)
    }

    /// [`project`](Self::project) with the Dykstra sweep count and final
    /// infeasibility.
    pub fn project_detailed(&self, z: &[f64], warm: Option<&mut Vec<f64>>) -> Result<AmbiguityProjection> {
        check_len(&self.samples, z)?;
        let q = self.samples.matrix();
        let nu = self.samples.nu();
        let mu0 = DVector::from_column_slice(&self.ball.mu0);
        let root_eta = self.ball.eta.sqrt();

        let p0 = simplex_projection(z).0;
        let v0 = q * DVector::from_column_slice(&p0) - &mu0;
        if v0.norm_squared() <= self.ball.eta * (1.0 + 1e-12) {
            if let Some(w) = warm {
                w.clear();
            }
            let infeasibility = ball_violation(&self.samples, &self.ball, &p0).max(0.0);
            return Ok(AmbiguityProjection {
                p: WeightVector(p0),
                sweeps: 0,
                infeasibility,
            });
        }

        let kink = 1e-9 * (1.0 + z.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let eval = |y: &DVector<f64>| {
            let qty = q.transpose() * y;
            let shifted: Vec<f64> = z.iter().zip(qty.iter()).map(|(a, b)| a - b).collect();
            let (p, _) = simplex_projection(&shifted);
            let pv = DVector::from_column_slice(&p);
            let v = q * &pv - &mu0;
            let ny = y.norm();
            let dist2: f64 = p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = 0.5 * dist2 + y.dot(&v) - root_eta * ny;
            // At the kink y = 0 the steepest ascent direction is v shrunk by √η.
            let grad = if ny > kink {
                &v - y * (root_eta / ny)
            } else {
                let nv = v.norm();
                if nv > root_eta { &v * (1.0 - root_eta / nv) } else { DVector::zeros(nu) }
            };
            (p, g, grad)
        };

        let mut y = match warm.as_deref() {
            Some(w) if w.len() == nu && w.iter().any(|v| *v != 0.0) => DVector::from_column_slice(w),
            _ => v0.clone(),
        };
        let (mut p, mut g, mut grad) = eval(&y);
        let scale = q.amax().max(1.0);
        let lipschitz = self.gram.eig.max().max(1e-12);
        for _ in 0..DUAL_MAX_ITER {
            if grad.norm() <= DUAL_GRAD_TOL * scale {
                break;
            }
            // Generalized Hessian of the concave dual, negated.
            let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
            let mut neg_h = DMatrix::<f64>::zeros(nu, nu);
            let mut col_sum = DVector::<f64>::zeros(nu);
            for &i in &support {
                let c = q.column(i);
                neg_h += c * c.transpose();
                col_sum += c;
            }
            if !support.is_empty() {
                neg_h -= &col_sum * col_sum.transpose() / support.len() as f64;
            }
            let ny = y.norm();
            if ny > kink {
                let yh = &y / ny;
                neg_h += (DMatrix::identity(nu, nu) - &yh * yh.transpose()) * (root_eta / ny);
            }
            let reg = 1e-12 * (neg_h.trace().abs() + 1.0);
            neg_h += DMatrix::identity(nu, nu) * reg;
            let mut dir = neg_h
                .cholesky()
                .map(|c| c.solve(&grad))
                .unwrap_or_else(|| grad.clone());
            // Null directions of the Hessian would otherwise send y off to
            // a huge radius it cannot come back from.
            let cap = 2.0 * ny.max(1.0);
            let dn = dir.norm();
            if dn > cap {
                dir *= cap / dn;
            }

            let slope = grad.dot(&dir);
            let gnorm = grad.norm();
            let mut accepted = false;
            let y_try = &y + &dir;
            let (p_try, g_try, grad_try) = eval(&y_try);
            let flat = g_try >= g - 1e-15 * g.abs().max(1.0) && grad_try.norm() < gnorm;
            if g_try >= g + 1e-4 * slope || flat {
                y = y_try;
                p = p_try;
                g = g_try;
                grad = grad_try;
                accepted = true;
            } else {
                // Backtracking stalls when the step crosses the kink of ‖y‖ at
                // the origin; bisect on the directional derivative instead.
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if eval(&(&y + &dir * mid)).2.dot(&dir) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if lo > 0.0 {
                    let y_try = &y + &dir * lo;
                    let (p_try, g_try, grad_try) = eval(&y_try);
                    if g_try > g || (g_try >= g - 1e-15 * g.abs().max(1.0) && grad_try.norm() < gnorm) {
                        y = y_try;
                        p = p_try;
                        g = g_try;
                        grad = grad_try;
                        accepted = true;
                    }
                }
            }
            if !accepted {
                // The generalized Hessian is singular when p has tiny
                // support; fall back to an ascent step along the gradient.
                let mut t = 1.0 / lipschitz;
                for _ in 0..40 {
                    let y_try = &y + &grad * t;
                    let (p_try, g_try, grad_try) = eval(&y_try);
                    if g_try >= g + 0.5 * t * gnorm * gnorm || grad_try.norm() < gnorm {
                        y = y_try;
                        p = p_try;
                        g = g_try;
                        grad = grad_try;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
            }
            if !accepted {
                break;
            }
        }
        let violation = ball_violation(&self.samples, &self.ball, &p);
        if violation > FEASIBILITY_TOL {
            log::debug!("dual projection left violation {violation:.3e}; refining with Dykstra");
            let refined = dykstra(&self.samples, &self.ball, &self.gram, z)?;
            if let Some(w) = warm {
                w.clear();
            }
            return Ok(refined);
        }
        if let Some(w) = warm {
            *w = y.iter().copied().collect();
        }
        Ok(AmbiguityProjection {
            p: WeightVector(p),
            sweeps: 0,
            infeasibility: violation.max(0.0),
        })
    }

    /// Distance from `μ₀` to the hull of the samples, squared, with a
    /// certified lower bound. `𝒫_k` is empty exactly when this exceeds `η`.
    pub fn nearest_mean(&self) -> HullDistance {
        nearest_mean(&self.samples, &self.ball.mu0)
    }

    /// A maximizer of `⟨c, p⟩` over `𝒫_k`, by projected gradient ascent from
    /// `start` with steps doubling from `1/spread(c)`.
    pub fn maximize_linear(&self, c: &[f64], start: &[f64], warm: &mut Vec<f64>) -> Result<WeightVector> {
        check_len(&self.samples, c)?;
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let spread = c.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        let mut p = self.project(start, Some(warm))?;
        if spread <= 1e-14 {
            return Ok(p);
        }
        let mut step = 1.0 / spread;
        let cmax = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let objective = |p: &WeightVector| p.as_slice().iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        let mut value = objective(&p);
        for _ in 0..LMO_MAX_ITER {
            let z: Vec<f64> = p
                .as_slice()
                .iter()
                .zip(c)
                .map(|(pi, ci)| pi + step * (ci - mean))
                .collect();
            let next = self.project(&z, Some(warm))?;
            let next_value = objective(&next);
            // Ties in `c` make the maximizer a face; stop once the objective stalls.
            if next_value <= value + 1e-14 * cmax {
                if next_value > value {
                    p = next;
                }
                break;
            }
            p = next;
            value = next_value;
            // Any step increases a linear objective; longer steps approach the maximizer.
            step *= 2.0;
        }
        Ok(p)
    }
}
