//! Pure characteristics demand: market shares as the regularized solution of
//! a skew block LCP, fitted to target shares under an ambiguous distribution
//! of consumer tastes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{DiscreteAmbiguitySet, MeanBallSet, SampleSet, WeightVector};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::lcp::{regularize, LcpInstance};
use crate::minimax::{InnerBlock, MinimaxObjective};

/// Model data. JSON keys follow the usual symbols (`T`, `C`, `tau`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcdConfig {
    /// Number of markets.
    #[serde(rename = "T")]
    pub markets: usize,
    /// Products per market.
    pub m: usize,
    /// Characteristic dimension.
    pub tau: usize,
    /// Per market, an `m × τ` matrix stored by rows.
    #[serde(rename = "C")]
    pub c: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
    /// Target shares per market.
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "box")]
    pub x_box: BoxDomain,
    pub domain: BoxDomain,
    pub mu0: Vec<f64>,
    pub eta: f64,
    pub rho: f64,
    /// Share-aggregation matrices; identity when absent.
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for PcdConfig {
    fn default() -> Self {
        Self {
            markets: 1,
            m: 2,
            tau: 1,
            c: vec![vec![vec![2.0], vec![3.0]]],
            sigma: vec![vec![1.0, 2.0]],
            b: vec![vec![0.5, 0.5]],
            x_box: BoxDomain::cube(5, 0.0, 2.0),
            domain: BoxDomain::cube(2, -1.0, 1.0),
            mu0: vec![0.0, 0.0],
            eta: 0.5,
            rho: 1.0,
            a: None,
        }
    }
}

impl PcdConfig {
    /// `n = mT + 2τ + 1`.
    pub fn n(&self) -> usize {
        self.m * self.markets + 2 * self.tau + 1
    }

    /// Number of rows of the image `F`.
    pub fn image_dim(&self) -> usize {
        self.m * self.markets
    }

    pub fn validate(&self) -> Result<()> {
        let (t, m, tau) = (self.markets, self.m, self.tau);
        if t == 0 || m == 0 || tau == 0 {
            return Err(Error::InvalidArgument("T, m and tau must be positive".into()));
        }
        if self.x_box.dim() != self.n() {
            return Err(Error::Dimension(format!(
                "box has dimension {}, expected mT + 2tau + 1 = {}",
                self.x_box.dim(),
                self.n()
            )));
        }
        if self.domain.dim() != 2 || self.mu0.len() != 2 {
            return Err(Error::Dimension("the taste domain and mu0 must be two-dimensional".into()));
        }
        let per_market = |name: &str, len: usize| -> Result<()> {
            if len != t {
                return Err(Error::Dimension(format!("{name} has {len} markets, expected {t}")));
            }
            Ok(())
        };
        per_market("C", self.c.len())?;
        per_market("sigma", self.sigma.len())?;
        per_market("b", self.b.len())?;
        for mt in 0..t {
            if self.c[mt].len() != m || self.c[mt].iter().any(|row| row.len() != tau) {
                return Err(Error::Dimension(format!("C[{mt}] must be {m} x {tau}")));
            }
            if self.sigma[mt].len() != m {
                return Err(Error::Dimension(format!("sigma[{mt}] must have length {m}")));
            }
            let rows = match &self.a {
                Some(a) => {
                    per_market("A", a.len())?;
                    if a[mt].iter().any(|row| row.len() != m) {
                        return Err(Error::Dimension(format!("A[{mt}] must have {m} columns")));
                    }
                    a[mt].len()
                }
                None => m,
            };
            if self.b[mt].len() != rows {
                return Err(Error::Dimension(format!("b[{mt}] must have length {rows}")));
            }
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {}", self.rho)));
        }
        Ok(())
    }

    /// The known minimizer of the unregularized default instance.
    pub fn default_reference() -> Vec<f64> {
        vec![0.0, 0.0, 1.0, 0.0, 0.0]
    }
}

/// `x = (x₁, x₂, x₃, x₄)` with `x₁ ∈ R^{mT}`, `x₂, x₃ ∈ R^τ`, `x₄ ∈ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub x4: f64,
}

impl DecisionVector {
    pub fn from_slice(cfg: &PcdConfig, x: &[f64]) -> Result<Self> {
        if x.len() != cfg.n() {
            return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), cfg.n())));
        }
        let mt = cfg.m * cfg.markets;
        Ok(Self {
            x1: x[..mt].to_vec(),
            x2: x[mt..mt + cfg.tau].to_vec(),
            x3: x[mt + cfg.tau..mt + 2 * cfg.tau].to_vec(),
            x4: x[mt + 2 * cfg.tau],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x1.clone();
        v.extend(&self.x2);
        v.extend(&self.x3);
        v.push(self.x4);
        v
    }
}

/// `u_t = C_t (x₂ + x₃ξ₁) − exp(x₄ξ₂) σ_t + x_{1t}` for every market.
pub fn utility(cfg: &PcdConfig, x: &DecisionVector, xi: &[f64]) -> Vec<DVector<f64>> {
    let chi1: Vec<f64> = x.x2.iter().zip(&x.x3).map(|(a, b)| a + b * xi[0]).collect();
    let chi2 = (x.x4 * xi[1]).exp();
    (0..cfg.markets)
        .map(|t| {
            DVector::from_fn(cfg.m, |i, _| {
                let c: f64 = cfg.c[t][i].iter().zip(&chi1).map(|(a, b)| a * b).sum();
                c - chi2 * cfg.sigma[t][i] + x.x1[t * cfg.m + i]
            })
        })
        .collect()
}

/// `M = [[0, e], [−eᵀ, 0]]`, `q = (−u; 1)`.
pub fn block_lcp(u: &DVector<f64>) -> LcpInstance {
    let m = u.len();
    let mut mat = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        mat[(i, m)] = 1.0;
        mat[(m, i)] = -1.0;
    }
    let mut q = DVector::from_element(m + 1, 1.0);
    q.rows_mut(0, m).copy_from(&(-u));
    LcpInstance::monotone(mat, q).expect("skew block is monotone")
}

/// One block LCP per market.
pub fn build_block_lcp(cfg: &PcdConfig, x: &DecisionVector, xi: &[f64]) -> Vec<LcpInstance> {
    utility(cfg, x, xi).iter().map(block_lcp).collect()
}

/// Solution `(s, γ)` of the regularized block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub s: DVector<f64>,
    pub gamma: f64,
    /// Products with positive share.
    pub active: Vec<usize>,
}

impl BlockSolution {
    /// `(s, γ)` as one LCP vector.
    pub fn y(&self) -> DVector<f64> {
        let m = self.s.len();
        DVector::from_fn(m + 1, |i, _| if i < m { self.s[i] } else { self.gamma })
    }

    /// `Jᵀg` for the Jacobian `J = ∂s/∂u` on the current active set.
    pub fn jacobian_t_mul(&self, g: &[f64], eps: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.s.len()];
        if self.active.is_empty() {
            return out;
        }
        let shift = if self.gamma > 0.0 {
            let sum: f64 = self.active.iter().map(|&i| g[i]).sum();
            sum / (self.active.len() as f64 + eps * eps)
        } else {
            0.0
        };
        for &i in &self.active {
            out[i] = (g[i] - shift) / eps;
        }
        out
    }
}

/// Exact solution of `0 ≤ s ⊥ εs + γe − u ≥ 0`, `0 ≤ γ ⊥ εγ + 1 − eᵀs ≥ 0`.
pub fn solve_block_regularized(u: &[f64], eps: f64) -> Result<BlockSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization parameter must be positive, got {eps}"
        )));
    }
    let positive: f64 = u.iter().map(|v| v.max(0.0)).sum();
    let gamma = if positive <= eps {
        0.0
    } else {
        let mut sorted = u.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut gamma = 0.0;
        for j in 0..sorted.len() {
            cum += sorted[j];
            gamma = (cum - eps) / ((j + 1) as f64 + eps * eps);
            if j + 1 == sorted.len() || gamma >= sorted[j + 1] {
                break;
            }
        }
        gamma
    };
    let s = DVector::from_iterator(u.len(), u.iter().map(|ui| ((ui - gamma) / eps).max(0.0)));
    let active = (0..u.len()).filter(|&i| s[i] > 0.0).collect();
    Ok(BlockSolution { s, gamma, active })
}

/// `argmax {⟨s, u⟩ : ⟨e, s⟩ ≤ 1, s ≥ 0}` as the hull of its vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareFace {
    pub vertices: Vec<Vec<f64>>,
    pub least_norm: Vec<f64>,
}

impl ShareFace {
    pub fn contains(&self, s: &[f64], tol: f64) -> bool {
        // Vertices are 0 and unit vectors on a coordinate subset.
        let m = s.len();
        let mut allowed = vec![false; m];
        let mut has_zero = false;
        for v in &self.vertices {
            match v.iter().position(|&c| c == 1.0) {
                Some(i) => allowed[i] = true,
                None => has_zero = true,
            }
        }
        let sum: f64 = s.iter().sum();
        s.iter().zip(&allowed).all(|(&si, &ok)| si >= -tol && (ok || si.abs() <= tol))
            && if has_zero { sum <= 1.0 + tol } else { (sum - 1.0).abs() <= tol }
    }
}

pub fn argmax_share_set(u: &[f64]) -> ShareFace {
    let m = u.len();
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unit = |i: usize| {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        e
    };
    if m == 0 || max < 0.0 {
        return ShareFace {
            vertices: vec![vec![0.0; m]],
            least_norm: vec![0.0; m],
        };
    }
    let ties: Vec<usize> = (0..m).filter(|&i| u[i] == max).collect();
    let mut vertices: Vec<Vec<f64>> = ties.iter().map(|&i| unit(i)).collect();
    let least_norm = if max > 0.0 {
        let w = 1.0 / ties.len() as f64;
        (0..m).map(|i| if u[i] == max { w } else { 0.0 }).collect()
    } else {
        vertices.push(vec![0.0; m]);
        vec![0.0; m]
    };
    ShareFace { vertices, least_norm }
}

/// Midpoint `√k × √k` grid on the taste domain.
pub fn make_grid_samples(cfg: &PcdConfig, k: usize) -> Result<SampleSet> {
    let side = (k as f64).sqrt().round() as usize;
    if k == 0 || side * side != k {
        return Err(Error::InvalidArgument(format!("k = {k} is not a positive perfect square")));
    }
    let d = &cfg.domain;
    let coord = |axis: usize, j: usize| {
        let width = d.hi[axis] - d.lo[axis];
        d.lo[axis] + width * (2 * j + 1) as f64 / (2 * side) as f64
    };
    let mut points = Vec::with_capacity(k);
    for a in 0..side {
        for b in 0..side {
            points.push(vec![coord(0, a), coord(1, b)]);
        }
    }
    SampleSet::new(points, d.clone())
}

/// `θ(x) = ½‖x₁‖²` plus `ϱ Σ_t ‖A_t Σ_i p_i s_{t,ε}(x, ξ^i) − b_t‖²`.
#[derive(Debug, Clone)]
pub struct PcdObjective {
    cfg: PcdConfig,
    eps: f64,
    set: DiscreteAmbiguitySet,
    points: Vec<Vec<f64>>,
}

/// Builds the objective on the given samples with the ball `(μ₀, η)` of `cfg`.
pub fn pcd_objective(cfg: &PcdConfig, samples: SampleSet, eps: f64) -> Result<PcdObjective> {
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization parameter must be positive, got {eps}"
        )));
    }
    if samples.domain() != &cfg.domain {
        for i in 0..samples.len() {
            if !cfg.domain.contains(&samples.point(i), 1e-12) {
                return Err(Error::OutsideDomain(format!("sample {i} is outside the taste domain")));
            }
        }
    }
    let points = (0..samples.len()).map(|i| samples.point(i)).collect();
    let set = DiscreteAmbiguitySet::new(samples, MeanBallSet::new(cfg.mu0.clone(), cfg.eta)?)?;
    Ok(PcdObjective {
        cfg: cfg.clone(),
        eps,
        set,
        points,
    })
}

impl PcdObjective {
    pub fn config(&self) -> &PcdConfig {
        &self.cfg
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Regularized shares of every market at one sample.
    pub fn shares(&self, x: &DecisionVector, xi: &[f64]) -> Result<Vec<BlockSolution>> {
        utility(&self.cfg, x, xi)
            .iter()
            .map(|u| solve_block_regularized(u.as_slice(), self.eps))
            .collect()
    }

    /// Uniform weights, or their projection onto `𝒫_k` when they are infeasible.
    pub fn initial_weights(&self) -> Result<WeightVector> {
        let uniform = WeightVector::uniform(self.set.len());
        if self.set.member(uniform.as_slice())? {
            Ok(uniform)
        } else {
            self.set.project(uniform.as_slice(), None)
        }
    }

    fn aggregate(&self, t: usize, v: &[f64]) -> Vec<f64> {
        match &self.cfg.a {
            Some(a) => a[t].iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect(),
            None => v.to_vec(),
        }
    }

    fn aggregate_t(&self, t: usize, r: &[f64]) -> Vec<f64> {
        match &self.cfg.a {
            Some(a) => (0..self.cfg.m)
                .map(|j| a[t].iter().zip(r).map(|(row, ri)| row[j] * ri).sum())
                .collect(),
            None => r.to_vec(),
        }
    }
}

impl MinimaxObjective for PcdObjective {
    fn x_box(&self) -> &BoxDomain {
        &self.cfg.x_box
    }

    fn ambiguity(&self) -> &DiscreteAmbiguitySet {
        &self.set
    }

    fn image_dim(&self) -> usize {
        self.cfg.image_dim()
    }

    fn regularization(&self) -> f64 {
        self.eps
    }

    /// Box center with the taste-heterogeneity coordinates `x₃, x₄` at zero.
    fn initial_x(&self) -> Vec<f64> {
        let mut x = self.cfg.x_box.center();
        let mt = self.cfg.image_dim();
        for v in &mut x[mt + self.cfg.tau..] {
            *v = 0.0;
        }
        self.cfg.x_box.project(&x)
    }

    fn theta(&self, x: &[f64]) -> f64 {
        let mt = self.cfg.image_dim();
        0.5 * x[..mt].iter().map(|v| v * v).sum::<f64>()
    }

    fn image_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let dv = DecisionVector::from_slice(&self.cfg, x)?;
        let m = self.cfg.m;
        let mut f = DMatrix::zeros(self.cfg.image_dim(), self.points.len());
        for (i, xi) in self.points.iter().enumerate() {
            for (t, block) in self.shares(&dv, xi)?.iter().enumerate() {
                f.view_mut((t * m, i), (m, 1)).copy_from(&block.s);
            }
        }
        Ok(f)
    }

    fn outer(&self, v: &DVector<f64>) -> f64 {
        let m = self.cfg.m;
        let total: f64 = (0..self.cfg.markets)
            .map(|t| {
                let agg = self.aggregate(t, &v.as_slice()[t * m..(t + 1) * m]);
                agg.iter().zip(&self.cfg.b[t]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        self.cfg.rho * total
    }

    fn outer_grad(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.cfg.m;
        let mut g = DVector::zeros(v.len());
        for t in 0..self.cfg.markets {
            let agg = self.aggregate(t, &v.as_slice()[t * m..(t + 1) * m]);
            let r: Vec<f64> = agg.iter().zip(&self.cfg.b[t]).map(|(a, b)| 2.0 * self.cfg.rho * (a - b)).collect();
            for (j, val) in self.aggregate_t(t, &r).into_iter().enumerate() {
                g[t * m + j] = val;
            }
        }
        g
    }

    fn analytic_grad_x(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        Some((|| {
            let cfg = &self.cfg;
            let dv = DecisionVector::from_slice(cfg, x)?;
            let (m, tau, mt) = (cfg.m, cfg.tau, cfg.image_dim());
            let f = self.image_matrix(x)?;
            let g = self.outer_grad(&(&f * DVector::from_column_slice(p)));
            let mut grad = vec![0.0; cfg.n()];
            grad[..mt].copy_from_slice(&x[..mt]);
            for (i, xi) in self.points.iter().enumerate() {
                if p[i] == 0.0 {
                    continue;
                }
                let chi2 = (dv.x4 * xi[1]).exp();
                for (t, block) in self.shares(&dv, xi)?.iter().enumerate() {
                    let r = block.jacobian_t_mul(&g.as_slice()[t * m..(t + 1) * m], self.eps);
                    for j in 0..m {
                        let w = p[i] * r[j];
                        if w == 0.0 {
                            continue;
                        }
                        grad[t * m + j] += w;
                        for c in 0..tau {
                            grad[mt + c] += w * cfg.c[t][j][c];
                            grad[mt + tau + c] += w * cfg.c[t][j][c] * xi[0];
                        }
                        grad[mt + 2 * tau] -= w * xi[1] * chi2 * cfg.sigma[t][j];
                    }
                }
            }
            Ok(grad)
        })())
    }

    fn inner_blocks(&self, x: &[f64], p: &[f64]) -> Result<Vec<InnerBlock>> {
        let dv = DecisionVector::from_slice(&self.cfg, x)?;
        let m = self.cfg.m;
        let f = self.image_matrix(x)?;
        let g = self.outer_grad(&(&f * DVector::from_column_slice(p)));
        let mut blocks = Vec::with_capacity(self.points.len() * self.cfg.markets);
        for (i, xi) in self.points.iter().enumerate() {
            let utilities = utility(&self.cfg, &dv, xi);
            for (t, u) in utilities.iter().enumerate() {
                let instance = regularize(&block_lcp(u), self.eps)?;
                let y = solve_block_regularized(u.as_slice(), self.eps)?.y();
                let w = instance.slack(&y);
                let grad_y = DVector::from_fn(m + 1, |j, _| if j < m { p[i] * g[t * m + j] } else { 0.0 });
                blocks.push(InnerBlock { instance, y, w, grad_y });
            }
        }
        Ok(blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcp::{brute_force_lcp, natural_residual, solve_pd_lcp};
    use crate::minimax::evaluate_objective;

    fn t_of(eps: f64) -> f64 {
        (1.0 + eps) / (2.0 + eps * eps)
    }

    #[test]
    fn default_config_is_consistent() {
        let cfg = PcdConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n(), 5);
        let json = serde_json::to_value(&cfg).unwrap();
        for key in ["T", "m", "tau", "C", "sigma", "b", "box", "domain", "mu0", "eta", "rho"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json.get("A").is_none());
        let back: PcdConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn utility_at_reference_is_one() {
        let cfg = PcdConfig::default();
        let x = DecisionVector::from_slice(&cfg, &PcdConfig::default_reference()).unwrap();
        for xi in [[0.3, -0.7], [-1.0, 1.0], [0.0, 0.0]] {
            let u = utility(&cfg, &x, &xi);
            assert_eq!(u[0].as_slice(), &[1.0, 1.0]);
        }
        let lcp = build_block_lcp(&cfg, &x, &[0.2, 0.1]);
        assert_eq!(lcp[0].q().as_slice(), &[-1.0, -1.0, 1.0]);
        assert_eq!(
            lcp[0].matrix(),
            &DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0])
        );
        assert!(lcp[0].is_monotone());
    }

    #[test]
    fn closed_form_matches_hand_solution() {
        let eps = 0.1;
        let sol = solve_block_regularized(&[1.0, 1.0], eps).unwrap();
        let t = t_of(eps);
        assert!((sol.s[0] - t).abs() < 1e-14 && (sol.s[1] - t).abs() < 1e-14);
        assert!((sol.gamma - (2.0 - eps) / (2.0 + eps * eps)).abs() < 1e-14);
        assert!((sol.s[0] - 0.5473).abs() < 1e-3 && (sol.gamma - 0.9453).abs() < 1e-3);

        let zero = solve_block_regularized(&[-1.0, -2.0], eps).unwrap();
        assert_eq!(zero.s.as_slice(), &[0.0, 0.0]);
        assert_eq!(zero.gamma, 0.0);

        let tiny = solve_block_regularized(&[1.0, -1.0], 1e-6).unwrap();
        assert!((tiny.s[0] - 1.0).abs() < 1e-5 && tiny.s[1] == 0.0);
        assert!((tiny.gamma - 1.0).abs() < 1e-5);
        assert!(solve_block_regularized(&[1.0], 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_lcp_solvers() {
        for (u, eps) in [
            (vec![1.0, 1.0], 0.1),
            (vec![0.04, 0.03], 0.1),
            (vec![1.5, -0.3, 0.7, 0.69, 2.0], 0.01),
            (vec![0.2, 0.1], 0.5),
        ] {
            let inst = regularize(&block_lcp(&DVector::from_vec(u.clone())), eps).unwrap();
            let exact = solve_block_regularized(&u, eps).unwrap().y();
            assert!(natural_residual(&inst, &exact).unwrap() <= 1e-10);
            let newton = solve_pd_lcp(&inst).unwrap();
            assert!((newton.y - &exact).amax() <= 1e-8, "{u:?}");
            let all = brute_force_lcp(&inst).unwrap();
            assert_eq!(all.len(), 1);
            assert!((all[0].y.clone() - exact).amax() <= 1e-8);
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let eps = 0.1;
        let u = [1.0, 0.8, -0.5];
        let g = [0.3, -0.7, 0.2];
        let base = solve_block_regularized(&u, eps).unwrap();
        let jt = base.jacobian_t_mul(&g, eps);
        for j in 0..3 {
            let mut up = u;
            up[j] += 1e-7;
            let moved = solve_block_regularized(&up, eps).unwrap();
            let fd: f64 = (0..3).map(|i| g[i] * (moved.s[i] - base.s[i]) / 1e-7).sum();
            assert!((fd - jt[j]).abs() < 1e-5, "{j}: {fd} vs {}", jt[j]);
        }
    }

    #[test]
    fn argmax_faces() {
        let tie = argmax_share_set(&[1.0, 1.0]);
        assert_eq!(tie.vertices, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(tie.least_norm, vec![0.5, 0.5]);
        assert!(tie.contains(&[0.3, 0.7], 1e-12));
        assert!(!tie.contains(&[0.3, 0.3], 1e-12));
        assert_eq!(argmax_share_set(&[-1.0, -2.0]).vertices, vec![vec![0.0, 0.0]]);
        assert_eq!(argmax_share_set(&[3.0, 1.0]).vertices, vec![vec![1.0, 0.0]]);
        let flat = argmax_share_set(&[0.0, -1.0]);
        assert!(flat.contains(&[0.4, 0.0], 1e-12) && flat.contains(&[0.0, 0.0], 1e-12));
    }

    #[test]
    fn grid_samples() {
        let cfg = PcdConfig::default();
        let s4 = make_grid_samples(&cfg, 4).unwrap();
        let pts: Vec<Vec<f64>> = (0..4).map(|i| s4.point(i)).collect();
        assert_eq!(pts, vec![vec![-0.5, -0.5], vec![-0.5, 0.5], vec![0.5, -0.5], vec![0.5, 0.5]]);
        let s25 = make_grid_samples(&cfg, 25).unwrap();
        assert!((s25.point(1)[1] - s25.point(0)[1] - 0.4).abs() < 1e-15);
        let mean = s25.mean(WeightVector::uniform(25).as_slice());
        assert!(mean.amax() < 1e-15);
        assert!(make_grid_samples(&cfg, 24).is_err());
        assert_eq!(make_grid_samples(&cfg, 1).unwrap().point(0), vec![0.0, 0.0]);
    }

    #[test]
    fn objective_at_reference() {
        let cfg = PcdConfig::default();
        let model = pcd_objective(&cfg, make_grid_samples(&cfg, 25).unwrap(), 0.1).unwrap();
        let x = PcdConfig::default_reference();
        let t = t_of(0.1);
        let expected = 2.0 * (t - 0.5) * (t - 0.5);
        let p = model.initial_weights().unwrap();
        let v = evaluate_objective(&model, &x, p.as_slice()).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.004468).abs() < 1e-6);

        let mut x1 = x.clone();
        x1[0] = 1.0;
        x1[1] = 1.0;
        assert!((model.theta(&x1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        use crate::minimax::{grad_x, DifferenceMode};
        let cfg = PcdConfig::default();
        let model = pcd_objective(&cfg, make_grid_samples(&cfg, 9).unwrap(), 0.1).unwrap();
        let x = [0.37, 0.13, 0.41, 0.63, 0.27];
        let p: Vec<f64> = (0..9).map(|i| (1 + i) as f64 / 45.0).collect();
        let fd = grad_x(&model, &x, &p, 1e-6, DifferenceMode::Central).unwrap();
        let an = model.analytic_grad_x(&x, &p).unwrap().unwrap();
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0), "{an:?} vs {fd:?}");
        }
    }
}
