//! Alternating minimization in `x` and maximization in `p` for
//! `min_{x∈X} max_{p∈𝒫_k} θ(x) + h(F(x) p)`.
//!
//! The x-step is projected gradient descent on the box with Armijo
//! backtracking and Barzilai–Borwein trial steps. The p-step maximizes the
//! convex function `p ↦ h(F p)` over `𝒫_k` by sweeping support directions of
//! the image set `F 𝒫_k` and by Frank–Wolfe restarts; since a convex function
//! attains its maximum at an extreme point, every candidate is produced by a
//! linear maximization oracle.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{DiscreteAmbiguitySet, WeightVector};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::lcp::LcpInstance;

/// One lower-level complementarity block at the current `(x, p)`.
#[derive(Debug, Clone)]
pub struct InnerBlock {
    /// The (regularized) instance actually solved.
    pub instance: LcpInstance,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    /// `∇_y G` restricted to this block.
    pub grad_y: DVector<f64>,
}

/// `G(x, p) = θ(x) + h(F(x) p)` where column `i` of `F(x)` depends on the
/// lower-level solution at sample `ξ^i`.
pub trait MinimaxObjective: Sync {
    fn x_box(&self) -> &BoxDomain;
    fn ambiguity(&self) -> &DiscreteAmbiguitySet;
    /// Number of rows of `F`.
    fn image_dim(&self) -> usize;
    fn theta(&self, x: &[f64]) -> f64;
    /// `F(x)` with one column per sample.
    fn image_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>>;
    fn outer(&self, v: &DVector<f64>) -> f64;
    fn outer_grad(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Regularization parameter of the lower level, if any.
    fn regularization(&self) -> f64 {
        0.0
    }

    /// Default starting point of [`alternate`].
    fn initial_x(&self) -> Vec<f64> {
        self.x_box().center()
    }

    /// Exact gradient in `x`, when the model can supply one.
    fn analytic_grad_x(&self, _x: &[f64], _p: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Lower-level blocks for certification; empty when the model has none.
    fn inner_blocks(&self, _x: &[f64], _p: &[f64]) -> Result<Vec<InnerBlock>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmijoConfig {
    pub c: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            c: 1e-4,
            backtrack: 0.5,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol_x: f64,
    pub tol_p: f64,
    pub max_outer: usize,
    pub max_inner_x: usize,
    pub fd_step: f64,
    pub armijo: ArmijoConfig,
    pub sweep_directions: usize,
    /// Frank–Wolfe restart count; `None` means `min(k, 64)`.
    pub fw_starts: Option<usize>,
    pub seed: u64,
    /// Starting point in `x`; `None` defers to the model.
    pub x0: Option<Vec<f64>>,
    pub analytic_gradient: bool,
    pub central_difference: bool,
    /// Longest trial step of the x-step as a fraction of the box diameter.
    pub max_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_x: 1e-4,
            tol_p: 1e-8,
            max_outer: 500,
            max_inner_x: 200,
            fd_step: 1e-6,
            armijo: ArmijoConfig::default(),
            sweep_directions: 720,
            fw_starts: None,
            seed: 0,
            x0: None,
            analytic_gradient: false,
            central_difference: false,
            max_step: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_x, self.tol_p, self.fd_step, self.armijo.c, self.armijo.backtrack, self.max_step];
        if positive.iter().any(|v| !(*v > 0.0)) || self.armijo.backtrack >= 1.0 || self.armijo.c >= 1.0 {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner_x == 0 || self.armijo.max_halvings == 0 {
            return Err(Error::InvalidArgument("solver counters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    BudgetExhausted,
    Stalled,
}

/// Iterate of the alternating method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxState {
    pub x: Vec<f64>,
    pub p: WeightVector,
    pub eps: f64,
    pub k: usize,
    /// `G(x, p)` at the recorded pair.
    pub value: f64,
    /// Best inner-max value found at `x`.
    pub max_value: f64,
    /// `‖x − proj_X(x − ∇_x G(x, p))‖`.
    pub residual_x: f64,
    /// Improvement of the last inner maximization over `G(x, p)`.
    pub residual_p: f64,
    pub iteration: usize,
    pub status: RunStatus,
}

fn check_point<O: MinimaxObjective + ?Sized>(model: &O, x: &[f64], p: &[f64]) -> Result<()> {
    if !model.x_box().contains(x, 1e-12) {
        return Err(Error::OutsideDomain(format!("x = {x:?} is outside X")));
    }
    let set = model.ambiguity();
    if p.len() != set.len() {
        return Err(Error::Dimension(format!(
            "p has length {}, there are {} samples",
            p.len(),
            set.len()
        )));
    }
    if set.infeasibility(p)? > 1e-8 {
        return Err(Error::InvalidArgument("p is outside the ambiguity set".into()));
    }
    Ok(())
}

fn value_at<O: MinimaxObjective + ?Sized>(model: &O, x: &[f64], p: &[f64]) -> Result<f64> {
    let f = model.image_matrix(x)?;
    let v = f * DVector::from_column_slice(p);
    Ok(model.theta(x) + model.outer(&v))
}

/// `θ(x) + h(F(x) p)` at a feasible pair.
pub fn evaluate_objective<O: MinimaxObjective + ?Sized>(model: &O, x: &[f64], p: &[f64]) -> Result<f64> {
    check_point(model, x, p)?;
    value_at(model, x, p)
}

/// Finite-difference scheme for [`grad_x`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceMode {
    Forward,
    Central,
}

/// Finite-difference gradient in `x` with step `fd_step·max(1, |x_i|)`,
/// staying inside the box.
pub fn grad_x<O: MinimaxObjective + ?Sized>(
    model: &O,
    x: &[f64],
    p: &[f64],
    fd_step: f64,
    mode: DifferenceMode,
) -> Result<Vec<f64>> {
    let f0 = value_at(model, x, p)?;
    let bx = model.x_box();
    let mut grad = vec![0.0; x.len()];
    let mut xt = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step * x[i].abs().max(1.0);
        let can_up = x[i] + h <= bx.hi[i];
        let can_down = x[i] - h >= bx.lo[i];
        let mut eval = |delta: f64| -> Result<f64> {
            xt[i] = x[i] + delta;
            let v = value_at(model, &xt, p);
            xt[i] = x[i];
            v
        };
        grad[i] = match mode {
            DifferenceMode::Central if can_up && can_down => {
                match (eval(h), eval(-h)) {
                    (Ok(up), Ok(down)) => (up - down) / (2.0 * h),
                    (Ok(up), Err(_)) => (up - f0) / h,
                    (Err(_), Ok(down)) => (f0 - down) / h,
                    (Err(e), Err(_)) => return Err(e),
                }
            }
            _ => {
                let first = if can_up || !can_down { h } else { -h };
                match eval(first) {
                    Ok(v) => (v - f0) / first,
                    Err(e) => match eval(-first) {
                        Ok(v) => (f0 - v) / first,
                        Err(_) => return Err(e),
                    },
                }
            }
        };
    }
    Ok(grad)
}

fn gradient<O: MinimaxObjective + ?Sized>(model: &O, x: &[f64], p: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    if cfg.analytic_gradient {
        if let Some(g) = model.analytic_grad_x(x, p) {
            return g;
        }
    }
    let mode = if cfg.central_difference {
        DifferenceMode::Central
    } else {
        DifferenceMode::Forward
    };
    grad_x(model, x, p, cfg.fd_step, mode)
}

fn x_residual(bx: &BoxDomain, x: &[f64], g: &[f64]) -> f64 {
    let trial: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    bx.project(&trial)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `∇_p G = Fᵀ ∇h(F p)`.
fn grad_p(f: &DMatrix<f64>, grad_h: &DVector<f64>) -> Vec<f64> {
    (f.transpose() * grad_h).iter().copied().collect()
}

/// Projection residuals of the first-order conditions in `x` and in `p`.
pub fn projection_residual<O: MinimaxObjective + ?Sized>(
    model: &O,
    x: &[f64],
    p: &WeightVector,
    fd_step: f64,
) -> Result<(f64, f64)> {
    let cfg = SolverConfig {
        fd_step,
        ..Default::default()
    };
    let g = gradient(model, x, p.as_slice(), &cfg)?;
    let res_x = x_residual(model.x_box(), x, &g);
    let f = model.image_matrix(x)?;
    let v = &f * DVector::from_column_slice(p.as_slice());
    let gp = grad_p(&f, &model.outer_grad(&v));
    let ascent: Vec<f64> = p.as_slice().iter().zip(&gp).map(|(a, b)| a + b).collect();
    let proj = model.ambiguity().project(&ascent, None)?;
    let res_p = proj
        .as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((res_x, res_p))
}

/// Builds a state at `(x, p)` with the x-residual evaluated there.
pub fn make_state<O: MinimaxObjective + ?Sized>(
    model: &O,
    x: Vec<f64>,
    p: WeightVector,
    cfg: &SolverConfig,
) -> Result<MinimaxState> {
    check_point(model, &x, p.as_slice())?;
    let value = value_at(model, &x, p.as_slice())?;
    let g = gradient(model, &x, p.as_slice(), cfg)?;
    Ok(MinimaxState {
        residual_x: x_residual(model.x_box(), &x, &g),
        residual_p: f64::INFINITY,
        max_value: value,
        value,
        eps: model.regularization(),
        k: p.len(),
        x,
        p,
        iteration: 0,
        status: RunStatus::Running,
    })
}

/// Diagnostics of one x-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinStepReport {
    pub iterations: usize,
    pub stalled: bool,
}

/// Projected gradient descent in `x` at fixed `p`.
pub fn step_min_x<O: MinimaxObjective + ?Sized>(
    model: &O,
    state: &MinimaxState,
    cfg: &SolverConfig,
) -> Result<(MinimaxState, MinStepReport)> {
    let bx = model.x_box();
    let p = state.p.as_slice();
    let mut x = state.x.clone();
    let mut f = value_at(model, &x, p)?;
    let mut g = gradient(model, &x, p, cfg)?;
    let mut res = x_residual(bx, &x, &g);
    let mut alpha: f64 = 1.0;
    let radius = cfg.max_step * bx.diameter().max(f64::MIN_POSITIVE);
    let mut report = MinStepReport {
        iterations: 0,
        stalled: false,
    };

    while res > cfg.tol_x && report.iterations < cfg.max_inner_x {
        report.iterations += 1;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut step = alpha.min(radius / gnorm.max(f64::MIN_POSITIVE));
        let mut accepted = None;
        for _ in 0..=cfg.armijo.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let x_new = bx.project(&trial);
            let decrease: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let f_new = value_at(model, &x_new, p)?;
            if f_new <= f + cfg.armijo.c * decrease {
                accepted = Some((x_new, f_new));
                break;
            }
            step *= cfg.armijo.backtrack;
        }
        let Some((x_new, f_new)) = accepted else {
            report.stalled = true;
            break;
        };
        let g_new = gradient(model, &x_new, p, cfg)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(g_new.iter().zip(&g)).map(|(si, (a, b))| si * (a - b)).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (2.0 * step).min(1e10) };
        x = x_new;
        f = f_new;
        g = g_new;
        res = x_residual(bx, &x, &g);
    }
    let mut next = state.clone();
    next.x = x;
    next.value = f;
    next.max_value = f;
    next.residual_x = res;
    Ok((next, report))
}

/// Unit directions covering the sphere in `R^l` for `l ≤ 3`.
fn sweep_directions(l: usize, count: usize) -> Vec<DVector<f64>> {
    match l {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_column_slice(&[a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            // Fibonacci lattice on the sphere.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    DVector::from_column_slice(&[r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Convex maximization in `p` at fixed `x`.
///
/// Returns the new state (carrying the best `p` found, or the incoming `p`
/// when nothing beats it by more than `tol_p`) and the improvement over the
/// incoming `p`, which is never negative.
pub fn step_max_p<O: MinimaxObjective + ?Sized>(
    model: &O,
    state: &MinimaxState,
    cfg: &SolverConfig,
) -> Result<(MinimaxState, f64)> {
    let set = model.ambiguity();
    let k = set.len();
    let f = model.image_matrix(&state.x)?;
    let theta = model.theta(&state.x);
    let value = |p: &[f64]| model.outer(&(&f * DVector::from_column_slice(p)));

    let start = state.p.clone();
    let start_value = value(start.as_slice());
    let mut best = (start.clone(), start_value);
    let consider = |cand: WeightVector, best: &mut (WeightVector, f64)| {
        let v = value(cand.as_slice());
        if v > best.1 {
            *best = (cand, v);
        }
    };

    let spread = (0..f.nrows())
        .map(|r| {
            let row = f.row(r);
            row.max() - row.min()
        })
        .fold(0.0, f64::max);
    if spread > 1e-14 {
        let l = model.image_dim();
        let mut warm = Vec::new();
        let mut prev = start.clone();
        for d in sweep_directions(l, cfg.sweep_directions) {
            let c: Vec<f64> = (f.transpose() * &d).iter().copied().collect();
            let cand = set.maximize_linear(&c, prev.as_slice(), &mut warm)?;
            prev = cand.clone();
            consider(cand, &mut best);
        }

        let n_starts = cfg.fw_starts.unwrap_or(64).min(k);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut vertices: Vec<usize> = if n_starts >= k {
            (0..k).collect()
        } else {
            sample(&mut rng, k, n_starts).into_vec()
        };
        vertices.sort_unstable();
        let mut starts = vec![start.clone(), best.0.clone()];
        for i in vertices {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            starts.push(set.project(&e, None)?);
        }
        for s in starts {
            let cand = frank_wolfe_ascent(model, set, &f, s)?;
            consider(cand, &mut best);
        }
    }

    let improvement = (best.1 - start_value).max(0.0);
    let mut next = state.clone();
    next.value = theta + start_value;
    next.max_value = theta + best.1;
    next.residual_p = improvement;
    // Ties go to the incoming `p`: swapping to an equally good maximizer
    // lets the next x-step chase a different worst case and can undo progress.
    if improvement > cfg.tol_p {
        next.p = best.0;
    }
    Ok((next, improvement))
}

/// Full-step Frank–Wolfe for maximizing the convex `p ↦ h(F p)`: each step
/// jumps to the linear maximizer of the gradient, which cannot decrease `h`.
fn frank_wolfe_ascent<O: MinimaxObjective + ?Sized>(
    model: &O,
    set: &DiscreteAmbiguitySet,
    f: &DMatrix<f64>,
    mut p: WeightVector,
) -> Result<WeightVector> {
    let mut warm = Vec::new();
    let mut v = f * DVector::from_column_slice(p.as_slice());
    let mut val = model.outer(&v);
    for _ in 0..50 {
        let c = grad_p(f, &model.outer_grad(&v));
        let q = set.maximize_linear(&c, p.as_slice(), &mut warm)?;
        let vq = f * DVector::from_column_slice(q.as_slice());
        let val_q = model.outer(&vq);
        if val_q <= val + 1e-15 * val.abs().max(1.0) {
            break;
        }
        p = q;
        v = vq;
        val = val_q;
    }
    Ok(p)
}

/// Result of [`alternate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlternateOutcome {
    pub state: MinimaxState,
    pub outer_iterations: usize,
}

/// Alternates [`step_min_x`] and [`step_max_p`] until the x-residual is below
/// `tol_x` and the inner maximization improves by at most `tol_p`.
pub fn alternate<O: MinimaxObjective + ?Sized>(
    model: &O,
    cfg: &SolverConfig,
    p0: WeightVector,
) -> Result<AlternateOutcome> {
    cfg.validate()?;
    let set = model.ambiguity();
    if p0.len() != set.len() || !set.member(p0.as_slice())? {
        return Err(Error::InvalidArgument("initial weights are not in the ambiguity set".into()));
    }
    let bx = model.x_box();
    let x0 = match &cfg.x0 {
        Some(x) if x.len() == bx.dim() => bx.project(x),
        Some(x) => {
            return Err(Error::Dimension(format!(
                "x0 has length {}, X has dimension {}",
                x.len(),
                bx.dim()
            )))
        }
        None => bx.project(&model.initial_x()),
    };
    let mut state = make_state(model, x0, p0, cfg)?;
    let mut best: Option<MinimaxState> = None;

    for j in 1..=cfg.max_outer {
        let (mut at_x, report) = step_min_x(model, &state, cfg)?;
        at_x.iteration = j;
        let (ascended, improvement) = step_max_p(model, &at_x, cfg)?;
        at_x.residual_p = improvement;
        at_x.max_value = ascended.max_value;
        log::debug!(
            "outer {j}: value {:.6e}, max {:.6e}, res_x {:.2e}, improvement {:.2e}",
            at_x.value,
            at_x.max_value,
            at_x.residual_x,
            improvement
        );
        if at_x.residual_x <= cfg.tol_x && improvement <= cfg.tol_p {
            at_x.status = RunStatus::Converged;
            return Ok(AlternateOutcome {
                state: at_x,
                outer_iterations: j,
            });
        }
        if best.as_ref().map_or(true, |b| at_x.max_value < b.max_value) {
            best = Some(at_x.clone());
        }
        if report.stalled && improvement <= cfg.tol_p {
            at_x.status = RunStatus::Stalled;
            return Ok(AlternateOutcome {
                state: at_x,
                outer_iterations: j,
            });
        }
        state = ascended;
        state.residual_x = at_x.residual_x;
        state.iteration = j;
    }
    let mut state = best.unwrap_or(state);
    state.status = RunStatus::BudgetExhausted;
    Ok(AlternateOutcome {
        state,
        outer_iterations: cfg.max_outer,
    })
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub k: usize,
    pub eta: f64,
    pub value: f64,
    pub x_err: Option<f64>,
    pub res_x: f64,
    pub res_p: f64,
    pub iters: usize,
    pub seconds: f64,
    pub status: String,
    #[serde(skip)]
    pub state: Option<MinimaxState>,
}

/// Runs [`alternate`] for every `(ε, k, η)` triple, in `ε`-major order.
///
/// `family` builds the model and initial weights for a triple. Rows are
/// computed on up to `jobs` threads; their order does not depend on `jobs`.
pub fn schedule_solve<O, F>(
    family: F,
    eps_list: &[f64],
    k_list: &[usize],
    eta_list: &[f64],
    cfg: &SolverConfig,
    reference_x: Option<&[f64]>,
    jobs: usize,
) -> Result<Vec<SweepRow>>
where
    O: MinimaxObjective,
    F: Fn(f64, usize, f64) -> Result<(O, WeightVector)> + Sync,
{
    if eps_list.is_empty() || k_list.is_empty() || eta_list.is_empty() {
        return Err(Error::Empty("sweep axes must be nonempty".into()));
    }
    let triples: Vec<(f64, usize, f64)> = eps_list
        .iter()
        .flat_map(|&e| k_list.iter().flat_map(move |&k| eta_list.iter().map(move |&h| (e, k, h))))
        .collect();
    let run = |&(eps, k, eta): &(f64, usize, f64)| -> SweepRow {
        let started = Instant::now();
        let outcome = family(eps, k, eta).and_then(|(model, p0)| alternate(&model, cfg, p0));
        let seconds = started.elapsed().as_secs_f64();
        match outcome {
            Ok(out) => {
                let s = out.state;
                let x_err = reference_x.map(|r| {
                    s.x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                });
                SweepRow {
                    eps,
                    k,
                    eta,
                    value: s.max_value,
                    x_err,
                    res_x: s.residual_x,
                    res_p: s.residual_p,
                    iters: out.outer_iterations,
                    seconds,
                    status: serde_json::to_value(s.status)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                    state: Some(s),
                }
            }
            Err(e) => SweepRow {
                eps,
                k,
                eta,
                value: f64::NAN,
                x_err: None,
                res_x: f64::NAN,
                res_p: f64::NAN,
                iters: 0,
                seconds,
                status: format!("error: {e}"),
                state: None,
            },
        }
    };
    if jobs <= 1 {
        return Ok(triples.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| triples.par_iter().map(run).collect()))
}

pub const SWEEP_HEADER: [&str; 10] = [
    "eps", "k", "eta", "value", "x_err", "res_x", "res_p", "iters", "seconds", "status",
];

/// Renders a sweep table as CSV. Wall times are written only when
/// `include_timing` is set, so the default output is reproducible byte for byte.
pub fn sweep_csv(rows: &[SweepRow], include_timing: bool) -> String {
    let mut out = SWEEP_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let x_err = r.x_err.map(|v| format!("{v:?}")).unwrap_or_default();
        let seconds = if include_timing { format!("{:?}", r.seconds) } else { String::new() };
        let status = if r.status.contains([',', '"', '\n']) {
            format!("\"{}\"", r.status.replace('"', "\"\""))
        } else {
            r.status.clone()
        };
        out.push_str(&format!(
            "{:?},{},{:?},{:?},{},{:?},{:?},{},{},{}\n",
            r.eps, r.k, r.eta, r.value, x_err, r.res_x, r.res_p, r.iters, seconds, status
        ));
    }
    out
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{MeanBallSet, SampleSet};

    /// θ(x) = ½‖x‖², F(x) p = (s·p) with fixed column values, h(v) = (v − b)².
    struct Toy {
        bx: BoxDomain,
        set: DiscreteAmbiguitySet,
        cols: Vec<f64>,
        b: f64,
    }

    impl Toy {
        fn new(cols: Vec<f64>, eta: f64) -> Self {
            let k = cols.len();
            let pts: Vec<Vec<f64>> = (0..k).map(|i| vec![-1.0 + 2.0 * i as f64 / (k - 1).max(1) as f64]).collect();
            let samples = SampleSet::new(pts, BoxDomain::cube(1, -1.0, 1.0)).unwrap();
            let set = DiscreteAmbiguitySet::new(samples, MeanBallSet::new(vec![0.0], eta).unwrap()).unwrap();
            Self {
                bx: BoxDomain::cube(1, -2.0, 2.0),
                set,
                cols,
                b: 0.0,
            }
        }
    }

    impl MinimaxObjective for Toy {
        fn x_box(&self) -> &BoxDomain {
            &self.bx
        }
        fn ambiguity(&self) -> &DiscreteAmbiguitySet {
            &self.set
        }
        fn image_dim(&self) -> usize {
            1
        }
        fn theta(&self, x: &[f64]) -> f64 {
            0.5 * x[0] * x[0]
        }
        fn image_matrix(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(1, self.cols.len(), &self.cols))
        }
        fn outer(&self, v: &DVector<f64>) -> f64 {
            (v[0] - self.b).powi(2)
        }
        fn outer_grad(&self, v: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 2.0 * (v[0] - self.b))
        }
    }

    #[test]
    fn quadratic_gradient_is_exact_enough() {
        let toy = Toy::new(vec![0.0, 0.0], 1.0);
        let p = [0.5, 0.5];
        let g = grad_x(&toy, &[0.7], &p, 1e-6, DifferenceMode::Forward).unwrap();
        assert!((g[0] - 0.7).abs() < 1e-5);
        let g = grad_x(&toy, &[2.0], &p, 1e-6, DifferenceMode::Central).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-5);
        assert!(evaluate_objective(&toy, &[3.0], &p).is_err());
    }

    #[test]
    fn min_step_reaches_origin() {
        let toy = Toy::new(vec![0.0, 0.0], 1.0);
        let cfg = SolverConfig::default();
        let state = make_state(&toy, vec![1.0], WeightVector::uniform(2), &cfg).unwrap();
        let (next, report) = step_min_x(&toy, &state, &cfg).unwrap();
        assert!(next.x[0].abs() <= 1e-4, "{:?}", next.x);
        assert!(!report.stalled);
        let (again, rep2) = step_min_x(&toy, &next, &cfg).unwrap();
        assert_eq!(again.x, next.x);
        assert_eq!(rep2.iterations, 0);
    }

    #[test]
    fn max_step_picks_interval_endpoint() {
        // Convex in p on a segment: maximum at a vertex of the simplex.
        let toy = Toy::new(vec![0.3, -0.8], 100.0);
        let cfg = SolverConfig::default();
        let state = make_state(&toy, vec![0.0], WeightVector::uniform(2), &cfg).unwrap();
        let (next, gain) = step_max_p(&toy, &state, &cfg).unwrap();
        assert_eq!(next.p.as_slice(), &[0.0, 1.0]);
        assert!((next.max_value - 0.64).abs() < 1e-12);
        assert!(gain > 0.0);
    }

    #[test]
    fn constant_image_leaves_p_alone() {
        let toy = Toy::new(vec![0.4, 0.4, 0.4], 1.0);
        let cfg = SolverConfig::default();
        let state = make_state(&toy, vec![0.0], WeightVector::uniform(3), &cfg).unwrap();
        let (next, gain) = step_max_p(&toy, &state, &cfg).unwrap();
        assert_eq!(gain, 0.0);
        assert_eq!(next.p, state.p);
    }

    #[test]
    fn alternate_converges_in_one_round_when_p_is_irrelevant() {
        let toy = Toy::new(vec![0.0, 0.0], 1.0);
        let cfg = SolverConfig {
            x0: Some(vec![1.5]),
            ..Default::default()
        };
        let out = alternate(&toy, &cfg, WeightVector::uniform(2)).unwrap();
        assert_eq!(out.outer_iterations, 1);
        assert_eq!(out.state.status, RunStatus::Converged);
        assert!(out.state.residual_x <= 1e-4);
    }

    #[test]
    fn csv_is_stable() {
        let row = SweepRow {
            eps: 0.1,
            k: 25,
            eta: 0.5,
            value: 0.25,
            x_err: Some(0.125),
            res_x: 1e-5,
            res_p: 0.0,
            iters: 3,
            seconds: 1.5,
            status: "converged".into(),
            state: None,
        };
        let text = sweep_csv(&[row.clone()], false);
        assert_eq!(
            text,
            "eps,k,eta,value,x_err,res_x,res_p,iters,seconds,status\n0.1,25,0.5,0.25,0.125,1e-5,0.0,3,,converged\n"
        );
        assert!(sweep_csv(&[row], true).contains(",1.5,"));
    }
}
