use std::fs;
use std::path::{Path, PathBuf};

use drosc::ambiguity::{nearest_mean, slater_witness, HullDistance, MeanBallSet, SampleSet, SlaterWitness};
use drosc::lcp::{natural_residual, regularize, solve_pd_lcp, LcpDump, LcpInstance, SOLVE_TOL};
use drosc::minimax::{
    alternate, schedule_solve, sweep_csv, write_atomic, MinimaxObjective, MinimaxState, RunStatus,
    SolverConfig, SweepRow,
};
use drosc::pcd::{make_grid_samples, pcd_objective, PcdConfig};
use drosc::stationarity::{certify_block_stationarity, IndexPartition, StationarityCertificate};
use drosc::transport::{fill_distance, voronoi_cell_masses, voronoi_projection, wasserstein, DiscreteDistribution};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const STATE_FILE: &str = "state.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const INFEASIBILITY_FILE: &str = "infeasibility.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Probe grid used to estimate Voronoi cell masses and fill distances.
const PROBE_RESOLUTION: usize = 401;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub k: Option<Vec<usize>>,
    pub eta: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.eps {
            cfg.eps_list = v.clone();
        }
        if let Some(v) = &self.k {
            cfg.k_list = v.clone();
        }
        if let Some(v) = &self.eta {
            cfg.eta_list = v.clone();
        }
        if let Some(s) = self.seed {
            cfg.solver.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
    }
}

/// Loads the config (defaults when no file is given) and applies overrides.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, to_json(value)?.as_bytes())?;
    Ok(())
}

/// Output of `solve-lcp`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcpReport {
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub residual: f64,
    pub partition: IndexPartition,
}

/// Solves the instance in `input`, regularized by `eps` when given.
///
/// The report is returned even when the residual misses the tolerance, so
/// the caller can print it before failing.
pub fn cmd_solve_lcp(input: &Path, eps: Option<f64>) -> CliResult<(LcpReport, bool)> {
    let text = fs::read_to_string(input).map_err(|e| CliError::Parse(format!("{}: {e}", input.display())))?;
    let dump: LcpDump = serde_json::from_str(&text)?;
    let raw = dump.instance().map_err(|e| CliError::Parse(e.to_string()))?;
    let inst = match eps {
        Some(e) => {
            let tagged = LcpInstance::monotone(raw.matrix().clone(), raw.q().clone()).unwrap_or(raw);
            regularize(&tagged, e).map_err(|e| CliError::Parse(e.to_string()))?
        }
        None => raw,
    };
    let sol = solve_pd_lcp(&inst)?;
    let residual = natural_residual(&inst, &sol.y)?;
    let report = LcpReport {
        y: sol.y.iter().copied().collect(),
        w: sol.w.iter().copied().collect(),
        residual,
        partition: sol.partition,
    };
    Ok((report, residual <= SOLVE_TOL))
}

/// Everything needed to rebuild the model behind a state, written as `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Model data with `eta` set to the value used.
    pub model: PcdConfig,
    pub eps: f64,
    pub samples: Vec<Vec<f64>>,
    pub solver: SolverConfig,
    pub reference_x: Option<Vec<f64>>,
    pub x_err: Option<f64>,
    pub outer_iterations: usize,
    pub state: MinimaxState,
}

/// Written instead of a state when `𝒫_k` is empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub eta: f64,
    pub k: usize,
    /// Voronoi cell masses of the uniform distribution on the domain, tested against the ball.
    pub slater: SlaterWitness,
    pub hull: HullDistance,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub certificate: StationarityCertificate,
    pub dir: PathBuf,
}

/// Runs the alternating method once for the first `(ε, k, η)` of the config
/// and writes `state.json` and `certificate.json` into the output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunOutcome> {
    let (eps, k, eta) = (cfg.eps_list[0], cfg.k_list[0], cfg.eta_list[0]);
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::Parse(format!("{}: {e}", dir.display())))?;

    let samples = cfg.samples_for(k)?;
    let hull = nearest_mean(&samples, &cfg.model.mu0);
    if hull.lower > eta {
        let ball = MeanBallSet::new(cfg.model.mu0.clone(), eta)?;
        let masses = voronoi_cell_masses(&samples, PROBE_RESOLUTION)?;
        let report = InfeasibilityReport {
            eta,
            k: samples.len(),
            slater: slater_witness(&samples, &ball, &masses)?,
            hull,
        };
        write_json(&dir.join(INFEASIBILITY_FILE), &report)?;
        return Err(CliError::Solve(format!(
            "ambiguity set is empty for eta = {eta}; report written to {}",
            dir.join(INFEASIBILITY_FILE).display()
        )));
    }

    let model = cfg.objective(eps, k, eta)?;
    let p0 = model.initial_weights()?;
    let out = alternate(&model, &cfg.solver, p0)?;
    let certificate = certify_block_stationarity(
        &model,
        &out.state.x,
        out.state.p.as_slice(),
        cfg.solver.fd_step,
        cfg.solver.tol_x,
    )?;
    let x_err = cfg.reference_x.as_ref().map(|r| distance(&out.state.x, r));
    let record = RunRecord {
        model: model.config().clone(),
        eps,
        samples: (0..samples.len()).map(|i| samples.point(i)).collect(),
        solver: cfg.solver.clone(),
        reference_x: cfg.reference_x.clone(),
        x_err,
        outer_iterations: out.outer_iterations,
        state: out.state,
    };
    write_json(&dir.join(STATE_FILE), &record)?;
    write_json(&dir.join(CERTIFICATE_FILE), &certificate)?;
    if record.state.status == RunStatus::BudgetExhausted {
        return Err(CliError::Budget(format!(
            "no convergence within {} outer iterations; best iterate written to {}",
            cfg.solver.max_outer,
            dir.display()
        )));
    }
    Ok(RunOutcome { record, certificate, dir })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Re-derives the certificate of a saved state without reusing anything the
/// producing run computed.
pub fn cmd_certify(state_path: &Path) -> CliResult<StationarityCertificate> {
    let text = fs::read_to_string(state_path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", state_path.display())))?;
    let record: RunRecord = serde_json::from_str(&text)?;
    let samples = SampleSet::new(record.samples.clone(), record.model.domain.clone())
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let model = pcd_objective(&record.model, samples, record.eps).map_err(|e| CliError::Parse(e.to_string()))?;
    if record.state.x.len() != model.x_box().dim() || record.state.p.len() != model.ambiguity().len() {
        return Err(CliError::Parse("state does not match its model".into()));
    }
    Ok(certify_block_stationarity(
        &model,
        &record.state.x,
        record.state.p.as_slice(),
        record.solver.fd_step,
        record.solver.tol_x,
    )?)
}

/// Runs every `(ε, k, η)` triple and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize, timings: bool) -> CliResult<(Vec<SweepRow>, String)> {
    let rows = schedule_solve(
        |eps, k, eta| {
            let model = cfg.objective(eps, k, eta)?;
            let p0 = model.initial_weights()?;
            Ok((model, p0))
        },
        &cfg.eps_list,
        &cfg.k_list,
        &cfg.eta_list,
        &cfg.solver,
        cfg.reference_x.as_deref(),
        jobs.max(1),
    )?;
    let csv = sweep_csv(&rows, timings);
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Parse(format!("{}: {e}", cfg.output_dir.display())))?;
    write_atomic(&cfg.output_dir.join(SWEEP_FILE), csv.as_bytes())?;
    Ok((rows, csv))
}

/// Output of `transport`; fields are present only for the inputs given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransportReport {
    /// `D_W(P, Q)` for two distribution files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wasserstein: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// `β_k` of the midpoint grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill_distance: Option<f64>,
    /// `D_W(P, P_k)` with `P_k` the Voronoi projection of `P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_distance: Option<f64>,
    /// `β_k − D_W(P, P_k)`, never below `−1e-10` when the bound holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

pub fn cmd_transport(p: &Path, q: Option<&Path>, k: Option<usize>, model: &PcdConfig) -> CliResult<TransportReport> {
    if q.is_none() && k.is_none() {
        return Err(CliError::Parse("transport needs a second distribution or a sample count".into()));
    }
    let p = DiscreteDistribution::read_csv(p).map_err(|e| CliError::Parse(e.to_string()))?;
    let mut report = TransportReport::default();
    if let Some(q) = q {
        let q = DiscreteDistribution::read_csv(q).map_err(|e| CliError::Parse(e.to_string()))?;
        report.wasserstein = Some(wasserstein(&p, &q)?);
    }
    if let Some(k) = k {
        let samples = make_grid_samples(model, k).map_err(|e| CliError::Parse(e.to_string()))?;
        let beta = fill_distance(&samples, PROBE_RESOLUTION)?.value();
        let projected = voronoi_projection(&p, &samples)?;
        let d = wasserstein(&p, &projected)?;
        report.k = Some(k);
        report.fill_distance = Some(beta);
        report.projection_distance = Some(d);
        report.margin = Some(beta - d);
    }
    Ok(report)
}

/// Pretty JSON with a trailing newline, as written to disk.
pub fn render<T: Serialize>(value: &T) -> CliResult<String> {
    to_json(value)
}
