//! Voronoi discretization and exact order-1 Wasserstein distances between
//! discrete distributions.

use std::collections::VecDeque;
use std::path::Path;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;

use crate::ambiguity::SampleSet;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};

pub const WEIGHT_TOL: f64 = 1e-10;
pub const DEFAULT_PROBE_RESOLUTION: usize = 401;
const MAX_PROBES: usize = 50_000_000;
/// Largest `n × m` solved by the dense LP fallback.
const DENSE_FALLBACK_CELLS: usize = 50 * 50;

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("distribution needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let nu = atoms[0].len();
        if nu == 0 || atoms.iter().any(|a| a.len() != nu) {
            return Err(Error::Dimension("atoms must share a positive dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[a].partial_cmp(&atoms[b]).unwrap());
        if order.windows(2).any(|w| atoms[w[0]] == atoms[w[1]]) {
            return Err(Error::InvalidArgument("atoms must be pairwise distinct".into()));
        }
        Ok(Self { atoms, weights })
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nu(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nu()];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for (mj, aj) in m.iter_mut().zip(a) {
                *mj += w * aj;
            }
        }
        m
    }

    /// Reads `coordinate_1, ..., coordinate_nu, weight` rows.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let cols = headers.len();
        if cols < 2 || &headers[cols - 1] != "weight" {
            return Err(Error::Parse("expected columns coordinate_1..coordinate_nu, weight".into()));
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(Error::Parse("ragged distribution CSV".into()));
            }
            weights.push(vals[cols - 1]);
            atoms.push(vals[..cols - 1].to_vec());
        }
        Self::new(atoms, weights)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.nu()).map(|j| format!("coordinate_{j}")).collect();
        header.push("weight".into());
        wtr.write_record(&header)?;
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            let row: Vec<String> = a.iter().chain(std::iter::once(w)).map(|v| format!("{v:?}")).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

fn nearest(samples: &SampleSet, x: &[f64]) -> (usize, f64) {
    let q = samples.matrix();
    let mut best = (0, f64::INFINITY);
    for (i, col) in q.column_iter().enumerate() {
        let d: f64 = col.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index of the nearest sample, ties broken toward the lowest index.
pub fn voronoi_assign(samples: &SampleSet, x: &[f64]) -> Result<usize> {
    if x.len() != samples.nu() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, samples have {}",
            x.len(),
            samples.nu()
        )));
    }
    if !samples.domain().contains(x, 1e-12) {
        return Err(Error::OutsideDomain(format!("{x:?}")));
    }
    Ok(nearest(samples, x).0)
}

/// Fill distance estimate: the probe-grid value and the box-corner value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FillDistance {
    pub probe: f64,
    pub corner: f64,
}

impl FillDistance {
    pub fn value(&self) -> f64 {
        self.probe.max(self.corner)
    }
}

fn probe_count(res: usize, nu: usize) -> Result<usize> {
    (0..nu)
        .try_fold(1usize, |acc, _| acc.checked_mul(res))
        .filter(|n| *n <= MAX_PROBES)
        .ok_or_else(|| Error::InvalidArgument(format!("probe grid {res}^{nu} is too large")))
}

/// Calls `f` on every point of a tensor grid whose axis `j` takes `coord(j, idx)`.
fn for_each_probe(res: usize, nu: usize, coord: impl Fn(usize, usize) -> f64, mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; nu];
    let mut x: Vec<f64> = (0..nu).map(|j| coord(j, 0)).collect();
    loop {
        f(&x);
        let mut j = 0;
        loop {
            if j == nu {
                return;
            }
            idx[j] += 1;
            if idx[j] < res {
                x[j] = coord(j, idx[j]);
                break;
            }
            idx[j] = 0;
            x[j] = coord(j, 0);
            j += 1;
        }
    }
}

/// Largest distance from the domain to the nearest sample, probed on a
/// uniform grid that includes the box corners.
pub fn fill_distance(samples: &SampleSet, probe_resolution: usize) -> Result<FillDistance> {
    if probe_resolution < 2 {
        return Err(Error::InvalidArgument("probe resolution must be at least 2".into()));
    }
    let dom = samples.domain();
    let nu = samples.nu();
    probe_count(probe_resolution, nu)?;
    let span = (probe_resolution - 1) as f64;
    let mut probe: f64 = 0.0;
    for_each_probe(
        probe_resolution,
        nu,
        |j, i| dom.lo[j] + (dom.hi[j] - dom.lo[j]) * i as f64 / span,
        |x| probe = probe.max(nearest(samples, x).1),
    );
    let corner = dom
        .corners()
        .iter()
        .map(|c| nearest(samples, c).1)
        .fold(0.0, f64::max);
    Ok(FillDistance {
        probe: probe.sqrt(),
        corner: corner.sqrt(),
    })
}

/// Voronoi cell masses of the uniform distribution on the domain, from a
/// midpoint probe grid with `resolution` points per axis.
pub fn voronoi_cell_masses(samples: &SampleSet, resolution: usize) -> Result<Vec<f64>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let dom: &BoxDomain = samples.domain();
    let nu = samples.nu();
    let total = probe_count(resolution, nu)?;
    let mut counts = vec![0usize; samples.len()];
    for_each_probe(
        resolution,
        nu,
        |j, i| dom.lo[j] + (dom.hi[j] - dom.lo[j]) * (i as f64 + 0.5) / resolution as f64,
        |x| counts[nearest(samples, x).0] += 1,
    );
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Pushes each atom's mass onto the sample whose Voronoi cell contains it.
pub fn voronoi_projection(p: &DiscreteDistribution, samples: &SampleSet) -> Result<DiscreteDistribution> {
    let mut weights = vec![0.0; samples.len()];
    for (a, w) in p.atoms.iter().zip(&p.weights) {
        weights[voronoi_assign(samples, a)?] += w;
    }
    let atoms = (0..samples.len()).map(|i| samples.point(i)).collect();
    Ok(DiscreteDistribution { atoms, weights })
}

/// Order-1 Wasserstein distance with Euclidean ground cost.
pub fn wasserstein(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.nu() != q.nu() {
        return Err(Error::Dimension(format!(
            "distributions live in R^{} and R^{}",
            p.nu(),
            q.nu()
        )));
    }
    let (supply, src) = positive_part(p);
    let (demand, dst) = positive_part(q);
    let cost = DMatrix::from_fn(src.len(), dst.len(), |i, j| dist(src[i], dst[j]));
    match network_simplex(&supply, &demand, &cost) {
        Some(v) => Ok(v),
        None if src.len() * dst.len() <= DENSE_FALLBACK_CELLS => {
            log::debug!("network simplex gave up; using the dense LP");
            dense_transport_lp(&supply, &demand, &cost)
        }
        None => Err(Error::Transport("network simplex did not terminate".into())),
    }
}

/// The same distance computed by a general-purpose dense LP solver.
pub fn wasserstein_dense_lp(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.nu() != q.nu() {
        return Err(Error::Dimension("distributions differ in dimension".into()));
    }
    let (supply, src) = positive_part(p);
    let (demand, dst) = positive_part(q);
    let cost = DMatrix::from_fn(src.len(), dst.len(), |i, j| dist(src[i], dst[j]));
    dense_transport_lp(&supply, &demand, &cost)
}

fn positive_part(p: &DiscreteDistribution) -> (Vec<f64>, Vec<&[f64]>) {
    let total: f64 = p.weights.iter().sum();
    p.atoms
        .iter()
        .zip(&p.weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| (w / total, a.as_slice()))
        .unzip()
}

fn dense_transport_lp(supply: &[f64], demand: &[f64], cost: &DMatrix<f64>) -> Result<f64> {
    let (n, m) = (supply.len(), demand.len());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..n)
        .map(|i| (0..m).map(|j| lp.add_var(cost[(i, j)], (0.0, f64::INFINITY))).collect())
        .collect();
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i][j], 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, supply[i]);
    }
    // One column constraint is implied by the others.
    for j in 0..m.saturating_sub(1) {
        let col: Vec<_> = (0..n).map(|i| (vars[i][j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, demand[j]);
    }
    let sol = lp.solve().map_err(|e| Error::Transport(e.to_string()))?;
    Ok(sol.objective())
}

/// Transportation simplex on the bipartite supply/demand graph.
///
/// Keeps a spanning-tree basis of `n + m − 1` cells (zero-flow cells allowed),
/// prices it with node potentials and pivots along the tree cycle closed by
/// the entering cell. Switches to Bland's rule after a run of degenerate
/// pivots. Returns `None` if the pivot budget runs out.
fn network_simplex(supply: &[f64], demand: &[f64], cost: &DMatrix<f64>) -> Option<f64> {
    let (n, m) = (supply.len(), demand.len());
    let mut flow = DMatrix::<f64>::zeros(n, m);
    let mut basic = vec![vec![false; m]; n];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);

    // Northwest-corner start; one step per cell keeps the basis a tree.
    let (mut a, mut b) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]);
        flow[(i, j)] = x;
        basic[i][j] = true;
        basis.push((i, j));
        a[i] -= x;
        b[j] -= x;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if j == m - 1 || (i < n - 1 && a[i] <= b[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);

    let scale = cost.amax().max(1.0);
    let tol = 1e-12 * scale;
    let max_pivots = 200 * (n + m) * (n + m) + 1000;
    let mut degenerate_run = 0usize;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    // Nodes: rows 0..n, columns n..n+m.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];

    for _ in 0..max_pivots {
        for l in adj.iter_mut() {
            l.clear();
        }
        for &(r, c) in &basis {
            adj[r].push(n + c);
            adj[n + c].push(r);
        }
        // Potentials with u_0 = 0 and c_rc = u_r + v_c on the tree.
        let mut seen = vec![false; n + m];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                if node < n {
                    v[next - n] = cost[(node, next - n)] - u[node];
                } else {
                    u[next] = cost[(next, node - n)] - v[node - n];
                }
                queue.push_back(next);
            }
        }
        if seen.iter().any(|s| !s) {
            return None;
        }

        let bland = degenerate_run > n + m;
        let mut entering = None;
        let mut best = -tol;
        'scan: for r in 0..n {
            for c in 0..m {
                if basic[r][c] {
                    continue;
                }
                let red = cost[(r, c)] - u[r] - v[c];
                if red < best {
                    entering = Some((r, c));
                    if bland {
                        break 'scan;
                    }
                    best = red;
                }
            }
        }
        let Some((er, ec)) = entering else {
            let total = basis.iter().map(|&(r, c)| flow[(r, c)] * cost[(r, c)]).sum();
            return Some(total);
        };

        // Tree path from column node ec back to row node er.
        let mut parent = vec![usize::MAX; n + m];
        let mut queue = VecDeque::from([er]);
        parent[er] = er;
        while let Some(node) = queue.pop_front() {
            if node == n + ec {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = n + ec;
        while node != er {
            let prev = parent[node];
            path.push(if prev < n { (prev, node - n) } else { (node, prev - n) });
            node = prev;
        }
        // Cells along the cycle alternate −, +, −, ... starting next to the entering cell.
        let mut theta = f64::INFINITY;
        let mut leave = None;
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                let f = flow[(r, c)];
                let better = match leave {
                    None => true,
                    Some((lr, lc)) => f < theta || (f == theta && (r, c) < (lr, lc)),
                };
                if better {
                    theta = f;
                    leave = Some((r, c));
                }
            }
        }
        let (lr, lc) = leave?;
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                flow[(r, c)] -= theta;
            } else {
                flow[(r, c)] += theta;
            }
        }
        flow[(er, ec)] = theta;
        flow[(lr, lc)] = 0.0;
        basic[lr][lc] = false;
        basic[er][ec] = true;
        let pos = basis.iter().position(|&cell| cell == (lr, lc))?;
        basis[pos] = (er, ec);
        degenerate_run = if theta > 0.0 { 0 } else { degenerate_run + 1 };
    }
    None
}

/// `sup_{P ∈ ps} inf_{Q ∈ qs} W(P, Q)`.
pub fn deviation(ps: &[DiscreteDistribution], qs: &[DiscreteDistribution]) -> Result<f64> {
    if ps.is_empty() || qs.is_empty() {
        return Err(Error::Empty("deviation needs nonempty families".into()));
    }
    let mut sup: f64 = 0.0;
    for p in ps {
        let mut inf = f64::INFINITY;
        for q in qs {
            inf = inf.min(wasserstein(p, q)?);
        }
        sup = sup.max(inf);
    }
    Ok(sup)
}
