//! Protocol landscapes over target angles and the metrics defined on them.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::GaussianPolicy;
use crate::nv::{ControlStep, NvModel, NvParams, Protocol, TargetAngles};
use crate::rl::env::Environment;
use crate::rl::trainer::greedy_episode;
use crate::scalar::Real;

/// Maps a protocol to step-major `(Ω1, Ω2, Δt, ...)` in `[-1/2, 1/2]`.
pub fn normalize_protocol<R: Real>(protocol: &Protocol<R>, params: &NvParams) -> Result<Vec<R>> {
    protocol.validate(params)?;
    let (wlo, whi) = params.omega_bounds::<R>();
    let (tlo, thi) = params.dt_bounds::<R>();
    let half = R::lit(0.5);
    let norm = |x: R, lo: R, hi: R| ((x - lo) / (hi - lo) - half).max(-half).min(half);
    Ok(protocol
        .steps
        .iter()
        .flat_map(|s| [norm(s.omega1, wlo, whi), norm(s.omega2, wlo, whi), norm(s.dt, tlo, thi)])
        .collect())
}

pub fn denormalize_protocol<R: Real>(normalized: &[R], params: &NvParams) -> Result<Protocol<R>> {
    if normalized.len() != 3 * params.n_steps {
        return Err(Error::DimensionMismatch {
            expected: 3 * params.n_steps,
            got: normalized.len(),
        });
    }
    let half = R::lit(0.5);
    let slack = R::lit(1e-12);
    if let Some(x) = normalized.iter().find(|x| !(x.abs() <= half + slack)) {
        return Err(invalid(format!("normalized component {x} outside [-0.5, 0.5]")));
    }
    let (wlo, whi) = params.omega_bounds::<R>();
    let (tlo, thi) = params.dt_bounds::<R>();
    let map = |x: R, lo: R, hi: R| lo + (x.max(-half).min(half) + half) * (hi - lo);
    Ok(Protocol::new(
        normalized
            .chunks_exact(3)
            .map(|c| ControlStep {
                omega1: map(c[0], wlo, whi),
                omega2: map(c[1], wlo, whi),
                dt: map(c[2], tlo, thi),
            })
            .collect(),
    ))
}

/// L1 distance between normalized protocols.
pub fn protocol_distance<R: Real>(a: &[R], b: &[R]) -> Result<R> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum())
}

/// Inclusive `n_theta x n_phi` grid; cells are stored θ-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

fn linspace(n: usize, (lo, hi): (f64, f64), k: usize) -> f64 {
    if n <= 1 {
        lo
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

impl GridSpec {
    pub fn sphere(n_theta: usize, n_phi: usize) -> Self {
        Self {
            n_theta,
            n_phi,
            theta: (0.0, std::f64::consts::PI),
            phi: (0.0, std::f64::consts::TAU),
        }
    }

    pub fn equator(n_phi: usize) -> Self {
        let h = std::f64::consts::FRAC_PI_2;
        Self {
            n_theta: 1,
            n_phi,
            theta: (h, h),
            phi: (0.0, std::f64::consts::TAU),
        }
    }

    pub fn from_config(g: &crate::config::GridConfig) -> Self {
        Self {
            n_theta: g.n_theta,
            n_phi: g.n_phi,
            theta: (g.theta_min, g.theta_max),
            phi: (g.phi_min, g.phi_max),
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_at(&self, i: usize) -> f64 {
        linspace(self.n_theta, self.theta, i)
    }

    pub fn phi_at(&self, j: usize) -> f64 {
        linspace(self.n_phi, self.phi, j)
    }

    pub fn angles(&self, index: usize) -> (f64, f64) {
        (self.theta_at(index / self.n_phi), self.phi_at(index % self.n_phi))
    }

    pub fn theta_step(&self) -> f64 {
        if self.n_theta > 1 {
            (self.theta.1 - self.theta.0) / (self.n_theta - 1) as f64
        } else {
            0.0
        }
    }

    pub fn phi_step(&self) -> f64 {
        if self.n_phi > 1 {
            (self.phi.1 - self.phi.0) / (self.n_phi - 1) as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell<R> {
    pub theta: f64,
    pub phi: f64,
    pub fidelity: R,
    pub time: R,
    /// Normalized protocol, step-major.
    pub protocol: Vec<R>,
    #[serde(default)]
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid<R> {
    pub spec: GridSpec,
    pub source: String,
    pub cells: Vec<LandscapeCell<R>>,
}

/// Outcome of evaluating one target.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult<R> {
    pub fidelity: R,
    pub time: R,
    pub protocol: Vec<R>,
    pub fault: bool,
}

/// `(0..n).map(f)` on a pool of `workers` threads (1 = inline), in order.
pub fn par_map<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Runs `f` on every grid cell, on `workers` threads (1 = inline). Errors are
/// recorded as faulted cells with `F = 0`.
pub fn evaluate_cells<R, F>(spec: &GridSpec, workers: usize, source: &str, f: F) -> Result<LandscapeGrid<R>>
where
    R: Real,
    F: Fn(usize, f64, f64) -> Result<CellResult<R>> + Sync,
{
    let eval = |k: usize| {
        let (theta, phi) = spec.angles(k);
        let r = f(k, theta, phi).unwrap_or_else(|_| CellResult {
            fidelity: R::zero(),
            time: R::zero(),
            protocol: Vec::new(),
            fault: true,
        });
        LandscapeCell {
            theta,
            phi,
            fidelity: r.fidelity,
            time: r.time,
            protocol: r.protocol,
            fault: r.fault,
        }
    };
    let cells = par_map(spec.len(), workers, eval)?;
    Ok(LandscapeGrid {
        spec: *spec,
        source: source.to_string(),
        cells,
    })
}

/// Deterministic (`a = μ`) policy episode on every cell.
pub fn evaluate_landscape<R: Real, E: Environment<R> + ?Sized>(
    env: &E,
    policy: &GaussianPolicy<R>,
    spec: &GridSpec,
    workers: usize,
) -> Result<LandscapeGrid<R>> {
    evaluate_cells(spec, workers, "policy", |_, theta, phi| {
        let run = greedy_episode(env, policy, TargetAngles::new(R::lit(theta), R::lit(phi))?)?;
        Ok(CellResult {
            fidelity: run.fidelity,
            time: run.time,
            protocol: run.protocol,
            fault: run.fault.is_some(),
        })
    })
}

/// Replays every stored protocol under `params` (e.g. open dynamics).
pub fn reevaluate_landscape<R: Real>(grid: &LandscapeGrid<R>, params: NvParams, workers: usize) -> Result<LandscapeGrid<R>> {
    let model = NvModel::<R>::new(params)?;
    grid.check_complete()?;
    let source = format!("{}+{:?}", grid.source, params.mode).to_lowercase();
    evaluate_cells(&grid.spec, workers, &source, |k, theta, phi| {
        let cell = &grid.cells[k];
        let protocol = denormalize_protocol(&cell.protocol, &params)?;
        let run = model.run_protocol(&protocol, &model.initial_state())?;
        let target = model.target_state(TargetAngles::new(R::lit(theta), R::lit(phi))?)?;
        Ok(CellResult {
            fidelity: run.state.fidelity(&target)?,
            time: run.total_time,
            protocol: cell.protocol.clone(),
            fault: false,
        })
    })
}

impl<R: Real> LandscapeGrid<R> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn check_complete(&self) -> Result<()> {
        if self.cells.len() != self.spec.len() {
            return Err(invalid(format!(
                "landscape has {} cells, grid needs {}",
                self.cells.len(),
                self.spec.len()
            )));
        }
        let m = self.cells.first().map_or(0, |c| c.protocol.len());
        if self.cells.iter().any(|c| c.protocol.len() != m) {
            return Err(invalid("landscape protocols differ in length"));
        }
        Ok(())
    }

    pub fn cell(&self, i: usize, j: usize) -> &LandscapeCell<R> {
        &self.cells[i * self.spec.n_phi + j]
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.fidelity.as_f64()).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.time.as_f64()).collect()
    }

    pub fn mean_fidelity(&self) -> f64 {
        mean(&self.fidelities())
    }

    /// `theta, phi, F, T, p0, p1, ...` with a header row.
    pub fn to_csv(&self) -> String {
        let m = self.cells.first().map_or(0, |c| c.protocol.len());
        let mut s = String::from("theta,phi,F,T");
        for k in 0..m {
            let _ = write!(s, ",p{k}");
        }
        s.push('\n');
        for c in &self.cells {
            let _ = write!(s, "{},{},{},{}", c.theta, c.phi, c.fidelity, c.time);
            for p in &c.protocol {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
        s
    }
}

impl LandscapeGrid<f64> {
    /// Parses [`LandscapeGrid::to_csv`] output; the grid spec is inferred from
    /// the distinct angles.
    pub fn from_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty landscape csv".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..4] != ["theta", "phi", "F", "T"] {
            return Err(Error::Parse(format!("unexpected landscape header {header:?}")));
        }
        let mut cells = Vec::new();
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", n + 1)))?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!("row {} has {} columns, expected {}", n + 1, vals.len(), cols.len())));
            }
            cells.push(LandscapeCell {
                theta: vals[0],
                phi: vals[1],
                fidelity: vals[2],
                time: vals[3],
                protocol: vals[4..].to_vec(),
                fault: false,
            });
        }
        let distinct = |f: fn(&LandscapeCell<f64>) -> f64| {
            let mut v: Vec<f64> = cells.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let thetas = distinct(|c| c.theta);
        let phis = distinct(|c| c.phi);
        let spec = GridSpec {
            n_theta: thetas.len(),
            n_phi: phis.len(),
            theta: (thetas.first().copied().unwrap_or(0.0), thetas.last().copied().unwrap_or(0.0)),
            phi: (phis.first().copied().unwrap_or(0.0), phis.last().copied().unwrap_or(0.0)),
        };
        let grid = Self {
            spec,
            source: source.to_string(),
            cells,
        };
        grid.check_complete()?;
        Ok(grid)
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Per-cell `G = ‖∂_θ β‖₁ + ‖∂_φ β‖₁` (per radian) by central differences,
/// one-sided at the edges. With `periodic_phi` the φ axis wraps around; a
/// duplicated `2π` endpoint is treated as the same point as `0`. Axes with a
/// single point contribute nothing.
pub fn protocol_gradient<R: Real>(grid: &LandscapeGrid<R>, periodic_phi: bool) -> Result<Vec<R>> {
    grid.check_complete()?;
    let spec = grid.spec;
    if spec.len() < 2 {
        return Err(invalid("protocol gradient needs at least two grid cells"));
    }
    let (nt, np) = (spec.n_theta, spec.n_phi);
    let m = grid.cells[0].protocol.len();
    let full_circle = (spec.phi.1 - spec.phi.0 - std::f64::consts::TAU).abs() < 1e-9;
    let wrap = periodic_phi && np > 2;
    // number of distinct φ points on the circle when wrapping
    let ring = if wrap && full_circle { np - 1 } else { np };
    let dphi = if wrap && !full_circle {
        std::f64::consts::TAU / np as f64
    } else {
        spec.phi_step()
    };
    let dtheta = spec.theta_step();

    let diff = |a: &[R], b: &[R], h: f64| -> R {
        let h = R::lit(h);
        a.iter().zip(b).map(|(&x, &y)| ((x - y) / h).abs()).sum()
    };
    let mut out = Vec::with_capacity(spec.len());
    for i in 0..nt {
        for j in 0..np {
            let mut g = R::zero();
            if nt > 1 {
                let (lo, hi, span) = if i == 0 {
                    (0, 1, 1)
                } else if i == nt - 1 {
                    (nt - 2, nt - 1, 1)
                } else {
                    (i - 1, i + 1, 2)
                };
                g += diff(&grid.cell(hi, j).protocol, &grid.cell(lo, j).protocol, span as f64 * dtheta);
            }
            if np > 1 {
                let (lo, hi, span) = if wrap {
                    let jj = j % ring;
                    ((jj + ring - 1) % ring, (jj + 1) % ring, 2)
                } else if j == 0 {
                    (0, 1, 1)
                } else if j == np - 1 {
                    (np - 2, np - 1, 1)
                } else {
                    (j - 1, j + 1, 2)
                };
                g += diff(&grid.cell(i, hi).protocol, &grid.cell(i, lo).protocol, span as f64 * dphi);
            }
            debug_assert!(m == 0 || grid.cell(i, j).protocol.len() == m);
            out.push(g);
        }
    }
    Ok(out)
}

/// Symmetric L1 distance matrix in row-major grid order.
pub fn distance_matrix<R: Real>(grid: &LandscapeGrid<R>) -> Result<Vec<Vec<R>>> {
    grid.check_complete()?;
    let n = grid.len();
    let mut m = vec![vec![R::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = protocol_distance(&grid.cells[i].protocol, &grid.cells[j].protocol)?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

pub fn distance_matrix_csv<R: Real>(m: &[Vec<R>]) -> String {
    let mut s = String::new();
    for k in 0..m.len() {
        if k > 0 {
            s.push(',');
        }
        let _ = write!(s, "c{k}");
    }
    s.push('\n');
    for row in m {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Row index to target angles, written next to the distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceIndex {
    pub n: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub time: Vec<f64>,
}

impl DistanceIndex {
    pub fn new<R: Real>(grid: &LandscapeGrid<R>) -> Self {
        Self {
            n: grid.len(),
            n_theta: grid.spec.n_theta,
            n_phi: grid.spec.n_phi,
            theta: grid.cells.iter().map(|c| c.theta).collect(),
            phi: grid.cells.iter().map(|c| c.phi).collect(),
            time: grid.times(),
        }
    }
}

fn neighbours(spec: &GridSpec, k: usize) -> impl Iterator<Item = usize> + '_ {
    let (i, j) = (k / spec.n_phi, k % spec.n_phi);
    let up = (i > 0).then(|| k - spec.n_phi);
    let down = (i + 1 < spec.n_theta).then(|| k + spec.n_phi);
    let left = (j > 0).then(|| k - 1);
    let right = (j + 1 < spec.n_phi).then(|| k + 1);
    [up, down, left, right].into_iter().flatten()
}

/// Mean over cells of the variance of a field over the cell and its four
/// grid neighbours.
pub fn neighbour_scatter(spec: &GridSpec, field: &[f64]) -> f64 {
    let per_cell: Vec<f64> = (0..spec.len())
        .map(|k| {
            let vals: Vec<f64> = std::iter::once(k).chain(neighbours(spec, k)).map(|n| field[n]).collect();
            let mu = mean(&vals);
            vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / vals.len() as f64
        })
        .collect();
    mean(&per_cell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRegion {
    pub cells: Vec<usize>,
    pub median_time: f64,
}

/// Connected regions of the `T` landscape: four-neighbours join when their
/// times differ by at most `link_tol`. Regions smaller than `min_cells` are
/// dropped. Sorted by size, largest first.
pub fn time_regions(spec: &GridSpec, times: &[f64], link_tol: f64, min_cells: usize) -> Vec<TimeRegion> {
    let n = spec.len();
    let mut label = vec![usize::MAX; n];
    let mut regions = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = regions.len();
        let mut cells = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for nb in neighbours(spec, k) {
                if label[nb] == usize::MAX && (times[nb] - times[k]).abs() <= link_tol {
                    label[nb] = id;
                    cells.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        cells.sort_unstable();
        regions.push(cells);
    }
    let mut out: Vec<TimeRegion> = regions
        .into_iter()
        .filter(|c| c.len() >= min_cells)
        .map(|cells| {
            let mut t: Vec<f64> = cells.iter().map(|&k| times[k]).collect();
            t.sort_by(f64::total_cmp);
            TimeRegion {
                median_time: median_sorted(&t),
                cells,
            }
        })
        .collect();
    out.sort_by(|a, b| b.cells.len().cmp(&a.cells.len()));
    out
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest difference in median time between any two regions.
pub fn max_median_gap(regions: &[TimeRegion]) -> f64 {
    let lo = regions.iter().map(|r| r.median_time).fold(f64::INFINITY, f64::min);
    let hi = regions.iter().map(|r| r.median_time).fold(f64::NEG_INFINITY, f64::max);
    if regions.len() < 2 {
        0.0
    } else {
        hi - lo
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Summary statistics of one landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub source: String,
    pub cells: usize,
    pub mean_fidelity: f64,
    pub min_fidelity: f64,
    pub max_fidelity: f64,
    pub mean_time: f64,
    pub min_time: f64,
    pub max_time: f64,
    pub time_scatter: f64,
    pub faults: usize,
}

impl LandscapeSummary {
    pub fn new<R: Real>(grid: &LandscapeGrid<R>) -> Self {
        let f = grid.fidelities();
        let t = grid.times();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            source: grid.source.clone(),
            cells: grid.len(),
            mean_fidelity: mean(&f),
            min_fidelity: min(&f),
            max_fidelity: max(&f),
            mean_time: mean(&t),
            min_time: min(&t),
            max_time: max(&t),
            time_scatter: neighbour_scatter(&grid.spec, &t),
            faults: grid.cells.iter().filter(|c| c.fault).count(),
        }
    }
}
