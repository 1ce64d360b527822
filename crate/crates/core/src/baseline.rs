//! Per-target Nelder-Mead optimization of protocols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{par_map, GridSpec, LandscapeCell, LandscapeGrid};
use crate::config::BaselineConfig;
use crate::error::{invalid, Result};
use crate::nv::TargetAngles;
use crate::rl::env::Environment;
use crate::rl::trainer::GreedyRun;
use crate::scalar::Real;

pub const NM_SOURCE: &str = "nelder-mead";

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions<R> {
    pub max_iter: usize,
    pub f_tol: R,
    pub x_tol: R,
    /// Axis step of the initial simplex.
    pub step: R,
    /// Stop as soon as an evaluation scores strictly below this.
    pub stop_below: Option<R>,
}

impl<R: Real> NmOptions<R> {
    pub fn new(max_iter: usize, f_tol: R, x_tol: R) -> Self {
        Self {
            max_iter,
            f_tol,
            x_tol,
            step: R::lit(0.1),
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NmStop {
    MaxIter,
    Converged,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult<R> {
    pub x: Vec<R>,
    pub f: R,
    pub evals: u64,
    pub iterations: usize,
    pub stop: NmStop,
}

/// Simplex: `n + 1` vertices, values sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState<R> {
    pub vertices: Vec<Vec<R>>,
    pub values: Vec<R>,
}

impl<R: Real> SimplexState<R> {
    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].partial_cmp(&self.values[b]).unwrap_or(std::cmp::Ordering::Equal));
        self.vertices = idx.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn converged(&self, f_tol: R, x_tol: R) -> bool {
        let n = self.values.len() - 1;
        let f_spread = (self.values[n] - self.values[0]).abs();
        let x_spread = self.vertices[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&self.vertices[0]).map(|(&a, &b)| (a - b).abs()))
            .fold(R::zero(), R::max);
        f_spread <= f_tol && x_spread <= x_tol
    }
}

struct Counted<F, R> {
    f: F,
    evals: u64,
    best: Option<(Vec<R>, R)>,
    stop_below: Option<R>,
    hit: bool,
}

impl<R: Real, F: FnMut(&[R]) -> R> Counted<F, R> {
    fn eval(&mut self, x: &[R]) -> R {
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = R::infinity();
        }
        self.evals += 1;
        if self.best.as_ref().is_none_or(|(_, b)| v < *b) {
            self.best = Some((x.to_vec(), v));
        }
        if self.stop_below.is_some_and(|t| v < t) {
            self.hit = true;
        }
        v
    }
}

fn affine<R: Real>(a: &[R], b: &[R], t: R) -> Vec<R> {
    // a + t (b - a)
    a.iter().zip(b).map(|(&x, &y)| x + t * (y - x)).collect()
}

/// Minimizes `objective` from `x0`. NaN values count as `+∞`.
pub fn nelder_mead<R: Real, F: FnMut(&[R]) -> R>(objective: F, x0: &[R], opts: &NmOptions<R>) -> Result<NmResult<R>> {
    let n = x0.len();
    if n == 0 {
        return Err(invalid("Nelder-Mead needs at least one dimension"));
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    let mut obj = Counted {
        f: objective,
        evals: 0,
        best: None,
        stop_below: opts.stop_below,
        hit: false,
    };
    let mut iterations = 0;
    let stop = 'run: {
        let mut simplex = SimplexState {
            vertices: Vec::with_capacity(n + 1),
            values: Vec::with_capacity(n + 1),
        };
        for k in 0..=n {
            let mut v = x0.to_vec();
            if k > 0 {
                v[k - 1] += opts.step;
            }
            simplex.values.push(obj.eval(&v));
            simplex.vertices.push(v);
            if obj.hit {
                break 'run NmStop::Target;
            }
        }
        let (alpha, gamma, rho, sigma) = (R::lit(ALPHA), R::lit(GAMMA), R::lit(RHO), R::lit(SIGMA));
        loop {
            simplex.sort();
            if simplex.converged(opts.f_tol, opts.x_tol) {
                break NmStop::Converged;
            }
            if iterations >= opts.max_iter {
                break NmStop::MaxIter;
            }
            iterations += 1;

            let inv = R::one() / R::lit(n as f64);
            let mut c = vec![R::zero(); n];
            for v in &simplex.vertices[..n] {
                for (ci, &vi) in c.iter_mut().zip(v) {
                    *ci += vi * inv;
                }
            }
            let worst = simplex.vertices[n].clone();
            let (f_best, f_second, f_worst) = (simplex.values[0], simplex.values[n - 1], simplex.values[n]);

            let xr = affine(&c, &worst, -alpha);
            let fr = obj.eval(&xr);
            if obj.hit {
                break NmStop::Target;
            }
            if fr < f_best {
                let xe = affine(&c, &xr, gamma);
                let fe = obj.eval(&xe);
                if obj.hit {
                    break NmStop::Target;
                }
                let (x, f) = if fe < fr { (xe, fe) } else { (xr, fr) };
                simplex.vertices[n] = x;
                simplex.values[n] = f;
                continue;
            }
            if fr < f_second {
                simplex.vertices[n] = xr;
                simplex.values[n] = fr;
                continue;
            }
            let (xc, fc, accept) = if fr < f_worst {
                let xc = affine(&c, &xr, rho);
                let fc = obj.eval(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = affine(&c, &worst, rho);
                let fc = obj.eval(&xc);
                (xc, fc, fc < f_worst)
            };
            if obj.hit {
                break NmStop::Target;
            }
            if accept {
                simplex.vertices[n] = xc;
                simplex.values[n] = fc;
                continue;
            }
            let best = simplex.vertices[0].clone();
            for k in 1..=n {
                let v = affine(&best, &simplex.vertices[k], sigma);
                simplex.values[k] = obj.eval(&v);
                simplex.vertices[k] = v;
                if obj.hit {
                    break 'run NmStop::Target;
                }
            }
        }
    };
    let (x, f) = obj.best.expect("at least one evaluation");
    Ok(NmResult {
        x,
        f,
        evals: obj.evals,
        iterations,
        stop,
    })
}

/// Runs one episode with fixed raw (normalized) actions, step-major.
pub fn replay_actions<R: Real, E: Environment<R> + ?Sized>(
    env: &E,
    target: TargetAngles<R>,
    actions: &[R],
) -> Result<GreedyRun<R>> {
    let a = env.action_dim();
    if actions.len() != a * env.n_steps() {
        return Err(crate::Error::DimensionMismatch {
            expected: a * env.n_steps(),
            got: actions.len(),
        });
    }
    let mut ep = env.reset(target)?;
    let mut fidelity = R::zero();
    let mut reward = R::zero();
    for chunk in actions.chunks_exact(a) {
        if ep.done {
            break;
        }
        let out = env.step(&mut ep, chunk)?;
        reward += out.reward;
        if let Some(f) = out.fidelity {
            fidelity = f;
        }
    }
    Ok(GreedyRun {
        fidelity,
        reward,
        time: ep.time,
        protocol: ep.protocol,
        raw_actions: actions.to_vec(),
        fault: ep.fault,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOptimum<R> {
    pub theta: f64,
    pub phi: f64,
    pub fidelity: R,
    pub time: R,
    /// Clamped normalized protocol.
    pub protocol: Vec<R>,
    pub evaluations: u64,
    pub iterations: usize,
    pub runs: usize,
}

/// Best of up to `restarts` Nelder-Mead runs on `1 - reward` (fidelity minus
/// out-of-bounds penalty) from uniform random normalized protocols.
pub fn optimize_target<R: Real, E: Environment<R> + ?Sized>(
    env: &E,
    target: TargetAngles<R>,
    cfg: &BaselineConfig,
    rng: &mut impl Rng,
) -> Result<TargetOptimum<R>> {
    if cfg.restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let n = env.action_dim() * env.n_steps();
    let mut opts = NmOptions::new(cfg.max_iter, R::lit(cfg.f_tol), R::lit(cfg.x_tol));
    opts.stop_below = Some(R::one() - R::lit(cfg.early_stop_fidelity));
    let objective = |x: &[R]| match replay_actions(env, target, x) {
        Ok(run) if run.fault.is_none() => R::one() - run.reward,
        _ => R::one(),
    };
    let mut best: Option<NmResult<R>> = None;
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut runs = 0;
    for _ in 0..cfg.restarts {
        let x0: Vec<R> = (0..n).map(|_| R::lit(rng.random::<f64>() - 0.5)).collect();
        let res = nelder_mead(objective, &x0, &opts)?;
        evaluations += res.evals;
        iterations += res.iterations;
        runs += 1;
        let hit = res.stop == NmStop::Target;
        if best.as_ref().is_none_or(|b| res.f < b.f) {
            best = Some(res);
        }
        if hit {
            break;
        }
    }
    let best = best.expect("at least one run");
    let run = replay_actions(env, target, &best.x)?;
    Ok(TargetOptimum {
        theta: target.theta.as_f64(),
        phi: target.phi.as_f64(),
        fidelity: if run.fault.is_some() { R::zero() } else { run.fidelity },
        time: run.time,
        protocol: run.protocol,
        evaluations,
        iterations,
        runs,
    })
}

/// Totals over a baseline grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub cells: usize,
    pub total_evaluations: u64,
    pub total_iterations: u64,
    pub total_runs: u64,
    pub evaluations: Vec<u64>,
}

/// Optimizes every grid cell independently. Cell `k` draws its start points
/// from stream `k` of the configured seed, so the result does not depend on
/// `workers`.
pub fn grid_baseline<R: Real, E: Environment<R> + ?Sized + Sync>(
    env: &E,
    spec: &GridSpec,
    cfg: &BaselineConfig,
    workers: usize,
) -> Result<(LandscapeGrid<R>, BaselineReport)> {
    let results = par_map(spec.len(), workers, |k| {
        let (theta, phi) = spec.angles(k);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        optimize_target(env, TargetAngles::new(R::lit(theta), R::lit(phi))?, cfg, &mut rng)
    })?;
    let results: Vec<TargetOptimum<R>> = results.into_iter().collect::<Result<_>>()?;
    let report = BaselineReport {
        cells: results.len(),
        total_evaluations: results.iter().map(|r| r.evaluations).sum(),
        total_iterations: results.iter().map(|r| r.iterations as u64).sum(),
        total_runs: results.iter().map(|r| r.runs as u64).sum(),
        evaluations: results.iter().map(|r| r.evaluations).collect(),
    };
    let cells = results
        .into_iter()
        .map(|r| LandscapeCell {
            theta: r.theta,
            phi: r.phi,
            fidelity: r.fidelity,
            time: r.time,
            protocol: r.protocol,
            fault: false,
        })
        .collect();
    Ok((
        LandscapeGrid {
            spec: *spec,
            source: NM_SOURCE.to_string(),
            cells,
        },
        report,
    ))
}

/// Protocol of the cell closest in `Δθ² + Δφ²`; ties go to the lower index.
pub fn nearest_protocol<R: Real>(grid: &LandscapeGrid<R>, theta: f64, phi: f64) -> Result<&[R]> {
    let mut best: Option<(f64, &LandscapeCell<R>)> = None;
    for c in &grid.cells {
        let d = (c.theta - theta).powi(2) + (c.phi - phi).powi(2);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c.protocol.as_slice()).ok_or_else(|| invalid("empty landscape"))
}
