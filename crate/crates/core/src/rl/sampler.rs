//! Fidelity-biased target sampling on a `(θ, φ)` grid.
//!
//! Cell weights are `η + (1 - η)(1 - <F>)`, where `<F>` averages the cell's
//! results among the most recent `window` results overall. Cells without
//! history count as `<F> = 0`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nv::TargetAngles;
use crate::rl::env::TargetDomain;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSampler {
    n_theta: usize,
    n_phi: usize,
    domain: TargetDomain,
    eta: f64,
    window: usize,
    history: VecDeque<(u32, f64)>,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl TargetSampler {
    pub fn new(n_theta: usize, n_phi: usize, domain: TargetDomain, eta: f64, window: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(invalid("sampler grid must have at least one cell"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("eta {eta} outside [0, 1]")));
        }
        if window == 0 {
            return Err(invalid("sampler window must be >= 1"));
        }
        let cells = n_theta * n_phi;
        Ok(Self {
            n_theta,
            n_phi,
            domain,
            eta,
            window,
            history: VecDeque::with_capacity(window),
            sums: vec![0.0; cells],
            counts: vec![0; cells],
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn axis_cell(x: f64, (lo, hi): (f64, f64), n: usize) -> usize {
        if hi <= lo {
            return 0;
        }
        let u = ((x - lo) / (hi - lo) * n as f64).floor();
        (u.max(0.0) as usize).min(n - 1)
    }

    /// Row-major cell index (θ-major) containing the angles.
    pub fn cell_of(&self, theta: f64, phi: f64) -> usize {
        Self::axis_cell(theta, self.domain.theta, self.n_theta) * self.n_phi
            + Self::axis_cell(phi, self.domain.phi, self.n_phi)
    }

    pub fn mean_fidelity(&self, cell: usize) -> Option<f64> {
        (self.counts[cell] > 0).then(|| self.sums[cell] / self.counts[cell] as f64)
    }

    /// Normalized cell probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.n_cells())
            .map(|c| {
                let f = self.mean_fidelity(c).unwrap_or(0.0);
                self.eta + (1.0 - self.eta) * (1.0 - f)
            })
            .collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return vec![1.0 / self.n_cells() as f64; self.n_cells()];
        }
        w.into_iter().map(|x| x / total).collect()
    }

    /// Draws a cell from the biased distribution, then a uniform point inside it.
    pub fn sample<R: Real>(&self, rng: &mut impl Rng) -> TargetAngles<R> {
        let p = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                cell = i;
                break;
            }
        }
        let (it, ip) = (cell / self.n_phi, cell % self.n_phi);
        let pick = |(lo, hi): (f64, f64), n: usize, k: usize, rng: &mut dyn rand::RngCore| {
            let w = (hi - lo) / n as f64;
            let v: f64 = rng.random();
            (lo + w * (k as f64 + v)).clamp(lo, hi)
        };
        let theta = pick(self.domain.theta, self.n_theta, it, rng);
        let phi = pick(self.domain.phi, self.n_phi, ip, rng);
        TargetAngles {
            theta: R::lit(theta),
            phi: R::lit(phi),
        }
    }

    /// Records a result, evicting the oldest one beyond the window.
    pub fn record(&mut self, theta: f64, phi: f64, fidelity: f64) {
        let cell = self.cell_of(theta, phi);
        let f = if fidelity.is_finite() { fidelity } else { 0.0 };
        self.history.push_back((cell as u32, f));
        self.sums[cell] += f;
        self.counts[cell] += 1;
        while self.history.len() > self.window {
            let (c, old) = self.history.pop_front().unwrap();
            let c = c as usize;
            self.counts[c] -= 1;
            if self.counts[c] == 0 {
                self.sums[c] = 0.0;
            } else {
                self.sums[c] -= old;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sampler(eta: f64) -> TargetSampler {
        TargetSampler::new(20, 20, TargetDomain::sphere(), eta, 10_000).unwrap()
    }

    fn centre(s: &TargetSampler, cell: usize) -> (f64, f64) {
        let (it, ip) = (cell / 20, cell % 20);
        let th = std::f64::consts::PI * (it as f64 + 0.5) / 20.0;
        let ph = std::f64::consts::TAU * (ip as f64 + 0.5) / 20.0;
        assert_eq!(s.cell_of(th, ph), cell);
        (th, ph)
    }

    #[test]
    fn perfect_history_is_uniform() {
        let mut s = sampler(0.5);
        for c in 0..400 {
            let (t, p) = centre(&s, c);
            s.record(t, p, 1.0);
        }
        let p = s.probabilities();
        assert!(p.iter().all(|&x| (x - 1.0 / 400.0).abs() < 1e-15));
    }

    #[test]
    fn failing_cell_gets_double_weight() {
        let mut s = sampler(0.5);
        for c in 0..400 {
            let (t, p) = centre(&s, c);
            s.record(t, p, if c == 17 { 0.0 } else { 1.0 });
        }
        let p = s.probabilities();
        assert!((p[17] / p[0] - 2.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_one_ignores_history() {
        let mut s = sampler(1.0);
        s.record(0.1, 0.1, 0.0);
        assert!(s.probabilities().iter().all(|&x| (x - 1.0 / 400.0).abs() < 1e-15));
    }

    #[test]
    fn window_evicts_old_results() {
        let mut s = TargetSampler::new(1, 2, TargetDomain::sphere(), 0.0, 2).unwrap();
        s.record(1.0, 0.5, 0.0);
        s.record(1.0, 0.5, 1.0);
        s.record(1.0, 0.5, 1.0);
        assert_eq!(s.mean_fidelity(0), Some(1.0));
        assert_eq!(s.history_len(), 2);
        assert_eq!(s.mean_fidelity(1), None);
    }

    #[test]
    fn samples_stay_in_domain_and_follow_weights() {
        let mut s = TargetSampler::new(1, 2, TargetDomain::equator(), 0.0, 100).unwrap();
        s.record(std::f64::consts::FRAC_PI_2, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t: TargetAngles<f64> = s.sample(&mut rng);
            assert_eq!(t.theta, std::f64::consts::FRAC_PI_2);
            assert!(t.phi >= std::f64::consts::PI && t.phi <= std::f64::consts::TAU);
        }
    }
}
