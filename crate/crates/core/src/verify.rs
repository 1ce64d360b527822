//! Built-in numerical self-checks, run by `bloch-control verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{protocol_distance, protocol_gradient, evaluate_cells, CellResult, GridSpec};
use crate::baseline::{nelder_mead, NmOptions};
use crate::dynamics::{
    evolve_lindblad, evolve_td_schrodinger, evolve_unitary, fidelity, DecayChannel, DensityMatrix,
    HermitianOperator, QuantumState,
};
use crate::linalg::CMatrix;
use crate::nn::Mlp;
use crate::nv::{ControlStep, NvMode, NvModel, NvParams, Protocol};
use crate::toy::{toy_analytic, toy_apply, toy_target};
use crate::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value < limit,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<28} {:.3e} (limit {:.1e})", self.name, self.value, self.limit)
    }
}

fn random_hermitian(d: usize, scale: f64, rng: &mut impl Rng) -> HermitianOperator<f64> {
    let mut m = CMatrix::zeros(d);
    for i in 0..d {
        m[(i, i)] = Complex::new(scale * (2.0 * rng.random::<f64>() - 1.0), 0.0);
        for j in i + 1..d {
            let z = Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianOperator::new(m).expect("hermitian by construction")
}

fn random_state(d: usize, rng: &mut impl Rng) -> QuantumState<f64> {
    let amps = (0..d)
        .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    QuantumState::new(amps).expect("non-zero")
}

fn unitarity(rng: &mut impl Rng) -> Check {
    let mut worst: f64 = 0.0;
    for &d in &[2, 8, 10] {
        for _ in 0..20 {
            let h = random_hermitian(d, 50.0, rng);
            let psi = random_state(d, rng);
            let out = evolve_unitary(&h, &psi, rng.random::<f64>()).expect("valid input");
            worst = worst.max((out.norm() - 1.0).abs());
        }
    }
    Check::below("unitarity", worst, 1e-9)
}

fn rk4_vs_eigen(rng: &mut impl Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = random_hermitian(8, 1.0, rng);
        let h = HermitianOperator::new(h.matrix().scale(Complex::new(400.0 / h.spectral_norm(), 0.0))).expect("hermitian");
        let psi = random_state(8, rng);
        let dt = 0.1;
        let substeps = (h.spectral_norm() * dt / 0.01).ceil() as usize;
        let a = evolve_unitary(&h, &psi, dt).expect("valid input");
        let b = evolve_td_schrodinger(&h, &psi, 0.0, dt, substeps).expect("valid input");
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            worst = worst.max((x - y).norm());
        }
    }
    Check::below("rk4 vs eigendecomposition", worst, 1e-8)
}

fn decay() -> Check {
    let gamma = 0.1;
    let ch = [DecayChannel::new(1, 0, gamma).expect("valid rate")];
    let mut rho = DensityMatrix::pure(&QuantumState::<f64>::basis(2, 1));
    let mut worst: f64 = 0.0;
    for k in 1..=20 {
        rho = evolve_lindblad(&HermitianOperator::zeros(2), &ch, &rho, 0.0, 0.5, 20).expect("valid input");
        worst = worst.max((rho.populations()[1] - (-gamma * 0.5 * k as f64).exp()).abs());
    }
    Check::below("analytic decay", worst, 1e-6)
}

fn nv_trace(rng: &mut impl Rng) -> Check {
    let params = NvParams {
        mode: NvMode::Open,
        ..NvParams::default()
    };
    let model = NvModel::<f64>::new(params).expect("default parameters");
    let (wlo, whi) = params.omega_bounds::<f64>();
    let (tlo, thi) = params.dt_bounds::<f64>();
    let protocol = Protocol::new(
        (0..params.n_steps)
            .map(|_| ControlStep {
                omega1: wlo + (whi - wlo) * rng.random::<f64>(),
                omega2: wlo + (whi - wlo) * rng.random::<f64>(),
                dt: tlo + (thi - tlo) * rng.random::<f64>(),
            })
            .collect(),
    );
    let drift = match model.run_protocol(&protocol, &model.initial_state()) {
        Ok(run) => match run.state {
            crate::nv::NvState::Mixed(rho) => (rho.trace().re - 1.0).abs(),
            crate::nv::NvState::Pure(_) => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    Check::below("lindblad trace (nv open)", drift, 1e-6)
}

fn toy_round_trip() -> Check {
    let mut worst: f64 = 0.0;
    for shifted in [false, true] {
        for k in 0..100 {
            let phi = std::f64::consts::TAU * k as f64 / 100.0;
            let psi = toy_apply(toy_analytic(phi, shifted));
            let f = fidelity(&psi, &toy_target(std::f64::consts::FRAC_PI_2, phi, shifted).expect("valid"))
                .expect("same dimension");
            worst = worst.max((1.0 - f).abs());
        }
    }
    Check::below("toy analytic round trip", worst, 1e-12)
}

fn mlp_gradients(rng: &mut ChaCha8Rng) -> Check {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut net = Mlp::<f64>::two_hidden(5, 7, 3, 1.0, rng).expect("valid dims");
        net.params_mut().iter_mut().for_each(|p| *p = rng.random::<f64>() * 2.0 - 1.0);
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let up: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g = net.grad(&x, &up).expect("valid input");
        let loss = |n: &Mlp<f64>| -> f64 { n.forward(&x).expect("valid").iter().zip(&up).map(|(a, b)| a * b).sum() };
        for k in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let fp = loss(&p);
            p.params_mut()[k] -= 2.0 * h;
            let fm = loss(&p);
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    Check::below("mlp gradient vs differences", worst, 1e-5)
}

fn rosenbrock() -> Check {
    let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = nelder_mead(f, &[-1.2, 1.0], &NmOptions::new(20000, 1e-14, 1e-10)).expect("valid input");
    Check::below("nelder-mead rosenbrock", r.f, 1e-6)
}

fn distance_axioms(rng: &mut impl Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut v = || -> Vec<f64> { (0..27).map(|_| rng.random::<f64>() - 0.5).collect() };
        let (a, b, c) = (v(), v(), v());
        let d = |x: &[f64], y: &[f64]| protocol_distance(x, y).expect("same length");
        worst = worst
            .max(d(&a, &a))
            .max((d(&a, &b) - d(&b, &a)).abs())
            .max(d(&a, &c) - d(&a, &b) - d(&b, &c));
    }
    Check::below("protocol distance axioms", worst, 1e-12)
}

fn gradient_linear() -> Check {
    let spec = GridSpec::sphere(5, 6);
    let grid = evaluate_cells(&spec, 1, "linear", |_, t, p| {
        Ok(CellResult {
            fidelity: 1.0,
            time: 0.0,
            protocol: vec![0.02 * t - 0.03 * p; 3],
            fault: false,
        })
    })
    .expect("synthetic");
    let g = protocol_gradient(&grid, false).expect("complete grid");
    let worst = g.iter().map(|x| (x - 3.0 * 0.05).abs()).fold(0.0, f64::max);
    Check::below("protocol gradient (linear)", worst, 1e-12)
}

/// Runs every check with a fixed seed.
pub fn run_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    vec![
        unitarity(&mut rng),
        rk4_vs_eigen(&mut rng),
        decay(),
        nv_trace(&mut rng),
        toy_round_trip(),
        mlp_gradients(&mut rng),
        rosenbrock(),
        distance_axioms(&mut rng),
        gradient_linear(),
    ]
}
