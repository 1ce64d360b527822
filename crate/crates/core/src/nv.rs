//! Nitrogen-vacancy center model driven by two lasers in the rotating frame.
//!
//! Full basis order is `(|-1>, |0>, |+1>, A2, A1, EX, EY, E1, E2, |m>)`. The
//! closed model drops `|0>` and `|m>`, which are reachable only through decay,
//! leaving eight levels. Hamiltonian entries are in rad/ns; the optical gap is
//! removed by the rotating frame.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_lindblad, evolve_td_schrodinger, substeps_for, DecayChannel, DensityMatrix,
    Hamiltonian, HermitianOperator, QuantumState,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_spectral_norm, CMatrix};
use crate::scalar::{Complex, Real};

pub const FULL_LABELS: [&str; 10] = ["-1", "0", "+1", "A2", "A1", "EX", "EY", "E1", "E2", "m"];
pub const CLOSED_LABELS: [&str; 8] = ["-1", "+1", "A2", "A1", "EX", "EY", "E1", "E2"];

/// Indices into the full ten-level basis.
pub mod level {
    pub const MINUS: usize = 0;
    pub const ZERO: usize = 1;
    pub const PLUS: usize = 2;
    pub const A2: usize = 3;
    pub const A1: usize = 4;
    pub const EX: usize = 5;
    pub const EY: usize = 6;
    pub const E1: usize = 7;
    pub const E2: usize = 8;
    pub const METASTABLE: usize = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvMode {
    /// Coherent eight-level approximation.
    Closed,
    /// Ten levels with Lindblad dissipation.
    Open,
}

impl NvMode {
    pub fn dim(self) -> usize {
        match self {
            NvMode::Closed => 8,
            NvMode::Open => 10,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            NvMode::Closed => &CLOSED_LABELS,
            NvMode::Open => &FULL_LABELS,
        }
    }

    /// Position of a full-basis level in this mode's basis.
    pub fn index_of(self, full: usize) -> Option<usize> {
        match self {
            NvMode::Open => (full < 10).then_some(full),
            NvMode::Closed => match full {
                level::MINUS => Some(0),
                level::PLUS => Some(1),
                3..=8 => Some(full - 1),
                _ => None,
            },
        }
    }
}

/// Material constants. Frequencies in GHz (converted with 2π to rad/ns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NvConstants {
    pub d_gs_ghz: f64,
    pub delta_ghz: f64,
    pub d_es_ghz: f64,
    pub delta_pp_ghz: f64,
    pub l_z_ghz: f64,
    pub g_gs: f64,
    pub g_es: f64,
    /// Bohr magneton over Planck constant, GHz per Tesla.
    pub mu_b_ghz_per_tesla: f64,
}

impl Default for NvConstants {
    fn default() -> Self {
        Self {
            d_gs_ghz: 2.88,
            delta_ghz: 1.55,
            d_es_ghz: 1.42,
            delta_pp_ghz: 0.2,
            l_z_ghz: 5.3,
            g_gs: 2.01,
            g_es: 2.01,
            mu_b_ghz_per_tesla: 13.996246,
        }
    }
}

/// Physical and protocol parameters of the NV environment.
///
/// Drive strengths and detunings are given in the same nominal "GHz" units
/// and multiplied by `drive_unit` to get rad/ns; set `drive_unit = 1` to read
/// them directly as rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NvParams {
    pub b_ext_tesla: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub drive_unit: f64,
    /// Total protocol time window, ns.
    pub t_min: f64,
    pub t_max: f64,
    pub n_steps: usize,
    pub mode: NvMode,
    pub constants: NvConstants,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            b_ext_tesla: 0.15,
            delta1: 50.0,
            delta2: 0.0,
            omega_min: -20.0,
            omega_max: 20.0,
            drive_unit: std::f64::consts::TAU,
            t_min: 0.2,
            t_max: 0.8,
            n_steps: 9,
            mode: NvMode::Closed,
            constants: NvConstants::default(),
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.b_ext_tesla,
            self.delta1,
            self.delta2,
            self.omega_min,
            self.omega_max,
            self.drive_unit,
            self.t_min,
            self.t_max,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("nv parameters must be finite".into()));
        }
        if !(self.omega_min < self.omega_max) {
            return Err(Error::Config(format!(
                "nv.omega_min ({}) must be below nv.omega_max ({})",
                self.omega_min, self.omega_max
            )));
        }
        if !(0.0 < self.t_min && self.t_min < self.t_max) {
            return Err(Error::Config(format!(
                "nv time window must satisfy 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("nv.n_steps must be >= 1".into()));
        }
        if !(self.drive_unit > 0.0) {
            return Err(Error::Config("nv.drive_unit must be > 0".into()));
        }
        Ok(())
    }

    /// Drive amplitude bounds in rad/ns.
    pub fn omega_bounds<R: Real>(&self) -> (R, R) {
        (
            R::lit(self.omega_min * self.drive_unit),
            R::lit(self.omega_max * self.drive_unit),
        )
    }

    /// Per-step duration bounds, ns.
    pub fn dt_bounds<R: Real>(&self) -> (R, R) {
        let n = self.n_steps as f64;
        (R::lit(self.t_min / n), R::lit(self.t_max / n))
    }

    /// Detunings in rad/ns.
    pub fn detunings<R: Real>(&self) -> (R, R) {
        (
            R::lit(self.delta1 * self.drive_unit),
            R::lit(self.delta2 * self.drive_unit),
        )
    }

    fn zeeman_gs(&self) -> f64 {
        self.constants.g_gs * self.constants.mu_b_ghz_per_tesla * self.b_ext_tesla
    }

    fn zeeman_es(&self) -> f64 {
        self.constants.g_es * self.constants.mu_b_ghz_per_tesla * self.b_ext_tesla
    }
}

fn rad<R: Real>(ghz: f64) -> R {
    R::lit(std::f64::consts::TAU * ghz)
}

fn re<R: Real>(x: R) -> Complex<R> {
    Complex::new(x, R::zero())
}

/// `diag(D_gs - g mu_B B, 0, D_gs + g mu_B B)` in `(|-1>, |0>, |+1>)`.
pub fn ground_hamiltonian<R: Real>(params: &NvParams) -> HermitianOperator<R> {
    let d = params.constants.d_gs_ghz;
    let z = params.zeeman_gs();
    HermitianOperator::from_matrix_unchecked(CMatrix::from_real_diagonal(&[
        rad(d - z),
        R::zero(),
        rad(d + z),
    ]))
}

/// Block-diagonal `H1 ⊕ H2` in `(A2, A1, EX, EY, E1, E2)`, without the optical gap.
pub fn excited_hamiltonian<R: Real>(params: &NvParams) -> HermitianOperator<R> {
    let c = &params.constants;
    let z = params.zeeman_es();
    let mut m = CMatrix::<R>::zeros(6);
    // H1 on (A2, A1)
    m[(0, 0)] = re(rad(c.delta_ghz + 2.0 * c.l_z_ghz));
    m[(0, 1)] = re(rad(z));
    m[(1, 0)] = re(rad(z));
    m[(1, 1)] = re(rad(-c.delta_ghz + 2.0 * c.l_z_ghz));
    // H2 on (EX, EY, E1, E2) at offset 2
    let dpp: R = rad(c.delta_pp_ghz);
    let o = 2;
    m[(o, o)] = re(rad(-c.d_es_ghz + c.l_z_ghz));
    m[(o + 1, o + 1)] = re(rad(-c.d_es_ghz + c.l_z_ghz));
    m[(o, o + 3)] = re(dpp);
    m[(o + 3, o)] = re(dpp);
    m[(o + 1, o + 2)] = Complex::new(R::zero(), dpp);
    m[(o + 2, o + 1)] = Complex::new(R::zero(), -dpp);
    m[(o + 2, o + 3)] = re(rad(-z));
    m[(o + 3, o + 2)] = re(rad(-z));
    HermitianOperator::from_matrix_unchecked(m)
}

/// Ground-to-excited coupling pattern `v / eps_x`: rows `(|-1>, |0>, |+1>)`,
/// columns `(A2, A1, EX, EY, E1, E2)`.
pub fn coupling_pattern<R: Real>() -> [[Complex<R>; 6]; 3] {
    let z = Complex::zero();
    let i = Complex::new(R::zero(), R::one());
    let two = re(R::lit(2.0));
    [
        [i, -i, z, z, -i, -i],
        [z, z, z, two, z, z],
        [-i, -i, z, z, i, -i],
    ]
}

/// Rotating-frame drive `Ω1 cos(δ1 t) + Ω2 cos(δ2 t)`.
#[inline]
pub fn drive_amplitude<R: Real>(omega1: R, omega2: R, delta1: R, delta2: R, t: R) -> R {
    omega1 * (delta1 * t).cos() + omega2 * (delta2 * t).cos()
}

/// One piecewise-constant control segment: drive strengths in rad/ns, duration in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlStep<R> {
    pub omega1: R,
    pub omega2: R,
    pub dt: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol<R> {
    pub steps: Vec<ControlStep<R>>,
}

impl<R: Real> Protocol<R> {
    pub fn new(steps: Vec<ControlStep<R>>) -> Self {
        Self { steps }
    }

    pub fn total_time(&self) -> R {
        self.steps.iter().map(|s| s.dt).sum()
    }

    /// Checks step count and per-step bounds against `params`.
    pub fn validate(&self, params: &NvParams) -> Result<()> {
        if self.steps.len() != params.n_steps {
            return Err(invalid(format!(
                "protocol has {} steps, expected {}",
                self.steps.len(),
                params.n_steps
            )));
        }
        let (wlo, whi) = params.omega_bounds::<R>();
        let (tlo, thi) = params.dt_bounds::<R>();
        let slack = R::lit(1e-9);
        for (k, s) in self.steps.iter().enumerate() {
            let within = |x: R, lo: R, hi: R| x >= lo - slack * hi.abs().max(R::one()) && x <= hi + slack * hi.abs().max(R::one());
            if !within(s.omega1, wlo, whi) || !within(s.omega2, wlo, whi) || !within(s.dt, tlo, thi) {
                return Err(invalid(format!("protocol step {k} outside bounds: {s:?}")));
            }
        }
        Ok(())
    }
}

/// Target angles on the `|-1>, |+1>` Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetAngles<R> {
    pub theta: R,
    pub phi: R,
}

impl<R: Real> TargetAngles<R> {
    /// Requires `theta ∈ [0, π]` and `phi ∈ [0, 2π]`.
    pub fn new(theta: R, phi: R) -> Result<Self> {
        let slack = R::lit(1e-12);
        if !(theta >= -slack && theta <= R::PI() + slack) {
            return Err(invalid(format!("theta {theta} outside [0, pi]")));
        }
        if !(phi >= -slack && phi <= R::two_pi() + slack) {
            return Err(invalid(format!("phi {phi} outside [0, 2pi]")));
        }
        Ok(Self { theta, phi })
    }
}

/// `cos(θ/2)|a> + e^{iφ} sin(θ/2)|b>` embedded in `dim` levels.
pub(crate) fn bloch_state<R: Real>(dim: usize, a: usize, b: usize, theta: R, phi: R) -> QuantumState<R> {
    let half = theta * R::lit(0.5);
    let mut amps = vec![Complex::zero(); dim];
    amps[a] = re(half.cos());
    amps[b] = Complex::from_polar(half.sin(), phi);
    QuantumState::from_raw(amps)
}

/// NV target superposition of `|-1>` and `|+1>` in the given mode's basis.
pub fn nv_target_state<R: Real>(mode: NvMode, angles: TargetAngles<R>) -> Result<QuantumState<R>> {
    let angles = TargetAngles::new(angles.theta, angles.phi)?;
    let minus = mode.index_of(level::MINUS).unwrap();
    let plus = mode.index_of(level::PLUS).unwrap();
    Ok(bloch_state(mode.dim(), minus, plus, angles.theta, angles.phi).with_labels(mode.labels()))
}

/// Non-zero decay channels in the full ten-level basis (rates in 1/ns).
pub fn nv_decay_channels<R: Real>() -> Vec<DecayChannel<R>> {
    use level::*;
    let mut out = Vec::new();
    let mut push = |from: usize, to: usize, inv_rate: f64| {
        out.push(DecayChannel {
            from,
            to,
            rate: R::lit(1.0 / inv_rate),
        });
    };
    for from in [A2, A1, E1, E2] {
        push(from, PLUS, 24.0);
        push(from, MINUS, 31.0);
        push(from, ZERO, 104.0);
        push(from, METASTABLE, 33.0);
    }
    for from in [EX, EY] {
        push(from, ZERO, 13.0);
        push(from, PLUS, 666.0);
        push(from, MINUS, 666.0);
    }
    push(METASTABLE, ZERO, 303.0);
    out
}

/// Precomputed NV Hamiltonian pieces in a given mode's basis.
#[derive(Debug, Clone)]
pub struct NvModel<R> {
    params: NvParams,
    static_h: CMatrix<R>,
    static_entries: Vec<(usize, usize, Complex<R>)>,
    coupling: CMatrix<R>,
    coupling_entries: Vec<(usize, usize, Complex<R>)>,
    static_norm: R,
    coupling_norm: R,
    channels: Vec<DecayChannel<R>>,
    delta1: R,
    delta2: R,
}

fn nonzeros<R: Real>(m: &CMatrix<R>) -> Vec<(usize, usize, Complex<R>)> {
    let d = m.dim();
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if !m[(i, j)].is_zero() {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

impl<R: Real> NvModel<R> {
    pub fn new(params: NvParams) -> Result<Self> {
        params.validate()?;
        let mode = params.mode;
        let dim = mode.dim();
        let gs = ground_hamiltonian::<R>(&params);
        let es = excited_hamiltonian::<R>(&params);

        let mut static_h = CMatrix::zeros(dim);
        for g in 0..3 {
            if let Some(i) = mode.index_of(g) {
                static_h[(i, i)] = gs.matrix()[(g, g)];
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let (i, j) = (mode.index_of(3 + a).unwrap(), mode.index_of(3 + b).unwrap());
                static_h[(i, j)] = es.matrix()[(a, b)];
            }
        }

        // |0> and |m> stay coherently uncoupled in both modes.
        let pattern = coupling_pattern::<R>();
        let mut coupling = CMatrix::zeros(dim);
        for g in [level::MINUS, level::PLUS] {
            let i = mode.index_of(g).unwrap();
            for (e, &v) in pattern[g].iter().enumerate() {
                let j = mode.index_of(3 + e).unwrap();
                coupling[(i, j)] = v;
                coupling[(j, i)] = v.conj();
            }
        }

        let channels = match mode {
            NvMode::Closed => Vec::new(),
            NvMode::Open => nv_decay_channels(),
        };
        let (delta1, delta2) = params.detunings();
        Ok(Self {
            params,
            static_entries: nonzeros(&static_h),
            coupling_entries: nonzeros(&coupling),
            static_norm: hermitian_spectral_norm(&static_h),
            coupling_norm: hermitian_spectral_norm(&coupling),
            static_h,
            coupling,
            channels,
            delta1,
            delta2,
        })
    }

    pub fn params(&self) -> &NvParams {
        &self.params
    }

    pub fn mode(&self) -> NvMode {
        self.params.mode
    }

    pub fn dim(&self) -> usize {
        self.params.mode.dim()
    }

    /// Decay channels in this model's basis (empty for the closed model).
    pub fn channels(&self) -> &[DecayChannel<R>] {
        &self.channels
    }

    pub fn initial_state(&self) -> QuantumState<R> {
        QuantumState::basis(self.dim(), self.mode().index_of(level::MINUS).unwrap())
            .with_labels(self.mode().labels())
    }

    pub fn target_state(&self, angles: TargetAngles<R>) -> Result<QuantumState<R>> {
        nv_target_state(self.mode(), angles)
    }

    pub fn step_hamiltonian(&self, step: &ControlStep<R>) -> StepHamiltonian<'_, R> {
        StepHamiltonian {
            model: self,
            omega1: step.omega1,
            omega2: step.omega2,
        }
    }

    /// Dense total Hamiltonian at absolute time `t`.
    pub fn total_hamiltonian(&self, step: &ControlStep<R>, t: R) -> HermitianOperator<R> {
        let eps = drive_amplitude(step.omega1, step.omega2, self.delta1, self.delta2, t);
        HermitianOperator::from_matrix_unchecked(self.static_h.add(&self.coupling.scale(re(eps))))
    }

    /// Upper bound on the fastest angular frequency met while integrating `step`.
    pub fn omega_bound(&self, step: &ControlStep<R>) -> R {
        let drive = step.omega1.abs() + step.omega2.abs();
        let mut w = self.static_norm + drive * self.coupling_norm;
        if !step.omega1.is_zero() {
            w = w.max(self.delta1.abs());
        }
        if !step.omega2.is_zero() {
            w = w.max(self.delta2.abs());
        }
        w
    }

    pub fn substeps(&self, step: &ControlStep<R>) -> usize {
        substeps_for(step.dt, self.omega_bound(step))
    }

    /// Propagates one control step starting at absolute time `t`.
    pub fn advance(&self, state: &NvState<R>, step: &ControlStep<R>, t: R) -> Result<NvState<R>> {
        let h = self.step_hamiltonian(step);
        let n = self.substeps(step);
        match state {
            NvState::Pure(psi) => Ok(NvState::Pure(evolve_td_schrodinger(&h, psi, t, step.dt, n)?)),
            NvState::Mixed(rho) => Ok(NvState::Mixed(evolve_lindblad(
                &h,
                &self.channels,
                rho,
                t,
                step.dt,
                n,
            )?)),
        }
    }

    /// Runs the whole protocol from `initial`, threading absolute time from 0.
    /// Closed mode propagates pure states; open mode density matrices.
    pub fn run_protocol(&self, protocol: &Protocol<R>, initial: &QuantumState<R>) -> Result<ProtocolRun<R>> {
        if initial.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: initial.dim(),
            });
        }
        let mut state = self.prepare(initial);
        let mut t = R::zero();
        for step in &protocol.steps {
            state = self.advance(&state, step, t)?;
            t += step.dt;
        }
        Ok(ProtocolRun {
            state,
            total_time: t,
        })
    }

    /// Wraps an initial pure state for this model's propagation mode.
    pub fn prepare(&self, initial: &QuantumState<R>) -> NvState<R> {
        match self.mode() {
            NvMode::Closed => NvState::Pure(initial.clone()),
            NvMode::Open => NvState::Mixed(DensityMatrix::pure(initial)),
        }
    }
}

/// Total Hamiltonian of one control step; applies `H0 + eps(t) V` sparsely.
pub struct StepHamiltonian<'a, R> {
    model: &'a NvModel<R>,
    omega1: R,
    omega2: R,
}

impl<R: Real> Hamiltonian<R> for StepHamiltonian<'_, R> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[inline]
    fn apply(&self, t: R, v: &[Complex<R>], out: &mut [Complex<R>]) {
        let m = self.model;
        let eps = drive_amplitude(self.omega1, self.omega2, m.delta1, m.delta2, t);
        out.iter_mut().for_each(|o| *o = Complex::zero());
        for &(i, j, h) in &m.static_entries {
            out[i] = out[i] + h * v[j];
        }
        if !eps.is_zero() {
            for &(i, j, c) in &m.coupling_entries {
                out[i] = out[i] + c * v[j] * eps;
            }
        }
    }

    fn operator(&self, t: R) -> HermitianOperator<R> {
        self.model.total_hamiltonian(
            &ControlStep {
                omega1: self.omega1,
                omega2: self.omega2,
                dt: R::zero(),
            },
            t,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NvState<R> {
    Pure(QuantumState<R>),
    Mixed(DensityMatrix<R>),
}

impl<R: Real> NvState<R> {
    pub fn fidelity(&self, target: &QuantumState<R>) -> Result<R> {
        match self {
            NvState::Pure(psi) => crate::dynamics::fidelity(psi, target),
            NvState::Mixed(rho) => crate::dynamics::fidelity_density(rho, target),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NvState::Pure(psi) => psi.dim(),
            NvState::Mixed(rho) => rho.dim(),
        }
    }

    pub fn populations(&self) -> Vec<R> {
        match self {
            NvState::Pure(psi) => psi.populations(),
            NvState::Mixed(rho) => rho.populations(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolRun<R> {
    pub state: NvState<R>,
    pub total_time: R,
}
