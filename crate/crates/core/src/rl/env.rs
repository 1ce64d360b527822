//! Episode environments: observation encoding, action decoding, rewards.

use serde::{Deserialize, Serialize};

use crate::dynamics::fidelity;
use crate::error::{Error, Result};
use crate::nv::{ControlStep, NvModel, NvParams, NvState, TargetAngles};
use crate::scalar::Real;
use crate::toy::{toy_apply, toy_target, ToyAction};

/// How the target angles are appended to the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetEncoding {
    /// `(θ, φ)`
    #[default]
    Raw,
    /// `(θ, cos φ, sin φ)`
    Periodic,
}

impl TargetEncoding {
    pub fn len(self) -> usize {
        match self {
            TargetEncoding::Raw => 2,
            TargetEncoding::Periodic => 3,
        }
    }

    pub fn encode<R: Real>(self, target: TargetAngles<R>, out: &mut Vec<R>) {
        out.push(target.theta);
        match self {
            TargetEncoding::Raw => out.push(target.phi),
            TargetEncoding::Periodic => {
                out.push(target.phi.cos());
                out.push(target.phi.sin());
            }
        }
    }
}

/// Rectangle of target angles an environment is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetDomain {
    pub theta: (f64, f64),
    pub phi: (f64, f64),
}

impl TargetDomain {
    pub fn sphere() -> Self {
        Self {
            theta: (0.0, std::f64::consts::PI),
            phi: (0.0, std::f64::consts::TAU),
        }
    }

    pub fn equator() -> Self {
        Self {
            theta: (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            phi: (0.0, std::f64::consts::TAU),
        }
    }
}

/// Clamps a normalized component into `[-1/2, 1/2]` and maps it onto
/// `[lo, hi]`. Returns the physical value, the clamped normalized value and
/// the out-of-bounds excess.
pub fn decode_component<R: Real>(raw: R, lo: R, hi: R) -> (R, R, R) {
    let half = R::lit(0.5);
    let clamped = raw.max(-half).min(half);
    let excess = (raw.abs() - half).max(R::zero());
    (lo + (clamped + half) * (hi - lo), clamped, excess)
}

/// Decodes a raw 3-vector into `(Ω1, Ω2, Δt)` within the NV bounds, with the
/// linear out-of-bounds penalty `factor * Σ max(0, |raw_i| - 1/2)`.
pub fn decode_action<R: Real>(raw: &[R], params: &NvParams, penalty_factor: R) -> Result<(ControlStep<R>, R)> {
    if raw.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: raw.len(),
        });
    }
    let (wlo, whi) = params.omega_bounds::<R>();
    let (tlo, thi) = params.dt_bounds::<R>();
    let (omega1, _, e1) = decode_component(raw[0], wlo, whi);
    let (omega2, _, e2) = decode_component(raw[1], wlo, whi);
    let (dt, _, e3) = decode_component(raw[2], tlo, thi);
    Ok((ControlStep { omega1, omega2, dt }, penalty_factor * (e1 + e2 + e3)))
}

/// Physical state carried through an episode.
#[derive(Debug, Clone)]
pub enum Physics<R> {
    Toy(crate::dynamics::QuantumState<R>),
    Nv(NvState<R>),
    Bandit,
}

#[derive(Debug, Clone)]
pub struct Episode<R> {
    pub target: TargetAngles<R>,
    pub step: usize,
    /// Elapsed physical time.
    pub time: R,
    pub penalty: R,
    /// Clamped normalized actions, step-major.
    pub protocol: Vec<R>,
    pub physics: Physics<R>,
    pub done: bool,
    pub fault: Option<String>,
}

impl<R: Real> Episode<R> {
    fn new(target: TargetAngles<R>, physics: Physics<R>) -> Self {
        Self {
            target,
            step: 0,
            time: R::zero(),
            penalty: R::zero(),
            protocol: Vec::new(),
            physics,
            done: false,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<R> {
    pub obs: Vec<R>,
    pub reward: R,
    pub done: bool,
    /// Final fidelity (or bandit reward) on the terminal step.
    pub fidelity: Option<R>,
}

pub trait Environment<R: Real>: Send + Sync {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn n_steps(&self) -> usize;
    fn domain(&self) -> TargetDomain;
    fn reset(&self, target: TargetAngles<R>) -> Result<Episode<R>>;
    fn observe(&self, episode: &Episode<R>) -> Vec<R>;
    /// Applies one raw action. Intermediate rewards are exactly zero; the
    /// terminal reward is the final fidelity minus accumulated penalties. A
    /// propagation failure ends the episode with reward 0 and sets `fault`.
    fn step(&self, episode: &mut Episode<R>, raw_action: &[R]) -> Result<StepOutcome<R>>;
}

fn check_step<R>(episode: &Episode<R>, raw: &[R], action_dim: usize) -> Result<()> {
    if episode.done {
        return Err(Error::InvalidArgument("step called on a finished episode".into()));
    }
    if raw.len() != action_dim {
        return Err(Error::DimensionMismatch {
            expected: action_dim,
            got: raw.len(),
        });
    }
    Ok(())
}

fn push_state<R: Real>(psi: &crate::dynamics::QuantumState<R>, out: &mut Vec<R>) {
    out.extend(psi.amplitudes().iter().map(|a| a.re));
    out.extend(psi.amplitudes().iter().map(|a| a.im));
}

/// Two-rotation toy: one step emitting `(Ω_y, Ω_z)` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub shifted: bool,
    pub encoding: TargetEncoding,
    pub domain: TargetDomain,
    pub penalty_factor: f64,
}

impl ToyEnv {
    pub fn new(shifted: bool, encoding: TargetEncoding) -> Self {
        Self {
            shifted,
            encoding,
            domain: TargetDomain::equator(),
            penalty_factor: 0.2,
        }
    }
}

impl<R: Real> Environment<R> for ToyEnv {
    fn obs_dim(&self) -> usize {
        4 + self.encoding.len()
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn n_steps(&self) -> usize {
        1
    }

    fn domain(&self) -> TargetDomain {
        self.domain
    }

    fn reset(&self, target: TargetAngles<R>) -> Result<Episode<R>> {
        let target = TargetAngles::new(target.theta, target.phi)?;
        Ok(Episode::new(
            target,
            Physics::Toy(crate::dynamics::QuantumState::basis(2, 0)),
        ))
    }

    fn observe(&self, episode: &Episode<R>) -> Vec<R> {
        let mut out = Vec::with_capacity(<Self as Environment<R>>::obs_dim(self));
        if let Physics::Toy(psi) = &episode.physics {
            push_state(psi, &mut out);
        }
        self.encoding.encode(episode.target, &mut out);
        out
    }

    fn step(&self, episode: &mut Episode<R>, raw: &[R]) -> Result<StepOutcome<R>> {
        check_step(episode, raw, 2)?;
        let (oy, cy, ey) = decode_component(raw[0], R::zero(), R::one());
        let (oz, cz, ez) = decode_component(raw[1], R::zero(), R::one());
        episode.penalty += R::lit(self.penalty_factor) * (ey + ez);
        episode.protocol.extend([cy, cz]);
        let psi = toy_apply(ToyAction {
            omega_y: oy,
            omega_z: oz,
        });
        let target = toy_target(episode.target.theta, episode.target.phi, self.shifted)?;
        let f = fidelity(&psi, &target)?;
        episode.physics = Physics::Toy(psi);
        episode.step = 1;
        episode.done = true;
        Ok(StepOutcome {
            obs: self.observe(episode),
            reward: f - episode.penalty,
            done: true,
            fidelity: Some(f),
        })
    }
}

/// NV center driven by `N_T` piecewise-constant steps of `(Ω1, Ω2, Δt)`.
///
/// Closed mode observes `[Re ψ, Im ψ]`; open mode observes the density
/// matrix as its real upper triangle followed by the imaginary strict upper
/// triangle (`d²` numbers).
#[derive(Debug, Clone)]
pub struct NvEnv<R> {
    model: NvModel<R>,
    pub encoding: TargetEncoding,
    pub domain: TargetDomain,
    pub penalty_factor: f64,
}

impl<R: Real> NvEnv<R> {
    pub fn new(params: NvParams, encoding: TargetEncoding) -> Result<Self> {
        Ok(Self {
            model: NvModel::new(params)?,
            encoding,
            domain: TargetDomain::sphere(),
            penalty_factor: 0.2,
        })
    }

    pub fn model(&self) -> &NvModel<R> {
        &self.model
    }

    fn state_len(&self) -> usize {
        let d = self.model.dim();
        match self.model.mode() {
            crate::nv::NvMode::Closed => 2 * d,
            crate::nv::NvMode::Open => d * d,
        }
    }
}

impl<R: Real> Environment<R> for NvEnv<R> {
    fn obs_dim(&self) -> usize {
        self.state_len() + self.encoding.len()
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn n_steps(&self) -> usize {
        self.model.params().n_steps
    }

    fn domain(&self) -> TargetDomain {
        self.domain
    }

    fn reset(&self, target: TargetAngles<R>) -> Result<Episode<R>> {
        let target = TargetAngles::new(target.theta, target.phi)?;
        let initial = self.model.initial_state();
        Ok(Episode::new(target, Physics::Nv(self.model.prepare(&initial))))
    }

    fn observe(&self, episode: &Episode<R>) -> Vec<R> {
        let mut out = Vec::with_capacity(self.obs_dim());
        match &episode.physics {
            Physics::Nv(NvState::Pure(psi)) => push_state(psi, &mut out),
            Physics::Nv(NvState::Mixed(rho)) => {
                let m = rho.matrix();
                let d = m.dim();
                for i in 0..d {
                    for j in i..d {
                        out.push(m[(i, j)].re);
                    }
                }
                for i in 0..d {
                    for j in i + 1..d {
                        out.push(m[(i, j)].im);
                    }
                }
            }
            _ => out.resize(self.state_len(), R::zero()),
        }
        self.encoding.encode(episode.target, &mut out);
        out
    }

    fn step(&self, episode: &mut Episode<R>, raw: &[R]) -> Result<StepOutcome<R>> {
        check_step(episode, raw, 3)?;
        let (step, penalty) = decode_action(raw, self.model.params(), R::lit(self.penalty_factor))?;
        episode.penalty += penalty;
        let (lo, hi) = self.model.params().omega_bounds::<R>();
        let (tlo, thi) = self.model.params().dt_bounds::<R>();
        episode.protocol.extend([
            decode_component(raw[0], lo, hi).1,
            decode_component(raw[1], lo, hi).1,
            decode_component(raw[2], tlo, thi).1,
        ]);
        let Physics::Nv(state) = &episode.physics else {
            return Err(Error::InvalidArgument("episode does not belong to an NV environment".into()));
        };
        match self.model.advance(state, &step, episode.time) {
            Ok(next) => episode.physics = Physics::Nv(next),
            Err(e) => {
                episode.fault = Some(e.to_string());
                episode.done = true;
                episode.step += 1;
                return Ok(StepOutcome {
                    obs: self.observe(episode),
                    reward: R::zero(),
                    done: true,
                    fidelity: Some(R::zero()),
                });
            }
        }
        episode.time += step.dt;
        episode.step += 1;
        let done = episode.step == self.n_steps();
        episode.done = done;
        let (reward, fid) = if done {
            let Physics::Nv(state) = &episode.physics else { unreachable!() };
            let target = self.model.target_state(episode.target)?;
            let f = state.fidelity(&target)?;
            (f - episode.penalty, Some(f))
        } else {
            (R::zero(), None)
        };
        Ok(StepOutcome {
            obs: self.observe(episode),
            reward,
            done,
            fidelity: fid,
        })
    }
}

/// Single-state bandit with reward `-(a - optimum)²`, used as a PPO sanity check.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub optimum: f64,
}

impl<R: Real> Environment<R> for BanditEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn n_steps(&self) -> usize {
        1
    }

    fn domain(&self) -> TargetDomain {
        TargetDomain::equator()
    }

    fn reset(&self, target: TargetAngles<R>) -> Result<Episode<R>> {
        Ok(Episode::new(target, Physics::Bandit))
    }

    fn observe(&self, _: &Episode<R>) -> Vec<R> {
        vec![R::one()]
    }

    fn step(&self, episode: &mut Episode<R>, raw: &[R]) -> Result<StepOutcome<R>> {
        check_step(episode, raw, 1)?;
        let d = raw[0] - R::lit(self.optimum);
        episode.protocol.push(raw[0]);
        episode.step = 1;
        episode.done = true;
        let reward = -d * d;
        Ok(StepOutcome {
            obs: vec![R::one()],
            reward,
            done: true,
            fidelity: Some(reward),
        })
    }
}

/// Any of the built-in environments.
#[derive(Debug, Clone)]
pub enum AnyEnv<R> {
    Toy(ToyEnv),
    Nv(NvEnv<R>),
    Bandit(BanditEnv),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Toy($e) => $body,
            AnyEnv::Nv($e) => $body,
            AnyEnv::Bandit($e) => $body,
        }
    };
}

impl<R: Real> Environment<R> for AnyEnv<R> {
    fn obs_dim(&self) -> usize {
        dispatch!(self, e => Environment::<R>::obs_dim(e))
    }

    fn action_dim(&self) -> usize {
        dispatch!(self, e => Environment::<R>::action_dim(e))
    }

    fn n_steps(&self) -> usize {
        dispatch!(self, e => Environment::<R>::n_steps(e))
    }

    fn domain(&self) -> TargetDomain {
        dispatch!(self, e => Environment::<R>::domain(e))
    }

    fn reset(&self, target: TargetAngles<R>) -> Result<Episode<R>> {
        dispatch!(self, e => e.reset(target))
    }

    fn observe(&self, episode: &Episode<R>) -> Vec<R> {
        dispatch!(self, e => e.observe(episode))
    }

    fn step(&self, episode: &mut Episode<R>, raw: &[R]) -> Result<StepOutcome<R>> {
        dispatch!(self, e => e.step(episode, raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_analytic;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn nv_env() -> NvEnv<f64> {
        NvEnv::new(NvParams::default(), TargetEncoding::Raw).unwrap()
    }

    #[test]
    fn decode_examples() {
        let p = NvParams::default();
        let (s, pen) = decode_action(&[0.0f64, 0.0, 0.0], &p, 0.2).unwrap();
        assert!(s.omega1.abs() < 1e-12 && s.omega2.abs() < 1e-12);
        assert!((s.dt - (0.2 + 0.8) / 18.0).abs() < 1e-15);
        assert_eq!(pen, 0.0);

        let (s, pen) = decode_action(&[0.5, -0.5, 0.5], &p, 0.2).unwrap();
        let (lo, hi) = p.omega_bounds::<f64>();
        assert_eq!((s.omega1, s.omega2), (hi, lo));
        assert!((s.dt - 0.8 / 9.0).abs() < 1e-15);
        assert_eq!(pen, 0.0);

        let (s, pen) = decode_action(&[1.0, 0.0, 0.0], &p, 0.2).unwrap();
        assert_eq!(s.omega1, hi);
        assert!((pen - 0.1).abs() < 1e-15);

        assert!(decode_action(&[0.0, 0.0], &p, 0.2).is_err());
    }

    #[test]
    fn observation_lengths() {
        let env = nv_env();
        assert_eq!(Environment::<f64>::obs_dim(&env), 18);
        let ep = env.reset(TargetAngles::new(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(env.observe(&ep).len(), 18);

        let periodic = NvEnv::<f64>::new(NvParams::default(), TargetEncoding::Periodic).unwrap();
        let ep = periodic.reset(TargetAngles::new(1.0, 2.0).unwrap()).unwrap();
        let obs = periodic.observe(&ep);
        assert_eq!(obs.len(), 19);
        assert_eq!(&obs[16..], &[1.0, 2.0f64.cos(), 2.0f64.sin()]);

        let open = NvEnv::<f64>::new(
            NvParams {
                mode: crate::nv::NvMode::Open,
                ..NvParams::default()
            },
            TargetEncoding::Raw,
        )
        .unwrap();
        let ep = open.reset(TargetAngles::new(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(open.observe(&ep).len(), 102);
        assert_eq!(Environment::<f64>::obs_dim(&open), 102);

        let toy = ToyEnv::new(false, TargetEncoding::Raw);
        assert_eq!(Environment::<f64>::obs_dim(&toy), 6);
    }

    #[test]
    fn toy_analytic_action_gives_unit_reward() {
        for shifted in [false, true] {
            let env = ToyEnv::new(shifted, TargetEncoding::Raw);
            for k in 0..16 {
                let phi = 0.3 + k as f64 * 0.37;
                let a = toy_analytic(phi, shifted);
                let mut ep = env.reset(TargetAngles::new(FRAC_PI_2, phi).unwrap()).unwrap();
                let out = env.step(&mut ep, &[a.omega_y - 0.5, a.omega_z - 0.5]).unwrap();
                assert!(out.done);
                assert!((out.reward - 1.0).abs() < 1e-9, "phi {phi}: {}", out.reward);
            }
        }
    }

    #[test]
    fn toy_penalty_reduces_reward() {
        let env = ToyEnv::new(false, TargetEncoding::Raw);
        let mut ep = env.reset(TargetAngles::new(FRAC_PI_2, 0.0).unwrap()).unwrap();
        let out = env.step(&mut ep, &[0.0, -1.0]).unwrap();
        assert!((out.fidelity.unwrap() - out.reward - 0.1).abs() < 1e-12);
        assert!(env.step(&mut ep, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn nv_intermediate_rewards_are_zero_and_zero_drive_keeps_ground() {
        let env = nv_env();
        let mut ep = env.reset(TargetAngles::new(0.0, 0.0).unwrap()).unwrap();
        // raw -0.5/+0.5 on the symmetric bounds -> Ω = lo/hi; 0 -> Ω = 0
        for k in 0..9 {
            let out = env.step(&mut ep, &[0.0, 0.0, -0.5]).unwrap();
            if k < 8 {
                assert_eq!(out.reward, 0.0);
                assert!(!out.done);
            } else {
                assert!(out.done);
                assert!((out.reward - 1.0).abs() < 1e-9);
            }
        }
        assert!((ep.time - 0.2).abs() < 1e-12);
        assert_eq!(ep.protocol.len(), 27);
    }

    #[test]
    fn nv_reward_bounded() {
        let env = nv_env();
        let mut ep = env.reset(TargetAngles::new(PI / 3.0, 1.0).unwrap()).unwrap();
        let mut last = None;
        for k in 0..9 {
            let s = if k % 2 == 0 { 0.5 } else { -0.5 };
            last = Some(env.step(&mut ep, &[s, -s, 0.5]).unwrap());
        }
        let r = last.unwrap().reward;
        assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn bandit_reward() {
        let env = BanditEnv { optimum: 0.3 };
        let mut ep = Environment::<f64>::reset(&env, TargetAngles::new(0.0, 0.0).unwrap()).unwrap();
        let out = env.step(&mut ep, &[0.5]).unwrap();
        assert!((out.reward + 0.04).abs() < 1e-15);
    }
}
