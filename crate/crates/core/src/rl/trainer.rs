//! Training loop: biased target sampling, rollouts, PPO updates and the
//! binned training curve.
//!
//! Each episode draws its own RNG seed from the trainer RNG before the batch
//! is rolled out, so a batch gives the same result for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RlConfig;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::nv::TargetAngles;
use crate::rl::buffer::{RolloutBuffer, Transition};
use crate::rl::env::{AnyEnv, Environment};
use crate::rl::ppo::{ppo_update, ActorCritic, PpoParams, UpdateStats};
use crate::rl::sampler::TargetSampler;
use crate::scalar::Real;

pub const CURVE_BIN: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub bin: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-bin fidelity statistics over consecutive episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub bin_size: u64,
    pub bins: Vec<CurveBin>,
    open_count: u64,
    open_sum: f64,
    open_min: f64,
    open_max: f64,
}

impl TrainingCurve {
    pub fn new(bin_size: u64) -> Self {
        Self {
            bin_size: bin_size.max(1),
            bins: Vec::new(),
            open_count: 0,
            open_sum: 0.0,
            open_min: 0.0,
            open_max: 0.0,
        }
    }

    pub fn push(&mut self, f: f64) {
        if self.open_count == 0 {
            self.open_min = f;
            self.open_max = f;
        }
        self.open_count += 1;
        self.open_sum += f;
        self.open_min = self.open_min.min(f);
        self.open_max = self.open_max.max(f);
        if self.open_count == self.bin_size {
            self.bins.push(CurveBin {
                bin: self.bins.len() as u64,
                mean: self.open_sum / self.open_count as f64,
                min: self.open_min,
                max: self.open_max,
            });
            *self = Self {
                bins: std::mem::take(&mut self.bins),
                ..Self::new(self.bin_size)
            };
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode_bin,mean_F,min_F,max_F\n");
        for b in &self.bins {
            s.push_str(&format!("{},{},{},{}\n", b.bin, b.mean, b.min, b.max));
        }
        s
    }
}

/// Everything needed to resume training bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState<R> {
    pub ac: ActorCritic<R>,
    pub sampler: TargetSampler,
    pub rng: ChaCha8Rng,
    pub episode: u64,
    pub updates: u64,
    pub faults: u64,
    pub buffer: RolloutBuffer<R>,
    pub curve: TrainingCurve,
}

/// Result of one stochastic training episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord<R> {
    pub target: TargetAngles<R>,
    pub transitions: Vec<Transition<R>>,
    pub fidelity: R,
    pub fault: Option<String>,
}

/// Samples one episode from the policy. Values are filled from the critic.
pub fn rollout<R: Real, E: Environment<R> + ?Sized>(
    env: &E,
    ac: &ActorCritic<R>,
    target: TargetAngles<R>,
    rng: &mut impl Rng,
) -> Result<EpisodeRecord<R>> {
    let mut ep = env.reset(target)?;
    let mut obs = env.observe(&ep);
    let mut transitions = Vec::with_capacity(env.n_steps());
    let mut fidelity = R::zero();
    while !ep.done {
        let (action, logp) = ac.policy.sample(&obs, rng)?;
        let value = ac.value_of(&obs)?;
        let out = env.step(&mut ep, &action)?;
        transitions.push(Transition::new(obs, action, logp, out.reward, value));
        if let Some(f) = out.fidelity {
            fidelity = f;
        }
        obs = out.obs;
    }
    Ok(EpisodeRecord {
        target,
        transitions,
        fidelity,
        fault: ep.fault,
    })
}

/// Deterministic (`a = μ`) episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun<R> {
    pub fidelity: R,
    pub reward: R,
    pub time: R,
    /// Clamped normalized actions, step-major.
    pub protocol: Vec<R>,
    /// Unclamped policy means.
    pub raw_actions: Vec<R>,
    pub fault: Option<String>,
}

pub fn greedy_episode<R: Real, E: Environment<R> + ?Sized>(
    env: &E,
    policy: &GaussianPolicy<R>,
    target: TargetAngles<R>,
) -> Result<GreedyRun<R>> {
    let mut ep = env.reset(target)?;
    let mut obs = env.observe(&ep);
    let mut raw_actions = Vec::new();
    let mut fidelity = R::zero();
    let mut reward = R::zero();
    while !ep.done {
        let mean = policy.mean(&obs)?;
        let out = env.step(&mut ep, &mean)?;
        raw_actions.extend(mean);
        reward += out.reward;
        if let Some(f) = out.fidelity {
            fidelity = f;
        }
        obs = out.obs;
    }
    Ok(GreedyRun {
        fidelity,
        reward,
        time: ep.time,
        protocol: ep.protocol,
        raw_actions,
        fault: ep.fault,
    })
}

/// Summary of one collect-and-update cycle.
#[derive(Debug, Clone)]
pub struct BatchReport<R> {
    pub episode: u64,
    pub mean_fidelity: f64,
    pub stats: UpdateStats<R>,
}

pub struct Trainer<R> {
    env: AnyEnv<R>,
    cfg: RlConfig,
    state: TrainerState<R>,
    pool: Option<rayon::ThreadPool>,
}

impl<R: Real> Trainer<R> {
    pub fn new(env: AnyEnv<R>, cfg: RlConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ac = ActorCritic::new(
            env.obs_dim(),
            env.action_dim(),
            cfg.neurons,
            R::lit(cfg.initial_log_sigma),
            R::lit(cfg.output_gain),
            &mut rng,
        )?;
        if !cfg.initial_log_sigma_per_action.is_empty() {
            if cfg.initial_log_sigma_per_action.len() != env.action_dim() {
                return Err(Error::Config(format!(
                    "rl.initial_log_sigma_per_action has {} entries, the environment has {} actions",
                    cfg.initial_log_sigma_per_action.len(),
                    env.action_dim()
                )));
            }
            ac.policy.log_sigma = cfg.initial_log_sigma_per_action.iter().map(|&x| R::lit(x)).collect();
        }
        let sampler = TargetSampler::new(
            cfg.sampler_grid[0],
            cfg.sampler_grid[1],
            env.domain(),
            cfg.eta,
            cfg.sampler_window,
        )?;
        let buffer = RolloutBuffer::new(env.n_steps(), cfg.batch_episodes * cfg.buffer_batches);
        let state = TrainerState {
            ac,
            sampler,
            rng,
            episode: 0,
            updates: 0,
            faults: 0,
            buffer,
            curve: TrainingCurve::new(CURVE_BIN),
        };
        Self::from_state(env, cfg, state)
    }

    /// Resumes from a saved state.
    pub fn from_state(env: AnyEnv<R>, cfg: RlConfig, state: TrainerState<R>) -> Result<Self> {
        if state.ac.policy.mean_net.input_dim() != env.obs_dim()
            || state.ac.policy.action_dim() != env.action_dim()
        {
            return Err(Error::Config(format!(
                "network shape {:?} does not fit environment (obs {}, action {})",
                state.ac.policy.mean_net.layer_dims(),
                env.obs_dim(),
                env.action_dim()
            )));
        }
        Ok(Self {
            env,
            cfg,
            state,
            pool: None,
        })
    }

    /// Number of rollout threads; 1 runs inline.
    pub fn set_workers(&mut self, workers: usize) -> Result<()> {
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(())
    }

    pub fn env(&self) -> &AnyEnv<R> {
        &self.env
    }

    pub fn config(&self) -> &RlConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainerState<R> {
        &self.state
    }

    pub fn into_state(self) -> TrainerState<R> {
        self.state
    }

    pub fn policy(&self) -> &GaussianPolicy<R> {
        &self.state.ac.policy
    }

    fn ppo_params(&self) -> PpoParams<R> {
        PpoParams {
            clip_eps: R::lit(self.cfg.clip_eps),
            lr: R::lit(self.cfg.lr),
            epochs: self.cfg.update_epochs,
            normalize_advantages: self.cfg.normalize_advantages,
        }
    }

    /// Collects up to one batch (never past `cfg.episodes`) and updates.
    pub fn run_batch(&mut self) -> Result<BatchReport<R>> {
        let remaining = self.cfg.episodes.saturating_sub(self.state.episode);
        let n = (self.cfg.batch_episodes as u64).min(remaining.max(1)) as usize;
        let jobs: Vec<(TargetAngles<R>, u64)> = (0..n)
            .map(|_| {
                let target = self.state.sampler.sample::<R>(&mut self.state.rng);
                (target, self.state.rng.random::<u64>())
            })
            .collect();
        let env = &self.env;
        let ac = &self.state.ac;
        let run = |&(target, seed): &(TargetAngles<R>, u64)| {
            rollout(env, ac, target, &mut ChaCha8Rng::seed_from_u64(seed))
        };
        let records: Vec<Result<EpisodeRecord<R>>> = match &self.pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            None => jobs.iter().map(run).collect(),
        };

        let mut sum = 0.0;
        for rec in records {
            let rec = rec?;
            let f = rec.fidelity.as_f64();
            sum += f;
            self.state
                .sampler
                .record(rec.target.theta.as_f64(), rec.target.phi.as_f64(), f);
            self.state.curve.push(f);
            self.state.episode += 1;
            if rec.fault.is_some() || rec.transitions.len() != self.env.n_steps() {
                self.state.faults += 1;
                continue;
            }
            self.state.buffer.push_episode(rec.transitions)?;
        }

        let mut stats = UpdateStats::default();
        if !self.state.buffer.is_empty() {
            self.state.buffer.compute_returns(R::lit(self.cfg.gamma))?;
            let params = self.ppo_params();
            stats = ppo_update(&mut self.state.ac, &self.state.buffer, &params)?;
            self.state.updates += 1;
        }
        if self.cfg.buffer_batches <= 1 {
            self.state.buffer.clear();
        }
        Ok(BatchReport {
            episode: self.state.episode,
            mean_fidelity: sum / n as f64,
            stats,
        })
    }

    /// Trains until `cfg.episodes`. `on_batch` runs after every update; an
    /// error from it stops training.
    pub fn train(&mut self, mut on_batch: impl FnMut(&Self, &BatchReport<R>) -> Result<()>) -> Result<()> {
        while self.state.episode < self.cfg.episodes {
            let report = self.run_batch()?;
            on_batch(self, &report)?;
        }
        Ok(())
    }

    /// Trains until the episode counter reaches `episodes` (capped by the config).
    pub fn train_to(&mut self, episodes: u64) -> Result<()> {
        let limit = episodes.min(self.cfg.episodes);
        while self.state.episode < limit {
            let saved = self.cfg.episodes;
            self.cfg.episodes = limit;
            let r = self.run_batch();
            self.cfg.episodes = saved;
            r?;
        }
        Ok(())
    }

    pub fn evaluate(&self, target: TargetAngles<R>) -> Result<GreedyRun<R>> {
        greedy_episode(&self.env, &self.state.ac.policy, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::BanditEnv;

    fn bandit_cfg() -> RlConfig {
        RlConfig {
            neurons: 8,
            episodes: 640,
            lr: 1e-3,
            batch_episodes: 32,
            update_epochs: 4,
            seed: 3,
            ..RlConfig::default()
        }
    }

    #[test]
    fn curve_bins() {
        let mut c = TrainingCurve::new(2);
        for f in [0.2, 0.4, 1.0] {
            c.push(f);
        }
        assert_eq!(c.bins.len(), 1);
        assert!((c.bins[0].mean - 0.3).abs() < 1e-15);
        assert_eq!((c.bins[0].min, c.bins[0].max), (0.2, 0.4));
        assert!(c.to_csv().starts_with("episode_bin,mean_F,min_F,max_F\n0,"));
    }

    #[test]
    fn same_seed_same_state() {
        let run = || {
            let mut t = Trainer::<f64>::new(AnyEnv::Bandit(BanditEnv { optimum: 0.3 }), bandit_cfg()).unwrap();
            t.train(|_, _| Ok(())).unwrap();
            t.into_state()
        };
        let a = run();
        assert_eq!(a.episode, 640);
        assert_eq!(a.updates, 20);
        assert_eq!(a, run());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let run = |w| {
            let mut t = Trainer::<f64>::new(AnyEnv::Bandit(BanditEnv { optimum: 0.3 }), bandit_cfg()).unwrap();
            t.set_workers(w).unwrap();
            t.train_to(128).unwrap();
            t.into_state()
        };
        assert_eq!(run(1), run(3));
    }
}
