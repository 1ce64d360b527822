//! Clipped PPO update for a Gaussian actor and an MLP critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{AdamState, GaussianPolicy, Mlp};
use crate::rl::buffer::RolloutBuffer;
use crate::scalar::Real;

/// Actor, critic and their optimizer states. The actor's Adam state covers
/// the mean-network parameters followed by `log_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic<R> {
    pub policy: GaussianPolicy<R>,
    pub value: Mlp<R>,
    pub policy_opt: AdamState<R>,
    pub value_opt: AdamState<R>,
}

impl<R: Real> ActorCritic<R> {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: usize,
        initial_log_sigma: R,
        output_gain: R,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mean = Mlp::two_hidden(obs_dim, hidden, action_dim, output_gain, rng)?;
        let value = Mlp::two_hidden(obs_dim, hidden, 1, R::one(), rng)?;
        Ok(Self::from_nets(GaussianPolicy::new(mean, initial_log_sigma), value))
    }

    pub fn from_nets(policy: GaussianPolicy<R>, value: Mlp<R>) -> Self {
        let np = policy.mean_net.num_params() + policy.log_sigma.len();
        let nv = value.num_params();
        Self {
            policy,
            value,
            policy_opt: AdamState::new(np),
            value_opt: AdamState::new(nv),
        }
    }

    pub fn value_of(&self, obs: &[R]) -> Result<R> {
        Ok(self.value.forward(obs)?[0])
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.value.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoParams<R> {
    pub clip_eps: R,
    pub lr: R,
    /// Full-batch gradient steps per update.
    pub epochs: usize,
    pub normalize_advantages: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats<R> {
    /// Policy loss at the first epoch.
    pub policy_loss: R,
    /// Value loss at the first epoch.
    pub value_loss: R,
    /// Fraction of samples whose ratio was clipped in the last epoch.
    pub clip_fraction: R,
}

/// `min(b A, clip(b, 1-ε, 1+ε) A)`.
pub fn clipped_objective<R: Real>(ratio: R, advantage: R, clip_eps: R) -> R {
    let clipped = ratio.max(R::one() - clip_eps).min(R::one() + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

fn normalized_advantages<R: Real>(buffer: &RolloutBuffer<R>, normalize: bool) -> Vec<R> {
    let adv: Vec<R> = buffer.transitions().map(|t| t.advantage).collect();
    if !normalize || adv.len() < 2 {
        return adv;
    }
    let n = R::lit(adv.len() as f64);
    let mean = adv.iter().copied().sum::<R>() / n;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<R>() / n;
    let std = var.sqrt() + R::lit(1e-8);
    adv.into_iter().map(|a| (a - mean) / std).collect()
}

/// Policy-loss gradient w.r.t. (mean-net params, log σ), the loss value and
/// the clipped fraction.
pub(crate) fn policy_gradient<R: Real>(
    policy: &GaussianPolicy<R>,
    buffer: &RolloutBuffer<R>,
    advantages: &[R],
    clip_eps: R,
) -> Result<(Vec<R>, R, R)> {
    let np = policy.mean_net.num_params();
    let mut grad = vec![R::zero(); np + policy.log_sigma.len()];
    let inv_sigma2: Vec<R> = policy.log_sigma.iter().map(|l| (-(*l + *l)).exp()).collect();
    let n = R::lit(buffer.len() as f64);
    let mut loss = R::zero();
    let mut clipped = 0usize;
    for (tr, &adv) in buffer.transitions().zip(advantages) {
        let trace = policy.mean_net.forward_trace(&tr.obs)?;
        let mean = trace.output();
        let logp = crate::nn::gaussian_log_prob(&tr.action, mean, &policy.log_sigma);
        let ratio = (logp - tr.logp).exp();
        let objective = clipped_objective(ratio, adv, clip_eps);
        loss -= objective / n;
        if ratio * adv > objective {
            clipped += 1;
            continue;
        }
        let coef = -adv * ratio / n;
        let upstream: Vec<R> = tr
            .action
            .iter()
            .zip(mean)
            .zip(&inv_sigma2)
            .map(|((&a, &m), &is2)| coef * (a - m) * is2)
            .collect();
        policy.mean_net.backward(&trace, &upstream, &mut grad[..np]);
        for (i, ((&a, &m), &is2)) in tr.action.iter().zip(mean).zip(&inv_sigma2).enumerate() {
            grad[np + i] += coef * ((a - m) * (a - m) * is2 - R::one());
        }
    }
    let frac = R::lit(clipped as f64) / n;
    Ok((grad, loss, frac))
}

fn value_gradient<R: Real>(value: &Mlp<R>, buffer: &RolloutBuffer<R>) -> Result<(Vec<R>, R)> {
    let mut grad = vec![R::zero(); value.num_params()];
    let n = R::lit(buffer.len() as f64);
    let mut loss = R::zero();
    for tr in buffer.transitions() {
        let trace = value.forward_trace(&tr.obs)?;
        let diff = trace.output()[0] - tr.ret;
        loss += diff * diff / n;
        value.backward(&trace, &[R::lit(2.0) * diff / n], &mut grad);
    }
    Ok((grad, loss))
}

/// Runs `params.epochs` full-batch steps of the clipped policy loss and the
/// squared-error value loss. Returns must already be computed. The networks
/// are only modified if every step stays finite.
pub fn ppo_update<R: Real>(
    ac: &mut ActorCritic<R>,
    buffer: &RolloutBuffer<R>,
    params: &PpoParams<R>,
) -> Result<UpdateStats<R>> {
    if buffer.is_empty() {
        return Err(invalid("ppo update on an empty buffer"));
    }
    let adv = normalized_advantages(buffer, params.normalize_advantages);
    let mut next = ac.clone();
    let mut stats = UpdateStats::default();
    let np = next.policy.mean_net.num_params();
    for epoch in 0..params.epochs.max(1) {
        let (pg, pl, frac) = policy_gradient(&next.policy, buffer, &adv, params.clip_eps)?;
        let (vg, vl) = value_gradient(&next.value, buffer)?;
        if !pl.is_finite() || !vl.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at epoch {epoch}: policy {pl}, value {vl}"
            )));
        }
        if epoch == 0 {
            stats.policy_loss = pl;
            stats.value_loss = vl;
        }
        stats.clip_fraction = frac;

        let mut flat: Vec<R> = next.policy.mean_net.params().to_vec();
        flat.extend_from_slice(&next.policy.log_sigma);
        next.policy_opt.step(&mut flat, &pg, params.lr)?;
        next.policy.mean_net.params_mut().copy_from_slice(&flat[..np]);
        next.policy.log_sigma.copy_from_slice(&flat[np..]);
        next.value_opt.step(next.value.params_mut(), &vg, params.lr)?;
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("network parameters after update".into()));
    }
    *ac = next;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gaussian_log_prob;
    use crate::rl::buffer::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_examples() {
        assert!((clipped_objective(1.2f64, 1.0, 0.05) - 1.05).abs() < 1e-15);
        for eps in [0.0, 0.05, 0.3] {
            assert_eq!(clipped_objective(1.0, -0.7, eps), -0.7);
        }
        assert!((clipped_objective(0.5f64, -1.0, 0.05) + 0.95).abs() < 1e-15);
        assert_eq!(clipped_objective(3.0, 2.0, f64::INFINITY), 6.0);
    }

    fn one_param_batch() -> (GaussianPolicy<f64>, RolloutBuffer<f64>, Vec<f64>) {
        // mean = w * 1, a single weight, no hidden layer
        let net = Mlp::from_parts(vec![1, 1], vec![0.2, 0.0]).unwrap();
        let policy = GaussianPolicy::new(net, 0.3f64.ln());
        let mut buf = RolloutBuffer::new(1, 16);
        let actions = [0.5, -0.1, 0.25, 0.9];
        let advs = [1.0, -0.5, 0.3, 2.0];
        for (&a, &adv) in actions.iter().zip(&advs) {
            let logp = policy.log_prob(&[1.0], &[a]).unwrap();
            let mut t = Transition::new(vec![1.0], vec![a], logp, 0.0, 0.0);
            t.advantage = adv;
            buf.push_episode(vec![t]).unwrap();
        }
        (policy, buf, advs.to_vec())
    }

    #[test]
    fn unclipped_first_step_equals_vanilla_policy_gradient() {
        let (policy, buf, advs) = one_param_batch();
        let (g, _, frac) = policy_gradient(&policy, &buf, &advs, f64::INFINITY).unwrap();
        assert_eq!(frac, 0.0);
        let sigma = 0.3;
        let mut vanilla_w = 0.0;
        let mut vanilla_ls = 0.0;
        for (t, &adv) in buf.transitions().zip(&advs) {
            let a = t.action[0];
            vanilla_w += -adv * (a - 0.2) / (sigma * sigma);
            vanilla_ls += -adv * ((a - 0.2) * (a - 0.2) / (sigma * sigma) - 1.0);
        }
        let n = advs.len() as f64;
        assert!((g[0] - vanilla_w / n).abs() < 1e-12);
        assert!((g[1] - vanilla_w / n).abs() < 1e-12, "bias enters like w for unit input");
        assert!((g[2] - vanilla_ls / n).abs() < 1e-12);
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let (policy, buf, advs) = one_param_batch();
        let mut shifted = policy.clone();
        shifted.mean_net.params_mut()[0] = 0.23;
        // old logp now differs, so ratios are away from one
        let eps = 0.5;
        let (g, _, _) = policy_gradient(&shifted, &buf, &advs, eps).unwrap();
        let loss_at = |w: f64, ls: f64| {
            let mut p = shifted.clone();
            p.mean_net.params_mut()[0] = w;
            p.log_sigma[0] = ls;
            let n = buf.len() as f64;
            -buf.transitions()
                .zip(&advs)
                .map(|(t, &adv)| {
                    let lp = gaussian_log_prob(&t.action, &[w], &[ls]);
                    clipped_objective((lp - t.logp).exp(), adv, eps)
                })
                .sum::<f64>()
                / n
        };
        let h = 1e-6f64;
        let ls = shifted.log_sigma[0];
        let fd_w = (loss_at(0.23 + h, ls) - loss_at(0.23 - h, ls)) / (2.0 * h);
        let fd_ls = (loss_at(0.23, ls + h) - loss_at(0.23, ls - h)) / (2.0 * h);
        assert!((g[0] - fd_w).abs() < 1e-6, "{} vs {fd_w}", g[0]);
        assert!((g[2] - fd_ls).abs() < 1e-6, "{} vs {fd_ls}", g[2]);
    }

    #[test]
    fn update_rejects_empty_buffer_and_keeps_nets_on_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ac = ActorCritic::<f64>::new(1, 1, 4, 0.5f64.ln(), 1.0, &mut rng).unwrap();
        let params = PpoParams {
            clip_eps: 0.05,
            lr: 1e-3,
            epochs: 2,
            normalize_advantages: true,
        };
        assert!(ppo_update(&mut ac, &RolloutBuffer::new(1, 4), &params).is_err());

        let mut buf = RolloutBuffer::new(1, 4);
        let mut t = Transition::new(vec![1.0], vec![0.1], 0.0, f64::NAN, 0.0);
        t.ret = f64::NAN;
        buf.push_episode(vec![t]).unwrap();
        let before = ac.clone();
        assert!(matches!(ppo_update(&mut ac, &buf, &params), Err(Error::NonFinite(_))));
        assert_eq!(ac, before);
    }
}
