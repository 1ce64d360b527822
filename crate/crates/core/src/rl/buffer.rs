use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<R> {
    pub obs: Vec<R>,
    pub action: Vec<R>,
    pub logp: R,
    pub reward: R,
    pub value: R,
    pub advantage: R,
    pub ret: R,
}

impl<R: Real> Transition<R> {
    pub fn new(obs: Vec<R>, action: Vec<R>, logp: R, reward: R, value: R) -> Self {
        Self {
            obs,
            action,
            logp,
            reward,
            value,
            advantage: R::zero(),
            ret: R::zero(),
        }
    }
}

/// Transitions grouped by episode. Only episodes of exactly `n_steps`
/// transitions may be stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer<R> {
    n_steps: usize,
    capacity: usize,
    episodes: Vec<Vec<Transition<R>>>,
}

impl<R: Real> RolloutBuffer<R> {
    /// `capacity` is in episodes; the oldest episodes are evicted first.
    pub fn new(n_steps: usize, capacity: usize) -> Self {
        Self {
            n_steps,
            capacity: capacity.max(1),
            episodes: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn push_episode(&mut self, episode: Vec<Transition<R>>) -> Result<()> {
        if episode.len() != self.n_steps {
            return Err(Error::IncompleteEpisode(self.episodes.len()));
        }
        self.episodes.push(episode);
        if self.episodes.len() > self.capacity {
            let excess = self.episodes.len() - self.capacity;
            self.episodes.drain(..excess);
        }
        Ok(())
    }

    pub fn episodes(&self) -> &[Vec<Transition<R>>] {
        &self.episodes
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn len(&self) -> usize {
        self.episodes.len() * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.episodes.clear();
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition<R>> {
        self.episodes.iter().flatten()
    }

    /// Fills `ret_t = Σ_{k≥t} γ^{k-t} r_k` and `advantage_t = ret_t - V(s_t)`.
    /// Nothing is bootstrapped past the last step of an episode.
    pub fn compute_returns(&mut self, gamma: R) -> Result<()> {
        if let Some(i) = self.episodes.iter().position(|e| e.len() != self.n_steps) {
            return Err(Error::IncompleteEpisode(i));
        }
        for ep in &mut self.episodes {
            let mut acc = R::zero();
            for tr in ep.iter_mut().rev() {
                acc = tr.reward + gamma * acc;
                tr.ret = acc;
                tr.advantage = acc - tr.value;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(rewards: &[f64], values: &[f64]) -> Vec<Transition<f64>> {
        rewards
            .iter()
            .zip(values)
            .map(|(&r, &v)| Transition::new(vec![0.0], vec![0.0], 0.0, r, v))
            .collect()
    }

    #[test]
    fn undiscounted_terminal_reward_propagates() {
        let mut b = RolloutBuffer::new(4, 8);
        b.push_episode(episode(&[0.0, 0.0, 0.0, 0.8], &[0.0; 4])).unwrap();
        b.compute_returns(1.0).unwrap();
        assert!(b.transitions().all(|t| t.ret == 0.8 && t.advantage == 0.8));
    }

    #[test]
    fn discounted_returns() {
        let mut b = RolloutBuffer::new(2, 8);
        b.push_episode(episode(&[0.0, 1.0], &[0.25, 0.5])).unwrap();
        b.compute_returns(0.5).unwrap();
        let rets: Vec<f64> = b.transitions().map(|t| t.ret).collect();
        let advs: Vec<f64> = b.transitions().map(|t| t.advantage).collect();
        assert_eq!(rets, vec![0.5, 1.0]);
        assert_eq!(advs, vec![0.25, 0.5]);
    }

    #[test]
    fn incomplete_episode_rejected() {
        let mut b = RolloutBuffer::<f64>::new(3, 8);
        assert!(matches!(
            b.push_episode(episode(&[1.0], &[0.0])),
            Err(Error::IncompleteEpisode(0))
        ));
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = RolloutBuffer::new(1, 2);
        for r in [1.0, 2.0, 3.0] {
            b.push_episode(episode(&[r], &[0.0])).unwrap();
        }
        let rs: Vec<f64> = b.transitions().map(|t| t.reward).collect();
        assert_eq!(rs, vec![2.0, 3.0]);
    }
}
