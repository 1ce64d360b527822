//! Dense ReLU networks with hand-written reverse-mode gradients, Adam, and a
//! diagonal Gaussian policy head with a state-independent log-σ.

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Fully connected network: ReLU on hidden layers, linear output.
///
/// Parameters are stored flat, layer by layer, each as a row-major weight
/// matrix `(out x in)` followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<R> {
    layer_dims: Vec<usize>,
    params: Vec<R>,
}

/// Activations recorded by [`Mlp::forward_trace`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<R> {
    /// Input of every layer, then the network output.
    activations: Vec<Vec<R>>,
}

impl<R> Trace<R> {
    pub fn output(&self) -> &[R] {
        self.activations.last().expect("non-empty trace")
    }
}

impl<R: Real> Mlp<R> {
    /// Kaiming-uniform weights `U(±sqrt(6/fan_in))` capped at 1, zero biases.
    /// The output layer is additionally scaled by `output_gain`.
    pub fn new(layer_dims: &[usize], output_gain: R, rng: &mut impl Rng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(invalid(format!("invalid layer dims {layer_dims:?}")));
        }
        let mut params = Vec::with_capacity(count_params(layer_dims));
        let last = layer_dims.len() - 2;
        for (l, w) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt().min(1.0);
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            let gain = if l == last { output_gain } else { R::one() };
            for _ in 0..fan_in * fan_out {
                params.push(R::lit(rng.sample(dist)) * gain);
            }
            params.extend(std::iter::repeat(R::zero()).take(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            params,
        })
    }

    /// `[input, hidden, hidden, output]`.
    pub fn two_hidden(input: usize, hidden: usize, output: usize, output_gain: R, rng: &mut impl Rng) -> Result<Self> {
        Self::new(&[input, hidden, hidden, output], output_gain, rng)
    }

    pub fn from_parts(layer_dims: Vec<usize>, params: Vec<R>) -> Result<Self> {
        if layer_dims.len() < 2 || count_params(&layer_dims) != params.len() {
            return Err(invalid(format!(
                "parameter count {} does not match layer dims {layer_dims:?}",
                params.len()
            )));
        }
        Ok(Self { layer_dims, params })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &[R]) -> Result<Vec<R>> {
        Ok(self.forward_trace(x)?.activations.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[R]) -> Result<Trace<R>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let n_layers = self.layer_dims.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input = activations.last().unwrap();
            let hidden = l + 1 < n_layers;
            let out: Vec<R> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, &bias)| {
                    let z = row.iter().zip(input).fold(bias, |acc, (&wi, &xi)| acc + wi * xi);
                    if hidden {
                        z.max(R::zero())
                    } else {
                        z
                    }
                })
                .collect();
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    /// Accumulates `d(upstream · output)/d params` into `grad`.
    pub fn backward(&self, trace: &Trace<R>, upstream: &[R], grad: &mut [R]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(upstream.len(), self.output_dim());
        let n_layers = self.layer_dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.layer_dims[l] * self.layer_dims[l + 1] + self.layer_dims[l + 1];
        }
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let off = offsets[l];
            let input = &trace.activations[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == R::zero() {
                    continue;
                }
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut next = vec![R::zero(); fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == R::zero() {
                    continue;
                }
                for (n, &wi) in next.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *n += d * wi;
                }
            }
            // ReLU derivative: the layer input is a post-ReLU activation.
            for (n, &a) in next.iter_mut().zip(input) {
                if a <= R::zero() {
                    *n = R::zero();
                }
            }
            delta = next;
        }
    }

    /// Gradient of `upstream · forward(x)` with respect to every parameter.
    pub fn grad(&self, x: &[R], upstream: &[R]) -> Result<Vec<R>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let trace = self.forward_trace(x)?;
        let mut g = vec![R::zero(); self.params.len()];
        self.backward(&trace, upstream, &mut g);
        Ok(g)
    }
}

fn count_params(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<R> {
    pub m: Vec<R>,
    pub v: Vec<R>,
    pub step: u64,
    pub beta1: R,
    pub beta2: R,
    pub eps: R,
}

impl<R: Real> AdamState<R> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![R::zero(); n],
            v: vec![R::zero(); n],
            step: 0,
            beta1: R::lit(0.9),
            beta2: R::lit(0.999),
            eps: R::lit(1e-8),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [R], grads: &[R], lr: R) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        if !(lr > R::zero()) {
            return Err(invalid(format!("learning rate {lr} must be > 0")));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient component {i} is {} (of {})",
                grads[i],
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = R::one() - self.beta1.powi(t);
        let c2 = R::one() - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (R::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (R::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// `log N(a; μ, diag σ²)` with `σ = exp(log_sigma)`.
pub fn gaussian_log_prob<R: Real>(action: &[R], mean: &[R], log_sigma: &[R]) -> R {
    let half_ln_2pi = R::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    action
        .iter()
        .zip(mean)
        .zip(log_sigma)
        .map(|((&a, &m), &ls)| {
            let z = (a - m) / ls.exp();
            -R::lit(0.5) * z * z - ls - half_ln_2pi
        })
        .sum()
}

/// Diagonal Gaussian policy: mean from an [`Mlp`], global trainable log-σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy<R> {
    pub mean_net: Mlp<R>,
    pub log_sigma: Vec<R>,
}

impl<R: Real> GaussianPolicy<R> {
    pub fn new(mean_net: Mlp<R>, initial_log_sigma: R) -> Self {
        let n = mean_net.output_dim();
        Self {
            mean_net,
            log_sigma: vec![initial_log_sigma; n],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_sigma.len()
    }

    pub fn mean(&self, obs: &[R]) -> Result<Vec<R>> {
        self.mean_net.forward(obs)
    }

    pub fn sigma(&self) -> Vec<R> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    /// Draws `a ~ N(μ(obs), diag σ²)` and returns it with its log-density.
    pub fn sample(&self, obs: &[R], rng: &mut impl Rng) -> Result<(Vec<R>, R)> {
        let mean = self.mean(obs)?;
        let action: Vec<R> = mean
            .iter()
            .zip(&self.log_sigma)
            .map(|(&m, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * R::lit(z)
            })
            .collect();
        let logp = gaussian_log_prob(&action, &mean, &self.log_sigma);
        Ok((action, logp))
    }

    pub fn log_prob(&self, obs: &[R], action: &[R]) -> Result<R> {
        let mean = self.mean(obs)?;
        Ok(gaussian_log_prob(action, &mean, &self.log_sigma))
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite() && self.log_sigma.iter().all(|l| l.is_finite())
    }
}
