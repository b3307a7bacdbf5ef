//! Small fully connected networks with hand-written backpropagation and
//! an Adam optimizer. Sizes here are tens of units, so plain loops are
//! fast enough and keep the crate free of a tensor dependency.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tanh hidden layers, linear output. Parameters are stored flat, layer
/// by layer: row-major weights (`out×in`) followed by the biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; the last layer is scaled by
    /// `out_scale` so a fresh policy starts near a zero mean.
    pub fn new<R: Rng>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let scale = if l + 1 == layers { out_scale } else { 1.0 };
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-bound..bound) * scale);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        assert_eq!(x.len(), self.sizes[0], "input size");
        let layers = self.sizes.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = acts.last().expect("non-empty");
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
                *o += row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        let y = acts.last().expect("non-empty").clone();
        (y, Tape { acts })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Adds `∂(grad_out·y)/∂θ` into `grad`.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // through tanh: 1 − y²
                for (d, y) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let off = offsets[l];
            let input = &tape.acts[l];
            for o in 0..n_out {
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += delta[o] * x;
                }
                grad[off + n_in * n_out + o] += delta[o];
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    for (i, nx) in next.iter_mut().enumerate() {
                        *nx += w[o * n_in + i] * delta[o];
                    }
                }
                delta = next;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let w = [0.8, -1.3];
        let loss = |n: &Mlp| n.predict(&x).iter().zip(&w).map(|(y, c)| y * c).sum::<f64>();
        let (_, tape) = net.forward(&x);
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&tape, &w, &mut grad);
        let h = 1e-6;
        for i in 0..net.n_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn adam_fits_a_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Mlp::new(&[1, 8, 1], 1.0, &mut rng);
        let mut opt = Adam::new(net.n_params(), 1e-2);
        for _ in 0..2000 {
            let mut grad = vec![0.0; net.n_params()];
            for k in 0..10 {
                let x = k as f64 / 10.0;
                let (y, tape) = net.forward(&[x]);
                net.backward(&tape, &[y[0] - (2.0 * x - 0.5)], &mut grad);
            }
            let mut params = net.params().to_vec();
            opt.step(&mut params, &grad);
            net.params_mut().copy_from_slice(&params);
        }
        assert!((net.predict(&[0.45])[0] - 0.4).abs() < 1e-2);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        clip_grad_norm(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1]);
    }
}
