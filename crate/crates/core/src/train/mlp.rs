//! Fully connected network with ReLU hidden layers and a linear output.
//!
//! Parameters live in one flat vector, layer by layer, each layer as a
//! row-major `out x in` weight matrix followed by its bias.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs recorded by [`Mlp::forward_cached`] for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialization; the last layer is
    /// further scaled by `out_gain`.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let gain = if l + 1 == layers { out_gain } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(gain * rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == Self::count(sizes)).then(|| Self { sizes: sizes.to_vec(), params })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
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

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("sizes is non-empty")
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.run(x, None)
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Vec<f64> {
        self.run(x, Some(cache))
    }

    fn run(&self, x: &[f64], mut cache: Option<&mut ForwardCache>) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input has wrong dimension");
        if let Some(c) = cache.as_deref_mut() {
            c.inputs.clear();
        }
        let layers = self.sizes.len() - 1;
        let mut h = x.to_vec();
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(fan_in)) {
                *o += row.iter().zip(&h).map(|(wi, hi)| wi * hi).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(h);
            }
            h = out;
            offset += fan_in * fan_out + fan_out;
        }
        h
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// for the forward pass recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.inputs[l];
            let off = offsets[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (o, row) in w.chunks_exact(fan_in).enumerate() {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            // ReLU derivative; the stored input of layer l is the activation
            // of layer l - 1
            for (p, x) in prev.iter_mut().zip(input) {
                if *x <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[9, 64, 64, 2], 0.01, &mut rng);
        assert_eq!(net.params().len(), 9 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(net.forward(&[0.1; 9]).len(), 2);
        assert!(Mlp::from_params(&[2, 3], vec![0.0; 8]).is_none());
    }

    #[test]
    fn hand_computed_forward() {
        // 2 -> 2 (relu) -> 1
        let net = Mlp::from_params(&[2, 2, 1], vec![1.0, -1.0, 0.5, 0.5, 0.0, -1.0, 2.0, 3.0, 0.5]).unwrap();
        // hidden: [1*1 - 1*2 + 0, 0.5 + 1 - 1] = [-1, 0.5] -> relu [0, 0.5]
        // out: 2*0 + 3*0.5 + 0.5 = 2.0
        assert_eq!(net.forward(&[1.0, 2.0]), vec![2.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 8, 8, 3], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1, 0.05];
        let weights = [0.5, -1.5, 2.0];
        let loss = |n: &Mlp| n.forward(&x).iter().zip(&weights).map(|(o, w)| o * w).sum::<f64>();

        let mut cache = ForwardCache::default();
        net.forward_cached(&x, &mut cache);
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&cache, &weights, &mut grad);

        let h = 1e-6;
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
