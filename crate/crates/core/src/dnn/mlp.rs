use crate::error::{Error, Result};
use crate::numerics::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }
}

/// Fully connected network; layer `l` maps `widths[l]` inputs to `widths[l + 1]` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    /// Row-major `out x in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
}

/// Pre-activations and activations of every layer for one input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `outputs[0]` is the input, `outputs[l + 1]` the activated output of layer `l`.
    pub outputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }
}

impl Mlp {
    /// He-initialized network with ReLU hidden layers and a linear output.
    pub fn new(widths: &[usize], rng: &mut SimRng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| scale * rng.standard_normal()).collect());
            biases.push(vec![0.0; fan_out]);
        }
        let mut activations = vec![Activation::Relu; layers];
        activations[layers - 1] = Activation::Identity;
        Ok(Self { widths: widths.to_vec(), weights, biases, activations })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Checks that every array matches the declared widths and holds finite values.
    pub fn validate(&self) -> Result<()> {
        let layers = self.widths.len().saturating_sub(1);
        if layers == 0
            || self.weights.len() != layers
            || self.biases.len() != layers
            || self.activations.len() != layers
        {
            return Err(Error::Parameter("layer count does not match widths".into()));
        }
        for l in 0..layers {
            if self.weights[l].len() != self.widths[l] * self.widths[l + 1]
                || self.biases[l].len() != self.widths[l + 1]
            {
                return Err(Error::Parameter(format!("layer {l} does not match widths")));
            }
        }
        if !self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite()) {
            return Err(Error::Parameter("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.n_inputs() {
            return Err(Error::Parameter(format!(
                "input length {} does not match network width {}",
                input.len(),
                self.n_inputs()
            )));
        }
        let mut outputs = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let x = &outputs[l];
            let n_in = self.widths[l];
            let z: Vec<f64> = self.biases[l]
                .iter()
                .enumerate()
                .map(|(o, b)| {
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let a = match self.activations[l] {
                Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            pre.push(z);
            outputs.push(a);
        }
        Ok(ForwardCache { outputs, pre })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.outputs.pop().expect("at least one layer"))
    }

    /// Accumulates into `grad` the gradient given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64], grad: &mut MlpGrad) {
        let mut delta = d_logits.to_vec();
        for l in (0..self.n_layers()).rev() {
            if self.activations[l] == Activation::Relu {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let n_in = self.widths[l];
            let x = &cache.outputs[l];
            for (o, d) in delta.iter().enumerate() {
                grad.biases[l][o] += d;
                if *d != 0.0 {
                    let row = &mut grad.weights[l][o * n_in..(o + 1) * n_in];
                    for (g, v) in row.iter_mut().zip(x) {
                        *g += d * v;
                    }
                }
            }
            if l > 0 {
                let mut next = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                        for (acc, w) in next.iter_mut().zip(row) {
                            *acc += d * w;
                        }
                    }
                }
                delta = next;
            }
        }
    }

    /// Every parameter in a fixed order: layer by layer, weights then biases.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }
}

/// Gradient with the same shapes as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten().for_each(|g| *g *= s);
    }

    pub fn add(&mut self, other: &MlpGrad) {
        for (a, b) in
            self.weights.iter_mut().chain(self.biases.iter_mut()).zip(other.weights.iter().chain(&other.biases))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Same ordering as [`Mlp::params_mut`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    settings: AdamSettings,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(settings: AdamSettings, n_params: usize) -> Self {
        Self { settings, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn update(&mut self, net: &mut Mlp, grad: &MlpGrad) {
        let AdamSettings { learning_rate, beta1, beta2, epsilon } = self.settings;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let flat = grad.flat();
        for (i, p) in net.params_mut().enumerate() {
            let g = flat[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_mismatch_is_rejected() {
        let net = Mlp::new(&[3, 4, 2], &mut SimRng::new(1)).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Parameter(_))));
        assert!(Mlp::new(&[3], &mut SimRng::new(1)).is_err());
        assert!(Mlp::new(&[3, 0, 2], &mut SimRng::new(1)).is_err());
        assert_eq!(net.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn single_linear_layer_hand_evaluation() {
        let net = Mlp {
            widths: vec![2, 2],
            weights: vec![vec![1.0, 2.0, -1.0, 0.5]],
            biases: vec![vec![0.5, -0.5]],
            activations: vec![Activation::Identity],
        };
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![5.5, -0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = Mlp {
            widths: vec![1, 1],
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0]],
            activations: vec![Activation::Identity],
        };
        let grad = MlpGrad { weights: vec![vec![3.0]], biases: vec![vec![-2.0]] };
        let mut adam = Adam::new(AdamSettings::default(), 2);
        adam.update(&mut net, &grad);
        assert!((net.weights[0][0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((net.biases[0][0] - 1e-3).abs() < 1e-9);
    }
}
