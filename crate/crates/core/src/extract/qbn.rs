//! Quantized bottleneck network: an autoencoder over hidden states whose
//! code is snapped to a small alphabet, trained with a straight-through
//! estimator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, Activation, Adam, Mlp, MlpCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantLevels {
    /// `{-1, 0, 1}` with thresholds at `±0.5`.
    Three,
    /// `{-1, 1}`.
    Two,
}

impl QuantLevels {
    pub fn quantize(self, x: f64) -> f64 {
        match self {
            QuantLevels::Three => {
                if x > 0.5 {
                    1.0
                } else if x < -0.5 {
                    -1.0
                } else {
                    0.0
                }
            }
            QuantLevels::Two => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn count(self) -> usize {
        match self {
            QuantLevels::Three => 3,
            QuantLevels::Two => 2,
        }
    }
}

/// Discrete code of a hidden state, one entry in `{-1, 0, 1}` per unit.
pub type Code = Vec<i8>;

/// Encoder `d -> 8b -> 4b -> b` (tanh, tanh, tanh_flat), quantizer, and a
/// mirrored decoder `b -> 4b -> 8b -> d` with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qbn {
    pub input: usize,
    pub code: usize,
    pub levels: QuantLevels,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Cached forward pass through encoder, quantizer and decoder.
#[derive(Debug, Clone)]
pub struct QbnPass {
    pub encoder: MlpCache,
    pub code: Vec<f64>,
    pub decoder: MlpCache,
}

impl QbnPass {
    pub fn output(&self) -> &[f64] {
        self.decoder.output()
    }

    pub fn code(&self) -> Code {
        self.code.iter().map(|&c| c as i8).collect()
    }
}

impl Qbn {
    /// Lays the network out in a parameter vector starting at `offset`.
    pub fn new(input: usize, code: usize, levels: QuantLevels, offset: usize) -> Self {
        use Activation::*;
        let encoder = Mlp::new(&[input, 8 * code, 4 * code, code], &[Tanh, Tanh, TanhFlat], offset);
        let decoder = Mlp::new(
            &[code, 4 * code, 8 * code, input],
            &[Tanh, Tanh, Identity],
            offset + encoder.len(),
        );
        Qbn {
            input,
            code,
            levels,
            encoder,
            decoder,
        }
    }

    pub fn len(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn init(&self, theta: &mut [f64], rng: &mut ChaCha8Rng) {
        self.encoder.init(theta, rng);
        self.decoder.init(theta, rng);
    }

    pub fn forward(&self, theta: &[f64], h: &[f64]) -> QbnPass {
        let encoder = self.encoder.forward(theta, h);
        let code: Vec<f64> = encoder.output().iter().map(|&x| self.levels.quantize(x)).collect();
        let decoder = self.decoder.forward(theta, &code);
        QbnPass { encoder, code, decoder }
    }

    pub fn encode(&self, theta: &[f64], h: &[f64]) -> Code {
        self.encoder
            .forward(theta, h)
            .output()
            .iter()
            .map(|&x| self.levels.quantize(x) as i8)
            .collect()
    }

    pub fn decode(&self, theta: &[f64], code: &[i8]) -> Vec<f64> {
        let c: Vec<f64> = code.iter().map(|&x| f64::from(x)).collect();
        self.decoder.forward(theta, &c).output().to_vec()
    }

    /// Backpropagates an output gradient, passing it through the quantizer
    /// unchanged. Returns the gradient with respect to the input.
    pub fn backward(&self, theta: &[f64], grad: &mut [f64], pass: &QbnPass, dy: &[f64]) -> Vec<f64> {
        let dcode = self.decoder.backward(theta, grad, &pass.decoder, dy);
        self.encoder.backward(theta, grad, &pass.encoder, &dcode)
    }
}

/// A trained stand-alone QBN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QbnParams {
    pub net: Qbn,
    pub theta: Vec<f64>,
}

impl QbnParams {
    pub fn new(input: usize, code: usize, levels: QuantLevels, seed: u64) -> Self {
        let net = Qbn::new(input, code, levels, 0);
        let mut theta = vec![0.0; net.len()];
        net.init(&mut theta, &mut ChaCha8Rng::seed_from_u64(seed));
        QbnParams { net, theta }
    }

    pub fn encode(&self, h: &[f64]) -> Code {
        self.net.encode(&self.theta, h)
    }

    pub fn decode(&self, code: &[i8]) -> Vec<f64> {
        self.net.decode(&self.theta, code)
    }

    /// Mean squared reconstruction error over all points and coordinates.
    pub fn mse(&self, points: &[Vec<f64>]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let total: f64 = points
            .iter()
            .map(|h| {
                let pass = self.net.forward(&self.theta, h);
                pass.output().iter().zip(h).map(|(y, x)| (y - x).powi(2)).sum::<f64>()
            })
            .sum();
        total / (points.len() * self.net.input) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QbnTrainConfig {
    pub code: usize,
    pub levels: QuantLevels,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for QbnTrainConfig {
    fn default() -> Self {
        QbnTrainConfig {
            code: 2,
            levels: QuantLevels::Three,
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Continues training `qbn` on `points`; returns the reconstruction MSE
/// after every epoch.
pub fn qbn_train(qbn: &mut QbnParams, points: &[Vec<f64>], config: &QbnTrainConfig) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no hidden states to fit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(qbn.theta.len(), config.lr);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let dim = qbn.net.input as f64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grad = vec![0.0; qbn.theta.len()];
            let scale = 2.0 / (batch.len() as f64 * dim);
            for &i in batch {
                let h = &points[i];
                let pass = qbn.net.forward(&qbn.theta, h);
                let dy: Vec<f64> = pass.output().iter().zip(h).map(|(y, x)| scale * (y - x)).collect();
                qbn.net.backward(&qbn.theta, &mut grad, &pass, &dy);
            }
            clip_global_norm(&mut grad, config.clip_norm);
            adam.step(&mut qbn.theta, &grad);
        }
        let mse = qbn.mse(points);
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss("QBN training".into()));
        }
        trace.push(mse);
    }
    Ok(trace)
}

/// Fits a fresh QBN to hidden states after the recurrent network is trained.
pub fn qbn_fit_posthoc(points: &[Vec<f64>], config: &QbnTrainConfig) -> Result<(QbnParams, Vec<f64>)> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("no hidden states to fit".into()))?;
    let mut qbn = QbnParams::new(dim, config.code, config.levels, config.seed);
    let trace = qbn_train(&mut qbn, points, config)?;
    Ok((qbn, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tanh_flat;

    #[test]
    fn three_level_quantizer() {
        let q = QuantLevels::Three;
        let xs = [-2.0, -0.51, -0.5, 0.0, 0.5, 0.51, 2.0];
        let ys: Vec<f64> = xs.iter().map(|&x| q.quantize(tanh_flat(x))).collect();
        assert!(ys.iter().all(|y| [-1.0, 0.0, 1.0].contains(y)));
        assert_eq!(q.quantize(0.6), 1.0);
        assert_eq!(q.quantize(-0.6), -1.0);
        assert_eq!(q.quantize(0.4), 0.0);
    }

    #[test]
    fn single_point_is_memorized() {
        let points = vec![vec![0.3, -0.8, 0.5, 0.1]];
        let cfg = QbnTrainConfig {
            epochs: 500,
            ..QbnTrainConfig::default()
        };
        let (_, trace) = qbn_fit_posthoc(&points, &cfg).unwrap();
        assert!(*trace.last().unwrap() < 1e-3, "{:?}", trace.last());
    }

    #[test]
    fn fitting_is_deterministic() {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos()])
            .collect();
        let cfg = QbnTrainConfig {
            epochs: 5,
            ..QbnTrainConfig::default()
        };
        let (a, ta) = qbn_fit_posthoc(&points, &cfg).unwrap();
        let (b, tb) = qbn_fit_posthoc(&points, &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(ta, tb);
    }
}
