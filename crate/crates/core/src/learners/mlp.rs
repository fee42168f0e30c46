use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::{descriptor_of, fitted, require_rows, Descriptor, Learner, Regressor, Scaler};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    /// Hidden layer widths; empty means a linear model.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub step_size: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            epochs: 200,
            batch: 32,
            step_size: 1e-3,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs < 1 || self.batch < 1 {
            return Err(Error::InvalidConfig("mlp widths, epochs and batch must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::InvalidConfig("mlp step_size and grad_clip must be > 0".into()));
        }
        Ok(())
    }
}

/// Feed-forward network with tanh hidden units and a linear output.
/// Per layer the flat parameter vector stores `W` (`out x in`, row-major)
/// followed by `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl MlpNet {
    pub fn init(sizes: Vec<usize>, rng: &mut seed::Rng) -> Self {
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Self { sizes, params }
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let o = offset;
            offset += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    /// Activations of every layer (input first).
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.sizes.len() - 2;
        let mut acts = vec![x.to_vec()];
        for (l, (o, n_in, n_out)) in self.layers().enumerate() {
            let a = acts.last().expect("input layer");
            let w = &self.params[o..o + n_in * n_out];
            let b = &self.params[o + n_in * n_out..o + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|j| b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(a).map(|(p, v)| p * v).sum::<f64>())
                .collect();
            acts.push(if l == last { z } else { z.into_iter().map(f64::tanh).collect() });
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_all(x).last().expect("output layer")[0]
    }

    /// Mean of `½(ŷ − y)²` over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let layers: Vec<_> = self.layers().collect();
        let scale = 1.0 / ys.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.forward_all(x);
            let err = acts.last().expect("output")[0] - y;
            loss += 0.5 * err * err * scale;
            let mut delta = vec![err * scale];
            for (l, &(o, n_in, n_out)) in layers.iter().enumerate().rev() {
                let a_in = &acts[l];
                for j in 0..n_out {
                    for k in 0..n_in {
                        grad[o + j * n_in + k] += delta[j] * a_in[k];
                    }
                    grad[o + n_in * n_out + j] += delta[j];
                }
                if l > 0 {
                    let w = &self.params[o..o + n_in * n_out];
                    delta = (0..n_in)
                        .map(|k| {
                            let back: f64 = (0..n_out).map(|j| w[j * n_in + k] * delta[j]).sum();
                            back * (1.0 - a_in[k] * a_in[k])
                        })
                        .collect();
                }
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpState {
    pub schema: Vec<FeatureId>,
    pub x_scaler: Scaler,
    pub y_scaler: Scaler,
    pub net: MlpNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: MlpParams,
    pub state: Option<MlpState>,
}

impl Mlp {
    pub fn new(params: MlpParams) -> Self {
        Self { params, state: None }
    }
}

impl Regressor for Mlp {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        Ok(table
            .rows()
            .iter()
            .map(|r| s.y_scaler.inverse_scalar(s.net.forward(&s.x_scaler.transform_row(&r.features))))
            .collect())
    }
}

impl Learner for Mlp {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.params.validate()?;
        require_rows(table, 1)?;
        let p = &self.params;
        let f = table.n_features();
        let raw = table.matrix();
        let x_scaler = Scaler::fit(&raw, f);
        let x = x_scaler.transform(&raw);
        let y_raw = table.targets();
        let y_scaler = Scaler::fit_column(&y_raw);
        let y: Vec<f64> = y_raw.iter().map(|&v| y_scaler.scalar(v)).collect();

        let mut rng = seed::rng(p.seed);
        let mut sizes = vec![f];
        sizes.extend(&p.hidden);
        sizes.push(1);
        let mut net = MlpNet::init(sizes, &mut rng);
        let mut opt = Adam::new(AdamConfig::new(p.step_size, p.grad_clip), net.params.len());
        let mut order: Vec<usize> = (0..y.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| &x[i * f..(i + 1) * f]).collect();
                let ys: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
                let (_, mut g) = net.loss_and_grad(&xs, &ys);
                opt.step(&mut net.params, &mut g);
            }
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("mlp training diverged".into()));
        }
        self.state = Some(MlpState {
            schema: table.schema().to_vec(),
            x_scaler,
            y_scaler,
            net,
        });
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("mlp", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}
