//! Single-layer LSTM sequence regressor with a linear head.
//!
//! Sequences are `window` consecutive rows of one cell ordered by cycle
//! index; the target is the capacity at the window's last row. Rows without
//! a full window behind them are covered by a fill value: the mean of the
//! cell's covered predictions, else the table-wide covered mean, else the
//! training target mean.
//!
//! Gate equations, with `z = W·x_t + U·h_{t−1} + b` split into `(i, f, g, o)`:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t−1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ŷ   = v·h_T + c
//! ```

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::{descriptor_of, fitted, Descriptor, Learner, Regressor, Scaler};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmParams {
    pub window: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub step_size: f64,
    pub seed: u64,
    pub grad_clip: f64,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            window: 8,
            hidden: 16,
            epochs: 40,
            batch: 32,
            step_size: 1e-3,
            seed: 0,
            grad_clip: 5.0,
        }
    }
}

impl LstmParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 || self.hidden < 1 || self.epochs < 1 || self.batch < 1 {
            return Err(Error::InvalidConfig(
                "lstm window, hidden, epochs and batch must be >= 1".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::InvalidConfig("lstm step_size and grad_clip must be > 0".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Network weights in one flat vector: `W` (`4H x F`), `U` (`4H x H`),
/// `b` (`4H`), head `v` (`H`), head bias `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub input: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmNet {
    pub fn n_params(input: usize, hidden: usize) -> usize {
        4 * hidden * input + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            params: vec![0.0; Self::n_params(input, hidden)],
        }
    }

    /// Uniform in `±1/√fan_in`, where fan-in is `F + H` for the gates and `H`
    /// for the head.
    pub fn init(input: usize, hidden: usize, rng: &mut seed::Rng) -> Self {
        let gate = 1.0 / ((input + hidden) as f64).sqrt();
        let head = 1.0 / (hidden as f64).sqrt();
        let n_gate = 4 * hidden * (input + hidden + 1);
        let params = (0..Self::n_params(input, hidden))
            .map(|k| {
                let b = if k < n_gate { gate } else { head };
                rng.random_range(-b..=b)
            })
            .collect();
        Self { input, hidden, params }
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize) {
        let (f, h) = (self.input, self.hidden);
        let w = 0;
        let u = w + 4 * h * f;
        let b = u + 4 * h * h;
        let v = b + 4 * h;
        let c = v + h;
        (w, u, b, v, c)
    }

    fn run(&self, seq: &[f64]) -> (Vec<Step>, Vec<f64>) {
        let (nf, nh) = (self.input, self.hidden);
        let (ow, ou, ob, _, _) = self.offsets();
        let p = &self.params;
        let mut h = vec![0.0; nh];
        let mut c = vec![0.0; nh];
        let mut steps = Vec::with_capacity(seq.len() / nf.max(1));
        for x in seq.chunks_exact(nf) {
            let mut z = p[ob..ob + 4 * nh].to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                let wr = &p[ow + r * nf..ow + (r + 1) * nf];
                let ur = &p[ou + r * nh..ou + (r + 1) * nh];
                *zr += wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    + ur.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            let i: Vec<f64> = z[..nh].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[nh..2 * nh].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * nh..3 * nh].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * nh..].iter().map(|&v| sigmoid(v)).collect();
            let c_new: Vec<f64> = (0..nh).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..nh).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(Step {
                x: x.to_vec(),
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                i,
                f,
                g,
                o,
                tanh_c,
            });
        }
        (steps, h)
    }

    /// Final hidden state after consuming `seq` (`T x F`, row-major).
    pub fn hidden_state(&self, seq: &[f64]) -> Vec<f64> {
        self.run(seq).1
    }

    pub fn forward(&self, seq: &[f64]) -> f64 {
        let (_, _, _, ov, oc) = self.offsets();
        let h = self.hidden_state(seq);
        self.params[oc] + h.iter().zip(&self.params[ov..ov + self.hidden]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Mean of `½(ŷ − y)²` and its gradient by backpropagation through time.
    pub fn loss_and_grad(&self, seqs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let (nf, nh) = (self.input, self.hidden);
        let (ow, ou, ob, ov, oc) = self.offsets();
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let scale = 1.0 / ys.len() as f64;
        let mut loss = 0.0;
        let mut dz = vec![0.0; 4 * nh];
        for (seq, &y) in seqs.iter().zip(ys) {
            let (steps, h_last) = self.run(seq);
            let yhat = p[oc] + h_last.iter().zip(&p[ov..ov + nh]).map(|(a, b)| a * b).sum::<f64>();
            let err = yhat - y;
            loss += 0.5 * err * err * scale;
            let dy = err * scale;
            grad[oc] += dy;
            for k in 0..nh {
                grad[ov + k] += dy * h_last[k];
            }
            let mut dh: Vec<f64> = p[ov..ov + nh].iter().map(|v| v * dy).collect();
            let mut dc = vec![0.0; nh];
            for s in steps.iter().rev() {
                for k in 0..nh {
                    let d_o = dh[k] * s.tanh_c[k];
                    dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                    let d_i = dc[k] * s.g[k];
                    let d_g = dc[k] * s.i[k];
                    let d_f = dc[k] * s.c_prev[k];
                    dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                    dz[nh + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                    dz[2 * nh + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                    dz[3 * nh + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                    dc[k] *= s.f[k];
                }
                for (r, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (gw, xv) in grad[ow + r * nf..ow + (r + 1) * nf].iter_mut().zip(&s.x) {
                        *gw += d * xv;
                    }
                    for (gu, hv) in grad[ou + r * nh..ou + (r + 1) * nh].iter_mut().zip(&s.h_prev) {
                        *gu += d * hv;
                    }
                    grad[ob + r] += d;
                }
                for (k, dhk) in dh.iter_mut().enumerate() {
                    *dhk = (0..4 * nh).map(|r| p[ou + r * nh + k] * dz[r]).sum();
                }
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, seqs: &[&[f64]], ys: &[f64]) -> f64 {
        let scale = 1.0 / ys.len() as f64;
        seqs.iter()
            .zip(ys)
            .map(|(s, y)| {
                let e = self.forward(s) - y;
                0.5 * e * e * scale
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub schema: Vec<FeatureId>,
    pub x_scaler: Scaler,
    pub y_scaler: Scaler,
    pub net: LstmNet,
    pub fill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub params: LstmParams,
    pub state: Option<LstmState>,
}

/// `(row, window rows)` for every row with a full window behind it.
fn windows(table: &DataTable, window: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    for (_, idx) in table.cells() {
        for end in (window.max(1) - 1)..idx.len() {
            out.push((idx[end], idx[end + 1 - window..=end].to_vec()));
        }
    }
    out
}

impl Lstm {
    pub fn new(params: LstmParams) -> Self {
        Self { params, state: None }
    }

    pub fn net(&self) -> Option<&LstmNet> {
        self.state.as_ref().map(|s| &s.net)
    }

    fn sequence(state: &LstmState, table: &DataTable, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .flat_map(|&i| state.x_scaler.transform_row(&table.rows()[i].features))
            .collect()
    }

    /// Window-end predictions; `None` where no full window exists.
    pub fn predict_windows(&self, table: &DataTable) -> Result<Vec<Option<f64>>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        let mut out = vec![None; table.len()];
        for (row, w) in windows(table, self.params.window) {
            let seq = Self::sequence(s, table, &w);
            out[row] = Some(s.y_scaler.inverse_scalar(s.net.forward(&seq)));
        }
        Ok(out)
    }
}

impl Regressor for Lstm {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        let raw = self.predict_windows(table)?;
        let covered: Vec<f64> = raw.iter().flatten().copied().collect();
        let global = if covered.is_empty() {
            s.fill
        } else {
            covered.iter().sum::<f64>() / covered.len() as f64
        };
        let mut out = vec![0.0; table.len()];
        for (_, idx) in table.cells() {
            let vals: Vec<f64> = idx.iter().filter_map(|&i| raw[i]).collect();
            let fill = if vals.is_empty() {
                global
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            for &i in &idx {
                out[i] = raw[i].unwrap_or(fill);
            }
        }
        Ok(out)
    }

    fn coverage(&self, table: &DataTable) -> Result<Vec<bool>> {
        Ok(self.predict_windows(table)?.iter().map(Option::is_some).collect())
    }

    fn predict_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<f64>> {
        let all = self.predict(context)?;
        Ok(rows.iter().map(|&i| all[i]).collect())
    }

    fn coverage_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<bool>> {
        let all = self.coverage(context)?;
        Ok(rows.iter().map(|&i| all[i]).collect())
    }

    fn predict_in_context(&self, context: &DataTable, row: usize, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        context.check_schema(&s.schema)?;
        let w = self.params.window;
        let cell = context
            .cells()
            .into_iter()
            .map(|(_, idx)| idx)
            .find(|idx| idx.contains(&row))
            .ok_or(Error::EmptyTable)?;
        let pos = cell.iter().position(|&i| i == row).ok_or(Error::EmptyTable)?;
        if pos + 1 < w {
            let fill = self.predict(context)?[row];
            return Ok(vec![fill; candidates.len()]);
        }
        let history = Self::sequence(s, context, &cell[pos + 1 - w..pos]);
        Ok(candidates
            .iter()
            .map(|x| {
                let mut seq = history.clone();
                seq.extend(s.x_scaler.transform_row(x));
                s.y_scaler.inverse_scalar(s.net.forward(&seq))
            })
            .collect())
    }
}

impl Learner for Lstm {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.params.validate()?;
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let p = &self.params;
        for ((_, cell_id), idx) in table.cells() {
            if idx.len() < p.window {
                return Err(Error::WindowTooLong {
                    cell_id,
                    cycles: idx.len(),
                    window: p.window,
                });
            }
        }
        let f = table.n_features();
        let x_scaler = Scaler::fit(&table.matrix(), f);
        let targets = table.targets();
        let y_scaler = Scaler::fit_column(&targets);
        let fill = targets.iter().sum::<f64>() / targets.len() as f64;

        let mut state = LstmState {
            schema: table.schema().to_vec(),
            x_scaler,
            y_scaler,
            net: LstmNet::zeros(f, p.hidden),
            fill,
        };
        let wins = windows(table, p.window);
        let seqs: Vec<Vec<f64>> = wins.iter().map(|(_, w)| Self::sequence(&state, table, w)).collect();
        let ys: Vec<f64> = wins.iter().map(|(r, _)| state.y_scaler.scalar(targets[*r])).collect();

        let mut rng = seed::rng(p.seed);
        let mut net = LstmNet::init(f, p.hidden, &mut rng);
        let mut opt = Adam::new(AdamConfig::new(p.step_size, p.grad_clip), net.params.len());
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        for _ in 0..p.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(p.batch) {
                let xs: Vec<&[f64]> = batch.iter().map(|&i| seqs[i].as_slice()).collect();
                let yb: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
                let (_, mut g) = net.loss_and_grad(&xs, &yb);
                opt.step(&mut net.params, &mut g);
            }
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("lstm training diverged".into()));
        }
        state.net = net;
        self.state = Some(state);
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("lstm", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}
