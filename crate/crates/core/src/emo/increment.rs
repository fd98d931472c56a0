use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Adam, Dense, Parameterized, Tensor2};
use crate::ppo::Vector;
use crate::N_OBJECTIVES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncrementConfig {
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Ridge penalty of the closed-form linear part.
    pub ridge: f64,
}

impl Default for IncrementConfig {
    fn default() -> Self {
        Self {
            hidden: 8,
            steps: 300,
            learning_rate: 1e-2,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    hidden: Dense,
    out: Dense,
}

impl Parameterized for Residual {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        vec![
            ("hidden.weight", &self.hidden.weight),
            ("hidden.bias", &self.hidden.bias),
            ("out.weight", &self.out.weight),
            ("out.bias", &self.out.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }
}

/// Predicts the objective change `ΔF` obtained by training under weight `w`.
///
/// A ridge-fitted affine map of `w` plus a small tanh residual network
/// trained with Adam on what the affine part leaves over.
#[derive(Debug, Clone, PartialEq)]
pub enum IncrementModel {
    /// Cold start: predicts no change.
    Zero,
    Fitted {
        /// Per output: coefficients for `(w_1, .., w_m, 1)`.
        linear: [[f64; N_OBJECTIVES + 1]; N_OBJECTIVES],
        residual: Box<Residual>,
    },
}

impl IncrementModel {
    pub fn predict(&self, w: &Vector) -> Vector {
        match self {
            IncrementModel::Zero => [0.0; N_OBJECTIVES],
            IncrementModel::Fitted { linear, residual } => {
                let x = Tensor2::row_vector(w.to_vec());
                let r = residual
                    .out
                    .infer(&residual.hidden.infer(&x).expect("fixed shapes"))
                    .expect("fixed shapes");
                std::array::from_fn(|k| {
                    let c = &linear[k];
                    let lin: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() + c[N_OBJECTIVES];
                    lin + r.get(0, k)
                })
            }
        }
    }

    /// Fits on `(w, ΔF)` observations. Exact duplicate observations are
    /// counted once.
    pub fn fit(history: &[(Vector, Vector)], cfg: &IncrementConfig, seed: u64) -> Self {
        let mut data: Vec<(Vector, Vector)> = Vec::new();
        for obs in history {
            let finite = obs.0.iter().chain(&obs.1).all(|v| v.is_finite());
            if finite && !data.contains(obs) {
                data.push(*obs);
            }
        }
        if data.is_empty() {
            return IncrementModel::Zero;
        }
        let linear = ridge_fit(&data, cfg.ridge);
        let affine = |w: &Vector, k: usize| -> f64 {
            let c = &linear[k];
            w.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() + c[N_OBJECTIVES]
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut residual = Residual {
            hidden: Dense::new(N_OBJECTIVES, cfg.hidden, Activation::Tanh, 1.0, &mut rng),
            out: Dense::zeros(cfg.hidden, N_OBJECTIVES, Activation::Identity),
        };
        let x = Tensor2::from_fn(data.len(), N_OBJECTIVES, |r, k| data[r].0[k]);
        let target = Tensor2::from_fn(data.len(), N_OBJECTIVES, |r, k| data[r].1[k] - affine(&data[r].0, k));
        if data.len() > 1 && target.sum_squares() > 0.0 {
            let mut opt = Adam::new(&residual, cfg.learning_rate);
            let scale = 1.0 / data.len() as f64;
            for _ in 0..cfg.steps {
                let (h, hc) = residual.hidden.forward(&x).expect("fixed shapes");
                let (y, oc) = residual.out.forward(&h).expect("fixed shapes");
                let d = Tensor2::from_fn(y.rows(), y.cols(), |r, k| (y.get(r, k) - target.get(r, k)) * scale);
                let mut g = residual.zeroed();
                let dh = residual.out.backward(&oc, &d, &mut g.out).expect("fixed shapes");
                residual.hidden.backward(&hc, &dh, &mut g.hidden).expect("fixed shapes");
                opt.step(&mut residual, &g).expect("fixed shapes");
            }
        }
        IncrementModel::Fitted {
            linear,
            residual: Box::new(residual),
        }
    }
}

/// Solves `(XᵀX + λI) β = XᵀY` with `X = [w, 1]` per output.
#[allow(clippy::needless_range_loop)]
fn ridge_fit(data: &[(Vector, Vector)], ridge: f64) -> [[f64; N_OBJECTIVES + 1]; N_OBJECTIVES] {
    const P: usize = N_OBJECTIVES + 1;
    let feature = |w: &Vector, j: usize| if j < N_OBJECTIVES { w[j] } else { 1.0 };
    let mut gram = [[0.0; P]; P];
    for (w, _) in data {
        for i in 0..P {
            for j in 0..P {
                gram[i][j] += feature(w, i) * feature(w, j);
            }
        }
    }
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += ridge;
    }
    std::array::from_fn(|k| {
        let mut rhs = [0.0; P];
        for (w, df) in data {
            for (j, r) in rhs.iter_mut().enumerate() {
                *r += feature(w, j) * df[k];
            }
        }
        solve(gram, rhs)
    })
}

/// Gaussian elimination with partial pivoting on a small dense system.
#[allow(clippy::needless_range_loop)]
fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> [f64; P] {
    for col in 0..P {
        let pivot = (col..P)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..P {
            let f = a[row][col] / d;
            for k in col..P {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let s: f64 = (row + 1..P).map(|k| a[row][k] * x[k]).sum();
        x[row] = if a[row][row].abs() < 1e-300 { 0.0 } else { (b[row] - s) / a[row][row] };
    }
    x
}
