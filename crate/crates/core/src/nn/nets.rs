use rand::Rng;

use super::dense::{Activation, Dense, DenseCache};
use super::lstm::{LstmCell, LstmStepCache};
use super::{NnError, Parameterized, Tensor2};

/// Scale applied to the initial mean-head weights so fresh policies start
/// close to the squashed zero action.
const HEAD_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub hidden: usize,
    pub action_dim: usize,
    pub recurrent: bool,
    pub log_std_init: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Trunk {
    /// `obs -> LSTM(h) -> dense(h, tanh)`.
    Lstm { cell: LstmCell, dense: Dense },
    /// `obs -> dense(h, tanh) -> dense(h, tanh)`.
    Mlp { first: Dense, second: Dense },
}

/// Gaussian actor: the network emits per-dimension means of the pre-squash
/// action; `log_std` is a free parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    trunk: Trunk,
    pub head: Dense,
    /// `1 x action_dim`.
    pub log_std: Tensor2,
}

/// Hidden and cell state for a batch of sequences (one row each).
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Tensor2,
    pub c: Tensor2,
}

impl RecurrentState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Tensor2::zeros(batch, hidden),
            c: Tensor2::zeros(batch, hidden),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.rows()
    }

    /// Copies row `r` out as a single-row state.
    pub fn row(&self, r: usize) -> RecurrentState {
        RecurrentState {
            h: Tensor2::row_vector(self.h.row(r).to_vec()),
            c: Tensor2::row_vector(self.c.row(r).to_vec()),
        }
    }

    /// Stacks single-row states into one batch.
    pub fn stack(rows: &[&RecurrentState]) -> Result<RecurrentState, NnError> {
        let hs: Vec<Tensor2> = rows.iter().map(|s| s.h.clone()).collect();
        let cs: Vec<Tensor2> = rows.iter().map(|s| s.c.clone()).collect();
        Ok(RecurrentState {
            h: Tensor2::vstack(&hs)?,
            c: Tensor2::vstack(&cs)?,
        })
    }
}

#[derive(Debug, Clone)]
enum StepCache {
    Lstm {
        cell: LstmStepCache,
        dense: DenseCache,
        head: DenseCache,
    },
    Mlp {
        first: DenseCache,
        second: DenseCache,
        head: DenseCache,
    },
}

/// Forward record of one sequence pass, consumed by [`PolicyNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct PolicyTape {
    steps: Vec<StepCache>,
}

impl PolicyTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl PolicyNet {
    pub fn new(shape: PolicyShape, rng: &mut impl Rng) -> Self {
        let trunk = if shape.recurrent {
            Trunk::Lstm {
                cell: LstmCell::new(shape.obs_dim, shape.hidden, rng),
                dense: Dense::new(shape.hidden, shape.hidden, Activation::Tanh, 1.0, rng),
            }
        } else {
            Trunk::Mlp {
                first: Dense::new(shape.obs_dim, shape.hidden, Activation::Tanh, 1.0, rng),
                second: Dense::new(shape.hidden, shape.hidden, Activation::Tanh, 1.0, rng),
            }
        };
        Self {
            trunk,
            head: Dense::new(shape.hidden, shape.action_dim, Activation::Identity, HEAD_INIT_SCALE, rng),
            log_std: Tensor2::from_fn(1, shape.action_dim, |_, _| shape.log_std_init),
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.trunk, Trunk::Lstm { .. })
    }

    pub fn obs_dim(&self) -> usize {
        match &self.trunk {
            Trunk::Lstm { cell, .. } => cell.input_size(),
            Trunk::Mlp { first, .. } => first.fan_in(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.head.fan_in()
    }

    pub fn action_dim(&self) -> usize {
        self.head.fan_out()
    }

    pub fn initial_state(&self, batch: usize) -> RecurrentState {
        RecurrentState::zeros(batch, self.hidden())
    }

    /// Mean action for a single observation; advances `state` in place.
    pub fn act(&self, obs: &[f64], state: &mut RecurrentState) -> Result<Vec<f64>, NnError> {
        let x = Tensor2::row_vector(obs.to_vec());
        let features = match &self.trunk {
            Trunk::Lstm { cell, dense } => {
                let (h, c, _) = cell.step(&x, &state.h, &state.c)?;
                let out = dense.infer(&h)?;
                *state = RecurrentState { h, c };
                out
            }
            Trunk::Mlp { first, second } => second.infer(&first.infer(&x)?)?,
        };
        Ok(self.head.infer(&features)?.into_data())
    }

    /// Runs `inputs` (one `batch x obs_dim` tensor per time step) from
    /// `state`, returning the per-step means and the tape for backward.
    pub fn forward_sequence(
        &self,
        inputs: &[Tensor2],
        state: &RecurrentState,
    ) -> Result<(Vec<Tensor2>, PolicyTape), NnError> {
        let mut means = Vec::with_capacity(inputs.len());
        let mut tape = PolicyTape {
            steps: Vec::with_capacity(inputs.len()),
        };
        let (mut h, mut c) = (state.h.clone(), state.c.clone());
        for x in inputs {
            let step = match &self.trunk {
                Trunk::Lstm { cell, dense } => {
                    let (h2, c2, cell_cache) = cell.step(x, &h, &c)?;
                    let (feat, dense_cache) = dense.forward(&h2)?;
                    let (mean, head_cache) = self.head.forward(&feat)?;
                    means.push(mean);
                    h = h2;
                    c = c2;
                    StepCache::Lstm {
                        cell: cell_cache,
                        dense: dense_cache,
                        head: head_cache,
                    }
                }
                Trunk::Mlp { first, second } => {
                    let (a, first_cache) = first.forward(x)?;
                    let (feat, second_cache) = second.forward(&a)?;
                    let (mean, head_cache) = self.head.forward(&feat)?;
                    means.push(mean);
                    StepCache::Mlp {
                        first: first_cache,
                        second: second_cache,
                        head: head_cache,
                    }
                }
            };
            tape.steps.push(step);
        }
        Ok((means, tape))
    }

    /// Backpropagates `d_means` (one tensor per taped step) through time,
    /// accumulating into `grads`. The starting state is treated as constant.
    pub fn backward(&self, tape: &PolicyTape, d_means: &[Tensor2], grads: &mut PolicyNet) -> Result<(), NnError> {
        if tape.steps.len() != d_means.len() || (tape.steps.is_empty() && !d_means.is_empty()) {
            return Err(NnError::MissingCache(format!(
                "tape holds {} steps, {} output gradients supplied",
                tape.steps.len(),
                d_means.len()
            )));
        }
        let mut carry: Option<(Tensor2, Tensor2)> = None;
        for (step, d_mean) in tape.steps.iter().zip(d_means).rev() {
            match (step, &self.trunk, &mut grads.trunk) {
                (
                    StepCache::Lstm { cell, dense, head },
                    Trunk::Lstm { cell: p_cell, dense: p_dense },
                    Trunk::Lstm { cell: g_cell, dense: g_dense },
                ) => {
                    let d_feat = self.head.backward(head, d_mean, &mut grads.head)?;
                    let mut d_h = p_dense.backward(dense, &d_feat, g_dense)?;
                    let d_c = match carry.take() {
                        Some((dh_next, dc_next)) => {
                            d_h.add_assign(&dh_next)?;
                            dc_next
                        }
                        None => Tensor2::zeros(d_h.rows(), d_h.cols()),
                    };
                    let (_, dh_prev, dc_prev) = p_cell.backward_step(cell, &d_h, &d_c, g_cell)?;
                    carry = Some((dh_prev, dc_prev));
                }
                (
                    StepCache::Mlp { first, second, head },
                    Trunk::Mlp { first: p_first, second: p_second },
                    Trunk::Mlp { first: g_first, second: g_second },
                ) => {
                    let d_feat = self.head.backward(head, d_mean, &mut grads.head)?;
                    let d_a = p_second.backward(second, &d_feat, g_second)?;
                    p_first.backward(first, &d_a, g_first)?;
                }
                _ => {
                    return Err(NnError::ShapeMismatch(
                        "tape, network and gradient buffer disagree on architecture".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub(super) fn from_named(take: impl Fn(&str) -> Option<Tensor2>) -> Result<Self, NnError> {
        let need = |name: &str| {
            take(name).ok_or_else(|| NnError::BadCheckpoint(format!("missing tensor {name}")))
        };
        let head = Dense {
            weight: need("actor.head.weight")?,
            bias: need("actor.head.bias")?,
            activation: Activation::Identity,
        };
        let log_std = need("actor.log_std")?;
        let trunk = match take("actor.lstm.weight") {
            Some(weight) => Trunk::Lstm {
                cell: LstmCell::from_parts(weight, need("actor.lstm.bias")?)?,
                dense: Dense {
                    weight: need("actor.dense.weight")?,
                    bias: need("actor.dense.bias")?,
                    activation: Activation::Tanh,
                },
            },
            None => Trunk::Mlp {
                first: Dense {
                    weight: need("actor.mlp0.weight")?,
                    bias: need("actor.mlp0.bias")?,
                    activation: Activation::Tanh,
                },
                second: Dense {
                    weight: need("actor.mlp1.weight")?,
                    bias: need("actor.mlp1.bias")?,
                    activation: Activation::Tanh,
                },
            },
        };
        let net = Self { trunk, head, log_std };
        net.check_consistency()?;
        Ok(net)
    }

    fn check_consistency(&self) -> Result<(), NnError> {
        let h = self.hidden();
        let ok = match &self.trunk {
            Trunk::Lstm { cell, dense } => cell.hidden_size() == h && dense.shape_ok(h, h),
            Trunk::Mlp { first, second } => first.fan_out() == h && second.shape_ok(h, h),
        } && self.head.bias.shape() == (1, self.action_dim())
            && self.log_std.shape() == (1, self.action_dim());
        if ok {
            Ok(())
        } else {
            Err(NnError::BadCheckpoint("inconsistent actor layer shapes".into()))
        }
    }
}

impl Dense {
    fn shape_ok(&self, fan_in: usize, fan_out: usize) -> bool {
        self.weight.shape() == (fan_in, fan_out) && self.bias.shape() == (1, fan_out)
    }
}

impl Parameterized for PolicyNet {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        let mut out = match &self.trunk {
            Trunk::Lstm { cell, dense } => vec![
                ("actor.lstm.weight", &cell.weight),
                ("actor.lstm.bias", &cell.bias),
                ("actor.dense.weight", &dense.weight),
                ("actor.dense.bias", &dense.bias),
            ],
            Trunk::Mlp { first, second } => vec![
                ("actor.mlp0.weight", &first.weight),
                ("actor.mlp0.bias", &first.bias),
                ("actor.mlp1.weight", &second.weight),
                ("actor.mlp1.bias", &second.bias),
            ],
        };
        out.push(("actor.head.weight", &self.head.weight));
        out.push(("actor.head.bias", &self.head.bias));
        out.push(("actor.log_std", &self.log_std));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = match &mut self.trunk {
            Trunk::Lstm { cell, dense } => vec![
                &mut cell.weight,
                &mut cell.bias,
                &mut dense.weight,
                &mut dense.bias,
            ],
            Trunk::Mlp { first, second } => vec![
                &mut first.weight,
                &mut first.bias,
                &mut second.weight,
                &mut second.bias,
            ],
        };
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out.push(&mut self.log_std);
        out
    }
}

/// Feed-forward critic with one output per objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Default)]
pub struct ValueTape {
    caches: Vec<DenseCache>,
}

const CRITIC_NAMES: [[&str; 2]; 3] = [
    ["critic.l0.weight", "critic.l0.bias"],
    ["critic.l1.weight", "critic.l1.bias"],
    ["critic.l2.weight", "critic.l2.bias"],
];

impl ValueNet {
    /// `obs -> hidden -> hidden -> outputs` with tanh hidden layers.
    pub fn new(obs_dim: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: vec![
                Dense::new(obs_dim, hidden, Activation::Tanh, 1.0, rng),
                Dense::new(hidden, hidden, Activation::Tanh, 1.0, rng),
                Dense::new(hidden, outputs, Activation::Identity, 1.0, rng),
            ],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2, NnError> {
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.infer(&a)?;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, ValueTape), NnError> {
        let mut tape = ValueTape::default();
        let mut a = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&a)?;
            tape.caches.push(cache);
            a = out;
        }
        Ok((a, tape))
    }

    pub fn backward(&self, tape: &ValueTape, d_out: &Tensor2, grads: &mut ValueNet) -> Result<(), NnError> {
        if tape.caches.len() != self.layers.len() {
            return Err(NnError::MissingCache("critic tape is empty".into()));
        }
        let mut d = d_out.clone();
        for ((layer, cache), g) in self
            .layers
            .iter()
            .zip(&tape.caches)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            d = layer.backward(cache, &d, g)?;
        }
        Ok(())
    }

    pub(super) fn from_named(take: impl Fn(&str) -> Option<Tensor2>) -> Result<Self, NnError> {
        let mut layers = Vec::new();
        for (i, [w, b]) in CRITIC_NAMES.iter().enumerate() {
            let weight = take(w).ok_or_else(|| NnError::BadCheckpoint(format!("missing tensor {w}")))?;
            let bias = take(b).ok_or_else(|| NnError::BadCheckpoint(format!("missing tensor {b}")))?;
            if bias.shape() != (1, weight.cols()) {
                return Err(NnError::BadCheckpoint(format!("{b} does not match {w}")));
            }
            let activation = if i + 1 == CRITIC_NAMES.len() {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        if layers.windows(2).any(|p| p[0].fan_out() != p[1].fan_in()) {
            return Err(NnError::BadCheckpoint("inconsistent critic layer shapes".into()));
        }
        Ok(Self { layers })
    }
}

impl Parameterized for ValueNet {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        self.layers
            .iter()
            .zip(CRITIC_NAMES)
            .flat_map(|(l, [w, b])| [(w, &l.weight), (b, &l.bias)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
