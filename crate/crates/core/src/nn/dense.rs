use rand::Rng;

use super::{NnError, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = act(x W + b)` over row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Tensor2,
    /// `1 x fan_out`.
    pub bias: Tensor2,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor2,
    output: Tensor2,
}

impl DenseCache {
    pub fn output(&self) -> &Tensor2 {
        &self.output
    }
}

impl Dense {
    /// Uniform init in `±scale/sqrt(fan_in)`, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, scale: f64, rng: &mut impl Rng) -> Self {
        let bound = scale / (fan_in.max(1) as f64).sqrt();
        Self {
            weight: Tensor2::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound)),
            bias: Tensor2::zeros(1, fan_out),
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor2::zeros(fan_in, fan_out),
            bias: Tensor2::zeros(1, fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2, NnError> {
        let mut z = input.matmul(&self.weight)?;
        z.add_row_broadcast(&self.bias)?;
        let act = self.activation;
        z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(z)
    }

    pub fn forward(&self, input: &Tensor2) -> Result<(Tensor2, DenseCache), NnError> {
        let output = self.infer(input)?;
        Ok((
            output.clone(),
            DenseCache {
                input: input.clone(),
                output,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, cache: &DenseCache, d_out: &Tensor2, grads: &mut Dense) -> Result<Tensor2, NnError> {
        if d_out.shape() != cache.output.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "dense backward: gradient {:?} vs output {:?}",
                d_out.shape(),
                cache.output.shape()
            )));
        }
        let act = self.activation;
        let mut dz = d_out.clone();
        for (g, &y) in dz.data_mut().iter_mut().zip(cache.output.data()) {
            *g *= act.derivative_from_output(y);
        }
        cache.input.t_matmul_acc(&dz, &mut grads.weight)?;
        dz.col_sum_acc(&mut grads.bias)?;
        dz.matmul_t(&self.weight)
    }
}
