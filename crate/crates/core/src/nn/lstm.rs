use rand::Rng;

use super::dense::sigmoid;
use super::{NnError, Tensor2};

/// LSTM cell with the four gate blocks packed column-wise as `[i | f | g | o]`.
///
/// Pre-activations are `[x, h_prev] W + b` with `W` of shape `(d + h) x 4h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub weight: Tensor2,
    pub bias: Tensor2,
    input_size: usize,
    hidden_size: usize,
}

/// Per-step values kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    joined: Tensor2,
    c_prev: Tensor2,
    i: Tensor2,
    f: Tensor2,
    g: Tensor2,
    o: Tensor2,
    tanh_c: Tensor2,
}

impl LstmCell {
    /// Uniform `±1/sqrt(h)` weights, zero bias except `+1` on the forget gate.
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden_size.max(1) as f64).sqrt();
        let weight = Tensor2::from_fn(input_size + hidden_size, 4 * hidden_size, |_, _| {
            rng.random_range(-bound..=bound)
        });
        let bias = Tensor2::from_fn(1, 4 * hidden_size, |_, c| {
            if (hidden_size..2 * hidden_size).contains(&c) {
                1.0
            } else {
                0.0
            }
        });
        Self {
            weight,
            bias,
            input_size,
            hidden_size,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            weight: Tensor2::zeros(input_size + hidden_size, 4 * hidden_size),
            bias: Tensor2::zeros(1, 4 * hidden_size),
            input_size,
            hidden_size,
        }
    }

    /// Rebuilds a cell from stored tensors, checking the packed layout.
    pub fn from_parts(weight: Tensor2, bias: Tensor2) -> Result<Self, NnError> {
        let four_h = weight.cols();
        if !four_h.is_multiple_of(4) || bias.shape() != (1, four_h) || weight.rows() < four_h / 4 {
            return Err(NnError::ShapeMismatch(format!(
                "lstm parts {:?} / {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let hidden_size = four_h / 4;
        Ok(Self {
            input_size: weight.rows() - hidden_size,
            hidden_size,
            weight,
            bias,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn check(&self, x: &Tensor2, h: &Tensor2, c: &Tensor2) -> Result<(), NnError> {
        let b = x.rows();
        if x.cols() != self.input_size
            || h.shape() != (b, self.hidden_size)
            || c.shape() != (b, self.hidden_size)
        {
            return Err(NnError::ShapeMismatch(format!(
                "lstm step: x {:?}, h {:?}, c {:?} for d={} h={}",
                x.shape(),
                h.shape(),
                c.shape(),
                self.input_size,
                self.hidden_size
            )));
        }
        Ok(())
    }

    /// One step over a batch of rows. Returns `(h_t, c_t, cache)`.
    pub fn step(
        &self,
        x: &Tensor2,
        h_prev: &Tensor2,
        c_prev: &Tensor2,
    ) -> Result<(Tensor2, Tensor2, LstmStepCache), NnError> {
        self.check(x, h_prev, c_prev)?;
        let (b, d, hs) = (x.rows(), self.input_size, self.hidden_size);
        let joined = Tensor2::from_fn(b, d + hs, |r, k| {
            if k < d {
                x.get(r, k)
            } else {
                h_prev.get(r, k - d)
            }
        });
        let mut z = joined.matmul(&self.weight)?;
        z.add_row_broadcast(&self.bias)?;

        let gate = |offset: usize, f: fn(f64) -> f64| {
            Tensor2::from_fn(b, hs, |r, k| f(z.get(r, offset * hs + k)))
        };
        let i = gate(0, sigmoid);
        let f = gate(1, sigmoid);
        let g = gate(2, f64::tanh);
        let o = gate(3, sigmoid);

        let c = Tensor2::from_fn(b, hs, |r, k| {
            f.get(r, k) * c_prev.get(r, k) + i.get(r, k) * g.get(r, k)
        });
        let tanh_c = c.map(f64::tanh);
        let h = Tensor2::from_fn(b, hs, |r, k| o.get(r, k) * tanh_c.get(r, k));
        let cache = LstmStepCache {
            joined,
            c_prev: c_prev.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((h, c.clone(), cache))
    }

    /// Backward through one step. `dh` and `dc` are the total gradients
    /// arriving at `h_t` and `c_t`; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &Tensor2,
        dc: &Tensor2,
        grads: &mut LstmCell,
    ) -> Result<(Tensor2, Tensor2, Tensor2), NnError> {
        let (b, hs, d) = (cache.i.rows(), self.hidden_size, self.input_size);
        if dh.shape() != (b, hs) || dc.shape() != (b, hs) {
            return Err(NnError::ShapeMismatch(format!(
                "lstm backward: dh {:?}, dc {:?}",
                dh.shape(),
                dc.shape()
            )));
        }
        let mut dz = Tensor2::zeros(b, 4 * hs);
        let mut dc_prev = Tensor2::zeros(b, hs);
        for r in 0..b {
            for k in 0..hs {
                let (i, f, g, o) = (
                    cache.i.get(r, k),
                    cache.f.get(r, k),
                    cache.g.get(r, k),
                    cache.o.get(r, k),
                );
                let tc = cache.tanh_c.get(r, k);
                let dh_rk = dh.get(r, k);
                let dct = dc.get(r, k) + dh_rk * o * (1.0 - tc * tc);
                dz.set(r, k, dct * g * i * (1.0 - i));
                dz.set(r, hs + k, dct * cache.c_prev.get(r, k) * f * (1.0 - f));
                dz.set(r, 2 * hs + k, dct * i * (1.0 - g * g));
                dz.set(r, 3 * hs + k, dh_rk * tc * o * (1.0 - o));
                dc_prev.set(r, k, dct * f);
            }
        }
        cache.joined.t_matmul_acc(&dz, &mut grads.weight)?;
        dz.col_sum_acc(&mut grads.bias)?;
        let d_joined = dz.matmul_t(&self.weight)?;
        let dx = Tensor2::from_fn(b, d, |r, k| d_joined.get(r, k));
        let dh_prev = Tensor2::from_fn(b, hs, |r, k| d_joined.get(r, d + k));
        Ok((dx, dh_prev, dc_prev))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_parameters_halve_the_cell() {
        let cell = LstmCell::zeros(2, 3);
        let x = Tensor2::from_fn(1, 2, |_, c| c as f64 + 0.3);
        let h0 = Tensor2::from_fn(1, 3, |_, c| c as f64 * 0.2);
        let c0 = Tensor2::from_fn(1, 3, |_, c| c as f64 - 1.0);
        let (h, c, cache) = cell.step(&x, &h0, &c0).unwrap();
        for k in 0..3 {
            assert_eq!(cache.f.get(0, k), 0.5);
            assert_eq!(cache.i.get(0, k), 0.5);
            assert_eq!(cache.o.get(0, k), 0.5);
            assert_eq!(cache.g.get(0, k), 0.0);
            assert_eq!(c.get(0, k), 0.5 * c0.get(0, k));
            assert_eq!(h.get(0, k), 0.5 * c.get(0, k).tanh());
        }
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cell = LstmCell::new(4, 6, &mut rng);
        cell.weight.data_mut().iter_mut().for_each(|w| *w *= 20.0);
        let (mut h, mut c) = (Tensor2::zeros(1, 6), Tensor2::zeros(1, 6));
        for _ in 0..20 {
            let x = Tensor2::from_fn(1, 4, |_, _| rng.random_range(-5.0..5.0));
            let (h2, c2, _) = cell.step(&x, &h, &c).unwrap();
            assert!(h2.is_finite() && h2.data().iter().all(|v| v.abs() <= 1.0));
            h = h2;
            c = c2;
        }
    }

    /// Second, scalar implementation of the gate equations.
    fn reference_step(cell: &LstmCell, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = cell.hidden_size();
        let joined: Vec<f64> = x.iter().chain(h).copied().collect();
        let pre = |col: usize| -> f64 {
            cell.bias.get(0, col)
                + joined
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * cell.weight.get(k, col))
                    .sum::<f64>()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h_new = vec![0.0; hs];
        let mut c_new = vec![0.0; hs];
        for k in 0..hs {
            let i = sig(pre(k));
            let f = sig(pre(hs + k));
            let g = pre(2 * hs + k).tanh();
            let o = sig(pre(3 * hs + k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn five_step_sequence_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cell = LstmCell::new(3, 5, &mut rng);
        let (mut h, mut c) = (Tensor2::zeros(1, 5), Tensor2::zeros(1, 5));
        let (mut hr, mut cr) = (vec![0.0; 5], vec![0.0; 5]);
        for _ in 0..5 {
            let xs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (h2, c2, _) = cell.step(&Tensor2::row_vector(xs.clone()), &h, &c).unwrap();
            let (h3, c3) = reference_step(&cell, &xs, &hr, &cr);
            for k in 0..5 {
                assert!((h2.get(0, k) - h3[k]).abs() < 1e-12);
                assert!((c2.get(0, k) - c3[k]).abs() < 1e-12);
            }
            (h, c, hr, cr) = (h2, c2, h3, c3);
        }
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let cell = LstmCell::zeros(2, 3);
        let res = cell.step(&Tensor2::zeros(1, 3), &Tensor2::zeros(1, 3), &Tensor2::zeros(1, 3));
        assert!(matches!(res, Err(NnError::ShapeMismatch(_))));
    }
}
