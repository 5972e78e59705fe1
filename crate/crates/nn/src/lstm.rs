use rand::Rng;

use crate::layer::{sigmoid, Param};
use crate::matrix::{gemv_acc, gemv_t_acc, outer_acc, Matrix};

/// Single-direction LSTM with tanh cell activation.
///
/// Gate pre-activations are stacked `[input, forget, candidate, output]`,
/// each `hidden` wide, so `input_weight` is `4H x D` and `recurrent_weight`
/// is `4H x H`. A reversed layer consumes the sequence from the last frame
/// to the first but still writes its output at the original frame index.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_weight: Param,
    pub recurrent_weight: Param,
    pub bias: Param,
    hidden: usize,
    reverse: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    input: Matrix,
    /// Activated gates per frame, `T x 4H`.
    gates: Matrix,
    cell: Matrix,
    cell_tanh: Matrix,
    hidden: Matrix,
}

impl Lstm {
    pub(crate) fn new<R: Rng>(input_dim: usize, hidden: usize, reverse: bool, rng: &mut R) -> Self {
        Self {
            input_weight: Param::glorot(4 * hidden, input_dim, input_dim, hidden, rng),
            recurrent_weight: Param::glorot(4 * hidden, hidden, hidden, hidden, rng),
            bias: Param::zeros(1, 4 * hidden),
            hidden,
            reverse,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn is_reverse(&self) -> bool {
        self.reverse
    }

    pub(crate) fn params(&self) -> Vec<&Param> {
        vec![&self.input_weight, &self.recurrent_weight, &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.input_weight, &mut self.recurrent_weight, &mut self.bias]
    }

    fn order(&self, len: usize) -> Box<dyn Iterator<Item = usize>> {
        if self.reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        }
    }

    pub(crate) fn forward(&self, x: &Matrix) -> (Matrix, LstmCache) {
        let h = self.hidden;
        let t_len = x.rows();
        let mut gates = Matrix::zeros(t_len, 4 * h);
        let mut cell = Matrix::zeros(t_len, h);
        let mut cell_tanh = Matrix::zeros(t_len, h);
        let mut hidden = Matrix::zeros(t_len, h);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        for t in self.order(t_len) {
            z.copy_from_slice(&self.bias.value);
            gemv_acc(&self.input_weight.value, x.row(t), &mut z);
            gemv_acc(&self.recurrent_weight.value, &h_prev, &mut z);
            let g = gates.row_mut(t);
            for k in 0..h {
                g[k] = sigmoid(z[k]);
                g[h + k] = sigmoid(z[h + k]);
                g[2 * h + k] = z[2 * h + k].tanh();
                g[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c = g[h + k] * c_prev[k] + g[k] * g[2 * h + k];
                let tc = c.tanh();
                c_prev[k] = c;
                h_prev[k] = g[3 * h + k] * tc;
                cell.set(t, k, c);
                cell_tanh.set(t, k, tc);
            }
            hidden.row_mut(t).copy_from_slice(&h_prev);
        }
        let cache = LstmCache {
            input: x.clone(),
            gates,
            cell,
            cell_tanh,
            hidden: hidden.clone(),
        };
        (hidden, cache)
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns the gradient with respect to the input sequence.
    pub(crate) fn backward(&mut self, cache: &LstmCache, g_out: &Matrix) -> Matrix {
        let h = self.hidden;
        let t_len = cache.input.rows();
        let mut dx = Matrix::zeros(t_len, cache.input.cols());
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];
        let order: Vec<usize> = self.order(t_len).collect();
        for (step, &t) in order.iter().enumerate().rev() {
            let prev = (step > 0).then(|| order[step - 1]);
            let c_prev = prev.map_or(&zeros[..], |p| cache.cell.row(p));
            let h_prev = prev.map_or(&zeros[..], |p| cache.hidden.row(p));
            let g = cache.gates.row(t);
            let tc = cache.cell_tanh.row(t);
            let go = g_out.row(t);
            for k in 0..h {
                let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dh = go[k] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dh * o * (1.0 - tc[k] * tc[k]) + dc_next[k];
                dz[k] = dc * cand * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - cand * cand);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            outer_acc(&dz, cache.input.row(t), &mut self.input_weight.grad);
            outer_acc(&dz, h_prev, &mut self.recurrent_weight.grad);
            for (b, d) in self.bias.grad.iter_mut().zip(&dz) {
                *b += d;
            }
            gemv_t_acc(&self.input_weight.value, &dz, dx.row_mut(t));
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            gemv_t_acc(&self.recurrent_weight.value, &dz, &mut dh_next);
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_parameters_give_zero_hidden_state() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut l = Lstm::new(3, 4, false, &mut rng);
        for p in l.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::from_fn(5, 3, |r, c| (r as f64 - 2.0) * (c as f64 + 0.5));
        let (y, _) = l.forward(&x);
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reverse_direction_mirrors_reversed_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let fwd = Lstm::new(2, 3, false, &mut rng);
        let mut rev = fwd.clone();
        rev.reverse = true;
        let x = Matrix::from_fn(4, 2, |r, c| ((r * 2 + c) as f64).sin());
        let xr = x.select_rows(&[3, 2, 1, 0]);
        let (a, _) = rev.forward(&x);
        let (b, _) = fwd.forward(&xr);
        for t in 0..4 {
            assert_eq!(a.row(t), b.row(3 - t));
        }
    }
}
