//! Stacked LSTM with a linear read-out, forward pass and backpropagation
//! through time over flat parameter vectors.
//!
//! Parameter layout, layer by layer: gate weights `W` (`4H × (I + H)`,
//! row-major, rows ordered input/forget/candidate/output gate, columns ordered
//! layer input then previous hidden state) followed by gate biases (`4H`).
//! The read-out weights (`O × (H + I)`, columns ordered top hidden state then
//! the current network input) and biases (`O`) come last. Feeding the input
//! straight to the read-out lets the recurrent layers model only the
//! departure of the target from an affine map of the input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::parallel::{map_indexed, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub layers: usize,
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.input == 0 || self.output == 0 {
            return Err(Error::InvalidParam(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    fn layer_cols(&self, l: usize) -> usize {
        self.layer_input(l) + self.hidden
    }

    fn layer_len(&self, l: usize) -> usize {
        4 * self.hidden * (self.layer_cols(l) + 1)
    }

    /// Offset of layer `l`'s weights; its biases follow at `+ 4H·cols`.
    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.layer_len(k)).sum()
    }

    fn head_cols(&self) -> usize {
        self.hidden + self.input
    }

    fn head_offset(&self) -> usize {
        self.layer_offset(self.layers)
    }

    pub fn param_count(&self) -> usize {
        self.head_offset() + self.output * (self.head_cols() + 1)
    }
}

/// Hidden and cell state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(shape: &ModelShape) -> Self {
        Self {
            h: vec![vec![0.0; shape.hidden]; shape.layers],
            c: vec![vec![0.0; shape.hidden]; shape.layers],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    shape: ModelShape,
    params: Vec<f64>,
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-layer activations of one time step kept for the backward pass.
struct StepCache {
    xh: Vec<f64>,
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmModel {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            params: vec![0.0; shape.param_count()],
            shape,
        })
    }

    /// Uniform in `±1/√fan_in` per block, fan-in being the number of columns.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..shape.layers {
            let bound = 1.0 / (shape.layer_cols(l) as f64).sqrt();
            let off = shape.layer_offset(l);
            for p in &mut model.params[off..off + shape.layer_len(l)] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let bound = 1.0 / (shape.head_cols() as f64).sqrt();
        let off = shape.head_offset();
        for p in &mut model.params[off..] {
            *p = rng.random_range(-bound..bound);
        }
        Ok(model)
    }

    pub fn from_params(shape: ModelShape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        ensure_len("model parameters", shape.param_count(), params.len())?;
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn fresh_state(&self) -> LstmState {
        LstmState::zeros(&self.shape)
    }

    fn layer_forward(&self, l: usize, xh: &[f64], c: &mut [f64], h: &mut [f64], gates: &mut [f64]) {
        let hid = self.shape.hidden;
        let cols = self.shape.layer_cols(l);
        let off = self.shape.layer_offset(l);
        let w = &self.params[off..off + 4 * hid * cols];
        let b = &self.params[off + 4 * hid * cols..off + 4 * hid * (cols + 1)];
        for (r, z) in gates.iter_mut().enumerate() {
            let row = &w[r * cols..(r + 1) * cols];
            *z = b[r] + dot(row, xh);
        }
        for k in 0..hid {
            let i = sigmoid(gates[k]);
            let f = sigmoid(gates[hid + k]);
            let g = gates[2 * hid + k].tanh();
            let o = sigmoid(gates[3 * hid + k]);
            gates[k] = i;
            gates[hid + k] = f;
            gates[2 * hid + k] = g;
            gates[3 * hid + k] = o;
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }

    fn head(&self, h: &[f64], x: &[f64]) -> Vec<f64> {
        let hid = self.shape.hidden;
        let cols = self.shape.head_cols();
        let off = self.shape.head_offset();
        let w = &self.params[off..off + self.shape.output * cols];
        let b = &self.params[off + self.shape.output * cols..];
        (0..self.shape.output)
            .map(|o| {
                let row = &w[o * cols..(o + 1) * cols];
                b[o] + dot(&row[..hid], h) + dot(&row[hid..], x)
            })
            .collect()
    }

    /// One time step, advancing `state` in place.
    pub fn step(&self, state: &mut LstmState, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("model input", self.shape.input, x.len())?;
        if state.h.len() != self.shape.layers {
            return Err(Error::Shape {
                what: "recurrent state layers",
                expected: self.shape.layers,
                got: state.h.len(),
            });
        }
        let mut gates = vec![0.0; 4 * self.shape.hidden];
        let mut layer_in = x.to_vec();
        for l in 0..self.shape.layers {
            let mut xh = layer_in;
            xh.extend_from_slice(&state.h[l]);
            self.layer_forward(l, &xh, &mut state.c[l], &mut state.h[l], &mut gates);
            layer_in = state.h[l].clone();
        }
        Ok(self.head(&layer_in, x))
    }

    /// Runs a whole sequence from a zero state.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut state = self.fresh_state();
        self.forward_from(&mut state, xs)
    }

    pub fn forward_from(&self, state: &mut LstmState, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.step(state, x)).collect()
    }

    /// Sum of squared errors over a sequence from a zero state; its gradient is
    /// accumulated into `grad`.
    pub fn accumulate_gradient(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<f64> {
        self.accumulate_gradient_from(&self.fresh_state(), inputs, targets, grad)
            .map(|(sse, _)| sse)
    }

    /// As [`accumulate_gradient`](Self::accumulate_gradient) but starting from
    /// `initial`, which is treated as a constant (truncated BPTT). Also returns
    /// the state after the last step.
    pub fn accumulate_gradient_from(
        &self,
        initial: &LstmState,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<(f64, LstmState)> {
        let sh = self.shape;
        if initial.h.len() != sh.layers || initial.c.len() != sh.layers {
            return Err(Error::Shape {
                what: "recurrent state layers",
                expected: sh.layers,
                got: initial.h.len(),
            });
        }
        ensure_len("gradient buffer", sh.param_count(), grad.len())?;
        ensure_len("targets", inputs.len(), targets.len())?;
        let hid = sh.hidden;
        let steps = inputs.len();

        // forward with caches
        let mut state = initial.clone();
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(steps);
        let mut tops: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut sse = 0.0;
        let mut dys: Vec<Vec<f64>> = Vec::with_capacity(steps);
        for (x, y) in inputs.iter().zip(targets) {
            ensure_len("model input", sh.input, x.len())?;
            ensure_len("model target", sh.output, y.len())?;
            let mut layer_in = x.clone();
            let mut per_layer = Vec::with_capacity(sh.layers);
            for l in 0..sh.layers {
                let mut xh = layer_in;
                xh.extend_from_slice(&state.h[l]);
                let c_prev = state.c[l].clone();
                let mut gates = vec![0.0; 4 * hid];
                self.layer_forward(l, &xh, &mut state.c[l], &mut state.h[l], &mut gates);
                per_layer.push(StepCache {
                    xh,
                    gates,
                    c_prev,
                    tanh_c: state.c[l].iter().map(|c| c.tanh()).collect(),
                });
                layer_in = state.h[l].clone();
            }
            let out = self.head(&layer_in, x);
            let dy: Vec<f64> = out.iter().zip(y).map(|(o, t)| o - t).collect();
            sse += dy.iter().map(|d| d * d).sum::<f64>();
            dys.push(dy.iter().map(|d| 2.0 * d).collect());
            tops.push(layer_in);
            caches.push(per_layer);
        }

        // backward through time
        let head_off = sh.head_offset();
        let mut dh_next = vec![vec![0.0; hid]; sh.layers];
        let mut dc_next = vec![vec![0.0; hid]; sh.layers];
        let mut dz = vec![0.0; 4 * hid];
        for t in (0..steps).rev() {
            // read-out
            let mut dh = dh_next[sh.layers - 1].clone();
            {
                let cols = sh.head_cols();
                let (gw, gb) = grad[head_off..].split_at_mut(sh.output * cols);
                let w = &self.params[head_off..head_off + sh.output * cols];
                for (o, &d) in dys[t].iter().enumerate() {
                    gb[o] += d;
                    let (grow, gskip) = gw[o * cols..(o + 1) * cols].split_at_mut(hid);
                    let wrow = &w[o * cols..o * cols + hid];
                    for ((g, x), (dhk, wv)) in grow.iter_mut().zip(&tops[t]).zip(dh.iter_mut().zip(wrow)) {
                        *g += d * x;
                        *dhk += wv * d;
                    }
                    for (g, x) in gskip.iter_mut().zip(&inputs[t]) {
                        *g += d * x;
                    }
                }
            }
            for l in (0..sh.layers).rev() {
                if l < sh.layers - 1 {
                    for (a, b) in dh.iter_mut().zip(&dh_next[l]) {
                        *a += b;
                    }
                }
                let cache = &caches[t][l];
                let g = &cache.gates;
                let dc = &mut dc_next[l];
                for k in 0..hid {
                    let (i, f, cand, o) = (g[k], g[hid + k], g[2 * hid + k], g[3 * hid + k]);
                    let tc = cache.tanh_c[k];
                    let dck = dh[k] * o * (1.0 - tc * tc) + dc[k];
                    dz[k] = dck * cand * i * (1.0 - i);
                    dz[hid + k] = dck * cache.c_prev[k] * f * (1.0 - f);
                    dz[2 * hid + k] = dck * i * (1.0 - cand * cand);
                    dz[3 * hid + k] = dh[k] * tc * o * (1.0 - o);
                    dc[k] = dck * f;
                }
                let cols = sh.layer_cols(l);
                let off = sh.layer_offset(l);
                let w = &self.params[off..off + 4 * hid * cols];
                let (gw, rest) = grad[off..].split_at_mut(4 * hid * cols);
                let gb = &mut rest[..4 * hid];
                let mut dxh = vec![0.0; cols];
                for (r, &d) in dz.iter().enumerate() {
                    gb[r] += d;
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &w[r * cols..(r + 1) * cols];
                    let grow = &mut gw[r * cols..(r + 1) * cols];
                    for ((g, x), (dx, wv)) in grow.iter_mut().zip(&cache.xh).zip(dxh.iter_mut().zip(wrow)) {
                        *g += d * x;
                        *dx += wv * d;
                    }
                }
                let nin = sh.layer_input(l);
                dh_next[l].copy_from_slice(&dxh[nin..]);
                if l > 0 {
                    dh = dxh[..nin].to_vec();
                }
            }
        }
        Ok((sse, state))
    }
}

/// Mean squared error over every step and output of a batch and its gradient,
/// each sequence starting from a zero state.
pub fn loss_and_gradients(
    model: &LstmModel,
    batch: &[(&[Vec<f64>], &[Vec<f64>])],
    exec: Exec,
) -> Result<(f64, Vec<f64>)> {
    let zero = model.fresh_state();
    let from: Vec<_> = batch.iter().map(|&(x, y)| (&zero, x, y)).collect();
    loss_and_gradients_from(model, &from, exec).map(|(loss, grad, _)| (loss, grad))
}

/// Batch item: starting state, inputs, targets.
pub type StatefulItem<'a> = (&'a LstmState, &'a [Vec<f64>], &'a [Vec<f64>]);

/// [`loss_and_gradients`] with a given starting state per sequence; also
/// returns each sequence's final state, in batch order.
pub fn loss_and_gradients_from(
    model: &LstmModel,
    batch: &[StatefulItem<'_>],
    exec: Exec,
) -> Result<(f64, Vec<f64>, Vec<LstmState>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let count: usize = batch.iter().map(|(_, x, _)| x.len()).sum::<usize>() * model.shape.output;
    if count == 0 {
        return Err(Error::Empty("training batch sequences"));
    }
    let parts = map_indexed(exec, batch, |_, (s, x, y)| {
        let mut g = vec![0.0; model.shape.param_count()];
        model
            .accumulate_gradient_from(s, x, y, &mut g)
            .map(|(sse, end)| (sse, g, end))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; model.shape.param_count()];
    let mut finals = Vec::with_capacity(batch.len());
    for part in parts {
        let (sse, g, end) = part?;
        total += sse;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        finals.push(end);
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad, finals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(layers: usize, hidden: usize) -> ModelShape {
        ModelShape {
            layers,
            hidden,
            input: 9,
            output: 9,
        }
    }

    #[test]
    fn param_count_matches_layout() {
        let s = shape(4, 200);
        let expected = 4 * 200 * (9 + 200 + 1) + 3 * 4 * 200 * (400 + 1) + 9 * (200 + 9 + 1);
        assert_eq!(s.param_count(), expected);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = LstmModel::zeros(shape(2, 8)).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64; 9]).collect();
        for y in m.forward(&xs).unwrap() {
            assert!(y.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_cell_hand_computation() {
        let s = ModelShape {
            layers: 1,
            hidden: 1,
            input: 1,
            output: 1,
        };
        // rows i, f, g, o over columns [x, h]; then biases; then head [h, x], b
        let params = vec![
            0.5, 0.1, // i
            -0.3, 0.2, // f
            0.8, -0.4, // g
            0.2, 0.3, // o
            0.1, 0.0, -0.2, 0.05, // biases
            1.5, 0.4, -0.25, // head
        ];
        let m = LstmModel::from_params(s, params).unwrap();
        let x = 0.7;
        let i = sigmoid(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2).tanh();
        let o = sigmoid(0.2 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let y = m.forward(&[vec![x]]).unwrap();
        assert!((y[0][0] - (1.5 * h + 0.4 * x - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic_and_streams() {
        let m = LstmModel::init(shape(2, 6), 11).unwrap();
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|k| (0..9).map(|d| ((k * 9 + d) as f64 * 0.37).sin()).collect())
            .collect();
        let a = m.forward(&xs).unwrap();
        assert_eq!(a, m.forward(&xs).unwrap());

        let mut st = m.fresh_state();
        let first = m.forward_from(&mut st, &xs[..5]).unwrap();
        let rest = m.forward_from(&mut st, &xs[5..]).unwrap();
        assert_eq!([first, rest].concat(), a);
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = LstmModel::init(shape(1, 3), 0).unwrap();
        assert!(m.forward(&[vec![0.0; 4]]).is_err());
        assert!(LstmModel::from_params(shape(1, 3), vec![0.0; 5]).is_err());
        assert!(loss_and_gradients(&m, &[], Exec::Sequential).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let m = LstmModel::init(shape(2, 4), 3).unwrap();
        let xs: Vec<Vec<f64>> = (0..6).map(|k| vec![0.1 * k as f64; 9]).collect();
        let ys = m.forward(&xs).unwrap();
        let (loss, grad) = loss_and_gradients(&m, &[(&xs, &ys)], Exec::Sequential).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn carried_state_gradient_matches_differences() {
        let sh = ModelShape {
            layers: 2,
            hidden: 3,
            input: 2,
            output: 2,
        };
        let m = LstmModel::init(sh, 5).unwrap();
        let warm: Vec<Vec<f64>> = (0..4).map(|k| vec![0.3 * k as f64, -0.2]).collect();
        let mut start = m.fresh_state();
        m.forward_from(&mut start, &warm).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|k| vec![0.1, 0.4 - 0.2 * k as f64]).collect();
        let ys: Vec<Vec<f64>> = (0..3).map(|k| vec![0.5 * k as f64, -0.3]).collect();

        let mut grad = vec![0.0; sh.param_count()];
        let (_, end) = m.accumulate_gradient_from(&start, &xs, &ys, &mut grad).unwrap();
        let mut streamed = start.clone();
        m.forward_from(&mut streamed, &xs).unwrap();
        assert_eq!(end, streamed);

        let sse = |p: Vec<f64>| {
            let mm = LstmModel::from_params(sh, p).unwrap();
            let mut g = vec![0.0; sh.param_count()];
            mm.accumulate_gradient_from(&start, &xs, &ys, &mut g).unwrap().0
        };
        let h = 1e-6;
        for k in 0..sh.param_count() {
            let (mut up, mut down) = (m.params.clone(), m.params.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (sse(up) - sse(down)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
