use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// One recurrent layer. Gate rows are stacked as input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: DenseMatrix,
    pub w_h: DenseMatrix,
    pub bias: DenseMatrix,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: DenseMatrix::zeros(4 * hidden, input),
            w_h: DenseMatrix::zeros(4 * hidden, hidden),
            bias: DenseMatrix::zeros(4 * hidden, 1),
        }
    }

    /// Uniform(-scale, scale) weights, zero biases except the forget gate.
    pub fn init<R: Rng>(input: usize, hidden: usize, scale: f64, forget_bias: f64, rng: &mut R) -> Self {
        let w_x = DenseMatrix::uniform(4 * hidden, input, scale, rng);
        let w_h = DenseMatrix::uniform(4 * hidden, hidden, scale, rng);
        let mut bias = DenseMatrix::zeros(4 * hidden, 1);
        for j in hidden..2 * hidden {
            bias.set(j, 0, forget_bias);
        }
        LstmParams { w_x, w_h, bias }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input(&self) -> usize {
        self.w_x.cols()
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams {
            w_x: self.w_x.zeros_like(),
            w_h: self.w_h.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate algebra given the projections `zx = W_x x` and `zh = W_h h_prev`.
///
/// Pre-activations are formed as `(zx + zh) + b` in that order, so callers
/// that cache either projection get bit-identical results to [`lstm_step`].
pub fn lstm_gates(
    params: &LstmParams,
    zx: &[f64],
    zh: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, [Vec<f64>; 5])> {
    let hsz = params.hidden();
    let z: Vec<f64> = zx
        .iter()
        .zip(zh)
        .zip(params.bias.data())
        .map(|((&x, &h), &b)| (x + h) + b)
        .collect();
    let mut i = vec![0.0; hsz];
    let mut f = vec![0.0; hsz];
    let mut g = vec![0.0; hsz];
    let mut o = vec![0.0; hsz];
    let mut c = vec![0.0; hsz];
    let mut tanh_c = vec![0.0; hsz];
    let mut h = vec![0.0; hsz];
    for j in 0..hsz {
        i[j] = sigmoid(z[j]);
        f[j] = sigmoid(z[hsz + j]);
        g[j] = z[2 * hsz + j].tanh();
        o[j] = sigmoid(z[3 * hsz + j]);
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            block: "lstm gate pre-activations".into(),
        });
    }
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            block: "lstm cell state".into(),
        });
    }
    Ok((h, c, [i, f, g, o, tanh_c]))
}

pub fn lstm_step(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(params, x, h_prev, c_prev)?;
    let zx = params.w_x.matvec(x);
    let zh = params.w_h.matvec(h_prev);
    let (h, c, _) = lstm_gates(params, &zx, &zh, c_prev)?;
    Ok((h, c))
}

/// Forward step that keeps the activations for backpropagation.
pub fn lstm_step_cached(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
    check_dims(params, x, h_prev, c_prev)?;
    let zx = params.w_x.matvec(x);
    let zh = params.w_h.matvec(h_prev);
    let (h, c, [i, f, g, o, tanh_c]) = lstm_gates(params, &zx, &zh, c_prev)?;
    Ok(LstmStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        tanh_c,
        h,
        c,
    })
}

fn check_dims(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
    let hsz = params.hidden();
    if x.len() != params.input() || h_prev.len() != hsz || c_prev.len() != hsz {
        return Err(Error::Data(format!(
            "lstm dimension mismatch: input {} (expected {}), hidden {}/{} (expected {hsz})",
            x.len(),
            params.input(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    Ok(())
}

/// Backward through one step.
///
/// `dh` and `dc` are the total gradients arriving at this step's outputs.
/// Parameter gradients accumulate into `grads`, the input gradient into `dx`.
/// Returns the gradients with respect to `h_prev` and `c_prev`.
pub fn lstm_step_backward(
    params: &LstmParams,
    step: &LstmStep,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let hsz = params.hidden();
    let mut dz = vec![0.0; 4 * hsz];
    let mut dc_prev = vec![0.0; hsz];
    for j in 0..hsz {
        let (i, f, g, o, tc) = (step.i[j], step.f[j], step.g[j], step.o[j], step.tanh_c[j]);
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        let di = dct * g;
        let dg = dct * i;
        let df = dct * step.c_prev[j];
        dc_prev[j] = dct * f;
        dz[j] = di * i * (1.0 - i);
        dz[hsz + j] = df * f * (1.0 - f);
        dz[2 * hsz + j] = dg * (1.0 - g * g);
        dz[3 * hsz + j] = d_o * o * (1.0 - o);
    }
    grads.w_x.add_outer(&dz, &step.x);
    grads.w_h.add_outer(&dz, &step.h_prev);
    for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
        *b += d;
    }
    params.w_x.matvec_t_acc(&dz, dx);
    let mut dh_prev = vec![0.0; hsz];
    params.w_h.matvec_t_acc(&dz, &mut dh_prev);
    (dh_prev, dc_prev)
}
