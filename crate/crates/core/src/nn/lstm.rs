//! Single LSTM layer over a `[batch, features, time]` sequence.
//!
//! Gate order within the stacked `4H` rows is input, forget, cell, output.
//! Weights: `w_ih [4H, I]`, `w_hh [4H, H]`, bias `[4H]`.

use crate::nn::ops::sigmoid;

/// Per-step values retained for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub batch: usize,
    pub input: usize,
    pub hidden: usize,
    pub steps: usize,
    /// `[T, B, I]`
    xs: Vec<f64>,
    /// Post-nonlinearity gates `[T, B, 4H]`.
    gates: Vec<f64>,
    /// Cell states `[T + 1, B, H]`, index 0 is the zero initial state.
    cells: Vec<f64>,
    /// Hidden states `[T + 1, B, H]`.
    hiddens: Vec<f64>,
}

/// Returns the hidden sequence as `[B, H, T]`.
pub fn lstm_forward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
    batch: usize,
    input: usize,
    hidden: usize,
    steps: usize,
) -> (Vec<f64>, LstmCache) {
    let g4 = 4 * hidden;
    let mut xs = vec![0.0; steps * batch * input];
    for n in 0..batch {
        for i in 0..input {
            for t in 0..steps {
                xs[(t * batch + n) * input + i] = x[(n * input + i) * steps + t];
            }
        }
    }
    let mut gates = vec![0.0; steps * batch * g4];
    let mut cells = vec![0.0; (steps + 1) * batch * hidden];
    let mut hiddens = vec![0.0; (steps + 1) * batch * hidden];
    let mut z = vec![0.0; g4];
    for t in 0..steps {
        for n in 0..batch {
            let xt = &xs[(t * batch + n) * input..(t * batch + n + 1) * input];
            let hp = (t * batch + n) * hidden;
            let h_prev = &hiddens[hp..hp + hidden];
            for r in 0..g4 {
                let wi = &w_ih[r * input..(r + 1) * input];
                let wh = &w_hh[r * hidden..(r + 1) * hidden];
                z[r] = bias[r]
                    + wi.iter().zip(xt).map(|(a, b)| a * b).sum::<f64>()
                    + wh.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            let gt = &mut gates[(t * batch + n) * g4..(t * batch + n + 1) * g4];
            for j in 0..hidden {
                gt[j] = sigmoid(z[j]);
                gt[hidden + j] = sigmoid(z[hidden + j]);
                gt[2 * hidden + j] = z[2 * hidden + j].tanh();
                gt[3 * hidden + j] = sigmoid(z[3 * hidden + j]);
            }
            let cur = ((t + 1) * batch + n) * hidden;
            for j in 0..hidden {
                let c = gt[hidden + j] * cells[hp + j] + gt[j] * gt[2 * hidden + j];
                cells[cur + j] = c;
                hiddens[cur + j] = gt[3 * hidden + j] * c.tanh();
            }
        }
    }
    let mut out = vec![0.0; batch * hidden * steps];
    for t in 0..steps {
        for n in 0..batch {
            let cur = ((t + 1) * batch + n) * hidden;
            for j in 0..hidden {
                out[(n * hidden + j) * steps + t] = hiddens[cur + j];
            }
        }
    }
    let cache = LstmCache {
        batch,
        input,
        hidden,
        steps,
        xs,
        gates,
        cells,
        hiddens,
    };
    (out, cache)
}

/// Backpropagation through time. `dy` is the gradient of the hidden
/// sequence (`[B, H, T]`); returns the input gradient in `[B, I, T]`.
pub fn lstm_backward(
    cache: &LstmCache,
    w_ih: &[f64],
    w_hh: &[f64],
    dy: &[f64],
    dw_ih: &mut [f64],
    dw_hh: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let LstmCache {
        batch,
        input,
        hidden,
        steps,
        ..
    } = *cache;
    let g4 = 4 * hidden;
    let mut dx = vec![0.0; batch * input * steps];
    let mut dh_next = vec![0.0; batch * hidden];
    let mut dc_next = vec![0.0; batch * hidden];
    let mut dz = vec![0.0; g4];
    for t in (0..steps).rev() {
        for n in 0..batch {
            let gt = &cache.gates[(t * batch + n) * g4..(t * batch + n + 1) * g4];
            let prev = (t * batch + n) * hidden;
            let cur = ((t + 1) * batch + n) * hidden;
            for j in 0..hidden {
                let dh = dy[(n * hidden + j) * steps + t] + dh_next[n * hidden + j];
                let (i, f, g, o) = (gt[j], gt[hidden + j], gt[2 * hidden + j], gt[3 * hidden + j]);
                let tc = cache.cells[cur + j].tanh();
                let dc = dc_next[n * hidden + j] + dh * o * (1.0 - tc * tc);
                dz[j] = dc * g * i * (1.0 - i);
                dz[hidden + j] = dc * cache.cells[prev + j] * f * (1.0 - f);
                dz[2 * hidden + j] = dc * i * (1.0 - g * g);
                dz[3 * hidden + j] = dh * tc * o * (1.0 - o);
                dc_next[n * hidden + j] = dc * f;
            }
            let xt = &cache.xs[(t * batch + n) * input..(t * batch + n + 1) * input];
            let h_prev = &cache.hiddens[prev..prev + hidden];
            let dh_prev = &mut dh_next[n * hidden..(n + 1) * hidden];
            dh_prev.fill(0.0);
            for r in 0..g4 {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                dbias[r] += g;
                let wi = &w_ih[r * input..(r + 1) * input];
                let dwi = &mut dw_ih[r * input..(r + 1) * input];
                for k in 0..input {
                    dwi[k] += g * xt[k];
                    dx[(n * input + k) * steps + t] += g * wi[k];
                }
                let wh = &w_hh[r * hidden..(r + 1) * hidden];
                let dwh = &mut dw_hh[r * hidden..(r + 1) * hidden];
                for k in 0..hidden {
                    dwh[k] += g * h_prev[k];
                    dh_prev[k] += g * wh[k];
                }
            }
        }
    }
    dx
}
