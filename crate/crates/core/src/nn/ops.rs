//! Forward/backward kernels for the layer vocabulary.
//!
//! Sequence activations use `[batch, channels, time]` layout; flat ones use
//! `[batch, features]`.

/// Valid (unpadded) stride-1 convolution.
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
) -> Vec<f64> {
    let out_len = len + 1 - kernel;
    let mut y = vec![0.0; batch * c_out * out_len];
    for n in 0..batch {
        let xn = &x[n * c_in * len..(n + 1) * c_in * len];
        for o in 0..c_out {
            let yo = &mut y[(n * c_out + o) * out_len..(n * c_out + o + 1) * out_len];
            yo.fill(b[o]);
            for i in 0..c_in {
                let xi = &xn[i * len..(i + 1) * len];
                let wk = &w[(o * c_in + i) * kernel..(o * c_in + i + 1) * kernel];
                for (k, &wv) in wk.iter().enumerate() {
                    for (yv, &xv) in yo.iter_mut().zip(&xi[k..k + out_len]) {
                        *yv += wv * xv;
                    }
                }
            }
        }
    }
    y
}

/// Returns the input gradient; accumulates into `dw` and `db`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
) -> Vec<f64> {
    let out_len = len + 1 - kernel;
    let mut dx = vec![0.0; x.len()];
    for n in 0..batch {
        let xn = &x[n * c_in * len..(n + 1) * c_in * len];
        let dxn = &mut dx[n * c_in * len..(n + 1) * c_in * len];
        for o in 0..c_out {
            let dyo = &dy[(n * c_out + o) * out_len..(n * c_out + o + 1) * out_len];
            db[o] += dyo.iter().sum::<f64>();
            for i in 0..c_in {
                let xi = &xn[i * len..(i + 1) * len];
                let dxi = &mut dxn[i * len..(i + 1) * len];
                let base = (o * c_in + i) * kernel;
                for k in 0..kernel {
                    let wv = w[base + k];
                    let mut acc = 0.0;
                    for ((dxv, &xv), &g) in dxi[k..k + out_len]
                        .iter_mut()
                        .zip(&xi[k..k + out_len])
                        .zip(dyo)
                    {
                        acc += g * xv;
                        *dxv += g * wv;
                    }
                    dw[base + k] += acc;
                }
            }
        }
    }
    dx
}

/// `y = x wᵀ + b` with `w` laid out `[out, in]`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64], batch: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * d_out];
    for n in 0..batch {
        let xn = &x[n * d_in..(n + 1) * d_in];
        for o in 0..d_out {
            let wo = &w[o * d_in..(o + 1) * d_in];
            y[n * d_out + o] = b[o] + wo.iter().zip(xn).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; batch * d_in];
    for n in 0..batch {
        let xn = &x[n * d_in..(n + 1) * d_in];
        let dxn = &mut dx[n * d_in..(n + 1) * d_in];
        for o in 0..d_out {
            let g = dy[n * d_out + o];
            db[o] += g;
            let wo = &w[o * d_in..(o + 1) * d_in];
            let dwo = &mut dw[o * d_in..(o + 1) * d_in];
            for j in 0..d_in {
                dwo[j] += g * xn[j];
                dxn[j] += g * wo[j];
            }
        }
    }
    dx
}

/// Mean over the time axis: `[B, C, T] -> [B, C]`.
pub fn global_avg_pool_forward(x: &[f64], batch: usize, channels: usize, len: usize) -> Vec<f64> {
    let inv = 1.0 / len as f64;
    (0..batch * channels)
        .map(|r| x[r * len..(r + 1) * len].iter().sum::<f64>() * inv)
        .collect()
}

pub fn global_avg_pool_backward(dy: &[f64], len: usize) -> Vec<f64> {
    let inv = 1.0 / len as f64;
    dy.iter().flat_map(|&g| std::iter::repeat(g * inv).take(len)).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
