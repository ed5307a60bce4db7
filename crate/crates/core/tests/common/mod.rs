//! Naive scalar-loop reference implementations, independent of the tape.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqa_core::model::{AttentionParams, LstmCellParams};
use sqa_core::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction, step by step, gates in input/forget/cell/output order.
pub fn naive_lstm(p: &LstmCellParams, x: &Tensor, reverse: bool) -> Vec<Vec<f64>> {
    let steps = x.shape()[0];
    let d = x.shape()[1];
    let h = p.w_hh.shape()[1];
    let w = |m: &Tensor, r: usize, c: usize| m.data()[r * m.shape()[1] + c];
    let mut hs = vec![vec![0.0; h]; steps];
    let mut hidden = vec![0.0; h];
    let mut cell = vec![0.0; h];
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let mut z = vec![0.0; 4 * h];
        for (r, zr) in z.iter_mut().enumerate() {
            let mut s = p.bias.data()[r];
            for c in 0..d {
                s += w(&p.w_ih, r, c) * x.data()[t * d + c];
            }
            for c in 0..h {
                s += w(&p.w_hh, r, c) * hidden[c];
            }
            *zr = s;
        }
        for j in 0..h {
            let i = logistic(z[j]);
            let f = logistic(z[h + j]);
            let g = z[2 * h + j].tanh();
            let o = logistic(z[3 * h + j]);
            cell[j] = f * cell[j] + i * g;
            hidden[j] = o * cell[j].tanh();
        }
        hs[t] = hidden.clone();
    }
    hs
}

pub fn naive_blstm(fwd: &LstmCellParams, bwd: &LstmCellParams, x: &Tensor) -> Vec<Vec<f64>> {
    let f = naive_lstm(fwd, x, false);
    let b = naive_lstm(bwd, x, true);
    f.into_iter().zip(b).map(|(mut a, b)| {
        a.extend(b);
        a
    }).collect()
}

/// Double loop over frame pairs.
pub fn naive_attention(p: &AttentionParams, h: &Tensor) -> Vec<Vec<f64>> {
    let steps = h.shape()[0];
    let c = h.shape()[1];
    let a = p.bias.len();
    let hv = |t: usize, k: usize| h.data()[t * c + k];
    let mut out = vec![vec![0.0; c]; steps];
    for t in 0..steps {
        let mut e = vec![0.0; steps];
        for (u, eu) in e.iter_mut().enumerate() {
            let mut s = p.bias_score.data()[0];
            for j in 0..a {
                let mut z = p.bias.data()[j];
                for k in 0..c {
                    z += hv(t, k) * p.w_frame.data()[k * a + j] + hv(u, k) * p.w_context.data()[k * a + j];
                }
                s += p.w_score.data()[j] * z.tanh();
            }
            *eu = logistic(s);
        }
        let m = e.iter().cloned().fold(f64::MIN, f64::max);
        let total: f64 = e.iter().map(|v| (v - m).exp()).sum();
        for u in 0..steps {
            let w = (e[u] - m).exp() / total;
            for k in 0..c {
                out[t][k] += w * hv(u, k);
            }
        }
    }
    out
}

/// Triple loop with explicit zero padding.
pub fn naive_conv(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Vec<Vec<f64>> {
    let steps = x.shape()[0];
    let c = x.shape()[1];
    let n = kernel.shape()[0];
    let mut out = vec![vec![0.0; n]; steps];
    for t in 0..steps {
        for j in 0..n {
            let mut s = bias.data()[j];
            for k in 0..3 {
                let src = t as isize + k as isize - 1;
                if src < 0 || src >= steps as isize {
                    continue;
                }
                for ci in 0..c {
                    s += kernel.data()[(j * c + ci) * 3 + k] * x.data()[src as usize * c + ci];
                }
            }
            out[t][j] = s;
        }
    }
    out
}

pub fn max_abs_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    let cols = a.shape()[1];
    b.iter()
        .enumerate()
        .flat_map(|(t, row)| row.iter().enumerate().map(move |(k, v)| (t, k, *v)))
        .map(|(t, k, v)| (a.data()[t * cols + k] - v).abs())
        .fold(0.0, f64::max)
}
