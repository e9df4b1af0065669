//! Straight-line f64 forward pass over plain vectors, written from the cell
//! equations without the tape. One sequence at a time.

use jtpred::model::{GruWeights, LstmWeights, ModelConfig, ModelParams};
use jtpred::textpipe::EncodedSequence;
use jtpred::Tensor;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x W + h U + b` for `W: [in, n]`, `U: [n, n]`.
fn pre(x: &[f64], h: &[f64], w: &Tensor<f64>, u: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let n = b.len();
    let (wd, ud) = (w.data(), u.data());
    (0..n)
        .map(|j| {
            let mut s = b.data()[j];
            for (i, xi) in x.iter().enumerate() {
                s += xi * wd[i * n + j];
            }
            for (i, hi) in h.iter().enumerate() {
                s += hi * ud[i * n + j];
            }
            s
        })
        .collect()
}

pub fn gru_step(x: &[f64], h: &[f64], g: &GruWeights<f64>) -> Vec<f64> {
    let z: Vec<f64> = pre(x, h, &g.w_z, &g.u_z, &g.b_z).into_iter().map(sig).collect();
    let r: Vec<f64> = pre(x, h, &g.w_r, &g.u_r, &g.b_r).into_iter().map(sig).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = pre(x, &rh, &g.w_h, &g.u_h, &g.b_h).into_iter().map(f64::tanh).collect();
    (0..h.len()).map(|j| (1.0 - z[j]) * h[j] + z[j] * cand[j]).collect()
}

pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], g: &LstmWeights<f64>) -> (Vec<f64>, Vec<f64>) {
    let i: Vec<f64> = pre(x, h, &g.w_i, &g.u_i, &g.b_i).into_iter().map(sig).collect();
    let f: Vec<f64> = pre(x, h, &g.w_f, &g.u_f, &g.b_f).into_iter().map(sig).collect();
    let o: Vec<f64> = pre(x, h, &g.w_o, &g.u_o, &g.b_o).into_iter().map(sig).collect();
    let cand: Vec<f64> = pre(x, h, &g.w_c, &g.u_c, &g.b_c).into_iter().map(f64::tanh).collect();
    let c_new: Vec<f64> = (0..c.len()).map(|j| f[j] * c[j] + i[j] * cand[j]).collect();
    let h_new: Vec<f64> = (0..c.len()).map(|j| o[j] * c_new[j].tanh()).collect();
    (h_new, c_new)
}

/// Forward direction over the first `len` steps; positions past `len` repeat the last state.
/// Backward direction from step `len - 1` down to 0; positions past `len` hold the zero state.
fn bi_gru(xs: &[Vec<f64>], len: usize, fwd: &GruWeights<f64>, bwd: &GruWeights<f64>) -> Vec<Vec<f64>> {
    let n = fwd.b_z.len();
    let t_max = xs.len();
    let mut f_out = vec![vec![0.0; n]; t_max];
    let mut h = vec![0.0; n];
    for t in 0..t_max {
        if t < len {
            h = gru_step(&xs[t], &h, fwd);
        }
        f_out[t] = h.clone();
    }
    let mut b_out = vec![vec![0.0; n]; t_max];
    let mut h = vec![0.0; n];
    for t in (0..len).rev() {
        h = gru_step(&xs[t], &h, bwd);
        b_out[t] = h.clone();
    }
    f_out.into_iter().zip(b_out).map(|(a, b)| [a, b].concat()).collect()
}

fn bi_lstm(xs: &[Vec<f64>], len: usize, fwd: &LstmWeights<f64>, bwd: &LstmWeights<f64>) -> Vec<Vec<f64>> {
    let n = fwd.b_i.len();
    let t_max = xs.len();
    let mut f_out = vec![vec![0.0; n]; t_max];
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    for t in 0..t_max {
        if t < len {
            (h, c) = lstm_step(&xs[t], &h, &c, fwd);
        }
        f_out[t] = h.clone();
    }
    let mut b_out = vec![vec![0.0; n]; t_max];
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    for t in (0..len).rev() {
        (h, c) = lstm_step(&xs[t], &h, &c, bwd);
        b_out[t] = h.clone();
    }
    f_out.into_iter().zip(b_out).map(|(a, b)| [a, b].concat()).collect()
}

/// `max_t relu(b_f + sum_{k,c} x[t+k][c] * W[f][k][c])` per filter.
fn conv_max(xs: &[Vec<f64>], filters: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
    let (nf, k, ch) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    let w = filters.data();
    (0..nf)
        .map(|f| {
            let mut best = f64::NEG_INFINITY;
            for t in 0..=xs.len() - k {
                let mut s = bias.data()[f];
                for kk in 0..k {
                    for c in 0..ch {
                        s += xs[t + kk][c] * w[(f * k + kk) * ch + c];
                    }
                }
                best = best.max(s.max(0.0));
            }
            best
        })
        .collect()
}

pub fn forward(seq: &EncodedSequence, p: &ModelParams<f64>, config: &ModelConfig) -> Vec<f64> {
    let d = config.embed_dim;
    let emb = p.embedding.data();
    let xs: Vec<Vec<f64>> = seq
        .indices
        .iter()
        .map(|&i| emb[i as usize * d..(i as usize + 1) * d].to_vec())
        .collect();
    let gru = bi_gru(&xs, seq.true_length, &p.gru_fwd, &p.gru_bwd);
    let lstm = bi_lstm(&gru, seq.true_length, &p.lstm_fwd, &p.lstm_bwd);
    let features: Vec<f64> = p
        .convs
        .iter()
        .flat_map(|c| conv_max(&lstm, &c.filters, &c.bias))
        .collect();
    let l = config.num_labels;
    let w = p.dense_w.data();
    (0..l)
        .map(|j| {
            let mut s = p.dense_b.data()[j];
            for (i, fi) in features.iter().enumerate() {
                s += fi * w[i * l + j];
            }
            sig(s)
        })
        .collect()
}
