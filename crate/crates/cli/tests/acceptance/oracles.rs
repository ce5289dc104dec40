//! Independent scalar-loop references.

use anyhow::{ensure, Result};
use mocogan::backend::{adam_step, gru_cell, AdamConfig, AdamState, GruCell, Param, Tensor};
use mocogan::eval::{acd_from_embeddings, inception_score_from_probs};
use mocogan::latent::SeededRng;

pub const INSTANCES: usize = 100;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `m[r, c]` is stored row-major with `cols` columns.
fn matvec(m: &[f64], cols: usize, v: &[f64], r: usize) -> f64 {
    (0..cols).map(|c| m[r * cols + c] * v[c]).sum()
}

fn reference_gru(cell: &GruCell<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let (din, dh) = (x.len(), h.len());
    let d = |p: &Param<f64>| p.value.data().to_vec();
    let (w_r, w_u, w_h) = (d(&cell.w_r), d(&cell.w_u), d(&cell.w_h));
    let (u_r, u_u, u_h) = (d(&cell.u_r), d(&cell.u_u), d(&cell.u_h));
    let (b_r, b_u, b_h) = (d(&cell.b_r), d(&cell.b_u), d(&cell.b_h));
    let r: Vec<f64> = (0..dh).map(|i| sigmoid(matvec(&w_r, din, x, i) + matvec(&u_r, dh, h, i) + b_r[i])).collect();
    let u: Vec<f64> = (0..dh).map(|i| sigmoid(matvec(&w_u, din, x, i) + matvec(&u_u, dh, h, i) + b_u[i])).collect();
    let rh: Vec<f64> = (0..dh).map(|i| r[i] * h[i]).collect();
    (0..dh)
        .map(|i| {
            let cand = (matvec(&w_h, din, x, i) + matvec(&u_h, dh, &rh, i) + b_h[i]).tanh();
            (1.0 - u[i]) * h[i] + u[i] * cand
        })
        .collect()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst absolute deviation of `gru_cell` from the reference.
pub fn gru(rng: &mut SeededRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let din = 1 + rng.below(8);
        let dh = 1 + rng.below(8);
        let mut cell = GruCell::new(din, dh, "gru");
        for p in cell.params_mut() {
            for v in p.value.data_mut() {
                *v = rng.normal();
            }
        }
        let x: Vec<f64> = (0..din).map(|_| rng.normal()).collect();
        let h: Vec<f64> = (0..dh).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let got = gru_cell(&x, &h, &cell)?;
        ensure!(got.len() == dh, "gru_cell returned {} values for hidden size {dh}", got.len());
        worst = worst.max(max_abs(&got, &reference_gru(&cell, &x, &h)));
    }
    Ok(worst)
}

/// Worst absolute parameter deviation after several Adam steps.
pub fn adam(rng: &mut SeededRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let len = 1 + rng.below(16);
        let config = AdamConfig {
            lr: rng.uniform_range(1e-4, 1e-2),
            beta1: rng.uniform_range(0.0, 0.95),
            beta2: rng.uniform_range(0.9, 0.9999),
            eps: 1e-8,
        };
        let init: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let mut param = Param::new("p", Tensor::from_vec(&[len], init.clone())?);
        let mut state = AdamState::new(&[len], config);
        let (mut theta, mut m, mut v) = (init, vec![0.0; len], vec![0.0; len]);
        let steps = 1 + rng.below(12);
        for t in 1..=steps {
            let g: Vec<f64> = (0..len).map(|_| 0.1 * rng.normal()).collect();
            param.grad.data_mut().copy_from_slice(&g);
            adam_step(&mut param, &mut state)?;
            for i in 0..len {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - config.beta1.powi(t as i32));
                let v_hat = v[i] / (1.0 - config.beta2.powi(t as i32));
                theta[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
            }
        }
        worst = worst.max(max_abs(param.value.data(), &theta));
    }
    Ok(worst)
}

/// Worst absolute deviation of the inception score.
pub fn inception(rng: &mut SeededRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let n = 2 + rng.below(40);
        let c = 2 + rng.below(9);
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let e: Vec<f64> = (0..c).map(|_| (2.0 * rng.normal()).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| v / z).collect()
            })
            .collect();
        let mut marginal = vec![0.0; c];
        for row in &probs {
            for j in 0..c {
                marginal[j] += row[j] / n as f64;
            }
        }
        let mut kl_sum = 0.0;
        for row in &probs {
            for j in 0..c {
                kl_sum += row[j] * (row[j] / marginal[j]).ln();
            }
        }
        let expected = (kl_sum / n as f64).exp();
        worst = worst.max((inception_score_from_probs(&probs)? - expected).abs());
    }
    Ok(worst)
}

/// Worst absolute deviation of the per-clip average content distance.
pub fn acd(rng: &mut SeededRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let k = 2 + rng.below(20);
        let dim = 1 + rng.below(8);
        let e: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| 50.0 * rng.normal()).collect()).collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..k {
            for j in (i + 1)..k {
                let mut sq = 0.0;
                for d in 0..dim {
                    sq += (e[i][d] - e[j][d]).powi(2);
                }
                total += sq.sqrt();
                pairs += 1;
            }
        }
        worst = worst.max((acd_from_embeddings(&e)? - total / pairs as f64).abs());
    }
    Ok(worst)
}
