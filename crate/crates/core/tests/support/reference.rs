//! Straight-line reference implementation of the network forward pass:
//! direct-summation convolutions, `O(H²)` DFT, no shared code with the crate's
//! numerical kernels. Used as an oracle by the network and acceptance tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use phasemotion::pae::{Conv1d, ModelConfig, ModelParams};
use phasemotion::Matrix;

pub struct RefLatent {
    pub phi: Vec<f64>,
    pub f: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn conv(c: &Conv1d<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = x[0].len() as isize;
    let r = (c.kernel / 2) as isize;
    (0..c.out_ch)
        .map(|o| {
            (0..h)
                .map(|t| {
                    let mut acc = c.bias[o];
                    for (i, xi) in x.iter().enumerate() {
                        for m in 0..c.kernel as isize {
                            let s = t + m - r;
                            if s >= 0 && s < h {
                                acc += c.weight[(o * c.in_ch + i) * c.kernel + m as usize]
                                    * xi[s as usize];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn elu(v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    v.into_iter()
        .map(|r| {
            r.into_iter()
                .map(|x| if x > 0.0 { x } else { x.exp() - 1.0 })
                .collect()
        })
        .collect()
}

fn rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn wrap(x: f64) -> f64 {
    let w = x - (x + 0.5).floor();
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

pub fn encode(p: &ModelParams<f64>, cfg: &ModelConfig, x: &Matrix<f64>) -> RefLatent {
    let curves = conv(&p.enc_conv2, &elu(conv(&p.enc_conv1, &rows(x))));
    let h = cfg.window;
    let mut out = RefLatent {
        phi: vec![],
        f: vec![],
        a: vec![],
        b: vec![],
    };
    for (ch, l) in curves.iter().enumerate() {
        let coeff = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in l.iter().enumerate() {
                let ang = -2.0 * PI * ((k * j) % h) as f64 / h as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        };
        let (mut pw, mut fw) = (0.0, 0.0);
        for k in 1..=h / 2 {
            let (re, im) = coeff(k);
            let pk = re * re + im * im;
            pw += pk;
            fw += k as f64 / (h as f64 * cfg.dt) * pk;
        }
        out.f.push(if pw < 1e-12 { 0.0 } else { fw / pw });
        out.a.push(2.0 * pw.sqrt() / h as f64);
        out.b.push(coeff(0).0 / h as f64);
        let head = |comp: usize| {
            let w = &p.phase_heads.weight[(ch * 2 + comp) * h..(ch * 2 + comp + 1) * h];
            w.iter().zip(l).map(|(a, b)| a * b).sum::<f64>() + p.phase_heads.bias[ch * 2 + comp]
        };
        let (sx, sy) = (head(0), head(1));
        out.phi.push(if sx == 0.0 && sy == 0.0 {
            0.0
        } else {
            wrap(sy.atan2(sx) / (2.0 * PI))
        });
    }
    out
}

/// Decodes with the phase advanced by `steps` frames.
pub fn decode(
    p: &ModelParams<f64>,
    cfg: &ModelConfig,
    z: &RefLatent,
    steps: usize,
) -> Vec<Vec<f64>> {
    let h = cfg.window;
    let curves: Vec<Vec<f64>> = (0..z.phi.len())
        .map(|ch| {
            let phase = wrap(z.phi[ch] + steps as f64 * z.f[ch] * cfg.dt);
            (0..h)
                .map(|j| {
                    let tau = (j as f64 - (h / 2) as f64) * cfg.dt;
                    z.a[ch] * (2.0 * PI * (z.f[ch] * tau + phase)).sin() + z.b[ch]
                })
                .collect()
        })
        .collect();
    conv(&p.dec_conv2, &elu(conv(&p.dec_conv1, &curves)))
}

/// `Σ_{i=0}^{N} MSE(decode(φ + i·f·dt), s_{t+i})` for one context.
pub fn loss(p: &ModelParams<f64>, cfg: &ModelConfig, context: &Matrix<f64>) -> f64 {
    let h = cfg.window;
    let z = encode(p, cfg, &context.columns(0, h));
    let mut total = 0.0;
    for i in 0..=cfg.pred_steps {
        let y = decode(p, cfg, &z, i);
        let mut sq = 0.0;
        for (r, row) in y.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                sq += (v - context.get(r, i + j)).powi(2);
            }
        }
        total += sq / (cfg.d * h) as f64;
    }
    total
}
