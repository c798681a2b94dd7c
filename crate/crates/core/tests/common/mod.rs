//! Shared fixtures and independent reference computations for the
//! integration tests. Nothing here calls the solvers under test; the
//! references use plain dense algebra (`nalgebra` inverses) instead.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use ris_iterative::channel::{assemble_effective, generate_channels, ChannelConfig, EffectiveChannel, Geometry};
use ris_iterative::convex::linalg::{CMatrix, CVector};
use ris_iterative::info::RateSpec;
use ris_iterative::transceiver::PrecoderSet;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// One `CN(0, 1)` sample.
pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn_vector<R: Rng>(rng: &mut R, m: usize, scale: f64) -> CVector {
    CVector::from_fn(m, |_, _| cn(rng) * scale)
}

/// Random columns `a[k][j]` of length `m`.
pub fn random_columns<R: Rng>(rng: &mut R, k: usize, j: usize, m: usize, scale: f64) -> Vec<Vec<CVector>> {
    (0..k).map(|_| (0..j).map(|_| cn_vector(rng, m, scale)).collect()).collect()
}

/// Synthetic effective channel with i.i.d. Gaussian direct and cascade terms.
pub fn synthetic_channel<R: Rng>(
    rng: &mut R,
    k: usize,
    m: usize,
    n: usize,
    jp: usize,
    direct_scale: f64,
    cascade_scale: f64,
    noise_power: f64,
) -> EffectiveChannel {
    EffectiveChannel {
        m,
        n,
        noise_power,
        direct: (0..k).map(|_| (0..jp).map(|_| cn_vector(rng, m, direct_scale)).collect()).collect(),
        cascade: (0..k)
            .map(|_| (0..jp).map(|_| CMatrix::from_fn(m, n, |_, _| cn(rng) * cascade_scale)).collect())
            .collect(),
    }
}

/// Design-subcarrier channel of a drawn scenario with default large-scale
/// parameters.
pub fn scenario_channel(k: usize, m: usize, n: usize, j: usize, jp: usize, seed: u64) -> EffectiveChannel {
    let mut r = rng(seed);
    let geo = Geometry::random_users(k, &mut r);
    let cfg = ChannelConfig::with_sizes(m, n, j);
    let set = generate_channels(&geo, &cfg, seed.wrapping_add(1)).expect("channel draw");
    assemble_effective(&set, jp).expect("assemble")
}

pub fn unit_phases<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))).collect()
}

pub fn random_precoders<R: Rng>(rng: &mut R, k: usize, jp: usize, scale: f64) -> PrecoderSet {
    PrecoderSet::new((0..k).map(|_| (0..jp).map(|_| cn(rng) * scale).collect()).collect()).unwrap()
}

/// Columns `(d + Cθ) w` computed entry by entry.
pub fn columns_reference(ch: &EffectiveChannel, theta: &[Complex64], w: &PrecoderSet) -> Vec<Vec<CVector>> {
    (0..ch.k())
        .map(|k| {
            (0..ch.subcarriers())
                .map(|j| {
                    CVector::from_fn(ch.m, |row, _| {
                        let mut g = ch.direct[k][j][row];
                        for (e, t) in theta.iter().enumerate() {
                            g += ch.cascade[k][j][(row, e)] * t;
                        }
                        g * w.w[k][j]
                    })
                })
                .collect()
        })
        .collect()
}

/// `τ_k = (1/J) Σ_j a^H (Σ_k' w_k' a a^H + σ² I)^{-1} a` with a general inverse.
pub fn tau_reference(columns: &[Vec<CVector>], noise: f64, weights: &[f64]) -> Vec<f64> {
    let j = columns[0].len();
    let m = columns[0][0].len();
    let mut tau = vec![0.0; columns.len()];
    for jj in 0..j {
        let mut v = CMatrix::identity(m, m) * Complex64::new(noise, 0.0);
        for (c, &w) in columns.iter().zip(weights) {
            v += &c[jj] * c[jj].adjoint() * Complex64::new(w, 0.0);
        }
        let inv = v.try_inverse().expect("invertible covariance");
        for (t, c) in tau.iter_mut().zip(columns) {
            *t += c[jj].dotc(&(&inv * &c[jj])).re / j as f64;
        }
    }
    tau
}

pub fn sinr_reference(tau: f64, v: f64) -> f64 {
    tau / (1.0 - v * tau)
}

/// Extrinsic output of the dense LMMSE oracle for one user.
pub struct DenseExtrinsic {
    pub mean: Vec<Complex64>,
    pub rho: f64,
    pub v_post: f64,
    /// Largest spread of the per-entry posterior variance around its mean.
    pub v_post_spread: f64,
}

/// `x_post = x_pri + D A^H (A D A^H + σ² I)^{-1} (r - A x_pri)` on the
/// stacked time-domain unknowns of each OFDM block, with `A` built from the
/// explicit unitary DFT matrix, followed by the Gaussian extrinsic division.
pub fn dense_lmmse(
    received: &[Vec<CVector>],
    columns: &[Vec<CVector>],
    noise: f64,
    x_pri: &[Vec<Complex64>],
    v: &[f64],
) -> Vec<DenseExtrinsic> {
    let k = columns.len();
    let j = columns[0].len();
    let m = columns[0][0].len();
    let blocks = received.len();
    let f = DMatrix::from_fn(j, j, |a, b| {
        Complex64::from_polar(1.0 / (j as f64).sqrt(), -std::f64::consts::TAU * (a * b) as f64 / j as f64)
    });
    let mut a = CMatrix::zeros(j * m, k * j);
    for kk in 0..k {
        for jj in 0..j {
            for row in 0..m {
                for n in 0..j {
                    a[(jj * m + row, kk * j + n)] = columns[kk][jj][row] * f[(jj, n)];
                }
            }
        }
    }
    let d = DMatrix::from_fn(k * j, k * j, |r, c| if r == c { Complex64::new(v[r / j], 0.0) } else { Complex64::new(0.0, 0.0) });
    let c = &a * &d * a.adjoint() + CMatrix::identity(j * m, j * m) * Complex64::new(noise, 0.0);
    let c_inv = c.try_inverse().expect("invertible");
    let gain = &d * a.adjoint() * &c_inv;
    let post_cov = &d - &gain * &a * &d;
    let mut out: Vec<DenseExtrinsic> = (0..k)
        .map(|kk| {
            let diag: Vec<f64> = (0..j).map(|n| post_cov[(kk * j + n, kk * j + n)].re).collect();
            let mean_v = diag.iter().sum::<f64>() / j as f64;
            let spread = diag.iter().map(|x| (x - mean_v).abs()).fold(0.0, f64::max);
            DenseExtrinsic { mean: Vec::new(), rho: 1.0 / mean_v - 1.0 / v[kk], v_post: mean_v, v_post_spread: spread }
        })
        .collect();
    for b in 0..blocks {
        let r = DVector::from_iterator(j * m, (0..j).flat_map(|jj| received[b][jj].iter().copied().collect::<Vec<_>>()));
        let x0 = DVector::from_iterator(k * j, (0..k).flat_map(|kk| x_pri[kk][b * j..(b + 1) * j].to_vec()));
        let x_post = &x0 + &gain * (r - &a * &x0);
        for (kk, o) in out.iter_mut().enumerate() {
            for n in 0..j {
                let vp = post_cov[(kk * j + n, kk * j + n)].re;
                let v_ext = 1.0 / (1.0 / vp - 1.0 / v[kk]);
                o.mean.push((x_post[kk * j + n] / vp - x0[kk * j + n] / v[kk]) * v_ext);
            }
        }
    }
    out
}

/// Relative difference `|a - b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// `min_u (C_u(t) - floor_u) / (|u| · bits)` with `C_u(t) = Σ_j log2 det(I
/// + Σ_{k∈u} (b + t e)(b + t e)^H + (1 - |t|²) e e^H)`, built from scratch.
pub fn margin_reference(ch: &EffectiveChannel, theta: &[Complex64], w: &PrecoderSet, spec: &RateSpec, n: usize, t: Complex64) -> f64 {
    let s = 1.0 / ch.noise_power.sqrt();
    let m = ch.m;
    (1u32..(1 << ch.k()))
        .map(|mask| (0..ch.k()).filter(|&k| mask & (1 << k) != 0).collect::<Vec<_>>())
        .map(|u| {
            let mut cap = 0.0;
            for j in 0..ch.subcarriers() {
                let mut a = CMatrix::identity(m, m);
                for &k in &u {
                    let mut b = ch.direct[k][j].clone();
                    for (e, th) in theta.iter().enumerate() {
                        if e != n {
                            b += ch.cascade[k][j].column(e) * *th;
                        }
                    }
                    let b = b * (w.w[k][j] * s);
                    let e = ch.cascade[k][j].column(n) * (w.w[k][j] * s);
                    let bt = &b + &e * t;
                    a += &bt * bt.adjoint() + &e * e.adjoint() * Complex64::new(1.0 - t.norm_sqr(), 0.0);
                }
                let det = a.determinant();
                cap += det.re.log2();
            }
            (cap - spec.floor(&u)) / (u.len() as f64 * spec.bits_per_rate())
        })
        .fold(f64::INFINITY, f64::min)
}
