//! Precoded OFDM transmitter and the iterative LMMSE/decoder receiver.
//!
//! A frame of `S` QPSK symbols per user is carried by `S/J` OFDM blocks.
//! Block `b` of user `k` is mapped to the frequency domain with a unitary
//! DFT, `X_k = F x_k`, and subcarrier `j` receives
//! `r(j) = Σ_k h_k(j) X_k(j) + η(j)` with `h_k(j) = g_k(j; θ) w_k(j)`.
//! Every operation works subcarrier by subcarrier on `M × M` matrices.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{watts_to_dbm, EffectiveChannel};
use crate::coding::{extrinsic_update, Codec, CodingError, MIN_VARIANCE};
use crate::convex::linalg::{hermitian_cholesky, CMatrix, CVector};

#[derive(Debug, Error)]
pub enum TransceiverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("LMMSE covariance is singular on subcarrier {0}")]
    SingularV(usize),
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// Largest extrinsic SINR reported when `1 - vτ` vanishes numerically.
pub const RHO_CAP: f64 = 1e14;

/// Per-user precoder diagonals on the `J'` design subcarriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSet {
    /// `w[k][j']`
    pub w: Vec<Vec<Complex64>>,
}

impl PrecoderSet {
    pub fn new(w: Vec<Vec<Complex64>>) -> Result<Self, TransceiverError> {
        let jp = w.first().map_or(0, Vec::len);
        if w.iter().any(|wk| wk.len() != jp) {
            return Err(TransceiverError::DimensionMismatch("ragged precoder set".into()));
        }
        if w.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TransceiverError::DimensionMismatch("non-finite precoder entry".into()));
        }
        Ok(PrecoderSet { w })
    }

    /// Every entry equal to `amplitude`.
    pub fn uniform(k: usize, j_prime: usize, amplitude: f64) -> Self {
        PrecoderSet { w: vec![vec![Complex64::new(amplitude, 0.0); j_prime]; k] }
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn j_prime(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn total_power(&self) -> f64 {
        self.w.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Average power per user and subcarrier, `(1/(J'K)) Σ |w|²`.
    pub fn average_power(&self) -> f64 {
        self.total_power() / (self.k() * self.j_prime()).max(1) as f64
    }

    pub fn average_power_dbm(&self) -> f64 {
        watts_to_dbm(self.average_power())
    }

    pub fn scaled(&self, s: f64) -> Self {
        PrecoderSet { w: self.w.iter().map(|wk| wk.iter().map(|z| z * s).collect()).collect() }
    }

    /// Replicates each entry over its block of `J/J'` consecutive subcarriers.
    pub fn expand(&self, j: usize) -> Result<Vec<Vec<Complex64>>, TransceiverError> {
        let jp = self.j_prime();
        if jp == 0 || j % jp != 0 {
            return Err(TransceiverError::DimensionMismatch(format!("J' = {jp} does not divide J = {j}")));
        }
        let step = j / jp;
        Ok(self.w.iter().map(|wk| (0..j).map(|i| wk[i / step]).collect()).collect())
    }
}

/// Effective per-subcarrier columns `h_k(j) = g_k(j; θ) w_k(j)` on the
/// subcarriers of `channel`.
pub fn effective_columns(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
) -> Result<Vec<Vec<CVector>>, TransceiverError> {
    if theta.len() != channel.n {
        return Err(TransceiverError::DimensionMismatch(format!(
            "{} phases for {} elements",
            theta.len(),
            channel.n
        )));
    }
    if precoders.k() != channel.k() {
        return Err(TransceiverError::DimensionMismatch(format!(
            "{} precoders for {} users",
            precoders.k(),
            channel.k()
        )));
    }
    let w = precoders.expand(channel.subcarriers())?;
    let g = channel.compose(theta);
    Ok(g.iter().zip(&w).map(|(gk, wk)| gk.iter().zip(wk).map(|(v, s)| v * *s).collect()).collect())
}

/// `τ_k = (1/J) Σ_j h_k(j)^H V(j)^{-1} h_k(j)` with
/// `V(j) = Σ_k' weights[k'] h_k'(j) h_k'(j)^H + σ² I`.
pub fn lmmse_tau(columns: &[Vec<CVector>], noise_var: f64, weights: &[f64]) -> Result<Vec<f64>, TransceiverError> {
    let (k, j, m) = shape(columns)?;
    if weights.len() != k {
        return Err(TransceiverError::DimensionMismatch(format!("{} weights for {} users", weights.len(), k)));
    }
    let mut tau = vec![0.0; k];
    for jj in 0..j {
        let (_, quad) = subcarrier_filter(columns, noise_var, weights, jj, m)?;
        for (t, q) in tau.iter_mut().zip(quad) {
            *t += q / j as f64;
        }
    }
    Ok(tau)
}

fn shape(columns: &[Vec<CVector>]) -> Result<(usize, usize, usize), TransceiverError> {
    let k = columns.len();
    let j = columns.first().map_or(0, Vec::len);
    let m = columns.first().and_then(|c| c.first()).map_or(0, |v| v.len());
    if k == 0 || j == 0 || m == 0 || columns.iter().any(|c| c.len() != j || c.iter().any(|v| v.len() != m)) {
        return Err(TransceiverError::DimensionMismatch("empty or ragged channel columns".into()));
    }
    Ok((k, j, m))
}

/// `V(j)^{-1} h_k(j)` for every user and the quadratic forms `h^H V^{-1} h`.
fn subcarrier_filter(
    columns: &[Vec<CVector>],
    noise_var: f64,
    weights: &[f64],
    j: usize,
    m: usize,
) -> Result<(Vec<CVector>, Vec<f64>), TransceiverError> {
    let mut v = CMatrix::identity(m, m) * Complex64::new(noise_var, 0.0);
    for (ck, &wt) in columns.iter().zip(weights) {
        if wt != 0.0 {
            let h = &ck[j];
            v += h * h.adjoint() * Complex64::new(wt, 0.0);
        }
    }
    let chol = hermitian_cholesky(&v).map_err(|_| TransceiverError::SingularV(j))?;
    let mut filters = Vec::with_capacity(columns.len());
    let mut quad = Vec::with_capacity(columns.len());
    for ck in columns {
        let h = CMatrix::from_column_slice(m, 1, ck[j].as_slice());
        let u = CVector::from_column_slice(chol.solve(&h).as_slice());
        quad.push(ck[j].dotc(&u).re.max(0.0));
        filters.push(u);
    }
    Ok((filters, quad))
}

/// Extrinsic SINR `ρ = τ/(1 - vτ)`, capped at [`RHO_CAP`].
pub fn extrinsic_sinr(tau: f64, v: f64) -> f64 {
    let den = 1.0 - v * tau;
    if den <= 1e-14 {
        RHO_CAP
    } else {
        (tau / den).min(RHO_CAP)
    }
}

/// Unitary DFT of length `J` applied block by block.
#[derive(Clone)]
pub struct Ofdm {
    j: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Ofdm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ofdm").field("j", &self.j).finish()
    }
}

impl Ofdm {
    pub fn new(j: usize) -> Self {
        let mut p = FftPlanner::new();
        Ofdm { j, fwd: p.plan_fft_forward(j), inv: p.plan_fft_inverse(j) }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    /// `X = F x` on every length-`J` block of `x`.
    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.apply(&self.fwd, x)
    }

    /// `x = F^H X` on every length-`J` block of `X`.
    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.apply(&self.inv, x)
    }

    fn apply(&self, fft: &Arc<dyn Fft<f64>>, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        fft.process(&mut buf);
        let s = 1.0 / (self.j as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }
}

/// Received samples `r[b][j]` for OFDM block `b` and subcarrier `j`.
pub type Received = Vec<Vec<CVector>>;

fn check_frame(ofdm: &Ofdm, columns: &[Vec<CVector>], symbols: &[Vec<Complex64>]) -> Result<usize, TransceiverError> {
    let (k, j, _) = shape(columns)?;
    if j != ofdm.j() {
        return Err(TransceiverError::DimensionMismatch(format!("{j} subcarriers for a {}-point DFT", ofdm.j())));
    }
    if symbols.len() != k {
        return Err(TransceiverError::DimensionMismatch(format!("{} streams for {k} users", symbols.len())));
    }
    let s = symbols[0].len();
    if s == 0 || s % j != 0 || symbols.iter().any(|x| x.len() != s) {
        return Err(TransceiverError::DimensionMismatch(format!("frame length {s} is not a multiple of J = {j}")));
    }
    Ok(s / j)
}

/// Noiseless superposition `Σ_k h_k(j) X_k(j)` followed by additive
/// `CN(0, noise_var I)` noise drawn from `rng`.
pub fn transmit<R: Rng>(
    ofdm: &Ofdm,
    columns: &[Vec<CVector>],
    symbols: &[Vec<Complex64>],
    noise_var: f64,
    rng: &mut R,
) -> Result<Received, TransceiverError> {
    let blocks = check_frame(ofdm, columns, symbols)?;
    let j = ofdm.j();
    let m = columns[0][0].len();
    let freq: Vec<Vec<Complex64>> = symbols.iter().map(|x| ofdm.forward(x)).collect();
    let s = (noise_var / 2.0).sqrt();
    let mut out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let mut block = Vec::with_capacity(j);
        for jj in 0..j {
            let mut r = CVector::from_fn(m, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(s * re, s * im)
            });
            for (ck, xk) in columns.iter().zip(&freq) {
                r.axpy(xk[b * j + jj], &ck[jj], Complex64::new(1.0, 0.0));
            }
            block.push(r);
        }
        out.push(block);
    }
    Ok(out)
}

/// Extrinsic message of the LMMSE estimator for one user.
#[derive(Debug, Clone)]
pub struct Extrinsic {
    pub mean: Vec<Complex64>,
    /// Extrinsic SINR `ρ = 1/v_ext`.
    pub rho: f64,
    /// `τ = (1/J) Σ_j h^H V^{-1} h`.
    pub tau: f64,
    /// Frame-average posterior variance `v(1 - vτ)`.
    pub v_post: f64,
}

/// LMMSE estimation with priors `(x_pri[k], v[k])` and the Gaussian
/// extrinsic subtraction: `ρ_k = τ_k/(1 - v_k τ_k)` and
/// `x_ext = x_pri + F^H z/τ` with `z(j) = h^H V^{-1} (r - Σ_k' h_k' X_pri,k')`.
pub fn lmmse_ese(
    ofdm: &Ofdm,
    received: &Received,
    columns: &[Vec<CVector>],
    noise_var: f64,
    x_pri: &[Vec<Complex64>],
    v: &[f64],
) -> Result<Vec<Extrinsic>, TransceiverError> {
    let blocks = check_frame(ofdm, columns, x_pri)?;
    let (k, j, m) = shape(columns)?;
    if received.len() != blocks || received.iter().any(|b| b.len() != j) {
        return Err(TransceiverError::DimensionMismatch("received frame shape".into()));
    }
    if v.len() != k {
        return Err(TransceiverError::DimensionMismatch(format!("{} variances for {k} users", v.len())));
    }
    let pri_freq: Vec<Vec<Complex64>> = x_pri.iter().map(|x| ofdm.forward(x)).collect();
    let mut tau = vec![0.0; k];
    let mut z = vec![vec![Complex64::new(0.0, 0.0); blocks * j]; k];
    for jj in 0..j {
        let (filters, quad) = subcarrier_filter(columns, noise_var, v, jj, m)?;
        for (t, q) in tau.iter_mut().zip(&quad) {
            *t += q / j as f64;
        }
        for b in 0..blocks {
            let mut e = received[b][jj].clone();
            for (ck, xk) in columns.iter().zip(&pri_freq) {
                e.axpy(-xk[b * j + jj], &ck[jj], Complex64::new(1.0, 0.0));
            }
            for (zk, u) in z.iter_mut().zip(&filters) {
                zk[b * j + jj] = u.dotc(&e);
            }
        }
    }
    Ok((0..k)
        .map(|kk| {
            let rho = extrinsic_sinr(tau[kk], v[kk]);
            let mean = if tau[kk] > 0.0 {
                let zt = ofdm.inverse(&z[kk]);
                x_pri[kk].iter().zip(zt).map(|(p, d)| p + d / tau[kk]).collect()
            } else {
                vec![Complex64::new(0.0, 0.0); x_pri[kk].len()]
            };
            Extrinsic { mean, rho, tau: tau[kk], v_post: v[kk] * (1.0 - v[kk] * tau[kk]).max(0.0) }
        })
        .collect())
}

/// Per-iteration record of one receiver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceiverTrace {
    /// `rho[t][k]`: extrinsic SINR of the estimator at iteration `t`.
    pub rho: Vec<Vec<f64>>,
    /// `v[t][k]`: extrinsic decoder variance fed back after iteration `t`.
    pub v: Vec<Vec<f64>>,
    /// `ext_err[t][k]`: empirical `mean |x_ext - x|²` at iteration `t`.
    pub ext_err: Vec<Vec<f64>>,
}

/// Outcome of [`run_receiver`] on one frame.
#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    pub messages: Vec<Vec<u8>>,
    pub trace: ReceiverTrace,
}

/// `t_max` rounds of LMMSE estimation and soft decoding. `reference`
/// (the transmitted symbols) is only used to record extrinsic errors.
#[allow(clippy::too_many_arguments)]
pub fn run_receiver(
    ofdm: &Ofdm,
    received: &Received,
    columns: &[Vec<CVector>],
    noise_var: f64,
    codecs: &[Codec],
    t_max: usize,
    bp_iters: usize,
    reference: Option<&[Vec<Complex64>]>,
) -> Result<ReceiverOutput, TransceiverError> {
    if t_max == 0 {
        return Err(TransceiverError::DimensionMismatch("at least one receiver iteration".into()));
    }
    let k = columns.len();
    if codecs.len() != k {
        return Err(TransceiverError::DimensionMismatch(format!("{} codecs for {k} users", codecs.len())));
    }
    let s = received.len() * ofdm.j();
    if codecs.iter().any(|c| c.symbols_per_frame() != s) {
        return Err(TransceiverError::DimensionMismatch(format!("codec frame length differs from {s} symbols")));
    }
    let mut x_pri = vec![vec![Complex64::new(0.0, 0.0); s]; k];
    let mut v = vec![1.0; k];
    let mut trace = ReceiverTrace::default();
    let mut messages = vec![Vec::new(); k];
    for _ in 0..t_max {
        let ext = lmmse_ese(ofdm, received, columns, noise_var, &x_pri, &v)?;
        let mut rho_t = Vec::with_capacity(k);
        let mut err_t = Vec::with_capacity(k);
        for (kk, e) in ext.iter().enumerate() {
            rho_t.push(e.rho);
            if let Some(x) = reference {
                let err = e.mean.iter().zip(&x[kk]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / s as f64;
                err_t.push(err);
            }
            let in_var = if e.rho > 0.0 { 1.0 / e.rho } else { 1e12 };
            let dec = codecs[kk].app_decode(&e.mean, in_var, bp_iters)?;
            let (mean, var) = extrinsic_update(&dec.mean, dec.variance, &e.mean, in_var.max(MIN_VARIANCE));
            x_pri[kk] = mean;
            v[kk] = var;
            messages[kk] = dec.message;
        }
        trace.rho.push(rho_t);
        trace.v.push(v.clone());
        if reference.is_some() {
            trace.ext_err.push(err_t);
        }
    }
    Ok(ReceiverOutput { messages, trace })
}

/// Monte Carlo options for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub frames: usize,
    pub t_max: usize,
    pub bp_iters: usize,
    pub seed: u64,
}

/// Aggregate Monte Carlo statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub frames: usize,
    pub bit_errors: Vec<u64>,
    pub bits: Vec<u64>,
    /// Frame-averaged `rho[t][k]`.
    pub rho_trace: Vec<Vec<f64>>,
    /// Frame-averaged decoder feedback variance `v[t][k]`.
    pub v_trace: Vec<Vec<f64>>,
    /// Frame-averaged empirical extrinsic error `ext_err[t][k]`.
    pub ext_err_trace: Vec<Vec<f64>>,
}

impl SimReport {
    pub fn ber(&self) -> Vec<f64> {
        self.bit_errors.iter().zip(&self.bits).map(|(&e, &b)| e as f64 / b.max(1) as f64).collect()
    }

    /// BER pooled over users.
    pub fn overall_ber(&self) -> f64 {
        self.bit_errors.iter().sum::<u64>() as f64 / self.bits.iter().sum::<u64>().max(1) as f64
    }
}

/// One codec per user with distinct interleavers.
pub fn user_codecs(code: Arc<crate::coding::LdpcCode>, k: usize) -> Result<Vec<Codec>, TransceiverError> {
    (0..k)
        .map(|u| Ok(Codec::new(code.clone(), crate::coding::Constellation::qpsk(), 1000 + u as u64)?))
        .collect()
}

/// Simulates `opts.frames` independent frames (parallel across frames) over
/// a fixed channel. `channel` must carry every subcarrier of the OFDM block.
pub fn simulate(
    channel: &EffectiveChannel,
    theta: &[Complex64],
    precoders: &PrecoderSet,
    codecs: &[Codec],
    opts: &SimOptions,
) -> Result<SimReport, TransceiverError> {
    let columns = effective_columns(channel, theta, precoders)?;
    let ofdm = Ofdm::new(channel.subcarriers());
    let k = columns.len();
    let results: Vec<(Vec<u64>, ReceiverTrace)> = (0..opts.frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ (f as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut msgs = Vec::with_capacity(k);
            let mut symbols = Vec::with_capacity(k);
            for c in codecs {
                let frame = c.encode_frame(&c.random_message(&mut rng))?;
                msgs.push(frame.message);
                symbols.push(frame.symbols);
            }
            let r = transmit(&ofdm, &columns, &symbols, channel.noise_power, &mut rng)?;
            let out = run_receiver(
                &ofdm,
                &r,
                &columns,
                channel.noise_power,
                codecs,
                opts.t_max,
                opts.bp_iters,
                Some(&symbols),
            )?;
            let errs = out
                .messages
                .iter()
                .zip(&msgs)
                .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
                .collect();
            Ok((errs, out.trace))
        })
        .collect::<Result<_, TransceiverError>>()?;
    let n = results.len().max(1) as f64;
    let avg = |sel: fn(&ReceiverTrace) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut acc = vec![vec![0.0; k]; opts.t_max];
        for (_, tr) in &results {
            for (a, row) in acc.iter_mut().zip(sel(tr)) {
                for (x, y) in a.iter_mut().zip(row) {
                    *x += y / n;
                }
            }
        }
        acc
    };
    Ok(SimReport {
        frames: opts.frames,
        bit_errors: (0..k).map(|u| results.iter().map(|(e, _)| e[u]).sum()).collect(),
        bits: codecs.iter().map(|c| (c.code().k() * opts.frames) as u64).collect(),
        rho_trace: avg(|t| &t.rho),
        v_trace: avg(|t| &t.v),
        ext_err_trace: avg(|t| &t.ext_err),
    })
}
