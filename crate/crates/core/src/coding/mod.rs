//! Channel coding: LDPC codes, QPSK, the soft-in soft-out decoder used by
//! the iterative receiver, and Monte Carlo transfer tables of that decoder.

pub mod ldpc;
pub mod modulation;
pub mod transfer;

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use ldpc::{LdpcCode, ParityCheck};
pub use modulation::Constellation;
pub use transfer::{estimate_transfer, TransferOptions, TransferTable};

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("malformed ALIST data: {0}")]
    Alist(String),
    #[error("no grid point resolves BER {target:e}; extend the SINR grid or add frames")]
    InsufficientSamples { target: f64 },
    #[error("value {value:e} is outside the table range [{lo:e}, {hi:e}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid transfer-table request: {0}")]
    InvalidRequest(String),
    #[error("malformed transfer table at line {line}: {msg}")]
    TableParse { line: usize, msg: String },
}

/// Decoder iterations per receiver iteration.
pub const DEFAULT_BP_ITERS: usize = 30;

/// Lower clip for variances fed back to the detector.
pub const MIN_VARIANCE: f64 = 1e-8;

const DEFAULT_ALIST: &str = include_str!("../../data/ldpc_3_6_1024.alist");

/// Seed used to construct the shipped length-1024 code.
pub const DEFAULT_CODE_SEED: u64 = 2024;

/// The shipped regular (3,6) length-1024 code.
pub fn default_code() -> Arc<LdpcCode> {
    static CODE: OnceLock<Arc<LdpcCode>> = OnceLock::new();
    CODE.get_or_init(|| {
        let h = ParityCheck::from_alist(DEFAULT_ALIST).expect("shipped ALIST parses");
        Arc::new(LdpcCode::new(h).expect("shipped code is valid"))
    })
    .clone()
}

/// Code, constellation and bit interleaver of one user.
#[derive(Debug, Clone)]
pub struct Codec {
    code: Arc<LdpcCode>,
    constellation: Constellation,
    /// Interleaved bit `i` is codeword bit `perm[i]`.
    perm: Vec<usize>,
}

/// One transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub message: Vec<u8>,
    pub codeword: Vec<u8>,
    pub symbols: Vec<Complex64>,
}

/// Soft output of [`Codec::app_decode`].
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// Posterior LLRs in transmission (interleaved) order.
    pub posterior_llr: Vec<f64>,
    /// Posterior symbol means.
    pub mean: Vec<Complex64>,
    /// Frame-average posterior symbol variance.
    pub variance: f64,
    /// Hard decisions on the message bits.
    pub message: Vec<u8>,
}

impl Codec {
    pub fn new(code: Arc<LdpcCode>, constellation: Constellation, interleaver_seed: u64) -> Result<Self, CodingError> {
        if code.n() % constellation.q() != 0 {
            return Err(CodingError::InvalidCode(format!(
                "code length {} is not a multiple of {} bits per symbol",
                code.n(),
                constellation.q()
            )));
        }
        let mut perm: Vec<usize> = (0..code.n()).collect();
        perm.shuffle(&mut ChaCha20Rng::seed_from_u64(interleaver_seed));
        Ok(Codec { code, constellation, perm })
    }

    pub fn code(&self) -> &LdpcCode {
        &self.code
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.code.n() / self.constellation.q()
    }

    pub fn random_message<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        (0..self.code.k()).map(|_| rng.random_range(0..2u8)).collect()
    }

    /// Encode, interleave and modulate.
    pub fn encode_frame(&self, message: &[u8]) -> Result<Frame, CodingError> {
        let codeword = self.code.encode(message)?;
        let bits: Vec<u8> = self.perm.iter().map(|&p| codeword[p]).collect();
        let symbols = self.constellation.modulate(&bits)?;
        Ok(Frame { message: message.to_vec(), codeword, symbols })
    }

    /// Demodulate observations `obs = x + CN(0, noise_var)`, deinterleave,
    /// decode, and return posterior symbol statistics.
    pub fn app_decode(&self, obs: &[Complex64], noise_var: f64, bp_iters: usize) -> Result<DecodeOutput, CodingError> {
        if obs.len() != self.symbols_per_frame() {
            return Err(CodingError::LengthMismatch { expected: self.symbols_per_frame(), got: obs.len() });
        }
        let llr_tx = self.constellation.demap(obs, noise_var.max(1e-300));
        let mut llr_code = vec![0.0; self.code.n()];
        for (i, &p) in self.perm.iter().enumerate() {
            llr_code[p] = llr_tx[i];
        }
        let post_code = self.code.decode(&llr_code, bp_iters);
        let posterior_llr: Vec<f64> = self.perm.iter().map(|&p| post_code[p]).collect();
        let (mean, variance) = self.constellation.posterior_moments(&posterior_llr);
        let message = self
            .code
            .info_positions()
            .iter()
            .map(|&p| u8::from(post_code[p] < 0.0))
            .collect();
        Ok(DecodeOutput { posterior_llr, mean, variance, message })
    }
}

/// Gaussian extrinsic update `v = (1/v̄ - 1/v_in)^{-1}`,
/// `x = v (x̄/v̄ - x_in/v_in)`.
///
/// When the precision difference is at most 1 (no information beyond the
/// unit-energy prior) the output is the prior `(0, 1)`; otherwise the
/// variance is clipped to `[MIN_VARIANCE, 1]`.
pub fn extrinsic_update(
    post_mean: &[Complex64],
    post_var: f64,
    in_mean: &[Complex64],
    in_var: f64,
) -> (Vec<Complex64>, f64) {
    let d = 1.0 / post_var.max(1e-300) - 1.0 / in_var;
    if !(d > 1.0) {
        return (vec![Complex64::new(0.0, 0.0); post_mean.len()], 1.0);
    }
    let v = (1.0 / d).clamp(MIN_VARIANCE, 1.0);
    let mean = post_mean
        .iter()
        .zip(in_mean)
        .map(|(p, x)| (p / post_var.max(1e-300) - x / in_var) / d)
        .collect();
    (mean, v)
}
