//! Monte Carlo transfer characteristics of the soft decoder.
//!
//! For an observation `x + CN(0, 1/ρ)` the table records
//!
//! * `ψ(ρ)`: the mean extrinsic variance the decoder feeds back to the
//!   detector (the Gaussian subtraction of [`extrinsic_update`]),
//! * the mean posterior variance `v̄`,
//! * the message-bit error rate `ξ(ψ(ρ))`.
//!
//! `ψ` and the BER are made non-increasing in `ρ` by isotonic regression and
//! interpolated linearly in dB and logarithmically in value.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{extrinsic_update, Codec, CodingError};
use num_complex::Complex64;

/// Decoder transfer map used by state evolution and the optimizers.
pub trait DecTransfer: Sync {
    /// Extrinsic variance returned for input SINR `rho` (linear).
    fn psi(&self, rho: f64) -> f64;
    /// Smallest SINR whose extrinsic variance is at most `v`.
    fn psi_inv(&self, v: f64) -> Result<f64, CodingError>;
}

#[derive(Debug, Clone)]
pub struct TransferOptions {
    pub rho_db: Vec<f64>,
    pub frames_per_point: usize,
    pub bp_iters: usize,
    pub seed: u64,
    /// When set, estimation fails unless some grid point resolves this BER.
    pub target_ber: Option<f64>,
}

impl TransferOptions {
    /// Grid dense around the waterfall of rate-1/2 codes with QPSK.
    pub fn default_grid() -> Vec<f64> {
        let mut g: Vec<f64> = (-10..-3).map(f64::from).collect();
        g.extend((0..=80).map(|i| -3.0 + 0.1 * i as f64));
        g.extend((1..=8).map(|i| 5.0 + 0.5 * i as f64));
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferTable {
    pub rho_db: Vec<f64>,
    /// Non-increasing extrinsic variance.
    pub psi: Vec<f64>,
    /// Mean posterior variance (not regressed).
    pub v_post: Vec<f64>,
    /// Non-increasing message-bit error rate.
    pub ber: Vec<f64>,
    pub bit_errors: Vec<u64>,
    pub bits: Vec<u64>,
    /// Free-form provenance line kept in the file header.
    pub note: String,
}

/// Pool-adjacent-violators fit of a non-increasing sequence.
pub fn isotonic_non_increasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("non-empty");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn undb(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Frame seed derived from the run seed, grid index and frame index.
fn frame_seed(seed: u64, point: usize, frame: usize) -> u64 {
    seed ^ (point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Monte Carlo estimate of the decoder transfer table.
pub fn estimate_transfer(codec: &Codec, opts: &TransferOptions) -> Result<TransferTable, CodingError> {
    if opts.rho_db.windows(2).any(|w| !(w[1] > w[0])) || opts.rho_db.is_empty() {
        return Err(CodingError::InvalidRequest("SINR grid must be strictly increasing".into()));
    }
    if opts.frames_per_point < 100 {
        return Err(CodingError::InvalidRequest("at least 100 frames per grid point".into()));
    }
    let mut psi = Vec::new();
    let mut v_post = Vec::new();
    let mut errs = Vec::new();
    let mut bits = Vec::new();
    for (p, &rdb) in opts.rho_db.iter().enumerate() {
        let rho = undb(rdb);
        let noise_var = 1.0 / rho;
        let per_frame: Vec<(f64, f64, u64)> = (0..opts.frames_per_point)
            .into_par_iter()
            .map(|f| {
                let mut rng = ChaCha20Rng::seed_from_u64(frame_seed(opts.seed, p, f));
                let msg = codec.random_message(&mut rng);
                let frame = codec.encode_frame(&msg)?;
                let s = (noise_var / 2.0).sqrt();
                let obs: Vec<Complex64> = frame
                    .symbols
                    .iter()
                    .map(|x| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        x + Complex64::new(s * re, s * im)
                    })
                    .collect();
                let out = codec.app_decode(&obs, noise_var, opts.bp_iters)?;
                let (_, v) = extrinsic_update(&out.mean, out.variance, &obs, noise_var);
                let e = out.message.iter().zip(&msg).filter(|(a, b)| a != b).count() as u64;
                Ok((v, out.variance, e))
            })
            .collect::<Result<_, CodingError>>()?;
        let n = per_frame.len() as f64;
        psi.push(per_frame.iter().map(|t| t.0).sum::<f64>() / n);
        v_post.push(per_frame.iter().map(|t| t.1).sum::<f64>() / n);
        errs.push(per_frame.iter().map(|t| t.2).sum::<u64>());
        bits.push((opts.frames_per_point * codec.code().k()) as u64);
    }
    let raw_ber: Vec<f64> = errs.iter().zip(&bits).map(|(&e, &b)| e as f64 / b as f64).collect();
    let table = TransferTable {
        rho_db: opts.rho_db.clone(),
        psi: isotonic_non_increasing(&psi),
        v_post,
        ber: isotonic_non_increasing(&raw_ber),
        bit_errors: errs,
        bits,
        note: format!(
            "n={} k={} bp_iters={} frames={} seed={}",
            codec.code().n(),
            codec.code().k(),
            opts.bp_iters,
            opts.frames_per_point,
            opts.seed
        ),
    };
    if let Some(target) = opts.target_ber {
        if !table.ber.iter().any(|&b| b > 0.0 && b <= target) {
            return Err(CodingError::InsufficientSamples { target });
        }
    }
    Ok(table)
}

const TABLE_HEADER: &str = "# ris-transfer-table v1";

impl TransferTable {
    /// Builds a table from columns; `psi` and `ber` are regressed to be non-increasing.
    pub fn from_columns(rho_db: Vec<f64>, psi: Vec<f64>, ber: Vec<f64>, bits: u64) -> Self {
        let n = rho_db.len();
        TransferTable {
            v_post: psi.clone(),
            psi: isotonic_non_increasing(&psi),
            bit_errors: ber.iter().map(|b| (b * bits as f64).round() as u64).collect(),
            ber: isotonic_non_increasing(&ber),
            bits: vec![bits; n],
            rho_db,
            note: String::new(),
        }
    }

    fn log_interp(x: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let t = (x - x0) / (x1 - x0);
        if y0 > 0.0 && y1 > 0.0 {
            (y0.ln() + t * (y1.ln() - y0.ln())).exp()
        } else {
            y0 + t * (y1 - y0)
        }
    }

    /// Inverse of [`Self::log_interp`] in `x` for a target `y` between `y0 >= y1`.
    fn log_interp_inv(y: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        if y0 == y1 {
            return x0;
        }
        let t = if y0 > 0.0 && y1 > 0.0 && y > 0.0 {
            (y.ln() - y0.ln()) / (y1.ln() - y0.ln())
        } else {
            (y - y0) / (y1 - y0)
        };
        x0 + t.clamp(0.0, 1.0) * (x1 - x0)
    }

    fn eval(&self, col: &[f64], rho: f64, at_zero: f64) -> f64 {
        if !(rho > 0.0) {
            return at_zero;
        }
        let x = db(rho);
        let n = self.rho_db.len();
        if x <= self.rho_db[0] {
            // Linear in ρ toward the anchor (ρ = 0, at_zero).
            let r0 = undb(self.rho_db[0]);
            return at_zero + (col[0] - at_zero) * (rho / r0);
        }
        if x >= self.rho_db[n - 1] {
            return col[n - 1];
        }
        let i = self.rho_db.partition_point(|&g| g <= x) - 1;
        Self::log_interp(x, self.rho_db[i], self.rho_db[i + 1], col[i], col[i + 1])
    }

    /// Smallest `ρ` with `col(ρ) <= y`, for a non-increasing column.
    fn invert(&self, col: &[f64], y: f64, at_zero: f64) -> Result<f64, CodingError> {
        let n = col.len();
        let lo = col[n - 1];
        if !(y >= lo) {
            return Err(CodingError::OutOfRange { value: y, lo, hi: at_zero });
        }
        if y >= at_zero {
            return Ok(0.0);
        }
        if y >= col[0] {
            let r0 = undb(self.rho_db[0]);
            return Ok(r0 * (at_zero - y) / (at_zero - col[0]));
        }
        let i = col.iter().position(|&c| c <= y).expect("y >= last entry");
        let x = Self::log_interp_inv(y, self.rho_db[i - 1], self.rho_db[i], col[i - 1], col[i]);
        Ok(undb(x))
    }

    /// Post-decoding BER at input SINR `rho`, i.e. `ξ(ψ(ρ))`.
    pub fn ber_at(&self, rho: f64) -> f64 {
        self.eval(&self.ber, rho, 0.5)
    }

    /// Smallest SINR reaching BER `p`. Fails when `p` lies outside the
    /// observed nonzero BER range.
    pub fn ber_inv(&self, p: f64) -> Result<f64, CodingError> {
        let min_nz = self.ber.iter().cloned().filter(|&b| b > 0.0).fold(f64::INFINITY, f64::min);
        let max = self.ber[0];
        if !(p >= min_nz && p <= max) {
            return Err(CodingError::OutOfRange { value: p, lo: min_nz, hi: max });
        }
        let i = self.ber.iter().position(|&b| b <= p).expect("p >= min nonzero");
        if i == 0 {
            return Ok(undb(self.rho_db[0]));
        }
        Ok(undb(Self::log_interp_inv(
            p,
            self.rho_db[i - 1],
            self.rho_db[i],
            self.ber[i - 1],
            self.ber[i],
        )))
    }

    /// `ξ(v)`: BER after decoding when the detector sees extrinsic variance `v`.
    pub fn xi(&self, v: f64) -> Result<f64, CodingError> {
        Ok(self.ber_at(self.psi_inv(v)?))
    }

    /// `(v_tar, ρ_tar)` for target BER `p`: `ρ_tar` is where the BER curve
    /// crosses `p` and `v_tar = ψ(ρ_tar)`.
    pub fn target_to_sinr(&self, p: f64) -> Result<(f64, f64), CodingError> {
        let rho = self.ber_inv(p)?;
        Ok((self.psi(rho), rho))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{TABLE_HEADER}").ok();
        writeln!(s, "# {}", self.note).ok();
        writeln!(s, "# rho_db psi v_post ber bit_errors bits").ok();
        for i in 0..self.rho_db.len() {
            writeln!(
                s,
                "{:.4} {:.10e} {:.10e} {:.10e} {} {}",
                self.rho_db[i], self.psi[i], self.v_post[i], self.ber[i], self.bit_errors[i], self.bits[i]
            )
            .ok();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CodingError> {
        let perr = |line: usize, msg: &str| CodingError::TableParse { line: line + 1, msg: msg.into() };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TABLE_HEADER => {}
            _ => return Err(perr(0, "missing header")),
        }
        let mut t = TransferTable {
            rho_db: vec![],
            psi: vec![],
            v_post: vec![],
            ber: vec![],
            bit_errors: vec![],
            bits: vec![],
            note: String::new(),
        };
        for (i, line) in lines {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if t.note.is_empty() && !rest.trim().starts_with("rho_db") {
                    t.note = rest.trim().to_string();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(perr(i, "expected 6 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| perr(i, "bad number"));
            let int = |s: &str| s.parse::<u64>().map_err(|_| perr(i, "bad count"));
            t.rho_db.push(num(f[0])?);
            t.psi.push(num(f[1])?);
            t.v_post.push(num(f[2])?);
            t.ber.push(num(f[3])?);
            t.bit_errors.push(int(f[4])?);
            t.bits.push(int(f[5])?);
        }
        if t.rho_db.is_empty() || t.rho_db.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(perr(0, "grid must be non-empty and strictly increasing"));
        }
        if t.psi.windows(2).any(|w| w[1] > w[0]) || t.ber.windows(2).any(|w| w[1] > w[0]) {
            return Err(perr(0, "columns must be non-increasing"));
        }
        Ok(t)
    }
}

impl DecTransfer for TransferTable {
    fn psi(&self, rho: f64) -> f64 {
        self.eval(&self.psi, rho, 1.0)
    }

    fn psi_inv(&self, v: f64) -> Result<f64, CodingError> {
        self.invert(&self.psi, v, 1.0)
    }
}

impl TransferTable {
    /// Same as [`DecTransfer::psi`], callable without importing the trait.
    pub fn psi(&self, rho: f64) -> f64 {
        DecTransfer::psi(self, rho)
    }

    pub fn psi_inv(&self, v: f64) -> Result<f64, CodingError> {
        DecTransfer::psi_inv(self, v)
    }
}

const DEFAULT_TABLE: &str = include_str!("../../data/transfer_ldpc_3_6_1024.txt");

/// Transfer table of the shipped code, estimated offline.
pub fn default_table() -> &'static TransferTable {
    static T: std::sync::OnceLock<TransferTable> = std::sync::OnceLock::new();
    T.get_or_init(|| TransferTable::from_text(DEFAULT_TABLE).expect("shipped table parses"))
}
