//! Geometry, fading draws and frequency-domain channel assembly.
//!
//! Time-domain taps are converted to per-subcarrier responses with the
//! unnormalized DFT `λ_j = Σ_l h(l) e^{-i2π jl/J}`, which is exactly the
//! block diagonal of `F_M H F^H` for a unitary DFT `F`. The RIS-composed
//! response of user `k` on subcarrier `j` is
//! `g_k(j; θ) = d_k(j) + C_k(j) θ`, where column `n` of `C_k(j)` is the
//! cascade `G^rb_n(j) · g^ur_{k,n}(j)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::linalg::{CMatrix, CVector};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("J' = {j_prime} does not divide J = {j}")]
    NonDivisor { j: usize, j_prime: usize },
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed channel dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Point = [f64; 3];

/// Carrier wavelength in metres (3.5 GHz).
pub const CARRIER_WAVELENGTH: f64 = 299_792_458.0 / 3.5e9;

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit vector from `from` to `to`.
fn direction(from: &Point, to: &Point) -> Point {
    let d = distance(from, to);
    [(to[0] - from[0]) / d, (to[1] - from[1]) / d, (to[2] - from[2]) / d]
}

/// Node positions in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Point,
    pub ris: Point,
    pub users: Vec<Point>,
}

impl Geometry {
    pub const BS: Point = [0.0, 0.0, 10.0];
    pub const RIS: Point = [50.0, 50.0, 10.0];
    /// Opposite corners of the horizontal user area.
    pub const USER_AREA: (Point, Point) = ([60.0, 0.0, 1.5], [110.0, 50.0, 1.5]);

    /// Default BS/RIS placement with `k` users dropped uniformly in the user area.
    pub fn random_users<R: Rng>(k: usize, rng: &mut R) -> Geometry {
        let (lo, hi) = Self::USER_AREA;
        let users = (0..k)
            .map(|_| {
                [
                    rng.random_range(lo[0]..hi[0]),
                    rng.random_range(lo[1]..hi[1]),
                    lo[2],
                ]
            })
            .collect();
        Geometry { bs: Self::BS, ris: Self::RIS, users }
    }

    fn validate(&self) -> Result<(), ChannelError> {
        let d = distance(&self.bs, &self.ris);
        if !(d > 0.0) {
            return Err(ChannelError::InvalidGeometry("BS and RIS coincide".into()));
        }
        for (k, u) in self.users.iter().enumerate() {
            if !(distance(u, &self.bs) > 0.0 && distance(u, &self.ris) > 0.0) {
                return Err(ChannelError::InvalidGeometry(format!("user {k} coincides with BS or RIS")));
            }
        }
        Ok(())
    }
}

/// Large-scale pathloss `gain · d^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pathloss {
    pub gain: f64,
    pub exponent: f64,
}

impl Pathloss {
    pub fn at(&self, d: f64) -> f64 {
        self.gain * d.powf(-self.exponent)
    }
}

/// Statistical channel parameters (everything except positions and seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub m: usize,
    pub n: usize,
    pub j: usize,
    pub l_ub: usize,
    pub l_ur: usize,
    pub l_rb: usize,
    pub l_cp: usize,
    pub rician_ur: f64,
    pub rician_rb: f64,
    pub pathloss_ub: Pathloss,
    pub pathloss_ur: Pathloss,
    pub pathloss_rb: Pathloss,
    /// Noise power per subcarrier and antenna in watts.
    pub noise_power: f64,
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Converts watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (1000.0 * w).log10()
}

impl ChannelConfig {
    /// Default link parameters with the given array sizes and subcarrier count.
    pub fn with_sizes(m: usize, n: usize, j: usize) -> ChannelConfig {
        ChannelConfig {
            m,
            n,
            j,
            l_ub: 6,
            l_ur: 2,
            l_rb: 5,
            l_cp: 8,
            rician_ur: 10.0,
            rician_rb: 10.0,
            pathloss_ub: Pathloss { gain: 1e-3, exponent: 4.0 },
            pathloss_ur: Pathloss { gain: 1e-3, exponent: 2.0 },
            pathloss_rb: Pathloss { gain: 1e-3, exponent: 2.5 },
            noise_power: dbm_to_watts(-105.0),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.m == 0 || self.j == 0 || self.l_ub == 0 || self.l_ur == 0 || self.l_rb == 0 {
            return Err(ChannelError::InvalidConfig("M, J and tap counts must be positive".into()));
        }
        if self.l_cp < self.l_ub.max(self.l_ur + self.l_rb) {
            return Err(ChannelError::InvalidConfig(format!(
                "cyclic prefix {} shorter than max(L_ub, L_ur + L_rb) = {}",
                self.l_cp,
                self.l_ub.max(self.l_ur + self.l_rb)
            )));
        }
        if self.l_ub > self.j || self.l_ur + self.l_rb > self.j {
            return Err(ChannelError::InvalidConfig("more taps than subcarriers".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(ChannelError::InvalidConfig("noise power must be positive".into()));
        }
        if self.rician_ur < 0.0 || self.rician_rb < 0.0 {
            return Err(ChannelError::InvalidConfig("Rician factors must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Time-domain taps of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub m: usize,
    pub n: usize,
    pub j: usize,
    pub l_cp: usize,
    pub noise_power: f64,
    /// `h_ub[k][l]`: user `k` to BS, tap `l`, one entry per antenna.
    pub h_ub: Vec<Vec<CVector>>,
    /// `h_ur[k][n][l]`: user `k` to RIS element `n`, tap `l`.
    pub h_ur: Vec<Vec<Vec<Complex64>>>,
    /// `h_rb[n][l]`: RIS element `n` to BS, tap `l`.
    pub h_rb: Vec<Vec<CVector>>,
}

impl ChannelSet {
    pub fn k(&self) -> usize {
        self.h_ub.len()
    }
}

fn cn<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Half-wavelength ULA along the x axis: `exp(iπ m u_x)`.
fn ula_steering(m: usize, u: &Point) -> CVector {
    CVector::from_iterator(m, (0..m).map(|i| Complex64::from_polar(1.0, PI * i as f64 * u[0])))
}

/// Side lengths `(n_x, n_z)` of the RIS panel: the most square factorization.
pub fn upa_shape(n: usize) -> (usize, usize) {
    let mut nz = 1;
    for d in 1..=n {
        if d * d > n {
            break;
        }
        if n % d == 0 {
            nz = d;
        }
    }
    (n / nz.max(1), nz)
}

/// Half-wavelength UPA in the x-z plane, element `n = iz·n_x + ix`.
fn upa_steering(n: usize, u: &Point) -> Vec<Complex64> {
    let (nx, _) = upa_shape(n);
    (0..n)
        .map(|idx| {
            let ix = (idx % nx.max(1)) as f64;
            let iz = (idx / nx.max(1)) as f64;
            Complex64::from_polar(1.0, PI * (ix * u[0] + iz * u[2]))
        })
        .collect()
}

/// Draws all links for one realization. Deterministic in `seed`.
pub fn generate_channels(geometry: &Geometry, config: &ChannelConfig, seed: u64) -> Result<ChannelSet, ChannelError> {
    geometry.validate()?;
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (m, n) = (config.m, config.n);
    // Carrier phase of the LOS ray; the wavelength only enters through this phase.
    let wavelength_phase = |d: f64| Complex64::from_polar(1.0, -2.0 * PI * d / CARRIER_WAVELENGTH);

    let h_ub = geometry
        .users
        .iter()
        .map(|u| {
            let pl = config.pathloss_ub.at(distance(u, &geometry.bs)) / config.l_ub as f64;
            (0..config.l_ub)
                .map(|_| CVector::from_iterator(m, (0..m).map(|_| cn(&mut rng, pl))))
                .collect()
        })
        .collect();

    // RIS to BS: LOS arrives at the BS array from the RIS and departs the RIS toward the BS.
    let d_rb = distance(&geometry.ris, &geometry.bs);
    let pl_rb = config.pathloss_rb.at(d_rb);
    let k_rb = config.rician_rb;
    let a_bs = ula_steering(m, &direction(&geometry.bs, &geometry.ris));
    let a_ris_rb = upa_steering(n, &direction(&geometry.ris, &geometry.bs));
    let los_amp = (pl_rb * k_rb / (k_rb + 1.0)).sqrt();
    let nlos_var = pl_rb / ((k_rb + 1.0) * config.l_rb as f64);
    let h_rb = (0..n)
        .map(|e| {
            (0..config.l_rb)
                .map(|l| {
                    let mut tap = CVector::from_iterator(m, (0..m).map(|_| cn(&mut rng, nlos_var)));
                    if l == 0 {
                        let phase = wavelength_phase(d_rb) * a_ris_rb[e].conj() * los_amp;
                        tap += &a_bs * phase;
                    }
                    tap
                })
                .collect()
        })
        .collect();

    let k_ur = config.rician_ur;
    let h_ur = geometry
        .users
        .iter()
        .map(|u| {
            let d = distance(u, &geometry.ris);
            let pl = config.pathloss_ur.at(d);
            let a = upa_steering(n, &direction(&geometry.ris, u));
            let los_amp = (pl * k_ur / (k_ur + 1.0)).sqrt();
            let nlos_var = pl / ((k_ur + 1.0) * config.l_ur as f64);
            (0..n)
                .map(|e| {
                    (0..config.l_ur)
                        .map(|l| {
                            let mut tap = cn(&mut rng, nlos_var);
                            if l == 0 {
                                tap += wavelength_phase(d) * a[e] * los_amp;
                            }
                            tap
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(ChannelSet {
        m,
        n,
        j: config.j,
        l_cp: config.l_cp,
        noise_power: config.noise_power,
        h_ub,
        h_ur,
        h_rb,
    })
}

/// Unnormalized DFT of zero-padded scalar taps on `j` subcarriers.
pub fn taps_to_frequency_scalar(taps: &[Complex64], j: usize) -> Vec<Complex64> {
    assert!(taps.len() <= j, "tap count exceeds subcarrier count");
    let mut buf = vec![Complex64::new(0.0, 0.0); j];
    buf[..taps.len()].copy_from_slice(taps);
    FftPlanner::new().plan_fft_forward(j).process(&mut buf);
    buf
}

/// Per-subcarrier responses of vector taps (one DFT per antenna).
pub fn taps_to_frequency(taps: &[CVector], j: usize) -> Vec<CVector> {
    let m = taps.first().map_or(0, |t| t.len());
    let mut out = vec![CVector::zeros(m); j];
    for a in 0..m {
        let scalar: Vec<Complex64> = taps.iter().map(|t| t[a]).collect();
        for (o, v) in out.iter_mut().zip(taps_to_frequency_scalar(&scalar, j)) {
            o[a] = v;
        }
    }
    out
}

/// Frequency-domain direct and cascade responses on a set of subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub m: usize,
    pub n: usize,
    /// Noise power per subcarrier and antenna.
    pub noise_power: f64,
    /// `direct[k][j]`
    pub direct: Vec<Vec<CVector>>,
    /// `cascade[k][j]`, an `M × N` matrix whose column `n` is the path via element `n`.
    pub cascade: Vec<Vec<CMatrix>>,
}

/// Composed responses `g[k][j]` for one phase vector.
pub type Responses = Vec<Vec<CVector>>;

impl EffectiveChannel {
    pub fn k(&self) -> usize {
        self.direct.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.direct.first().map_or(0, |d| d.len())
    }

    /// `g_k(j; θ) = d_k(j) + C_k(j) θ` for every user and subcarrier.
    pub fn compose(&self, theta: &[Complex64]) -> Responses {
        assert_eq!(theta.len(), self.n, "phase vector length");
        let th = CVector::from_column_slice(theta);
        self.direct
            .iter()
            .zip(&self.cascade)
            .map(|(dk, ck)| {
                dk.iter()
                    .zip(ck)
                    .map(|(d, c)| if self.n == 0 { d.clone() } else { d + c * &th })
                    .collect()
            })
            .collect()
    }

    /// Copy with every response scaled by `1/√σ²` and unit noise power.
    pub fn whitened(&self) -> EffectiveChannel {
        let s = Complex64::new(1.0 / self.noise_power.sqrt(), 0.0);
        EffectiveChannel {
            m: self.m,
            n: self.n,
            noise_power: 1.0,
            direct: self.direct.iter().map(|v| v.iter().map(|d| d * s).collect()).collect(),
            cascade: self.cascade.iter().map(|v| v.iter().map(|c| c * s).collect()).collect(),
        }
    }

    /// The same channel with every RIS path removed.
    pub fn without_ris(&self) -> EffectiveChannel {
        EffectiveChannel {
            m: self.m,
            n: 0,
            noise_power: self.noise_power,
            direct: self.direct.clone(),
            cascade: self
                .cascade
                .iter()
                .map(|v| v.iter().map(|_| CMatrix::zeros(self.m, 0)).collect())
                .collect(),
        }
    }

    /// Restriction to users `users` (in that order).
    pub fn select_users(&self, users: &[usize]) -> EffectiveChannel {
        EffectiveChannel {
            m: self.m,
            n: self.n,
            noise_power: self.noise_power,
            direct: users.iter().map(|&k| self.direct[k].clone()).collect(),
            cascade: users.iter().map(|&k| self.cascade[k].clone()).collect(),
        }
    }
}

/// Frequency responses on every `J/J'`-th subcarrier.
pub fn assemble_effective(channels: &ChannelSet, j_prime: usize) -> Result<EffectiveChannel, ChannelError> {
    let j = channels.j;
    if j_prime == 0 || j % j_prime != 0 {
        return Err(ChannelError::NonDivisor { j, j_prime });
    }
    let step = j / j_prime;
    let pick = |v: Vec<CVector>| -> Vec<CVector> { v.into_iter().step_by(step).collect() };
    let rb: Vec<Vec<CVector>> = channels.h_rb.iter().map(|t| pick(taps_to_frequency(t, j))).collect();
    let direct = channels.h_ub.iter().map(|t| pick(taps_to_frequency(t, j))).collect();
    let cascade = channels
        .h_ur
        .iter()
        .map(|per_elem| {
            let ur: Vec<Vec<Complex64>> = per_elem
                .iter()
                .map(|t| taps_to_frequency_scalar(t, j).into_iter().step_by(step).collect())
                .collect();
            (0..j_prime)
                .map(|jj| {
                    let mut c = CMatrix::zeros(channels.m, channels.n);
                    for e in 0..channels.n {
                        c.set_column(e, &(&rb[e][jj] * ur[e][jj]));
                    }
                    c
                })
                .collect()
        })
        .collect();
    Ok(EffectiveChannel { m: channels.m, n: channels.n, noise_power: channels.noise_power, direct, cascade })
}

/// Unit-modulus phases with independent uniform angles.
pub fn random_phases<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect()
}

const DUMP_HEADER: &str = "# ris-channel-dump v1";

/// Writes taps as whitespace-separated records `link k n tap m re im`.
///
/// `link` is `ub`, `ur` or `rb`; unused indices are `-`.
pub fn write_channel_dump<W: Write>(ch: &ChannelSet, mut out: W) -> Result<(), ChannelError> {
    let mut s = String::new();
    writeln!(s, "{DUMP_HEADER}").ok();
    writeln!(s, "# M {} N {} J {} L_cp {} noise {:e}", ch.m, ch.n, ch.j, ch.l_cp, ch.noise_power).ok();
    writeln!(s, "# link k n tap m re im").ok();
    for (k, taps) in ch.h_ub.iter().enumerate() {
        for (l, t) in taps.iter().enumerate() {
            for (a, v) in t.iter().enumerate() {
                writeln!(s, "ub {k} - {l} {a} {:e} {:e}", v.re, v.im).ok();
            }
        }
    }
    for (k, elems) in ch.h_ur.iter().enumerate() {
        for (e, taps) in elems.iter().enumerate() {
            for (l, v) in taps.iter().enumerate() {
                writeln!(s, "ur {k} {e} {l} - {:e} {:e}", v.re, v.im).ok();
            }
        }
    }
    for (e, taps) in ch.h_rb.iter().enumerate() {
        for (l, t) in taps.iter().enumerate() {
            for (a, v) in t.iter().enumerate() {
                writeln!(s, "rb - {e} {l} {a} {:e} {:e}", v.re, v.im).ok();
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads the format produced by [`write_channel_dump`].
pub fn read_channel_dump<R: BufRead>(input: R) -> Result<ChannelSet, ChannelError> {
    let mut lines = input.lines().enumerate();
    let perr = |line: usize, msg: &str| ChannelError::Parse { line: line + 1, msg: msg.to_string() };
    let (i0, first) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
    if first?.trim() != DUMP_HEADER {
        return Err(perr(i0, "missing header"));
    }
    let (i1, dims) = lines.next().ok_or_else(|| perr(1, "missing dimensions"))?;
    let dims = dims?;
    let f: Vec<&str> = dims.trim_start_matches('#').split_whitespace().collect();
    if f.len() != 10 {
        return Err(perr(i1, "bad dimension line"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| perr(i1, "bad dimension"));
    let (m, n, j, l_cp) = (num(f[1])?, num(f[3])?, num(f[5])?, num(f[7])?);
    let noise_power: f64 = f[9].parse().map_err(|_| perr(i1, "bad noise power"))?;
    let mut ch = ChannelSet { m, n, j, l_cp, noise_power, h_ub: vec![], h_ur: vec![], h_rb: vec![] };
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(perr(i, "expected 7 columns"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| perr(i, "bad index"));
        let v = Complex64::new(
            f[5].parse().map_err(|_| perr(i, "bad real part"))?,
            f[6].parse().map_err(|_| perr(i, "bad imaginary part"))?,
        );
        match f[0] {
            "ub" => {
                let (k, l, a) = (idx(f[1])?, idx(f[3])?, idx(f[4])?);
                grow(&mut ch.h_ub, k + 1, Vec::new);
                grow(&mut ch.h_ub[k], l + 1, || CVector::zeros(m));
                *ch.h_ub[k][l].get_mut(a).ok_or_else(|| perr(i, "antenna out of range"))? = v;
            }
            "ur" => {
                let (k, e, l) = (idx(f[1])?, idx(f[2])?, idx(f[3])?);
                grow(&mut ch.h_ur, k + 1, Vec::new);
                grow(&mut ch.h_ur[k], e + 1, Vec::new);
                grow(&mut ch.h_ur[k][e], l + 1, || Complex64::new(0.0, 0.0));
                ch.h_ur[k][e][l] = v;
            }
            "rb" => {
                let (e, l, a) = (idx(f[2])?, idx(f[3])?, idx(f[4])?);
                grow(&mut ch.h_rb, e + 1, Vec::new);
                grow(&mut ch.h_rb[e], l + 1, || CVector::zeros(m));
                *ch.h_rb[e][l].get_mut(a).ok_or_else(|| perr(i, "antenna out of range"))? = v;
            }
            _ => return Err(perr(i, "unknown link")),
        }
    }
    if ch.h_rb.len() != n || ch.h_ur.iter().any(|u| u.len() != n) || ch.h_ur.len() != ch.h_ub.len() {
        return Err(perr(0, "record counts do not match dimensions"));
    }
    Ok(ch)
}

fn grow<T>(v: &mut Vec<T>, len: usize, f: impl FnMut() -> T) {
    if v.len() < len {
        v.resize_with(len, f);
    }
}
