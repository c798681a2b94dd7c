//! Bit-labelled constellations, soft demapping and symbol posterior moments.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::CodingError;

/// A zero-mean, unit-energy constellation with `2^Q` labelled points.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    /// Point `i` carries the label whose bit `q` is `labels[i][q]`.
    pub points: Vec<Complex64>,
    pub labels: Vec<Vec<u8>>,
}

impl Constellation {
    /// Gray-labelled QPSK: bit 0 sets the real sign, bit 1 the imaginary sign,
    /// with `0 → +1/√2`.
    pub fn qpsk() -> Self {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for b0 in 0..2u8 {
            for b1 in 0..2u8 {
                let re = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                points.push(Complex64::new(re, im));
                labels.push(vec![b0, b1]);
            }
        }
        Constellation { points, labels }
    }

    /// Bits per symbol.
    pub fn q(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> Complex64 {
        self.points.iter().sum::<Complex64>() / self.points.len() as f64
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Maps consecutive groups of `Q` bits to points.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>, CodingError> {
        let q = self.q();
        if bits.len() % q != 0 {
            return Err(CodingError::LengthMismatch { expected: bits.len().next_multiple_of(q), got: bits.len() });
        }
        bits.chunks_exact(q)
            .map(|chunk| {
                self.labels
                    .iter()
                    .position(|l| l.iter().zip(chunk).all(|(a, b)| *a == (b & 1)))
                    .map(|i| self.points[i])
                    .ok_or_else(|| CodingError::InvalidCode("incomplete labelling".into()))
            })
            .collect()
    }

    /// Bit LLRs `ln P(b=0|y)/P(b=1|y)` of observations `y = x + CN(0, noise_var)`
    /// under uniform priors, by exact log-sum-exp over the points.
    pub fn demap(&self, obs: &[Complex64], noise_var: f64) -> Vec<f64> {
        let q = self.q();
        let mut out = Vec::with_capacity(obs.len() * q);
        let mut metric = vec![0.0; self.points.len()];
        for y in obs {
            for (m, p) in metric.iter_mut().zip(&self.points) {
                *m = -(y - p).norm_sqr() / noise_var;
            }
            for bit in 0..q {
                let (mut l0, mut l1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (m, lab) in metric.iter().zip(&self.labels) {
                    let slot = if lab[bit] == 0 { &mut l0 } else { &mut l1 };
                    *slot = lse(*slot, *m);
                }
                out.push(l0 - l1);
            }
        }
        out
    }

    /// Posterior mean of each symbol and the frame-average posterior variance
    /// given per-bit posterior LLRs (`Q` consecutive LLRs per symbol).
    pub fn posterior_moments(&self, llr: &[f64]) -> (Vec<Complex64>, f64) {
        let q = self.q();
        let mut means = Vec::with_capacity(llr.len() / q);
        let mut var_sum = 0.0;
        let mut probs = vec![0.0; self.points.len()];
        for chunk in llr.chunks_exact(q) {
            let mut total = 0.0;
            for (p, lab) in probs.iter_mut().zip(&self.labels) {
                // P(b) = σ(±llr); computed in log form for stability.
                let lp: f64 = lab
                    .iter()
                    .zip(chunk)
                    .map(|(&b, &l)| {
                        let s = if b == 0 { l } else { -l };
                        -softplus(-s)
                    })
                    .sum();
                *p = lp.exp();
                total += *p;
            }
            let mean: Complex64 = probs.iter().zip(&self.points).map(|(p, c)| c * *p).sum::<Complex64>() / total;
            let var: f64 = probs
                .iter()
                .zip(&self.points)
                .map(|(p, c)| p * (c - mean).norm_sqr())
                .sum::<f64>()
                / total;
            means.push(mean);
            var_sum += var;
        }
        let n = means.len().max(1) as f64;
        (means, var_sum / n)
    }
}

fn lse(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}
