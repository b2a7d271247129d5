//! Rayleigh-fading channel matrices.
//!
//! Each link gain `h[m,k]` is a zero-mean circularly-symmetric complex
//! Gaussian with standard deviation `sigma[m,k]` on *each* of the real and
//! imaginary components, so `|h|^2 ~ Exp(1 / (2 sigma^2))` with mean
//! `2 sigma^2`. Rows are UEs, columns are BSs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    gains: DMatrix<Complex64>,
    sigma: DMatrix<f64>,
    seed: u64,
}

/// Deterministic generator for a `(seed, stream)` pair.
///
/// Streams are independent ChaCha substreams of the same key, which is what
/// lets Monte-Carlo partitions be reproduced regardless of worker count.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn check_sigma(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() == 0 || sigma.ncols() == 0 {
        return Err(invalid("channel matrix needs at least one UE and one BS"));
    }
    if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(invalid("all link standard deviations must be finite and > 0"));
    }
    Ok(())
}

/// Draws an `M x K` complex gain matrix from `rng`, row-major.
pub fn sample_gains<R: Rng + ?Sized>(rng: &mut R, sigma: &DMatrix<f64>) -> DMatrix<Complex64> {
    let (m, k) = sigma.shape();
    let mut gains = DMatrix::from_element(m, k, Complex64::new(0.0, 0.0));
    for row in 0..m {
        for col in 0..k {
            let s = sigma[(row, col)];
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            gains[(row, col)] = Complex64::new(s * re, s * im);
        }
    }
    gains
}

/// Power gains `|h|^2` drawn directly into a real matrix (same draws as [`sample_gains`]).
pub fn sample_power_gains<R: Rng + ?Sized>(rng: &mut R, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    sample_gains(rng, sigma).map(|h| h.norm_sqr())
}

pub fn generate_channels(
    m_users: usize,
    k_bs: usize,
    sigma: &DMatrix<f64>,
    seed: u64,
) -> Result<ChannelMatrix> {
    if m_users == 0 || k_bs == 0 {
        return Err(invalid("m_users and k_bs must both be at least 1"));
    }
    if sigma.shape() != (m_users, k_bs) {
        return Err(invalid(format!(
            "sigma has shape {:?}, expected ({m_users}, {k_bs})",
            sigma.shape()
        )));
    }
    check_sigma(sigma)?;
    let mut rng = stream_rng(seed, 0);
    Ok(ChannelMatrix {
        gains: sample_gains(&mut rng, sigma),
        sigma: sigma.clone(),
        seed,
    })
}

/// Elementwise `|h[m,k]|^2`.
pub fn power_gains(ch: &ChannelMatrix) -> DMatrix<f64> {
    ch.gains.map(|h| h.norm_sqr())
}

/// Per-link standard deviation from a distance-based path-loss law,
/// `sigma^2 = sigma0^2 * (d / d0)^(-exponent)`.
///
/// Not used by any of the default workflows, which take `sigma` directly.
pub fn sigma_from_distance(
    distance: &DMatrix<f64>,
    exponent: f64,
    reference_distance: f64,
    reference_sigma: f64,
) -> Result<DMatrix<f64>> {
    if distance.iter().any(|&d| !(d > 0.0)) || !(reference_distance > 0.0) {
        return Err(invalid("distances must be strictly positive"));
    }
    Ok(distance.map(|d| reference_sigma * (d / reference_distance).powf(-exponent / 2.0)))
}

impl ChannelMatrix {
    /// Wraps an explicit gain matrix (e.g. a golden fixture).
    pub fn from_gains(gains: DMatrix<Complex64>, sigma: DMatrix<f64>) -> Result<Self> {
        if gains.shape() != sigma.shape() {
            return Err(invalid("gains and sigma must have the same shape"));
        }
        check_sigma(&sigma)?;
        Ok(ChannelMatrix {
            gains,
            sigma,
            seed: 0,
        })
    }

    /// Real, non-negative magnitudes treated as zero-phase gains, unit sigma.
    pub fn from_magnitudes(magnitudes: &DMatrix<f64>) -> Result<Self> {
        if magnitudes.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(invalid("magnitudes must be finite and non-negative"));
        }
        let sigma = DMatrix::from_element(magnitudes.nrows(), magnitudes.ncols(), 1.0);
        Self::from_gains(magnitudes.map(|x| Complex64::new(x, 0.0)), sigma)
    }

    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_bs(&self) -> usize {
        self.gains.ncols()
    }

    pub fn gains(&self) -> &DMatrix<Complex64> {
        &self.gains
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn magnitudes(&self) -> DMatrix<f64> {
        self.gains.map(|h| h.norm())
    }

    /// CSV with one row per UE and `re,im` column pairs per BS.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = (1..=self.num_bs())
            .flat_map(|k| [format!("bs{k}_re"), format!("bs{k}_im")])
            .collect();
        w.write_record(&header)?;
        for row in 0..self.num_users() {
            let rec: Vec<String> = (0..self.num_bs())
                .flat_map(|k| {
                    let h = self.gains[(row, k)];
                    [h.re.to_string(), h.im.to_string()]
                })
                .collect();
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses [`ChannelMatrix::to_csv`] output; `sigma` is supplied by the caller.
    pub fn from_csv(text: &str, sigma: DMatrix<f64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() % 2 != 0 {
                return Err(invalid("each BS needs a re,im pair"));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| invalid(e.to_string())))
                .collect::<Result<_>>()?;
            rows.push(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
        }
        let m = rows.len();
        let k = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != k) {
            return Err(invalid("ragged channel CSV"));
        }
        let gains = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
        Self::from_gains(gains, sigma)
    }
}
