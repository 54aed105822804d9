//! Band-limited Gaussian noise with a prescribed single-sided PSD.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Flat PSD `level` (units²/Hz, single-sided) on `[f_lo, f_hi]` Hz, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub f_lo: f64,
    pub f_hi: f64,
    pub level: f64,
}

impl Band {
    pub fn new(f_lo: f64, f_hi: f64, level: f64) -> Result<Self> {
        if !(f_lo >= 0.0 && f_hi > f_lo) {
            return Err(Error::Invalid(format!("band [{f_lo}, {f_hi}] Hz is empty")));
        }
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::Invalid("band PSD must be non-negative".into()));
        }
        Ok(Band { f_lo, f_hi, level })
    }

    /// Band of relative half-width `rel` around `f`.
    pub fn around(f: f64, rel: f64, level: f64) -> Result<Self> {
        Self::new(f * (1.0 - rel), f * (1.0 + rel), level)
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_lo && f <= self.f_hi
    }
}

/// Noise realization from a set of bands; bins are the DFT bins of an `n`-sample record.
#[derive(Clone, Debug)]
pub struct NoiseRealization {
    pub seed: u64,
    pub bands: Vec<Band>,
    pub dt: f64,
    pub samples: Vec<f64>,
}

/// Reusable inverse-FFT synthesizer for records of fixed length.
pub struct Synthesizer {
    n: usize,
    dt: f64,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Synthesizer {
    pub fn new(n: usize, dt: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooFewPoints { needed: 4, got: n });
        }
        if !(dt > 0.0) {
            return Err(Error::non_positive("dt", dt));
        }
        let ifft = FftPlanner::new().plan_fft_inverse(n);
        Ok(Synthesizer { n, dt, ifft })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Draws one record. Bin `k` (frequency k/(n dt)) gets independent Gaussian
    /// real and imaginary parts with `E|X_k|² = S n / (2 dt)`, so the periodogram
    /// `2 dt |X_k|² / n` has expectation `S`.
    pub fn draw<R: Rng>(&self, bands: &[Band], rng: &mut R) -> Vec<f64> {
        let n = self.n;
        let df = 1.0 / (n as f64 * self.dt);
        let mut spec = vec![Complex::new(0.0, 0.0); n];
        for k in 1..n.div_ceil(2) {
            let f = k as f64 * df;
            let s: f64 = bands.iter().filter(|b| b.contains(f)).map(|b| b.level).sum();
            if s > 0.0 {
                let a = (s * n as f64 / (4.0 * self.dt)).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                spec[k] = Complex::new(a * re, a * im);
                spec[n - k] = Complex::new(a * re, -a * im);
            }
        }
        self.ifft.process(&mut spec);
        let inv = 1.0 / n as f64;
        spec.iter().map(|c| c.re * inv).collect()
    }
}

/// Single-sided periodogram `(f_k, 2 dt |X_k|² / n)` for `0 < k < n/2`.
pub fn periodogram(x: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let n = x.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    (1..n.div_ceil(2)).map(|k| (k as f64 * df, 2.0 * dt * buf[k].norm_sqr() / n as f64)).collect()
}
