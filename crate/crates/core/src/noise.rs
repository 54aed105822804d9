//! Single-sided noise spectra (per Hz) and circuit transfer chains.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    /// V²/Hz
    Voltage,
    /// W/Hz
    Power,
}

impl SpectrumKind {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Voltage => "voltage",
            SpectrumKind::Power => "power",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "voltage" => Ok(SpectrumKind::Voltage),
            "power" => Ok(SpectrumKind::Power),
            other => Err(Error::Parse(format!("unknown spectrum kind `{other}`"))),
        }
    }
}

/// Sampled single-sided PSD with log-log interpolation between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpectrum<T> {
    kind: SpectrumKind,
    freqs: Vec<T>,
    psd: Vec<T>,
}

impl<T: Real> NoiseSpectrum<T> {
    pub fn new(kind: SpectrumKind, samples: Vec<(T, T)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        let (freqs, psd): (Vec<T>, Vec<T>) = samples.into_iter().unzip();
        for w in freqs.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Invalid("spectrum frequencies must be strictly increasing".into()));
            }
        }
        if freqs.iter().any(|f| !(f.is_finite() && *f >= T::zero())) {
            return Err(Error::Invalid("spectrum frequencies must be finite and non-negative".into()));
        }
        if psd.iter().any(|s| !(s.is_finite() && *s >= T::zero())) {
            return Err(Error::Invalid("PSD values must be finite and non-negative".into()));
        }
        Ok(NoiseSpectrum { kind, freqs, psd })
    }

    /// Flat spectrum between two frequencies.
    pub fn flat(kind: SpectrumKind, f_lo: T, f_hi: T, level: T) -> Result<Self> {
        Self::new(kind, vec![(f_lo, level), (f_hi, level)])
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn frequencies(&self) -> &[T] {
        &self.freqs
    }

    pub fn values(&self) -> &[T] {
        &self.psd
    }

    pub fn samples(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.freqs.iter().copied().zip(self.psd.iter().copied())
    }

    /// PSD at `f` Hz. Log-log interpolation, linear on intervals touching a zero,
    /// constant beyond the end samples.
    pub fn at(&self, f: T) -> T {
        let n = self.freqs.len();
        if f <= self.freqs[0] {
            return self.psd[0];
        }
        if f >= self.freqs[n - 1] {
            return self.psd[n - 1];
        }
        let i = self.freqs.partition_point(|&x| x <= f) - 1;
        let (f0, f1) = (self.freqs[i], self.freqs[i + 1]);
        let (s0, s1) = (self.psd[i], self.psd[i + 1]);
        if f == f0 {
            return s0;
        }
        let z = T::zero();
        if f0 > z && s0 > z && s1 > z {
            let t = (f / f0).ln() / (f1 / f0).ln();
            (s0.ln() + t * (s1.ln() - s0.ln())).exp()
        } else {
            s0 + (s1 - s0) * (f - f0) / (f1 - f0)
        }
    }

    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["frequency_hz", "psd", "kind"])?;
        for (f, s) in self.samples() {
            wr.write_record([format!("{f:e}"), format!("{s:e}"), self.kind.name().to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut kind = None;
        let mut samples = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::Parse("spectrum rows need frequency_hz,psd,kind".into()));
            }
            let parse = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|e| Error::Parse(format!("bad number `{s}`: {e}")))
            };
            let k = SpectrumKind::parse(&rec[2])?;
            if kind.is_some_and(|prev| prev != k) {
                return Err(Error::Parse("mixed spectrum kinds in one file".into()));
            }
            kind = Some(k);
            samples.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        let kind = kind.ok_or(Error::TooFewPoints { needed: 1, got: 0 })?;
        Self::new(kind, samples)
    }
}

/// Lumped resonator parameters: quality factor, inductance (H), resonance (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ResonatorParams<T> {
    pub q: T,
    pub inductance: T,
    pub omega: T,
}

impl<T: Real> ResonatorParams<T> {
    pub fn new(q: T, inductance: T, omega: T) -> Result<Self> {
        let p = ResonatorParams { q, inductance, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > T::zero()) {
            return Err(Error::non_positive("Q", self.q.as_f64()));
        }
        if !(self.inductance > T::zero()) {
            return Err(Error::non_positive("L", self.inductance.as_f64()));
        }
        if !(self.omega > T::zero()) {
            return Err(Error::non_positive("Omega", self.omega.as_f64()));
        }
        Ok(())
    }

    /// Power-to-voltage PSD transfer (ohms) at detuning `detuning` rad/s from resonance.
    pub fn transfer(&self, detuning: T) -> T {
        let four = T::of(4.0);
        let r = detuning / self.omega;
        self.q * self.inductance * self.omega / (T::one() + four * self.q * self.q * r * r)
    }
}

/// One element of a transfer chain. Responses are in power (|H|²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case", bound = "T: Real")]
pub enum Stage<T> {
    /// Series R, shunt C.
    RcLowpass { r: T, c: T },
    FirstOrder { cutoff_hz: T },
    /// Lorentzian passband at `center_hz`, attenuating by `rejection_db` at `center_hz ± reject_offset_hz`.
    Bandpass { center_hz: T, reject_offset_hz: T, rejection_db: T },
    /// Gain in dB (negative for attenuation). Also carries calibration offsets.
    FlatGain { db: T },
    /// Converts a power PSD into a voltage PSD.
    Resonator { q: T, inductance: T, omega: T },
}

impl<T: Real> Stage<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::RcLowpass { .. } => "rc_lowpass",
            Stage::FirstOrder { .. } => "first_order",
            Stage::Bandpass { .. } => "bandpass",
            Stage::FlatGain { .. } => "flat_gain",
            Stage::Resonator { .. } => "resonator",
        }
    }

    pub fn rc_cutoff_hz(r: T, c: T) -> T {
        T::one() / (T::of(2.0) * T::PI() * r * c)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::non_positive(name, v.as_f64()))
            }
        };
        match *self {
            Stage::RcLowpass { r, c } => pos("R", r).and(pos("C", c)),
            Stage::FirstOrder { cutoff_hz } => pos("cutoff_hz", cutoff_hz),
            Stage::Bandpass { center_hz, reject_offset_hz, rejection_db } => {
                pos("center_hz", center_hz)?;
                pos("reject_offset_hz", reject_offset_hz)?;
                if rejection_db.is_finite() && rejection_db >= T::zero() {
                    Ok(())
                } else {
                    Err(Error::Invalid("rejection_db must be finite and non-negative".into()))
                }
            }
            Stage::FlatGain { db } => {
                if db.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Invalid("gain must be finite".into()))
                }
            }
            Stage::Resonator { q, inductance, omega } => ResonatorParams::new(q, inductance, omega).map(|_| ()),
        }
    }

    /// Power response at `f` Hz (ohms for the resonator stage).
    pub fn response(&self, f: T) -> T {
        let one = T::one();
        let ten = T::of(10.0);
        match *self {
            Stage::RcLowpass { r, c } => {
                let x = f / Self::rc_cutoff_hz(r, c);
                one / (one + x * x)
            }
            Stage::FirstOrder { cutoff_hz } => {
                let x = f / cutoff_hz;
                one / (one + x * x)
            }
            Stage::Bandpass { center_hz, reject_offset_hz, rejection_db } => {
                let x = (f - center_hz) / reject_offset_hz;
                let a = ten.powf(rejection_db / ten) - one;
                one / (one + a * x * x)
            }
            Stage::FlatGain { db } => ten.powf(db / ten),
            Stage::Resonator { q, inductance, omega } => {
                let p = ResonatorParams { q, inductance, omega };
                p.transfer(T::of(2.0) * T::PI() * f - omega)
            }
        }
    }

    fn output_kind(&self, input: SpectrumKind) -> Result<SpectrumKind> {
        match (self, input) {
            (Stage::Resonator { .. }, SpectrumKind::Power) => Ok(SpectrumKind::Voltage),
            (Stage::Resonator { .. }, SpectrumKind::Voltage) => {
                Err(Error::IncompatibleKind { stage: "resonator", kind: "voltage" })
            }
            (_, k) => Ok(k),
        }
    }
}

/// Ordered list of stages applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TransferChain<T> {
    pub stages: Vec<Stage<T>>,
}

impl<T: Real> TransferChain<T> {
    pub fn new(stages: Vec<Stage<T>>) -> Result<Self> {
        for s in &stages {
            s.validate()?;
        }
        Ok(TransferChain { stages })
    }

    /// This chain followed by `next`.
    pub fn then(&self, next: &TransferChain<T>) -> TransferChain<T> {
        let mut stages = self.stages.clone();
        stages.extend(next.stages.iter().copied());
        TransferChain { stages }
    }

    pub fn response(&self, f: T) -> T {
        self.stages.iter().fold(T::one(), |acc, s| acc * s.response(f))
    }

    pub fn output_kind(&self, input: SpectrumKind) -> Result<SpectrumKind> {
        self.stages.iter().try_fold(input, |k, s| s.output_kind(k))
    }
}

/// Multiplies the spectrum pointwise by the chain's power response.
pub fn apply_chain<T: Real>(chain: &TransferChain<T>, spectrum: &NoiseSpectrum<T>) -> Result<NoiseSpectrum<T>> {
    let kind = chain.output_kind(spectrum.kind())?;
    let psd = spectrum
        .samples()
        .map(|(f, s)| chain.stages.iter().fold(s, |acc, st| acc * st.response(f)))
        .collect();
    Ok(NoiseSpectrum { kind, freqs: spectrum.freqs.clone(), psd })
}

/// Voltage PSD on the electrode from a source power PSD at `Omega ± omega`.
///
/// With `both_sidebands` the result is the sum over the two sidebands, assuming
/// equal source power in each.
pub fn resonator_voltage_noise<T: Real>(params: &ResonatorParams<T>, s_p: T, omega: T, both_sidebands: bool) -> T {
    let s = params.transfer(omega) * s_p;
    if both_sidebands {
        s * T::of(2.0)
    } else {
        s
    }
}

/// Thermal voltage noise `4 k_B T R` in V²/Hz.
pub fn johnson_noise<T: Real>(resistance: T, temperature: T) -> Result<T> {
    if resistance < T::zero() || temperature < T::zero() {
        return Err(Error::Invalid("resistance and temperature must be non-negative".into()));
    }
    Ok(T::of(4.0 * BOLTZMANN) * temperature * resistance)
}
