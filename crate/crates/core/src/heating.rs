//! Heating-rate models for electrode voltage noise.
//!
//! Rates are in motional quanta per second. PSDs are single-sided in V²/Hz.
//! The RF term takes the sum of the PSDs at `Omega + omega` and `Omega - omega`.

use num_traits::Num;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS, ELECTRON_MASS_U, ELEMENTARY_CHARGE, HBAR, SR88_ATOMIC_MASS_U};
use crate::error::{Error, Result};
use crate::fields::{characteristic_distance, Distance};
use crate::fit::{Derived, FitResult};
use crate::geometry::ElectrodeLayout;
use crate::num::Real;
use crate::trap::{TrapConfig, TrapOperatingPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IonSpecies<T> {
    /// kg
    pub mass: T,
    /// C
    pub charge: T,
}

impl<T: Real> IonSpecies<T> {
    pub fn new(mass: T, charge: T) -> Result<Self> {
        let s = IonSpecies { mass, charge };
        s.validate()?;
        Ok(s)
    }

    /// Singly charged ⁸⁸Sr⁺.
    pub fn sr88() -> Self {
        IonSpecies {
            mass: T::of((SR88_ATOMIC_MASS_U - ELECTRON_MASS_U) * ATOMIC_MASS),
            charge: T::of(ELEMENTARY_CHARGE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero()) {
            return Err(Error::non_positive("mass", self.mass.as_f64()));
        }
        if !(self.charge > T::zero()) {
            return Err(Error::non_positive("charge", self.charge.as_f64()));
        }
        Ok(())
    }
}

/// Value with a one-standard-deviation uncertainty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Estimate<T> {
    pub value: T,
    pub sigma: T,
}

impl<T: Real> Estimate<T> {
    pub fn new(value: T, sigma: T) -> Self {
        Estimate { value, sigma }
    }

    pub fn exact(value: T) -> Self {
        Estimate { value, sigma: T::zero() }
    }

    /// True when `truth` lies within `k` standard deviations.
    pub fn covers(&self, truth: T, k: T) -> bool {
        (self.value - truth).abs() <= k * self.sigma
    }
}

fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::non_positive(name, v.as_f64()))
    }
}

/// `q²/(4 m ħ ω)`, quanta/s per (V/m)²/Hz of field noise.
pub fn field_noise_coefficient<T: Real>(species: &IonSpecies<T>, omega: T) -> T {
    // Factored so every intermediate stays in f32 range.
    let q_over_hbar = species.charge / T::of(HBAR);
    q_over_hbar * species.charge / (T::of(4.0) * species.mass * omega)
}

/// Rate per V²/Hz on an electrode with characteristic distance `d`.
pub fn dc_coefficient<T: Real>(species: &IonSpecies<T>, omega: T, d: T) -> Result<T> {
    positive("omega", omega)?;
    positive("D", d)?;
    Ok(field_noise_coefficient(species, omega) / (d * d))
}

/// Rate from noise on DC electrodes; `contributions` are `(S_V, D)` pairs.
pub fn heating_rate_dc<T: Real>(species: &IonSpecies<T>, omega: T, contributions: &[(T, T)]) -> Result<T> {
    positive("omega", omega)?;
    let c = field_noise_coefficient(species, omega);
    let mut sum = T::zero();
    for &(s, d) in contributions {
        positive("D", d)?;
        if s < T::zero() {
            return Err(Error::Invalid("PSD must be non-negative".into()));
        }
        sum += s / (d * d);
    }
    Ok(c * sum)
}

/// `q⁴/(16 m³ ħ Ω⁴ ω V₀²)`: rate per (V²/m³)² of gradient per V²/Hz of RF sideband noise.
pub fn rf_coefficient<T: Real>(species: &IonSpecies<T>, omega: T, rf_omega: T, v0: T) -> Result<T> {
    positive("omega", omega)?;
    positive("Omega", rf_omega)?;
    positive("V0", v0)?;
    let q = species.charge;
    let m = species.mass;
    let a = q / T::of(HBAR);
    let b = q / (T::of(4.0) * m * omega);
    let c = q / (T::of(2.0) * m * rf_omega * rf_omega * v0);
    Ok(a * b * c * c)
}

/// Rate from RF amplitude noise coupling through the pseudopotential gradient.
pub fn heating_rate_rf<T: Real>(
    species: &IonSpecies<T>,
    omega: T,
    rf_omega: T,
    v0: T,
    grad: T,
    s_rf: T,
) -> Result<T> {
    if s_rf < T::zero() {
        return Err(Error::Invalid("PSD must be non-negative".into()));
    }
    Ok(rf_coefficient(species, omega, rf_omega, v0)? * grad * grad * s_rf)
}

/// Which RF sidebands carry noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidebands {
    Both,
    Single,
}

/// Sideband-summed PSD from a per-sideband level.
pub fn sideband_sum<T: Real>(per_sideband: T, sidebands: Sidebands) -> T {
    match sidebands {
        Sidebands::Both => per_sideband * T::of(2.0),
        Sidebands::Single => per_sideband,
    }
}

/// RF amplitude that makes the RF term produce `rate` for the given gradient and noise.
pub fn solve_rf_amplitude<T: Real>(
    species: &IonSpecies<T>,
    omega: T,
    rf_omega: T,
    grad: T,
    s_rf: T,
    rate: T,
) -> Result<T> {
    positive("rate", rate)?;
    let at_one_volt = heating_rate_rf(species, omega, rf_omega, T::one(), grad, s_rf)?;
    Ok((at_one_volt / rate).sqrt())
}

/// Residual-noise contribution predicted from a fitted slope.
pub fn intrinsic_contribution<T: Real>(fit: &FitResult<T>, residual_psd: T, residual_sigma: T) -> Result<Estimate<T>> {
    if matches!(fit.derived, Derived::NoCoupling) && fit.slope.value < T::zero() {
        return Err(Error::Invalid("fit has no positive slope".into()));
    }
    if !fit.slope.value.is_finite() || !fit.slope.sigma.is_finite() {
        return Err(Error::NotConverged("fit slope is not finite".into()));
    }
    if residual_psd < T::zero() || residual_sigma < T::zero() {
        return Err(Error::Invalid("residual PSD and its sigma must be non-negative".into()));
    }
    let k = fit.slope;
    let value = k.value * residual_psd;
    let sigma = ((k.sigma * residual_psd).powi(2) + (k.value * residual_sigma).powi(2)).sqrt();
    Ok(Estimate::new(value, sigma))
}

/// Monte-Carlo version of [`intrinsic_contribution`] for strongly asymmetric cases.
///
/// Samples the slope and residual as independent Gaussians, truncating the
/// product at zero, and returns the (16th, 50th, 84th) percentiles.
pub fn intrinsic_contribution_mc(fit: &FitResult<f64>, residual_psd: f64, residual_sigma: f64, samples: usize, seed: u64) -> Result<[f64; 3]> {
    if samples < 10 {
        return Err(Error::TooFewPoints { needed: 10, got: samples });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..samples)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let k = fit.slope.value + a * fit.slope.sigma;
            let s = residual_psd + b * residual_sigma;
            (k * s).max(0.0)
        })
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let pick = |p: f64| v[((samples - 1) as f64 * p).round() as usize];
    Ok([pick(0.158_655_25), pick(0.5), pick(0.841_344_75)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Uncorrelated,
    SymmetricInPhase,
    WorstCaseCoherent,
}

impl Correlation {
    pub const ALL: [Correlation; 3] =
        [Correlation::Uncorrelated, Correlation::SymmetricInPhase, Correlation::WorstCaseCoherent];

    pub fn name(self) -> &'static str {
        match self {
            Correlation::Uncorrelated => "uncorrelated",
            Correlation::SymmetricInPhase => "symmetric_in_phase",
            Correlation::WorstCaseCoherent => "worst_case_coherent",
        }
    }
}

/// Rate from `n_groups` equivalent electrode groups each contributing `per_group_rate` alone.
///
/// Generic over any numeric type so exact rationals can be used.
pub fn combine_groups<N: Num + Copy>(per_group_rate: N, n_groups: u32, correlation: Correlation) -> N {
    let n = (0..n_groups).fold(N::zero(), |acc, _| acc + N::one());
    match correlation {
        Correlation::Uncorrelated => n * per_group_rate,
        Correlation::SymmetricInPhase => N::zero(),
        Correlation::WorstCaseCoherent => n * n * per_group_rate,
    }
}

/// Like [`combine_groups`] for groups with unequal rates.
///
/// Coherent fields add in amplitude, so the worst case is `(Σ √rᵢ)²`; in-phase
/// symmetric groups cancel at the ion.
pub fn combine_rates<T: Real>(rates: &[T], correlation: Correlation) -> T {
    match correlation {
        Correlation::Uncorrelated => rates.iter().copied().sum(),
        Correlation::SymmetricInPhase => T::zero(),
        Correlation::WorstCaseCoherent => {
            let a: T = rates.iter().map(|r| r.max(T::zero()).sqrt()).sum();
            a * a
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Source {
    DcGroup(String),
    RfSidebands,
    Background,
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::DcGroup(g) => format!("dc_group:{g}"),
            Source::RfSidebands => "rf_sidebands".into(),
            Source::Background => "background".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BudgetEntry<T> {
    pub source: Source,
    pub rate: T,
    pub uncertainty: T,
}

impl<T: Real> BudgetEntry<T> {
    pub fn new(source: Source, rate: T, uncertainty: T) -> Result<Self> {
        if !(rate >= T::zero()) || !(uncertainty >= T::zero()) {
            return Err(Error::Invalid(format!("budget entry {} must have non-negative rate", source.label())));
        }
        Ok(BudgetEntry { source, rate, uncertainty })
    }
}

/// Background plus modeled technical-noise entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HeatingBudget<T> {
    pub background: Estimate<T>,
    pub entries: Vec<BudgetEntry<T>>,
}

impl<T: Real> HeatingBudget<T> {
    pub fn technical(&self) -> Estimate<T> {
        let value = self.entries.iter().map(|e| e.rate).sum();
        let var: T = self.entries.iter().map(|e| e.uncertainty * e.uncertainty).sum();
        Estimate::new(value, var.sqrt())
    }

    /// Background plus all entries, uncertainties added in quadrature.
    pub fn total(&self) -> Estimate<T> {
        let t = self.technical();
        Estimate::new(
            self.background.value + t.value,
            (self.background.sigma.powi(2) + t.sigma.powi(2)).sqrt(),
        )
    }
}

/// Noise levels feeding [`operating_budget`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub background: Estimate<f64>,
    /// Voltage PSD at the axial frequency per DC group, V²/Hz.
    pub dc_psd: Vec<(String, f64)>,
    /// RF-electrode PSD summed over both sidebands at `Omega ± omega`, V²/Hz.
    pub rf_psd: f64,
}

/// Axial heating budget at an operating point.
///
/// DC groups couple through their characteristic distance along the axial
/// axis; a group with no coupling contributes zero. The RF entry uses the
/// axial pseudopotential gradient at the operating point.
pub fn operating_budget(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    op: &TrapOperatingPoint,
    inputs: &BudgetInputs,
) -> Result<HeatingBudget<f64>> {
    let omega = op.axial_frequency();
    let axis = op.axial_axis();
    let mut entries = Vec::with_capacity(inputs.dc_psd.len() + 1);
    for (group, s) in &inputs.dc_psd {
        let rate = match characteristic_distance(layout, group, axis, op.position)? {
            Distance::Finite(d) => heating_rate_dc(&config.species, omega, &[(*s, d)])?,
            Distance::NoCoupling => 0.0,
        };
        entries.push(BudgetEntry::new(Source::DcGroup(group.clone()), rate, 0.0)?);
    }
    let rf = heating_rate_rf(&config.species, omega, config.rf_omega, config.rf_amplitude, op.axial_gradient(), inputs.rf_psd)?;
    entries.push(BudgetEntry::new(Source::RfSidebands, rf, 0.0)?);
    Ok(HeatingBudget { background: inputs.background, entries })
}
