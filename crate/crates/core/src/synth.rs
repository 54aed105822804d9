//! Synthetic noise-injection experiments with sideband-thermometry shot noise.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{slope_coefficient, FitContext, HeatingDataset, HeatingPoint, Regime};
use crate::heating::IonSpecies;
use crate::trap::DEFAULT_RF_OMEGA;

/// Axial frequency of the reference plans, rad/s.
pub const REFERENCE_AXIAL_OMEGA: f64 = 2.0 * std::f64::consts::PI * 1.29e6;
/// RF amplitude that makes the residual RF noise heat at 12 quanta/s for 2.1e12 V²/m³.
pub const REFERENCE_RF_AMPLITUDE: f64 = 49.69;

/// `n` levels spaced evenly in log between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// Mean occupation from the red/blue sideband amplitude ratio, `R/(1−R)`.
pub fn sideband_nbar(red: f64, blue: f64) -> Result<f64> {
    if !(blue > 0.0) {
        return Err(Error::Invalid("blue sideband amplitude must be positive".into()));
    }
    if red < 0.0 {
        return Err(Error::Invalid("red sideband amplitude must be non-negative".into()));
    }
    if red >= blue {
        return Err(Error::Invalid(format!("red sideband ({red}) not below blue ({blue}): unphysical ratio")));
    }
    let r = red / blue;
    Ok(r / (1.0 - r))
}

/// Red/blue ratio for a thermal state, `n̄/(n̄+1)`.
pub fn sideband_ratio(nbar: f64) -> f64 {
    nbar / (nbar + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Delays {
    /// `count` delays from 0 to the time at which the true n̄ rises by `nbar_max`.
    Adaptive { count: usize, nbar_max: f64 },
    /// Fixed delays in seconds.
    Fixed { times: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    /// Shots per sideband per delay.
    pub n_shots: u64,
    pub delays: Delays,
    /// n̄ after cooling, before the delay.
    pub initial_nbar: f64,
    /// Blue-sideband excitation probability for the ground state.
    pub contrast: f64,
    /// Relative calibration error of the reported PSD.
    pub psd_rel_sigma: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel {
            n_shots: 2000,
            delays: Delays::Adaptive { count: 4, nbar_max: 1.5 },
            initial_nbar: 0.05,
            contrast: 0.6,
            psd_rel_sigma: 0.03,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Residual noise with extra bandpass filtering.
    Filtered,
    /// Residual noise only.
    Residual,
    /// Residual plus injected noise.
    Injected,
}

impl Region {
    /// Plot label: RF data use I/II/III, DC data use I/II.
    pub fn label(self, regime: Regime) -> &'static str {
        match (regime, self) {
            (Regime::Rf, Region::Filtered) => "I",
            (Regime::Rf, Region::Residual) => "II",
            (Regime::Rf, Region::Injected) => "III",
            (Regime::Dc, Region::Filtered) => "0",
            (Regime::Dc, Region::Residual) => "I",
            (Regime::Dc, Region::Injected) => "II",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub regime: Regime,
    /// Injected PSD levels on the electrode, V²/Hz, ascending.
    pub injected_psd_levels: Vec<f64>,
    pub residual_psd: f64,
    /// Points taken without injection.
    pub residual_points: usize,
    /// Points taken with the residual attenuated by `filter_rejection_db`.
    pub filtered_points: usize,
    pub filter_rejection_db: f64,
    /// True background rate, quanta/s.
    pub background: f64,
    /// True D (m) for DC or gradient (V²/m³) for RF.
    pub parameter: f64,
    pub context: FitContext<f64>,
    pub measurement: MeasurementModel,
}

impl ExperimentPlan {
    /// DC injection campaign at reference scale: background 10 quanta/s, D = 6.5 mm,
    /// two residual-only points and eight injected levels over four decades.
    pub fn reference_dc() -> Self {
        ExperimentPlan {
            regime: Regime::Dc,
            injected_psd_levels: log_spaced(1e-18, 1e-14, 8),
            residual_psd: 1.9e-20,
            residual_points: 2,
            filtered_points: 0,
            filter_rejection_db: 0.0,
            background: 10.0,
            parameter: 6.5e-3,
            context: FitContext { species: IonSpecies::sr88(), omega: REFERENCE_AXIAL_OMEGA, rf: None },
            measurement: MeasurementModel::default(),
        }
    }

    /// RF injection campaign before gradient minimization: background 15 quanta/s,
    /// gradient 2.1e12 V²/m³, with filtered, residual and injected regions.
    pub fn reference_rf() -> Self {
        ExperimentPlan {
            regime: Regime::Rf,
            injected_psd_levels: log_spaced(1e-11, 1e-8, 6),
            residual_psd: 1.17e-11,
            residual_points: 2,
            filtered_points: 2,
            filter_rejection_db: 20.0,
            background: 15.0,
            parameter: 2.1e12,
            context: FitContext {
                species: IonSpecies::sr88(),
                omega: REFERENCE_AXIAL_OMEGA,
                rf: Some((DEFAULT_RF_OMEGA, REFERENCE_RF_AMPLITUDE)),
            },
            measurement: MeasurementModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.injected_psd_levels.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Invalid("injected PSD levels must be sorted ascending".into()));
        }
        if self.injected_psd_levels.iter().any(|s| !(*s >= 0.0)) || !(self.residual_psd >= 0.0) {
            return Err(Error::Invalid("PSD levels must be non-negative".into()));
        }
        if self.measurement.n_shots < 1 {
            return Err(Error::Invalid("n_shots must be at least 1".into()));
        }
        if !(self.background >= 0.0 && self.parameter >= 0.0) {
            return Err(Error::Invalid("truth parameters must be non-negative".into()));
        }
        if !(self.measurement.contrast > 0.0 && self.measurement.contrast <= 1.0) {
            return Err(Error::Invalid("contrast must lie in (0, 1]".into()));
        }
        match &self.measurement.delays {
            Delays::Adaptive { count, nbar_max } if *count < 2 || !(*nbar_max > 0.0) => {
                Err(Error::Invalid("adaptive delays need count ≥ 2 and nbar_max > 0".into()))
            }
            Delays::Fixed { times } if times.len() < 2 => Err(Error::TooFewPoints { needed: 2, got: times.len() }),
            _ => Ok(()),
        }
    }

    /// Slope of rate against PSD implied by the truth.
    pub fn true_slope(&self) -> Result<f64> {
        let c = slope_coefficient(self.regime, &self.context)?;
        Ok(match self.regime {
            Regime::Dc => c / (self.parameter * self.parameter),
            Regime::Rf => c * self.parameter * self.parameter,
        })
    }

    /// Points in emission order: filtered, residual, then injected levels.
    pub fn points(&self) -> Vec<(Region, f64)> {
        let att = 10f64.powf(-self.filter_rejection_db / 10.0);
        let mut v = Vec::new();
        v.extend((0..self.filtered_points).map(|_| (Region::Filtered, self.residual_psd * att)));
        v.extend((0..self.residual_points).map(|_| (Region::Residual, self.residual_psd)));
        v.extend(self.injected_psd_levels.iter().map(|s| (Region::Injected, self.residual_psd + s)));
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRow {
    pub region: Region,
    pub s_true: f64,
    pub true_rate: f64,
    pub point: HeatingPoint<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub dataset: HeatingDataset<f64>,
    pub rows: Vec<SynthRow>,
}

impl SynthOutput {
    /// Plot-ready CSV: region label, true and reported PSD, true and measured rate.
    pub fn plot_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["region", "s_true", "s_v2_per_hz", "s_sigma", "true_rate", "rate_quanta_per_s", "rate_sigma"])?;
        for r in &self.rows {
            wr.write_record([
                r.region.label(self.dataset.regime).to_string(),
                format!("{:e}", r.s_true),
                format!("{:e}", r.point.s),
                format!("{:e}", r.point.s_sigma),
                format!("{:e}", r.true_rate),
                format!("{:e}", r.point.rate),
                format!("{:e}", r.point.rate_sigma),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Variance of the red/blue ratio estimate from binomial counts, to first order.
fn ratio_variance(r: f64, contrast: f64, shots: f64) -> f64 {
    if r > 0.0 {
        r * r * ((1.0 - contrast * r) / (shots * contrast * r) + (1.0 - contrast) / (shots * contrast))
    } else {
        0.0
    }
}

/// Simulated rate measurement: returns (estimated rate, model σ).
pub fn measure_rate<R: rand::Rng>(rate: f64, m: &MeasurementModel, rng: &mut R) -> Result<(f64, f64)> {
    let times: Vec<f64> = match &m.delays {
        Delays::Adaptive { count, nbar_max } => {
            let t_max = if rate > 0.0 { nbar_max / rate } else { 1.0 };
            (0..*count).map(|i| t_max * i as f64 / (*count - 1) as f64).collect()
        }
        Delays::Fixed { times } => times.clone(),
    };
    let n = m.n_shots;
    let c = m.contrast;
    let blue_dist = Binomial::new(n, c).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut est = Vec::with_capacity(times.len());
    for &t in &times {
        let nbar = m.initial_nbar + rate * t;
        let p_red = c * sideband_ratio(nbar);
        let red = Binomial::new(n, p_red).map_err(|e| Error::Invalid(e.to_string()))?.sample(rng) as f64;
        let blue = (blue_dist.sample(rng) as f64).max(1.0);
        // Cap the ratio just below one so a rare unphysical draw stays finite.
        let ratio = (red / blue).min(1.0 - 0.5 / n as f64);
        // Second-order correction for the convexity of R/(1−R).
        let var_r = ratio_variance(ratio, c, n as f64);
        est.push(ratio / (1.0 - ratio) - var_r / (1.0 - ratio).powi(3));
    }
    let k = times.len() as f64;
    let tm = times.iter().sum::<f64>() / k;
    let ym = est.iter().sum::<f64>() / k;
    let stt: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let slope = times.iter().zip(&est).map(|(t, y)| (t - tm) * (y - ym)).sum::<f64>() / stt;
    // Shot-noise variance of each n̄ estimate, evaluated on the model n̄(t). Using the
    // fitted line instead correlates σ with the fluctuation and biases weighted fits.
    let mut var = 0.0;
    for &t in &times {
        let nb = m.initial_nbar + rate * t;
        let var_r = ratio_variance(sideband_ratio(nb), c, n as f64);
        // Second order in var_r: curvature of R/(1−R) plus the 1/blue expansion.
        let cv_blue = (1.0 - c) / (n as f64 * c);
        let var_r = var_r * (1.0 + 3.0 * cv_blue);
        var += (t - tm).powi(2) * ((nb + 1.0).powi(4) * var_r + 2.0 * (nb + 1.0).powi(6) * var_r * var_r);
    }
    let sigma = var.sqrt() / stt;
    Ok((slope, sigma))
}

/// Generates one synthetic campaign. Point `i` draws from RNG stream `i`.
pub fn generate_dataset(plan: &ExperimentPlan, seed: u64) -> Result<SynthOutput> {
    plan.validate()?;
    let k = plan.true_slope()?;
    let mut rows = Vec::new();
    for (i, (region, s)) in plan.points().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let true_rate = plan.background + k * s;
        let (rate, sigma) = measure_rate(true_rate, &plan.measurement, &mut rng)?;
        let g: f64 = StandardNormal.sample(&mut rng);
        let rel = plan.measurement.psd_rel_sigma;
        let s_rep = (s * (1.0 + rel * g)).max(0.0);
        // A shot-noise σ of exactly zero would make the point unusable for weighting.
        let sigma = sigma.max(1e-12 * true_rate.max(1e-300));
        rows.push(SynthRow {
            region,
            s_true: s,
            true_rate,
            point: HeatingPoint { s: s_rep, s_sigma: rel * s_rep, rate: rate.max(0.0), rate_sigma: sigma },
        });
    }
    let dataset = HeatingDataset { points: rows.iter().map(|r| r.point).collect(), regime: plan.regime, context: plan.context };
    Ok(SynthOutput { dataset, rows })
}

/// Truth values written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub regime: Regime,
    pub seed: u64,
    pub background: f64,
    pub parameter: f64,
    pub parameter_name: String,
    pub slope: f64,
    pub residual_psd: f64,
}

impl TruthSidecar {
    pub fn from_plan(plan: &ExperimentPlan, seed: u64) -> Result<Self> {
        Ok(TruthSidecar {
            regime: plan.regime,
            seed,
            background: plan.background,
            parameter: plan.parameter,
            parameter_name: match plan.regime {
                Regime::Dc => "d_m".into(),
                Regime::Rf => "grad_v2_per_m3".into(),
            },
            slope: plan.true_slope()?,
            residual_psd: plan.residual_psd,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
