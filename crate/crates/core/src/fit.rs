//! Weighted straight-line fits of heating rate against electrode noise PSD.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heating::{field_noise_coefficient, rf_coefficient, Estimate, IonSpecies};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dc,
    Rf,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Dc => "dc",
            Regime::Rf => "rf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "dc" => Ok(Regime::Dc),
            "rf" => Ok(Regime::Rf),
            other => Err(Error::Parse(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HeatingPoint<T> {
    /// Total PSD on the relevant electrode(s), V²/Hz.
    pub s: T,
    pub s_sigma: T,
    /// quanta/s
    pub rate: T,
    pub rate_sigma: T,
}

/// Physical context needed to turn a slope into D or a gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitContext<T> {
    pub species: IonSpecies<T>,
    /// Secular frequency, rad/s.
    pub omega: T,
    /// RF drive frequency (rad/s) and amplitude (V); required for the RF regime.
    pub rf: Option<(T, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatingDataset<T> {
    pub points: Vec<HeatingPoint<T>>,
    pub regime: Regime,
    pub context: FitContext<T>,
}

impl<T: Real> HeatingDataset<T> {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.s >= T::zero() && p.rate >= T::zero()) {
                return Err(Error::Invalid("PSDs and rates must be non-negative".into()));
            }
            if !(p.rate_sigma > T::zero()) || !(p.s_sigma >= T::zero()) {
                return Err(Error::Invalid("rate uncertainties must be positive".into()));
            }
        }
        Ok(())
    }

    /// Columns: s_v2_per_hz, s_sigma, rate_quanta_per_s, rate_sigma, regime.
    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s_v2_per_hz", "s_sigma", "rate_quanta_per_s", "rate_sigma", "regime"])?;
        for p in &self.points {
            wr.write_record([
                format!("{:e}", p.s),
                format!("{:e}", p.s_sigma),
                format!("{:e}", p.rate),
                format!("{:e}", p.rate_sigma),
                self.regime.name().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads points of the requested regime; rows of other regimes are skipped.
    pub fn from_csv<R: Read>(r: R, regime: Regime, context: FitContext<T>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
        };
        let (cs, css, cr, crs) = (col("s_v2_per_hz")?, col("s_sigma")?, col("rate_quanta_per_s")?, col("rate_sigma")?);
        let creg = headers.iter().position(|h| h.trim() == "regime");
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if let Some(c) = creg {
                if Regime::parse(&rec[c])? != regime {
                    continue;
                }
            }
            let num = |i: usize| -> Result<T> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|e| Error::Parse(format!("bad number `{}`: {e}", &rec[i])))
            };
            points.push(HeatingPoint { s: num(cs)?, s_sigma: num(css)?, rate: num(cr)?, rate_sigma: num(crs)? });
        }
        let ds = HeatingDataset { points, regime, context };
        ds.validate()?;
        Ok(ds)
    }
}

/// Physical parameter implied by the fitted slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case")]
pub enum Derived<T> {
    /// Characteristic distance, m.
    D(Estimate<T>),
    /// Pseudopotential gradient, V²/m³.
    Grad(Estimate<T>),
    /// Slope not positive: no finite D, or no gradient estimate.
    NoCoupling,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitResult<T> {
    pub regime: Regime,
    /// quanta/s
    pub background: Estimate<T>,
    /// quanta/s per V²/Hz
    pub slope: Estimate<T>,
    pub derived: Derived<T>,
    /// Covariance of (background, slope).
    pub covariance: [[T; 2]; 2],
    pub chi2_per_dof: T,
    /// True when the unconstrained background was negative and was fixed at zero.
    pub background_clamped: bool,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fold PSD uncertainties into the weights (two effective-variance passes).
    pub x_errors: bool,
    /// Inflate the covariance by chi²/dof when it exceeds one.
    pub scale_by_chi2: bool,
}

impl FitOptions {
    pub fn standard() -> Self {
        FitOptions { x_errors: true, scale_by_chi2: false }
    }
}

struct Line<T> {
    b: T,
    k: T,
    cov: [[T; 2]; 2],
    clamped: bool,
}

/// Weighted fit of y = b + k x on pre-scaled data.
fn weighted_line<T: Real>(x: &[T], y: &[T], w: &[T]) -> Result<Line<T>> {
    let sw: T = w.iter().copied().sum();
    let xm = x.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>() / sw;
    let ym = y.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>() / sw;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for i in 0..x.len() {
        let dx = x[i] - xm;
        sxx += w[i] * dx * dx;
        // Referenced to y[0] so exactly flat data give an exactly zero slope.
        sxy += w[i] * dx * (y[i] - y[0]);
    }
    if !(sxx > T::zero()) {
        return Err(Error::Singular("all PSD values are equal".into()));
    }
    let k = sxy / sxx;
    let b = ym - k * xm;
    if b >= T::zero() {
        let var_k = T::one() / sxx;
        let cov = [[T::one() / sw + xm * xm * var_k, -xm * var_k], [-xm * var_k, var_k]];
        return Ok(Line { b, k, cov, clamped: false });
    }
    // Refit through the origin.
    let mut s2 = T::zero();
    let mut sy = T::zero();
    for i in 0..x.len() {
        s2 += w[i] * x[i] * x[i];
        sy += w[i] * x[i] * y[i];
    }
    if !(s2 > T::zero()) {
        return Err(Error::Singular("all PSD values are zero".into()));
    }
    Ok(Line { b: T::zero(), k: sy / s2, cov: [[T::zero(), T::zero()], [T::zero(), T::one() / s2]], clamped: true })
}

fn fit_line<T: Real>(dataset: &HeatingDataset<T>, opts: &FitOptions) -> Result<(Line<T>, T, T, T)> {
    let n = dataset.points.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    dataset.validate()?;
    // Scale to O(1) so sums of squares stay in range for f32.
    let xs = dataset.points.iter().map(|p| p.s).fold(T::zero(), T::max);
    let ys = dataset.points.iter().map(|p| p.rate_sigma).fold(T::zero(), T::max);
    if !(xs > T::zero()) {
        return Err(Error::Singular("all PSD values are zero".into()));
    }
    let x: Vec<T> = dataset.points.iter().map(|p| p.s / xs).collect();
    let y: Vec<T> = dataset.points.iter().map(|p| p.rate / ys).collect();
    let sy: Vec<T> = dataset.points.iter().map(|p| p.rate_sigma / ys).collect();
    let sx: Vec<T> = dataset.points.iter().map(|p| p.s_sigma / xs).collect();
    let mut w: Vec<T> = sy.iter().map(|s| T::one() / (*s * *s)).collect();
    let mut line = weighted_line(&x, &y, &w)?;
    if opts.x_errors {
        for _ in 0..2 {
            let k = line.k;
            w = sy.iter().zip(&sx).map(|(a, b)| T::one() / (*a * *a + k * k * *b * *b)).collect();
            line = weighted_line(&x, &y, &w)?;
        }
    }
    let chi2: T = (0..n)
        .map(|i| {
            let r = y[i] - line.b - line.k * x[i];
            w[i] * r * r
        })
        .sum();
    let dof = if line.clamped { n - 1 } else { n - 2 };
    let chi2_dof = chi2 / T::of(dof as f64);
    Ok((line, chi2_dof, xs, ys))
}

fn finish<T: Real>(dataset: &HeatingDataset<T>, opts: &FitOptions) -> Result<FitResult<T>> {
    let (line, chi2_dof, xs, ys) = fit_line(dataset, opts)?;
    let inflate = if opts.scale_by_chi2 && chi2_dof > T::one() { chi2_dof } else { T::one() };
    let kscale = ys / xs;
    let cov = [
        [line.cov[0][0] * ys * ys * inflate, line.cov[0][1] * ys * kscale * inflate],
        [line.cov[1][0] * ys * kscale * inflate, line.cov[1][1] * kscale * kscale * inflate],
    ];
    let background = Estimate::new(line.b * ys, cov[0][0].sqrt());
    let slope = Estimate::new(line.k * kscale, cov[1][1].sqrt());
    let derived = derive(dataset, slope)?;
    Ok(FitResult {
        regime: dataset.regime,
        background,
        slope,
        derived,
        covariance: cov,
        chi2_per_dof: chi2_dof,
        background_clamped: line.clamped,
        n_points: dataset.points.len(),
    })
}

/// Slope coefficient per unit of the derived parameter: `k = c / D²` or `k = c · grad²`.
pub fn slope_coefficient<T: Real>(regime: Regime, context: &FitContext<T>) -> Result<T> {
    match regime {
        Regime::Dc => {
            if !(context.omega > T::zero()) {
                return Err(Error::non_positive("omega", context.omega.as_f64()));
            }
            Ok(field_noise_coefficient(&context.species, context.omega))
        }
        Regime::Rf => {
            let (rf_omega, v0) = context
                .rf
                .ok_or_else(|| Error::Invalid("RF fit needs the drive frequency and amplitude".into()))?;
            rf_coefficient(&context.species, context.omega, rf_omega, v0)
        }
    }
}

fn derive<T: Real>(dataset: &HeatingDataset<T>, slope: Estimate<T>) -> Result<Derived<T>> {
    let c = slope_coefficient(dataset.regime, &dataset.context)?;
    let k = slope.value;
    let two = T::of(2.0);
    Ok(match dataset.regime {
        Regime::Dc if k > T::zero() => {
            let d = (c / k).sqrt();
            Derived::D(Estimate::new(d, d * slope.sigma / (two * k)))
        }
        Regime::Rf if k > T::zero() => {
            let g = (k / c).sqrt();
            Derived::Grad(Estimate::new(g, g * slope.sigma / (two * k)))
        }
        // A zero slope means zero gradient; the linearized σ is undefined there,
        // so report the gradient corresponding to a one-σ slope instead.
        Regime::Rf if k == T::zero() => Derived::Grad(Estimate::new(T::zero(), (slope.sigma / c).sqrt())),
        _ => Derived::NoCoupling,
    })
}

fn check_regime<T: Real>(dataset: &HeatingDataset<T>, regime: Regime) -> Result<()> {
    if dataset.regime == regime {
        Ok(())
    } else {
        Err(Error::Invalid(format!("dataset regime is {}, expected {}", dataset.regime.name(), regime.name())))
    }
}

/// Fits `rate = n_bg + k·S` with `k = q²/(4mħωD²)`.
pub fn fit_dc<T: Real>(dataset: &HeatingDataset<T>) -> Result<FitResult<T>> {
    fit_dc_with(dataset, &FitOptions::standard())
}

pub fn fit_dc_with<T: Real>(dataset: &HeatingDataset<T>, opts: &FitOptions) -> Result<FitResult<T>> {
    check_regime(dataset, Regime::Dc)?;
    finish(dataset, opts)
}

/// Fits `rate = n_bg + k·S` with `k = q⁴ grad²/(16 m³ ħ Ω⁴ ω V₀²)`.
pub fn fit_rf<T: Real>(dataset: &HeatingDataset<T>) -> Result<FitResult<T>> {
    fit_rf_with(dataset, &FitOptions::standard())
}

pub fn fit_rf_with<T: Real>(dataset: &HeatingDataset<T>, opts: &FitOptions) -> Result<FitResult<T>> {
    check_regime(dataset, Regime::Rf)?;
    finish(dataset, opts)
}

/// Dispatches on the dataset regime.
pub fn fit<T: Real>(dataset: &HeatingDataset<T>, opts: &FitOptions) -> Result<FitResult<T>> {
    finish(dataset, opts)
}
