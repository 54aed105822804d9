//! RF-resolved ion dynamics with noise or a probe tone on the RF electrode.
//!
//! A noiseless reference run `r_d(t)` is integrated first with the exact RF
//! field of the layout and the static field linearized about the equilibrium
//! `r0`. The response `δ` to an extra RF-electrode voltage `n(t)` then follows
//! the variational equation about that run,
//!
//! `m δ̈ = q [ V₀ cos Ωt J(r_d) δ + G δ + n (e(r_d) + J₀ δ) ]`,
//!
//! with `e` the RF field per volt and `J` its Jacobian. Both are integrated
//! with velocity Verlet at a fixed fraction of the RF period.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::noise_synth::{Band, Synthesizer};
use super::{aggregate, EnsembleResult, RealizationOutcome};
use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::geometry::ElectrodeLayout;
use crate::heating::{heating_rate_rf, sideband_sum, IonSpecies, Sidebands};
use crate::fields::{basis_jacobian, basis_solution};
use crate::num::{add, dot, mat_vec, Mat3, Vec3};
use crate::trap::{find_equilibrium, find_rf_null, stray_field_for_position, Trap, TrapConfig, TrapOperatingPoint};

/// Largest Mathieu q accepted before a run is refused.
const MAX_MATHIEU_Q: f64 = 0.9;

/// Linearized trap about a reference point.
#[derive(Clone, Debug)]
pub struct RfModel {
    pub species: IonSpecies<f64>,
    pub rf_omega: f64,
    pub rf_amplitude: f64,
    pub position: Vec3<f64>,
    /// RF field per volt at `position`, 1/m.
    pub e0: Vec3<f64>,
    /// Its Jacobian, 1/m².
    pub j: Mat3<f64>,
    /// Static field (DC + stray) at `position`, V/m.
    pub static_field: Vec3<f64>,
    /// Its Jacobian, V/m².
    pub g: Mat3<f64>,
    pub operating_point: TrapOperatingPoint,
    layout: ElectrodeLayout<f64>,
    rf_group: String,
}

impl RfModel {
    /// Linearizes `config` about `point`, which should be an equilibrium.
    pub fn at(layout: &ElectrodeLayout<f64>, config: &TrapConfig, point: Vec3<f64>) -> Result<Self> {
        let trap = Trap::new(layout, config)?;
        let (e0, j) = trap.rf_basis(point)?;
        let (static_field, g) = trap.static_field(point)?;
        let op = trap.operating_point_at(point)?;
        let rf_group = trap.rf_group().to_string();
        Ok(RfModel {
            species: config.species,
            rf_omega: config.rf_omega,
            rf_amplitude: config.rf_amplitude,
            position: point,
            e0,
            j,
            static_field,
            g,
            operating_point: op,
            layout: layout.clone(),
            rf_group,
        })
    }

    /// Linearizes about the equilibrium of `config`.
    pub fn at_equilibrium(layout: &ElectrodeLayout<f64>, config: &TrapConfig) -> Result<Self> {
        let op = find_equilibrium(layout, config)?;
        Self::at(layout, config, op.position)
    }

    /// Places the ion at `displacement` from the RF null by choosing the stray field.
    /// Returns the model and the config carrying that stray field.
    pub fn displaced(
        layout: &ElectrodeLayout<f64>,
        config: &TrapConfig,
        displacement: Vec3<f64>,
    ) -> Result<(Self, TrapConfig)> {
        let bare = config.clone().with_stray_field([0.0; 3]);
        let eq = find_equilibrium(layout, &bare)?;
        let null = find_rf_null(layout, eq.position)?;
        let point = add(null, displacement);
        let stray = stray_field_for_position(layout, &bare, point)?;
        let cfg = bare.with_stray_field(stray);
        Ok((Self::at(layout, &cfg, point)?, cfg))
    }

    /// Largest Mathieu q of the RF field curvature.
    pub fn mathieu_q(&self) -> f64 {
        let m = nalgebra::Matrix3::from_fn(|a, b| self.j[a][b]);
        let lam = m.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        2.0 * self.species.charge * self.rf_amplitude * lam / (self.species.mass * self.rf_omega.powi(2))
    }

    /// Pseudopotential-gradient heating predicted for sideband-summed noise `s_rf`.
    pub fn expected_rate(&self, s_rf: f64) -> Result<f64> {
        let op = &self.operating_point;
        heating_rate_rf(&self.species, op.axial_frequency(), self.rf_omega, self.rf_amplitude, op.axial_gradient(), s_rf)
    }

    fn check(&self, steps_per_rf_period: usize) -> Result<()> {
        if steps_per_rf_period < 50 {
            return Err(Error::Invalid(format!(
                "time step too coarse: {steps_per_rf_period} steps per RF period (minimum 50)"
            )));
        }
        let q = self.mathieu_q();
        if !(q < MAX_MATHIEU_Q) {
            return Err(Error::Unstable(format!("Mathieu q = {q:.3} exceeds {MAX_MATHIEU_Q}")));
        }
        Ok(())
    }
}

/// Precomputed per-step data of the noiseless run, shared by all runs on one model.
struct Drive {
    dt: f64,
    steps: usize,
    stride: usize,
    /// `q/m (V₀ cos Ωtₙ J(r_d) + G)`
    restoring: Vec<Mat3<f64>>,
    /// `e(r_d(tₙ))`
    coupling: Vec<Vec3<f64>>,
    qm: f64,
    axis: Vec3<f64>,
    omega_a: f64,
}

impl Drive {
    fn new(model: &RfModel, steps_per_rf_period: usize, axial_periods: f64) -> Result<Self> {
        model.check(steps_per_rf_period)?;
        let op = &model.operating_point;
        let omega_a = op.axial_frequency();
        let t_rf = 2.0 * std::f64::consts::PI / model.rf_omega;
        let dt = t_rf / steps_per_rf_period as f64;
        let rf_periods = (axial_periods * model.rf_omega / omega_a).ceil() as usize;
        let steps = rf_periods * steps_per_rf_period;
        let qm = model.species.charge / model.species.mass;
        let v0 = model.rf_amplitude;
        let r0 = model.position;
        let rf = |n: usize| v0 * (model.rf_omega * n as f64 * dt).cos();
        let field = |d: Vec3<f64>| -> Result<(Vec3<f64>, Mat3<f64>)> {
            let p = add(r0, d);
            let (_, e) = basis_solution(&model.layout, &model.rf_group, p)?;
            Ok((e, basis_jacobian(&model.layout, &model.rf_group, p)?))
        };
        let accel = |d: Vec3<f64>, e: Vec3<f64>, n: usize| -> Vec3<f64> {
            let gd = mat_vec(&model.g, d);
            [0, 1, 2].map(|i| qm * (rf(n) * e[i] + model.static_field[i] + gd[i]))
        };
        // Started on the micromotion orbit.
        let a0 = qm * v0 / model.rf_omega.powi(2);
        let mut x = model.e0.map(|c| -a0 * c);
        let mut v = [0.0; 3];
        let mut restoring = Vec::with_capacity(steps + 1);
        let mut coupling = Vec::with_capacity(steps + 1);
        let (mut e, mut j) = field(x)?;
        let mut a = accel(x, e, 0);
        for n in 0..=steps {
            let f = rf(n);
            restoring.push([0, 1, 2].map(|r| [0, 1, 2].map(|c| qm * (f * j[r][c] + model.g[r][c]))));
            coupling.push(e);
            if n == steps {
                break;
            }
            for i in 0..3 {
                x[i] += v[i] * dt + 0.5 * a[i] * dt * dt;
            }
            if !x.iter().all(|c| c.is_finite() && c.abs() < 1e-4) {
                return Err(Error::Unstable("noiseless trajectory diverged".into()));
            }
            (e, j) = field(x)?;
            let an = accel(x, e, n + 1);
            for i in 0..3 {
                v[i] += 0.5 * (a[i] + an[i]) * dt;
            }
            a = an;
        }
        Ok(Drive { dt, steps, stride: steps_per_rf_period, restoring, coupling, qm, axis: op.axial_axis(), omega_a })
    }

    fn sample_times(&self) -> Vec<f64> {
        (0..=self.steps / self.stride).map(|k| (k * self.stride) as f64 * self.dt).collect()
    }

    /// Integrates the response to the extra RF-electrode voltage `extra` (one value per step,
    /// indices wrap). Returns axial (x, v) once per RF period.
    fn respond(&self, model: &RfModel, extra: &[f64]) -> Result<Vec<(f64, f64)>> {
        let qm = self.qm;
        let m1 = model.j.map(|r| r.map(|c| qm * c));
        let len = extra.len();
        let accel = |x: Vec3<f64>, n: usize| -> Vec3<f64> {
            let nv = extra[n % len];
            let rx = mat_vec(&self.restoring[n], x);
            let jx = mat_vec(&m1, x);
            let c = self.coupling[n];
            [0, 1, 2].map(|i| rx[i] + nv * (jx[i] + qm * c[i]))
        };
        let dt = self.dt;
        let mut x = [0.0; 3];
        let mut v = [0.0; 3];
        let mut a = accel(x, 0);
        let mut out = Vec::with_capacity(self.steps / self.stride + 1);
        out.push((0.0, 0.0));
        for n in 0..self.steps {
            for i in 0..3 {
                x[i] += v[i] * dt + 0.5 * a[i] * dt * dt;
            }
            let an = accel(x, n + 1);
            for i in 0..3 {
                v[i] += 0.5 * (a[i] + an[i]) * dt;
            }
            a = an;
            if (n + 1) % self.stride == 0 {
                if !x.iter().all(|c| c.is_finite() && c.abs() < 1e-3) {
                    return Err(Error::Unstable("trajectory diverged".into()));
                }
                out.push((dot(self.axis, x), dot(self.axis, v)));
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RfNoiseParams {
    /// Ion offset from the RF null, m.
    pub displacement: Vec3<f64>,
    /// PSD in each noisy sideband, V²/Hz.
    pub per_sideband_psd: f64,
    pub sidebands: Sidebands,
    /// Half-width of each noise band relative to the axial frequency.
    pub band_halfwidth: f64,
    pub axial_periods: f64,
    pub steps_per_rf_period: usize,
    pub n_realizations: usize,
    pub seed: u64,
}

impl RfNoiseParams {
    pub fn new(displacement: Vec3<f64>, per_sideband_psd: f64, n_realizations: usize, seed: u64) -> Self {
        RfNoiseParams {
            displacement,
            per_sideband_psd,
            sidebands: Sidebands::Both,
            band_halfwidth: 0.1,
            axial_periods: 120.0,
            steps_per_rf_period: 64,
            n_realizations,
            seed,
        }
    }
}

/// Oracle result together with the formula prediction for the same model.
#[derive(Clone, Debug)]
pub struct RfNoiseOutcome {
    pub ensemble: EnsembleResult,
    pub expected: f64,
    pub axial_gradient: f64,
    pub axial_frequency: f64,
    pub mathieu_q: f64,
}

/// Axial heating from RF-amplitude noise near `Ω ± ω_axial`.
pub fn simulate_rf_noise_heating(
    layout: &ElectrodeLayout<f64>,
    config: &TrapConfig,
    p: &RfNoiseParams,
) -> Result<RfNoiseOutcome> {
    if p.n_realizations < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: p.n_realizations });
    }
    if !(p.axial_periods >= 100.0) {
        return Err(Error::Invalid("run must cover at least 100 axial periods".into()));
    }
    let (model, _) = RfModel::displaced(layout, config, p.displacement)?;
    run_noise(&model, p)
}

/// Like [`simulate_rf_noise_heating`] on an already built model.
pub fn run_noise(model: &RfModel, p: &RfNoiseParams) -> Result<RfNoiseOutcome> {
    let drive = Drive::new(model, p.steps_per_rf_period, p.axial_periods)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let f_rf = model.rf_omega / two_pi;
    let f_a = drive.omega_a / two_pi;
    let hw = p.band_halfwidth * f_a;
    let mut bands = vec![Band::new(f_rf + f_a - hw, f_rf + f_a + hw, p.per_sideband_psd)?];
    if p.sidebands == Sidebands::Both {
        bands.push(Band::new(f_rf - f_a - hw, f_rf - f_a + hw, p.per_sideband_psd)?);
    }
    let synth = Synthesizer::new(drive.steps, drive.dt)?;
    let times = drive.sample_times();
    let quantum = HBAR * drive.omega_a;
    let m = model.species.mass;
    let outcomes: Vec<Result<RealizationOutcome>> = (0..p.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(i as u64);
            let noise = synth.draw(&bands, &mut rng);
            let trace = drive.respond(model, &noise)?;
            let energy = trace
                .iter()
                .map(|(x, v)| 0.5 * m * (v * v + drive.omega_a.powi(2) * x * x) / quantum)
                .collect();
            Ok(RealizationOutcome::new(&times, energy))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let s_sum = sideband_sum(p.per_sideband_psd, p.sidebands);
    Ok(RfNoiseOutcome {
        ensemble: aggregate(&times, outcomes),
        expected: model.expected_rate(s_sum)?,
        axial_gradient: model.operating_point.axial_gradient(),
        axial_frequency: drive.omega_a,
        mathieu_q: model.mathieu_q(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveParams {
    /// Probe tone angular frequency, rad/s.
    pub drive_omega: f64,
    /// Probe tone amplitude on the RF electrode, V.
    pub amplitude: f64,
    pub axial_periods: f64,
    pub steps_per_rf_period: usize,
}

impl DriveParams {
    pub fn new(drive_omega: f64, amplitude: f64) -> Self {
        DriveParams { drive_omega, amplitude, axial_periods: 120.0, steps_per_rf_period: 64 }
    }
}

/// Largest axial excitation amplitude (m) caused by a coherent tone on the RF electrode,
/// at the equilibrium of `config`.
pub fn simulate_drive_response(layout: &ElectrodeLayout<f64>, config: &TrapConfig, p: &DriveParams) -> Result<f64> {
    let model = RfModel::at_equilibrium(layout, config)?;
    drive_response(&model, p)
}

/// Like [`simulate_drive_response`] on an already built model.
pub fn drive_response(model: &RfModel, p: &DriveParams) -> Result<f64> {
    drive_sweep(model, &[p.drive_omega], p).map(|v| v[0])
}

/// Excitation amplitudes for several probe frequencies; `p.drive_omega` is ignored.
pub fn drive_sweep(model: &RfModel, drive_omegas: &[f64], p: &DriveParams) -> Result<Vec<f64>> {
    let drive = Drive::new(model, p.steps_per_rf_period, p.axial_periods)?;
    let w = drive.omega_a;
    drive_omegas
        .par_iter()
        .map(|&wd| {
            let tone: Vec<f64> = (0..=drive.steps).map(|n| p.amplitude * (wd * n as f64 * drive.dt).cos()).collect();
            let trace = drive.respond(model, &tone)?;
            Ok(trace.iter().map(|(x, v)| (x * x + (v / w).powi(2)).sqrt()).fold(0.0, f64::max))
        })
        .collect()
}
