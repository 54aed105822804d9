//! One-dimensional secular oscillator driven by a noisy electric field.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::noise_synth::{Band, Synthesizer};
use super::{aggregate, EnsembleResult, RealizationOutcome};
use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::heating::IonSpecies;

#[derive(Clone, Debug, PartialEq)]
pub struct SecularParams {
    pub species: IonSpecies<f64>,
    /// Secular angular frequency, rad/s.
    pub omega: f64,
    /// Field-noise bands, (V/m)²/Hz single-sided.
    pub bands: Vec<Band>,
    /// Run length in secular periods.
    pub periods: f64,
    pub steps_per_period: usize,
    pub n_realizations: usize,
    pub seed: u64,
}

impl SecularParams {
    /// Flat field noise `s_e` over ±50 % around the secular frequency.
    pub fn new(species: IonSpecies<f64>, omega: f64, s_e: f64, n_realizations: usize, seed: u64) -> Result<Self> {
        let f = omega / (2.0 * std::f64::consts::PI);
        Ok(SecularParams {
            species,
            omega,
            bands: vec![Band::around(f, 0.5, s_e)?],
            periods: 200.0,
            steps_per_period: 64,
            n_realizations,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        self.species.validate()?;
        if !(self.omega > 0.0) {
            return Err(Error::non_positive("omega", self.omega));
        }
        if self.periods < 100.0 {
            return Err(Error::Invalid(format!("run must cover at least 100 secular periods, got {}", self.periods)));
        }
        if self.steps_per_period < 20 {
            return Err(Error::Invalid(format!(
                "time step too coarse: {} steps per secular period (minimum 20)",
                self.steps_per_period
            )));
        }
        if self.n_realizations < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: self.n_realizations });
        }
        Ok(())
    }
}

/// Ensemble heating rate of a 1D harmonic oscillator under field noise.
///
/// Each step is a half kick, an exact rotation in phase space, and a half kick,
/// so a noiseless run conserves energy to rounding.
pub fn simulate_secular_heating(p: &SecularParams) -> Result<EnsembleResult> {
    p.validate()?;
    let period = 2.0 * std::f64::consts::PI / p.omega;
    let dt = period / p.steps_per_period as f64;
    let steps = (p.periods * p.steps_per_period as f64).round() as usize;
    let synth = Synthesizer::new(steps, dt)?;
    let qm = p.species.charge / p.species.mass;
    let stepper = Stepper::new(p.omega, dt);
    let quantum = HBAR * p.omega;
    let stride = p.steps_per_period;
    let n_samples = steps / stride + 1;
    let times: Vec<f64> = (0..n_samples).map(|i| (i * stride) as f64 * dt).collect();
    let outcomes: Vec<RealizationOutcome> = (0..p.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(i as u64);
            let field = synth.draw(&p.bands, &mut rng);
            let (mut x, mut v) = (0.0f64, 0.0f64);
            let mut energy = Vec::with_capacity(n_samples);
            energy.push(0.0);
            for n in 0..steps {
                (x, v) = stepper.step(x, v, qm * field[n], qm * field[(n + 1) % steps]);
                if (n + 1) % stride == 0 {
                    energy.push(0.5 * p.species.mass * (v * v + p.omega * p.omega * x * x) / quantum);
                }
            }
            RealizationOutcome::new(&times, energy)
        })
        .collect();
    Ok(aggregate(&times, outcomes))
}

/// Half kick, exact harmonic rotation over `dt`, half kick.
#[derive(Clone, Copy, Debug)]
struct Stepper {
    omega: f64,
    dt: f64,
    c: f64,
    s: f64,
}

impl Stepper {
    fn new(omega: f64, dt: f64) -> Self {
        Stepper { omega, dt, c: (omega * dt).cos(), s: (omega * dt).sin() }
    }

    #[inline]
    fn step(&self, x: f64, v: f64, a_now: f64, a_next: f64) -> (f64, f64) {
        let v = v + 0.5 * a_now * self.dt;
        let xn = self.c * x + self.s * v / self.omega;
        let vn = -self.s * self.omega * x + self.c * v;
        (xn, vn + 0.5 * a_next * self.dt)
    }
}

/// State after `steps` steps of the oscillator integrator from rest under the
/// external acceleration `accel(t)`. Exposed for convergence checks.
pub fn forced_final_state(omega: f64, dt: f64, steps: usize, accel: impl Fn(f64) -> f64) -> (f64, f64) {
    let stepper = Stepper::new(omega, dt);
    let (mut x, mut v) = (0.0, 0.0);
    for n in 0..steps {
        (x, v) = stepper.step(x, v, accel(n as f64 * dt), accel((n + 1) as f64 * dt));
    }
    (x, v)
}

/// Energy of a noiseless run relative to its start, after `periods` periods from (x0, 0).
pub fn free_energy_drift(omega: f64, periods: usize, steps_per_period: usize) -> f64 {
    let dt = 2.0 * std::f64::consts::PI / omega / steps_per_period as f64;
    let (c, s) = ((omega * dt).cos(), (omega * dt).sin());
    let (mut x, mut v) = (1e-6f64, 0.0f64);
    let e0 = omega * omega * x * x;
    for _ in 0..periods * steps_per_period {
        let xn = c * x + s * v / omega;
        v = -s * omega * x + c * v;
        x = xn;
    }
    ((v * v + omega * omega * x * x) - e0).abs() / e0
}
