//! Stochastic ion-dynamics checks of the heating-rate formulas.
//!
//! Realizations are independent and seeded from `(seed, index)`, so ensemble
//! results do not depend on thread scheduling.

pub mod noise_synth;
pub mod rf;
pub mod secular;
pub mod stats;

use std::io::Write;

pub use noise_synth::{periodogram, Band, Synthesizer};
pub use rf::{simulate_drive_response, simulate_rf_noise_heating, DriveParams, RfModel, RfNoiseParams};
pub use secular::{forced_final_state, free_energy_drift, simulate_secular_heating, SecularParams};

use crate::error::Result;

/// Energy trace (quanta) of one realization and its fitted slope.
#[derive(Clone, Debug)]
pub(crate) struct RealizationOutcome {
    energy: Vec<f64>,
    slope: f64,
}

impl RealizationOutcome {
    pub(crate) fn new(times: &[f64], energy: Vec<f64>) -> Self {
        let skip = times.len() / 10;
        let slope = stats::slope(&times[skip..], &energy[skip..]);
        RealizationOutcome { energy, slope }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    /// quanta/s
    pub rate: f64,
    pub statistical_sigma: f64,
    pub n_realizations: usize,
    /// R² of the straight-line fit to the mean energy after the transient.
    pub linearity: f64,
    /// Per-realization slopes, quanta/s, in realization order.
    pub slopes: Vec<f64>,
    /// Sample times (s) and ensemble-mean energy (quanta).
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
}

impl EnsembleResult {
    /// Writes `t_s,mean_energy_quanta`.
    pub fn trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_s", "mean_energy_quanta"])?;
        for (t, e) in self.times.iter().zip(&self.mean_energy) {
            wr.write_record([format!("{t:e}"), format!("{e:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn aggregate(times: &[f64], outcomes: Vec<RealizationOutcome>) -> EnsembleResult {
    let n = outcomes.len();
    let mut mean = vec![0.0; times.len()];
    for o in &outcomes {
        for (m, e) in mean.iter_mut().zip(&o.energy) {
            *m += e;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let slopes: Vec<f64> = outcomes.iter().map(|o| o.slope).collect();
    let (rate, sd) = stats::mean_std(&slopes);
    let skip = times.len() / 10;
    EnsembleResult {
        rate,
        statistical_sigma: sd / (n as f64).sqrt(),
        n_realizations: n,
        linearity: stats::r_squared(&times[skip..], &mean[skip..]),
        slopes,
        times: times.to_vec(),
        mean_energy: mean,
    }
}
