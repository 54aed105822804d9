use anyhow::{bail, Result};
use ionheat::oracle::rf::{drive_sweep, run_noise};
use ionheat::oracle::{simulate_secular_heating, DriveParams, EnsembleResult, RfModel, RfNoiseParams, SecularParams};
use ionheat::trap::find_equilibrium;

use crate::config::RunConfig;
use crate::output::{num, Output};

const TAU: f64 = std::f64::consts::TAU;

pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let o = &cfg.oracle;
    let mut summary: Vec<(&str, f64)> = Vec::new();
    match o.kind.as_str() {
        "secular" => {
            let mut p = SecularParams::new(cfg.species()?, TAU * o.frequency, o.field_psd, o.realizations, cfg.seed)?;
            p.periods = o.periods;
            p.steps_per_period = o.steps_per_period;
            let r = simulate_secular_heating(&p)?;
            let expected = ionheat::heating::field_noise_coefficient(&p.species, p.omega) * o.field_psd;
            trace(&mut out, &r)?;
            summary.extend(ensemble_rows(&r));
            summary.push(("expected_rate", expected));
            out.line(format!("secular oscillator at {:.4} MHz, field PSD {:.3e} (V/m)^2/Hz", o.frequency / 1e6, o.field_psd));
            out.line(format!("rate {:.4} +- {:.4} quanta/s, formula {expected:.4}", r.rate, r.statistical_sigma));
        }
        "rf_noise" => {
            let layout = cfg.layout()?;
            let (model, _) = RfModel::displaced(&layout, &cfg.trap_config()?, o.displacement)?;
            let mut p = RfNoiseParams::new(o.displacement, o.per_sideband_psd, o.realizations, cfg.seed);
            p.sidebands = o.sidebands;
            p.steps_per_rf_period = o.steps_per_rf_period;
            let r = run_noise(&model, &p)?;
            trace(&mut out, &r.ensemble)?;
            summary.extend(ensemble_rows(&r.ensemble));
            summary.extend([
                ("expected_rate", r.expected),
                ("axial_gradient", r.axial_gradient),
                ("axial_frequency_hz", r.axial_frequency / TAU),
                ("mathieu_q", r.mathieu_q),
            ]);
            out.line(format!("RF noise {:.3e} V^2/Hz per sideband, gradient {:.4e} V^2/m^3", o.per_sideband_psd, r.axial_gradient));
            out.line(format!("rate {:.4} +- {:.4} quanta/s, formula {:.4}", r.ensemble.rate, r.ensemble.statistical_sigma, r.expected));
        }
        "drive" => {
            let layout = cfg.layout()?;
            let config = cfg.trap_config()?;
            let eq = find_equilibrium(&layout, &config)?;
            let model = RfModel::at(&layout, &config, eq.position)?;
            let w = model.operating_point.axial_frequency();
            if o.drive_points < 2 {
                bail!("config: oracle.drive_points must be at least 2");
            }
            let det: Vec<f64> = (0..o.drive_points)
                .map(|i| o.drive_from + (o.drive_to - o.drive_from) * i as f64 / (o.drive_points - 1) as f64)
                .collect();
            let omegas: Vec<f64> = det.iter().map(|d| model.rf_omega + d * w).collect();
            let mut p = DriveParams::new(0.0, o.drive_amplitude);
            p.steps_per_rf_period = o.steps_per_rf_period;
            let amps = drive_sweep(&model, &omegas, &p)?;
            out.csv(
                "drive.csv",
                &["detuning_over_axial", "drive_hz", "amplitude_m"],
                det.iter().zip(&omegas).zip(&amps).map(|((d, wd), a)| vec![num(*d), num(wd / TAU), num(*a)]),
            )?;
            let peak = (0..amps.len()).max_by(|&a, &b| amps[a].total_cmp(&amps[b])).expect("at least two points");
            summary.extend([
                ("peak_detuning_over_axial", det[peak]),
                ("peak_amplitude_m", amps[peak]),
                ("axial_gradient", model.operating_point.axial_gradient()),
            ]);
            out.line(format!("drive {:.3e} V swept over Omega + ({}..{}) omega_axial", o.drive_amplitude, o.drive_from, o.drive_to));
            out.line(format!("largest excitation {:.4e} m at Omega + {:.4} omega_axial", amps[peak], det[peak]));
        }
        other => bail!("config: oracle.kind must be secular, rf_noise or drive, got `{other}`"),
    }
    out.csv("oracle.csv", &["quantity", "value"], summary.iter().map(|(k, v)| vec![k.to_string(), num(*v)]))?;
    out.finish("oracle")
}

fn trace(out: &mut Output, r: &EnsembleResult) -> Result<()> {
    let mut buf = Vec::new();
    r.trace_csv(&mut buf)?;
    out.write("oracle_trace.csv", &buf)?;
    out.line(format!("{} realizations, mean-energy R^2 {:.4}", r.n_realizations, r.linearity));
    Ok(())
}

fn ensemble_rows(r: &EnsembleResult) -> [(&'static str, f64); 4] {
    [
        ("rate", r.rate),
        ("statistical_sigma", r.statistical_sigma),
        ("realizations", r.n_realizations as f64),
        ("linearity_r2", r.linearity),
    ]
}
