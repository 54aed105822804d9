use anyhow::{anyhow, Result};
use ionheat::fit::{fit, Derived, FitContext, FitOptions, HeatingDataset, Regime};
use ionheat::heating::{intrinsic_contribution, intrinsic_contribution_mc};

use crate::config::RunConfig;
use crate::output::{num, Output};

pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let f = &cfg.fit;
    let path = f.data.as_ref().ok_or_else(|| anyhow!("config: fit.data (or --data) is required"))?;
    let regime = Regime::parse(&f.regime).map_err(|e| anyhow!("config: fit.regime: {e}"))?;
    let trap = cfg.trap_config()?;
    let context = FitContext {
        species: trap.species,
        omega: std::f64::consts::TAU * f.axial_frequency,
        rf: (regime == Regime::Rf).then_some((trap.rf_omega, trap.rf_amplitude)),
    };
    let file = std::fs::File::open(cfg.resolve(path)).map_err(|e| anyhow!("fit.data {}: {e}", path.display()))?;
    let ds = HeatingDataset::from_csv(file, regime, context)?;
    let r = fit(&ds, &FitOptions { x_errors: f.x_errors, scale_by_chi2: f.scale_by_chi2 })?;

    let mut rows = vec![
        vec!["background".into(), num(r.background.value), num(r.background.sigma)],
        vec!["slope".into(), num(r.slope.value), num(r.slope.sigma)],
    ];
    match r.derived {
        Derived::D(e) => rows.push(vec!["d_m".into(), num(e.value), num(e.sigma)]),
        Derived::Grad(e) => rows.push(vec!["grad_v2_per_m3".into(), num(e.value), num(e.sigma)]),
        Derived::NoCoupling => rows.push(vec!["no_coupling".into(), "1".into(), "0".into()]),
    }
    rows.push(vec!["cov_background_slope".into(), num(r.covariance[0][1]), String::new()]);
    rows.push(vec!["chi2_per_dof".into(), num(r.chi2_per_dof), String::new()]);
    rows.push(vec!["n_points".into(), r.n_points.to_string(), String::new()]);
    rows.push(vec!["background_clamped".into(), u8::from(r.background_clamped).to_string(), String::new()]);

    out.line(format!("{} fit of {} points", regime.name(), r.n_points));
    out.line(format!("background {:.4} +- {:.4} quanta/s", r.background.value, r.background.sigma));
    out.line(format!("slope {:.5e} +- {:.2e} quanta/s per V^2/Hz", r.slope.value, r.slope.sigma));
    match r.derived {
        Derived::D(e) => out.line(format!("D = {:.3} +- {:.3} mm", e.value * 1e3, e.sigma * 1e3)),
        Derived::Grad(e) => out.line(format!("axial gradient = {:.4e} +- {:.2e} V^2/m^3", e.value, e.sigma)),
        Derived::NoCoupling => out.line("slope is not positive: no coupling"),
    }
    out.line(format!("chi2/dof {:.3}", r.chi2_per_dof));
    if r.background_clamped {
        out.line("background was negative and fixed at zero");
    }

    if let Some(s) = f.residual_psd {
        let c = intrinsic_contribution(&r, s, f.residual_sigma)?;
        rows.push(vec!["residual_contribution".into(), num(c.value), num(c.sigma)]);
        out.line(format!("contribution at {s:.3e} V^2/Hz: {:.4} +- {:.4} quanta/s", c.value, c.sigma));
        if f.mc_samples > 0 {
            let [lo, mid, hi] = intrinsic_contribution_mc(&r, s, f.residual_sigma, f.mc_samples, cfg.seed)?;
            for (name, v) in [("residual_contribution_p16", lo), ("residual_contribution_p50", mid), ("residual_contribution_p84", hi)] {
                rows.push(vec![name.into(), num(v), String::new()]);
            }
            out.line(format!("Monte-Carlo ({} samples): {mid:.4} (+{:.4} / -{:.4}) quanta/s", f.mc_samples, hi - mid, mid - lo));
        }
    }
    out.csv("fit.csv", &["quantity", "value", "sigma"], rows)?;
    out.finish("fit")
}
