use anyhow::Result;
use ionheat::fields::{characteristic_distance, Distance};

use super::operating;
use crate::config::RunConfig;
use crate::output::{num, Output};

const TAU: f64 = std::f64::consts::TAU;

pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let o = operating(cfg)?;
    let op = &o.point;
    let mut rows: Vec<(String, f64, &str)> = vec![
        ("x".into(), op.position[0], "m"),
        ("y".into(), op.position[1], "m"),
        ("z".into(), op.position[2], "m"),
    ];
    for (i, w) in op.secular_frequencies.iter().enumerate() {
        rows.push((format!("mode_{i}_frequency"), w / TAU, "Hz"));
    }
    rows.push(("axial_mode".into(), op.axial as f64, "index"));
    rows.push(("axial_frequency".into(), op.axial_frequency() / TAU, "Hz"));
    rows.push(("axial_grad_e0_sq".into(), op.axial_gradient(), "V2/m3"));
    for (k, c) in ["x", "y", "z"].iter().enumerate() {
        rows.push((format!("grad_e0_sq_{c}"), op.grad_e0_sq_cartesian[k], "V2/m3"));
    }
    rows.push(("e0_sq".into(), op.e0_sq, "V2/m2"));
    rows.push(("rf_frequency".into(), o.config.rf_omega / TAU, "Hz"));
    rows.push(("rf_amplitude".into(), o.config.rf_amplitude, "V"));
    out.csv(
        "operating_point.csv",
        &["quantity", "value", "unit"],
        rows.iter().map(|(q, v, u)| vec![q.clone(), num(*v), u.to_string()]),
    )?;

    let axis = op.axial_axis();
    let mut dist = Vec::new();
    for g in o.layout.groups() {
        let d = characteristic_distance(&o.layout, g, axis, op.position)?;
        dist.push((g.to_string(), d));
    }
    let show = |d: &Distance<f64>| match d {
        Distance::Finite(v) => num(*v),
        Distance::NoCoupling => "inf".to_string(),
    };
    out.csv("distances.csv", &["group", "axial_distance_m"], dist.iter().map(|(g, d)| vec![g.clone(), show(d)]))?;

    out.line(format!(
        "ion at ({:.3}, {:.3}, {:.3}) um",
        op.position[0] * 1e6,
        op.position[1] * 1e6,
        op.position[2] * 1e6
    ));
    for (i, w) in op.secular_frequencies.iter().enumerate() {
        let tag = if i == op.axial { "  (axial)" } else { "" };
        out.line(format!("mode {i}: {:.4} MHz{tag}", w / TAU / 1e6));
    }
    out.line(format!("axial d(E0^2)/dr: {:.4e} V^2/m^3", op.axial_gradient()));
    if let Some((before, s)) = o.shimmed {
        out.line(format!(
            "gradient minimized from {before:.3e}; shim fields ({:.1}, {:.1}, {:.1}) V/m",
            s[0], s[1], s[2]
        ));
    }
    for (g, d) in &dist {
        match d {
            Distance::Finite(v) if *v < 1.0 => out.line(format!("D_axial,{g} = {:.4} mm", v * 1e3)),
            Distance::Finite(v) => out.line(format!("D_axial,{g} = {v:.4e} m")),
            Distance::NoCoupling => out.line(format!("D_axial,{g}: no coupling")),
        }
    }
    for a in cfg.assumptions() {
        out.line(a);
    }
    out.finish("trap")
}
