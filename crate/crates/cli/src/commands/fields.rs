use anyhow::{bail, Result};
use ionheat::fields::basis_solution;

use crate::config::RunConfig;
use crate::output::{num, Output};

/// Per-group unit-voltage potential and field along a straight line.
pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let layout = cfg.layout()?;
    let f = &cfg.fields;
    let groups: Vec<String> = if f.groups.is_empty() {
        layout.groups().into_iter().map(String::from).collect()
    } else {
        f.groups.clone()
    };
    for g in &groups {
        if !layout.has_group(g) {
            bail!("config: fields.groups names unknown group `{g}`");
        }
    }
    if f.points == 0 {
        bail!("config: fields.points must be at least 1");
    }
    let at = |i: usize| -> [f64; 3] {
        let t = if f.points == 1 { 0.0 } else { i as f64 / (f.points - 1) as f64 };
        std::array::from_fn(|k| f.start[k] + t * (f.stop[k] - f.start[k]))
    };
    let mut rows = Vec::with_capacity(groups.len() * f.points);
    for g in &groups {
        for i in 0..f.points {
            let p = at(i);
            let (phi, e) = basis_solution(&layout, g, p)?;
            rows.push(vec![g.clone(), num(p[0]), num(p[1]), num(p[2]), num(phi), num(e[0]), num(e[1]), num(e[2])]);
        }
    }
    out.csv("fields.csv", &["group", "x", "y", "z", "potential", "Ex", "Ey", "Ez"], rows)?;
    out.line(format!("layout `{}`: {} groups, {} points each", layout.name, groups.len(), f.points));
    out.line("unit-voltage potential (V) and field (V/m) per group written to fields.csv");
    out.finish("fields")
}
