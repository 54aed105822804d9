use anyhow::Result;
use ionheat::synth::{generate_dataset, TruthSidecar};

use crate::config::RunConfig;
use crate::output::Output;

/// Synthetic heating-rate dataset, its plot table and the truth sidecar.
pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let plan = cfg.synth_plan()?;
    let g = generate_dataset(&plan, cfg.seed)?;
    let mut buf = Vec::new();
    g.dataset.to_csv(&mut buf)?;
    out.write("synth.csv", &buf)?;
    let mut buf = Vec::new();
    g.plot_csv(&mut buf)?;
    out.write("synth_plot.csv", &buf)?;
    let truth = TruthSidecar::from_plan(&plan, cfg.seed)?;
    out.write("synth_truth.toml", truth.to_toml()?.as_bytes())?;
    out.line(format!("{} dataset, seed {}, {} points", plan.regime.name(), cfg.seed, g.dataset.points.len()));
    out.line(format!(
        "truth: background {} quanta/s, {} = {:e}, slope {:.5e}",
        truth.background, truth.parameter_name, truth.parameter, truth.slope
    ));
    out.finish("synth")
}
