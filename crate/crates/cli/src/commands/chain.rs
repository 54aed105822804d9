use anyhow::{bail, Result};
use ionheat::noise::{apply_chain, NoiseSpectrum, TransferChain};

use crate::config::RunConfig;
use crate::output::{num, Output};

/// Propagates a noise spectrum through the configured transfer chain.
pub fn run(cfg: &RunConfig, mut out: Output) -> Result<()> {
    let c = &cfg.chain;
    let input = match &c.spectrum {
        Some(p) => NoiseSpectrum::from_csv(std::fs::File::open(cfg.resolve(p))?)?,
        None => {
            if c.points < 2 || !(c.f_hi > c.f_lo) {
                bail!("config: chain needs points >= 2 and f_hi > f_lo");
            }
            let step = (c.f_hi - c.f_lo) / (c.points - 1) as f64;
            NoiseSpectrum::new(c.kind, (0..c.points).map(|i| (c.f_lo + step * i as f64, c.level)).collect())?
        }
    };
    let chain = TransferChain::new(c.stages.clone())?;
    let output = apply_chain(&chain, &input)?;

    let mut buf = Vec::new();
    output.to_csv(&mut buf)?;
    out.write("chain_output.csv", &buf)?;
    out.csv(
        "chain_response.csv",
        &["frequency_hz", "response"],
        input.frequencies().iter().map(|f| vec![num(*f), num(chain.response(*f))]),
    )?;

    let names: Vec<&str> = chain.stages.iter().map(|s| s.name()).collect();
    out.line(format!("stages: {}", if names.is_empty() { "none".into() } else { names.join(" -> ") }));
    out.line(format!("{} spectrum in, {} spectrum out, {} samples", input.kind().name(), output.kind().name(), output.frequencies().len()));
    let (f_max, s_max) = output.samples().fold((0.0, f64::MIN), |a, (f, s)| if s > a.1 { (f, s) } else { a });
    out.line(format!("largest output PSD {s_max:.4e} at {:.4} MHz", f_max / 1e6));
    out.finish("chain")
}
