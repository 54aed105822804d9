pub mod budget;
pub mod chain;
pub mod fields;
pub mod fit;
pub mod oracle;
pub mod reproduce;
pub mod synth;
pub mod trap;

use anyhow::Result;
use ionheat::trap::{find_equilibrium, minimize_gradient, MinimizeOptions, ShimBasis, TrapConfig, TrapOperatingPoint};
use ionheat::Layout;

use crate::config::RunConfig;

/// Trap state used by the trap, budget and oracle commands.
pub struct Operating {
    pub layout: Layout,
    pub config: TrapConfig,
    pub point: TrapOperatingPoint,
    /// Axial gradient before shimming and the shim fields (V/m), when minimized.
    pub shimmed: Option<(f64, [f64; 3])>,
}

pub fn operating(cfg: &RunConfig) -> Result<Operating> {
    let layout = cfg.layout()?;
    layout.validate_trap()?;
    let config = cfg.trap_config()?;
    if !cfg.trap.minimize {
        let point = find_equilibrium(&layout, &config)?;
        return Ok(Operating { layout, config, point, shimmed: None });
    }
    let eq = find_equilibrium(&layout, &config)?;
    let groups: Vec<&str> = cfg.trap.shim_groups.iter().map(String::as_str).collect();
    let basis = ShimBasis::at(&layout, &groups, eq.position)?;
    let opts = MinimizeOptions { range: cfg.trap.shim_range, ..MinimizeOptions::default() };
    let m = minimize_gradient(&layout, &config, &basis, &opts)?;
    let config = config.with_dc_offsets(&basis.offsets(m.shims));
    Ok(Operating { layout, config, point: m.operating_point, shimmed: Some((m.initial, m.shims)) })
}
