//! Run configuration: one TOML file with a section per module.
//!
//! Every key has a default, so an empty file (or no file) describes the bundled
//! trap. `--set section.key=value` overrides are applied to the parsed TOML tree
//! before it is checked against the schema, and unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ionheat::heating::{Estimate, IonSpecies, Sidebands};
use ionheat::noise::{SpectrumKind, Stage};
use ionheat::synth::{Delays, ExperimentPlan, MeasurementModel};
use ionheat::trap::{MinimizeOptions, TrapConfig, BUNDLED_DC, DEFAULT_RF_AMPLITUDE, DEFAULT_RF_OMEGA};
use ionheat::Layout;
use serde::Deserialize;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub layout: LayoutSection,
    pub trap: TrapSection,
    pub fields: FieldsSection,
    pub chain: ChainSection,
    pub budget: BudgetSection,
    pub fit: FitSection,
    pub oracle: OracleSection,
    pub synth: SynthSection,
    /// Directory the config was read from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            layout: LayoutSection::default(),
            trap: TrapSection::default(),
            fields: FieldsSection::default(),
            chain: ChainSection::default(),
            budget: BudgetSection::default(),
            fit: FitSection::default(),
            oracle: OracleSection::default(),
            synth: SynthSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    /// Layout TOML; the bundled layout when absent.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    /// kg
    pub mass: Option<f64>,
    /// C
    pub charge: Option<f64>,
    /// Hz
    pub rf_frequency: Option<f64>,
    /// V, peak
    pub rf_amplitude: Option<f64>,
    /// V per DC group. Defaults to the bundled set for the bundled layout.
    pub dc_voltages: Option<BTreeMap<String, f64>>,
    /// V/m
    pub stray_field: [f64; 3],
    /// Shim the DC voltages to null the axial pseudopotential gradient first.
    pub minimize: bool,
    pub shim_groups: Vec<String>,
    /// V/m, half-range of each shim scan.
    pub shim_range: f64,
}

impl Default for TrapSection {
    fn default() -> Self {
        TrapSection {
            mass: None,
            charge: None,
            rf_frequency: None,
            rf_amplitude: None,
            dc_voltages: None,
            stray_field: [0.0; 3],
            minimize: false,
            shim_groups: ["A", "B", "L0", "R0"].map(String::from).to_vec(),
            shim_range: MinimizeOptions::default().range,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsSection {
    /// Groups to evaluate; all groups when empty.
    pub groups: Vec<String>,
    /// m
    pub start: [f64; 3],
    /// m
    pub stop: [f64; 3],
    pub points: usize,
}

impl Default for FieldsSection {
    fn default() -> Self {
        FieldsSection { groups: Vec::new(), start: [0.0, -100e-6, 50e-6], stop: [0.0, 100e-6, 50e-6], points: 41 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    /// Input spectrum CSV (`frequency_hz,psd,kind`); a flat spectrum when absent.
    pub spectrum: Option<PathBuf>,
    pub kind: SpectrumKind,
    /// Hz
    pub f_lo: f64,
    /// Hz
    pub f_hi: f64,
    pub points: usize,
    pub level: f64,
    pub stages: Vec<Stage<f64>>,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            spectrum: None,
            kind: SpectrumKind::Power,
            f_lo: 60e6,
            f_hi: 69e6,
            points: 181,
            level: 8e-15,
            stages: vec![Stage::Resonator { q: 170.0, inductance: 500e-9, omega: DEFAULT_RF_OMEGA }],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// quanta/s
    pub background: f64,
    pub background_sigma: f64,
    /// V²/Hz on each listed DC group at the axial frequency.
    pub dc_psd: BTreeMap<String, f64>,
    /// V²/Hz summed over both RF sidebands. When absent it is derived from the
    /// source power PSD through the resonator.
    pub rf_psd: Option<f64>,
    /// W/Hz at the RF source.
    pub rf_source_psd: f64,
    pub resonator_q: f64,
    /// H
    pub resonator_inductance: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection {
            background: 12.0,
            background_sigma: 2.0,
            dc_psd: ["A", "B", "L0", "R0"].iter().map(|g| (g.to_string(), 1.9e-20)).collect(),
            rf_psd: None,
            rf_source_psd: 8e-15,
            resonator_q: 170.0,
            resonator_inductance: 500e-9,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    pub regime: String,
    /// Hz
    pub axial_frequency: f64,
    pub x_errors: bool,
    pub scale_by_chi2: bool,
    /// Residual PSD to extrapolate to, V²/Hz.
    pub residual_psd: Option<f64>,
    pub residual_sigma: f64,
    /// Monte-Carlo samples for the extrapolated contribution; 0 disables.
    pub mc_samples: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            data: None,
            regime: "dc".into(),
            axial_frequency: 1.29e6,
            x_errors: true,
            scale_by_chi2: false,
            residual_psd: None,
            residual_sigma: 0.0,
            mc_samples: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// `secular`, `rf_noise` or `drive`.
    pub kind: String,
    pub realizations: usize,
    // secular
    /// Hz
    pub frequency: f64,
    /// (V/m)²/Hz
    pub field_psd: f64,
    pub periods: f64,
    pub steps_per_period: usize,
    // rf_noise and drive
    /// m, from the RF null
    pub displacement: [f64; 3],
    /// V²/Hz per sideband
    pub per_sideband_psd: f64,
    pub sidebands: Sidebands,
    pub steps_per_rf_period: usize,
    /// V
    pub drive_amplitude: f64,
    /// Drive detunings from Ω in units of the axial frequency.
    pub drive_from: f64,
    pub drive_to: f64,
    pub drive_points: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            kind: "secular".into(),
            realizations: 512,
            frequency: 1e6,
            field_psd: 1e-12,
            periods: 200.0,
            steps_per_period: 64,
            displacement: [0.0, 0.2e-6, 0.0],
            per_sideband_psd: 1e-6,
            sidebands: Sidebands::Both,
            steps_per_rf_period: 64,
            drive_amplitude: 0.01,
            drive_from: 0.95,
            drive_to: 1.05,
            drive_points: 21,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Starting plan: `dc` or `rf`.
    pub regime: String,
    pub levels_lo: Option<f64>,
    pub levels_hi: Option<f64>,
    pub levels: Option<usize>,
    pub residual_psd: Option<f64>,
    pub background: Option<f64>,
    /// D in m or gradient in V²/m³.
    pub parameter: Option<f64>,
    pub shots: Option<u64>,
    pub delays: Option<usize>,
    pub psd_rel_sigma: Option<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            regime: "dc".into(),
            levels_lo: None,
            levels_hi: None,
            levels: None,
            residual_psd: None,
            background: None,
            parameter: None,
            shots: None,
            delays: None,
            psd_rel_sigma: None,
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut tree, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let tree: toml::Table = text.parse().with_context(|| format!("parsing config {}", p.display()))?;
                (tree, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::from(".")),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(tree)).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().message().to_string();
            if path == "." {
                anyhow!("config: {msg}")
            } else {
                anyhow!("config key `{path}`: {msg}")
            }
        })?;
        cfg.base_dir = if base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { base_dir };
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        match &self.layout.path {
            Some(p) => Ok(ionheat::geometry::load_layout(&self.resolve(p))?),
            None => Ok(Layout::bundled()),
        }
    }

    pub fn species(&self) -> Result<IonSpecies<f64>> {
        let d = IonSpecies::sr88();
        Ok(IonSpecies::new(self.trap.mass.unwrap_or(d.mass), self.trap.charge.unwrap_or(d.charge))?)
    }

    pub fn trap_config(&self) -> Result<TrapConfig> {
        let mut c = TrapConfig::new(
            self.species()?,
            self.trap.rf_frequency.map_or(DEFAULT_RF_OMEGA, |f| TAU * f),
            self.trap.rf_amplitude.unwrap_or(DEFAULT_RF_AMPLITUDE),
        );
        c.dc_voltages = match (&self.trap.dc_voltages, &self.layout.path) {
            (Some(v), _) => v.clone(),
            (None, None) => BUNDLED_DC.iter().map(|(g, v)| (g.to_string(), *v)).collect(),
            (None, Some(_)) => BTreeMap::new(),
        };
        c.stray_field = self.trap.stray_field;
        c.validate()?;
        Ok(c)
    }

    /// Lines noting which RF parameters are defaults rather than configured values.
    pub fn assumptions(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.trap.rf_frequency.is_none() {
            v.push(format!("RF drive frequency assumed: {:.1} MHz (default)", DEFAULT_RF_OMEGA / TAU / 1e6));
        }
        if self.trap.rf_amplitude.is_none() {
            v.push(format!("RF amplitude assumed: {DEFAULT_RF_AMPLITUDE} V (default)"));
        }
        v
    }

    pub fn background(&self) -> Estimate<f64> {
        Estimate::new(self.budget.background, self.budget.background_sigma)
    }

    pub fn synth_plan(&self) -> Result<ExperimentPlan> {
        let s = &self.synth;
        let mut plan = match s.regime.as_str() {
            "dc" => ExperimentPlan::reference_dc(),
            "rf" => ExperimentPlan::reference_rf(),
            other => bail!("config: synth.regime must be `dc` or `rf`, got `{other}`"),
        };
        if s.levels_lo.is_some() || s.levels_hi.is_some() || s.levels.is_some() {
            let old = &plan.injected_psd_levels;
            let lo = s.levels_lo.unwrap_or(old[0]);
            let hi = s.levels_hi.unwrap_or(old[old.len() - 1]);
            plan.injected_psd_levels = ionheat::synth::log_spaced(lo, hi, s.levels.unwrap_or(old.len()));
        }
        if let Some(v) = s.residual_psd {
            plan.residual_psd = v;
        }
        if let Some(v) = s.background {
            plan.background = v;
        }
        if let Some(v) = s.parameter {
            plan.parameter = v;
        }
        let m: &mut MeasurementModel = &mut plan.measurement;
        if let Some(v) = s.shots {
            m.n_shots = v;
        }
        if let Some(v) = s.psd_rel_sigma {
            m.psd_rel_sigma = v;
        }
        if let Some(n) = s.delays {
            if let Delays::Adaptive { count, .. } = &mut m.delays {
                *count = n;
            }
        }
        plan.context.species = self.species()?;
        if let Some((w, v0)) = plan.context.rf.as_mut() {
            if let Some(f) = self.trap.rf_frequency {
                *w = TAU * f;
            }
            if let Some(a) = self.trap.rf_amplitude {
                *v0 = a;
            }
        }
        Ok(plan)
    }
}

/// Sets `a.b.c = value` in `tree`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{spec}`"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("--set: malformed key `{key}`");
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut table = tree;
    for p in path {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("--set: `{p}` in `{key}` is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
