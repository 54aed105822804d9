//! End-to-end reproduction checks of the published numbers.
//!
//! Each check returns an [`Outcome`] with a one-line detail. Checks that run
//! the stochastic oracle are deterministic for their fixed seeds.

use std::time::Instant;

use crate::fields::characteristic_distance;
use crate::fit::{fit, Derived, FitOptions};
use crate::heating::{
    combine_groups, dc_coefficient, heating_rate_dc, heating_rate_rf, operating_budget, solve_rf_amplitude,
    BudgetInputs, Correlation, Estimate, IonSpecies, Sidebands,
};
use crate::noise::{resonator_voltage_noise, ResonatorParams, Stage};
use crate::oracle::rf::{drive_response, run_noise, DriveParams, RfModel, RfNoiseParams};
use crate::oracle::{simulate_secular_heating, SecularParams};
use crate::synth::{generate_dataset, ExperimentPlan, REFERENCE_AXIAL_OMEGA};
use crate::trap::{
    find_equilibrium, find_rf_null, minimize_gradient, stray_for_axial_gradient, MinimizeOptions, ShimBasis,
    TrapConfig, DEFAULT_RF_OMEGA,
};
use crate::{Error, Layout, Result};

const TAU: f64 = std::f64::consts::TAU;
const SHIM_GROUPS: [&str; 4] = ["A", "B", "L0", "R0"];

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    /// `criterion N: PASS|FAIL  title  (detail, runtime)`
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2}: {}  {}  ({}; {:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 10] = [
    "resonator voltage noise at the secular sidebands",
    "DC coefficient and Johnson-noise rate",
    "group combination arithmetic",
    "RF amplitude self-consistency",
    "characteristic distances from geometry",
    "fit roundtrips over 100 seeds",
    "secular-heating oracle",
    "RF-noise oracle scaling and sideband factor",
    "bandpass mitigation of the RF entry",
    "drive response and V0 independence after minimization",
];

/// Runs criterion `id` (1 to 10). Errors inside a check become a failing outcome.
pub fn run(id: u8) -> Result<Outcome> {
    let title = *TITLES.get(usize::from(id).wrapping_sub(1)).ok_or_else(|| Error::Invalid(format!("no criterion {id}")))?;
    let start = Instant::now();
    let check: Result<(bool, String)> = match id {
        1 => resonator_noise(),
        2 => dc_rates(),
        3 => group_combination(),
        4 => rf_self_consistency(),
        5 => distances(start),
        6 => roundtrips(start),
        7 => secular_oracle(start),
        8 => rf_oracle(start),
        9 => bandpass_mitigation(),
        _ => drive_and_budget(),
    };
    let (pass, detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(Outcome { id, title, pass, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all() -> Vec<Outcome> {
    (1..=10).map(|i| run(i).expect("criterion ids are valid")).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn resonator_noise() -> Result<(bool, String)> {
    let res = ResonatorParams::new(170.0, 500e-9, DEFAULT_RF_OMEGA)?;
    let s = resonator_voltage_noise(&res, 8e-15, REFERENCE_AXIAL_OMEGA, true);
    Ok((rel(s, 1.17e-11) <= 0.02, format!("S_V = {s:.4e} V²/Hz, target 1.17e-11 ± 2%")))
}

fn dc_rates() -> Result<(bool, String)> {
    let sr = IonSpecies::sr88();
    let c = dc_coefficient(&sr, REFERENCE_AXIAL_OMEGA, 6.5e-3)?;
    let j = heating_rate_dc(&sr, REFERENCE_AXIAL_OMEGA, &[(1e-22, 6.5e-3)])?;
    let pass = rel(c, 1.22e18) <= 0.01 && (1.0e-4..=1.3e-4).contains(&j);
    Ok((pass, format!("coefficient {c:.4e} per V²/Hz, Johnson rate {j:.3e} quanta/s")))
}

fn group_combination() -> Result<(bool, String)> {
    // Milli-quanta per second, so the arithmetic is exact in integers.
    let per_group = 23i64;
    let u = combine_groups(per_group, 4, Correlation::Uncorrelated);
    let w = combine_groups(per_group, 4, Correlation::WorstCaseCoherent);
    let s = combine_groups(per_group, 4, Correlation::SymmetricInPhase);
    let pass = u == 92 && w == 368 && s == 0 && (w - 370).abs() <= 5;
    Ok((pass, format!("uncorrelated {}e-3, worst case {}e-3, symmetric {s}", u, w)))
}

fn rf_self_consistency() -> Result<(bool, String)> {
    let sr = IonSpecies::sr88();
    let v0 = solve_rf_amplitude(&sr, REFERENCE_AXIAL_OMEGA, DEFAULT_RF_OMEGA, 2.1e12, 1.17e-11, 12.0)?;
    let after = heating_rate_rf(&sr, REFERENCE_AXIAL_OMEGA, DEFAULT_RF_OMEGA, v0, 2e11, 1.17e-11)?;
    let pass = (45.0..=55.0).contains(&v0) && rel(after, 0.15) <= 0.3;
    Ok((pass, format!("V0 = {v0:.2} V, post-minimization contribution {after:.3} quanta/s")))
}

fn distances(start: Instant) -> Result<(bool, String)> {
    let layout = Layout::bundled();
    let op = find_equilibrium(&layout, &TrapConfig::bundled())?;
    let d_a = characteristic_distance(&layout, "A", [0.0, 1.0, 0.0], op.position)?.or_infinite();
    let null = find_rf_null(&layout, op.position)?;
    let d_rf = characteristic_distance(&layout, "RF", [0.0, 1.0, 0.0], null)?.or_infinite();
    let secs = start.elapsed().as_secs_f64();
    let pass = (4e-3..=10e-3).contains(&d_a) && d_rf > 1.0 && secs < 10.0;
    Ok((pass, format!("D_y,A = {:.2} mm, D_y,RF = {d_rf:.3e} m", d_a * 1e3)))
}

fn roundtrip_hits(plan: &ExperimentPlan) -> Result<usize> {
    let mut hits = 0;
    for seed in 0..100 {
        let f = fit(&generate_dataset(plan, seed)?.dataset, &FitOptions::standard())?;
        if let Derived::D(e) | Derived::Grad(e) = f.derived {
            if e.covers(plan.parameter, 2.0) {
                hits += 1;
            }
        }
    }
    Ok(hits)
}

fn roundtrips(start: Instant) -> Result<(bool, String)> {
    let dc = roundtrip_hits(&ExperimentPlan::reference_dc())?;
    let rf = roundtrip_hits(&ExperimentPlan::reference_rf())?;
    let pass = dc >= 95 && rf >= 95 && start.elapsed().as_secs_f64() < 60.0;
    Ok((pass, format!("DC {dc}/100, RF {rf}/100 within 2σ")))
}

fn secular_oracle(start: Instant) -> Result<(bool, String)> {
    let sr = IonSpecies::sr88();
    let omega = TAU * 1e6;
    let p = SecularParams::new(sr, omega, 1e-12, 4096, 2024)?;
    let r = simulate_secular_heating(&p)?;
    let expected = crate::heating::field_noise_coefficient(&sr, omega) * 1e-12;
    let dev = (r.rate - expected).abs();
    let pass = dev <= 3.0 * r.statistical_sigma && dev <= 0.05 * expected && start.elapsed().as_secs_f64() < 300.0;
    Ok((pass, format!("{:.2} ± {:.2} quanta/s vs {expected:.2} ({} runs)", r.rate, r.statistical_sigma, r.n_realizations)))
}

/// Axial displacement from the RF null at which |∂E₀²/∂axial| equals `target`.
pub fn displacement_for_gradient(layout: &Layout, config: &TrapConfig, target: f64) -> Result<f64> {
    let g = |d: f64| -> Result<f64> {
        let (m, _) = RfModel::displaced(layout, config, [0.0, d, 0.0])?;
        Ok(m.operating_point.axial_gradient().abs() - target)
    };
    let mut d0 = 1e-7;
    let mut f0 = g(d0)?;
    let mut d1 = d0 * target / (f0 + target);
    let mut f1 = g(d1)?;
    for _ in 0..20 {
        if f1.abs() <= 1e-6 * target {
            return Ok(d1);
        }
        let d2 = d1 - f1 * (d1 - d0) / (f1 - f0);
        (d0, f0) = (d1, f1);
        d1 = d2;
        f1 = g(d1)?;
    }
    Err(Error::NotConverged("displacement for target gradient".into()))
}

fn rf_oracle(start: Instant) -> Result<(bool, String)> {
    let layout = Layout::bundled();
    let config = TrapConfig::bundled();
    let psd = 1e-6;
    let n = 400;
    let mut norm = Vec::new();
    let mut both_at_2 = None;
    let mut model_at_2 = None;
    let mut formula_ok = true;
    for (i, k) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let d = displacement_for_gradient(&layout, &config, k * 2.5e9)?;
        let (model, _) = RfModel::displaced(&layout, &config, [0.0, d, 0.0])?;
        let o = run_noise(&model, &RfNoiseParams::new([0.0, d, 0.0], psd, n, 100 + i as u64))?;
        let e = &o.ensemble;
        formula_ok &= (e.rate - o.expected).abs() <= 0.1 * o.expected + 3.0 * e.statistical_sigma;
        let g2 = o.axial_gradient.powi(2);
        norm.push((e.rate / g2, e.statistical_sigma / g2));
        if k == 2.0 {
            both_at_2 = Some((e.rate, e.statistical_sigma));
            model_at_2 = Some((model, d));
        }
    }
    let consistent = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() <= 3.0 * a.1.hypot(b.1);
    let scaling_ok = consistent(norm[0], norm[1]) && consistent(norm[0], norm[2]) && consistent(norm[1], norm[2]);
    let (both, both_s) = both_at_2.expect("ran the middle displacement");
    let (model, d) = model_at_2.expect("ran the middle displacement");
    let mut p = RfNoiseParams::new([0.0, d, 0.0], psd, n, 200);
    p.sidebands = Sidebands::Single;
    let single = run_noise(&model, &p)?.ensemble;
    let ratio = single.rate / both;
    let ratio_s = ratio * (single.statistical_sigma / single.rate).hypot(both_s / both);
    let half_ok = (ratio - 0.5).abs() <= 3.0 * ratio_s;
    let pass = scaling_ok && half_ok && formula_ok && start.elapsed().as_secs_f64() < 900.0;
    let r1 = norm[1].0 / norm[0].0 * 4.0;
    let r2 = norm[2].0 / norm[0].0 * 16.0;
    Ok((
        pass,
        format!(
            "rates for grads 1:2:4 scale as 1:{r1:.2}:{r2:.2}; single/both = {ratio:.3} ± {ratio_s:.3}; formula {}",
            if formula_ok { "within 10% + 3σ" } else { "outside 10% + 3σ" }
        ),
    ))
}

fn bandpass_mitigation() -> Result<(bool, String)> {
    let f_rf = DEFAULT_RF_OMEGA / TAU;
    let f_y = REFERENCE_AXIAL_OMEGA / TAU;
    let bp = Stage::Bandpass { center_hz: f_rf, reject_offset_hz: f_y, rejection_db: 20.0 };
    bp.validate()?;
    let res = ResonatorParams::new(170.0, 500e-9, DEFAULT_RF_OMEGA)?;
    let per_sideband = resonator_voltage_noise(&res, 8e-15, REFERENCE_AXIAL_OMEGA, false);
    let before = 2.0 * per_sideband;
    let after = per_sideband * (bp.response(f_rf + f_y) + bp.response(f_rf - f_y));
    let sr = IonSpecies::sr88();
    let rate = |s: f64| heating_rate_rf(&sr, REFERENCE_AXIAL_OMEGA, DEFAULT_RF_OMEGA, 49.69, 2.1e12, s);
    let (r0, r1) = (rate(before)?, rate(after)?);
    let pass = rel(before / after, 100.0) <= 1e-9 && rel(r0 / r1, 100.0) <= 1e-9;
    Ok((pass, format!("PSD ×{:.6}, RF entry {r0:.3} → {r1:.4} quanta/s", before / after)))
}

/// Largest relative spread of the total budget after minimization across `amplitudes`.
pub fn budget_spread_after_minimization(
    layout: &Layout,
    config: &TrapConfig,
    stray: [f64; 3],
    amplitudes: &[f64],
    inputs: &BudgetInputs,
) -> Result<(f64, Vec<f64>)> {
    let mut totals = Vec::new();
    for &v0 in amplitudes {
        let cfg = config.clone().with_rf_amplitude(v0).with_stray_field(stray);
        let eq = find_equilibrium(layout, &cfg)?;
        let basis = ShimBasis::at(layout, &SHIM_GROUPS, eq.position)?;
        let m = minimize_gradient(layout, &cfg, &basis, &MinimizeOptions::default())?;
        let shimmed = cfg.with_dc_offsets(&basis.offsets(m.shims));
        totals.push(operating_budget(layout, &shimmed, &m.operating_point, inputs)?.total().value);
    }
    let lo = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = totals.iter().copied().fold(0.0, f64::max);
    Ok(((hi - lo) / lo, totals))
}

/// Budget inputs for the bundled trap: residual DC noise on the four shim groups and
/// the resonator-filtered RF source noise.
pub fn bundled_budget_inputs(background: Estimate<f64>) -> Result<BudgetInputs> {
    let res = ResonatorParams::new(170.0, 500e-9, DEFAULT_RF_OMEGA)?;
    Ok(BudgetInputs {
        background,
        dc_psd: SHIM_GROUPS.iter().map(|g| (g.to_string(), 1.9e-20)).collect(),
        rf_psd: resonator_voltage_noise(&res, 8e-15, REFERENCE_AXIAL_OMEGA, true),
    })
}

fn drive_and_budget() -> Result<(bool, String)> {
    let layout = Layout::bundled();
    let config = TrapConfig::bundled();
    let stray = stray_for_axial_gradient(&layout, &config, [0.0, 0.0, -1.0], 2e12)?;
    let model = RfModel::at_equilibrium(&layout, &config.clone().with_stray_field(stray))?;
    let w = model.operating_point.axial_frequency();
    let amp = 0.01;
    let p = DriveParams::new(model.rf_omega + w, amp);
    let a1 = drive_response(&model, &p)?;
    let a2 = drive_response(&model, &DriveParams { drive_omega: model.rf_omega + 2.0 * w, ..p.clone() })?;
    let db = 20.0 * (a1 / a2).log10();
    let inputs = bundled_budget_inputs(Estimate::new(12.0, 2.0))?;
    let v0 = config.rf_amplitude;
    let (spread, totals) = budget_spread_after_minimization(&layout, &config, stray, &[0.7 * v0, v0, 1.4 * v0], &inputs)?;
    let pass = db >= 30.0 && spread < 0.05;
    Ok((
        pass,
        format!(
            "Ω+ω_y vs Ω+2ω_y response {db:.1} dB; totals after minimization {} quanta/s, spread {:.2}%",
            totals.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join("/"),
            100.0 * spread
        ),
    ))
}
