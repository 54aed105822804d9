use std::f64::consts::PI;

use ionheat::noise::{
    apply_chain, johnson_noise, resonator_voltage_noise, NoiseSpectrum, ResonatorParams, SpectrumKind, Stage,
    TransferChain,
};
use ionheat::Error;
use proptest::prelude::*;

const KB: f64 = 1.380649e-23;

fn bundled_resonator() -> ResonatorParams<f64> {
    ResonatorParams::new(170.0, 500e-9, 2.0 * PI * 64.5e6).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn zero_db_gain_is_identity() {
    let s = NoiseSpectrum::new(SpectrumKind::Voltage, vec![(1e3, 1e-18), (1e5, 3e-19), (1e7, 2e-20)]).unwrap();
    let chain = TransferChain::new(vec![Stage::FlatGain { db: 0.0 }]).unwrap();
    assert_eq!(apply_chain(&chain, &s).unwrap(), s);
}

#[test]
fn rc_lowpass_at_axial_frequency() {
    let fc = 2.5e3;
    let c = 1e-9;
    let r = 1.0 / (2.0 * PI * fc * c);
    let stage = Stage::RcLowpass { r, c };
    let want = 1.0 / (1.0 + (1.29e6f64 / fc).powi(2));
    assert!(rel(stage.response(1.29e6), want) < 1e-12);
    assert!(rel(want, 3.75e-6) < 0.01);
    let fo = Stage::FirstOrder { cutoff_hz: fc };
    assert!(rel(fo.response(1.29e6), want) < 1e-12);
}

#[test]
fn bandpass_rejects_sidebands_by_twenty_db() {
    let f_rf = 64.5e6;
    let f_y = 1.29e6;
    let stage = Stage::Bandpass { center_hz: f_rf, reject_offset_hz: f_y, rejection_db: 20.0 };
    let s = NoiseSpectrum::new(SpectrumKind::Voltage, vec![(f_rf - f_y, 1e-11), (f_rf, 1e-11), (f_rf + f_y, 1e-11)])
        .unwrap();
    let out = apply_chain(&TransferChain::new(vec![stage]).unwrap(), &s).unwrap();
    let v = out.values();
    assert!(rel(v[0], 1e-13) < 1e-12);
    assert_eq!(v[1], 1e-11);
    assert!(rel(v[2], 1e-13) < 1e-12);
}

#[test]
fn resonator_on_resonance_is_qlomega() {
    let p = bundled_resonator();
    let want = 170.0 * 500e-9 * 2.0 * PI * 64.5e6;
    assert!(rel(p.transfer(0.0), want) < 1e-14);
    assert!(rel(want, 3.44e4) < 0.002);
}

#[test]
fn resonator_sideband_noise_matches_hand_value() {
    let p = bundled_resonator();
    let w = 2.0 * PI * 1.29e6;
    let big = 2.0 * PI * 64.5e6;
    let lorentz = 170.0 * 500e-9 * big / (1.0 + 4.0 * 170.0f64.powi(2) * (w / big).powi(2));
    let s = resonator_voltage_noise(&p, 8e-15, w, true);
    assert!(rel(s, 2.0 * lorentz * 8e-15) < 1e-12);
    assert!(rel(s, 1.17e-11) < 0.02, "{s}");
    assert_eq!(resonator_voltage_noise(&p, 8e-15, w, false) * 2.0, s);
}

#[test]
fn resonator_small_q_limit() {
    let omega = 2.0 * PI * 64.5e6;
    let w = 2.0 * PI * 1.29e6;
    for q in [1e-3, 1e-5, 1e-7] {
        let p = ResonatorParams::new(q, 500e-9, omega).unwrap();
        assert!(rel(p.transfer(w), q * 500e-9 * omega) < 1e-2 * q);
    }
}

#[test]
fn resonator_stage_needs_power_input() {
    let p = bundled_resonator();
    let chain = TransferChain::new(vec![Stage::Resonator { q: p.q, inductance: p.inductance, omega: p.omega }]).unwrap();
    let v = NoiseSpectrum::flat(SpectrumKind::Voltage, 60e6, 70e6, 1e-12).unwrap();
    assert!(matches!(apply_chain(&chain, &v), Err(Error::IncompatibleKind { .. })));
    let pw = NoiseSpectrum::flat(SpectrumKind::Power, 60e6, 70e6, 1e-12).unwrap();
    assert_eq!(apply_chain(&chain, &pw).unwrap().kind(), SpectrumKind::Voltage);
}

#[test]
fn johnson_noise_values() {
    let s = johnson_noise(1.0, 300.0).unwrap();
    assert!(rel(s, 4.0 * KB * 300.0) < 1e-15);
    assert!(rel(s, 1.66e-20) < 0.005);
    assert_eq!(johnson_noise(0.0, 300.0).unwrap(), 0.0);
    assert_eq!(johnson_noise(50.0, 0.0).unwrap(), 0.0);
    assert!(johnson_noise(-1.0, 4.0).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(matches!(ResonatorParams::new(0.0, 500e-9, 1e8), Err(Error::NonPositive { .. })));
    assert!(matches!(ResonatorParams::new(170.0, -1.0, 1e8), Err(Error::NonPositive { .. })));
    assert!(TransferChain::new(vec![Stage::RcLowpass { r: 0.0, c: 1e-9 }]).is_err());
    assert!(TransferChain::new(vec![Stage::FlatGain { db: f64::NAN }]).is_err());
    assert!(NoiseSpectrum::new(SpectrumKind::Voltage, vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
    assert!(NoiseSpectrum::new(SpectrumKind::Voltage, vec![(1.0, -1.0)]).is_err());
    assert!(NoiseSpectrum::<f64>::new(SpectrumKind::Voltage, vec![]).is_err());
}

#[test]
fn spectrum_csv_round_trip() {
    let s = NoiseSpectrum::new(SpectrumKind::Power, vec![(1e3, 1.25e-15), (2e6, 8e-15)]).unwrap();
    let mut buf = Vec::new();
    s.to_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("frequency_hz,psd,kind"));
    assert_eq!(NoiseSpectrum::from_csv(buf.as_slice()).unwrap(), s);
    let mixed = "frequency_hz,psd,kind\n1,1,voltage\n2,1,power\n";
    assert!(matches!(NoiseSpectrum::<f64>::from_csv(mixed.as_bytes()), Err(Error::Parse(_))));
}

#[test]
fn interpolation_is_log_log() {
    let s = NoiseSpectrum::new(SpectrumKind::Voltage, vec![(1e3, 1e-16), (1e5, 1e-20)]).unwrap();
    // 1/f² slope: one decade down in f is two decades up in PSD.
    assert!(rel(s.at(1e4), 1e-18) < 1e-12);
    assert_eq!(s.at(10.0), 1e-16);
    assert_eq!(s.at(1e9), 1e-20);
}

#[test]
fn f32_chain_agrees_with_f64() {
    let c64 = TransferChain::new(vec![Stage::FirstOrder { cutoff_hz: 2.5e3 }, Stage::FlatGain { db: -3.0 }]).unwrap();
    let c32 = TransferChain::new(vec![Stage::FirstOrder { cutoff_hz: 2.5e3f32 }, Stage::FlatGain { db: -3.0f32 }]).unwrap();
    for f in [10.0, 2.5e3, 1.29e6] {
        assert!(rel(c32.response(f as f32) as f64, c64.response(f)) < 1e-5);
    }
}

fn stage_strategy() -> impl Strategy<Value = Stage<f64>> {
    prop_oneof![
        (1.0..1e6f64, 1e-12..1e-6f64).prop_map(|(r, c)| Stage::RcLowpass { r, c }),
        (1.0..1e8f64).prop_map(|cutoff_hz| Stage::FirstOrder { cutoff_hz }),
        (1e6..1e8f64, 1e3..1e7f64, 0.0..60.0f64)
            .prop_map(|(center_hz, reject_offset_hz, rejection_db)| Stage::Bandpass { center_hz, reject_offset_hz, rejection_db }),
        (-60.0..60.0f64).prop_map(|db| Stage::FlatGain { db }),
    ]
}

fn spectrum_strategy() -> impl Strategy<Value = NoiseSpectrum<f64>> {
    prop::collection::vec((0.0..8.0f64, -25.0..-10.0f64), 1..8).prop_map(|v| {
        let mut f = 0.0;
        let samples = v
            .into_iter()
            .map(|(df, lg)| {
                f += 10f64.powf(df);
                (f, 10f64.powf(lg))
            })
            .collect();
        NoiseSpectrum::new(SpectrumKind::Voltage, samples).unwrap()
    })
}

proptest! {
    #[test]
    fn chain_application_is_associative(
        a in prop::collection::vec(stage_strategy(), 0..4),
        b in prop::collection::vec(stage_strategy(), 0..4),
        s in spectrum_strategy(),
    ) {
        let ca = TransferChain::new(a).unwrap();
        let cb = TransferChain::new(b).unwrap();
        let sequential = apply_chain(&cb, &apply_chain(&ca, &s).unwrap()).unwrap();
        let combined = apply_chain(&ca.then(&cb), &s).unwrap();
        for (x, y) in sequential.values().iter().zip(combined.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
        }
    }

    #[test]
    fn outputs_are_non_negative_and_finite(stages in prop::collection::vec(stage_strategy(), 0..5), s in spectrum_strategy()) {
        let out = apply_chain(&TransferChain::new(stages).unwrap(), &s).unwrap();
        prop_assert!(out.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn resonator_is_even_and_decreasing(q in 1.0..1000.0f64, l in 1e-8..1e-5f64, d1 in 0.0..1e8f64, d2 in 0.0..1e8f64) {
        let p = ResonatorParams::new(q, l, 2.0 * PI * 64.5e6).unwrap();
        prop_assert_eq!(p.transfer(d1), p.transfer(-d1));
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(p.transfer(lo) >= p.transfer(hi));
    }

    #[test]
    fn interpolation_hits_samples(s in spectrum_strategy()) {
        for (f, v) in s.samples() {
            prop_assert!((s.at(f) - v).abs() <= 1e-15 * v);
        }
    }
}
