use ionheat::fit::{
    fit, fit_dc, fit_dc_with, fit_rf, slope_coefficient, Derived, FitContext, FitOptions, HeatingDataset, HeatingPoint,
    Regime,
};
use ionheat::heating::{dc_coefficient, IonSpecies};
use ionheat::synth::{generate_dataset, Delays, ExperimentPlan};
use ionheat::{Dataset, Error};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const TAU: f64 = std::f64::consts::TAU;

fn dc_context() -> FitContext<f64> {
    FitContext { species: IonSpecies::sr88(), omega: TAU * 1.29e6, rf: None }
}

fn rf_context() -> FitContext<f64> {
    FitContext { species: IonSpecies::sr88(), omega: TAU * 1.29e6, rf: Some((TAU * 64.5e6, 49.69)) }
}

fn line(regime: Regime, ctx: FitContext<f64>, bg: f64, k: f64, s: &[f64], rel: f64) -> Dataset {
    let points = s
        .iter()
        .map(|&x| {
            let r = bg + k * x;
            HeatingPoint { s: x, s_sigma: 0.0, rate: r, rate_sigma: rel * r }
        })
        .collect();
    HeatingDataset { points, regime, context: ctx }
}

fn log_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn noiseless_dc_line_is_recovered_exactly() {
    let ctx = dc_context();
    let d = 6.5e-3;
    let k = dc_coefficient(&ctx.species, ctx.omega, d).unwrap();
    let ds = line(Regime::Dc, ctx, 10.0, k, &log_levels(1e-19, 1e-15, 8), 0.1);
    let f = fit_dc(&ds).unwrap();
    assert!((f.background.value - 10.0).abs() < 1e-9);
    assert!((f.slope.value / k - 1.0).abs() < 1e-12);
    assert!(f.chi2_per_dof < 1e-20);
    assert!(!f.background_clamped);
    match f.derived {
        Derived::D(e) => assert!((e.value - d).abs() < 1e-12 * d),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dc_roundtrip_with_ten_percent_rate_noise() {
    let ctx = dc_context();
    let k = dc_coefficient(&ctx.species, ctx.omega, 6.5e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ds = line(Regime::Dc, ctx, 10.0, k, &log_levels(1e-19, 1e-15, 8), 0.1);
    for p in &mut ds.points {
        let g: f64 = StandardNormal.sample(&mut rng);
        p.rate += p.rate_sigma * g;
    }
    let f = fit_dc(&ds).unwrap();
    let Derived::D(d) = f.derived else { panic!("{:?}", f.derived) };
    assert!(d.covers(6.5e-3, 2.0), "D = {d:?}");
    assert!(f.background.covers(10.0, 2.0), "bg = {:?}", f.background);
}

#[test]
fn derived_sigma_follows_slope_sigma() {
    let ctx = dc_context();
    let plan = ExperimentPlan::reference_dc();
    let f = fit_dc(&generate_dataset(&plan, 3).unwrap().dataset).unwrap();
    let Derived::D(d) = f.derived else { panic!() };
    assert_eq!(d.sigma / d.value, f.slope.sigma / (2.0 * f.slope.value));
    let c = slope_coefficient(Regime::Dc, &ctx).unwrap();
    assert!((d.value - (c / f.slope.value).sqrt()).abs() <= 1e-15 * d.value);

    let plan = ExperimentPlan::reference_rf();
    let f = fit_rf(&generate_dataset(&plan, 3).unwrap().dataset).unwrap();
    let Derived::Grad(g) = f.derived else { panic!() };
    assert_eq!(g.sigma / g.value, f.slope.sigma / (2.0 * f.slope.value));
}

#[test]
fn covariance_is_symmetric_and_positive() {
    let f = fit_dc(&generate_dataset(&ExperimentPlan::reference_dc(), 11).unwrap().dataset).unwrap();
    let c = f.covariance;
    assert_eq!(c[0][1], c[1][0]);
    assert!(c[0][0] > 0.0 && c[1][1] > 0.0);
    assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= 0.0);
}

#[test]
fn flat_rates_give_zero_gradient_and_mean_background() {
    let points = (1..=4)
        .map(|i| HeatingPoint { s: 1e-11 * i as f64, s_sigma: 0.0, rate: 15.0, rate_sigma: 1.0 })
        .collect();
    let ds = HeatingDataset { points, regime: Regime::Rf, context: rf_context() };
    let f = fit_rf(&ds).unwrap();
    assert_eq!(f.slope.value, 0.0);
    assert!((f.background.value - 15.0).abs() < 1e-12);
    match f.derived {
        Derived::Grad(g) => {
            assert_eq!(g.value, 0.0);
            assert!(g.sigma > 0.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn negative_slope_reports_no_coupling() {
    let ctx = dc_context();
    let ds = line(Regime::Dc, ctx, 100.0, -1e15, &[1e-18, 1e-17, 2e-17, 5e-17], 0.05);
    assert_eq!(fit_dc(&ds).unwrap().derived, Derived::NoCoupling);
}

#[test]
fn negative_background_is_clamped_and_flagged() {
    let ctx = dc_context();
    let k = 1e18;
    let mut ds = line(Regime::Dc, ctx, 0.0, k, &[1e-18, 2e-18, 4e-18, 8e-18], 0.01);
    for p in &mut ds.points {
        p.rate -= 0.5;
    }
    let f = fit_dc(&ds).unwrap();
    assert!(f.background_clamped);
    assert_eq!(f.background.value, 0.0);
    assert!(f.slope.value > 0.0);
}

#[test]
fn input_errors() {
    let ctx = dc_context();
    let two = line(Regime::Dc, ctx, 1.0, 1e18, &[1e-18, 2e-18], 0.1);
    assert!(matches!(fit_dc(&two), Err(Error::TooFewPoints { needed: 3, got: 2 })));

    let same = line(Regime::Dc, ctx, 1.0, 1e18, &[1e-18; 4], 0.1);
    let e = fit_dc(&same).unwrap_err();
    assert!(matches!(e, Error::Singular(_)) && e.is_numerical());

    let ok = line(Regime::Dc, ctx, 1.0, 1e18, &[1e-18, 2e-18, 3e-18], 0.1);
    assert!(matches!(fit_rf(&ok), Err(Error::Invalid(_))));

    let mut zero_sigma = ok.clone();
    zero_sigma.points[0].rate_sigma = 0.0;
    assert!(matches!(fit_dc(&zero_sigma), Err(Error::Invalid(_))));

    let mut negative = ok.clone();
    negative.points[1].rate = -1.0;
    assert!(matches!(fit_dc(&negative), Err(Error::Invalid(_))));

    let rf_without_drive = HeatingDataset { regime: Regime::Rf, ..ok };
    assert!(fit_rf(&rf_without_drive).is_err());
}

#[test]
fn csv_roundtrip_preserves_points() {
    let ds = generate_dataset(&ExperimentPlan::reference_dc(), 5).unwrap().dataset;
    let mut buf = Vec::new();
    ds.to_csv(&mut buf).unwrap();
    let back = HeatingDataset::from_csv(buf.as_slice(), Regime::Dc, dc_context()).unwrap();
    assert_eq!(back.points.len(), ds.points.len());
    for (a, b) in ds.points.iter().zip(&back.points) {
        for (x, y) in [(a.s, b.s), (a.s_sigma, b.s_sigma), (a.rate, b.rate), (a.rate_sigma, b.rate_sigma)] {
            assert!((x - y).abs() <= 1e-15 * x.abs());
        }
    }
    // Rows of the other regime are skipped.
    let rf = HeatingDataset::from_csv(buf.as_slice(), Regime::Rf, rf_context()).unwrap();
    assert!(rf.points.is_empty());
}

#[test]
fn csv_errors() {
    let missing = "s_v2_per_hz,rate_quanta_per_s\n1e-18,10\n";
    assert!(matches!(HeatingDataset::<f64>::from_csv(missing.as_bytes(), Regime::Dc, dc_context()), Err(Error::Parse(_))));
    let bad = "s_v2_per_hz,s_sigma,rate_quanta_per_s,rate_sigma\n1e-18,0,ten,1\n";
    assert!(matches!(HeatingDataset::<f64>::from_csv(bad.as_bytes(), Regime::Dc, dc_context()), Err(Error::Parse(_))));
    let regime = "s_v2_per_hz,s_sigma,rate_quanta_per_s,rate_sigma,regime\n1e-18,0,10,1,ac\n";
    assert!(HeatingDataset::<f64>::from_csv(regime.as_bytes(), Regime::Dc, dc_context()).is_err());
}

#[test]
fn f32_fit_agrees_with_f64() {
    let ds = generate_dataset(&ExperimentPlan::reference_dc(), 9).unwrap().dataset;
    let f64_fit = fit_dc(&ds).unwrap();
    let ctx32 = FitContext { species: IonSpecies::<f32>::sr88(), omega: (TAU * 1.29e6) as f32, rf: None };
    let pts = ds
        .points
        .iter()
        .map(|p| HeatingPoint {
            s: p.s as f32,
            s_sigma: p.s_sigma as f32,
            rate: p.rate as f32,
            rate_sigma: p.rate_sigma as f32,
        })
        .collect();
    let ds32 = HeatingDataset { points: pts, regime: Regime::Dc, context: ctx32 };
    let f32_fit = fit_dc(&ds32).unwrap();
    let (Derived::D(a), Derived::D(b)) = (f64_fit.derived, f32_fit.derived) else { panic!() };
    assert!((b.value as f64 / a.value - 1.0).abs() < 1e-4);
    assert!((b.sigma as f64 / a.sigma - 1.0).abs() < 1e-3);
}

#[test]
fn reference_dc_precision() {
    let f = fit_dc(&generate_dataset(&ExperimentPlan::reference_dc(), 1).unwrap().dataset).unwrap();
    let Derived::D(d) = f.derived else { panic!() };
    assert!(d.covers(6.5e-3, 2.0), "{d:?}");
    assert!((0.05e-3..=0.2e-3).contains(&d.sigma), "σ_D = {}", d.sigma);
}

#[test]
fn rf_roundtrip_recovers_gradient() {
    let f = fit_rf(&generate_dataset(&ExperimentPlan::reference_rf(), 2).unwrap().dataset).unwrap();
    let Derived::Grad(g) = f.derived else { panic!() };
    assert!(g.covers(2.1e12, 2.0), "{g:?}");
    assert!(f.background.covers(15.0, 2.0));
}

#[test]
fn post_minimization_gradient_is_consistent_with_zero() {
    // After minimization the residual gradient barely moves the rate over the injected range.
    let mut plan = ExperimentPlan::reference_rf();
    plan.parameter = 2e11;
    plan.injected_psd_levels = log_levels(1e-11, 1e-10, 4);
    plan.measurement.n_shots = 500;
    let n = 100;
    let mut consistent = 0;
    for seed in 0..n {
        let f = fit_rf(&generate_dataset(&plan, seed).unwrap().dataset).unwrap();
        if f.slope.value.abs() <= f.slope.sigma {
            consistent += 1;
        }
    }
    assert!(consistent >= n / 2, "{consistent}/{n}");
}

fn coverage(plan: &ExperimentPlan, seeds: std::ops::Range<u64>, k: f64) -> usize {
    seeds
        .filter(|&s| {
            let f = fit(&generate_dataset(plan, s).unwrap().dataset, &FitOptions::standard()).unwrap();
            match f.derived {
                Derived::D(e) | Derived::Grad(e) => e.covers(plan.parameter, k),
                Derived::NoCoupling => false,
            }
        })
        .count()
}

#[test]
fn one_sigma_coverage_over_200_datasets() {
    for plan in [ExperimentPlan::reference_dc(), ExperimentPlan::reference_rf()] {
        let c = coverage(&plan, 0..200, 1.0);
        assert!((126..=146).contains(&c), "{:?}: {c}/200", plan.regime);
    }
}

#[test]
fn fixed_delays_and_no_x_errors_still_fit() {
    let mut plan = ExperimentPlan::reference_dc();
    plan.measurement.psd_rel_sigma = 0.0;
    plan.measurement.delays = Delays::Fixed { times: vec![0.0, 0.02, 0.04, 0.06] };
    let ds = generate_dataset(&plan, 4).unwrap().dataset;
    let a = fit_dc_with(&ds, &FitOptions { x_errors: false, scale_by_chi2: false }).unwrap();
    let b = fit_dc(&ds).unwrap();
    assert_eq!(a.slope.value, b.slope.value);
    let c = fit_dc_with(&ds, &FitOptions { x_errors: false, scale_by_chi2: true }).unwrap();
    assert!(c.slope.sigma >= a.slope.sigma);
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    proptest::collection::vec((1e-19f64..1e-15, 1.0f64..1e4, 0.02f64..0.3, 0.0f64..0.05), 3..12).prop_map(|v| {
        let points = v
            .into_iter()
            .map(|(s, r, rel, srel)| HeatingPoint { s, s_sigma: srel * s, rate: r, rate_sigma: rel * r })
            .collect();
        HeatingDataset { points, regime: Regime::Dc, context: dc_context() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_invariant_under_reordering(ds in arb_dataset(), rot in 0usize..12) {
        let Ok(a) = fit_dc(&ds) else { return Ok(()) };
        let mut shuffled = ds.clone();
        let n = shuffled.points.len();
        shuffled.points.rotate_left(rot % n);
        shuffled.points.reverse();
        let b = fit_dc(&shuffled).unwrap();
        let tol = |x: f64, y: f64, s: f64| (x - y).abs() <= 1e-8 * (x.abs() + s);
        prop_assert!(tol(a.slope.value, b.slope.value, a.slope.sigma));
        prop_assert!(tol(a.background.value, b.background.value, a.background.sigma));
        prop_assert!(tol(a.slope.sigma, b.slope.sigma, 0.0));
        prop_assert_eq!(a.background_clamped, b.background_clamped);
    }

    #[test]
    fn common_sigma_rescaling_only_scales_sigmas(ds in arb_dataset(), f in 0.1f64..10.0) {
        let mut scaled = ds.clone();
        for p in &mut scaled.points { p.rate_sigma *= f; }
        // x-errors enter the effective variance on the same footing, so scale them out.
        let opts = FitOptions { x_errors: false, scale_by_chi2: false };
        let Ok(a) = fit_dc_with(&ds, &opts) else { return Ok(()) };
        let b = fit_dc_with(&scaled, &opts).unwrap();
        prop_assert!((a.slope.value - b.slope.value).abs() <= 1e-9 * (a.slope.value.abs() + a.slope.sigma));
        prop_assert!((a.background.value - b.background.value).abs() <= 1e-9 * (a.background.value.abs() + a.background.sigma));
        prop_assert!((b.slope.sigma / a.slope.sigma - f).abs() <= 1e-9 * f);
        prop_assert!((a.chi2_per_dof / b.chi2_per_dof - f * f).abs() <= 1e-8 * f * f);
    }

    #[test]
    fn exact_lines_are_recovered(bg in 0.1f64..100.0, logd in -3.5f64..-1.5, n in 3usize..10) {
        let ctx = dc_context();
        let d = 10f64.powf(logd);
        let k = dc_coefficient(&ctx.species, ctx.omega, d).unwrap();
        let top = 1e3 * bg / k;
        let ds = line(Regime::Dc, ctx, bg, k, &log_levels(top * 1e-4, top, n), 0.1);
        let f = fit_dc(&ds).unwrap();
        let Derived::D(e) = f.derived else { panic!() };
        prop_assert!((e.value / d - 1.0).abs() < 1e-9);
        prop_assert!((f.background.value / bg - 1.0).abs() < 1e-6);
    }
}
