use std::f64::consts::PI;

use ionheat::num::{dot, norm, sub};
use ionheat::trap::{
    find_equilibrium, find_rf_null, minimize_gradient, stray_for_axial_gradient, MinimizeOptions, ShimBasis, Trap,
    TrapConfig,
};
use ionheat::{Error, Layout};

fn setup() -> (Layout, TrapConfig) {
    (Layout::bundled(), TrapConfig::bundled())
}

fn shim_basis(layout: &Layout, config: &TrapConfig) -> ShimBasis {
    let op = find_equilibrium(layout, config).unwrap();
    ShimBasis::at(layout, &["A", "B", "L0", "R0"], op.position).unwrap()
}

#[test]
fn rf_amplitude_is_linear_in_v0() {
    let (l, c) = setup();
    let c2 = c.clone().with_rf_amplitude(2.0 * c.rf_amplitude);
    let t1 = Trap::new(&l, &c).unwrap();
    let t2 = Trap::new(&l, &c2).unwrap();
    for p in [[1e-5, 2e-5, 4e-5], [-3e-5, 0.0, 6e-5]] {
        let a = t1.rf_field_amplitude(p).unwrap();
        let b = t2.rf_field_amplitude(p).unwrap();
        for i in 0..3 {
            assert_eq!(b[i], 2.0 * a[i]);
        }
    }
}

#[test]
fn no_transverse_rf_field_on_symmetry_plane() {
    let (l, c) = setup();
    let t = Trap::new(&l, &c).unwrap();
    for p in [[0.0, 0.0, 3e-5], [0.0, 4e-5, 7e-5], [0.0, -5e-5, 5e-5]] {
        let e = t.rf_field_amplitude(p).unwrap();
        assert!(e[0].abs() < 1e-9 * norm(e).max(1.0), "{e:?}");
    }
}

#[test]
fn field_at_null_is_far_below_field_5um_away() {
    let (l, c) = setup();
    let t = Trap::new(&l, &c).unwrap();
    let null = find_rf_null(&l, [0.0, 0.0, l.ion_height_hint]).unwrap();
    assert!((30e-6..70e-6).contains(&null[2]), "null height {}", null[2]);
    let at_null = norm(t.rf_field_amplitude(null).unwrap());
    let off = norm(t.rf_field_amplitude([null[0] + 5e-6, null[1], null[2]]).unwrap());
    assert!(at_null < 0.01 * off, "{at_null} vs {off}");
}

#[test]
fn symmetric_equilibrium_sits_on_the_rf_null() {
    let (l, c) = setup();
    let op = find_equilibrium(&l, &c).unwrap();
    assert!(op.position[0].abs() < 1e-12);
    let t = Trap::new(&l, &c).unwrap();
    let p = op.position;
    let scale = norm(t.grad_e0_sq([p[0], p[1], p[2] + 1e-6]).unwrap());
    assert!(op.grad_e0_sq_cartesian[0].abs() < 1e-9 * scale);
    let null = find_rf_null(&l, op.position).unwrap();
    assert!(norm(sub(op.position, null)) < 1e-9, "{:?} vs {:?}", op.position, null);
}

#[test]
fn principal_axes_are_orthonormal_and_frequencies_positive() {
    let (l, c) = setup();
    let op = find_equilibrium(&l, &c).unwrap();
    for i in 0..3 {
        assert!(op.secular_frequencies[i] > 0.0);
        for j in 0..3 {
            let d = dot(op.principal_axes[i], op.principal_axes[j]);
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-10);
        }
    }
    assert!(op.principal_axes[op.axial][1].abs() > 0.99);
}

#[test]
fn bundled_config_gives_axial_frequency_with_drive_ratio_fifty() {
    let (l, c) = setup();
    let op = find_equilibrium(&l, &c).unwrap();
    let fy = op.axial_frequency() / (2.0 * PI);
    assert!((fy - 1.29e6).abs() < 1.29e6 * 1e-6, "f_y = {fy}");
    let ratio = c.rf_omega / op.axial_frequency();
    assert!((ratio - 50.0).abs() < 1e-4, "ratio {ratio}");
}

#[test]
fn small_radial_stray_field_gives_harmonic_displacement() {
    let (l, c) = setup();
    let op0 = find_equilibrium(&l, &c).unwrap();
    let q = c.species.charge;
    let m = c.species.mass;
    for k in 0..3 {
        if k == op0.axial {
            continue;
        }
        let axis = op0.principal_axes[k];
        let es = 5.0;
        let op = find_equilibrium(&l, &c.clone().with_stray_field(axis.map(|a| a * es))).unwrap();
        let moved = dot(sub(op.position, op0.position), axis);
        let want = q * es / (m * op0.secular_frequencies[k].powi(2));
        assert!((moved - want).abs() < 0.05 * want, "axis {k}: {moved} vs {want}");
    }
}

#[test]
fn gradient_scales_with_v0_squared() {
    let (l, c) = setup();
    let p = [2e-6, -3e-6, 48e-6];
    let g1 = Trap::new(&l, &c).unwrap().grad_e0_sq(p).unwrap();
    let c2 = c.clone().with_rf_amplitude(c.rf_amplitude * 1.37);
    let g2 = Trap::new(&l, &c2).unwrap().grad_e0_sq(p).unwrap();
    for i in 0..3 {
        if g1[i].abs() > 0.0 {
            assert!((g2[i] / g1[i] - 1.37f64.powi(2)).abs() < 1e-8);
        }
    }
}

#[test]
fn hessian_frequencies_match_potential_scans() {
    let (l, c) = setup();
    let t = Trap::new(&l, &c).unwrap();
    let op = find_equilibrium(&l, &c).unwrap();
    let h = 0.2e-6;
    for k in 0..3 {
        let a = op.principal_axes[k];
        let at = |s: f64| t.potential([0, 1, 2].map(|i| op.position[i] + s * a[i])).unwrap();
        let curv = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
        let w = (c.species.charge * curv / c.species.mass).sqrt();
        assert!((w / op.secular_frequencies[k] - 1.0).abs() < 1e-3, "axis {k}: {w} vs {}", op.secular_frequencies[k]);
    }
}

#[test]
fn gradient_vanishes_at_exact_null() {
    let (l, c) = setup();
    let t = Trap::new(&l, &c).unwrap();
    let null = find_rf_null(&l, [0.0, 0.0, l.ion_height_hint]).unwrap();
    let g0 = norm(t.grad_e0_sq(null).unwrap());
    let g1 = norm(t.grad_e0_sq([null[0], null[1], null[2] + 1e-6]).unwrap());
    assert!(g0 < 1e-6 * g1, "{g0} vs {g1}");
}

#[test]
fn equilibrium_search_is_deterministic() {
    let (l, c) = setup();
    let c = c.with_stray_field([30.0, -20.0, 80.0]);
    let a = find_equilibrium(&l, &c).unwrap();
    let b = find_equilibrium(&l, &c).unwrap();
    assert_eq!(a, b);
}

#[test]
fn anti_confining_dc_is_a_numerical_failure() {
    let (l, mut c) = setup();
    for v in c.dc_voltages.values_mut() {
        *v = -*v * 4.0;
    }
    let err = find_equilibrium(&l, &c).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn config_errors_are_validation_errors() {
    let (l, c) = setup();
    let mut bad = c.clone();
    bad.dc_voltages.insert("nope".into(), 1.0);
    assert!(matches!(find_equilibrium(&l, &bad), Err(Error::UnknownGroup(_))));
    let zero = c.with_rf_amplitude(0.0);
    assert!(matches!(find_equilibrium(&l, &zero), Err(Error::NonPositive { .. })));
}

#[test]
fn minimization_without_stray_field_is_a_no_op() {
    let (l, c) = setup();
    let basis = shim_basis(&l, &c);
    let m = minimize_gradient(&l, &c, &basis, &MinimizeOptions::default()).unwrap();
    assert_eq!(m.shims, [0.0; 3]);
    assert_eq!(m.residual, m.initial);
}

#[test]
fn z_shim_dominates_for_a_z_stray_field() {
    let (l, c) = setup();
    let basis = shim_basis(&l, &c);
    let c = c.with_stray_field([0.0, 0.0, 100.0]);
    let m = minimize_gradient(&l, &c, &basis, &MinimizeOptions::default()).unwrap();
    assert!(m.shims[2].abs() > 10.0 * m.shims[0].abs().max(m.shims[1].abs()), "{:?}", m.shims);
    assert!(m.shims[2] != 0.0);
    assert!(m.residual.abs() < m.initial.abs());
}

#[test]
fn minimization_reduces_a_large_gradient_tenfold() {
    let (l, c) = setup();
    let basis = shim_basis(&l, &c);
    let stray = stray_for_axial_gradient(&l, &c, [0.0, 0.0, -1.0], 2e12).unwrap();
    let c = c.with_stray_field(stray);
    let m = minimize_gradient(&l, &c, &basis, &MinimizeOptions::default()).unwrap();
    assert!((m.initial.abs() / 2e12 - 1.0).abs() < 1e-3, "initial {}", m.initial);
    assert!(m.residual.abs() <= 0.1 * m.initial.abs(), "{} -> {}", m.initial, m.residual);
}

#[test]
fn several_axial_gradient_zeros_are_all_reported() {
    let (l, c) = setup();
    let basis = shim_basis(&l, &c);
    let c = c.with_stray_field([0.0, 0.0, 100.0]);
    let m = minimize_gradient(&l, &c, &basis, &MinimizeOptions::default()).unwrap();
    assert!(m.zeros.len() >= 2, "{:?}", m.zeros);
    for w in m.zeros.windows(2) {
        assert!(w[0].shims != w[1].shims);
    }
    let best = m.zeros.iter().map(|z| z.e0_sq).fold(f64::INFINITY, f64::min);
    assert!(m.operating_point.e0_sq <= best * (1.0 + 1e-9) || m.residual.abs() < m.zeros.iter().map(|z| z.axial_gradient.abs()).fold(f64::INFINITY, f64::min));
}
