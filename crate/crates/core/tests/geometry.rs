use ionheat::geometry::{load_layout, Electrode, ElectrodeLayout, Rect, Role};
use ionheat::{Error, Layout};
use proptest::prelude::*;

fn square(id: &str, group: &str, role: Role, x: f64, y: f64, a: f64) -> Electrode<f64> {
    Electrode { id: id.into(), role, group: group.into(), extent: Rect::new(x - a, x + a, y - a, y + a) }
}

#[test]
fn bundled_layout_has_thirteen_electrodes_and_one_rf_group() {
    let l = Layout::bundled();
    assert_eq!(l.electrodes.len(), 13);
    assert_eq!(l.rf_group().unwrap(), "RF");
    assert!(l.approximate);
    assert_eq!(l.ion_height_hint, 50e-6);
    assert_eq!(l.dc_groups(), vec!["A", "B", "L0", "R0"]);
    assert_eq!(l.members("A").count(), 4);
    l.validate_trap().unwrap();
}

#[test]
fn bundled_segments_have_120_um_pitch() {
    let l = Layout::bundled();
    let mut ys: Vec<f64> = l
        .electrodes
        .iter()
        .filter(|e| e.id.starts_with('L') && e.role == Role::Dc)
        .map(|e| 0.5 * (e.extent.y_min + e.extent.y_max))
        .collect();
    ys.sort_by(f64::total_cmp);
    for w in ys.windows(2) {
        assert!((w[1] - w[0] - 120e-6).abs() < 1e-12);
    }
}

#[test]
fn loads_single_square_dc_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.toml");
    std::fs::write(
        &p,
        "version = 1\nion_height_hint = 5e-5\n[[electrode]]\nid = \"sq\"\nrole = \"dc\"\ngroup = \"A\"\n\
         x_min = -5e-5\nx_max = 5e-5\ny_min = -5e-5\ny_max = 5e-5\n",
    )
    .unwrap();
    let l: Layout = load_layout(&p).unwrap();
    assert_eq!(l.electrodes.len(), 1);
    assert!(matches!(l.validate_trap(), Err(Error::Layout(_))));
}

#[test]
fn overlapping_rectangles_are_rejected() {
    let e = vec![square("a", "A", Role::Dc, 0.0, 0.0, 1e-4), square("b", "B", Role::Dc, 1e-4, 0.0, 1e-4)];
    assert!(matches!(ElectrodeLayout::new("x", 5e-5, e), Err(Error::Layout(_))));
}

#[test]
fn edge_contact_is_not_overlap() {
    let e = vec![square("a", "A", Role::Dc, 0.0, 0.0, 1e-4), square("b", "B", Role::Dc, 2e-4, 0.0, 1e-4)];
    assert!(ElectrodeLayout::new("x", 5e-5, e).is_ok());
}

#[test]
fn degenerate_and_mis_tagged_layouts_are_rejected() {
    let mut d = square("a", "A", Role::Dc, 0.0, 0.0, 1e-4);
    d.extent.x_max = d.extent.x_min;
    assert!(ElectrodeLayout::new("x", 5e-5, vec![d]).is_err());

    let two_rf = vec![square("a", "R1", Role::Rf, 0.0, 0.0, 1e-4), square("b", "R2", Role::Rf, 1e-3, 0.0, 1e-4)];
    assert!(ElectrodeLayout::new("x", 5e-5, two_rf).is_err());

    let mixed = vec![square("a", "R", Role::Rf, 0.0, 0.0, 1e-4), square("b", "R", Role::Dc, 1e-3, 0.0, 1e-4)];
    assert!(ElectrodeLayout::new("x", 5e-5, mixed).is_err());

    let dup = vec![square("a", "A", Role::Dc, 0.0, 0.0, 1e-4), square("a", "B", Role::Dc, 1e-3, 0.0, 1e-4)];
    assert!(ElectrodeLayout::new("x", 5e-5, dup).is_err());
}

#[test]
fn malformed_file_is_a_parse_error() {
    assert!(matches!(Layout::from_toml_str("version = 1\nion_height_hint = \"high\""), Err(Error::Parse(_))));
    assert!(matches!(Layout::from_toml_str("not toml at all ["), Err(Error::Parse(_))));
    let wrong_version = Layout::bundled().to_toml_string().unwrap().replacen("version = 1", "version = 7", 1);
    assert!(matches!(Layout::from_toml_str(&wrong_version), Err(Error::Layout(_))));
}

#[test]
fn saved_file_starts_with_version_header() {
    let s = Layout::bundled().to_toml_string().unwrap();
    assert!(s.starts_with("version = 1\n"));
}

#[test]
fn f32_layout_round_trips() {
    let l: ElectrodeLayout<f32> = ElectrodeLayout::bundled();
    let back: ElectrodeLayout<f32> = ElectrodeLayout::from_toml_str(&l.to_toml_string().unwrap()).unwrap();
    assert_eq!(l, back);
}

fn arb_layout() -> impl Strategy<Value = Layout> {
    // Non-overlapping cells on a coarse grid, with random size inside each cell.
    (1usize..8, proptest::collection::vec((0.05f64..0.45, 0.05f64..0.45, 0.0f64..0.1, 0.0f64..0.1), 8), any::<bool>())
        .prop_map(|(n, cells, with_rf)| {
            let cell = 1e-4;
            let electrodes = (0..n)
                .map(|i| {
                    let (w, h, ox, oy) = cells[i];
                    let x0 = (i % 4) as f64 * cell + ox * cell;
                    let y0 = (i / 4) as f64 * cell + oy * cell;
                    let rf = with_rf && i == 0;
                    Electrode {
                        id: format!("e{i}"),
                        role: if rf { Role::Rf } else { Role::Dc },
                        group: if rf { "RF".into() } else { format!("G{}", i % 3) },
                        extent: Rect::new(x0, x0 + w * cell, y0, y0 + h * cell),
                    }
                })
                .collect();
            ElectrodeLayout::new("p", 5e-5, electrodes).unwrap()
        })
}

proptest! {
    #[test]
    fn save_load_round_trip(layout in arb_layout()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.toml");
        layout.save(&p).unwrap();
        let back: Layout = load_layout(&p).unwrap();
        prop_assert_eq!(back, layout);
    }

    #[test]
    fn validation_matches_pairwise_overlap(
        a in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
        b in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
    ) {
        let ra = Rect::new(a.0, a.0 + a.2, a.1, a.1 + a.3);
        let rb = Rect::new(b.0, b.0 + b.2, b.1, b.1 + b.3);
        let overlap = ra.x_min < rb.x_max && rb.x_min < ra.x_max && ra.y_min < rb.y_max && rb.y_min < ra.y_max;
        let e = vec![
            Electrode { id: "a".into(), role: Role::Dc, group: "A".into(), extent: ra },
            Electrode { id: "b".into(), role: Role::Dc, group: "B".into(), extent: rb },
        ];
        prop_assert_eq!(ElectrodeLayout::new("p", 1.0, e).is_ok(), !overlap);
    }
}
