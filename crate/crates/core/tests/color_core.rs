use colorgpt::color::{delta_e, quantize};
use colorgpt::{Color, LabColor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

#[test]
fn hex_round_trip_on_random_colors_and_corners() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corners = (0..8u8).map(|i| {
        let c = |bit: u8| if i & bit != 0 { 255 } else { 0 };
        Color::new(c(4), c(2), c(1))
    });
    let random = (0..10_000).map(|_| Color::new(rng.random(), rng.random(), rng.random()));
    for c in corners.chain(random) {
        let hex = c.to_hex();
        assert_eq!(hex.len(), 7);
        assert_eq!(Color::from_hex(&hex).unwrap(), c);
        assert_eq!(Color::from_hex(&hex.to_uppercase().replacen("#X", "#", 1)).unwrap(), c);
    }
}

#[test]
fn malformed_hex_is_rejected() {
    for bad in [
        "", "#", "123456", "#12345", "#1234567", "#12345g", "# 23456", "#ffffff ",
    ] {
        assert!(Color::from_hex(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn lab_matches_reference_values() {
    let table = common::read_json(common::fixtures().join("oracles/lab.json"));
    for row in table.as_array().unwrap() {
        let c = Color::from_hex(row["hex"].as_str().unwrap()).unwrap();
        let want: Vec<f64> = row["lab"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let got = c.to_lab();
        for (g, w) in [got.l, got.a, got.b].into_iter().zip(want) {
            assert!((g - w).abs() < 0.01, "{c:?}: {got:?}");
        }
    }
}

#[test]
fn white_and_black_anchor_the_lightness_axis() {
    let white = Color::WHITE.to_lab();
    let black = Color::BLACK.to_lab();
    assert!((white.l - 100.0).abs() <= 0.1 && white.a.abs() <= 0.1 && white.b.abs() <= 0.1);
    assert!(black.l.abs() <= 0.1 && black.a.abs() <= 0.1 && black.b.abs() <= 0.1);
    assert!((delta_e(white, black) - 100.0).abs() <= 0.5);
}

#[test]
fn lab_round_trip_within_one_per_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1_000 {
        let c = Color::new(rng.random(), rng.random(), rng.random());
        let back = c.to_lab().to_color();
        for (a, b) in c.channels().into_iter().zip(back.channels()) {
            assert!(a.abs_diff(b) <= 1, "{c:?} -> {back:?}");
        }
    }
}

#[test]
fn out_of_gamut_lab_is_clamped() {
    assert_eq!(LabColor::new(100.0, 200.0, -200.0).to_color().channels().len(), 3);
    assert_eq!(LabColor::new(-50.0, 0.0, 0.0).to_color(), Color::BLACK);
}

proptest! {
    #[test]
    fn bins_are_floor_division(r: u8, g: u8, b: u8) {
        let bin = quantize(Color::new(r, g, b));
        prop_assert_eq!((bin.r, bin.g, bin.b), (r / 16, g / 16, b / 16));
    }

    #[test]
    fn delta_e_is_a_metric(a: [u8; 3], b: [u8; 3], c: [u8; 3]) {
        let [a, b, c] = [a, b, c].map(|[r, g, bl]| Color::new(r, g, bl).to_lab());
        prop_assert!(delta_e(a, a) == 0.0);
        prop_assert!((delta_e(a, b) - delta_e(b, a)).abs() < 1e-12);
        prop_assert!(delta_e(a, c) <= delta_e(a, b) + delta_e(b, c) + 1e-9);
    }

    #[test]
    fn lab_stays_in_range(r: u8, g: u8, b: u8) {
        let lab = Color::new(r, g, b).to_lab();
        prop_assert!((0.0..=100.0).contains(&lab.l));
        prop_assert!(lab.a.abs() < 130.0 && lab.b.abs() < 130.0);
    }
}
