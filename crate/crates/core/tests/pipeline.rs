use num_rational::Rational64;
use proptest::prelude::*;

use interp_lab::grid::{read_gfn, write_gfn, FamilySpec, Generator, GridFunction, GridSpec};
use interp_lab::harness::{ratio, InequalityInstance};
use interp_lab::iso::{inner_parallel, ball_comparison_check, outer_parallel, RasterSet};
use interp_lab::norm::{extended_norm, weak_lorentz_norm};
use interp_lab::proof::{balance_s, pointwise_estimate_check, split_seminorm_check};

fn gaussian_2d(half: f64, h: f64) -> GridFunction {
    let m = (2.0 * half / h).round() as usize + 1;
    GridFunction::from_fn(vec![m, m], vec![h, h], vec![-half, -half], |x| (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap()
}

#[test]
fn gaussian_balance_residual_at_fine_spacing() {
    let u = gaussian_2d(2.5, 1.0 / 256.0);
    let b = balance_s(&u, 2.0, 1.0, -4.0).unwrap();
    assert!(b.monotone);
    assert!(b.boundary.is_none());
    assert!(b.residual < 1e-3, "residual {} step {}", b.residual, b.step);
    assert!(b.residual <= b.step.abs() + 1e-12);
}

#[test]
fn gaussian_balance_in_one_dimension_is_limited_by_the_step() {
    // in 1D each sample level removes a full cell from λ, so the jump, not
    // the bisection, bounds the residual
    let h = 1.0 / 256.0;
    let u = GridFunction::from_fn(vec![2049], vec![h], vec![-4.0], |x| (-x[0] * x[0]).exp()).unwrap();
    let b = balance_s(&u, 2.0, 1.0, -2.0).unwrap();
    assert!(b.monotone);
    assert!(b.residual <= b.step.abs() + 1e-12);
    assert!(b.step.abs() < 0.05);
}

#[test]
fn gfn_round_trip_preserves_norms() {
    let fam = FamilySpec::new(Generator::SmoothedNoise, GridSpec::centered(2, 2.0, 48)).range("width", 0.2, 0.5);
    let u = fam.sample(3).unwrap().function;
    let mut buf = Vec::new();
    write_gfn(&mut buf, &u).unwrap();
    let v = read_gfn(&mut buf.as_slice()).unwrap();
    assert_eq!(u.values(), v.values());
    for p in ["2", "inf", "-4", "-2"] {
        let p = p.parse().unwrap();
        assert_eq!(extended_norm(&u, &p).unwrap().value, extended_norm(&v, &p).unwrap().value);
    }
    assert_eq!(weak_lorentz_norm(&u, 1.5).unwrap().value, weak_lorentz_norm(&v, 1.5).unwrap().value);
}

#[test]
fn rasterized_ball_matches_itself_and_two_balls_are_strict() {
    for cells in [64, 128] {
        let ball = RasterSet::ball(2, 2.0, cells, 1.2).unwrap();
        let ts: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        for r in ball_comparison_check(&ball, &ts).unwrap() {
            assert!(r.margin.abs() <= r.tolerance, "cells {cells} t {}: {}", r.t, r.margin);
        }
    }

    let cells = 128;
    let h = 4.0 / cells as f64;
    let a = 0.7;
    let two = RasterSet::from_fn(vec![cells; 2], vec![h; 2], vec![-2.0 + 0.5 * h; 2], |x| {
        ((x[0] - 1.1).powi(2) + x[1] * x[1]).sqrt() < a || ((x[0] + 1.1).powi(2) + x[1] * x[1]).sqrt() < a
    })
    .unwrap();
    let ts: Vec<f64> = (4..20).map(|i| i as f64 * h).collect();
    for r in ball_comparison_check(&two, &ts).unwrap() {
        assert!(r.inner_measure < r.ball_measure, "t {}", r.t);
    }
}

#[test]
fn ball_margin_shrinks_under_refinement() {
    let blob = |cells: usize| {
        let h = 4.0 / cells as f64;
        RasterSet::from_fn(vec![cells; 2], vec![h; 2], vec![-2.0 + 0.5 * h; 2], |x| {
            (x[0] / 1.3).powi(2) + (x[1] / 0.8).powi(2) < 1.0
        })
        .unwrap()
    };
    let ts = [0.1, 0.3, 0.5];
    let worst = |s: &RasterSet| {
        ball_comparison_check(s, &ts).unwrap().iter().map(|r| r.margin.max(0.0) + r.tolerance).fold(0.0, f64::max)
    };
    let coarse = worst(&blob(64));
    let fine = worst(&blob(128));
    assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
}

#[test]
fn split_bounds_bracket_the_full_seminorm() {
    let fam = FamilySpec::new(Generator::MultiBump, GridSpec::centered(1, 2.0, 256)).range("count", 1.0, 4.0);
    for seed in 0..5 {
        let u = fam.sample(seed).unwrap().function;
        let rep = split_seminorm_check(&u, -2.0, -1.0, 1.0, 0.3).unwrap();
        assert!(rep.near.max(rep.far) <= rep.full);
        assert!(rep.full <= rep.near + rep.far);
    }
}

fn tent(width: f64, amplitude: f64) -> GridFunction {
    let h = 1.0 / 128.0;
    GridFunction::from_fn(vec![513], vec![h], vec![-2.0], |x| amplitude * (1.0 - x[0].abs() / width).max(0.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolation_ratio_is_dilation_invariant(width in 0.2f64..1.5, amp in 0.1f64..5.0, num in 1i64..4, den in 1i64..4) {
        let inst = InequalityInstance::interpolation(1, "-2", "1", "1/2").unwrap();
        let u = tent(width, amp);
        let a = ratio(&u, &inst).unwrap().ratio.unwrap();
        let b = ratio(&u.dilate(Rational64::new(num, den)).unwrap(), &inst).unwrap().ratio.unwrap();
        prop_assert!((a.ln() - b.ln()).abs() < 1e-8);
    }

    #[test]
    fn pointwise_constant_is_homogeneous(width in 0.2f64..1.5, c in prop::sample::select(vec![2.0, 1.0 / 3.0, 10.0])) {
        let u = tent(width, 1.0);
        let a = pointwise_estimate_check(&u, 1.0, -1.0).unwrap().constant;
        let b = pointwise_estimate_check(&u.scale(c), 1.0, -1.0).unwrap().constant;
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
    }

    #[test]
    fn opening_stays_inside(seed in 0u64..200, steps in 1usize..4) {
        let fam = FamilySpec::new(Generator::SmoothedNoise, GridSpec::centered(2, 2.0, 40)).range("width", 0.2, 0.5);
        let u = fam.sample(seed).unwrap().function;
        let set = RasterSet::threshold(&u, 0.3 * u.max_abs()).unwrap();
        let t = steps as f64 * set.spacing()[0];
        let opened = outer_parallel(&inner_parallel(&set, t).unwrap(), t).unwrap();
        prop_assert!(opened.is_subset(&set));
    }
}
