mod common;

use common::*;
use msgate::filter::ff_alpha;
use msgate::optimizer::{calibrate_angle, optimize_fm, FfSuppression, OptimizerConfig};
use msgate::pulse::scale_amplitude;
use msgate::kernel::rotation_angle;
use msgate::{Error, IonPair, TARGET_ANGLE};
use std::f64::consts::TAU;

fn full_gate() -> OptimizerConfig {
    OptimizerConfig::default()
}

#[test]
fn robust_design_meets_postconditions() {
    let m = two_ion();
    let pair = IonPair::new(0, 1, &m).unwrap();
    let cfg = full_gate();
    let r = optimize_fm(&cfg, &m, pair).unwrap();
    assert!(r.converged && r.robust);
    assert_eq!(r.pulse.len(), 28);
    assert!(r.pulse.is_time_symmetric());
    assert!((r.diagnostics.theta - TARGET_ANGLE).abs() < cfg.tolerance);
    assert!(r.diagnostics.err_alpha < 1e-4);
    assert!(r.diagnostics.dalpha_norm_sqr() < 1e-4 * cfg.gate_time.powi(2));
    assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.pulse.max_effective_amplitude() <= cfg.max_amplitude);

    // deterministic
    let again = optimize_fm(&cfg, &m, pair).unwrap();
    assert_eq!(again.pulse, r.pulse);
    assert_eq!(again.cost_history, r.cost_history);

    // ᾱ-unconstrained run leaves a much larger drift response
    let plain = optimize_fm(&OptimizerConfig { alpha_bar_weight: 0.0, ..cfg.clone() }, &m, pair).unwrap();
    let ratio = plain.diagnostics.dalpha_norm_sqr().sqrt() / r.diagnostics.dalpha_norm_sqr().sqrt();
    assert!(ratio >= 100.0, "ratio {ratio}");
}

#[test]
fn half_angle_scales_to_full() {
    let s = scenario();
    let full = scale_amplitude(&s.half, 2f64.sqrt()).unwrap();
    assert!((rotation_angle(&full, &s.modes, s.pair) - TARGET_ANGLE).abs() < 1e-12);
}

#[test]
fn ff_suppression_lowers_displacement_filter() {
    let m = two_ion();
    let pair = IonPair::new(0, 1, &m).unwrap();
    let base = full_gate();
    let plain = optimize_fm(&base, &m, pair).unwrap();
    let cfg = OptimizerConfig {
        ff_suppression: Some(FfSuppression { freq_hz: 5e3, weight: 10.0 }),
        ..base
    };
    let supp = optimize_fm(&cfg, &m, pair).unwrap();
    let a = ff_alpha(&plain.pulse, &m, pair, &[5e3]).unwrap()[0];
    let b = ff_alpha(&supp.pulse, &m, pair, &[5e3]).unwrap()[0];
    assert!(a >= 10.0 * b, "plain {a:e} suppressed {b:e}");
}

#[test]
fn calibration_rules() {
    let m = two_ion();
    let pair = IonPair::new(0, 1, &m).unwrap();
    let s = scenario();
    let same = calibrate_angle(&s.half, &m, pair, TARGET_ANGLE / 2.0).unwrap();
    assert!((same.scale() / s.half.scale() - 1.0).abs() < 1e-12);
    let sixteenth = scale_amplitude(&s.half, 0.5f64.sqrt()).unwrap();
    let up = calibrate_angle(&sixteenth, &m, pair, TARGET_ANGLE / 2.0).unwrap();
    assert!((up.scale() / sixteenth.scale() - 2f64.sqrt()).abs() < 1e-12);
    let mut r = rng(5);
    for _ in 0..10 {
        let p = random_pulse(&mut r, 6, 100e-6, TAU * 1.975e6, TAU * 75e3, TAU * 40e3);
        let th = rotation_angle(&p, &m, pair);
        match calibrate_angle(&p, &m, pair, 0.3) {
            Ok(c) => assert!((rotation_angle(&c, &m, pair) - 0.3).abs() < 1e-10),
            Err(e) => {
                assert!(th < 0.0);
                assert!(matches!(e, Error::Calibration(_)));
            }
        }
    }
}

#[test]
fn config_errors() {
    let m = two_ion();
    let pair = IonPair::new(0, 1, &m).unwrap();
    let odd = OptimizerConfig { num_segments: 27, ..Default::default() };
    assert!(matches!(optimize_fm(&odd, &m, pair), Err(Error::Validation { .. })));
    let bounds = OptimizerConfig { detuning_bounds: Some([2.0, 1.0]), ..Default::default() };
    assert!(optimize_fm(&bounds, &m, pair).is_err());
    let weak = OptimizerConfig { max_amplitude: TAU * 1e3, ..Default::default() };
    let e = optimize_fm(&weak, &m, pair).unwrap_err();
    assert!(e.to_string().contains("required amplitude"), "{e}");
}
