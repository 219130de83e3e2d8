mod common;

use msgate::pulse::{
    apply_offset, concatenate, integrated_phase, load_pulse, mirror_pulse, pulse_from_json, save_pulse,
    scale_amplitude,
};
use msgate::{DetuningOffset, Error, PulseProgram, Segment};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn arb_pulse() -> impl Strategy<Value = PulseProgram> {
    prop::collection::vec((1e-6..20e-6f64, -3e7..3e7f64, 0.0..1e6f64), 1..8).prop_map(|v| {
        PulseProgram::new(v.into_iter().map(|(d, w, a)| Segment::new(d, w, a).unwrap()).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn phase_is_continuous_at_boundaries(p in arb_pulse(), w in 1e7..2e7f64) {
        let edges = common::boundaries(&p);
        for (i, &t) in edges[1..edges.len() - 1].iter().enumerate() {
            let at = integrated_phase(&p, w, t).unwrap();
            let mag: f64 = p.segments().iter().map(|s| (w - s.detuning).abs() * s.duration).sum();
            let tol = 1e-14 * (1.0 + mag);
            prop_assert!((at - common::phase_at(&p, w, t)).abs() < tol);
            let h = 1e-9 * t;
            let left = integrated_phase(&p, w, t - h).unwrap() + (w - p.segments()[i].detuning) * h;
            let right = integrated_phase(&p, w, t + h).unwrap() - (w - p.segments()[i + 1].detuning) * h;
            prop_assert!((left - at).abs() < 1e-12 + tol);
            prop_assert!((right - at).abs() < 1e-12 + tol);
        }
    }

    #[test]
    fn mirror_is_involution_and_keeps_duration(p in arb_pulse(), a in 1e7..2e7f64, b in 1e7..2e7f64) {
        let m = mirror_pulse(&p, a, b);
        prop_assert!((m.duration() - p.duration()).abs() < 1e-18);
        let back = mirror_pulse(&m, a, b);
        for (x, y) in back.segments().iter().zip(p.segments()) {
            prop_assert!((x.detuning - y.detuning).abs() <= 1e-8 * (a + b));
            prop_assert_eq!(x.duration, y.duration);
            prop_assert_eq!(x.amplitude, y.amplitude);
        }
    }

    #[test]
    fn concatenate_is_associative(p in arb_pulse(), q in arb_pulse(), r in arb_pulse()) {
        let left = concatenate(&concatenate(&p, &q), &r);
        let right = concatenate(&p, &concatenate(&q, &r));
        prop_assert_eq!(left.segments(), right.segments());
    }

    #[test]
    fn scale_keeps_duration(p in arb_pulse(), beta in 0.0..3.0f64) {
        let s = scale_amplitude(&p, beta).unwrap();
        prop_assert_eq!(s.duration(), p.duration());
        for i in 0..p.len() {
            prop_assert!((s.effective_amplitude(i) - beta * p.effective_amplitude(i)).abs() <= 1e-9 * p.effective_amplitude(i) + 1e-300);
        }
    }
}

#[test]
fn phase_matches_direct_sum() {
    let p = PulseProgram::new(vec![
        Segment::new(1e-6, 10.0, 1.0).unwrap(),
        Segment::new(2e-6, -20.0, 1.0).unwrap(),
    ])
    .unwrap();
    let th = integrated_phase(&p, 100.0, 2e-6).unwrap();
    assert!((th - (100.0 * 2e-6 - (10.0 * 1e-6 + -20.0 * 1e-6))).abs() < 1e-18);
    assert!(matches!(integrated_phase(&p, 100.0, 4e-6), Err(Error::Range { .. })));
}

#[test]
fn construction_rejects_bad_segments() {
    assert!(Segment::new(0.0, 1.0, 1.0).is_err());
    assert!(Segment::new(1.0, f64::NAN, 1.0).is_err());
    assert!(Segment::new(1.0, 1.0, -1.0).is_err());
    assert!(PulseProgram::new(vec![]).is_err());
    let p = PulseProgram::new(vec![Segment::new(1.0, 1.0, 1.0).unwrap()]).unwrap();
    assert!(scale_amplitude(&p, -1.0).is_err());
    assert!(p.repeated(0).is_err());
}

#[test]
fn offset_shifts_every_detuning() {
    let p = PulseProgram::new(vec![Segment::new(1.0, 5.0, 1.0).unwrap(), Segment::new(1.0, 7.0, 1.0).unwrap()]).unwrap();
    let q = apply_offset(&p, DetuningOffset { epsilon: 2.0 });
    assert_eq!(q.segments()[0].detuning, 3.0);
    assert_eq!(q.segments()[1].detuning, 5.0);
}

#[test]
fn file_round_trip() {
    let p = PulseProgram::with_scale(
        vec![
            Segment::new(3e-6, TAU * 1.98e6, TAU * 50e3).unwrap(),
            Segment::new(4e-6, TAU * 2.01e6, TAU * 40e3).unwrap(),
        ],
        1.25,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    save_pulse(&p, &path).unwrap();
    let back = load_pulse(&path).unwrap();
    assert_eq!(back.scale(), 1.25);
    for (a, b) in back.segments().iter().zip(p.segments()) {
        assert!((a.detuning - b.detuning).abs() / b.detuning < 1e-15);
        assert!((a.amplitude - b.amplitude).abs() / b.amplitude < 1e-15);
        assert_eq!(a.duration, b.duration);
    }
    let bad = r#"{"segments":[{"duration_s":-1,"detuning_hz":0,"amplitude_hz":1}]}"#;
    let e = pulse_from_json(bad, "bad").unwrap_err();
    assert!(e.to_string().contains("duration"), "{e}");
}

#[test]
fn repeated_and_subdivided_keep_duration() {
    let p = PulseProgram::new(vec![Segment::new(1e-6, 1.0, 1.0).unwrap(), Segment::new(2e-6, 1.0, 2.0).unwrap()]).unwrap();
    assert!((p.repeated(3).unwrap().duration() - 9e-6).abs() < 1e-18);
    let s = p.subdivided(4);
    assert_eq!(s.len(), 8);
    assert!((s.duration() - 3e-6).abs() < 1e-18);
}
