use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qmem::model::{presets, MemoryBackground, Protocol, SystemParams};
use qmem::response::*;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn arbitrary_params() -> impl Strategy<Value = SystemParams> {
    (
        0.0..20.0f64,
        50.0..200.0f64,
        0.0..1500.0f64,
        0.5..20.0f64,
        0.0..10.0f64,
        -8.0..8.0f64,
        0.0..1500.0f64,
        0usize..3,
        any::<bool>(),
    )
        .prop_map(|(rabi, det, c1, width, rabi2, delta, c2, shape, modulated)| {
            let mut p = presets::fig3a_blue();
            p.memory.rabi = rabi;
            p.memory.detuning = det;
            p.memory.coupling = c1;
            p.memory.broadening.width = width;
            p.memory.broadening.shape = [
                qmem::model::Shape::Lorentzian,
                qmem::model::Shape::Gaussian,
                qmem::model::Shape::Rectangular,
            ][shape];
            p.compensator.rabi = rabi2;
            p.compensator.two_photon = delta;
            p.compensator.coupling = c2;
            p.compensator.modulation.n_c = modulated as u32;
            p
        })
}

#[test]
fn empty_cavity() {
    let p = SystemParams::empty_cavity();
    for w in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        assert!((xi(&p, w, XiSign::Plus).unwrap() - Complex64::new(0.5, w)).norm() < 1e-15);
        assert!((xi(&p, w, XiSign::Minus).unwrap() - Complex64::new(0.5, -w)).norm() < 1e-15);
        let r = reflectivity(&p, w).unwrap();
        assert!((r - Complex64::new(0.5, w) / Complex64::new(0.5, -w)).norm() < 1e-15);
        assert!((r.norm() - 1.0).abs() < 1e-15);
        assert_eq!(transfer(&p, w).unwrap(), ZERO);
    }
    assert_eq!(echo_phase(&p, 0.0).unwrap(), 0.0);
    assert!((echo_phase(&p, 0.5).unwrap() + PI / 4.0).abs() < 1e-15);
}

#[test]
fn matched_point_reflects_nothing() {
    let w = 0.37;
    let plus = xi_from(1.0, Complex64::new(0.5, 0.0), Complex64::new(-w, 0.0), w, XiSign::Plus);
    assert_eq!(plus, ZERO);
    let minus = xi_from(1.0, Complex64::new(0.5, 0.0), Complex64::new(-w, 0.0), w, XiSign::Minus);
    assert_eq!(plus / minus, ZERO);
}

#[test]
fn figure_3a_reflectance_at_line_center() {
    let red = reflectivity(&presets::fig3a_red(), 0.0).unwrap().norm_sqr();
    assert!(red < 0.05);
    assert!((red - 2.895_555_588_333_571e-2).abs() < 1e-12);
    // The compensated configuration is not matched at omega = 0; its band
    // sits on the red side of the line.
    let blue = reflectivity(&presets::fig3a_blue(), 0.0).unwrap().norm_sqr();
    assert!((blue - 3.463_158_271_155_325e-1).abs() < 1e-12);
}

#[test]
fn figure_3a_uncompensated_line_center() {
    let e = efficiency(&presets::fig3a_red(), 0.0).unwrap();
    assert!(e >= 0.9);
    assert!((e - 9.429_273_124_498_416e-1).abs() < 1e-12);
}

#[test]
fn far_detuned_light_is_not_stored() {
    for p in [presets::fig3a_red(), presets::fig3a_blue(), presets::fig3a_green()] {
        assert!(efficiency(&p, 50.0).unwrap() < 0.01);
        assert!(efficiency(&p, -50.0).unwrap() < 0.01);
    }
}

#[test]
fn no_atoms_nothing_stored() {
    let mut p = presets::fig3a_blue();
    p.memory.coupling = 0.0;
    for w in [-1.0, 0.0, 1.0] {
        assert_eq!(transfer(&p, w).unwrap(), ZERO);
        assert_eq!(transfer_for(&p, Protocol::Crib, w).unwrap(), ZERO);
    }
}

#[test]
fn echo_phase_near_matching() {
    let p = presets::fig3a_red();
    assert!((echo_phase(&p, 0.0).unwrap() - 5.517_784_629_959_180_5e-2).abs() < 1e-12);
    // phi(w) + phi(-w) stays close to 2 phi(0): the residual reactance of
    // the matched line is not odd in omega.
    let s = echo_phase(&p, 0.1).unwrap() + echo_phase(&p, -0.1).unwrap();
    assert!((s - 1.096_990_382_508_209e-1).abs() < 1e-12);
    let s = echo_phase(&p, 0.2).unwrap() + echo_phase(&p, -0.2).unwrap();
    assert!((s - 1.077_747_296_612_71e-1).abs() < 1e-12);
}

#[test]
fn phase_unwrapping() {
    let mut ph = vec![3.0, -3.1, 3.05, -3.0, 2.9];
    unwrap_phase(&mut ph);
    for w in ph.windows(2) {
        assert!((w[1] - w[0]).abs() < PI);
    }
    assert!((ph[1] - (-3.1 + 2.0 * PI)).abs() < 1e-15);
    let grid = uniform_grid(-3.0, 3.0, 301).unwrap();
    let c = echo_phase_curve(&presets::fig3a_green(), &grid, true).unwrap();
    for w in c.values().windows(2) {
        assert!((w[1] - w[0]).abs() < PI);
    }
}

#[test]
fn beam_splitter_limits() {
    let p = presets::fig3a_red();
    let t = transfer(&p, 0.0).unwrap();
    let c = echo_coefficients(&p, 0.0, 0.0).unwrap();
    assert_eq!(c.signal, t);
    assert!((c.vacuum - (1.0 - t.norm_sqr()).sqrt()).abs() < 1e-15);
    let c = echo_coefficients(&p, 0.0, 10.0).unwrap();
    assert!((c.signal.norm() - (-0.002f64).exp() * t.norm()).abs() < 1e-15);
    assert!(matches!(
        beam_splitter(Complex64::new(1.1, 0.0), 1e-4, 0.0, 0.3),
        Err(qmem::error::Error::ModelViolation { .. })
    ));
    assert!(beam_splitter(Complex64::new(1.0 + 1e-10, 0.0), 1e-4, 0.0, 0.3).is_ok());
}

#[test]
fn stored_coherence_values() {
    let p = presets::fig3a_blue();
    let one = Complex64::new(1.0, 0.0);
    let v = stored_coherence(&p, 0.0, 0.0, one).unwrap();
    assert!((v - Complex64::new(-2.614_393_872_598_709, 3.726_676_384_233_965)).norm() < 1e-12);
    let mut off = p;
    off.memory.rabi = 0.0;
    assert_eq!(stored_coherence(&off, 0.0, 3.0, one).unwrap(), ZERO);
}

#[test]
fn passivity_on_figure_sets() {
    let grid = uniform_grid(-3.0, 3.0, 601).unwrap();
    for (name, p) in presets::all() {
        if name == "fig3b_green" {
            continue;
        }
        let c = efficiency_curve(&p, &grid).unwrap();
        for (w, &e) in c.iter() {
            assert!(e <= 1.0 + 1e-9, "{name}: efficiency {e} at {w}");
            assert!(e >= 0.0);
        }
    }
}

#[test]
fn explicit_background_detunes_the_cavity() {
    let mut p = presets::fig3a_red();
    p.cavity.memory_background = MemoryBackground::Explicit;
    assert!(efficiency(&p, 0.0).unwrap() < 0.01);
}

#[test]
fn curve_construction() {
    assert!(SpectralCurve::new(vec![0.0, 1.0], vec![1.0]).is_err());
    assert!(SpectralCurve::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
    assert!(SpectralCurve::<f64>::new(vec![], vec![]).is_err());
    assert!(efficiency_curve(&presets::fig3a_red(), &[0.0, 0.0]).is_err());
    let g = uniform_grid(-1.0, 1.0, 5).unwrap();
    assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    assert!(uniform_grid(1.0, 1.0, 5).is_err());
    assert!(uniform_grid(0.0, 1.0, 1).is_err());
    assert_eq!(default_grid().len(), 2001);
}

#[test]
fn spectrum_columns_are_consistent() {
    let p = presets::fig3a_green();
    let grid = uniform_grid(-1.0, 1.0, 41).unwrap();
    let s = spectrum(&p, &grid).unwrap();
    for (w, v) in s.iter() {
        assert!((v.efficiency - efficiency(&p, w).unwrap()).abs() < 1e-15);
        assert!((v.reflectance - reflectivity(&p, w).unwrap().norm_sqr()).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn xi_sum_rule(p in arbitrary_params(), w in -3.0..3.0f64) {
        let s = xi(&p, w, XiSign::Plus).unwrap() + xi(&p, w, XiSign::Minus).unwrap();
        prop_assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-14 * (1.0 + xi(&p, w, XiSign::Minus).unwrap().norm()));
    }

    #[test]
    fn protocol_ratio_identity(p in arbitrary_params(), w in -3.0..3.0f64) {
        let plus = transfer_for(&p, Protocol::AfcRose, w).unwrap();
        let minus = transfer_for(&p, Protocol::Crib, w).unwrap();
        let lhs = plus * xi(&p, w, XiSign::Minus).unwrap();
        let rhs = minus * xi(&p, -w, XiSign::Minus).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-300));
    }

    #[test]
    fn beam_splitter_is_unitary(re in -0.7..0.7f64, im in -0.7..0.7f64, tau in 0.0..2000.0f64, g in 0.0..1e-3f64) {
        let c = beam_splitter(Complex64::new(re, im), g, tau, 0.0).unwrap();
        prop_assert!((c.signal.norm_sqr() + c.vacuum * c.vacuum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_decays_at_the_spin_rate(t in 0.0..5000.0f64, d in -2.0..2.0f64) {
        let p = presets::fig3a_blue();
        let one = Complex64::new(1.0, 0.0);
        let a = stored_coherence(&p, d, 0.0, one).unwrap().norm();
        let b = stored_coherence(&p, d, t, one).unwrap().norm();
        prop_assert!((b - a * (-p.memory.gamma12 * t).exp()).abs() <= 1e-12 * a);
    }
}
