//! End-to-end checks of the headline numbers. Each test writes one
//! `PASS`/`FAIL` line to stderr (uncaptured) before asserting.

use std::io::Write;
use std::time::Instant;

use qmem::cli::parse_config;
use qmem::lineshapes::{beta1, beta1_ab, beta2, Beta1Method};
use qmem::metrics::{delay_bandwidth_product, system_band, system_bandwidth};
use qmem::model::{presets, Band, Protocol, Shape, SystemParams};
use qmem::noise::{integrated_noise, noise_curve, NoisePasses};
use qmem::optimize::{maximize_bandwidth, reoptimized_baseline, FreeParamSpec, ParamPath};
use qmem::response::{
    beam_splitter, efficiency_curve, reflectivity, transfer, transfer_for, uniform_grid, xi, XiSign,
    PASSIVITY_SLACK,
};

fn report(criterion: u32, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance {criterion:>2}: {verdict} {detail}");
}

fn grid() -> Vec<f64> {
    uniform_grid(-3.0, 3.0, 2001).unwrap()
}

fn within(measured: f64, target: f64, rel: f64) -> bool {
    (measured - target).abs() <= rel * target
}

/// Every shipped fixture alongside the in-code presets.
fn bundled() -> Vec<(String, SystemParams)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut out: Vec<(String, SystemParams)> =
        presets::all().into_iter().map(|(n, p)| (n.to_string(), p)).collect();
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let cfg = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        out.push((path.file_name().unwrap().to_string_lossy().into_owned(), cfg.system));
    }
    out
}

#[test]
fn criterion_01_lorentzian_expansion_factors() {
    let grid = grid();
    let red = presets::fig3a_red();
    let variants = [("single", presets::fig3a_blue()), ("modulated", presets::fig3a_green())];
    let targets = [(0.9, [3.32, 5.85]), (0.95, [4.52, 9.26])];

    let mut slowest: f64 = 0.0;
    let mut bw = |p: &SystemParams, t: f64| {
        let start = Instant::now();
        let b = system_bandwidth(p, &grid, t).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        b
    };

    let mut shared_ok = true;
    let mut alt_ok = true;
    let mut detail = String::new();
    for (t, want) in targets {
        let shared = bw(&red, t);
        let retuned = reoptimized_baseline(&red, &grid, t, 200).unwrap();
        let alt = retuned.best_bandwidth;
        for ((name, p), target) in variants.iter().zip(want) {
            let b = bw(p, t);
            let r_shared = if shared > 0.0 { b / shared } else { f64::NAN };
            let r_alt = if alt > 0.0 { b / alt } else { f64::NAN };
            shared_ok &= within(r_shared, target, 0.15);
            alt_ok &= within(r_alt, target, 0.15);
            detail.push_str(&format!(
                "[{t} {name}: shared {r_shared:.3}, retuned {r_alt:.3}, target {target}] "
            ));
        }
        detail.push_str(&format!(
            "[{t} baselines: shared {shared:.4}, retuned {alt:.4} at rabi {:.3}] ",
            retuned.best_params.memory.rabi
        ));
    }
    let fast = slowest < 10.0;
    detail.push_str(&format!("slowest curve {slowest:.3}s"));
    let passed = (shared_ok || alt_ok) && fast;
    report(1, passed, &detail);
    assert!(passed, "{detail}");
}

#[test]
fn criterion_02_band_exceeds_empty_cavity_linewidth() {
    let grid = grid();
    let configs = [
        ("fig3a_blue", presets::fig3a_blue()),
        ("fig3a_green", presets::fig3a_green()),
        ("fig3b_blue", presets::fig3b_blue()),
        ("fig3b_green", presets::fig3b_green()),
    ];
    let mut passed = true;
    let mut detail = String::new();
    for (name, p) in configs {
        let b = system_bandwidth(&p, &grid, 0.9).unwrap();
        passed &= b > 1.0;
        detail.push_str(&format!("{name} {b:.4}; "));
    }
    report(2, passed, &format!("0.9 bands in kappa: {detail}need > 1"));
    assert!(passed, "{detail}");
}

#[test]
fn criterion_03_rectangular_ordering() {
    let grid = grid();
    let mut passed = true;
    let mut detail = String::new();
    for (fig, [r, b, g]) in [
        ("3b", [presets::fig3b_red(), presets::fig3b_blue(), presets::fig3b_green()]),
        ("5", [presets::fig5_red(), presets::fig5_blue(), presets::fig5_green()]),
    ] {
        assert_eq!(r.memory.broadening.shape, Shape::Rectangular);
        let [br, bb, bg] = [r, b, g].map(|p| system_bandwidth(&p, &grid, 0.9).unwrap());
        let ordered = bg > bb && bb > br;
        let ratio = if br > 0.0 { bb / br } else { f64::NAN };
        passed &= ordered && ratio > 2.0;
        detail.push_str(&format!(
            "[fig{fig}: red {br:.4} blue {bb:.4} green {bg:.4}, blue/red {ratio:.3}] "
        ));
    }
    report(3, passed, &format!("{detail}need green > blue > red and blue/red > 2"));
    assert!(passed, "{detail}");
}

#[test]
fn criterion_04_noise_photons() {
    let grid = grid();
    let p = presets::fig4();
    assert_eq!(p.compensator.p6, Some(0.05));
    let band = system_band(&p, &grid, 0.9).unwrap().expect("fig4 reaches 0.9");
    let n = integrated_noise(&p, band, NoisePasses::Single).unwrap();
    let sweep: Vec<f64> = (0..5)
        .map(|k| {
            let mut q = p;
            q.compensator.gamma45 = 10f64.powf(-5.0 + 0.75 * k as f64);
            integrated_noise(&q, band, NoisePasses::Single).unwrap()
        })
        .collect();
    let monotone = sweep.windows(2).all(|w| w[1] >= w[0]);
    let passed = n <= 0.05 && monotone;
    report(
        4,
        passed,
        &format!(
            "<n> = {n:.5} over [{:.4}, {:.4}] (need <= 0.05); gamma45 1e-5..1e-2 gives [{}], monotone {monotone}",
            band.lo,
            band.hi,
            sweep.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
        ),
    );
    assert!(passed, "n = {n}, sweep {sweep:?}");
}

#[test]
fn criterion_05_closed_forms_match_quadrature() {
    let grid = uniform_grid(-3.0, 3.0, 101).unwrap();
    let cases = [
        ("lorentzian", presets::fig3a_blue().memory),
        ("rectangular", presets::fig3b_blue().memory),
        ("gaussian", {
            let mut m = presets::fig3a_blue().memory;
            m.broadening.shape = Shape::Gaussian;
            m
        }),
    ];
    let mut passed = true;
    let mut detail = String::new();
    for (name, m) in cases {
        let worst = grid.iter().fold(0.0f64, |acc, &w| {
            let a = beta1(&m, w, Beta1Method::ClosedForm).unwrap();
            let b = beta1(&m, w, Beta1Method::Quadrature).unwrap();
            acc.max((a - b).norm() / b.norm())
        });
        passed &= worst < 1e-6;
        detail.push_str(&format!("{name} {worst:.2e}; "));
    }
    report(5, passed, &format!("worst relative deviation: {detail}need < 1e-6"));
    assert!(passed, "{detail}");
}

#[test]
fn criterion_06_exact_identities() {
    let grid = uniform_grid(-3.0, 3.0, 101).unwrap();
    let (mut sum_rule, mut split, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    for (_, p) in presets::all() {
        for &w in &grid {
            let plus = xi(&p, w, XiSign::Plus).unwrap();
            let minus = xi(&p, w, XiSign::Minus).unwrap();
            sum_rule = sum_rule.max((plus + minus - p.cavity.kappa).norm() / (p.cavity.kappa + minus.norm()));

            let t_rose = transfer_for(&p, Protocol::AfcRose, w).unwrap();
            let t_crib = transfer_for(&p, Protocol::Crib, w).unwrap();
            let minus_neg = xi(&p, -w, XiSign::Minus).unwrap();
            let (l, r) = (t_rose * minus, t_crib * minus_neg);
            ratio = ratio.max((l - r).norm() / l.norm().max(r.norm()));

            let t = if t_rose.norm() <= 1.0 { t_rose } else { t_rose / t_rose.norm() };
            for tau in [0.0, 10.0, 1000.0] {
                let c = beam_splitter(t, p.memory.gamma12, tau, w).unwrap();
                split = split.max((c.signal.norm_sqr() + c.vacuum * c.vacuum - 1.0).abs());
            }
        }
    }
    let passed = sum_rule < 1e-12 && split < 1e-12 && ratio < 1e-12;
    report(
        6,
        passed,
        &format!("xi sum {sum_rule:.2e}, beam splitter {split:.2e}, T ratio {ratio:.2e} (need < 1e-12)"),
    );
    assert!(passed);
}

#[test]
fn criterion_07_passivity_and_positivity() {
    let grid = grid();
    let mut failures = Vec::new();
    let mut worst_eff: (f64, String) = (f64::NEG_INFINITY, String::new());
    let mut min_s = f64::INFINITY;
    for (name, p) in bundled() {
        let eff = efficiency_curve(&p, &grid).unwrap();
        let (i, top) = eff
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        if top > worst_eff.0 {
            worst_eff = (top, name.clone());
        }
        if top > 1.0 + PASSIVITY_SLACK {
            failures.push(format!("{name} efficiency {top:.6} at omega {:.4}", grid[i]));
        }
        let s = noise_curve(&p, &grid).unwrap();
        let lowest = s.values().iter().copied().fold(f64::INFINITY, f64::min);
        min_s = min_s.min(lowest);
        if lowest < 0.0 {
            failures.push(format!("{name} S min {lowest:.3e}"));
        }
    }
    let passed = failures.is_empty();
    report(
        7,
        passed,
        &format!(
            "max efficiency {:.6} ({}), min S {min_s:.3e}; violations: [{}]",
            worst_eff.0,
            worst_eff.1,
            failures.join("; ")
        ),
    );
    assert!(passed, "{failures:?}");
}

#[test]
fn criterion_08_trivial_limits() {
    let grid = uniform_grid(-3.0, 3.0, 201).unwrap();
    let (mut b2, mut b1ab, mut t, mut r) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (_, p) in presets::all() {
        let mut no_comp = p;
        no_comp.compensator.rabi = 0.0;
        let mut no_mem = p;
        no_mem.memory.rabi = 0.0;
        let mut empty = p;
        empty.memory.coupling = 0.0;
        empty.compensator.coupling = 0.0;
        for &w in &grid {
            b2 = b2.max(beta2(&no_comp.compensator, w).unwrap().norm());
            b1ab = b1ab.max(beta1_ab(&no_mem.memory, w, Beta1Method::ClosedForm).unwrap().norm());
            t = t.max(transfer(&no_mem, w).unwrap().norm());
            r = r.max((reflectivity(&empty, w).unwrap().norm() - 1.0).abs());
        }
    }
    let roundoff = 1e-12;
    let passed = b2 <= roundoff && b1ab <= roundoff && t <= roundoff && r <= roundoff;
    report(
        8,
        passed,
        &format!("max |beta2| {b2:.2e}, max |beta1ab| {b1ab:.2e}, max |T| {t:.2e}, max ||r|-1| {r:.2e}"),
    );
    assert!(passed);
}

#[test]
fn criterion_09_optimizer_recovery() {
    let grid = grid();
    let reference_params = presets::fig3a_blue();
    let reference = system_bandwidth(&reference_params, &grid, 0.9).unwrap();
    let mut start = reference_params;
    start.compensator.two_photon += 1.0;
    let free = vec![
        FreeParamSpec::around(ParamPath::CompensatorRabi, 0.0, 15.0, &start).unwrap(),
        FreeParamSpec::around(ParamPath::CompensatorTwoPhoton, -10.0, 0.0, &start).unwrap(),
        FreeParamSpec::around(ParamPath::CompensatorCoupling, 0.0, 3000.0, &start).unwrap(),
    ];
    let started = system_bandwidth(&start, &grid, 0.9).unwrap();
    let r = maximize_bandwidth(&start, &free, &grid, 0.9, 500).unwrap();
    let identity = maximize_bandwidth(&reference_params, &[], &grid, 0.9, 500).unwrap();
    let same = identity.best_params == reference_params && identity.best_bandwidth == reference;
    let passed = r.best_bandwidth >= 0.95 * reference && r.evaluations <= 500 && same;
    report(
        9,
        passed,
        &format!(
            "start {started:.4} -> {:.4} in {} evaluations, reference {reference:.4} (need >= {:.4}); empty free list identity {same}",
            r.best_bandwidth,
            r.evaluations,
            0.95 * reference
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_delay_bandwidth_arithmetic() {
    // A 10 MHz band expressed as 1 kappa with kappa = 10 MHz.
    let d = delay_bandwidth_product(1.0, 1.0, 1e7);
    let also = delay_bandwidth_product(Band::new(-0.25, 0.25).unwrap().width(), 1.0, 2e7);
    let passed = d == 1e7 && also == 1e7;
    report(10, passed, &format!("10 MHz x 1 s = {d:e}; 0.5 kappa at 20 MHz x 1 s = {also:e}"));
    assert!(passed);
}
