use qmem::metrics::system_bandwidth;
use qmem::model::presets;
use qmem::optimize::*;
use qmem::response::{default_grid, uniform_grid};

fn compensator_free(p: &qmem::model::SystemParams) -> Vec<FreeParamSpec> {
    vec![
        FreeParamSpec::around(ParamPath::CompensatorRabi, 0.0, 15.0, p).unwrap(),
        FreeParamSpec::around(ParamPath::CompensatorTwoPhoton, -10.0, 0.0, p).unwrap(),
        FreeParamSpec::around(ParamPath::CompensatorCoupling, 0.0, 3000.0, p).unwrap(),
    ]
}

#[test]
fn paths_round_trip() {
    for path in ParamPath::all() {
        assert_eq!(path.name().parse::<ParamPath>().unwrap(), path);
        let mut p = presets::fig5_green();
        path.set(&mut p, 0.125);
        assert_eq!(path.get(&p), 0.125);
    }
    assert!("memory.nonsense".parse::<ParamPath>().is_err());
    let p = presets::fig3a_blue();
    assert_eq!(ParamPath::CompensatorTwoPhoton.get(&p), -3.55);
}

#[test]
fn spec_bounds_are_checked() {
    assert!(FreeParamSpec::new(ParamPath::MemoryRabi, 1.0, 1.0, 1.0).is_err());
    assert!(FreeParamSpec::new(ParamPath::MemoryRabi, 0.0, 1.0, 2.0).is_err());
    assert!(FreeParamSpec::new(ParamPath::MemoryRabi, 0.0, f64::INFINITY, 2.0).is_err());
    assert!(default_free_params(&presets::fig3a_green()).unwrap().len() == 6);
    assert!(default_free_params(&presets::fig3a_blue()).unwrap().len() == 4);
}

#[test]
fn objective_branches() {
    let grid = default_grid();
    let blue = presets::fig3a_blue();
    let f = bandwidth_objective(&blue, &grid, 0.9);
    assert!((f + system_bandwidth(&blue, &grid, 0.9).unwrap()).abs() < 1e-12);
    assert_eq!(f, bandwidth_objective(&blue, &grid, 0.9));
    let mut empty = blue;
    empty.memory.coupling = 0.0;
    assert!((bandwidth_objective(&empty, &grid, 0.9) - 0.9 * PENALTY_SCALE).abs() < 1e-12);
    let mut broken = blue;
    broken.memory.gamma13 = -1.0;
    assert_eq!(bandwidth_objective(&broken, &grid, 0.9), FAILURE_PENALTY);
}

#[test]
fn penalty_is_continuous_at_threshold() {
    // Just below and above the red peak the two branches meet near zero.
    let grid = default_grid();
    let red = presets::fig3a_red();
    let top = 0.948_678;
    let below = bandwidth_objective(&red, &grid, top + 1e-4);
    let above = bandwidth_objective(&red, &grid, top - 1e-4);
    assert!(below > 0.0 && below < 1e-2);
    assert!(above <= 0.0 && above > -0.1);
}

#[test]
fn empty_free_list_is_identity() {
    let p = presets::fig3a_blue();
    let r = maximize_bandwidth(&p, &[], &default_grid(), 0.9, 50).unwrap();
    assert_eq!(r.best_params, p);
    assert_eq!(r.evaluations, 1);
    assert!((r.best_bandwidth - system_bandwidth(&p, &default_grid(), 0.9).unwrap()).abs() < 1e-12);
}

#[test]
fn never_worse_than_start_and_inside_bounds() {
    let grid = uniform_grid(-3.0, 3.0, 601).unwrap();
    let p = presets::fig3a_blue();
    let free = compensator_free(&p);
    let r = maximize_bandwidth(&p, &free, &grid, 0.9, 120).unwrap();
    assert!(r.evaluations <= 120);
    assert!(r.best_objective <= r.trace[0].objective);
    assert!(r.best_bandwidth >= system_bandwidth(&p, &grid, 0.9).unwrap());
    for t in &r.trace {
        for (spec, &x) in free.iter().zip(&t.x) {
            assert!(spec.lower <= x && x <= spec.upper);
        }
    }
    let again = system_bandwidth(&r.best_params, &grid, 0.9).unwrap();
    assert!((again - r.best_bandwidth).abs() < 1e-9);
}

#[test]
fn recovers_from_perturbed_two_photon_detuning() {
    let grid = default_grid();
    let reference = system_bandwidth(&presets::fig3a_blue(), &grid, 0.9).unwrap();
    let mut start = presets::fig3a_blue();
    start.compensator.two_photon += 1.0;
    let r = maximize_bandwidth(&start, &compensator_free(&start), &grid, 0.9, 500).unwrap();
    assert!(r.best_bandwidth >= 0.95 * reference, "{} vs {reference}", r.best_bandwidth);
}

#[test]
fn zero_budget_and_bad_threshold() {
    let p = presets::fig3a_blue();
    assert!(maximize_bandwidth(&p, &[], &default_grid(), 0.9, 0).is_err());
    assert!(maximize_bandwidth(&p, &[], &default_grid(), 1.2, 10).is_err());
}

#[test]
fn baseline_retuning_widens_the_red_band() {
    let grid = default_grid();
    let p = presets::fig3a_blue();
    let b = reoptimized_baseline(&p, &grid, 0.9, 200).unwrap();
    assert_eq!(b.best_params.compensator.rabi, 0.0);
    assert!(b.best_bandwidth >= system_bandwidth(&presets::fig3a_red(), &grid, 0.9).unwrap());
    assert!((b.best_params.memory.rabi - 8.67).abs() < 0.1);
}
