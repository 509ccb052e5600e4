use poromix::assembly::Formulation;
use poromix::mechanics::MaterialParams;
use poromix::verification::{energy_decay, DecayConfig};

fn run(formulation: Formulation, xi: f64) {
    let cfg = DecayConfig { formulation, params: MaterialParams::unit(xi), ..Default::default() };
    let r = energy_decay(&cfg).unwrap();
    assert_eq!(r.log.len(), 201);
    assert!(r.log[200].stored < 0.5 * r.log[0].stored, "{} -> {}", r.log[0].stored, r.log[200].stored);
    assert!(r.passed, "{formulation} xi={xi}: max increase {:e}", r.max_increase);
    assert!(r.max_balance_excess <= 1e-8, "{formulation} xi={xi}: balance {:e}", r.max_balance_excess);
}

#[test]
fn fluid_velocity_form_decays() {
    run(Formulation::FluidVelocity, 0.5);
    run(Formulation::FluidVelocity, 0.9);
}

#[test]
fn filtration_velocity_form_decays() {
    run(Formulation::FiltrationVelocity, 0.5);
    run(Formulation::FiltrationVelocity, 0.9);
}
