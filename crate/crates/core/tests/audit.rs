mod common;

use polyflow::audit::evaluate_schedule;
use polyflow::scenario::Schedule;

use common::{three_bus, toy_scenario_file};

#[test]
fn zero_demand_and_zero_schedule_cost_nothing() {
    let net = three_bus();
    let mut file = toy_scenario_file(0.0);
    for load in &mut file.series.nominal_load {
        load.p_mw = 0.0;
        load.q_mvar = 0.0;
    }
    file.dgs[0].available_mw = vec![0.0, 0.0];
    let scn = file.resolve(&net).unwrap();
    let report = evaluate_schedule(&net, &scn, &Schedule::zeros(2, 1, 1), None, None).unwrap();
    assert!(report.nonconverged_steps.is_empty());
    assert_eq!(report.total_cost, 0.0);
    assert_eq!(report.max_voltage_violation, 0.0);
    assert_eq!(report.max_apparent_flow_pu, 0.0);
    assert!(report.max_h_true < 0.0);
    for s in &report.steps {
        assert_eq!(s.p_loss_true, Some(0.0));
        assert_eq!(s.v_min, Some(1.0));
    }
}

#[test]
fn overloaded_feeder_shows_violations() {
    // 8 MW of load and 2 MW of generation behind a 5 MVA limit: the first
    // branch carries at least the 6 MW net load.
    let net = three_bus();
    let scn = toy_scenario_file(8.0).resolve(&net).unwrap();
    let report = evaluate_schedule(&net, &scn, &Schedule::zeros(2, 1, 1), None, None).unwrap();
    assert!(report.nonconverged_steps.is_empty());
    assert!(report.max_apparent_flow_pu > 0.6);
    assert!(report.max_h_true > 0.0);
    assert!(report.total_cost > 0.0);
}

#[test]
fn comfort_excursion_is_measured() {
    // No cooling under a 0.2 MW heat gain lets the room drift above 28 °C.
    let net = three_bus();
    let scn = toy_scenario_file(1.0).resolve(&net).unwrap();
    let idle = evaluate_schedule(&net, &scn, &Schedule::zeros(2, 1, 1), None, None).unwrap();
    assert!(idle.max_comfort_violation > 0.0);
    let mut cooled = Schedule::zeros(2, 1, 1);
    cooled.p_hv = vec![vec![0.1], vec![0.1]];
    let report = evaluate_schedule(&net, &scn, &cooled, None, None).unwrap();
    assert_eq!(report.max_comfort_violation, 0.0);
}

#[test]
fn schedule_shape_is_checked() {
    let net = three_bus();
    let scn = toy_scenario_file(1.0).resolve(&net).unwrap();
    assert!(evaluate_schedule(&net, &scn, &Schedule::zeros(3, 1, 1), None, None).is_err());
}
