#![allow(dead_code)]

use polyflow::gridsim::{Branch, Bus, RadialNetwork};
use polyflow::scenario::{Scenario, ScenarioFile};

/// Root, a building bus and a load bus with a generator, in a line.
pub fn three_bus() -> RadialNetwork {
    RadialNetwork {
        name: "three-bus".into(),
        buses: (0..3).map(|i| Bus { index: i, is_root: i == 0 }).collect(),
        branches: vec![
            Branch {
                from: 0,
                to: 1,
                r_pu: 0.01,
                x_pu: 0.02,
                s_max_pu: None,
            },
            Branch {
                from: 1,
                to: 2,
                r_pu: 0.02,
                x_pu: 0.03,
                s_max_pu: None,
            },
        ],
        root_voltage_pu: 1.0,
        v_min_pu: 0.95,
        v_max_pu: 1.05,
        s_max_pu: 0.5,
        base_mva: 10.0,
        base_kv: 12.66,
    }
}

/// One building on bus 1, a 1 MW load and a 2 MW generator on bus 2, two hourly steps.
pub fn toy_scenario_file(load_mw: f64) -> ScenarioFile {
    let text = format!(
        r#"{{
        "name": "toy",
        "dt_hours": 1.0,
        "buildings": [{{
            "name": "b1", "bus": 1,
            "heat_capacity_mwh_per_c": 1.0, "heat_transfer_mw_per_c": 0.03,
            "cop": 6.0, "power_factor": 0.98,
            "theta_min_c": 24.0, "theta_max_c": 28.0, "p_hv_max_mw": 0.1,
            "theta_init_c": 27.5
        }}],
        "load_groups": [{{"name": "g1", "buses": [1]}}, {{"name": "g2", "buses": [2]}}],
        "series": {{
            "theta_out_c": [30.0, 31.0],
            "heat_gain_mw": [0.2, 0.2],
            "load_profile": [1.0, 1.0],
            "nominal_load": [
                {{"bus": 1, "p_mw": 0.1, "q_mvar": 0.03}},
                {{"bus": 2, "p_mw": {load_mw}, "q_mvar": {q}}}
            ]
        }},
        "dgs": [{{"name": "pv", "bus": 2, "available_mw": [2.0, 2.0]}}],
        "tariffs": {{"buy": [50.0, 60.0], "sell": [20.0, 25.0]}}
    }}"#,
        q = 0.3 * load_mw
    );
    serde_json::from_str(&text).unwrap()
}

pub fn toy_scenario(load_mw: f64) -> Scenario {
    toy_scenario_file(load_mw).resolve(&three_bus()).unwrap()
}
