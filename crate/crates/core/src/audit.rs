//! Ground-truth auditing of schedules with the AC power flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridsim::{total_loss, violation_measure, PowerFlow, RadialNetwork};
use crate::mlp::MlpParams;
use crate::scenario::{Scenario, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub step: usize,
    pub converged: bool,
    pub h_true: Option<f64>,
    pub h_model: Option<f64>,
    /// p.u.
    pub p_loss_true: Option<f64>,
    pub p_loss_model: Option<f64>,
    /// Root import in p.u.
    pub g_root_true: Option<f64>,
    pub cost: Option<f64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Distance outside the voltage band in p.u., zero when inside.
    pub voltage_violation: Option<f64>,
    /// Largest branch apparent flow in p.u.
    pub max_apparent_flow: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub steps: Vec<StepAudit>,
    pub total_cost: f64,
    pub max_voltage_violation: f64,
    pub max_apparent_flow_pu: f64,
    pub max_apparent_flow_mva: f64,
    pub max_h_true: f64,
    /// Largest excursion of any indoor temperature outside its comfort band, in °C.
    pub max_comfort_violation: f64,
    pub nonconverged_steps: Vec<usize>,
}

/// Re-runs the power flow of every step of `sched`. When given, the learned
/// models are evaluated at the same feature vectors for comparison.
pub fn evaluate_schedule(
    net: &RadialNetwork,
    scenario: &Scenario,
    sched: &Schedule,
    vio: Option<&MlpParams>,
    loss: Option<&MlpParams>,
) -> Result<AuditReport> {
    scenario.validate_schedule(sched)?;
    let pf = PowerFlow::new(net)?;
    let mut steps = Vec::with_capacity(sched.steps());
    let mut report = AuditReport {
        steps: Vec::new(),
        total_cost: 0.0,
        max_voltage_violation: 0.0,
        max_apparent_flow_pu: 0.0,
        max_apparent_flow_mva: 0.0,
        max_h_true: f64::NEG_INFINITY,
        max_comfort_violation: 0.0,
        nonconverged_steps: Vec::new(),
    };
    for t in 0..sched.steps() {
        let x = scenario.feature_vector(sched, t)?;
        let h_model = vio.map(|p| p.predict(&x)).transpose()?;
        let p_loss_model = loss.map(|p| p.predict(&x)).transpose()?;
        let inj = scenario.injection(net, sched, t)?;
        let sol = match pf.solve(&inj) {
            Ok(sol) if sol.converged => Some(sol),
            Ok(_) | Err(Error::NotConverged) => None,
            Err(e) => return Err(e),
        };
        let Some(sol) = sol else {
            report.nonconverged_steps.push(t);
            steps.push(StepAudit {
                step: t,
                converged: false,
                h_true: None,
                h_model,
                p_loss_true: None,
                p_loss_model,
                g_root_true: None,
                cost: None,
                v_min: None,
                v_max: None,
                voltage_violation: None,
                max_apparent_flow: None,
            });
            continue;
        };
        let h = violation_measure(&sol, net)?;
        let g_root = pf.root_import(&sol);
        let cost = scenario.step_cost(t, g_root);
        let v_min = sol.voltage.iter().copied().fold(f64::INFINITY, f64::min);
        let v_max = sol.voltage.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vv = (net.v_min_pu - v_min).max(v_max - net.v_max_pu).max(0.0);
        let flow = (0..sol.p_flow.len())
            .map(|k| sol.apparent_flow(k))
            .fold(0.0, f64::max);
        report.total_cost += cost;
        report.max_voltage_violation = report.max_voltage_violation.max(vv);
        report.max_apparent_flow_pu = report.max_apparent_flow_pu.max(flow);
        report.max_h_true = report.max_h_true.max(h);
        steps.push(StepAudit {
            step: t,
            converged: true,
            h_true: Some(h),
            h_model,
            p_loss_true: Some(total_loss(&sol, net)),
            p_loss_model,
            g_root_true: Some(g_root),
            cost: Some(cost),
            v_min: Some(v_min),
            v_max: Some(v_max),
            voltage_violation: Some(vv),
            max_apparent_flow: Some(flow),
        });
    }
    report.max_apparent_flow_mva = net.pu_to_mw(report.max_apparent_flow_pu);
    for (i, b) in scenario.buildings.iter().enumerate() {
        for theta in scenario.thermal_trajectory(sched, i)?.into_iter().skip(1) {
            let excess = (b.theta_min_c - theta).max(theta - b.theta_max_c).max(0.0);
            report.max_comfort_violation = report.max_comfort_violation.max(excess);
        }
    }
    report.steps = steps;
    Ok(report)
}
