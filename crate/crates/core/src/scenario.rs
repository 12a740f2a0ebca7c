//! Flexible loads, exogenous profiles and the decision-to-feature mapping.
//!
//! Power quantities carried by [`ExogenousSeries`] and feature vectors are
//! per-unit on the network base; HVAC set-points in a [`Schedule`] are MW,
//! matching how building parameters are quoted.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridsim::{Injection, RadialNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingParams {
    pub bus: usize,
    pub heat_capacity_mwh_per_c: f64,
    pub heat_transfer_mw_per_c: f64,
    pub cop: f64,
    pub power_factor: f64,
    pub theta_min_c: f64,
    pub theta_max_c: f64,
    pub p_hv_max_mw: f64,
}

impl BuildingParams {
    /// Table values used by the reference feeder: 1 MWh/°C, 0.03 MW/°C, COP 6,
    /// power factor 0.98, comfort band 24-28 °C and a 0.1 MW HVAC rating.
    pub fn reference(bus: usize) -> Self {
        Self {
            bus,
            heat_capacity_mwh_per_c: 1.0,
            heat_transfer_mw_per_c: 0.03,
            cop: 6.0,
            power_factor: 0.98,
            theta_min_c: 24.0,
            theta_max_c: 28.0,
            p_hv_max_mw: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("building: {what}")));
        if !(self.heat_capacity_mwh_per_c > 0.0) {
            return bad("heat capacity must be positive");
        }
        if !(self.heat_transfer_mw_per_c > 0.0) {
            return bad("heat transfer coefficient must be positive");
        }
        if !(self.cop > 0.0) {
            return bad("COP must be positive");
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad("power factor must lie in (0, 1]");
        }
        if !(self.theta_min_c < self.theta_max_c) {
            return bad("comfort bounds are inverted");
        }
        if !(self.p_hv_max_mw >= 0.0) {
            return bad("HVAC cap must be non-negative");
        }
        Ok(())
    }

    /// Reactive power drawn per MW of HVAC active power.
    pub fn reactive_ratio(&self) -> f64 {
        let phi = self.power_factor;
        (1.0 - phi * phi).sqrt() / phi
    }
}

/// Discrete-time coefficients of the first-order building model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalCoefficients {
    pub a_in: f64,
    pub a_out: f64,
    /// °C per MW of net heat over one step.
    pub a_h: f64,
}

pub fn thermal_coefficients(b: &BuildingParams, dt_hours: f64) -> Result<ThermalCoefficients> {
    if !(b.heat_transfer_mw_per_c > 0.0) || !(b.heat_capacity_mwh_per_c > 0.0) {
        return Err(Error::InvalidParameter(
            "thermal coefficients need g > 0 and C > 0".into(),
        ));
    }
    if !(dt_hours >= 0.0) {
        return Err(Error::InvalidParameter("negative step length".into()));
    }
    let a_in = (-b.heat_transfer_mw_per_c / b.heat_capacity_mwh_per_c * dt_hours).exp();
    let a_out = 1.0 - a_in;
    Ok(ThermalCoefficients {
        a_in,
        a_out,
        a_h: a_out / b.heat_transfer_mw_per_c,
    })
}

/// Indoor temperature trajectory `[θ_0, θ_1, ..., θ_T]` for `T` control steps,
/// where step `t` inputs drive the transition from `θ_t` to `θ_{t+1}`.
pub fn simulate_indoor_temperature(
    b: &BuildingParams,
    theta_out: &[f64],
    heat_gain_mw: &[f64],
    p_hv_mw: &[f64],
    dt_hours: f64,
    theta_init: f64,
) -> Result<Vec<f64>> {
    let steps = p_hv_mw.len();
    for (len, context) in [
        (theta_out.len(), "outdoor temperature series"),
        (heat_gain_mw.len(), "heat gain series"),
    ] {
        if len != steps {
            return Err(Error::Shape {
                context,
                expected: steps,
                found: len,
            });
        }
    }
    let c = thermal_coefficients(b, dt_hours)?;
    let mut theta = Vec::with_capacity(steps + 1);
    theta.push(theta_init);
    for t in 0..steps {
        let q_cool = b.cop * p_hv_mw[t];
        let prev = theta[t];
        theta.push(c.a_in * prev + c.a_out * theta_out[t] + c.a_h * (heat_gain_mw[t] - q_cool));
    }
    Ok(theta)
}

/// Electrical (active, reactive) draw of an HVAC unit delivering `q_cool_mw` of cooling.
pub fn hvac_electrical_power(b: &BuildingParams, q_cool_mw: f64) -> Result<(f64, f64)> {
    if !(b.power_factor > 0.0 && b.power_factor <= 1.0) {
        return Err(Error::InvalidParameter(
            "power factor must lie in (0, 1]".into(),
        ));
    }
    if !(q_cool_mw >= 0.0) {
        return Err(Error::InvalidParameter("cooling supply must be non-negative".into()));
    }
    let p = q_cool_mw / b.cop;
    Ok((p, b.reactive_ratio() * p))
}

/// Renewable output left after curtailment, elementwise.
pub fn drg_output(available: &[f64], curtailment: &[f64]) -> Result<Vec<f64>> {
    if available.len() != curtailment.len() {
        return Err(Error::Shape {
            context: "curtailment vector",
            expected: available.len(),
            found: curtailment.len(),
        });
    }
    available
        .iter()
        .zip(curtailment)
        .map(|(&g, &lambda)| {
            if !(0.0..=1.0).contains(&lambda) {
                Err(Error::InvalidParameter(format!(
                    "curtailment rate {lambda} outside [0, 1]"
                )))
            } else if !(g >= 0.0) {
                Err(Error::InvalidParameter(format!(
                    "negative available generation {g}"
                )))
            } else {
                Ok(g * (1.0 - lambda))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub buy: f64,
    pub sell: f64,
}

/// Cost of one step given the net root import, using the cheapest buy/sell
/// split (valid because buying is never cheaper than selling).
pub fn energy_cost(g_root: f64, tariff: Tariff, dt_hours: f64) -> f64 {
    let buy = g_root.max(0.0);
    let sell = (-g_root).max(0.0);
    (tariff.buy * buy - tariff.sell * sell) * dt_hours
}

/// A set of buses whose demand is monitored as one active and one reactive feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadGroup {
    pub name: String,
    pub buses: Vec<usize>,
    /// Share of the group's active demand placed on each bus when decoding.
    pub p_weights: Vec<f64>,
    pub q_weights: Vec<f64>,
}

/// Column layout of the feature vector: active demand per group, reactive
/// demand per group, then used renewable output per generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub groups: Vec<LoadGroup>,
    pub dg_buses: Vec<usize>,
    pub dg_names: Vec<String>,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        2 * self.groups.len() + self.dg_buses.len()
    }

    pub fn active_index(&self, group: usize) -> usize {
        group
    }

    pub fn reactive_index(&self, group: usize) -> usize {
        self.groups.len() + group
    }

    pub fn dg_index(&self, dg: usize) -> usize {
        2 * self.groups.len() + dg
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.groups.iter().map(|g| format!("p_{}", g.name)).collect();
        names.extend(self.groups.iter().map(|g| format!("q_{}", g.name)));
        names.extend(self.dg_names.iter().map(|n| format!("pdg_{n}")));
        names
    }

    /// Distributes a feature vector back onto buses.
    pub fn decode(&self, net: &RadialNetwork, x: &[f64]) -> Result<Injection> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                context: "feature vector",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let n = net.num_buses();
        let mut p_bus = vec![0.0; n];
        let mut q_bus = vec![0.0; n];
        for (g, group) in self.groups.iter().enumerate() {
            let p = x[self.active_index(g)];
            let q = x[self.reactive_index(g)];
            for (k, &bus) in group.buses.iter().enumerate() {
                p_bus[bus] -= p * group.p_weights[k];
                q_bus[bus] -= q * group.q_weights[k];
            }
        }
        for (d, &bus) in self.dg_buses.iter().enumerate() {
            p_bus[bus] += x[self.dg_index(d)];
        }
        Ok(Injection::from_bus_vectors(net, &p_bus, &q_bus))
    }
}

/// Time series driving one scheduling horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub dt_hours: f64,
    pub theta_out: Vec<f64>,
    /// Base active demand per step and bus (p.u.).
    pub base_p: Vec<Vec<f64>>,
    pub base_q: Vec<Vec<f64>>,
    /// Available renewable generation per step and generator (p.u.).
    pub dg_available: Vec<Vec<f64>>,
    pub tariffs: Vec<Tariff>,
    /// Indoor heat gain per step and building (MW).
    pub heat_gain: Vec<Vec<f64>>,
}

impl ExogenousSeries {
    pub fn horizon(&self) -> usize {
        self.theta_out.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        for (len, context) in [
            (self.base_p.len(), "base active demand series"),
            (self.base_q.len(), "base reactive demand series"),
            (self.dg_available.len(), "available generation series"),
            (self.tariffs.len(), "tariff series"),
            (self.heat_gain.len(), "heat gain series"),
        ] {
            if len != t {
                return Err(Error::Shape {
                    context,
                    expected: t,
                    found: len,
                });
            }
        }
        if !(self.dt_hours > 0.0) {
            return Err(Error::InvalidParameter("step length must be positive".into()));
        }
        for (step, tariff) in self.tariffs.iter().enumerate() {
            if !(tariff.buy >= tariff.sell && tariff.sell >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step {step}: tariffs must satisfy buy >= sell >= 0"
                )));
            }
        }
        if self.dg_available.iter().flatten().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidParameter(
                "available generation must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// HVAC set-points (MW) and curtailment rates per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub p_hv: Vec<Vec<f64>>,
    pub curtailment: Vec<Vec<f64>>,
}

impl Schedule {
    pub fn zeros(steps: usize, buildings: usize, dgs: usize) -> Self {
        Self {
            p_hv: vec![vec![0.0; buildings]; steps],
            curtailment: vec![vec![0.0; dgs]; steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.p_hv.len()
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &Schedule, alpha: f64) -> Schedule {
        let mix = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            a.iter()
                .zip(b)
                .map(|(ra, rb)| {
                    ra.iter()
                        .zip(rb)
                        .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                        .collect()
                })
                .collect()
        };
        Schedule {
            p_hv: mix(&self.p_hv, &other.p_hv),
            curtailment: mix(&self.curtailment, &other.curtailment),
        }
    }

    /// Writes `step,kind,id,value` rows.
    pub fn write_csv<W: Write>(&self, scenario: &Scenario, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "kind", "id", "value"])?;
        for t in 0..self.steps() {
            for (i, v) in self.p_hv[t].iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    "hvac_mw".into(),
                    scenario.building_names[i].clone(),
                    format!("{v}"),
                ])?;
            }
            for (g, v) in self.curtailment[t].iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    "curtailment".into(),
                    scenario.layout.dg_names[g].clone(),
                    format!("{v}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Affine map from decisions to the feature vector at one step:
/// `x = offset + hvac * p_hv + curtail * lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub offset: Vec<f64>,
    /// `dim x buildings`, per MW of HVAC power.
    pub hvac: Vec<Vec<f64>>,
    /// `dim x generators`, per unit of curtailment rate.
    pub curtail: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn apply(&self, p_hv: &[f64], lambda: &[f64]) -> Vec<f64> {
        self.offset
            .iter()
            .enumerate()
            .map(|(d, &o)| {
                o + self.hvac[d].iter().zip(p_hv).map(|(a, p)| a * p).sum::<f64>()
                    + self.curtail[d]
                        .iter()
                        .zip(lambda)
                        .map(|(a, l)| a * l)
                        .sum::<f64>()
            })
            .collect()
    }
}

/// A fully resolved scheduling scenario on a specific network.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub buildings: Vec<BuildingParams>,
    pub building_names: Vec<String>,
    pub theta_init: Vec<f64>,
    pub series: ExogenousSeries,
    pub layout: FeatureLayout,
    pub base_mva: f64,
    pub num_buses: usize,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.series.horizon()
    }

    pub fn num_dgs(&self) -> usize {
        self.layout.dg_buses.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.series.validate()?;
        for b in &self.buildings {
            b.validate()?;
        }
        if self.theta_init.len() != self.buildings.len() {
            return Err(Error::Shape {
                context: "initial temperatures",
                expected: self.buildings.len(),
                found: self.theta_init.len(),
            });
        }
        for row in &self.series.heat_gain {
            if row.len() != self.buildings.len() {
                return Err(Error::Shape {
                    context: "heat gain row",
                    expected: self.buildings.len(),
                    found: row.len(),
                });
            }
        }
        for row in &self.series.dg_available {
            if row.len() != self.num_dgs() {
                return Err(Error::Shape {
                    context: "available generation row",
                    expected: self.num_dgs(),
                    found: row.len(),
                });
            }
        }
        Ok(())
    }

    pub fn validate_schedule(&self, sched: &Schedule) -> Result<()> {
        if sched.steps() != self.horizon() || sched.curtailment.len() != self.horizon() {
            return Err(Error::Shape {
                context: "schedule horizon",
                expected: self.horizon(),
                found: sched.steps(),
            });
        }
        for t in 0..self.horizon() {
            if sched.p_hv[t].len() != self.buildings.len() {
                return Err(Error::Shape {
                    context: "HVAC schedule row",
                    expected: self.buildings.len(),
                    found: sched.p_hv[t].len(),
                });
            }
            if sched.curtailment[t].len() != self.num_dgs() {
                return Err(Error::Shape {
                    context: "curtailment schedule row",
                    expected: self.num_dgs(),
                    found: sched.curtailment[t].len(),
                });
            }
        }
        Ok(())
    }

    fn host_group(&self, building: usize) -> usize {
        let bus = self.buildings[building].bus;
        self.layout
            .groups
            .iter()
            .position(|g| g.buses.contains(&bus))
            .expect("validated layout hosts every building")
    }

    pub fn feature_map(&self, t: usize) -> Result<FeatureMap> {
        if t >= self.horizon() {
            return Err(Error::InvalidParameter(format!(
                "step {t} outside horizon {}",
                self.horizon()
            )));
        }
        let layout = &self.layout;
        let dim = layout.dim();
        let mut offset = vec![0.0; dim];
        for (g, group) in layout.groups.iter().enumerate() {
            offset[layout.active_index(g)] =
                group.buses.iter().map(|&b| self.series.base_p[t][b]).sum();
            offset[layout.reactive_index(g)] =
                group.buses.iter().map(|&b| self.series.base_q[t][b]).sum();
        }
        let mut hvac = vec![vec![0.0; self.buildings.len()]; dim];
        for (i, b) in self.buildings.iter().enumerate() {
            let g = self.host_group(i);
            hvac[layout.active_index(g)][i] = 1.0 / self.base_mva;
            hvac[layout.reactive_index(g)][i] = b.reactive_ratio() / self.base_mva;
        }
        let mut curtail = vec![vec![0.0; self.num_dgs()]; dim];
        for d in 0..self.num_dgs() {
            let available = self.series.dg_available[t][d];
            offset[layout.dg_index(d)] = available;
            curtail[layout.dg_index(d)][d] = -available;
        }
        Ok(FeatureMap {
            offset,
            hvac,
            curtail,
        })
    }

    /// Feature vector of step `t` under `sched`.
    pub fn feature_vector(&self, sched: &Schedule, t: usize) -> Result<Vec<f64>> {
        self.validate_schedule(sched)?;
        let map = self.feature_map(t)?;
        Ok(map.apply(&sched.p_hv[t], &sched.curtailment[t]))
    }

    /// True per-bus injections of step `t` under `sched`.
    pub fn injection(&self, net: &RadialNetwork, sched: &Schedule, t: usize) -> Result<Injection> {
        self.validate_schedule(sched)?;
        let n = net.num_buses();
        let mut p_bus: Vec<f64> = self.series.base_p[t].iter().map(|v| -v).collect();
        let mut q_bus: Vec<f64> = self.series.base_q[t].iter().map(|v| -v).collect();
        if p_bus.len() != n {
            return Err(Error::Shape {
                context: "per-bus demand",
                expected: n,
                found: p_bus.len(),
            });
        }
        for (i, b) in self.buildings.iter().enumerate() {
            let p = sched.p_hv[t][i] / self.base_mva;
            p_bus[b.bus] -= p;
            q_bus[b.bus] -= b.reactive_ratio() * p;
        }
        let used = drg_output(&self.series.dg_available[t], &sched.curtailment[t])?;
        for (d, &bus) in self.layout.dg_buses.iter().enumerate() {
            p_bus[bus] += used[d];
        }
        Ok(Injection::from_bus_vectors(net, &p_bus, &q_bus))
    }

    pub fn thermal_trajectory(&self, sched: &Schedule, building: usize) -> Result<Vec<f64>> {
        let p: Vec<f64> = sched.p_hv.iter().map(|row| row[building]).collect();
        let gains: Vec<f64> = self.series.heat_gain.iter().map(|row| row[building]).collect();
        simulate_indoor_temperature(
            &self.buildings[building],
            &self.series.theta_out,
            &gains,
            &p,
            self.series.dt_hours,
            self.theta_init[building],
        )
    }

    /// Steps `[start, start + len)` of this scenario, with initial temperatures
    /// propagated by the free-running trajectory under `warmup`.
    pub fn window(&self, start: usize, len: usize, warmup: Option<&Schedule>) -> Result<Scenario> {
        if start + len > self.horizon() || len == 0 {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {}) outside horizon {}",
                start + len,
                self.horizon()
            )));
        }
        let theta_init = match warmup {
            Some(w) => (0..self.buildings.len())
                .map(|i| self.thermal_trajectory(w, i).map(|traj| traj[start]))
                .collect::<Result<Vec<_>>>()?,
            None => self.theta_init.clone(),
        };
        let s = &self.series;
        let slice = |v: &Vec<Vec<f64>>| v[start..start + len].to_vec();
        Ok(Scenario {
            name: self.name.clone(),
            theta_init,
            series: ExogenousSeries {
                dt_hours: s.dt_hours,
                theta_out: s.theta_out[start..start + len].to_vec(),
                base_p: slice(&s.base_p),
                base_q: slice(&s.base_q),
                dg_available: slice(&s.dg_available),
                tariffs: s.tariffs[start..start + len].to_vec(),
                heat_gain: slice(&s.heat_gain),
            },
            ..self.clone()
        })
    }

    /// Copy with every generator's availability multiplied by `scale`.
    pub fn with_dg_scale(&self, name: &str, scale: f64) -> Scenario {
        let mut out = self.clone();
        out.name = name.to_string();
        for row in &mut out.series.dg_available {
            for g in row {
                *g *= scale;
            }
        }
        out
    }

    /// Cost of step `t` for a root import given in p.u.
    pub fn step_cost(&self, t: usize, g_root_pu: f64) -> f64 {
        energy_cost(
            g_root_pu * self.base_mva,
            self.series.tariffs[t],
            self.series.dt_hours,
        )
    }
}

// ---------------------------------------------------------------------------
// Scenario file

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingEntry {
    pub name: String,
    #[serde(flatten)]
    pub params: BuildingParams,
    pub theta_init_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NominalLoad {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub theta_out_c: Vec<f64>,
    /// Indoor heat gain of each building per step (MW).
    pub heat_gain_mw: Vec<f64>,
    /// Multiplier applied to every nominal load per step.
    pub load_profile: Vec<f64>,
    pub nominal_load: Vec<NominalLoad>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgEntry {
    pub name: String,
    pub bus: usize,
    pub available_mw: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TariffEntry {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub buses: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub dt_hours: f64,
    pub buildings: Vec<BuildingEntry>,
    pub load_groups: Vec<GroupEntry>,
    pub series: SeriesEntry,
    pub dgs: Vec<DgEntry>,
    pub tariffs: TariffEntry,
}

const REFERENCE_SCENARIO_JSON: &str = include_str!("../data/reference_scenario.json");

impl ScenarioFile {
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_SCENARIO_JSON).expect("bundled scenario is valid JSON")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn resolve(&self, net: &RadialNetwork) -> Result<Scenario> {
        let n = net.num_buses();
        let root = net.root().ok_or_else(|| Error::InvalidNetwork("no root bus".into()))?;
        let steps = self.series.theta_out_c.len();
        let check_len = |len: usize, context: &'static str| {
            if len == steps {
                Ok(())
            } else {
                Err(Error::Shape {
                    context,
                    expected: steps,
                    found: len,
                })
            }
        };
        check_len(self.series.heat_gain_mw.len(), "heat gain series")?;
        check_len(self.series.load_profile.len(), "load profile")?;
        check_len(self.tariffs.buy.len(), "buy tariff series")?;
        check_len(self.tariffs.sell.len(), "sell tariff series")?;
        for dg in &self.dgs {
            check_len(dg.available_mw.len(), "generator availability series")?;
        }

        let bus_ok = |bus: usize, what: &str| {
            if bus >= n || bus == root {
                Err(Error::Config(format!("{what} references invalid bus {bus}")))
            } else {
                Ok(())
            }
        };
        let mut nominal_p = vec![0.0; n];
        let mut nominal_q = vec![0.0; n];
        for load in &self.series.nominal_load {
            bus_ok(load.bus, "nominal load")?;
            nominal_p[load.bus] += load.p_mw / net.base_mva;
            nominal_q[load.bus] += load.q_mvar / net.base_mva;
        }

        let mut owner = vec![None; n];
        let mut groups = Vec::with_capacity(self.load_groups.len());
        for (g, entry) in self.load_groups.iter().enumerate() {
            if entry.buses.is_empty() {
                return Err(Error::Config(format!("load group {} is empty", entry.name)));
            }
            for &bus in &entry.buses {
                bus_ok(bus, "load group")?;
                if owner[bus].replace(g).is_some() {
                    return Err(Error::Config(format!("bus {bus} belongs to two load groups")));
                }
            }
            let weights = |nominal: &[f64]| {
                let total: f64 = entry.buses.iter().map(|&b| nominal[b]).sum();
                if total > 0.0 {
                    entry.buses.iter().map(|&b| nominal[b] / total).collect()
                } else {
                    vec![1.0 / entry.buses.len() as f64; entry.buses.len()]
                }
            };
            groups.push(LoadGroup {
                name: entry.name.clone(),
                buses: entry.buses.clone(),
                p_weights: weights(&nominal_p),
                q_weights: weights(&nominal_q),
            });
        }
        for load in &self.series.nominal_load {
            if owner[load.bus].is_none() {
                return Err(Error::Config(format!(
                    "loaded bus {} is not monitored by any load group",
                    load.bus
                )));
            }
        }
        for b in &self.buildings {
            b.params.validate()?;
            bus_ok(b.params.bus, "building")?;
            match owner[b.params.bus] {
                Some(g) if groups[g].buses.len() == 1 => {}
                _ => {
                    return Err(Error::Config(format!(
                        "building {} must sit on a single-bus load group",
                        b.name
                    )))
                }
            }
        }
        for dg in &self.dgs {
            bus_ok(dg.bus, "generator")?;
        }

        let series = ExogenousSeries {
            dt_hours: self.dt_hours,
            theta_out: self.series.theta_out_c.clone(),
            base_p: self
                .series
                .load_profile
                .iter()
                .map(|m| nominal_p.iter().map(|p| p * m).collect())
                .collect(),
            base_q: self
                .series
                .load_profile
                .iter()
                .map(|m| nominal_q.iter().map(|q| q * m).collect())
                .collect(),
            dg_available: (0..steps)
                .map(|t| {
                    self.dgs
                        .iter()
                        .map(|dg| dg.available_mw[t] / net.base_mva)
                        .collect()
                })
                .collect(),
            tariffs: self
                .tariffs
                .buy
                .iter()
                .zip(&self.tariffs.sell)
                .map(|(&buy, &sell)| Tariff { buy, sell })
                .collect(),
            heat_gain: self
                .series
                .heat_gain_mw
                .iter()
                .map(|&q| vec![q; self.buildings.len()])
                .collect(),
        };
        let scenario = Scenario {
            name: self.name.clone(),
            buildings: self.buildings.iter().map(|b| b.params.clone()).collect(),
            building_names: self.buildings.iter().map(|b| b.name.clone()).collect(),
            theta_init: self.buildings.iter().map(|b| b.theta_init_c).collect(),
            series,
            layout: FeatureLayout {
                groups,
                dg_buses: self.dgs.iter().map(|d| d.bus).collect(),
                dg_names: self.dgs.iter().map(|d| d.name.clone()).collect(),
            },
            base_mva: net.base_mva,
            num_buses: n,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
