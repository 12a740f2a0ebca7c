//! Day-ahead scheduling MILPs with learned security and loss constraints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encode::{bigm_bounds, encode_mlp_bigm, encode_region_union, BIGM_SLACK};
use super::lp::{simplex_solve, LinearProgram, SolveResult, SolveStatus};
use super::milp::{branch_and_bound, MilpModel, MilpOptions};
use crate::dataset::DomainBox;
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::pwl::{Polytope, Region};
use crate::scenario::{thermal_coefficients, Scenario, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Security constraint from the full big-M network encoding.
    P2,
    /// Security constraint from the union of retained regions.
    P3,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::P2 => "p2",
            Mode::P3 => "p3",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p2" => Ok(Mode::P2),
            "p3" => Ok(Mode::P3),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Learned models used by the scheduling problem.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleModels<'a> {
    pub vio: &'a MlpParams,
    pub loss: &'a MlpParams,
    /// Retained regions of the Vio-MLP (standardized coordinates); P3 only.
    pub regions: &'a [Region],
    /// Raw-coordinate domain box of the training data; P3 only.
    pub domain: Option<&'a DomainBox>,
}

/// Column indices of one scheduling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepColumns {
    pub p_hv: Vec<usize>,
    pub lambda: Vec<usize>,
    /// Indoor temperature at the end of the step.
    pub theta: Vec<usize>,
    pub x: Vec<usize>,
    pub h: Option<usize>,
    pub p_loss: usize,
    pub g_root: usize,
    pub g_buy: usize,
    pub g_sell: usize,
    pub vio_binaries: usize,
    pub loss_binaries: usize,
    /// Retained regions whose selector is not fixed to zero at this step.
    pub active_regions: usize,
}

impl StepColumns {
    pub fn num_binaries(&self) -> usize {
        self.vio_binaries + self.loss_binaries
    }
}

#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub mode: Mode,
    pub model: MilpModel,
    pub steps: Vec<StepColumns>,
}

/// MILP-internal quantities of one step at a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInternal {
    pub x: Vec<f64>,
    pub h: Option<f64>,
    pub p_loss: f64,
    pub g_root: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct ScheduleSolution {
    pub mode: Mode,
    pub result: SolveResult,
    pub schedule: Schedule,
    pub internal: Vec<StepInternal>,
}

impl ScheduleProblem {
    pub fn num_binaries(&self) -> usize {
        self.model.binaries.len()
    }

    /// Decodes solver values into a schedule and the per-step model quantities.
    pub fn decode(&self, scenario: &Scenario, values: &[f64]) -> Result<(Schedule, Vec<StepInternal>)> {
        if values.len() != self.model.lp.num_vars() {
            return Err(Error::Shape {
                context: "solution vector",
                expected: self.model.lp.num_vars(),
                found: values.len(),
            });
        }
        let mut sched = Schedule::zeros(self.steps.len(), scenario.buildings.len(), scenario.num_dgs());
        let mut internal = Vec::with_capacity(self.steps.len());
        for (t, cols) in self.steps.iter().enumerate() {
            let b = scenario.buildings.iter();
            sched.p_hv[t] = cols
                .p_hv
                .iter()
                .zip(b)
                .map(|(&c, b)| values[c].clamp(0.0, b.p_hv_max_mw))
                .collect();
            sched.curtailment[t] = cols.lambda.iter().map(|&c| values[c].clamp(0.0, 1.0)).collect();
            let g_root = values[cols.g_root];
            internal.push(StepInternal {
                x: cols.x.iter().map(|&c| values[c]).collect(),
                h: cols.h.map(|c| values[c]),
                p_loss: values[cols.p_loss],
                g_root,
                cost: scenario.step_cost(t, g_root),
            });
        }
        Ok((sched, internal))
    }

    pub fn solve(&self, scenario: &Scenario, opts: &MilpOptions) -> Result<ScheduleSolution> {
        let result = branch_and_bound(&self.model, opts)?;
        let (schedule, internal) = if result.values.is_empty() {
            (
                Schedule::zeros(self.steps.len(), scenario.buildings.len(), scenario.num_dgs()),
                Vec::new(),
            )
        } else {
            self.decode(scenario, &result.values)?
        };
        Ok(ScheduleSolution {
            mode: self.mode,
            result,
            schedule,
            internal,
        })
    }
}

/// Forward interval propagation of every building's temperature under
/// `0 <= p_hv <= p_max`, clipped to the comfort band at each step.
pub fn comfort_reachability(scenario: &Scenario) -> Result<()> {
    let s = &scenario.series;
    for (i, b) in scenario.buildings.iter().enumerate() {
        let c = thermal_coefficients(b, s.dt_hours)?;
        let (mut lo, mut hi) = (scenario.theta_init[i], scenario.theta_init[i]);
        for t in 0..scenario.horizon() {
            let drift = c.a_out * s.theta_out[t] + c.a_h * s.heat_gain[t][i];
            let next_hi = c.a_in * hi + drift;
            let next_lo = c.a_in * lo + drift - c.a_h * b.cop * b.p_hv_max_mw;
            lo = next_lo.max(b.theta_min_c);
            hi = next_hi.min(b.theta_max_c);
            if lo > hi {
                return Err(Error::ComfortInfeasible { building: i, step: t });
            }
        }
    }
    Ok(())
}

/// Range of the feature vector of step `t` over all admissible decisions.
pub fn step_feature_box(scenario: &Scenario, t: usize) -> Result<DomainBox> {
    let map = scenario.feature_map(t)?;
    let mut lower = map.offset.clone();
    let mut upper = map.offset.clone();
    for d in 0..lower.len() {
        let hvac = map.hvac[d].iter().zip(&scenario.buildings).map(|(a, b)| a * b.p_hv_max_mw);
        for v in hvac.chain(map.curtail[d].iter().copied()) {
            if v < 0.0 {
                lower[d] += v;
            } else {
                upper[d] += v;
            }
        }
    }
    DomainBox::new(lower, upper)
}

fn intersect(a: &DomainBox, b: &DomainBox) -> Option<DomainBox> {
    let lower: Vec<f64> = a.lower.iter().zip(&b.lower).map(|(x, y)| x.max(*y)).collect();
    let upper: Vec<f64> = a.upper.iter().zip(&b.upper).map(|(x, y)| x.min(*y)).collect();
    if lower.iter().zip(&upper).any(|(l, u)| l > u) {
        return None;
    }
    Some(DomainBox { lower, upper })
}

fn meets_box(poly: &Polytope, b: &DomainBox) -> Result<bool> {
    let mut lp = LinearProgram::default();
    for d in 0..b.dim() {
        lp.add_var(format!("x{d}"), b.lower[d], b.upper[d], 0.0);
    }
    for (i, (row, &beta)) in poly.a.iter().zip(&poly.beta).enumerate() {
        lp.add_le(
            format!("r{i}"),
            row.iter().copied().enumerate().filter(|&(_, a)| a != 0.0).collect(),
            beta,
        );
    }
    Ok(simplex_solve(&lp)?.status == SolveStatus::Optimal)
}

/// Builds the T-step scheduling MILP of `scenario` in the given mode.
pub fn build_schedule_problem(
    scenario: &Scenario,
    models: ScheduleModels<'_>,
    mode: Mode,
) -> Result<ScheduleProblem> {
    scenario.validate()?;
    comfort_reachability(scenario)?;
    let dim = scenario.layout.dim();
    for (p, context) in [(models.vio, "Vio-MLP inputs"), (models.loss, "Loss-MLP inputs")] {
        p.validate()?;
        if p.input_dim() != dim {
            return Err(Error::Shape {
                context,
                expected: dim,
                found: p.input_dim(),
            });
        }
    }
    let raw_regions: Vec<Polytope> = match mode {
        Mode::P2 => Vec::new(),
        Mode::P3 => {
            if models.regions.is_empty() {
                return Err(Error::NoFeasibleRegion);
            }
            models
                .regions
                .iter()
                .map(|r| r.polytope.to_raw(&models.vio.input_scaler))
                .collect()
        }
    };
    let domain = match mode {
        Mode::P2 => None,
        Mode::P3 => Some(models.domain.ok_or_else(|| {
            Error::InvalidParameter("the region-union model needs the domain box".into())
        })?),
    };

    let s = &scenario.series;
    let layout = &scenario.layout;
    let mut m = MilpModel::default();
    let mut steps = Vec::with_capacity(scenario.horizon());
    let mut prev_theta: Option<Vec<usize>> = None;
    for t in 0..scenario.horizon() {
        let map = scenario.feature_map(t)?;
        let p_hv: Vec<usize> = scenario
            .buildings
            .iter()
            .enumerate()
            .map(|(i, b)| m.lp.add_var(format!("p_hv_t{t}_b{i}"), 0.0, b.p_hv_max_mw, 0.0))
            .collect();
        let lambda: Vec<usize> = (0..scenario.num_dgs())
            .map(|g| m.lp.add_var(format!("lambda_t{t}_g{g}"), 0.0, 1.0, 0.0))
            .collect();
        let theta: Vec<usize> = scenario
            .buildings
            .iter()
            .enumerate()
            .map(|(i, b)| m.lp.add_var(format!("theta_t{}_b{i}", t + 1), b.theta_min_c, b.theta_max_c, 0.0))
            .collect();
        for (i, b) in scenario.buildings.iter().enumerate() {
            let c = thermal_coefficients(b, s.dt_hours)?;
            let mut coefs = vec![(theta[i], 1.0), (p_hv[i], c.a_h * b.cop)];
            let mut rhs = c.a_out * s.theta_out[t] + c.a_h * s.heat_gain[t][i];
            match &prev_theta {
                Some(prev) => coefs.push((prev[i], -c.a_in)),
                None => rhs += c.a_in * scenario.theta_init[i],
            }
            m.lp.add_eq(format!("thermal_t{t}_b{i}"), coefs, rhs);
        }

        let step_box = step_feature_box(scenario, t)?;
        let enc_box = match domain {
            Some(d) => intersect(&step_box, d).ok_or_else(|| {
                Error::InvalidParameter(format!("step {t} cannot reach the domain box"))
            })?,
            None => step_box,
        };
        let x: Vec<usize> = (0..dim)
            .map(|d| m.lp.add_var(format!("x_t{t}_d{d}"), enc_box.lower[d], enc_box.upper[d], 0.0))
            .collect();
        for d in 0..dim {
            let mut coefs = vec![(x[d], 1.0)];
            coefs.extend(p_hv.iter().zip(&map.hvac[d]).filter(|(_, a)| **a != 0.0).map(|(&c, &a)| (c, -a)));
            coefs.extend(lambda.iter().zip(&map.curtail[d]).filter(|(_, a)| **a != 0.0).map(|(&c, &a)| (c, -a)));
            m.lp.add_eq(format!("feature_t{t}_d{d}"), coefs, map.offset[d]);
        }

        let before = m.binaries.len();
        let (h, active_regions) = match mode {
            Mode::P2 => {
                let h = m.lp.add_var(format!("h_t{t}"), f64::NEG_INFINITY, 0.0, 0.0);
                let bounds = bigm_bounds(models.vio, &enc_box)?;
                encode_mlp_bigm(&mut m, models.vio, &bounds, &x, h, &format!("vio_t{t}"))?;
                (Some(h), 0)
            }
            Mode::P3 => {
                let active = raw_regions
                    .iter()
                    .map(|poly| meets_box(poly, &enc_box))
                    .collect::<Result<Vec<bool>>>()?;
                let count = active.iter().filter(|a| **a).count();
                if count == 0 {
                    return Err(Error::NoFeasibleRegion);
                }
                let big_m = domain.map_or(0.0, DomainBox::max_abs) + BIGM_SLACK;
                encode_region_union(&mut m, &raw_regions, &active, &x, big_m, &format!("union_t{t}"))?;
                (None, count)
            }
        };
        let vio_binaries = m.binaries.len() - before;

        let p_loss = m.lp.add_var(format!("p_loss_t{t}"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let before = m.binaries.len();
        let bounds = bigm_bounds(models.loss, &enc_box)?;
        encode_mlp_bigm(&mut m, models.loss, &bounds, &x, p_loss, &format!("loss_t{t}"))?;
        let loss_binaries = m.binaries.len() - before;

        let g_root = m.lp.add_var(format!("G_root_t{t}"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let mut coefs = vec![(g_root, 1.0), (p_loss, -1.0)];
        coefs.extend((0..layout.groups.len()).map(|g| (x[layout.active_index(g)], -1.0)));
        coefs.extend((0..scenario.num_dgs()).map(|g| (x[layout.dg_index(g)], 1.0)));
        m.lp.add_eq(format!("balance_t{t}"), coefs, 0.0);

        let tariff = s.tariffs[t];
        let g_buy = m.lp.add_var(format!("G_buy_t{t}"), 0.0, f64::INFINITY, tariff.buy * s.dt_hours);
        let g_sell = m.lp.add_var(format!("G_sell_t{t}"), 0.0, f64::INFINITY, -tariff.sell * s.dt_hours);
        m.lp.add_eq(
            format!("exchange_t{t}"),
            vec![(g_buy, 1.0), (g_sell, -1.0), (g_root, -scenario.base_mva)],
            0.0,
        );

        steps.push(StepColumns {
            p_hv,
            lambda,
            theta: theta.clone(),
            x,
            h,
            p_loss,
            g_root,
            g_buy,
            g_sell,
            vio_binaries,
            loss_binaries,
            active_regions,
        });
        prev_theta = Some(theta);
    }
    Ok(ScheduleProblem {
        mode,
        model: m,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioFile;
    use crate::gridsim::RadialNetwork;

    fn reference() -> Scenario {
        ScenarioFile::reference().resolve(&RadialNetwork::ieee33()).unwrap()
    }

    #[test]
    fn mode_round_trip() {
        for m in [Mode::P2, Mode::P3] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("p4".parse::<Mode>().is_err());
    }

    #[test]
    fn step_box_covers_extreme_schedules() {
        let scn = reference().window(10, 2, None).unwrap();
        let b = step_feature_box(&scn, 0).unwrap();
        let n = scn.buildings.len();
        let full: Vec<f64> = scn.buildings.iter().map(|b| b.p_hv_max_mw).collect();
        for (p, l) in [(vec![0.0; n], vec![0.0; 2]), (full, vec![1.0; 2])] {
            let x = scn.feature_map(0).unwrap().apply(&p, &l);
            assert!(b.contains(&x, 1e-12));
        }
    }

    #[test]
    fn unreachable_comfort_band_is_reported() {
        let mut scn = reference().window(12, 3, None).unwrap();
        for row in &mut scn.series.heat_gain {
            row[2] = 50.0;
        }
        assert!(matches!(
            comfort_reachability(&scn),
            Err(Error::ComfortInfeasible { building: 2, step: 0 })
        ));
    }

    #[test]
    fn binary_counts_per_step() {
        let scn = reference().window(11, 2, None).unwrap();
        let dim = scn.layout.dim();
        let vio = MlpParams::initialize(dim, &[3, 2], 1).unwrap();
        let loss = MlpParams::initialize(dim, &[4], 2).unwrap();
        let models = ScheduleModels {
            vio: &vio,
            loss: &loss,
            regions: &[],
            domain: None,
        };
        let prob = build_schedule_problem(&scn, models, Mode::P2).unwrap();
        for cols in &prob.steps {
            assert_eq!(cols.vio_binaries, 5);
            assert_eq!(cols.loss_binaries, 4);
        }
        assert_eq!(prob.num_binaries(), 2 * 9);
        assert!(prob.model.column("G_root_t1").is_some());
    }
}
