//! Best-bound branch-and-bound over binary columns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lp::{check_residual, presolve, solve_core, Basis, LinearProgram, Presolved, SolveResult, SolveStatus};
use crate::error::Result;

pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
}

impl MilpModel {
    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        let j = self.lp.add_var(name, 0.0, 1.0, cost);
        self.binaries.push(j);
        j
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.lp.names.iter().position(|n| n == name)
    }

    pub fn to_lp_format(&self) -> String {
        self.lp.to_lp_format(&self.binaries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilpOptions {
    pub node_limit: usize,
    pub gap_abs: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: 200_000,
            gap_abs: GAP_TOL,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    /// Fixings in reduced-column indices.
    fixings: Vec<(usize, f64)>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// `None` when a fixing falls outside bounds tightened by presolve.
fn with_fixings(base: &LinearProgram, fixings: &[(usize, f64)]) -> Option<LinearProgram> {
    let mut lp = base.clone();
    for &(j, v) in fixings {
        if v < lp.lower[j] - INTEGRALITY_TOL || v > lp.upper[j] + INTEGRALITY_TOL {
            return None;
        }
        lp.lower[j] = v;
        lp.upper[j] = v;
    }
    Some(lp)
}

fn most_fractional(values: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let v = values[j];
        let dist = (v - v.round()).abs();
        if dist > INTEGRALITY_TOL {
            let closeness = (v - 0.5).abs();
            if best.map_or(true, |(_, c)| closeness < c) {
                best = Some((j, closeness));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn finish(status: SolveStatus, nodes: usize, iterations: usize, start: Instant) -> SolveResult {
    SolveResult {
        status,
        objective: match status {
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        },
        values: Vec::new(),
        node_count: nodes,
        lp_iterations: iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Solves `m` to a proven optimum within `opts.gap_abs`; the incumbent is
/// re-solved with its binaries fixed to exact 0/1 values.
///
/// Node LPs run on the presolved model and re-enter the simplex at the
/// parent's optimal basis.
pub fn branch_and_bound(m: &MilpModel, opts: &MilpOptions) -> Result<SolveResult> {
    let start = Instant::now();
    m.lp.validate()?;
    let mut base = m.lp.clone();
    for &j in &m.binaries {
        base.lower[j] = base.lower[j].max(0.0);
        base.upper[j] = base.upper[j].min(1.0);
    }
    let reduced = match presolve(&base) {
        Presolved::Infeasible => return Ok(finish(SolveStatus::Infeasible, 0, 0, start)),
        Presolved::Reduced(r) => r,
    };
    // Eliminated binaries must already sit at 0 or 1.
    for &j in &m.binaries {
        if let Some(v) = reduced.fixed[j] {
            if (v - v.round()).abs() > INTEGRALITY_TOL {
                return Ok(finish(SolveStatus::Infeasible, 0, 0, start));
            }
        }
    }
    let index = reduced.index();
    let binaries: Vec<usize> = m.binaries.iter().filter_map(|&j| index[j]).collect();
    let lp = &reduced.lp;
    let offset: f64 = reduced
        .fixed
        .iter()
        .zip(&base.objective)
        .filter_map(|(v, c)| v.map(|v| v * c))
        .sum();

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        fixings: Vec::new(),
        basis: None,
    });
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut hit_limit = false;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - opts.gap_abs {
                continue;
            }
        }
        if nodes >= opts.node_limit {
            hit_limit = true;
            break;
        }
        nodes += 1;
        let Some(node_lp) = with_fixings(lp, &node.fixings) else {
            continue;
        };
        let r = solve_core(&node_lp, node.basis.as_deref())?;
        iterations += r.iterations;
        match r.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => return Ok(finish(SolveStatus::Unbounded, nodes, iterations, start)),
            _ => {}
        }
        let objective = offset + dot(&lp.objective, &r.x);
        if let Some((best, _)) = &incumbent {
            if objective >= best - opts.gap_abs {
                continue;
            }
        }
        match most_fractional(&r.x, &binaries) {
            None => {
                let rounded: Vec<(usize, f64)> = binaries.iter().map(|&j| (j, r.x[j].round())).collect();
                let polished = match with_fixings(lp, &rounded) {
                    Some(fixed) => Some(solve_core(&fixed, r.basis.as_ref())?),
                    None => None,
                };
                iterations += polished.as_ref().map_or(0, |p| p.iterations);
                let x = match polished {
                    Some(p) if p.status == SolveStatus::Optimal => p.x,
                    _ => r.x,
                };
                let obj = offset + dot(&lp.objective, &x);
                if incumbent.as_ref().map_or(true, |(best, _)| obj < *best) {
                    incumbent = Some((obj, x));
                }
            }
            Some(j) => {
                let up_first = r.x[j] >= 0.5;
                let basis = r.basis.map(Rc::new);
                for v in if up_first { [1.0, 0.0] } else { [0.0, 1.0] } {
                    seq += 1;
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node {
                        bound: objective,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        basis: basis.clone(),
                    });
                }
            }
        }
    }

    let Some((_, xr)) = incumbent else {
        let status = if hit_limit {
            SolveStatus::NodeLimit
        } else {
            SolveStatus::Infeasible
        };
        return Ok(finish(status, nodes, iterations, start));
    };
    let mut values = reduced.expand(&xr);
    for &j in &m.binaries {
        values[j] = values[j].round();
    }
    check_residual(&m.lp, &values)?;
    Ok(SolveResult {
        status: if hit_limit {
            SolveStatus::NodeLimit
        } else {
            SolveStatus::Optimal
        },
        objective: m.lp.objective_value(&values),
        values,
        node_count: nodes,
        lp_iterations: iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
