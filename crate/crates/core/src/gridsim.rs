//! Radial network model and the ground-truth DistFlow power flow.
//!
//! Conventions used throughout the crate:
//! * all quantities are per-unit on the network's `base_mva` / `base_kv`;
//! * a positive nodal injection is generation;
//! * branch flows are measured at the sending end, from the parent bus
//!   (closer to the root) toward the child bus, regardless of how the
//!   branch is listed in the network file.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence threshold on the largest voltage magnitude update.
pub const SWEEP_TOLERANCE: f64 = 1e-10;
/// Iteration cap of the backward-forward sweep.
pub const SWEEP_MAX_ITERATIONS: usize = 200;
/// Largest DistFlow residual accepted for a converged solution.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

const IEEE33_JSON: &str = include_str!("../data/ieee33_network.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub index: usize,
    #[serde(default)]
    pub is_root: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Per-branch apparent-flow limit; falls back to the network-wide value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialNetwork {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub root_voltage_pu: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    pub s_max_pu: f64,
    pub base_mva: f64,
    pub base_kv: f64,
}

impl RadialNetwork {
    /// The bundled 33-bus feeder (12.66 kV, 10 MVA base, 4 MVA flow limit).
    pub fn ieee33() -> Self {
        serde_json::from_str(IEEE33_JSON).expect("bundled network file is valid JSON")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn root(&self) -> Option<usize> {
        self.buses.iter().find(|b| b.is_root).map(|b| b.index)
    }

    /// Non-root buses in ascending index order; this is the layout of [`Injection`].
    pub fn non_root_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| !b.is_root)
            .map(|b| b.index)
            .collect()
    }

    pub fn branch_s_max(&self, branch: usize) -> f64 {
        self.branches[branch].s_max_pu.unwrap_or(self.s_max_pu)
    }

    pub fn mw_to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    pub fn pu_to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }
}

/// A structural defect reported by [`validate_network`].
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkViolation {
    BusIndexOutOfOrder { position: usize, index: usize },
    RootCount(usize),
    BranchCount { expected: usize, found: usize },
    UnknownBus { branch: usize, bus: usize },
    SelfLoop { branch: usize },
    Cycle { branch: usize },
    Disconnected { bus: usize },
    NegativeResistance { branch: usize, r: f64 },
    NonFiniteImpedance { branch: usize },
    InvertedVoltageBounds { v_min: f64, v_max: f64 },
    NonPositiveRootVoltage(f64),
    NonPositiveFlowLimit { branch: Option<usize>, s_max: f64 },
    NonPositiveBase,
}

impl fmt::Display for NetworkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use NetworkViolation::*;
        match self {
            BusIndexOutOfOrder { position, index } => {
                write!(f, "bus at position {position} has index {index}")
            }
            RootCount(n) => write!(f, "expected exactly one root bus, found {n}"),
            BranchCount { expected, found } => {
                write!(f, "a tree needs {expected} branches, found {found}")
            }
            UnknownBus { branch, bus } => write!(f, "branch {branch} references unknown bus {bus}"),
            SelfLoop { branch } => write!(f, "branch {branch} is a self loop"),
            Cycle { branch } => write!(f, "cycle closed by branch {branch}"),
            Disconnected { bus } => write!(f, "bus {bus} is disconnected from the root"),
            NegativeResistance { branch, r } => {
                write!(f, "negative resistance {r} on branch {branch}")
            }
            NonFiniteImpedance { branch } => write!(f, "non-finite impedance on branch {branch}"),
            InvertedVoltageBounds { v_min, v_max } => {
                write!(f, "inverted voltage bounds [{v_min}, {v_max}]")
            }
            NonPositiveRootVoltage(v) => write!(f, "non-positive root voltage {v}"),
            NonPositiveFlowLimit { branch, s_max } => match branch {
                Some(b) => write!(f, "non-positive flow limit {s_max} on branch {b}"),
                None => write!(f, "non-positive flow limit {s_max}"),
            },
            NonPositiveBase => write!(f, "non-positive base power or voltage"),
        }
    }
}

/// Collects every structural violation; an empty list means the network is usable.
pub fn validate_network(net: &RadialNetwork) -> Vec<NetworkViolation> {
    let mut out = Vec::new();
    let n = net.buses.len();

    for (position, bus) in net.buses.iter().enumerate() {
        if bus.index != position {
            out.push(NetworkViolation::BusIndexOutOfOrder {
                position,
                index: bus.index,
            });
        }
    }
    let roots = net.buses.iter().filter(|b| b.is_root).count();
    if roots != 1 {
        out.push(NetworkViolation::RootCount(roots));
    }
    if n > 0 && net.branches.len() != n - 1 {
        out.push(NetworkViolation::BranchCount {
            expected: n - 1,
            found: net.branches.len(),
        });
    }

    let mut dsu = DisjointSets::new(n);
    for (k, br) in net.branches.iter().enumerate() {
        if !br.r_pu.is_finite() || !br.x_pu.is_finite() {
            out.push(NetworkViolation::NonFiniteImpedance { branch: k });
        } else if br.r_pu < 0.0 {
            out.push(NetworkViolation::NegativeResistance {
                branch: k,
                r: br.r_pu,
            });
        }
        if let Some(s) = br.s_max_pu {
            if !(s > 0.0) {
                out.push(NetworkViolation::NonPositiveFlowLimit {
                    branch: Some(k),
                    s_max: s,
                });
            }
        }
        let mut known = true;
        for bus in [br.from, br.to] {
            if bus >= n {
                out.push(NetworkViolation::UnknownBus { branch: k, bus });
                known = false;
            }
        }
        if !known {
            continue;
        }
        if br.from == br.to {
            out.push(NetworkViolation::SelfLoop { branch: k });
        } else if !dsu.union(br.from, br.to) {
            out.push(NetworkViolation::Cycle { branch: k });
        }
    }

    if let Some(root) = net.root().filter(|&r| r < n) {
        for bus in 0..n {
            if dsu.find(bus) != dsu.find(root) {
                out.push(NetworkViolation::Disconnected { bus });
            }
        }
    }

    if !(net.v_min_pu < net.v_max_pu) {
        out.push(NetworkViolation::InvertedVoltageBounds {
            v_min: net.v_min_pu,
            v_max: net.v_max_pu,
        });
    }
    if !(net.root_voltage_pu > 0.0) {
        out.push(NetworkViolation::NonPositiveRootVoltage(net.root_voltage_pu));
    }
    if !(net.s_max_pu > 0.0) {
        out.push(NetworkViolation::NonPositiveFlowLimit {
            branch: None,
            s_max: net.s_max_pu,
        });
    }
    if !(net.base_mva > 0.0) || !(net.base_kv > 0.0) {
        out.push(NetworkViolation::NonPositiveBase);
    }
    out
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Nodal injections of the non-root buses, ordered as [`RadialNetwork::non_root_buses`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injection {
    pub fn zeros(net: &RadialNetwork) -> Self {
        let n = net.num_buses().saturating_sub(1);
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    /// Builds an injection from per-bus vectors (indexed by bus, root entry ignored).
    pub fn from_bus_vectors(net: &RadialNetwork, p_bus: &[f64], q_bus: &[f64]) -> Self {
        let buses = net.non_root_buses();
        Self {
            p: buses.iter().map(|&b| p_bus[b]).collect(),
            q: buses.iter().map(|&b| q_bus[b]).collect(),
        }
    }

    pub fn total_p(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus.
    pub voltage: Vec<f64>,
    /// Active sending-end flow per branch (parent to child).
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Squared current magnitude per branch.
    pub current_sq: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest DistFlow residual at the returned point.
    pub residual: f64,
}

impl PowerFlowSolution {
    pub fn apparent_flow(&self, branch: usize) -> f64 {
        self.p_flow[branch].hypot(self.q_flow[branch])
    }
}

/// Infinity norms of the four DistFlow equation blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistflowResiduals {
    pub active: f64,
    pub reactive: f64,
    pub voltage: f64,
    pub current: f64,
}

impl DistflowResiduals {
    pub fn max(&self) -> f64 {
        self.active
            .max(self.reactive)
            .max(self.voltage)
            .max(self.current)
    }
}

/// Tree orientation derived once per network.
#[derive(Debug, Clone)]
pub struct Topology {
    root: usize,
    /// Buses in breadth-first order from the root.
    order: Vec<usize>,
    /// Branch feeding each bus (None for the root).
    parent_branch: Vec<Option<usize>>,
    parent_bus: Vec<Option<usize>>,
    /// Branches leaving each bus toward its children.
    child_branches: Vec<Vec<usize>>,
    /// Position of each bus inside an [`Injection`].
    injection_slot: Vec<Option<usize>>,
}

impl Topology {
    pub fn build(net: &RadialNetwork) -> Result<Self> {
        let violations = validate_network(net);
        if !violations.is_empty() {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidNetwork(msg));
        }
        let n = net.num_buses();
        let root = net.root().expect("validated");
        let mut adjacency = vec![Vec::new(); n];
        for (k, br) in net.branches.iter().enumerate() {
            adjacency[br.from].push((k, br.to));
            adjacency[br.to].push((k, br.from));
        }
        let mut order = Vec::with_capacity(n);
        let mut parent_branch = vec![None; n];
        let mut parent_bus = vec![None; n];
        let mut child_branches = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        seen[root] = true;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let bus = order[head];
            head += 1;
            for &(k, next) in &adjacency[bus] {
                if !seen[next] {
                    seen[next] = true;
                    parent_branch[next] = Some(k);
                    parent_bus[next] = Some(bus);
                    child_branches[bus].push(k);
                    order.push(next);
                }
            }
        }
        let mut injection_slot = vec![None; n];
        for (slot, bus) in net.non_root_buses().into_iter().enumerate() {
            injection_slot[bus] = Some(slot);
        }
        Ok(Self {
            root,
            order,
            parent_branch,
            parent_bus,
            child_branches,
            injection_slot,
        })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// The (parent, child) buses of a branch.
    pub fn branch_ends(&self, net: &RadialNetwork, branch: usize) -> (usize, usize) {
        let br = &net.branches[branch];
        if self.parent_branch[br.to] == Some(branch) {
            (br.from, br.to)
        } else {
            (br.to, br.from)
        }
    }
}

/// Backward-forward sweep solver bound to one network.
#[derive(Debug, Clone)]
pub struct PowerFlow<'a> {
    net: &'a RadialNetwork,
    topo: Topology,
}

impl<'a> PowerFlow<'a> {
    pub fn new(net: &'a RadialNetwork) -> Result<Self> {
        Ok(Self {
            net,
            topo: Topology::build(net)?,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    fn check_injection(&self, inj: &Injection) -> Result<()> {
        let expected = self.net.num_buses() - 1;
        for v in [&inj.p, &inj.q] {
            if v.len() != expected {
                return Err(Error::Shape {
                    context: "injection",
                    expected,
                    found: v.len(),
                });
            }
        }
        if inj.p.iter().chain(&inj.q).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite injection".into()));
        }
        Ok(())
    }

    fn injection_at(&self, inj: &Injection, bus: usize) -> (f64, f64) {
        match self.topo.injection_slot[bus] {
            Some(slot) => (inj.p[slot], inj.q[slot]),
            None => (0.0, 0.0),
        }
    }

    pub fn solve(&self, inj: &Injection) -> Result<PowerFlowSolution> {
        self.check_injection(inj)?;
        let net = self.net;
        let topo = &self.topo;
        let nb = net.branches.len();
        let v_root_sq = net.root_voltage_pu * net.root_voltage_pu;

        let mut v_sq = vec![v_root_sq; net.num_buses()];
        let mut p_flow = vec![0.0; nb];
        let mut q_flow = vec![0.0; nb];
        let mut ell = vec![0.0; nb];
        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;

        while iterations < SWEEP_MAX_ITERATIONS {
            iterations += 1;
            // Backward: aggregate child flows, local injection and the previous losses.
            for &bus in topo.order.iter().rev() {
                let Some(k) = topo.parent_branch[bus] else {
                    continue;
                };
                let (p, q) = self.injection_at(inj, bus);
                let (mut p_out, mut q_out) = (0.0, 0.0);
                for &c in &topo.child_branches[bus] {
                    p_out += p_flow[c];
                    q_out += q_flow[c];
                }
                let br = &net.branches[k];
                p_flow[k] = p_out - p + br.r_pu * ell[k];
                q_flow[k] = q_out - q + br.x_pu * ell[k];
            }
            // Forward: voltage drop along every branch.
            let mut max_dv: f64 = 0.0;
            let mut collapsed = false;
            for &bus in &topo.order {
                let (Some(k), Some(parent)) = (topo.parent_branch[bus], topo.parent_bus[bus]) else {
                    continue;
                };
                let br = &net.branches[k];
                let z_sq = br.r_pu * br.r_pu + br.x_pu * br.x_pu;
                let next = v_sq[parent] - 2.0 * (br.r_pu * p_flow[k] + br.x_pu * q_flow[k])
                    + z_sq * ell[k];
                if !(next > 0.0) || !next.is_finite() {
                    collapsed = true;
                    break;
                }
                max_dv = max_dv.max((next.sqrt() - v_sq[bus].sqrt()).abs());
                v_sq[bus] = next;
            }
            if collapsed {
                break;
            }
            for &bus in &topo.order {
                if let (Some(k), Some(parent)) = (topo.parent_branch[bus], topo.parent_bus[bus]) {
                    ell[k] = (p_flow[k] * p_flow[k] + q_flow[k] * q_flow[k]) / v_sq[parent];
                }
            }
            if max_dv <= SWEEP_TOLERANCE {
                let sol = self.assemble(&v_sq, &p_flow, &q_flow, &ell, false, iterations, 0.0);
                residual = self.residuals(inj, &sol).max();
                if residual <= RESIDUAL_TOLERANCE {
                    converged = true;
                    break;
                }
            }
        }
        if !converged && residual.is_infinite() && v_sq.iter().all(|v| *v > 0.0) {
            let sol = self.assemble(&v_sq, &p_flow, &q_flow, &ell, false, iterations, 0.0);
            residual = self.residuals(inj, &sol).max();
        }
        Ok(self.assemble(&v_sq, &p_flow, &q_flow, &ell, converged, iterations, residual))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        v_sq: &[f64],
        p_flow: &[f64],
        q_flow: &[f64],
        ell: &[f64],
        converged: bool,
        iterations: usize,
        residual: f64,
    ) -> PowerFlowSolution {
        PowerFlowSolution {
            voltage: v_sq.iter().map(|v| v.max(0.0).sqrt()).collect(),
            p_flow: p_flow.to_vec(),
            q_flow: q_flow.to_vec(),
            current_sq: ell.to_vec(),
            converged,
            iterations,
            residual,
        }
    }

    /// Evaluates every DistFlow block at `sol` for the given injections.
    pub fn residuals(&self, inj: &Injection, sol: &PowerFlowSolution) -> DistflowResiduals {
        let net = self.net;
        let topo = &self.topo;
        let mut res = DistflowResiduals {
            active: 0.0,
            reactive: 0.0,
            voltage: 0.0,
            current: 0.0,
        };
        for &bus in &topo.order {
            let (Some(k), Some(parent)) = (topo.parent_branch[bus], topo.parent_bus[bus]) else {
                continue;
            };
            let br = &net.branches[k];
            let (p, q) = self.injection_at(inj, bus);
            let (mut p_out, mut q_out) = (0.0, 0.0);
            for &c in &topo.child_branches[bus] {
                p_out += sol.p_flow[c];
                q_out += sol.q_flow[c];
            }
            let ell = sol.current_sq[k];
            res.active = res
                .active
                .max((p_out - (p + sol.p_flow[k] - br.r_pu * ell)).abs());
            res.reactive = res
                .reactive
                .max((q_out - (q + sol.q_flow[k] - br.x_pu * ell)).abs());
            let vi_sq = sol.voltage[parent] * sol.voltage[parent];
            let vj_sq = sol.voltage[bus] * sol.voltage[bus];
            let z_sq = br.r_pu * br.r_pu + br.x_pu * br.x_pu;
            res.voltage = res.voltage.max(
                (vj_sq - (vi_sq - 2.0 * (br.r_pu * sol.p_flow[k] + br.x_pu * sol.q_flow[k])
                    + z_sq * ell))
                    .abs(),
            );
            let p_sq = sol.p_flow[k] * sol.p_flow[k] + sol.q_flow[k] * sol.q_flow[k];
            res.current = res.current.max((ell * vi_sq - p_sq).abs());
        }
        res
    }

    /// Net active power drawn from the upstream grid at the root bus.
    pub fn root_import(&self, sol: &PowerFlowSolution) -> f64 {
        self.topo.child_branches[self.topo.root]
            .iter()
            .map(|&k| sol.p_flow[k])
            .sum()
    }
}

pub fn solve_power_flow(net: &RadialNetwork, inj: &Injection) -> Result<PowerFlowSolution> {
    PowerFlow::new(net)?.solve(inj)
}

pub fn distflow_residuals(
    net: &RadialNetwork,
    inj: &Injection,
    sol: &PowerFlowSolution,
) -> Result<DistflowResiduals> {
    Ok(PowerFlow::new(net)?.residuals(inj, sol))
}

/// Normalized security margin: non-positive exactly when every voltage and
/// branch-flow limit holds.
pub fn violation_measure(sol: &PowerFlowSolution, net: &RadialNetwork) -> Result<f64> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    let band = net.v_max_pu - net.v_min_pu;
    let mut h = f64::NEG_INFINITY;
    for &v in &sol.voltage {
        h = h.max((net.v_min_pu - v) / band).max((v - net.v_max_pu) / band);
    }
    for k in 0..sol.p_flow.len() {
        let s_max = net.branch_s_max(k);
        h = h.max((sol.apparent_flow(k) - s_max) / s_max);
    }
    Ok(h)
}

/// Total series loss `sum r * I^2` in p.u.
pub fn total_loss(sol: &PowerFlowSolution, net: &RadialNetwork) -> f64 {
    sol.current_sq
        .iter()
        .zip(&net.branches)
        .map(|(ell, br)| ell * br.r_pu)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(r: f64, x: f64) -> RadialNetwork {
        RadialNetwork {
            name: "two-bus".into(),
            buses: vec![
                Bus {
                    index: 0,
                    is_root: true,
                },
                Bus {
                    index: 1,
                    is_root: false,
                },
            ],
            branches: vec![Branch {
                from: 0,
                to: 1,
                r_pu: r,
                x_pu: x,
                s_max_pu: None,
            }],
            root_voltage_pu: 1.0,
            v_min_pu: 0.9,
            v_max_pu: 1.1,
            s_max_pu: 0.4,
            base_mva: 10.0,
            base_kv: 12.66,
        }
    }

    /// Smaller root of the quadratic in I^2 obtained by eliminating P and Q
    /// from the two-bus DistFlow equations.
    fn two_bus_oracle(r: f64, x: f64, v0: f64, p: f64, q: f64) -> (f64, f64, f64, f64) {
        let a = r * r + x * x;
        let b = -(v0 * v0 + 2.0 * p * r + 2.0 * q * x);
        let c = p * p + q * q;
        let disc = (b * b - 4.0 * a * c).sqrt();
        // numerically stable form of the smaller root
        let ell = 2.0 * c / (-b + disc);
        let pf = -p + r * ell;
        let qf = -q + x * ell;
        let v1_sq = v0 * v0 - 2.0 * (r * pf + x * qf) + a * ell;
        (v1_sq.sqrt(), ell, pf, qf)
    }

    #[test]
    fn minimal_tree_is_valid() {
        assert!(validate_network(&two_bus(0.01, 0.01)).is_empty());
        assert!(validate_network(&RadialNetwork::ieee33()).is_empty());
    }

    #[test]
    fn cycle_is_reported() {
        let mut net = two_bus(0.01, 0.01);
        net.buses.push(Bus {
            index: 2,
            is_root: false,
        });
        net.branches = vec![(0, 1), (1, 2), (2, 0)]
            .into_iter()
            .map(|(from, to)| Branch {
                from,
                to,
                r_pu: 0.01,
                x_pu: 0.01,
                s_max_pu: None,
            })
            .collect();
        let v = validate_network(&net);
        assert!(v.iter().any(|v| matches!(v, NetworkViolation::Cycle { .. })));
        assert!(v.iter().any(|v| v.to_string().contains("cycle")));
    }

    #[test]
    fn negative_resistance_and_bounds() {
        let mut net = two_bus(-0.01, 0.01);
        net.v_min_pu = 1.2;
        let v = validate_network(&net);
        assert!(v
            .iter()
            .any(|v| v.to_string().contains("negative resistance")));
        assert!(v
            .iter()
            .any(|v| matches!(v, NetworkViolation::InvertedVoltageBounds { .. })));
    }

    #[test]
    fn disconnected_bus_is_reported() {
        let mut net = two_bus(0.01, 0.01);
        net.buses.push(Bus {
            index: 2,
            is_root: false,
        });
        net.buses.push(Bus {
            index: 3,
            is_root: false,
        });
        net.branches.push(Branch {
            from: 2,
            to: 3,
            r_pu: 0.01,
            x_pu: 0.01,
            s_max_pu: None,
        });
        let v = validate_network(&net);
        assert!(v
            .iter()
            .any(|v| matches!(v, NetworkViolation::Disconnected { .. })));
        assert!(matches!(
            solve_power_flow(&net, &Injection::zeros(&net)),
            Err(Error::InvalidNetwork(_))
        ));
    }

    #[test]
    fn no_load_fixed_point() {
        let net = RadialNetwork::ieee33();
        let sol = solve_power_flow(&net, &Injection::zeros(&net)).unwrap();
        assert!(sol.converged);
        assert!(sol.voltage.iter().all(|&v| v == net.root_voltage_pu));
        assert!(sol.p_flow.iter().chain(&sol.q_flow).all(|&f| f == 0.0));
        assert!(sol.current_sq.iter().all(|&l| l == 0.0));
        assert_eq!(total_loss(&sol, &net), 0.0);
    }

    #[test]
    fn two_bus_matches_quadratic_oracle() {
        let net = two_bus(0.01, 0.01);
        let inj = Injection {
            p: vec![-0.1],
            q: vec![-0.05],
        };
        let sol = solve_power_flow(&net, &inj).unwrap();
        assert!(sol.converged);
        let (v1, ell, pf, qf) = two_bus_oracle(0.01, 0.01, 1.0, -0.1, -0.05);
        assert!((sol.voltage[1] - v1).abs() <= 1e-10);
        assert!((sol.current_sq[0] - ell).abs() <= 1e-10);
        assert!((sol.p_flow[0] - pf).abs() <= 1e-10);
        assert!((sol.q_flow[0] - qf).abs() <= 1e-10);
    }

    #[test]
    fn generation_reverses_flow_direction() {
        let net = two_bus(0.01, 0.01);
        let load = solve_power_flow(
            &net,
            &Injection {
                p: vec![-0.1],
                q: vec![-0.05],
            },
        )
        .unwrap();
        let gen = solve_power_flow(
            &net,
            &Injection {
                p: vec![0.1],
                q: vec![-0.05],
            },
        )
        .unwrap();
        assert!(load.p_flow[0] > 0.0);
        assert!(gen.p_flow[0] < 0.0);
    }

    #[test]
    fn violation_measure_examples() {
        let net = two_bus(0.01, 0.01);
        let flat = PowerFlowSolution {
            voltage: vec![1.0, 1.0],
            p_flow: vec![0.0],
            q_flow: vec![0.0],
            current_sq: vec![0.0],
            converged: true,
            iterations: 1,
            residual: 0.0,
        };
        assert!((violation_measure(&flat, &net).unwrap() - (-0.5)).abs() < 1e-15);

        let mut high = flat.clone();
        high.voltage[1] = 1.12;
        assert!((violation_measure(&high, &net).unwrap() - 0.1).abs() < 1e-12);

        let mut at_limit = flat.clone();
        at_limit.voltage[1] = 1.0;
        at_limit.p_flow[0] = 0.4;
        assert_eq!(violation_measure(&at_limit, &net).unwrap(), 0.0);

        let mut bad = flat;
        bad.converged = false;
        assert!(matches!(
            violation_measure(&bad, &net),
            Err(Error::NotConverged)
        ));
    }

    #[test]
    fn loss_examples() {
        let net = two_bus(0.01, 0.01);
        let sol = PowerFlowSolution {
            voltage: vec![1.0, 1.0],
            p_flow: vec![0.2],
            q_flow: vec![0.0],
            current_sq: vec![0.04],
            converged: true,
            iterations: 1,
            residual: 0.0,
        };
        assert!((total_loss(&sol, &net) - 4e-4).abs() < 1e-18);
    }

    #[test]
    fn loss_equals_root_balance() {
        let net = RadialNetwork::ieee33();
        let pf = PowerFlow::new(&net).unwrap();
        let mut inj = Injection::zeros(&net);
        for (i, (p, q)) in inj.p.iter_mut().zip(inj.q.iter_mut()).enumerate() {
            *p = -0.01 * ((i % 5) as f64);
            *q = -0.004 * ((i % 3) as f64);
        }
        inj.p[16] = 0.15;
        let sol = pf.solve(&inj).unwrap();
        assert!(sol.converged);
        let loss = total_loss(&sol, &net);
        assert!(loss > 0.0);
        assert!((loss - (pf.root_import(&sol) + inj.total_p())).abs() <= 1e-8);
        assert!(pf.residuals(&inj, &sol).max() <= 1e-8);
    }

    #[test]
    fn injection_shape_is_checked() {
        let net = two_bus(0.01, 0.01);
        let inj = Injection {
            p: vec![0.0, 0.0],
            q: vec![0.0],
        };
        assert!(matches!(
            solve_power_flow(&net, &inj),
            Err(Error::Shape { .. })
        ));
    }
}
