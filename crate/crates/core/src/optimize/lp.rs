//! Bounded-variable revised simplex with a product-form basis inverse.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal feasibility tolerance on rows and bounds.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: usize = 50;
const REFACTOR_EVERY: usize = 100;
/// Largest row residual accepted on a returned solution.
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    #[serde(default)]
    pub name: String,
}

/// `min c'x` subject to rows and `lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row {
            coefs,
            sense,
            rhs,
            name: name.into(),
        });
    }

    pub fn add_le(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) {
        self.add_row(name, coefs, Sense::Le, rhs);
    }

    /// `coefs . x >= rhs`, stored negated.
    pub fn add_ge(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) {
        let neg = coefs.into_iter().map(|(j, a)| (j, -a)).collect();
        self.add_row(name, neg, Sense::Le, -rhs);
    }

    pub fn add_eq(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, rhs: f64) {
        self.add_row(name, coefs, Sense::Eq, rhs);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (len, context) in [
            (self.lower.len(), "lower bounds"),
            (self.upper.len(), "upper bounds"),
            (self.names.len(), "variable names"),
        ] {
            if len != n {
                return Err(Error::Shape {
                    context,
                    expected: n,
                    found: len,
                });
            }
        }
        for j in 0..n {
            if !self.objective[j].is_finite() || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::InvalidParameter(format!("column {} is not finite", self.names[j])));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidParameter(format!("row {} has non-finite rhs", row.name)));
            }
            for &(j, a) in &row.coefs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "row {} has an invalid coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn row_activity(&self, row: &Row, x: &[f64]) -> f64 {
        row.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let act = self.row_activity(row, x);
            let v = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// LP-format text: objective, constraints, bounds and the given integer columns.
    pub fn to_lp_format(&self, binaries: &[usize]) -> String {
        let term = |a: f64, j: usize, first: bool| {
            let name = &self.names[j];
            if first {
                format!("{a} {name}")
            } else if a < 0.0 {
                format!(" - {} {name}", -a)
            } else {
                format!(" + {a} {name}")
            }
        };
        let mut out = String::from("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                out += " ";
                out += term(c, j, first).trim_start();
                first = false;
            }
        }
        if first {
            out += " 0";
        }
        out += "\nSubject To\n";
        for (i, row) in self.rows.iter().enumerate() {
            let name = if row.name.is_empty() { format!("r{i}") } else { row.name.clone() };
            let _ = write!(out, " {name}:");
            let mut first = true;
            for &(j, a) in &row.coefs {
                out += " ";
                out += term(a, j, first).trim_start();
                first = false;
            }
            if first {
                out += " 0";
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out += "Bounds\n";
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let fmt = |v: f64| {
                if v == f64::INFINITY {
                    "+inf".to_string()
                } else if v == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    v.to_string()
                }
            };
            let _ = writeln!(out, " {} <= {} <= {}", fmt(lo), self.names[j], fmt(hi));
        }
        if !binaries.is_empty() {
            out += "Binaries\n";
            for &j in binaries {
                let _ = writeln!(out, " {}", self.names[j]);
            }
        }
        out += "End\n";
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub node_count: usize,
    pub lp_iterations: usize,
    pub wall_time_s: f64,
}

impl SolveResult {
    fn without_solution(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            values: Vec::new(),
            node_count: 0,
            lp_iterations: iterations,
            wall_time_s: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Presolve: fixed columns and singleton rows.

pub(crate) struct Reduced {
    pub(crate) lp: LinearProgram,
    /// Original column of each reduced column.
    pub(crate) kept: Vec<usize>,
    /// Value of every original column that was eliminated.
    pub(crate) fixed: Vec<Option<f64>>,
}

impl Reduced {
    /// Full-length primal vector from a reduced one.
    pub(crate) fn expand(&self, xr: &[f64]) -> Vec<f64> {
        let mut values: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &j) in self.kept.iter().enumerate() {
            values[j] = xr[k];
        }
        values
    }

    /// Reduced index of every original column, `None` when eliminated.
    pub(crate) fn index(&self) -> Vec<Option<usize>> {
        let mut idx = vec![None; self.fixed.len()];
        for (k, &j) in self.kept.iter().enumerate() {
            idx[j] = Some(k);
        }
        idx
    }
}

pub(crate) enum Presolved {
    Reduced(Reduced),
    Infeasible,
}

pub(crate) fn presolve(lp: &LinearProgram) -> Presolved {
    let n = lp.num_vars();
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    let mut rows: Vec<Row> = lp
        .rows
        .iter()
        .map(|r| {
            let mut coefs: Vec<(usize, f64)> = r.coefs.iter().copied().filter(|&(_, a)| a != 0.0).collect();
            coefs.sort_by_key(|&(j, _)| j);
            coefs.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            Row {
                coefs,
                sense: r.sense,
                rhs: r.rhs,
                name: r.name.clone(),
            }
        })
        .collect();
    let mut row_alive = vec![true; rows.len()];
    let mut fixed: Vec<Option<f64>> = vec![None; n];

    loop {
        let mut changed = false;
        for j in 0..n {
            if fixed[j].is_none() {
                if lower[j] > upper[j] + FEAS_TOL {
                    return Presolved::Infeasible;
                }
                if upper[j] - lower[j] <= 0.0 || (upper[j] - lower[j]).abs() <= 1e-12 {
                    fixed[j] = Some(lower[j]);
                    changed = true;
                }
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if !row_alive[i] {
                continue;
            }
            let mut shift = 0.0;
            row.coefs.retain(|&(j, a)| match fixed[j] {
                Some(v) => {
                    shift += a * v;
                    false
                }
                None => true,
            });
            row.rhs -= shift;
            match row.coefs.len() {
                0 => {
                    let ok = match row.sense {
                        Sense::Le => row.rhs >= -FEAS_TOL,
                        Sense::Eq => row.rhs.abs() <= FEAS_TOL,
                    };
                    if !ok {
                        return Presolved::Infeasible;
                    }
                    row_alive[i] = false;
                    changed = true;
                }
                1 => {
                    let (j, a) = row.coefs[0];
                    let bound = row.rhs / a;
                    match (row.sense, a > 0.0) {
                        (Sense::Eq, _) => {
                            lower[j] = lower[j].max(bound);
                            upper[j] = upper[j].min(bound);
                        }
                        (Sense::Le, true) => upper[j] = upper[j].min(bound),
                        (Sense::Le, false) => lower[j] = lower[j].max(bound),
                    }
                    if lower[j] > upper[j] {
                        if lower[j] - upper[j] <= FEAS_TOL * (1.0 + bound.abs()) {
                            let mid = 0.5 * (lower[j] + upper[j]);
                            lower[j] = mid;
                            upper[j] = mid;
                        } else {
                            return Presolved::Infeasible;
                        }
                    }
                    row_alive[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut index = vec![usize::MAX; n];
    for (k, &j) in kept.iter().enumerate() {
        index[j] = k;
    }
    let mut reduced = LinearProgram::default();
    for &j in &kept {
        reduced.add_var(lp.names[j].clone(), lower[j], upper[j], lp.objective[j]);
    }
    for (i, row) in rows.into_iter().enumerate() {
        if row_alive[i] {
            reduced.rows.push(Row {
                coefs: row.coefs.into_iter().map(|(j, a)| (index[j], a)).collect(),
                ..row
            });
        }
    }
    Presolved::Reduced(Reduced {
        lp: reduced,
        kept,
        fixed,
    })
}

// ---------------------------------------------------------------------------
// Simplex core

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column resting at zero.
    FreeZero,
}

enum Phase {
    Optimal,
    Unbounded,
}

/// One elementary transformation `E` of the product-form inverse: the
/// identity with column `row` replaced by a transformed entering column.
struct Eta {
    row: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

/// `B^-1 = E_k^-1 ... E_1^-1`.
#[derive(Default)]
struct EtaFile {
    etas: Vec<Eta>,
}

impl EtaFile {
    fn push(&mut self, row: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != row && *a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            row,
            pivot: alpha[row],
            others,
        });
    }

    /// `v <- B^-1 v`.
    fn ftran(&self, v: &mut [f64]) {
        for e in &self.etas {
            let vr = v[e.row];
            if vr != 0.0 {
                let t = vr / e.pivot;
                v[e.row] = t;
                for &(i, a) in &e.others {
                    v[i] -= a * t;
                }
            }
        }
    }

    /// `w' <- w' B^-1`.
    fn btran(&self, w: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut acc = w[e.row];
            for &(i, a) in &e.others {
                acc -= a * w[i];
            }
            w[e.row] = acc / e.pivot;
        }
    }
}

struct Simplex {
    m: usize,
    /// Sparse columns: structural, then one slack per row, then artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    inv: EtaFile,
    iterations: usize,
    since_refactor: usize,
}

impl Simplex {
    /// Structural columns followed by one slack per row, with their bounds.
    #[allow(clippy::type_complexity)]
    fn columns(lp: &LinearProgram) -> (Vec<Vec<(usize, f64)>>, Vec<f64>, Vec<f64>) {
        let n = lp.num_vars();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                cols[j].push((i, a));
            }
        }
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            cols.push(vec![(i, 1.0)]);
            lo.push(0.0);
            hi.push(match row.sense {
                Sense::Le => f64::INFINITY,
                Sense::Eq => 0.0,
            });
        }
        (cols, lo, hi)
    }

    fn new(lp: &LinearProgram) -> (Self, Vec<usize>) {
        let m = lp.rows.len();
        let n = lp.num_vars();
        let (mut cols, mut lo, mut hi) = Self::columns(lp);
        let mut state = Vec::with_capacity(n + m);
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            let (s, v) = if lo[j].is_finite() {
                (VarState::AtLower, lo[j])
            } else if hi[j].is_finite() {
                (VarState::AtUpper, hi[j])
            } else {
                (VarState::FreeZero, 0.0)
            };
            state.push(s);
            x.push(v);
        }
        let b: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        let mut residual = b.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for &(i, a) in &cols[j] {
                    residual[i] -= a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut inv = EtaFile::default();
        let mut artificials = Vec::new();
        for i in 0..m {
            let slack = n + i;
            let r = residual[i];
            if r >= lo[slack] && r <= hi[slack] {
                state.push(VarState::Basic);
                x.push(r);
                basis[i] = slack;
            } else {
                state.push(VarState::AtLower);
                x.push(0.0);
                artificials.push(i);
            }
        }
        for &i in &artificials {
            let sigma = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, sigma)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            state.push(VarState::Basic);
            x.push(residual[i].abs());
            basis[i] = cols.len() - 1;
            if sigma < 0.0 {
                inv.etas.push(Eta {
                    row: i,
                    pivot: sigma,
                    others: Vec::new(),
                });
            }
        }
        let first_artificial = n + m;
        let art_cols = (first_artificial..cols.len()).collect();
        (
            Self {
                m,
                cols,
                lo,
                hi,
                b,
                basis,
                state,
                x,
                inv,
                iterations: 0,
                since_refactor: 0,
            },
            art_cols,
        )
    }

    /// Rebuilds the eta file from scratch; unit columns are placed first on
    /// their own rows, the rest in order of increasing density.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut inv = EtaFile::default();
        let mut slot = vec![usize::MAX; m];
        let mut rest = Vec::new();
        for &j in &self.basis {
            match self.cols[j].as_slice() {
                &[(i, a)] if slot[i] == usize::MAX => {
                    slot[i] = j;
                    if a != 1.0 {
                        inv.etas.push(Eta {
                            row: i,
                            pivot: a,
                            others: Vec::new(),
                        });
                    }
                }
                _ => rest.push(j),
            }
        }
        rest.sort_by_key(|&j| self.cols[j].len());
        let mut v = vec![0.0; m];
        for j in rest {
            v.iter_mut().for_each(|x| *x = 0.0);
            for &(i, a) in &self.cols[j] {
                v[i] = a;
            }
            inv.ftran(&mut v);
            let (r, best) = (0..m)
                .filter(|&r| slot[r] == usize::MAX)
                .map(|r| (r, v[r].abs()))
                .fold((usize::MAX, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best < 1e-11 {
                return Err(Error::Numerical("singular basis during refactorization".into()));
            }
            inv.push(r, &v);
            slot[r] = j;
        }
        self.basis = slot;
        self.inv = inv;
        self.compute_basic();
        Ok(())
    }

    /// Basic values from the nonbasic ones and the current inverse.
    fn compute_basic(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.cols.len() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                for &(i, v) in &self.cols[j] {
                    rhs[i] -= v * self.x[j];
                }
            }
        }
        self.inv.ftran(&mut rhs);
        for r in 0..m {
            self.x[self.basis[r]] = rhs[r];
        }
        self.since_refactor = 0;
    }

    /// Updates the inverse after column `alpha = B^-1 a_q` replaces basic row `r`.
    fn pivot(&mut self, r: usize, alpha: &[f64]) -> Result<()> {
        if alpha[r].abs() < PIVOT_TOL {
            return Err(Error::Numerical("pivot element vanished".into()));
        }
        self.inv.push(r, alpha);
        self.since_refactor += 1;
        Ok(())
    }

    fn column_ftran(&self, j: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; self.m];
        for &(i, v) in &self.cols[j] {
            alpha[i] = v;
        }
        self.inv.ftran(&mut alpha);
        alpha
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        self.inv.btran(&mut y);
        y
    }

    /// Row `r` of the basis inverse.
    fn inverse_row(&self, r: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        w[r] = 1.0;
        self.inv.btran(&mut w);
        w
    }

    fn run(&mut self, cost: &[f64], max_iterations: usize) -> Result<Phase> {
        let m = self.m;
        let refactor_every = REFACTOR_EVERY;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= max_iterations {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            if self.since_refactor >= refactor_every {
                self.refactor()?;
            }
            let bland = degenerate > BLAND_AFTER;
            let y = self.duals(cost);

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..self.cols.len() {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>();
                let dir = match st {
                    VarState::AtLower if d < -OPT_TOL => 1.0,
                    VarState::AtUpper if d > OPT_TOL => -1.0,
                    VarState::FreeZero if d.abs() > OPT_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(Phase::Optimal);
            };

            let alpha = self.column_ftran(q);
            // ratio test: basic i moves at rate g_i = -dir * alpha_i
            let ratio = |i: usize, relax: f64| -> Option<f64> {
                let g = -dir * alpha[i];
                let j = self.basis[i];
                let v = self.x[j];
                if g < -PIVOT_TOL && self.lo[j].is_finite() {
                    Some(((v - self.lo[j] + relax) / -g).max(0.0))
                } else if g > PIVOT_TOL && self.hi[j].is_finite() {
                    Some(((self.hi[j] - v + relax) / g).max(0.0))
                } else {
                    None
                }
            };
            let mut leave: Option<usize> = None;
            let mut theta = f64::INFINITY;
            if bland {
                for i in 0..m {
                    if let Some(t) = ratio(i, 0.0) {
                        let better = match leave {
                            None => true,
                            Some(l) => {
                                t < theta - 1e-12
                                    || (t <= theta + 1e-12 && self.basis[i] < self.basis[l])
                            }
                        };
                        if better {
                            theta = t;
                            leave = Some(i);
                        }
                    }
                }
            } else {
                let mut bound = f64::INFINITY;
                for i in 0..m {
                    if let Some(t) = ratio(i, HARRIS_TOL) {
                        bound = bound.min(t);
                    }
                }
                let mut best_pivot = 0.0;
                for i in 0..m {
                    if let Some(t) = ratio(i, 0.0) {
                        if t <= bound && alpha[i].abs() > best_pivot {
                            best_pivot = alpha[i].abs();
                            theta = t;
                            leave = Some(i);
                        }
                    }
                }
            }
            let span = self.hi[q] - self.lo[q];
            if span <= theta {
                // bound flip
                theta = span;
                leave = None;
            }
            if !theta.is_finite() {
                return Ok(Phase::Unbounded);
            }

            self.iterations += 1;
            if theta <= DEGENERATE_STEP {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= dir * alpha[i] * theta;
            }
            self.x[q] += dir * theta;

            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let g = -dir * alpha[r];
                    if g < 0.0 {
                        self.state[out] = VarState::AtLower;
                        self.x[out] = self.lo[out];
                    } else {
                        self.state[out] = VarState::AtUpper;
                        self.x[out] = self.hi[out];
                    }
                    self.state[q] = VarState::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha)?;
                }
            }
        }
    }

    /// Re-enters the simplex at a previously optimal basis; `None` when the
    /// basis does not fit `lp` or is singular.
    fn warm(lp: &LinearProgram, start: &Basis) -> Option<Self> {
        let m = lp.rows.len();
        let n = lp.num_vars();
        if start.0.len() != n + m {
            return None;
        }
        let (cols, lo, hi) = Self::columns(lp);
        let mut state = start.0.clone();
        let mut x = vec![0.0; n + m];
        let mut basis = Vec::with_capacity(m);
        for j in 0..n + m {
            if state[j] == VarState::Basic {
                basis.push(j);
                continue;
            }
            let prefer_upper = state[j] == VarState::AtUpper;
            (state[j], x[j]) = match (lo[j].is_finite(), hi[j].is_finite()) {
                (true, true) if prefer_upper => (VarState::AtUpper, hi[j]),
                (true, _) => (VarState::AtLower, lo[j]),
                (false, true) => (VarState::AtUpper, hi[j]),
                (false, false) => (VarState::FreeZero, 0.0),
            };
        }
        if basis.len() != m {
            return None;
        }
        let mut s = Self {
            m,
            cols,
            lo,
            hi,
            b: lp.rows.iter().map(|r| r.rhs).collect(),
            basis,
            state,
            x,
            inv: EtaFile::default(),
            iterations: 0,
            since_refactor: 0,
        };
        s.refactor().ok()?;
        Some(s)
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    /// Moves boxed nonbasic columns with a wrong-signed reduced cost to their
    /// other bound; false when some column has no other bound to move to.
    fn repair_dual(&mut self, cost: &[f64]) -> bool {
        let y = self.duals(cost);
        let mut flipped = false;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, cost, &y);
            match st {
                VarState::AtLower if d < -OPT_TOL => {
                    if !self.hi[j].is_finite() {
                        return false;
                    }
                    self.state[j] = VarState::AtUpper;
                    self.x[j] = self.hi[j];
                    flipped = true;
                }
                VarState::AtUpper if d > OPT_TOL => {
                    if !self.lo[j].is_finite() {
                        return false;
                    }
                    self.state[j] = VarState::AtLower;
                    self.x[j] = self.lo[j];
                    flipped = true;
                }
                VarState::FreeZero if d.abs() > OPT_TOL => return false,
                _ => {}
            }
        }
        if flipped {
            self.compute_basic();
        }
        true
    }

    /// Dual simplex from a dual-feasible basis until the primal is feasible.
    fn run_dual(&mut self, cost: &[f64], max_iterations: usize) -> Result<DualPhase> {
        let m = self.m;
        let refactor_every = REFACTOR_EVERY;
        let mut refreshed = false;
        loop {
            if self.iterations >= max_iterations {
                return Err(Error::Numerical("dual simplex iteration limit reached".into()));
            }
            if self.since_refactor >= refactor_every {
                self.refactor()?;
            }
            let mut leave = None;
            let mut worst = FEAS_TOL;
            for r in 0..m {
                let j = self.basis[r];
                let v = self.x[j];
                let viol = (self.lo[j] - v).max(v - self.hi[j]);
                if viol > worst {
                    worst = viol;
                    leave = Some(r);
                }
            }
            let Some(r) = leave else {
                return Ok(DualPhase::Feasible);
            };
            let out = self.basis[r];
            let below = self.x[out] < self.lo[out];
            let y = self.duals(cost);
            let rho = self.inverse_row(r);

            // (column, row entry, |reduced cost|)
            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..self.cols.len() {
                let st = self.state[j];
                if st == VarState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                let eligible = match st {
                    VarState::AtLower => (below && a < -PIVOT_TOL) || (!below && a > PIVOT_TOL),
                    VarState::AtUpper => (below && a > PIVOT_TOL) || (!below && a < -PIVOT_TOL),
                    VarState::FreeZero => a.abs() > PIVOT_TOL,
                    VarState::Basic => false,
                };
                if eligible {
                    candidates.push((j, a, self.reduced_cost(j, cost, &y).abs()));
                }
            }
            if candidates.is_empty() {
                if !refreshed && self.since_refactor > 0 {
                    self.refactor()?;
                    refreshed = true;
                    continue;
                }
                return Ok(DualPhase::Infeasible);
            }
            refreshed = false;
            let bound = candidates
                .iter()
                .map(|&(_, a, d)| (d + HARRIS_TOL) / a.abs())
                .fold(f64::INFINITY, f64::min);
            let (q, _, _) = candidates
                .iter()
                .filter(|&&(_, a, d)| d / a.abs() <= bound)
                .fold(None::<(usize, f64, f64)>, |best, &c| match best {
                    Some(b) if b.1.abs() >= c.1.abs() => Some(b),
                    _ => Some(c),
                })
                .expect("the smallest ratio is within its own bound");

            let alpha = self.column_ftran(q);
            if alpha[r].abs() < PIVOT_TOL {
                self.refactor()?;
                continue;
            }
            let target = if below { self.lo[out] } else { self.hi[out] };
            let delta = (self.x[out] - target) / alpha[r];
            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= alpha[i] * delta;
            }
            self.x[q] += delta;
            self.x[out] = target;
            self.state[out] = if below { VarState::AtLower } else { VarState::AtUpper };
            self.state[q] = VarState::Basic;
            self.basis[r] = q;
            self.pivot(r, &alpha)?;
            self.iterations += 1;
        }
    }

    /// Status of the `n + m` structural and slack columns; a basic
    /// artificial hands its basis slot to the slack of the same row.
    fn basis_status(&self, total: usize) -> Basis {
        let mut states = self.state[..total].to_vec();
        for &j in &self.basis {
            if j >= total {
                let row = self.cols[j][0].0;
                states[total - self.m + row] = VarState::Basic;
            }
        }
        Basis(states)
    }
}

enum DualPhase {
    Feasible,
    Infeasible,
}

/// Column statuses of an optimal basis, reusable after bound changes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis(Vec<VarState>);

pub(crate) struct CoreSolution {
    pub(crate) status: SolveStatus,
    pub(crate) x: Vec<f64>,
    pub(crate) iterations: usize,
    pub(crate) basis: Option<Basis>,
}

impl CoreSolution {
    fn without_point(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            x: Vec::new(),
            iterations,
            basis: None,
        }
    }
}

fn iteration_cap(lp: &LinearProgram) -> usize {
    50_000 + 50 * (lp.num_vars() + lp.rows.len())
}

fn cold_solve(lp: &LinearProgram) -> Result<CoreSolution> {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let (mut s, artificials) = Simplex::new(lp);
    let max_iterations = iteration_cap(lp);

    if !artificials.is_empty() {
        let mut cost = vec![0.0; s.cols.len()];
        for &j in &artificials {
            cost[j] = 1.0;
        }
        match s.run(&cost, max_iterations)? {
            Phase::Optimal => {}
            Phase::Unbounded => return Err(Error::Numerical("phase 1 reported unbounded".into())),
        }
        s.refactor()?;
        let infeasibility: f64 = artificials.iter().map(|&j| s.x[j].max(0.0)).sum();
        let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return Ok(CoreSolution::without_point(SolveStatus::Infeasible, s.iterations));
        }
        for &j in &artificials {
            s.hi[j] = 0.0;
            if s.state[j] != VarState::Basic {
                s.state[j] = VarState::AtLower;
                s.x[j] = 0.0;
            }
        }
    }
    let mut cost = vec![0.0; s.cols.len()];
    cost[..n].copy_from_slice(&lp.objective);
    match s.run(&cost, max_iterations)? {
        Phase::Optimal => {}
        Phase::Unbounded => return Ok(CoreSolution::without_point(SolveStatus::Unbounded, s.iterations)),
    }
    s.refactor()?;
    Ok(CoreSolution {
        status: SolveStatus::Optimal,
        x: s.x[..n].to_vec(),
        iterations: s.iterations,
        basis: Some(s.basis_status(n + m)),
    })
}

/// Dual simplex from `start`; `Ok(None)` asks the caller to solve cold.
fn warm_solve(lp: &LinearProgram, start: &Basis) -> Result<(Option<CoreSolution>, usize)> {
    let n = lp.num_vars();
    let m = lp.rows.len();
    let Some(mut s) = Simplex::warm(lp, start) else {
        return Ok((None, 0));
    };
    let mut cost = vec![0.0; s.cols.len()];
    cost[..n].copy_from_slice(&lp.objective);
    if !s.repair_dual(&cost) {
        return Ok((None, 0));
    }
    let cap = iteration_cap(lp);
    match s.run_dual(&cost, cap) {
        Ok(DualPhase::Feasible) => {}
        Ok(DualPhase::Infeasible) => {
            return Ok((Some(CoreSolution::without_point(SolveStatus::Infeasible, s.iterations)), 0))
        }
        Err(Error::Numerical(_)) => return Ok((None, s.iterations)),
        Err(e) => return Err(e),
    }
    match s.run(&cost, cap) {
        Ok(Phase::Optimal) => {}
        Ok(Phase::Unbounded) => {
            return Ok((Some(CoreSolution::without_point(SolveStatus::Unbounded, s.iterations)), 0))
        }
        Err(Error::Numerical(_)) => return Ok((None, s.iterations)),
        Err(e) => return Err(e),
    }
    if s.refactor().is_err() {
        return Ok((None, s.iterations));
    }
    let drift = s
        .basis
        .iter()
        .map(|&j| (s.lo[j] - s.x[j]).max(s.x[j] - s.hi[j]))
        .fold(0.0, f64::max);
    if drift > FEAS_TOL {
        return Ok((None, s.iterations));
    }
    Ok((
        Some(CoreSolution {
            status: SolveStatus::Optimal,
            x: s.x[..n].to_vec(),
            iterations: s.iterations,
            basis: Some(s.basis_status(n + m)),
        }),
        0,
    ))
}

/// Solves `lp` as given (no presolve), re-entering at `warm` when possible.
pub(crate) fn solve_core(lp: &LinearProgram, warm: Option<&Basis>) -> Result<CoreSolution> {
    let mut wasted = 0;
    if let Some(start) = warm {
        let (sol, spent) = warm_solve(lp, start)?;
        if let Some(sol) = sol {
            return Ok(sol);
        }
        wasted = spent;
    }
    let mut sol = cold_solve(lp)?;
    sol.iterations += wasted;
    Ok(sol)
}

/// Solves an LP to optimality or reports infeasibility/unboundedness.
pub fn simplex_solve(lp: &LinearProgram) -> Result<SolveResult> {
    let start = Instant::now();
    lp.validate()?;
    let reduced = match presolve(lp) {
        Presolved::Infeasible => {
            let mut r = SolveResult::without_solution(SolveStatus::Infeasible, 0);
            r.wall_time_s = start.elapsed().as_secs_f64();
            return Ok(r);
        }
        Presolved::Reduced(r) => r,
    };
    let core = solve_core(&reduced.lp, None)?;
    if core.status != SolveStatus::Optimal {
        let mut r = SolveResult::without_solution(core.status, core.iterations);
        r.wall_time_s = start.elapsed().as_secs_f64();
        return Ok(r);
    }
    let values = reduced.expand(&core.x);
    check_residual(lp, &values)?;
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
        node_count: 0,
        lp_iterations: core.iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

pub(crate) fn check_residual(lp: &LinearProgram, values: &[f64]) -> Result<()> {
    let violation = lp.max_violation(values);
    if violation > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "solution violates constraints by {violation:e}"
        )));
    }
    Ok(())
}
