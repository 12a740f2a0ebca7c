//! Region pruning and redundant-row removal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::lp::{simplex_solve, LinearProgram, SolveStatus};
use crate::pwl::{Polytope, Region};

/// Slack allowed when deciding that a row is implied by the others.
pub const REDUNDANCY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

fn base_lp(poly: &Polytope, skip: Option<usize>) -> LinearProgram {
    let dim = poly.dim();
    let mut lp = LinearProgram::default();
    for d in 0..dim {
        let (lo, hi) = match &poly.domain {
            Some(b) => (b.lower[d], b.upper[d]),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        lp.add_var(format!("u{d}"), lo, hi, 0.0);
    }
    for (i, (row, &b)) in poly.a.iter().zip(&poly.beta).enumerate() {
        if Some(i) != skip {
            lp.add_le(
                format!("row{i}"),
                row.iter().copied().enumerate().filter(|&(_, a)| a != 0.0).collect(),
                b,
            );
        }
    }
    lp
}

/// Phase-1 check of `poly`; returns a witness point when non-empty.
pub fn region_feasible(poly: &Polytope) -> Result<Feasibility> {
    let r = simplex_solve(&base_lp(poly, None))?;
    Ok(match r.status {
        SolveStatus::Optimal => Feasibility::Feasible(r.values),
        _ => Feasibility::Infeasible,
    })
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub retained: Vec<Region>,
    pub candidates: usize,
    pub dropped_unsampled: usize,
    pub dropped_infeasible: usize,
}

/// Keeps regions that carry at least one sample and contain a point with
/// `h <= 0`; the witness of each retained region is recorded.
pub fn prune_regions(regions: Vec<Region>) -> Result<PruneOutcome> {
    let candidates = regions.len();
    let mut retained = Vec::new();
    let mut dropped_unsampled = 0;
    let mut dropped_infeasible = 0;
    for mut region in regions {
        if region.sample_count == 0 {
            dropped_unsampled += 1;
            continue;
        }
        match region_feasible(&region.polytope)? {
            Feasibility::Feasible(w) => {
                region.witness = Some(w);
                retained.push(region);
            }
            Feasibility::Infeasible => dropped_infeasible += 1,
        }
    }
    if retained.is_empty() {
        return Err(Error::NoFeasibleRegion);
    }
    Ok(PruneOutcome {
        retained,
        candidates,
        dropped_unsampled,
        dropped_infeasible,
    })
}

/// `max a.u` over the rows of `poly` other than `skip`, within its box.
fn row_maximum(poly: &Polytope, a: &[f64], skip: Option<usize>) -> Result<f64> {
    let mut lp = base_lp(poly, skip);
    for (j, v) in a.iter().enumerate() {
        lp.objective[j] = -v;
    }
    let r = simplex_solve(&lp)?;
    match r.status {
        SolveStatus::Optimal => Ok(-r.objective),
        SolveStatus::Unbounded => Ok(f64::INFINITY),
        _ => Err(Error::Numerical(
            "redundancy LP infeasible on a polytope assumed non-empty".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedRow {
    pub tag: String,
    pub a: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct Simplified {
    pub polytope: Polytope,
    pub removed: Vec<RemovedRow>,
    /// Largest `rho - beta` over removed rows, re-checked against the final rows.
    pub soundness_excess: f64,
    pub lp_solves: usize,
}

impl Simplified {
    pub fn is_sound(&self) -> bool {
        self.soundness_excess <= REDUNDANCY_TOL
    }
}

/// Deletes rows implied by the remaining rows and the box, restarting the
/// scan from the first row after every deletion.
pub fn remove_redundant_rows(poly: &Polytope) -> Result<Simplified> {
    if poly.domain.is_none() {
        return Err(Error::InvalidParameter(
            "redundancy removal needs a bounded domain".into(),
        ));
    }
    let mut current = poly.clone();
    let mut removed = Vec::new();
    let mut lp_solves = 0;
    'scan: loop {
        for i in 0..current.num_rows() {
            let rho = row_maximum(&current, &current.a[i], Some(i))?;
            lp_solves += 1;
            if !rho.is_finite() {
                return Err(Error::Numerical("redundancy LP unbounded despite box".into()));
            }
            if rho <= current.beta[i] + REDUNDANCY_TOL {
                removed.push(RemovedRow {
                    tag: current.tags[i].to_string(),
                    a: current.a.remove(i),
                    beta: current.beta.remove(i),
                });
                current.tags.remove(i);
                continue 'scan;
            }
        }
        break;
    }
    let mut soundness_excess = f64::NEG_INFINITY;
    for row in &removed {
        let rho = row_maximum(&current, &row.a, None)?;
        lp_solves += 1;
        soundness_excess = soundness_excess.max(rho - row.beta);
    }
    Ok(Simplified {
        polytope: current,
        removed,
        soundness_excess,
        lp_solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DomainBox;
    use crate::pwl::RowTag;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(a: Vec<Vec<f64>>, beta: Vec<f64>, domain: Option<DomainBox>) -> Polytope {
        let tags = (0..a.len())
            .map(|n| RowTag::Neuron { layer: 0, neuron: n })
            .collect();
        Polytope { a, beta, tags, domain }
    }

    fn unit_box(dim: usize) -> DomainBox {
        DomainBox::new(vec![0.0; dim], vec![1.0; dim]).unwrap()
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let p = poly(vec![vec![1.0], vec![-1.0]], vec![0.0, -1.0], None);
        assert_eq!(region_feasible(&p).unwrap(), Feasibility::Infeasible);
    }

    #[test]
    fn unit_box_is_feasible() {
        let p = poly(vec![], vec![], Some(unit_box(2)));
        match region_feasible(&p).unwrap() {
            Feasibility::Feasible(w) => assert!(p.contains(&w, 1e-9)),
            Feasibility::Infeasible => panic!("box is non-empty"),
        }
    }

    #[test]
    fn abs_region_witness() {
        let domain = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let p = poly(vec![vec![-1.0], vec![1.0]], vec![0.0, 0.5], Some(domain));
        match region_feasible(&p).unwrap() {
            Feasibility::Feasible(w) => assert!((0.0..=0.5).contains(&w[0])),
            Feasibility::Infeasible => panic!("region is non-empty"),
        }
    }

    #[test]
    fn implied_row_is_removed() {
        let p = poly(vec![vec![1.0, 1.0]], vec![3.0], Some(unit_box(2)));
        let s = remove_redundant_rows(&p).unwrap();
        assert_eq!(s.polytope.num_rows(), 0);
        assert_eq!(s.removed.len(), 1);
        assert!(s.is_sound());
    }

    #[test]
    fn duplicate_row_loses_one_copy() {
        let domain = DomainBox::new(vec![-5.0], vec![5.0]).unwrap();
        let p = poly(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0], Some(domain));
        let s = remove_redundant_rows(&p).unwrap();
        assert_eq!(s.polytope.num_rows(), 1);
        assert_eq!(s.polytope.beta, vec![1.0]);
    }

    #[test]
    fn pruning_rules() {
        let make = |beta: Vec<f64>, count: usize| Region {
            pattern: crate::pwl::ActivationPattern { layers: vec![vec![1, 1]] },
            polytope: poly(vec![vec![1.0], vec![-1.0]], beta, Some(DomainBox::new(vec![-2.0], vec![2.0]).unwrap())),
            affine_w: vec![1.0],
            affine_b: 0.0,
            sample_count: count,
            rows_removed: None,
            witness: None,
        };
        let out = prune_regions(vec![
            make(vec![1.0, 0.0], 3),
            make(vec![0.0, -1.0], 5),
            make(vec![1.0, 0.0], 0),
        ])
        .unwrap();
        assert_eq!(out.retained.len(), 1);
        assert_eq!((out.dropped_infeasible, out.dropped_unsampled), (1, 1));
        assert!(out.retained[0].witness.is_some());
        assert!(matches!(
            prune_regions(vec![make(vec![0.0, -1.0], 5)]),
            Err(Error::NoFeasibleRegion)
        ));
    }

    #[test]
    fn simplification_preserves_the_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let dim = 3;
            let domain = DomainBox::new(vec![-1.0; dim], vec![1.0; dim]).unwrap();
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let beta: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..1.5)).collect();
            let p = poly(rows, beta, Some(domain));
            let s = remove_redundant_rows(&p).unwrap();
            assert!(s.is_sound());
            for _ in 0..10_000 {
                let u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect();
                let (a, b) = (p.max_violation(&u), s.polytope.max_violation(&u));
                if a.abs() > 1e-6 {
                    assert_eq!(a <= 0.0, b <= 1e-9, "{a} {b}");
                }
            }
        }
    }
}
