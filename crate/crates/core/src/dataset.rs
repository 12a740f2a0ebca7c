//! Sampling and labeling of operating points.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridsim::{total_loss, violation_measure, PowerFlow, RadialNetwork};
use crate::scenario::{FeatureLayout, Scenario};

pub const DEFAULT_MARGIN: f64 = 0.05;
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub h: f64,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape {
                context: "domain box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if let Some(d) = (0..lower.len()).find(|&d| !(lower[d] <= upper[d])) {
            return Err(Error::InvalidParameter(format!(
                "domain box dimension {d} has lower > upper"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(d, &v)| v >= self.lower[d] - tol && v <= self.upper[d] + tol)
    }

    /// Largest absolute coordinate reachable inside the box.
    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Per-feature sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplingRanges {
    /// Demand features span the base profile widened by the HVAC capacity of
    /// the group on both sides; generator features span zero to the largest
    /// availability times `dg_scale_max`.
    pub fn from_scenario(scn: &Scenario, dg_scale_max: f64) -> Result<Self> {
        if !(dg_scale_max >= 0.0) {
            return Err(Error::InvalidParameter(
                "generator scale must be non-negative".into(),
            ));
        }
        let layout: &FeatureLayout = &scn.layout;
        let dim = layout.dim();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for t in 0..scn.horizon() {
            let map = scn.feature_map(t)?;
            for d in 0..2 * layout.groups.len() {
                lower[d] = lower[d].min(map.offset[d]);
                upper[d] = upper[d].max(map.offset[d]);
            }
        }
        for (d, row) in scn.feature_map(0)?.hvac.iter().enumerate() {
            let cap: f64 = row
                .iter()
                .zip(&scn.buildings)
                .map(|(a, b)| a * b.p_hv_max_mw)
                .sum();
            if d < 2 * layout.groups.len() {
                lower[d] -= cap;
                upper[d] += cap;
            }
        }
        for g in 0..layout.dg_buses.len() {
            let d = layout.dg_index(g);
            let peak = scn
                .series
                .dg_available
                .iter()
                .map(|row| row[g])
                .fold(0.0, f64::max);
            lower[d] = 0.0;
            upper[d] = peak * dg_scale_max;
        }
        Ok(Self { lower, upper })
    }
}

pub fn sample_inputs(ranges: &SamplingRanges, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    if ranges.lower.is_empty() {
        return Err(Error::InvalidParameter("no sampling dimensions".into()));
    }
    for (d, (lo, hi)) in ranges.lower.iter().zip(&ranges.upper).enumerate() {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "empty sampling range in dimension {d}: [{lo}, {hi}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            ranges
                .lower
                .iter()
                .zip(&ranges.upper)
                .map(|(&lo, &hi)| rng.gen_range(lo..hi))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub samples: Vec<Sample>,
    pub dropped: usize,
}

impl LabeledSet {
    pub fn drop_rate(&self) -> f64 {
        let total = self.samples.len() + self.dropped;
        if total == 0 {
            0.0
        } else {
            self.dropped as f64 / total as f64
        }
    }
}

/// Labels one feature vector with (h, p_loss), or `None` if the power flow fails.
pub fn label_point(
    pf: &PowerFlow<'_>,
    net: &RadialNetwork,
    layout: &FeatureLayout,
    x: &[f64],
) -> Result<Option<Sample>> {
    let inj = layout.decode(net, x)?;
    let sol = match pf.solve(&inj) {
        Ok(sol) if sol.converged => sol,
        Ok(_) | Err(Error::NotConverged) => return Ok(None),
        Err(e) => return Err(e),
    };
    let h = violation_measure(&sol, net)?;
    let p_loss = total_loss(&sol, net);
    if !h.is_finite() || !p_loss.is_finite() {
        return Ok(None);
    }
    Ok(Some(Sample {
        x: x.to_vec(),
        h,
        p_loss,
    }))
}

pub fn label_dataset(
    net: &RadialNetwork,
    layout: &FeatureLayout,
    xs: &[Vec<f64>],
) -> Result<LabeledSet> {
    let pf = PowerFlow::new(net)?;
    let mut samples = Vec::with_capacity(xs.len());
    let mut dropped = 0;
    for x in xs {
        match label_point(&pf, net, layout, x)? {
            Some(s) => samples.push(s),
            None => dropped += 1,
        }
    }
    Ok(LabeledSet { samples, dropped })
}

pub fn estimate_domain_box(xs: &[Vec<f64>], margin: f64) -> Result<DomainBox> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot estimate a box from no samples".into()))?;
    if !(margin >= 0.0) {
        return Err(Error::InvalidParameter("margin must be non-negative".into()));
    }
    let mut lower = first.clone();
    let mut upper = first.clone();
    for x in xs {
        if x.len() != lower.len() {
            return Err(Error::Shape {
                context: "sample dimension",
                expected: lower.len(),
                found: x.len(),
            });
        }
        for (d, &v) in x.iter().enumerate() {
            lower[d] = lower[d].min(v);
            upper[d] = upper[d].max(v);
        }
    }
    for d in 0..lower.len() {
        let range = upper[d] - lower[d];
        lower[d] -= margin * range;
        upper[d] += margin * range;
    }
    DomainBox::new(lower, upper)
}

/// Shuffled split into (train, validation).
pub fn split_train_validation(
    samples: &[Sample],
    validation_fraction: f64,
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((samples.len() as f64) * validation_fraction).round() as usize;
    let n_val = n_val.min(samples.len().saturating_sub(1));
    let val = idx[..n_val].iter().map(|&i| samples[i].clone()).collect();
    let train = idx[n_val..].iter().map(|&i| samples[i].clone()).collect();
    (train, val)
}

pub fn write_samples_csv<W: Write>(samples: &[Sample], out: W) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..dim).map(|d| format!("x_{d}")).collect();
    header.push("h".into());
    header.push("p_loss".into());
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.x.iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{:e}", s.h));
        row.push(format!("{:e}", s.p_loss));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let cols = headers.len();
    if cols < 3 || &headers[cols - 2] != "h" || &headers[cols - 1] != "p_loss" {
        return Err(Error::Config(
            "dataset header must be x_0..x_{d-1}, h, p_loss".into(),
        ));
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("bad number {s:?} in dataset: {e}")))
    };
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let values = record.iter().map(parse).collect::<Result<Vec<f64>>>()?;
        out.push(Sample {
            x: values[..cols - 2].to_vec(),
            h: values[cols - 2],
            p_loss: values[cols - 1],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridsim::Branch;
    use crate::scenario::{LoadGroup, ScenarioFile};
    use proptest::prelude::*;

    fn reference() -> (RadialNetwork, Scenario) {
        let net = RadialNetwork::ieee33();
        let scn = ScenarioFile::reference().resolve(&net).unwrap();
        (net, scn)
    }

    fn two_bus_layout() -> (RadialNetwork, FeatureLayout) {
        let mut net = RadialNetwork::ieee33();
        net.buses.truncate(2);
        net.branches = vec![Branch {
            from: 0,
            to: 1,
            r_pu: 0.01,
            x_pu: 0.02,
            s_max_pu: None,
        }];
        let layout = FeatureLayout {
            groups: vec![LoadGroup {
                name: "load".into(),
                buses: vec![1],
                p_weights: vec![1.0],
                q_weights: vec![1.0],
            }],
            dg_buses: vec![1],
            dg_names: vec!["dg".into()],
        };
        (net, layout)
    }

    #[test]
    fn sample_count_and_ranges() {
        let (_, scn) = reference();
        let ranges = SamplingRanges::from_scenario(&scn, 3.0).unwrap();
        let xs = sample_inputs(&ranges, 20_000, 7).unwrap();
        assert_eq!(xs.len(), 20_000);
        for x in &xs {
            for d in 0..x.len() {
                assert!(x[d] >= ranges.lower[d] && x[d] <= ranges.upper[d]);
            }
        }
        assert_eq!(xs, sample_inputs(&ranges, 20_000, 7).unwrap());
        assert_ne!(xs[0], sample_inputs(&ranges, 1, 8).unwrap()[0]);
    }

    #[test]
    fn sampling_rejects_empty_ranges() {
        let ranges = SamplingRanges {
            lower: vec![0.0, 1.0],
            upper: vec![1.0, 1.0],
        };
        assert!(sample_inputs(&ranges, 5, 0).is_err());
        let ok = SamplingRanges {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        assert!(sample_inputs(&ok, 0, 0).is_err());
    }

    #[test]
    fn no_load_point_is_safe_and_lossless() {
        let (net, scn) = reference();
        let x = vec![0.0; scn.layout.dim()];
        let set = label_dataset(&net, &scn.layout, &[x]).unwrap();
        assert_eq!(set.dropped, 0);
        assert!(set.samples[0].h < 0.0);
        assert_eq!(set.samples[0].p_loss, 0.0);
    }

    #[test]
    fn overloaded_two_bus_case_violates() {
        let (net, layout) = two_bus_layout();
        // Nominal 0.05 p.u. load scaled 100x, well above the 0.4 p.u. rating.
        let normal = label_dataset(&net, &layout, &[vec![0.05, 0.02, 0.0]]).unwrap();
        assert!(normal.samples[0].h < 0.0);
        let heavy = label_dataset(&net, &layout, &[vec![5.0, 2.0, 0.0]]).unwrap();
        match heavy.samples.first() {
            Some(s) => assert!(s.h > 0.0),
            // Collapse of the sweep also marks the point as infeasible.
            None => assert_eq!(heavy.dropped, 1),
        }
        let loaded = label_dataset(&net, &layout, &[vec![0.3, 0.1, 0.0]]).unwrap();
        assert!(loaded.samples[0].h < 0.0);
        let over = label_dataset(&net, &layout, &[vec![0.6, 0.0, 0.0]]).unwrap();
        assert!(over.samples[0].h > 0.0);
    }

    #[test]
    fn labels_are_reproducible() {
        let (net, scn) = reference();
        let ranges = SamplingRanges::from_scenario(&scn, 3.0).unwrap();
        let xs = sample_inputs(&ranges, 200, 1).unwrap();
        let a = label_dataset(&net, &scn.layout, &xs).unwrap();
        let b = label_dataset(&net, &scn.layout, &xs).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.drop_rate() < 0.01);
        for s in &a.samples {
            let pf = PowerFlow::new(&net).unwrap();
            let fresh = label_point(&pf, &net, &scn.layout, &s.x).unwrap().unwrap();
            assert_eq!(fresh.h.to_bits(), s.h.to_bits());
        }
    }

    #[test]
    fn domain_box_examples() {
        let same = vec![vec![2.0, -1.0]; 4];
        let b = estimate_domain_box(&same, 0.0).unwrap();
        assert_eq!(b.lower, vec![2.0, -1.0]);
        assert_eq!(b.upper, vec![2.0, -1.0]);

        let span = vec![vec![0.0], vec![0.3], vec![1.0]];
        let b = estimate_domain_box(&span, 0.05).unwrap();
        assert!((b.lower[0] + 0.05).abs() < 1e-15);
        assert!((b.upper[0] - 1.05).abs() < 1e-15);

        assert!(estimate_domain_box(&[], 0.05).is_err());
    }

    #[test]
    fn split_sizes() {
        let samples: Vec<Sample> = (0..100)
            .map(|i| Sample {
                x: vec![i as f64],
                h: 0.0,
                p_loss: 0.0,
            })
            .collect();
        let (train, val) = split_train_validation(&samples, VALIDATION_FRACTION, 3);
        assert_eq!((train.len(), val.len()), (90, 10));
        let (t2, v2) = split_train_validation(&samples, VALIDATION_FRACTION, 3);
        assert_eq!((train, val), (t2, v2));
    }

    #[test]
    fn csv_round_trip() {
        let samples = vec![
            Sample {
                x: vec![0.1, -2.5e-7],
                h: -0.3,
                p_loss: 1.0 / 3.0,
            },
            Sample {
                x: vec![1e10, 0.0],
                h: 0.25,
                p_loss: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_0,x_1,h,p_loss\n"));
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), samples);
    }

    proptest! {
        #[test]
        fn box_contains_samples(
            xs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..40),
            margin in 0.0f64..1.0,
        ) {
            let b = estimate_domain_box(&xs, margin).unwrap();
            for x in &xs {
                prop_assert!(b.contains(x, 0.0));
            }
        }
    }
}
