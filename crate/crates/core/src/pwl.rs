//! Activation regions of a trained ReLU network and their polytopes.
//!
//! All geometry here lives in the network's standardized input space `u`;
//! [`Polytope::to_raw`] maps a polytope back to raw feature coordinates.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DomainBox;
use crate::error::{Error, Result};
use crate::mlp::{InputScaler, MlpParams};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    /// `+1` where the neuron's pre-activation is non-negative, else `-1`.
    pub layers: Vec<Vec<i8>>,
}

impl ActivationPattern {
    /// Flat sign string, one `+`/`-` per neuron in layer order.
    pub fn key(&self) -> String {
        self.layers
            .iter()
            .flatten()
            .map(|&o| if o > 0 { '+' } else { '-' })
            .collect()
    }

    pub fn from_key(key: &str, sizes: &[usize]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if key.chars().count() != total {
            return Err(Error::Shape {
                context: "pattern key",
                expected: total,
                found: key.chars().count(),
            });
        }
        let mut signs = key.chars().map(|c| match c {
            '+' => Ok(1i8),
            '-' => Ok(-1i8),
            other => Err(Error::Config(format!("bad pattern character {other:?}"))),
        });
        let mut layers = Vec::with_capacity(sizes.len());
        for &n in sizes {
            layers.push((0..n).map(|_| signs.next().expect("length checked")).collect::<Result<Vec<i8>>>()?);
        }
        Ok(Self { layers })
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub fn activation_pattern(p: &MlpParams, x: &[f64]) -> Result<ActivationPattern> {
    let trace = p.forward(x)?;
    Ok(ActivationPattern {
        layers: trace
            .z
            .iter()
            .map(|z| z.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
            .collect(),
    })
}

/// Affine maps of every hidden layer's pre-activation and of the output,
/// valid on one activation region (standardized coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAffine {
    pub hidden: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    pub output_w: Vec<f64>,
    pub output_b: f64,
}

impl RegionAffine {
    pub fn eval_output(&self, u: &[f64]) -> f64 {
        dot(&self.output_w, u) + self.output_b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pattern(p: &MlpParams, pat: &ActivationPattern) -> Result<()> {
    let sizes = p.hidden_sizes();
    if pat.layers.len() != sizes.len() {
        return Err(Error::Shape {
            context: "pattern layers",
            expected: sizes.len(),
            found: pat.layers.len(),
        });
    }
    for (o, &n) in pat.layers.iter().zip(&sizes) {
        if o.len() != n {
            return Err(Error::Shape {
                context: "pattern layer width",
                expected: n,
                found: o.len(),
            });
        }
    }
    Ok(())
}

pub fn region_affine(p: &MlpParams, pat: &ActivationPattern) -> Result<RegionAffine> {
    check_pattern(p, pat)?;
    let dim = p.input_dim();
    // Effective map of the previous layer's post-activation; starts as identity.
    let mut prev_w: Vec<Vec<f64>> = (0..dim)
        .map(|d| (0..dim).map(|k| if k == d { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut prev_b = vec![0.0; dim];
    let mut hidden = Vec::with_capacity(pat.layers.len());
    let compose = |weights: &[Vec<f64>], bias: &[f64], pw: &[Vec<f64>], pb: &[f64]| {
        let w: Vec<Vec<f64>> = weights
            .iter()
            .map(|row| {
                (0..dim)
                    .map(|c| row.iter().zip(pw).map(|(a, r)| a * r[c]).sum())
                    .collect()
            })
            .collect();
        let b: Vec<f64> = weights
            .iter()
            .zip(bias)
            .map(|(row, b0)| dot(row, pb) + b0)
            .collect();
        (w, b)
    };
    for (layer, o) in p.hidden().iter().zip(&pat.layers) {
        let (w, b) = compose(&layer.weights, &layer.bias, &prev_w, &prev_b);
        prev_w = w
            .iter()
            .zip(o)
            .map(|(row, &s)| if s > 0 { row.clone() } else { vec![0.0; dim] })
            .collect();
        prev_b = b.iter().zip(o).map(|(&v, &s)| if s > 0 { v } else { 0.0 }).collect();
        hidden.push((w, b));
    }
    let out = p.output();
    let (w, b) = compose(&out.weights, &out.bias, &prev_w, &prev_b);
    Ok(RegionAffine {
        hidden,
        output_w: w.into_iter().next().expect("scalar output"),
        output_b: b[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    Neuron { layer: usize, neuron: usize },
    Output,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowTag::Neuron { layer, neuron } => write!(f, "L{layer}N{neuron}"),
            RowTag::Output => f.write_str("h<=0"),
        }
    }
}

impl std::str::FromStr for RowTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "h<=0" {
            return Ok(RowTag::Output);
        }
        let bad = || Error::Config(format!("bad row tag {s:?}"));
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (l, n) = rest.split_once('N').ok_or_else(bad)?;
        Ok(RowTag::Neuron {
            layer: l.parse().map_err(|_| bad())?,
            neuron: n.parse().map_err(|_| bad())?,
        })
    }
}

/// `{u : A u <= beta}`, optionally intersected with a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub a: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub tags: Vec<RowTag>,
    pub domain: Option<DomainBox>,
}

impl Polytope {
    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.a
            .first()
            .map(Vec::len)
            .or_else(|| self.domain.as_ref().map(DomainBox::dim))
            .unwrap_or(0)
    }

    /// Largest violation of any row or box bound at `u` (non-positive inside).
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (row, b) in self.a.iter().zip(&self.beta) {
            worst = worst.max(dot(row, u) - b);
        }
        if let Some(d) = &self.domain {
            for (k, v) in u.iter().enumerate() {
                worst = worst.max(d.lower[k] - v).max(v - d.upper[k]);
            }
        }
        worst
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        self.max_violation(u) <= tol
    }

    /// Same set expressed over raw coordinates `x = shift + scale * u`.
    pub fn to_raw(&self, scaler: &InputScaler) -> Polytope {
        let (m, s) = (&scaler.shift, &scaler.scale);
        let a = self
            .a
            .iter()
            .map(|row| row.iter().zip(s).map(|(a, s)| a / s).collect())
            .collect();
        let beta = self
            .a
            .iter()
            .zip(&self.beta)
            .map(|(row, b)| b + row.iter().zip(m.iter().zip(s)).map(|(a, (m, s))| a * m / s).sum::<f64>())
            .collect();
        let domain = self.domain.as_ref().map(|d| DomainBox {
            lower: scaler.unstandardize(&d.lower),
            upper: scaler.unstandardize(&d.upper),
        });
        Polytope {
            a,
            beta,
            tags: self.tags.clone(),
            domain,
        }
    }
}

/// Maps a raw-coordinate box into standardized coordinates.
pub fn standardize_box(scaler: &InputScaler, b: &DomainBox) -> DomainBox {
    DomainBox {
        lower: scaler.standardize(&b.lower),
        upper: scaler.standardize(&b.upper),
    }
}

/// Rows of the region of `pat` intersected with `{h <= 0}`; `domain` is a raw box.
pub fn feasible_polytope(
    p: &MlpParams,
    pat: &ActivationPattern,
    domain: Option<&DomainBox>,
) -> Result<Polytope> {
    let aff = region_affine(p, pat)?;
    let mut a = Vec::with_capacity(pat.num_neurons() + 1);
    let mut beta = Vec::with_capacity(pat.num_neurons() + 1);
    let mut tags = Vec::with_capacity(pat.num_neurons() + 1);
    for (l, ((w, b), o)) in aff.hidden.iter().zip(&pat.layers).enumerate() {
        for n in 0..o.len() {
            let sign = f64::from(o[n]);
            a.push(w[n].iter().map(|v| -sign * v).collect());
            beta.push(sign * b[n]);
            tags.push(RowTag::Neuron { layer: l, neuron: n });
        }
    }
    a.push(aff.output_w.clone());
    beta.push(-aff.output_b);
    tags.push(RowTag::Output);
    Ok(Polytope {
        a,
        beta,
        tags,
        domain: domain.map(|d| standardize_box(&p.input_scaler, d)),
    })
}

/// One activation region together with its sample support.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub pattern: ActivationPattern,
    pub polytope: Polytope,
    pub affine_w: Vec<f64>,
    pub affine_b: f64,
    pub sample_count: usize,
    pub rows_removed: Option<usize>,
    pub witness: Option<Vec<f64>>,
}

impl Region {
    pub fn build(
        p: &MlpParams,
        pattern: ActivationPattern,
        sample_count: usize,
        domain: Option<&DomainBox>,
    ) -> Result<Self> {
        let aff = region_affine(p, &pattern)?;
        let polytope = feasible_polytope(p, &pattern, domain)?;
        Ok(Self {
            pattern,
            polytope,
            affine_w: aff.output_w,
            affine_b: aff.output_b,
            sample_count,
            rows_removed: None,
            witness: None,
        })
    }
}

/// Distinct patterns hit by `xs`, in order of first occurrence, with counts.
pub fn collect_sample_regions(p: &MlpParams, xs: &[Vec<f64>]) -> Result<Vec<(ActivationPattern, usize)>> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("no samples to classify".into()));
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<(ActivationPattern, usize)> = Vec::new();
    for x in xs {
        let pat = activation_pattern(p, x)?;
        match index.get(&pat.key()) {
            Some(&k) => out[k].1 += 1,
            None => {
                index.insert(pat.key(), out.len());
                out.push((pat, 1));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Region file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub pattern: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub affine_w: Vec<f64>,
    pub affine_b: f64,
    pub sample_count: usize,
    pub provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows_removed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

impl RegionRecord {
    pub fn from_region(r: &Region) -> Self {
        Self {
            pattern: r.pattern.key(),
            a: r.polytope.a.clone(),
            beta: r.polytope.beta.clone(),
            affine_w: r.affine_w.clone(),
            affine_b: r.affine_b,
            sample_count: r.sample_count,
            provenance: r.polytope.tags.iter().map(ToString::to_string).collect(),
            rows_removed: r.rows_removed,
            witness: r.witness.clone(),
        }
    }

    /// `domain` is the standardized box shared by every region of a file.
    pub fn into_region(self, sizes: &[usize], domain: Option<DomainBox>) -> Result<Region> {
        if self.a.len() != self.beta.len() || self.a.len() != self.provenance.len() {
            return Err(Error::Shape {
                context: "region rows",
                expected: self.a.len(),
                found: self.beta.len().min(self.provenance.len()),
            });
        }
        Ok(Region {
            pattern: ActivationPattern::from_key(&self.pattern, sizes)?,
            polytope: Polytope {
                a: self.a,
                beta: self.beta,
                tags: self
                    .provenance
                    .iter()
                    .map(|t| t.parse())
                    .collect::<Result<Vec<RowTag>>>()?,
                domain,
            },
            affine_w: self.affine_w,
            affine_b: self.affine_b,
            sample_count: self.sample_count,
            rows_removed: self.rows_removed,
            witness: self.witness,
        })
    }
}

pub fn write_regions(path: impl AsRef<Path>, regions: &[Region]) -> Result<()> {
    let records: Vec<RegionRecord> = regions.iter().map(RegionRecord::from_region).collect();
    std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

pub fn read_regions(path: impl AsRef<Path>, p: &MlpParams, domain: Option<&DomainBox>) -> Result<Vec<Region>> {
    let records: Vec<RegionRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let sizes = p.hidden_sizes();
    let std_domain = domain.map(|d| standardize_box(&p.input_scaler, d));
    records
        .into_iter()
        .map(|r| r.into_region(&sizes, std_domain.clone()))
        .collect()
}
