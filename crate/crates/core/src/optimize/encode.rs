//! Mixed-integer encodings of a ReLU network and of a union of polytopes.

use serde::{Deserialize, Serialize};

use super::milp::MilpModel;
use crate::dataset::DomainBox;
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::pwl::Polytope;

pub const BIGM_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronBound {
    pub lower: f64,
    pub upper: f64,
    pub big_m: f64,
}

impl NeuronBound {
    pub fn stably_active(&self) -> bool {
        self.lower >= 0.0
    }

    pub fn stably_inactive(&self) -> bool {
        self.upper <= 0.0
    }
}

/// Interval bounds of every hidden pre-activation over a raw-coordinate box.
pub fn bigm_bounds(p: &MlpParams, domain: &DomainBox) -> Result<Vec<Vec<NeuronBound>>> {
    if domain.dim() != p.input_dim() {
        return Err(Error::Shape {
            context: "big-M box",
            expected: p.input_dim(),
            found: domain.dim(),
        });
    }
    if domain.lower.iter().chain(&domain.upper).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("big-M bounds need a bounded box".into()));
    }
    let mut lo = p.input_scaler.standardize(&domain.lower);
    let mut hi = p.input_scaler.standardize(&domain.upper);
    let mut out = Vec::with_capacity(p.hidden().len());
    for layer in p.hidden() {
        let mut bounds = Vec::with_capacity(layer.outputs());
        for (row, &b) in layer.weights.iter().zip(&layer.bias) {
            let (mut l, mut h) = (b, b);
            for (w, (a, c)) in row.iter().zip(lo.iter().zip(&hi)) {
                l += (w * a).min(w * c);
                h += (w * a).max(w * c);
            }
            bounds.push(NeuronBound {
                lower: l,
                upper: h,
                big_m: l.abs().max(h.abs()) + BIGM_SLACK,
            });
        }
        lo = bounds.iter().map(|b| b.lower.max(0.0)).collect();
        hi = bounds.iter().map(|b| b.upper.max(0.0)).collect();
        out.push(bounds);
    }
    Ok(out)
}

/// Columns created by [`encode_mlp_bigm`], indexed `[layer][neuron]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoding {
    pub s: Vec<Vec<usize>>,
    pub r: Vec<Vec<usize>>,
    pub mu: Vec<Vec<usize>>,
}

impl MlpEncoding {
    pub fn num_binaries(&self) -> usize {
        self.mu.iter().map(Vec::len).sum()
    }
}

/// Adds `s - r = W x + b`, `0 <= s <= M+ mu`, `0 <= r <= M- (1 - mu)` for every
/// neuron and ties `output` to the affine output layer. `inputs` hold raw
/// features; the network's input scaling is folded into the first layer.
///
/// `M+` and `M-` are the positive and negative parts of the interval bounds
/// (plus slack); neurons with a fixed sign get their binary fixed by bounds.
pub fn encode_mlp_bigm(
    model: &mut MilpModel,
    p: &MlpParams,
    bounds: &[Vec<NeuronBound>],
    inputs: &[usize],
    output: usize,
    prefix: &str,
) -> Result<MlpEncoding> {
    if inputs.len() != p.input_dim() {
        return Err(Error::Shape {
            context: "encoded network inputs",
            expected: p.input_dim(),
            found: inputs.len(),
        });
    }
    let sizes = p.hidden_sizes();
    if bounds.len() != sizes.len() || bounds.iter().zip(&sizes).any(|(b, &n)| b.len() != n) {
        return Err(Error::Shape {
            context: "big-M bounds",
            expected: sizes.len(),
            found: bounds.len(),
        });
    }
    let scaler = &p.input_scaler;
    let mut enc = MlpEncoding {
        s: Vec::new(),
        r: Vec::new(),
        mu: Vec::new(),
    };
    for (l, layer) in p.hidden().iter().enumerate() {
        let (mut s_cols, mut r_cols, mut mu_cols) = (Vec::new(), Vec::new(), Vec::new());
        for (n, (row, &b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let nb = bounds[l][n];
            let m_pos = nb.upper.max(0.0) + BIGM_SLACK;
            let m_neg = (-nb.lower).max(0.0) + BIGM_SLACK;
            let s = model.lp.add_var(format!("{prefix}_s_l{l}_n{n}"), 0.0, m_pos, 0.0);
            let r = model.lp.add_var(format!("{prefix}_r_l{l}_n{n}"), 0.0, m_neg, 0.0);
            let mu = model.add_binary(format!("{prefix}_mu_l{l}_n{n}"), 0.0);
            if nb.stably_active() {
                model.lp.lower[mu] = 1.0;
            } else if nb.stably_inactive() {
                model.lp.upper[mu] = 0.0;
            }
            let mut coefs = vec![(s, 1.0), (r, -1.0)];
            let mut rhs = b;
            if l == 0 {
                for (d, (&w, &col)) in row.iter().zip(inputs).enumerate() {
                    coefs.push((col, -w / scaler.scale[d]));
                    rhs -= w * scaler.shift[d] / scaler.scale[d];
                }
            } else {
                for (&w, &col) in row.iter().zip(&enc.s[l - 1]) {
                    coefs.push((col, -w));
                }
            }
            model.lp.add_eq(format!("{prefix}_pre_l{l}_n{n}"), coefs, rhs);
            model
                .lp
                .add_le(format!("{prefix}_son_l{l}_n{n}"), vec![(s, 1.0), (mu, -m_pos)], 0.0);
            model
                .lp
                .add_le(format!("{prefix}_roff_l{l}_n{n}"), vec![(r, 1.0), (mu, m_neg)], m_neg);
            s_cols.push(s);
            r_cols.push(r);
            mu_cols.push(mu);
        }
        enc.s.push(s_cols);
        enc.r.push(r_cols);
        enc.mu.push(mu_cols);
    }
    let out = p.output();
    let mut coefs = vec![(output, 1.0)];
    let mut rhs = out.bias[0];
    match enc.s.last() {
        Some(last) => {
            for (&w, &col) in out.weights[0].iter().zip(last) {
                coefs.push((col, -w));
            }
        }
        None => {
            for (d, (&w, &col)) in out.weights[0].iter().zip(inputs).enumerate() {
                coefs.push((col, -w / scaler.scale[d]));
                rhs -= w * scaler.shift[d] / scaler.scale[d];
            }
        }
    }
    model.lp.add_eq(format!("{prefix}_out"), coefs, rhs);
    Ok(enc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionEncoding {
    pub z: Vec<usize>,
    pub copies: Vec<Vec<usize>>,
}

/// Disjunctive big-M encoding of `x in union_k {A_k x <= beta_k}`; polytopes
/// are in raw coordinates and `big_m` bounds every coordinate of `x`.
/// `active[k] == false` fixes the selector of polytope `k` to zero.
pub fn encode_region_union(
    model: &mut MilpModel,
    polytopes: &[Polytope],
    active: &[bool],
    inputs: &[usize],
    big_m: f64,
    prefix: &str,
) -> Result<UnionEncoding> {
    if polytopes.is_empty() {
        return Err(Error::NoFeasibleRegion);
    }
    if active.len() != polytopes.len() {
        return Err(Error::Shape {
            context: "region activity mask",
            expected: polytopes.len(),
            found: active.len(),
        });
    }
    let dim = inputs.len();
    let mut z = Vec::with_capacity(polytopes.len());
    let mut copies = Vec::with_capacity(polytopes.len());
    for (k, poly) in polytopes.iter().enumerate() {
        if poly.dim() != dim {
            return Err(Error::Shape {
                context: "region dimension",
                expected: dim,
                found: poly.dim(),
            });
        }
        let zk = model.add_binary(format!("{prefix}_z_k{k}"), 0.0);
        if !active[k] {
            model.lp.upper[zk] = 0.0;
        }
        let xk: Vec<usize> = (0..dim)
            .map(|d| model.lp.add_var(format!("{prefix}_x_k{k}_d{d}"), -big_m, big_m, 0.0))
            .collect();
        for (i, (row, &b)) in poly.a.iter().zip(&poly.beta).enumerate() {
            let mut coefs: Vec<(usize, f64)> = row
                .iter()
                .zip(&xk)
                .filter(|(a, _)| **a != 0.0)
                .map(|(&a, &c)| (c, a))
                .collect();
            coefs.push((zk, -b));
            model.lp.add_le(format!("{prefix}_row_k{k}_i{i}"), coefs, 0.0);
        }
        for (d, &c) in xk.iter().enumerate() {
            model
                .lp
                .add_le(format!("{prefix}_mhi_k{k}_d{d}"), vec![(c, 1.0), (zk, -big_m)], 0.0);
            model
                .lp
                .add_le(format!("{prefix}_mlo_k{k}_d{d}"), vec![(c, -1.0), (zk, -big_m)], 0.0);
        }
        z.push(zk);
        copies.push(xk);
    }
    for d in 0..dim {
        let mut coefs: Vec<(usize, f64)> = copies.iter().map(|xk| (xk[d], 1.0)).collect();
        coefs.push((inputs[d], -1.0));
        model.lp.add_eq(format!("{prefix}_sum_d{d}"), coefs, 0.0);
    }
    model
        .lp
        .add_eq(format!("{prefix}_one"), z.iter().map(|&c| (c, 1.0)).collect(), 1.0);
    Ok(UnionEncoding { z, copies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{InputScaler, Layer, MlpMeta};
    use crate::optimize::lp::SolveStatus;
    use crate::optimize::milp::{branch_and_bound, MilpOptions};
    use crate::pwl::RowTag;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn abs_net() -> MlpParams {
        MlpParams {
            layers: vec![
                Layer {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.0, 0.0],
                },
                Layer {
                    weights: vec![vec![1.0, 1.0]],
                    bias: vec![0.0],
                },
            ],
            input_scaler: InputScaler::identity(1),
            meta: MlpMeta::default(),
        }
    }

    #[test]
    fn single_neuron_bound() {
        let p = MlpParams {
            layers: vec![
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                },
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                },
            ],
            input_scaler: InputScaler::identity(1),
            meta: MlpMeta::default(),
        };
        let b = bigm_bounds(&p, &DomainBox::new(vec![-1.0], vec![1.0]).unwrap()).unwrap();
        assert_eq!(b[0][0].big_m, 1.0 + 1e-6);
        let unbounded = DomainBox {
            lower: vec![f64::NEG_INFINITY],
            upper: vec![1.0],
        };
        assert!(bigm_bounds(&p, &unbounded).is_err());
    }

    #[test]
    fn zero_weight_bound_is_bias() {
        let mut p = MlpParams::initialize(2, &[3], 0).unwrap();
        p.layers[0].weights = vec![vec![0.0; 2]; 3];
        p.layers[0].bias = vec![0.5, -2.0, 0.0];
        let b = bigm_bounds(&p, &DomainBox::new(vec![-4.0; 2], vec![4.0; 2]).unwrap()).unwrap();
        for (nb, bias) in b[0].iter().zip([0.5, -2.0, 0.0]) {
            assert_eq!(nb.big_m, f64::abs(bias) + 1e-6);
        }
    }

    #[test]
    fn bounds_contain_forward_pass() {
        let mut p = MlpParams::initialize(4, &[6, 6, 6], 3).unwrap();
        p.input_scaler.shift = vec![0.1, -0.2, 0.3, 0.0];
        p.input_scaler.scale = vec![2.0, 1.0, 0.5, 1.5];
        let domain = DomainBox::new(vec![-1.0, 0.0, -2.0, 1.0], vec![1.0, 2.0, 0.0, 3.0]).unwrap();
        let bounds = bigm_bounds(&p, &domain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4)
                .map(|d| rng.gen_range(domain.lower[d]..domain.upper[d]))
                .collect();
            let t = p.forward(&x).unwrap();
            for (zl, bl) in t.z.iter().zip(&bounds) {
                for (z, b) in zl.iter().zip(bl) {
                    assert!(z.abs() <= b.big_m);
                    assert!(*z >= b.lower - 1e-12 && *z <= b.upper + 1e-12);
                }
            }
        }
    }

    #[test]
    fn abs_net_completion_is_unique() {
        let p = abs_net();
        let domain = DomainBox::new(vec![-4.0], vec![4.0]).unwrap();
        let bounds = bigm_bounds(&p, &domain).unwrap();
        let mut m = MilpModel::default();
        let x = m.lp.add_var("x", -3.0, -3.0, 0.0);
        let h = m.lp.add_var("h", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let enc = encode_mlp_bigm(&mut m, &p, &bounds, &[x], h, "abs").unwrap();
        assert_eq!(enc.num_binaries(), 2);
        for sign in [1.0, -1.0] {
            m.lp.objective[h] = sign;
            let r = branch_and_bound(&m, &MilpOptions::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.values[h] - 3.0).abs() < 1e-9);
            let v = |c: usize| r.values[c];
            assert_eq!((v(enc.mu[0][0]), v(enc.mu[0][1])), (0.0, 1.0));
            assert!((v(enc.s[0][1]) - 3.0).abs() < 1e-9 && v(enc.s[0][0]).abs() < 1e-9);
            assert!((v(enc.r[0][0]) - 3.0).abs() < 1e-9 && v(enc.r[0][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn encoding_never_cuts_true_points() {
        let mut p = MlpParams::initialize(3, &[5, 5], 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for layer in &mut p.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let domain = DomainBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let bounds = bigm_bounds(&p, &domain).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut m = MilpModel::default();
            let cols: Vec<usize> = x.iter().enumerate().map(|(d, &v)| m.lp.add_var(format!("x{d}"), v, v, 0.0)).collect();
            let h = m.lp.add_var("h", f64::NEG_INFINITY, f64::INFINITY, 1.0);
            encode_mlp_bigm(&mut m, &p, &bounds, &cols, h, "n").unwrap();
            let r = branch_and_bound(&m, &MilpOptions::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.values[h] - p.predict(&x).unwrap()).abs() < 1e-6);
        }
    }

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope {
            a: vec![vec![1.0], vec![-1.0]],
            beta: vec![hi, -lo],
            tags: vec![RowTag::Neuron { layer: 0, neuron: 0 }, RowTag::Output],
            domain: None,
        }
    }

    #[test]
    fn union_of_intervals() {
        let polys = [interval(0.0, 1.0), interval(2.0, 3.0)];
        let build = |floor: f64| {
            let mut m = MilpModel::default();
            let x = m.lp.add_var("x", floor, 5.0, 1.0);
            let enc = encode_region_union(&mut m, &polys, &[true, true], &[x], 5.0 + 1e-6, "u").unwrap();
            (m, x, enc)
        };
        let (m, x, enc) = build(-5.0);
        let r = branch_and_bound(&m, &MilpOptions::default()).unwrap();
        assert!(r.values[x].abs() < 1e-9);
        assert_eq!(enc.z.iter().map(|&z| r.values[z]).sum::<f64>(), 1.0);

        let (m, x, enc) = build(1.5);
        let r = branch_and_bound(&m, &MilpOptions::default()).unwrap();
        assert!((r.values[x] - 2.0).abs() < 1e-9);
        assert_eq!(r.values[enc.z[1]], 1.0);

        let mut m = MilpModel::default();
        let x = m.lp.add_var("x", 0.0, 1.0, 0.0);
        assert!(matches!(
            encode_region_union(&mut m, &[], &[], &[x], 1.0, "u"),
            Err(Error::NoFeasibleRegion)
        ));
    }
}
