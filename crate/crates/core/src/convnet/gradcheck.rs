//! Central-difference verification of the reverse pass.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::cross_entropy;
use super::{BranchWidths, Grads, GraphInput, Network, NetworkConfig};
use crate::error::Result;
use crate::hierarchy::{build_hierarchy, HierarchyConfig, PoolStep};
use crate::mesh::UNLABELED;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Initial central-difference step.
    pub step: f64,
    /// Steps are divided by 10 (up to this many times) while a perturbation
    /// flips any ReLU; entries that still flip are reported as kinks.
    pub refinements: u32,
    /// Lower bound of the relative-error denominator, so entries whose
    /// gradient is at the rounding-noise level do not dominate.
    pub floor: f64,
    pub tolerance: f64,
    /// Batch norms use batch statistics.
    pub train: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            refinements: 3,
            floor: 1e-6,
            tolerance: 1e-4,
            train: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Entries skipped because every step crossed a ReLU kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst_entry: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn kinks(&self) -> usize {
        self.tensors.iter().map(|t| t.kinks).sum()
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` at `x` along every coordinate.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn loss_of(net: &Network, g: &GraphInput, train: bool) -> Result<(f64, u64)> {
    let (logits, cache) = net.forward(g, train)?;
    Ok((cross_entropy(&logits, &g.labels)?.0, cache.activation_signature()))
}

/// Cross-entropy gradients of every trainable parameter by backpropagation.
pub fn analytic_gradients(net: &Network, g: &GraphInput, train: bool) -> Result<Grads> {
    let (logits, cache) = net.forward(g, train)?;
    let (_, dlogits) = cross_entropy(&logits, &g.labels)?;
    Ok(net.backward(g, &cache, &dlogits)?.0)
}

/// Compares `analytic` with central differences of the cross-entropy loss,
/// entry by entry over all trainable tensors.
pub fn check_gradients(
    net: &Network,
    g: &GraphInput,
    analytic: &Grads,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, base_sig) = loss_of(net, g, opts.train)?;
    let mut work = net.clone();
    let mut tensors = Vec::new();
    for (id, t) in net.params().tensors().iter().enumerate() {
        if !t.trainable {
            continue;
        }
        let mut rep = TensorCheck {
            name: t.name.clone(),
            checked: 0,
            kinks: 0,
            max_rel_error: 0.0,
            worst_entry: 0,
        };
        for (k, &orig) in t.data.iter().enumerate() {
            let mut h = opts.step;
            let idx = (k / t.data.ncols(), k % t.data.ncols());
            let mut numeric = None;
            for _ in 0..=opts.refinements {
                work.params_mut().get_mut(id)[idx] = orig + h;
                let (up, s_up) = loss_of(&work, g, opts.train)?;
                work.params_mut().get_mut(id)[idx] = orig - h;
                let (down, s_down) = loss_of(&work, g, opts.train)?;
                work.params_mut().get_mut(id)[idx] = orig;
                if s_up == base_sig && s_down == base_sig {
                    numeric = Some((up - down) / (2.0 * h));
                    break;
                }
                h /= 10.0;
            }
            match numeric {
                Some(n) => {
                    let a = analytic[id][idx];
                    let e = relative_error(a, n, opts.floor);
                    if e > rep.max_rel_error {
                        rep.max_rel_error = e;
                        rep.worst_entry = k;
                    }
                    rep.checked += 1;
                }
                None => rep.kinks += 1,
            }
        }
        tensors.push(rep);
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: opts.tolerance,
    })
}

/// Backpropagated gradients checked against central differences.
pub fn finite_difference_check(net: &Network, g: &GraphInput, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(net, g, opts.train)?;
    check_gradients(net, g, &analytic, opts)
}

/// Random two-level dual network on a random mesh of at most `vertices`
/// vertices, with random features, labels (some missing) and batch-norm
/// affine parameters.
pub fn random_instance(seed: u64, vertices: usize) -> Result<(Network, GraphInput)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = crate::synthetic::random_mesh(vertices, seed);
    let cfg = HierarchyConfig {
        prepass_cell: None,
        steps: vec![PoolStep::Qem {
            ratio: 0.3,
            pair_distance: 0.0,
        }],
        seed,
    };
    let mut h = build_hierarchy(&mesh, &cfg)?;
    let net_cfg = NetworkConfig::toy(3, &[0.15, 0.3], true, BranchWidths::new(4, 3));
    h.build_euclidean(&net_cfg.euclidean_kinds().expect("dual config"))?;
    let n = h.levels[0].vertex_count();
    let features = Array2::from_shape_fn((n, net_cfg.input_width), |_| rng.gen_range(0.0..1.0));
    let mut g = GraphInput::from_hierarchy(&h, features, None)?;
    g.labels = (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                UNLABELED
            } else {
                rng.gen_range(0..3)
            }
        })
        .collect();
    g.labels[0] = 0;
    let mut net = Network::new(net_cfg, seed ^ 0x5eed)?;
    let names: Vec<(usize, String)> = net
        .params()
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.name.clone()))
        .collect();
    for (i, name) in names {
        if name.ends_with(".gamma") {
            net.params_mut().get_mut(i).mapv_inplace(|_| rng.gen_range(0.5..1.5));
        } else if name.ends_with(".beta") {
            net.params_mut().get_mut(i).mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
    }
    Ok((net, g))
}
