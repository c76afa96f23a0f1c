//! Reference experiment on procedurally generated rooms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{infer_full_scene, train_epoch, vertex_accuracy, Sample, TrainConfig};
use crate::convnet::optim::Adam;
use crate::convnet::{BranchWidths, Network, NetworkConfig};
use crate::error::Result;
use crate::hierarchy::{HierarchyConfig, PoolStep};
use crate::neighborhoods::{NeighborhoodKind, RES_TEST_THRESHOLD};
use crate::synthetic::{toy_scene, ToySceneConfig, TOY_CLASSES};

/// Euclidean radius per level, meters.
pub const TOY_RADII: [f64; 4] = [0.2, 0.4, 0.8, 1.6];
pub const TOY_WIDTHS: BranchWidths = BranchWidths::new(8, 4);

/// Three QEM steps at ratio 0.3 directly on the generated mesh. The pair
/// distance stays below the tile gap, so tiles are never merged.
pub fn toy_hierarchy_config() -> HierarchyConfig {
    HierarchyConfig {
        prepass_cell: None,
        steps: vec![
            PoolStep::Qem {
                ratio: 0.3,
                pair_distance: 0.0,
            };
            TOY_RADII.len() - 1
        ],
        seed: 0,
    }
}

pub fn toy_network(dual: bool) -> NetworkConfig {
    NetworkConfig::toy(TOY_CLASSES, &TOY_RADII, dual, TOY_WIDTHS)
}

#[derive(Debug, Clone)]
pub struct ToyBenchmark {
    pub train: Vec<Sample>,
    pub held_out: Vec<Sample>,
}

/// `scenes` rooms from consecutive seeds; the last `held_out` are kept out
/// of training. Euclidean edges for the dual network are precomputed.
pub fn toy_benchmark(scenes: usize, held_out: usize, seed: u64) -> Result<ToyBenchmark> {
    let kinds: Vec<NeighborhoodKind> = toy_network(true).euclidean_kinds().expect("dual config");
    let hcfg = toy_hierarchy_config();
    let mut all = (0..scenes as u64)
        .map(|i| {
            let mesh = toy_scene(seed + i, &ToySceneConfig::default());
            Sample::from_mesh(format!("toy{}", seed + i), &mesh, &hcfg, Some(&kinds))
        })
        .collect::<Result<Vec<_>>>()?;
    let held = all.split_off(scenes.saturating_sub(held_out));
    Ok(ToyBenchmark {
        train: all,
        held_out: held,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySchedule {
    pub max_epochs: usize,
    /// Training stops once the train accuracy reaches this value.
    pub target_accuracy: f64,
    /// Train accuracy is measured every this many epochs.
    pub check_every: usize,
    pub batch_size: usize,
    pub base_lr: f64,
}

impl Default for ToySchedule {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            target_accuracy: 0.99,
            check_every: 10,
            batch_size: 1,
            base_lr: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub net: Network,
    pub epochs: usize,
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub held_out_accuracy: f64,
}

/// Vertex accuracy pooled over all samples, one inference pass each.
pub fn accuracy(net: &Network, samples: &[Sample], t_test: Option<usize>, seed: u64) -> Result<f64> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        pred.extend(infer_full_scene(net, s, t_test, seed.wrapping_add(k as u64))?.predictions);
        truth.extend(s.truth());
    }
    Ok(vertex_accuracy(&pred, &truth))
}

/// Trains a fresh network on the benchmark's training scenes.
pub fn train_toy(bench: &ToyBenchmark, dual: bool, seed: u64, schedule: &ToySchedule) -> Result<ToyRun> {
    let mut net = Network::new(toy_network(dual), seed)?;
    let mut opt = Adam::new(net.params());
    let cfg = TrainConfig {
        batch_size: schedule.batch_size,
        base_lr: schedule.base_lr,
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::new();
    let mut train_accuracy = 0.0;
    let t = Some(RES_TEST_THRESHOLD);
    for epoch in 0..schedule.max_epochs {
        losses.push(train_epoch(&mut net, &mut opt, &bench.train, &cfg, epoch, &mut rng)?);
        let last = epoch + 1 == schedule.max_epochs;
        if (epoch + 1) % schedule.check_every.max(1) == 0 || last {
            train_accuracy = accuracy(&net, &bench.train, t, seed)?;
            log::debug!(
                "epoch {epoch}: loss {:.4}, train accuracy {train_accuracy:.4}",
                losses[epoch]
            );
            if train_accuracy >= schedule.target_accuracy {
                break;
            }
        }
    }
    let held_out_accuracy = accuracy(&net, &bench.held_out, t, seed)?;
    Ok(ToyRun {
        epochs: losses.len(),
        net,
        losses,
        train_accuracy,
        held_out_accuracy,
    })
}
