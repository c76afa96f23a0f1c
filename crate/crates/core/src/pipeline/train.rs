use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_features, Affine, AffineRanges};
use crate::convnet::loss::{argmax_rows, cross_entropy};
use crate::convnet::optim::{learning_rate, Adam, BASE_LR};
use crate::convnet::{GraphInput, Network, ResSampling};
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, Hierarchy, HierarchyConfig};
use crate::mesh::{Label, Mesh, UNLABELED};
use crate::neighborhoods::{NeighborhoodKind, RES_TRAIN_THRESHOLD};
use crate::FeatureMatrix;

/// A precomputed hierarchy plus the ground truth used for scoring.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub hierarchy: Hierarchy,
    /// Labels of the raw input vertices. Predictions are carried there
    /// through the input trace before scoring; without them, level 0 is
    /// scored against its aggregated labels.
    pub raw_labels: Option<Vec<Label>>,
}

impl Sample {
    pub fn new(name: impl Into<String>, hierarchy: Hierarchy) -> Self {
        Self {
            name: name.into(),
            hierarchy,
            raw_labels: None,
        }
    }

    /// Builds the hierarchy of `mesh` and the Euclidean edges in `kinds`.
    pub fn from_mesh(
        name: impl Into<String>,
        mesh: &Mesh,
        config: &HierarchyConfig,
        kinds: Option<&[NeighborhoodKind]>,
    ) -> Result<Self> {
        let mut h = build_hierarchy(mesh, config)?;
        if let Some(k) = kinds {
            h.build_euclidean(k)?;
        }
        Self::new(name, h).with_raw_labels(mesh.labels.clone())
    }

    pub fn with_raw_labels(mut self, labels: Option<Vec<Label>>) -> Result<Self> {
        if let Some(l) = &labels {
            let want = self.raw_count();
            if l.len() != want {
                return Err(Error::Shape(format!("{} raw labels for {want} raw vertices", l.len())));
            }
        }
        self.raw_labels = labels;
        Ok(self)
    }

    fn raw_count(&self) -> usize {
        match &self.hierarchy.input_trace {
            Some(t) => t.fine_count(),
            None => self.level0().vertex_count(),
        }
    }

    pub fn level0(&self) -> &Mesh {
        &self.hierarchy.levels[0]
    }

    /// Labels that [`Sample::lift`]ed predictions are scored against.
    pub fn truth(&self) -> Vec<Label> {
        match (&self.raw_labels, &self.level0().labels) {
            (Some(l), _) | (None, Some(l)) => l.clone(),
            (None, None) => vec![UNLABELED; self.level0().vertex_count()],
        }
    }

    /// Level-0 predictions in the frame of [`Sample::truth`].
    pub fn lift(&self, level0: &[Label]) -> Vec<Label> {
        match (&self.raw_labels, &self.hierarchy.input_trace) {
            (Some(_), Some(t)) => t.assignment().iter().map(|&c| level0[c]).collect(),
            _ => level0.to_vec(),
        }
    }

    /// Network input with optional augmentation and edge sampling.
    pub fn graph(&self, affine: Option<&Affine>, res: Option<ResSampling>) -> Result<GraphInput> {
        let features = match affine {
            Some(a) => normalize_features(&a.apply_mesh(self.level0()))?,
            None => normalize_features(self.level0())?,
        };
        GraphInput::from_hierarchy(&self.hierarchy, features, res)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Random Edge Sampling threshold; `None` keeps every edge.
    pub res_threshold: Option<usize>,
    pub base_lr: f64,
    /// `None` disables affine augmentation.
    pub augment: Option<AffineRanges>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            res_threshold: Some(RES_TRAIN_THRESHOLD),
            base_lr: BASE_LR,
            augment: Some(AffineRanges::default()),
            seed: 0,
        }
    }
}

/// One pass over `samples` in shuffled batches: augmentation and edge
/// sampling per sample, one Adam step per batch with the learning rate of
/// `epoch`. Returns the mean batch loss.
pub fn train_epoch(
    net: &mut Network,
    opt: &mut Adam,
    samples: &[Sample],
    config: &TrainConfig,
    epoch: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("training needs at least one sample".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let lr = learning_rate(config.base_lr, epoch);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for batch in order.chunks(config.batch_size) {
        let mut parts = Vec::with_capacity(batch.len());
        for &i in batch {
            let affine = config.augment.map(|r| Affine::random(&r, rng));
            let res = config.res_threshold.map(|threshold| ResSampling {
                threshold,
                seed: rng.gen(),
            });
            parts.push(samples[i].graph(affine.as_ref(), res)?);
        }
        let g = GraphInput::union(&parts)?;
        let (logits, cache) = net.forward(&g, true)?;
        let (loss, dlogits) = cross_entropy(&logits, &g.labels)?;
        let (grads, _) = net.backward(&g, &cache, &dlogits)?;
        opt.step(net.params_mut(), &grads, lr)?;
        net.update_running_stats(&cache);
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Level-0 logits of one eval-mode forward pass.
pub fn predict(net: &Network, sample: &Sample, res: Option<ResSampling>) -> Result<FeatureMatrix> {
    Ok(net.forward(&sample.graph(None, res)?, false)?.0)
}

#[derive(Debug, Clone)]
pub struct Inference {
    /// Level-0 logits.
    pub logits: FeatureMatrix,
    /// Predictions in the frame of [`Sample::truth`].
    pub predictions: Vec<Label>,
    pub seconds: f64,
}

/// Whole-scene inference. Crops are not rejected here; `t_test = None`
/// disables edge sampling.
pub fn infer_full_scene(net: &Network, sample: &Sample, t_test: Option<usize>, seed: u64) -> Result<Inference> {
    let start = Instant::now();
    let res = t_test.map(|threshold| ResSampling { threshold, seed });
    let logits = predict(net, sample, res)?;
    let predictions = sample.lift(&argmax_rows(&logits));
    Ok(Inference {
        logits,
        predictions,
        seconds: start.elapsed().as_secs_f64(),
    })
}
