use std::hash::{Hash, Hasher};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::edgeconv::{edge_conv_backward, edge_conv_forward, first_empty, BnView, BranchCache, BranchParams};
use super::layers::*;
use super::{BranchWidths, GraphInput, NetworkConfig, ParamStore};
use crate::error::{Error, Result};
use crate::hierarchy::{pool_features, unpool_features, PoolMode, PoolingTraceMap};
use crate::neighborhoods::EdgeSet;
use crate::FeatureMatrix;

/// Gradients aligned with [`ParamStore::tensors`]; zero for running stats.
pub type Grads = Vec<Array2<f64>>;

#[derive(Debug, Clone, Copy)]
struct BnIds {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct BranchIds {
    w1: usize,
    b1: usize,
    bn1: BnIds,
    w2: usize,
    b2: usize,
    bn2: BnIds,
    relative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Geodesic,
    Euclidean,
}

#[derive(Debug, Clone)]
struct BlockIds {
    branches: Vec<(Side, BranchIds)>,
    input: usize,
    output: usize,
}

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    w1: usize,
    b1: usize,
    bn: BnIds,
    w2: usize,
    b2: usize,
}

/// Parameters plus the wiring of the encoder, decoder and head.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    params: ParamStore,
    encoder: Vec<Vec<BlockIds>>,
    /// Indexed by level; the deepest level has no decoder blocks.
    decoder: Vec<Vec<BlockIds>>,
    head: HeadIds,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    branches: Vec<BranchCache>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    input: Array2<f64>,
    bn: BnCache,
    hidden: Array2<f64>,
}

/// Activations of one forward pass, needed by [`Network::backward`] and
/// [`Network::update_running_stats`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    encoder: Vec<Vec<BlockCache>>,
    decoder: Vec<Vec<BlockCache>>,
    head: HeadCache,
    train: bool,
}

impl ForwardCache {
    fn relu_outputs(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flatten()
            .flat_map(|b| b.branches.iter().flat_map(|c| [&c.a1, &c.a2]))
            .chain(std::iter::once(&self.head.hidden))
    }

    /// Hash of which ReLU units are active. Two passes with equal
    /// signatures lie on the same linear piece of the network.
    pub fn activation_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for a in self.relu_outputs() {
            a.len().hash(&mut h);
            let mut word = 0u64;
            for (k, &v) in a.iter().enumerate() {
                word = (word << 1) | (v > 0.0) as u64;
                if k % 64 == 63 {
                    word.hash(&mut h);
                    word = 0;
                }
            }
            word.hash(&mut h);
        }
        h.finish()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), bound: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..=bound))
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> (usize, usize) {
        let w = uniform(self.rng, (fan_in, fan_out), (6.0 / fan_in as f64).sqrt());
        let b = uniform(self.rng, (1, fan_out), 1.0 / (fan_in as f64).sqrt());
        (
            self.store.push(format!("{prefix}.w"), vec![fan_in, fan_out], w, true),
            self.store.push(format!("{prefix}.b"), vec![fan_out], b, true),
        )
    }

    fn bn(&mut self, prefix: &str, width: usize) -> BnIds {
        let mut v = |name: &str, value: f64, trainable: bool| {
            self.store.push(
                format!("{prefix}.{name}"),
                vec![width],
                Array2::from_elem((1, width), value),
                trainable,
            )
        };
        BnIds {
            gamma: v("gamma", 1.0, true),
            beta: v("beta", 0.0, true),
            mean: v("running_mean", 0.0, false),
            var: v("running_var", 1.0, false),
        }
    }

    fn branch(&mut self, prefix: &str, input: usize, w: BranchWidths, relative: bool) -> BranchIds {
        let fan_in = if relative { input } else { 2 * input };
        let (w1, b1) = self.linear(&format!("{prefix}.lin1"), fan_in, w.hidden);
        let bn1 = self.bn(&format!("{prefix}.bn1"), w.hidden);
        let (w2, b2) = self.linear(&format!("{prefix}.lin2"), w.hidden, w.out);
        let bn2 = self.bn(&format!("{prefix}.bn2"), w.out);
        BranchIds {
            w1,
            b1,
            bn1,
            w2,
            b2,
            bn2,
            relative,
        }
    }

    fn block(&mut self, prefix: &str, input: usize, level: &super::LevelConfig, relative: bool) -> BlockIds {
        let mut branches = Vec::new();
        if level.geodesic.enabled() {
            branches.push((
                Side::Geodesic,
                self.branch(&format!("{prefix}.geo"), input, level.geodesic, relative),
            ));
        }
        if level.euclidean.enabled() {
            branches.push((
                Side::Euclidean,
                self.branch(&format!("{prefix}.euc"), input, level.euclidean, relative),
            ));
        }
        BlockIds {
            branches,
            input,
            output: level.out_width(),
        }
    }
}

fn add_vec(g: &mut Array2<f64>, v: &Array1<f64>) {
    let mut r = g.row_mut(0);
    r += v;
}

fn mean_pool_backward(dcoarse: &Array2<f64>, trace: &PoolingTraceMap) -> Array2<f64> {
    let sizes = trace.preimage_sizes();
    let mut d = Array2::zeros((trace.fine_count(), dcoarse.ncols()));
    for (i, &c) in trace.assignment().iter().enumerate() {
        let mut row = d.row_mut(i);
        row.assign(&dcoarse.row(c));
        row /= sizes[c] as f64;
    }
    d
}

impl Network {
    /// Fresh network: uniform fan-in scaled weights, unit BN scale.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let depth = config.depth();
        let mut encoder = Vec::with_capacity(depth);
        let mut width = config.input_width;
        for (l, lv) in config.levels.iter().enumerate() {
            let mut blocks = Vec::new();
            for k in 0..config.blocks_per_level {
                let relative = l == 0 && k == 0 && config.relative_first;
                blocks.push(b.block(&format!("enc{l}.{k}"), width, lv, relative));
                width = lv.out_width();
            }
            encoder.push(blocks);
        }
        let mut decoder = vec![Vec::new(); depth];
        for l in (0..depth.saturating_sub(1)).rev() {
            let lv = &config.levels[l];
            let mut width = width_after_decoder(&config, l + 1) + lv.out_width();
            for k in 0..config.blocks_per_level {
                decoder[l].push(b.block(&format!("dec{l}.{k}"), width, lv, false));
                width = lv.out_width();
            }
        }
        let top = config.levels[0].out_width();
        let (w1, b1) = b.linear("head.lin1", top, config.head_hidden);
        let bn = b.bn("head.bn", config.head_hidden);
        let (w2, b2) = b.linear("head.lin2", config.head_hidden, config.classes);
        let params = b.store;
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
            head: HeadIds { w1, b1, bn, w2, b2 },
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.trainable_count()
    }

    fn bn_view(&self, ids: BnIds) -> BnView<'_> {
        BnView {
            gamma: self.params.vector(ids.gamma),
            beta: self.params.vector(ids.beta),
            running_mean: self.params.vector(ids.mean),
            running_var: self.params.vector(ids.var),
        }
    }

    fn branch_params(&self, ids: &BranchIds) -> BranchParams<'_> {
        BranchParams {
            w1: self.params.get(ids.w1).view(),
            b1: self.params.vector(ids.b1),
            bn1: self.bn_view(ids.bn1),
            w2: self.params.get(ids.w2).view(),
            b2: self.params.vector(ids.b2),
            bn2: self.bn_view(ids.bn2),
            relative: ids.relative,
        }
    }

    fn edges<'g>(g: &'g GraphInput, level: usize, side: Side) -> &'g EdgeSet {
        match side {
            Side::Geodesic => &g.levels[level].geodesic,
            Side::Euclidean => &g.levels[level].euclidean,
        }
    }

    fn check_input(&self, g: &GraphInput) -> Result<()> {
        if g.levels.len() != self.config.depth() {
            return Err(Error::Config(format!(
                "network has {} levels, input has {}",
                self.config.depth(),
                g.levels.len()
            )));
        }
        if g.features.ncols() != self.config.input_width {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.input_width,
                g.features.ncols()
            )));
        }
        if g.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("input features contain non-finite values".into()));
        }
        for (l, lv) in self.config.levels.iter().enumerate() {
            for (on, side, name) in [
                (lv.geodesic.enabled(), Side::Geodesic, "geodesic"),
                (lv.euclidean.enabled(), Side::Euclidean, "Euclidean"),
            ] {
                if on {
                    if let Some(i) = first_empty(Self::edges(g, l, side)) {
                        return Err(Error::Invalid(format!(
                            "level {l}: vertex {i} has an empty {name} neighborhood"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn block_forward(
        &self,
        ids: &BlockIds,
        x: Array2<f64>,
        g: &GraphInput,
        level: usize,
        train: bool,
    ) -> Result<(Array2<f64>, BlockCache)> {
        let mut outs = Vec::with_capacity(ids.branches.len());
        let mut caches = Vec::with_capacity(ids.branches.len());
        for (side, b) in &ids.branches {
            let (y, c) = edge_conv_forward(
                &x.view(),
                Self::edges(g, level, *side),
                &self.branch_params(b),
                self.config.bn_placement,
                self.config.bn_eps,
                train,
            )?;
            outs.push(y);
            caches.push(c);
        }
        let views: Vec<ArrayView2<f64>> = outs.iter().map(|o| o.view()).collect();
        let mut y = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        if ids.input == ids.output {
            y += &x;
        }
        Ok((
            y,
            BlockCache {
                input: x,
                branches: caches,
            },
        ))
    }

    /// Per-vertex class logits at level 0. Train mode normalizes with batch
    /// statistics; the running statistics are left untouched.
    pub fn forward(&self, g: &GraphInput, train: bool) -> Result<(FeatureMatrix, ForwardCache)> {
        self.check_input(g)?;
        let depth = self.config.depth();
        let mut x = g.features.clone();
        let mut skips = Vec::with_capacity(depth);
        let mut enc_cache = Vec::with_capacity(depth);
        for l in 0..depth {
            let mut caches = Vec::new();
            for ids in &self.encoder[l] {
                let (y, c) = self.block_forward(ids, x, g, l, train)?;
                x = y;
                caches.push(c);
            }
            enc_cache.push(caches);
            if l + 1 < depth {
                let pooled = pool_features(&x, &g.traces[l], PoolMode::Mean)?;
                skips.push(std::mem::replace(&mut x, pooled));
            }
        }
        let mut dec_cache = vec![Vec::new(); depth];
        for l in (0..depth.saturating_sub(1)).rev() {
            let up = unpool_features(&x, &g.traces[l])?;
            x = ndarray::concatenate(Axis(1), &[up.view(), skips[l].view()]).expect("equal row counts");
            for ids in &self.decoder[l] {
                let (y, c) = self.block_forward(ids, x, g, l, train)?;
                x = y;
                dec_cache[l].push(c);
            }
        }
        let h = self.head;
        let z = linear_forward(&x.view(), &self.params.get(h.w1).view(), &self.params.vector(h.b1));
        let bnv = self.bn_view(h.bn);
        let (mut hidden, bn) = batch_norm_forward(
            &z.view(),
            &bnv.gamma,
            &bnv.beta,
            &bnv.running_mean,
            &bnv.running_var,
            self.config.bn_eps,
            train,
        );
        relu_inplace(&mut hidden);
        let logits = linear_forward(&hidden.view(), &self.params.get(h.w2).view(), &self.params.vector(h.b2));
        Ok((
            logits,
            ForwardCache {
                encoder: enc_cache,
                decoder: dec_cache,
                head: HeadCache { input: x, bn, hidden },
                train,
            },
        ))
    }

    fn block_backward(
        &self,
        ids: &BlockIds,
        cache: &BlockCache,
        g: &GraphInput,
        level: usize,
        dy: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let mut dx = if ids.input == ids.output {
            dy.clone()
        } else {
            Array2::zeros(cache.input.raw_dim())
        };
        let mut col = 0;
        for ((side, b), bc) in ids.branches.iter().zip(&cache.branches) {
            let p = self.branch_params(b);
            let width = p.w2.ncols();
            let dyb = dy.slice(s![.., col..col + width]);
            col += width;
            let (dxb, bg) = edge_conv_backward(
                &cache.input.view(),
                Self::edges(g, level, *side),
                &p,
                self.config.bn_placement,
                bc,
                &dyb,
            );
            dx += &dxb;
            grads[b.w1] += &bg.w1;
            add_vec(&mut grads[b.b1], &bg.b1);
            add_vec(&mut grads[b.bn1.gamma], &bg.gamma1);
            add_vec(&mut grads[b.bn1.beta], &bg.beta1);
            grads[b.w2] += &bg.w2;
            add_vec(&mut grads[b.b2], &bg.b2);
            add_vec(&mut grads[b.bn2.gamma], &bg.gamma2);
            add_vec(&mut grads[b.bn2.beta], &bg.beta2);
        }
        dx
    }

    /// Gradients of a scalar loss given `dlogits`, plus the gradient with
    /// respect to the input features. `cache` must come from
    /// `forward(g, true)` on the same parameters; in eval mode the batch
    /// norms are treated as fixed affine maps.
    pub fn backward(
        &self,
        g: &GraphInput,
        cache: &ForwardCache,
        dlogits: &Array2<f64>,
    ) -> Result<(Grads, FeatureMatrix)> {
        let depth = self.config.depth();
        if cache.encoder.len() != depth || dlogits.nrows() != g.vertex_count() || dlogits.ncols() != self.config.classes
        {
            return Err(Error::Shape(
                "backward called with a mismatched cache or gradient".into(),
            ));
        }
        let mut grads = self.params.zeros_like();
        let h = self.head;
        let (mut dhidden, dw2, db2) = linear_backward(
            &cache.head.hidden.view(),
            &self.params.get(h.w2).view(),
            &dlogits.view(),
        );
        grads[h.w2] += &dw2;
        add_vec(&mut grads[h.b2], &db2);
        relu_backward_inplace(&mut dhidden, &cache.head.hidden);
        let (dz, dgamma, dbeta) = batch_norm_backward(&dhidden.view(), &cache.head.bn, &self.params.vector(h.bn.gamma));
        add_vec(&mut grads[h.bn.gamma], &dgamma);
        add_vec(&mut grads[h.bn.beta], &dbeta);
        let (mut dy, dw1, db1) = linear_backward(&cache.head.input.view(), &self.params.get(h.w1).view(), &dz.view());
        grads[h.w1] += &dw1;
        add_vec(&mut grads[h.b1], &db1);

        let mut dskip = vec![None; depth];
        for l in 0..depth.saturating_sub(1) {
            for (ids, bc) in self.decoder[l].iter().zip(&cache.decoder[l]).rev() {
                dy = self.block_backward(ids, bc, g, l, &dy, &mut grads);
            }
            let deep = width_after_decoder(&self.config, l + 1);
            dskip[l] = Some(dy.slice(s![.., deep..]).to_owned());
            let dup = dy.slice(s![.., ..deep]).to_owned();
            dy = pool_features(&dup, &g.traces[l], PoolMode::Sum)?;
        }
        for l in (0..depth).rev() {
            for (ids, bc) in self.encoder[l].iter().zip(&cache.encoder[l]).rev() {
                dy = self.block_backward(ids, bc, g, l, &dy, &mut grads);
            }
            if l > 0 {
                dy = mean_pool_backward(&dy, &g.traces[l - 1]);
                dy += dskip[l - 1].as_ref().expect("decoder visited every shallower level");
            }
        }
        Ok((grads, dy))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (unbiased variance, momentum from the config).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if !cache.train {
            return;
        }
        let m = self.config.bn_momentum;
        let mut updates: Vec<(BnIds, &BnCache)> = Vec::new();
        for (ids, c) in self
            .encoder
            .iter()
            .flatten()
            .zip(cache.encoder.iter().flatten())
            .chain(self.decoder.iter().flatten().zip(cache.decoder.iter().flatten()))
        {
            for ((_, b), bc) in ids.branches.iter().zip(&c.branches) {
                updates.push((b.bn1, &bc.bn1));
                updates.push((b.bn2, &bc.bn2));
            }
        }
        updates.push((self.head.bn, &cache.head.bn));
        for (ids, bc) in updates {
            let n = bc.xhat.nrows() as f64;
            let unbiased = if n > 1.0 {
                &bc.batch_var * (n / (n - 1.0))
            } else {
                bc.batch_var.clone()
            };
            let mut rm = self.params.get_mut(ids.mean).row_mut(0);
            rm *= 1.0 - m;
            rm.scaled_add(m, &bc.batch_mean);
            let mut rv = self.params.get_mut(ids.var).row_mut(0);
            rv *= 1.0 - m;
            rv.scaled_add(m, &unbiased);
        }
    }
}

/// Width of the features coming up from `level` into the decoder.
fn width_after_decoder(config: &NetworkConfig, level: usize) -> usize {
    config.levels[level].out_width()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{BranchWidths, GraphLevel, LevelConfig, SingleBranch};
    use crate::neighborhoods::NeighborhoodKind;

    #[test]
    fn parameter_counts_match_published_tables() {
        let count = |c: NetworkConfig| Network::new(c, 0).unwrap().param_count();
        assert_eq!(count(NetworkConfig::dcm(21)), 478_933);
        assert_eq!(count(NetworkConfig::scm(21, SingleBranch::Geodesic)), 564_949);
        assert_eq!(count(NetworkConfig::scm(21, SingleBranch::Euclidean)), 564_949);
        assert_eq!(count(NetworkConfig::scannet()), 761_333);
        assert_eq!(count(NetworkConfig::matterport()), 761_366);
        assert_eq!(count(NetworkConfig::s3dis()), 728_045);
    }

    #[test]
    fn first_block_widths() {
        let n = Network::new(NetworkConfig::dcm(21), 0).unwrap();
        let p = n.params();
        assert_eq!(p.by_name("enc0.0.geo.lin1.w").unwrap().shape, vec![9, 64]);
        assert_eq!(p.by_name("enc0.1.euc.lin1.w").unwrap().shape, vec![128, 64]);
        assert_eq!(p.by_name("dec2.0.geo.lin1.w").unwrap().shape, vec![256, 64]);
        let s = Network::new(NetworkConfig::scannet(), 0).unwrap();
        let p = s.params();
        assert_eq!(p.by_name("enc2.0.euc.lin1.w").unwrap().shape, vec![128, 144]);
        assert_eq!(p.by_name("enc2.1.euc.lin1.w").unwrap().shape, vec![192, 144]);
        assert_eq!(p.by_name("dec2.0.geo.lin1.w").unwrap().shape, vec![384, 48]);
        assert_eq!(p.by_name("dec1.0.geo.lin1.w").unwrap().shape, vec![320, 96]);
        assert_eq!(p.by_name("dec0.0.euc.lin1.w").unwrap().shape, vec![256, 32]);
    }

    fn one_level(n: usize) -> GraphInput {
        let lists: Vec<Vec<usize>> = (0..n).map(|i| vec![(i + 1) % n, (i + n - 1) % n]).collect();
        let e = EdgeSet::from_lists(lists);
        GraphInput::new(
            Array2::zeros((n, 9)),
            vec![GraphLevel {
                geodesic: e.clone(),
                euclidean: e,
            }],
            vec![],
            vec![0; n],
        )
        .unwrap()
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_logits() {
        let cfg = NetworkConfig::toy(3, &[0.5], true, BranchWidths::new(4, 3));
        let mut net = Network::new(cfg, 5).unwrap();
        for t in 0..net.params.len() {
            if net.params.tensors()[t].name.ends_with(".b") {
                net.params.get_mut(t).fill(0.0);
            }
        }
        let g = one_level(5);
        for train in [false, true] {
            let (logits, _) = net.forward(&g, train).unwrap();
            assert!(logits.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn empty_euclidean_neighborhood_is_rejected() {
        let cfg = NetworkConfig::toy(3, &[0.5], true, BranchWidths::new(4, 3));
        let net = Network::new(cfg, 0).unwrap();
        let mut g = one_level(4);
        g.levels[0].euclidean = EdgeSet::empty(4);
        let err = net.forward(&g, false).unwrap_err().to_string();
        assert!(err.contains("empty Euclidean neighborhood"), "{err}");
    }

    #[test]
    fn max_pooling_is_a_config_error() {
        let mut cfg = NetworkConfig::dcm(21);
        cfg.pooling = PoolMode::Max;
        assert!(matches!(Network::new(cfg, 0), Err(Error::Config(_))));
        let mut cfg = NetworkConfig::dcm(21);
        cfg.levels[1] = LevelConfig {
            geodesic: BranchWidths::new(4, 4),
            euclidean: BranchWidths::new(4, 4),
            neighborhood: Some(NeighborhoodKind::Geodesic),
        };
        assert!(Network::new(cfg, 0).is_err());
    }

    fn two_level(seed: u64, dual: bool) -> (Network, GraphInput) {
        let (net, g) = crate::convnet::gradcheck::random_instance(seed, 64).unwrap();
        if dual {
            return (net, g);
        }
        let mut cfg = net.config().clone();
        for l in &mut cfg.levels {
            l.euclidean = BranchWidths::NONE;
            l.neighborhood = None;
        }
        (Network::new(cfg, seed).unwrap(), g)
    }

    #[test]
    fn logits_ignore_translation() {
        let (net, g) = two_level(1, true);
        let (base, _) = net.forward(&g, true).unwrap();
        let mut moved = g.clone();
        for mut row in moved.features.rows_mut() {
            row[0] += 5.0;
            row[1] -= 2.0;
            row[2] += 7.0;
        }
        let (shifted, _) = net.forward(&moved, true).unwrap();
        for (a, b) in base.iter().zip(shifted.iter()) {
            assert!((a - b).abs() <= 1e-9, "{a} {b}");
        }

        // dyadic positions and offsets: differences are exact
        let mut exact = g.clone();
        for v in exact.features.slice_mut(s![.., ..3]).iter_mut() {
            *v = (*v * 1024.0).round() / 1024.0;
        }
        let (a, _) = net.forward(&exact, false).unwrap();
        for mut row in exact.features.rows_mut() {
            row[0] += 5.0;
            row[1] -= 2.0;
            row[2] += 7.0;
        }
        let (b, _) = net.forward(&exact, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_branch_ignores_euclidean_edges() {
        let (net, g) = two_level(2, false);
        let (a, _) = net.forward(&g, true).unwrap();
        let mut h = g.clone();
        for l in &mut h.levels {
            l.euclidean = EdgeSet::empty(l.geodesic.len());
        }
        let (b, _) = net.forward(&h, true).unwrap();
        assert_eq!(a, b);
        assert!(net.params().tensors().iter().all(|t| !t.name.contains(".euc.")));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let (mut net, g) = two_level(3, true);
        let (_, cache) = net.forward(&g, true).unwrap();
        let id = net.params().id("head.bn.running_mean").unwrap();
        let var_id = net.params().id("head.bn.running_var").unwrap();
        let bc = &cache.head.bn;
        let n = bc.xhat.nrows() as f64;
        net.update_running_stats(&cache);
        for k in 0..bc.batch_mean.len() {
            assert!((net.params().get(id)[[0, k]] - 0.1 * bc.batch_mean[k]).abs() < 1e-15);
            let want = 0.9 + 0.1 * bc.batch_var[k] * n / (n - 1.0);
            assert!((net.params().get(var_id)[[0, k]] - want).abs() < 1e-12);
        }
        let (_, eval) = net.forward(&g, false).unwrap();
        let before = net.params().clone();
        net.update_running_stats(&eval);
        assert_eq!(net.params(), &before);
    }

    /// Eval-mode oracle written as literal loops over vertices, edges and
    /// channels, including pooling, skip concatenation and residuals.
    fn oracle(net: &Network, g: &GraphInput) -> Vec<Vec<f64>> {
        let cfg = net.config();
        let p = |name: String| net.params().by_name(&name).unwrap().data.clone();
        let eps = cfg.bn_eps;
        let mlp = |prefix: &str, input: &[f64]| -> Vec<f64> {
            let mut cur = input.to_vec();
            for layer in 1..=2 {
                let w = p(format!("{prefix}.lin{layer}.w"));
                let b = p(format!("{prefix}.lin{layer}.b"));
                let gm = p(format!("{prefix}.bn{layer}.gamma"));
                let bt = p(format!("{prefix}.bn{layer}.beta"));
                let rm = p(format!("{prefix}.bn{layer}.running_mean"));
                let rv = p(format!("{prefix}.bn{layer}.running_var"));
                cur = (0..w.ncols())
                    .map(|c| {
                        let mut z = b[[0, c]];
                        for r in 0..w.nrows() {
                            z += cur[r] * w[[r, c]];
                        }
                        ((z - rm[[0, c]]) / (rv[[0, c]] + eps).sqrt() * gm[[0, c]] + bt[[0, c]]).max(0.0)
                    })
                    .collect();
            }
            cur
        };
        let block = |prefix: &str, x: &Vec<Vec<f64>>, lvl: &GraphLevel, relative: bool| -> Vec<Vec<f64>> {
            (0..x.len())
                .map(|i| {
                    let mut out = Vec::new();
                    for (side, edges) in [("geo", &lvl.geodesic), ("euc", &lvl.euclidean)] {
                        let name = format!("{prefix}.{side}");
                        if net.params().by_name(&format!("{name}.lin1.w")).is_none() {
                            continue;
                        }
                        let nb = edges.neighbors(i);
                        let mut acc: Vec<f64> = Vec::new();
                        for &j in nb {
                            let mut input = Vec::new();
                            if !relative {
                                input.extend(&x[i]);
                            }
                            input.extend(x[j].iter().zip(&x[i]).map(|(a, b)| a - b));
                            let y = mlp(&name, &input);
                            acc.resize(y.len(), 0.0);
                            for (a, v) in acc.iter_mut().zip(y) {
                                *a += v / nb.len() as f64;
                            }
                        }
                        out.extend(acc);
                    }
                    if out.len() == x[i].len() {
                        for (o, v) in out.iter_mut().zip(&x[i]) {
                            *o += v;
                        }
                    }
                    out
                })
                .collect()
        };
        let depth = cfg.depth();
        let mut x: Vec<Vec<f64>> = g.features.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut skips = Vec::new();
        for l in 0..depth {
            for k in 0..cfg.blocks_per_level {
                x = block(&format!("enc{l}.{k}"), &x, &g.levels[l], l == 0 && k == 0);
            }
            if l + 1 < depth {
                let t = &g.traces[l];
                let mut pooled = vec![vec![0.0; x[0].len()]; t.coarse_count()];
                let sizes = t.preimage_sizes();
                for (i, &c) in t.assignment().iter().enumerate() {
                    for (a, v) in pooled[c].iter_mut().zip(&x[i]) {
                        *a += v / sizes[c] as f64;
                    }
                }
                skips.push(std::mem::replace(&mut x, pooled));
            }
        }
        for l in (0..depth - 1).rev() {
            let t = &g.traces[l];
            x = (0..t.fine_count())
                .map(|i| {
                    let mut r = x[t.assignment()[i]].clone();
                    r.extend(&skips[l][i]);
                    r
                })
                .collect();
            for k in 0..cfg.blocks_per_level {
                x = block(&format!("dec{l}.{k}"), &x, &g.levels[l], false);
            }
        }
        let w1 = p("head.lin1.w".into());
        let b1 = p("head.lin1.b".into());
        let (gm, bt) = (p("head.bn.gamma".into()), p("head.bn.beta".into()));
        let (rm, rv) = (p("head.bn.running_mean".into()), p("head.bn.running_var".into()));
        let w2 = p("head.lin2.w".into());
        let b2 = p("head.lin2.b".into());
        x.iter()
            .map(|r| {
                let h: Vec<f64> = (0..w1.ncols())
                    .map(|c| {
                        let z = b1[[0, c]] + (0..w1.nrows()).map(|k| r[k] * w1[[k, c]]).sum::<f64>();
                        ((z - rm[[0, c]]) / (rv[[0, c]] + eps).sqrt() * gm[[0, c]] + bt[[0, c]]).max(0.0)
                    })
                    .collect();
                (0..w2.ncols())
                    .map(|c| b2[[0, c]] + (0..w2.nrows()).map(|k| h[k] * w2[[k, c]]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn eval_forward_matches_loop_oracle() {
        for (seed, dual) in [(4, true), (5, false)] {
            let (mut net, g) = two_level(seed, dual);
            // non-trivial running statistics
            let (_, cache) = net.forward(&g, true).unwrap();
            net.update_running_stats(&cache);
            let (logits, _) = net.forward(&g, false).unwrap();
            let want = oracle(&net, &g);
            for (i, row) in want.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    assert!((logits[[i, k]] - v).abs() < 1e-10, "{} {v}", logits[[i, k]]);
                }
            }
        }
    }
}
