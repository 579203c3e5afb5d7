//! The dual-branch weight-regression network.
//!
//! The main ("mass") branch is a deep feature extractor: two strided
//! Conv-BN-LeakyReLU stem stages, a configurable stack of sensing layers, one
//! final 3-way convolution, and global average pooling down to a `D`-dim
//! feature vector. A sensing layer is two bottleneck sensing blocks (1x1
//! reduce, 3-way parallel 1x1/3x3/5x5 convolution, 1x1 expand) followed by a
//! CBAM attention module, with identity shortcuts at both block and layer
//! level. The 3-way convolutions are summed and batch-normalized with no ReLU
//! after the sum.
//!
//! The auxiliary joint branch encodes the flattened 2D joint vector with a
//! 3-layer MLP. A projection head maps deep features to unit-norm embeddings
//! for the contrastive loss, and a single fully-connected layer regresses the
//! concatenated features to a weight in kg.
//!
//! Forward passes come in two flavors: `forward_train` returns caches for the
//! hand-written backward pass and uses batch statistics in the norm layers;
//! `predict`/`infer` use running statistics and are deterministic.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CKPT_VERSION};

use ndarray::{s, Array1, Array2, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nn::{
    leaky_relu, leaky_relu_grad, BatchNorm2d, BnCache, Cbam, CbamCache, Conv2d, Linear, ParamList,
};

/// All architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of stacked sensing layers (0 to 12).
    pub n_sensing_layers: usize,
    /// Channels after the first stem stage.
    pub stem_channels: usize,
    /// Channels carried through the sensing-layer trunk.
    pub trunk_channels: usize,
    /// Bottleneck reduction: block inner width = trunk / ratio.
    pub bottleneck_ratio: f64,
    /// Deep feature dimension D (output of the final 3-way conv + pooling).
    pub deep_feature_dim: usize,
    /// Joint-branch output width.
    pub joint_feature_dim: usize,
    /// Contrastive embedding dimension E.
    pub embedding_dim: usize,
    pub cbam_reduction: usize,
    pub cbam_spatial_kernel: usize,
    /// Number of joints J; the joint branch consumes a 2J vector.
    pub joint_count: usize,
    pub use_deep_branch: bool,
    pub use_joint_branch: bool,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_sensing_layers: 4,
            stem_channels: 64,
            trunk_channels: 192,
            bottleneck_ratio: 4.0,
            deep_feature_dim: 128,
            joint_feature_dim: 128,
            embedding_dim: 128,
            cbam_reduction: 16,
            cbam_spatial_kernel: 7,
            joint_count: 14,
            use_deep_branch: true,
            use_joint_branch: true,
            leaky_slope: 0.01,
        }
    }
}

impl ModelConfig {
    /// Inner width of the bottleneck blocks.
    pub fn inner_channels(&self) -> usize {
        (self.trunk_channels as f64 / self.bottleneck_ratio).round() as usize
    }

    /// Width of the regressor input.
    pub fn regressor_input_dim(&self) -> usize {
        let mut d = 0;
        if self.use_deep_branch {
            d += self.deep_feature_dim;
        }
        if self.use_joint_branch {
            d += self.joint_feature_dim;
        }
        d
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.n_sensing_layers > 12 {
            return err(format!(
                "n_sensing_layers {} outside [0, 12]",
                self.n_sensing_layers
            ));
        }
        for (name, v) in [
            ("stem_channels", self.stem_channels),
            ("trunk_channels", self.trunk_channels),
            ("deep_feature_dim", self.deep_feature_dim),
            ("joint_feature_dim", self.joint_feature_dim),
            ("embedding_dim", self.embedding_dim),
            ("cbam_reduction", self.cbam_reduction),
            ("joint_count", self.joint_count),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.cbam_spatial_kernel % 2 == 0 {
            return err(format!(
                "cbam_spatial_kernel {} must be odd",
                self.cbam_spatial_kernel
            ));
        }
        if self.bottleneck_ratio <= 0.0 {
            return err("bottleneck_ratio must be > 0".into());
        }
        let inner = self.trunk_channels as f64 / self.bottleneck_ratio;
        if (inner - inner.round()).abs() > 1e-9 || inner.round() < 1.0 {
            return err(format!(
                "trunk_channels {} not divisible by bottleneck_ratio {}",
                self.trunk_channels, self.bottleneck_ratio
            ));
        }
        if self.use_deep_branch && self.trunk_channels < self.cbam_reduction {
            return err(format!(
                "trunk_channels {} below cbam_reduction {}",
                self.trunk_channels, self.cbam_reduction
            ));
        }
        if !self.use_deep_branch && !self.use_joint_branch {
            return err("at least one branch must be enabled".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// TriConv: 3-way parallel convolution + batch norm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TriConv {
    pub conv1: Conv2d,
    pub conv3: Conv2d,
    pub conv5: Conv2d,
    pub bn: BatchNorm2d,
}

#[derive(Debug)]
pub struct TriConvCache {
    bn: BnCache,
}

impl TriConv {
    fn init<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        // no branch biases: the batch norm that follows absorbs offsets
        Self {
            conv1: Conv2d::init(c_in, c_out, 1, 1, 0, false, rng),
            conv3: Conv2d::init(c_in, c_out, 3, 1, 1, false, rng),
            conv5: Conv2d::init(c_in, c_out, 5, 1, 2, false, rng),
            bn: BatchNorm2d::new(c_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv1: self.conv1.zeros_like(),
            conv3: self.conv3.zeros_like(),
            conv5: self.conv5.zeros_like(),
            bn: self.bn.zeros_like(),
        }
    }

    fn num_params(&self) -> usize {
        self.conv1.num_params()
            + self.conv3.num_params()
            + self.conv5.num_params()
            + self.bn.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.conv1.collect_params(&format!("{prefix}.conv1"), out);
        self.conv3.collect_params(&format!("{prefix}.conv3"), out);
        self.conv5.collect_params(&format!("{prefix}.conv5"), out);
        self.bn.collect_params(&format!("{prefix}.bn"), out);
    }

    fn collect_state<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.bn.collect_state(&format!("{prefix}.bn"), out);
    }

    fn collect_all<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.conv1.collect_params(&format!("{prefix}.conv1"), out);
        self.conv3.collect_params(&format!("{prefix}.conv3"), out);
        self.conv5.collect_params(&format!("{prefix}.conv5"), out);
        self.bn.collect_all(&format!("{prefix}.bn"), out);
    }

    /// The summed branch outputs before normalization.
    pub fn pre_norm(&self, x: &Array4<f64>) -> Array4<f64> {
        let mut y = self.conv1.forward(x);
        y += &self.conv3.forward(x);
        y += &self.conv5.forward(x);
        y
    }

    pub fn forward_train(&self, x: &Array4<f64>) -> (Array4<f64>, TriConvCache) {
        let (y, bn) = self.bn.forward_train(&self.pre_norm(x));
        (y, TriConvCache { bn })
    }

    pub fn forward_infer(&self, x: &Array4<f64>) -> Array4<f64> {
        self.bn.forward_infer(&self.pre_norm(x))
    }

    fn backward(
        &self,
        x: &Array4<f64>,
        cache: &TriConvCache,
        dy: &Array4<f64>,
        grad: &mut TriConv,
    ) -> Array4<f64> {
        let dpre = self.bn.backward_train(&cache.bn, dy, &mut grad.bn);
        let mut dx = self.conv1.backward(x, &dpre, &mut grad.conv1);
        dx += &self.conv3.backward(x, &dpre, &mut grad.conv3);
        dx += &self.conv5.backward(x, &dpre, &mut grad.conv5);
        dx
    }

    fn update_running(&mut self, cache: &TriConvCache, momentum: f64) {
        self.bn.update_running(&cache.bn, momentum);
    }
}

// ---------------------------------------------------------------------------
// SensingBlock: 1x1 reduce -> triconv -> 1x1 expand, with shortcut
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SensingBlock {
    pub reduce: Conv2d,
    pub tri: TriConv,
    pub expand: Conv2d,
}

#[derive(Debug)]
pub struct SensingBlockCache {
    reduced: Array4<f64>,
    tri: TriConvCache,
    tri_out: Array4<f64>,
}

impl SensingBlock {
    fn init<R: Rng>(channels: usize, inner: usize, rng: &mut R) -> Self {
        Self {
            reduce: Conv2d::init(channels, inner, 1, 1, 0, true, rng),
            tri: TriConv::init(inner, inner, rng),
            expand: Conv2d::init(inner, channels, 1, 1, 0, true, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            reduce: self.reduce.zeros_like(),
            tri: self.tri.zeros_like(),
            expand: self.expand.zeros_like(),
        }
    }

    fn num_params(&self) -> usize {
        self.reduce.num_params() + self.tri.num_params() + self.expand.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.reduce.collect_params(&format!("{prefix}.reduce"), out);
        self.tri.collect_params(&format!("{prefix}.tri"), out);
        self.expand.collect_params(&format!("{prefix}.expand"), out);
    }

    fn collect_state<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.tri.collect_state(&format!("{prefix}.tri"), out);
    }

    fn collect_all<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.reduce.collect_params(&format!("{prefix}.reduce"), out);
        self.tri.collect_all(&format!("{prefix}.tri"), out);
        self.expand.collect_params(&format!("{prefix}.expand"), out);
    }

    pub fn forward_train(&self, x: &Array4<f64>) -> (Array4<f64>, SensingBlockCache) {
        let reduced = self.reduce.forward(x);
        let (tri_out, tri) = self.tri.forward_train(&reduced);
        let y = x + &self.expand.forward(&tri_out);
        (
            y,
            SensingBlockCache {
                reduced,
                tri,
                tri_out,
            },
        )
    }

    pub fn forward_infer(&self, x: &Array4<f64>) -> Array4<f64> {
        let t = self.tri.forward_infer(&self.reduce.forward(x));
        x + &self.expand.forward(&t)
    }

    fn backward(
        &self,
        x: &Array4<f64>,
        cache: &SensingBlockCache,
        dy: &Array4<f64>,
        grad: &mut SensingBlock,
    ) -> Array4<f64> {
        let dt = self.expand.backward(&cache.tri_out, dy, &mut grad.expand);
        let dr = self.tri.backward(&cache.reduced, &cache.tri, &dt, &mut grad.tri);
        let mut dx = self.reduce.backward(x, &dr, &mut grad.reduce);
        dx += dy; // shortcut
        dx
    }

    fn update_running(&mut self, cache: &SensingBlockCache, momentum: f64) {
        self.tri.update_running(&cache.tri, momentum);
    }
}

// ---------------------------------------------------------------------------
// SensingLayer: block -> block -> CBAM, with layer shortcut
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SensingLayer {
    pub block1: SensingBlock,
    pub block2: SensingBlock,
    pub cbam: Cbam,
}

#[derive(Debug)]
pub struct SensingLayerCache {
    b1_out: Array4<f64>,
    c1: SensingBlockCache,
    b2_out: Array4<f64>,
    c2: SensingBlockCache,
    cbam: CbamCache,
}

impl SensingLayer {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.trunk_channels;
        let inner = cfg.inner_channels();
        Self {
            block1: SensingBlock::init(c, inner, rng),
            block2: SensingBlock::init(c, inner, rng),
            cbam: Cbam::init(c, cfg.cbam_reduction, cfg.cbam_spatial_kernel, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            block1: self.block1.zeros_like(),
            block2: self.block2.zeros_like(),
            cbam: self.cbam.zeros_like(),
        }
    }

    fn num_params(&self) -> usize {
        self.block1.num_params() + self.block2.num_params() + self.cbam.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.block1.collect_params(&format!("{prefix}.block1"), out);
        self.block2.collect_params(&format!("{prefix}.block2"), out);
        self.cbam.collect_params(&format!("{prefix}.cbam"), out);
    }

    fn collect_state<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.block1.collect_state(&format!("{prefix}.block1"), out);
        self.block2.collect_state(&format!("{prefix}.block2"), out);
    }

    fn collect_all<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.block1.collect_all(&format!("{prefix}.block1"), out);
        self.block2.collect_all(&format!("{prefix}.block2"), out);
        self.cbam.collect_params(&format!("{prefix}.cbam"), out);
    }

    pub fn forward_train(&self, x: &Array4<f64>) -> (Array4<f64>, SensingLayerCache) {
        let (b1_out, c1) = self.block1.forward_train(x);
        let (b2_out, c2) = self.block2.forward_train(&b1_out);
        let (att, cbam) = self.cbam.forward(&b2_out);
        let y = x + &att;
        (
            y,
            SensingLayerCache {
                b1_out,
                c1,
                b2_out,
                c2,
                cbam,
            },
        )
    }

    pub fn forward_infer(&self, x: &Array4<f64>) -> Array4<f64> {
        let b1 = self.block1.forward_infer(x);
        let b2 = self.block2.forward_infer(&b1);
        let (att, _) = self.cbam.forward(&b2);
        x + &att
    }

    fn backward(
        &self,
        x: &Array4<f64>,
        cache: &SensingLayerCache,
        dy: &Array4<f64>,
        grad: &mut SensingLayer,
    ) -> Array4<f64> {
        let db2 = self
            .cbam
            .backward(&cache.b2_out, &cache.cbam, dy, &mut grad.cbam);
        let db1 = self
            .block2
            .backward(&cache.b1_out, &cache.c2, &db2, &mut grad.block2);
        let mut dx = self.block1.backward(x, &cache.c1, &db1, &mut grad.block1);
        dx += dy; // layer shortcut
        dx
    }

    fn update_running(&mut self, cache: &SensingLayerCache, momentum: f64) {
        self.block1.update_running(&cache.c1, momentum);
        self.block2.update_running(&cache.c2, momentum);
    }
}

// ---------------------------------------------------------------------------
// Deep feature extractor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DeepExtractor {
    pub stem1: Conv2d,
    pub stem_bn1: BatchNorm2d,
    pub stem2: Conv2d,
    pub stem_bn2: BatchNorm2d,
    pub layers: Vec<SensingLayer>,
    pub head: TriConv,
    slope: f64,
}

#[derive(Debug)]
pub struct ExtractorCache {
    bn1_pre: Array4<f64>,
    bn1: BnCache,
    a1: Array4<f64>,
    bn2_pre: Array4<f64>,
    bn2: BnCache,
    layer_inputs: Vec<Array4<f64>>,
    layer_caches: Vec<SensingLayerCache>,
    head_input: Array4<f64>,
    head: TriConvCache,
    head_hw: (usize, usize),
}

impl DeepExtractor {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            stem1: Conv2d::init(1, cfg.stem_channels, 5, 2, 2, false, rng),
            stem_bn1: BatchNorm2d::new(cfg.stem_channels),
            stem2: Conv2d::init(cfg.stem_channels, cfg.trunk_channels, 3, 2, 1, false, rng),
            stem_bn2: BatchNorm2d::new(cfg.trunk_channels),
            layers: (0..cfg.n_sensing_layers)
                .map(|_| SensingLayer::init(cfg, rng))
                .collect(),
            head: TriConv::init(cfg.trunk_channels, cfg.deep_feature_dim, rng),
            slope: cfg.leaky_slope,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            stem1: self.stem1.zeros_like(),
            stem_bn1: self.stem_bn1.zeros_like(),
            stem2: self.stem2.zeros_like(),
            stem_bn2: self.stem_bn2.zeros_like(),
            layers: self.layers.iter().map(SensingLayer::zeros_like).collect(),
            head: self.head.zeros_like(),
            slope: self.slope,
        }
    }

    fn num_params(&self) -> usize {
        self.stem1.num_params()
            + self.stem_bn1.num_params()
            + self.stem2.num_params()
            + self.stem_bn2.num_params()
            + self.layers.iter().map(SensingLayer::num_params).sum::<usize>()
            + self.head.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.stem1.collect_params(&format!("{prefix}.stem1"), out);
        self.stem_bn1.collect_params(&format!("{prefix}.stem_bn1"), out);
        self.stem2.collect_params(&format!("{prefix}.stem2"), out);
        self.stem_bn2.collect_params(&format!("{prefix}.stem_bn2"), out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_params(&format!("{prefix}.layers.{i}"), out);
        }
        self.head.collect_params(&format!("{prefix}.head"), out);
    }

    fn collect_state<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.stem_bn1.collect_state(&format!("{prefix}.stem_bn1"), out);
        self.stem_bn2.collect_state(&format!("{prefix}.stem_bn2"), out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_state(&format!("{prefix}.layers.{i}"), out);
        }
        self.head.collect_state(&format!("{prefix}.head"), out);
    }

    fn collect_all<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.stem1.collect_params(&format!("{prefix}.stem1"), out);
        self.stem_bn1.collect_all(&format!("{prefix}.stem_bn1"), out);
        self.stem2.collect_params(&format!("{prefix}.stem2"), out);
        self.stem_bn2.collect_all(&format!("{prefix}.stem_bn2"), out);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_all(&format!("{prefix}.layers.{i}"), out);
        }
        self.head.collect_all(&format!("{prefix}.head"), out);
    }

    fn forward_train(&self, x: &Array4<f64>) -> (Array2<f64>, ExtractorCache) {
        let s1 = self.stem1.forward(x);
        let (bn1_pre, bn1) = self.stem_bn1.forward_train(&s1);
        let a1 = leaky_relu(&bn1_pre, self.slope);
        let s2 = self.stem2.forward(&a1);
        let (bn2_pre, bn2) = self.stem_bn2.forward_train(&s2);
        let mut t = leaky_relu(&bn2_pre, self.slope);

        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layer_inputs.push(t.clone());
            let (next, cache) = layer.forward_train(&t);
            layer_caches.push(cache);
            t = next;
        }

        let head_input = t;
        let (h, head) = self.head.forward_train(&head_input);
        let (_, _, hh, hw) = h.dim();
        let features = global_avg_pool(&h);
        (
            features,
            ExtractorCache {
                bn1_pre,
                bn1,
                a1,
                bn2_pre,
                bn2,
                layer_inputs,
                layer_caches,
                head_input,
                head,
                head_hw: (hh, hw),
            },
        )
    }

    fn forward_infer(&self, x: &Array4<f64>) -> Array2<f64> {
        let a1 = leaky_relu(&self.stem_bn1.forward_infer(&self.stem1.forward(x)), self.slope);
        let mut t = leaky_relu(&self.stem_bn2.forward_infer(&self.stem2.forward(&a1)), self.slope);
        for layer in &self.layers {
            t = layer.forward_infer(&t);
        }
        global_avg_pool(&self.head.forward_infer(&t))
    }

    fn backward(
        &self,
        x: &Array4<f64>,
        cache: &ExtractorCache,
        dfeat: &Array2<f64>,
        grad: &mut DeepExtractor,
    ) -> Array4<f64> {
        let (hh, hw) = cache.head_hw;
        let dh = global_avg_pool_backward(dfeat, hh, hw);
        let mut dt = self
            .head
            .backward(&cache.head_input, &cache.head, &dh, &mut grad.head);

        for i in (0..self.layers.len()).rev() {
            dt = self.layers[i].backward(
                &cache.layer_inputs[i],
                &cache.layer_caches[i],
                &dt,
                &mut grad.layers[i],
            );
        }

        let dbn2_pre = leaky_relu_grad(&cache.bn2_pre, &dt, self.slope);
        let ds2 = self
            .stem_bn2
            .backward_train(&cache.bn2, &dbn2_pre, &mut grad.stem_bn2);
        let da1 = self.stem2.backward(&cache.a1, &ds2, &mut grad.stem2);
        let dbn1_pre = leaky_relu_grad(&cache.bn1_pre, &da1, self.slope);
        let ds1 = self
            .stem_bn1
            .backward_train(&cache.bn1, &dbn1_pre, &mut grad.stem_bn1);
        self.stem1.backward(x, &ds1, &mut grad.stem1)
    }

    fn update_running(&mut self, cache: &ExtractorCache, momentum: f64) {
        self.stem_bn1.update_running(&cache.bn1, momentum);
        self.stem_bn2.update_running(&cache.bn2, momentum);
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layer_caches) {
            layer.update_running(lc, momentum);
        }
        self.head.update_running(&cache.head, momentum);
    }
}

fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let mut y = Array2::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            y[(ni, ci)] = x
                .index_axis(Axis(0), ni)
                .index_axis(Axis(0), ci)
                .sum()
                / (h * w) as f64;
        }
    }
    y
}

fn global_avg_pool_backward(dy: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = dy.dim();
    let scale = 1.0 / (h * w) as f64;
    Array4::from_shape_fn((n, c, h, w), |(ni, ci, _, _)| dy[(ni, ci)] * scale)
}

// ---------------------------------------------------------------------------
// Joint branch
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct JointMlp {
    pub fc1: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
    slope: f64,
}

#[derive(Debug)]
pub struct JointMlpCache {
    h1_pre: Array2<f64>,
    a1: Array2<f64>,
    h2_pre: Array2<f64>,
    a2: Array2<f64>,
}

impl JointMlp {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        // hidden widths scale with the output: out/2 then out (64, 128 at the
        // default joint_feature_dim of 128)
        let input = 2 * cfg.joint_count;
        let h1 = (cfg.joint_feature_dim / 2).max(1);
        let h2 = cfg.joint_feature_dim;
        Self {
            fc1: Linear::init(input, h1, rng),
            fc2: Linear::init(h1, h2, rng),
            fc3: Linear::init(h2, cfg.joint_feature_dim, rng),
            slope: cfg.leaky_slope,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            fc3: self.fc3.zeros_like(),
            slope: self.slope,
        }
    }

    fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params() + self.fc3.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.fc1.collect_params(&format!("{prefix}.fc1"), out);
        self.fc2.collect_params(&format!("{prefix}.fc2"), out);
        self.fc3.collect_params(&format!("{prefix}.fc3"), out);
    }

    pub fn forward(&self, joints: &Array2<f64>) -> Array2<f64> {
        let a1 = leaky_relu(&self.fc1.forward(joints), self.slope);
        let a2 = leaky_relu(&self.fc2.forward(&a1), self.slope);
        self.fc3.forward(&a2)
    }

    fn forward_train(&self, joints: &Array2<f64>) -> (Array2<f64>, JointMlpCache) {
        let h1_pre = self.fc1.forward(joints);
        let a1 = leaky_relu(&h1_pre, self.slope);
        let h2_pre = self.fc2.forward(&a1);
        let a2 = leaky_relu(&h2_pre, self.slope);
        let y = self.fc3.forward(&a2);
        (
            y,
            JointMlpCache {
                h1_pre,
                a1,
                h2_pre,
                a2,
            },
        )
    }

    fn backward(
        &self,
        joints: &Array2<f64>,
        cache: &JointMlpCache,
        dy: &Array2<f64>,
        grad: &mut JointMlp,
    ) -> Array2<f64> {
        let da2 = self.fc3.backward(&cache.a2, dy, &mut grad.fc3);
        let dh2 = leaky_relu_grad(&cache.h2_pre, &da2, self.slope);
        let da1 = self.fc2.backward(&cache.a1, &dh2, &mut grad.fc2);
        let dh1 = leaky_relu_grad(&cache.h1_pre, &da1, self.slope);
        self.fc1.backward(joints, &dh1, &mut grad.fc1)
    }
}

// ---------------------------------------------------------------------------
// Projection head
// ---------------------------------------------------------------------------

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ProjectionHead {
    pub fc1: Linear,
    pub fc2: Linear,
    slope: f64,
}

#[derive(Debug)]
pub struct ProjectionCache {
    h1_pre: Array2<f64>,
    a1: Array2<f64>,
    pre_norm: Array2<f64>,
    norms: Array1<f64>,
}

impl ProjectionHead {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            fc1: Linear::init(cfg.deep_feature_dim, cfg.deep_feature_dim, rng),
            fc2: Linear::init(cfg.deep_feature_dim, cfg.embedding_dim, rng),
            slope: cfg.leaky_slope,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            slope: self.slope,
        }
    }

    fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params()
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut ParamList<'a>) {
        self.fc1.collect_params(&format!("{prefix}.fc1"), out);
        self.fc2.collect_params(&format!("{prefix}.fc2"), out);
    }

    pub fn forward(&self, features: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        Ok(self.forward_train(features)?.0)
    }

    fn forward_train(
        &self,
        features: &Array2<f64>,
    ) -> Result<(Array2<f64>, ProjectionCache), ModelError> {
        let h1_pre = self.fc1.forward(features);
        let a1 = leaky_relu(&h1_pre, self.slope);
        let pre_norm = self.fc2.forward(&a1);

        let n = pre_norm.nrows();
        let mut norms = Array1::zeros(n);
        let mut out = pre_norm.clone();
        for i in 0..n {
            let norm = pre_norm.row(i).dot(&pre_norm.row(i)).sqrt();
            if norm < NORM_EPS {
                return Err(ModelError::ZeroNormEmbedding);
            }
            norms[i] = norm;
            let scale = 1.0 / (norm + NORM_EPS);
            out.row_mut(i).mapv_inplace(|v| v * scale);
        }
        Ok((
            out,
            ProjectionCache {
                h1_pre,
                a1,
                pre_norm,
                norms,
            },
        ))
    }

    fn backward(
        &self,
        features: &Array2<f64>,
        cache: &ProjectionCache,
        dout: &Array2<f64>,
        grad: &mut ProjectionHead,
    ) -> Array2<f64> {
        // back through v / (|v| + eps)
        let mut dpre = dout.clone();
        for i in 0..dpre.nrows() {
            let n = cache.norms[i];
            let denom = n + NORM_EPS;
            let v = cache.pre_norm.row(i);
            let vdot = v.dot(&dout.row(i));
            let scale = vdot / (n * denom * denom);
            for j in 0..dpre.ncols() {
                dpre[(i, j)] = dout[(i, j)] / denom - v[j] * scale;
            }
        }
        let da1 = self.fc2.backward(&cache.a1, &dpre, &mut grad.fc2);
        let dh1 = leaky_relu_grad(&cache.h1_pre, &da1, self.slope);
        self.fc1.backward(features, &dh1, &mut grad.fc1)
    }
}

// ---------------------------------------------------------------------------
// The full model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MassNet {
    pub cfg: ModelConfig,
    pub extractor: Option<DeepExtractor>,
    pub projection: Option<ProjectionHead>,
    pub joint: Option<JointMlp>,
    pub regressor: Linear,
}

/// Outputs of a training-mode forward pass.
#[derive(Debug)]
pub struct TrainOutput {
    pub predictions: Array1<f64>,
    /// Deep feature vectors, present when the deep branch is enabled.
    pub features: Option<Array2<f64>>,
    /// Unit-norm embeddings for the contrastive loss.
    pub embeddings: Option<Array2<f64>>,
}

#[derive(Debug)]
pub struct MassNetCache {
    extractor: Option<ExtractorCache>,
    features: Option<Array2<f64>>,
    projection: Option<ProjectionCache>,
    joint: Option<JointMlpCache>,
    reg_in: Array2<f64>,
}

impl MassNet {
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        cfg.validate()?;
        let extractor = cfg.use_deep_branch.then(|| DeepExtractor::init(cfg, rng));
        let projection = cfg.use_deep_branch.then(|| ProjectionHead::init(cfg, rng));
        let joint = cfg.use_joint_branch.then(|| JointMlp::init(cfg, rng));
        let regressor = Linear::init(cfg.regressor_input_dim(), 1, rng);
        Ok(Self {
            cfg: cfg.clone(),
            extractor,
            projection,
            joint,
            regressor,
        })
    }

    /// A structural twin with all parameters (and running stats) zeroed;
    /// gradient and optimizer-state container.
    pub fn zeros_like(&self) -> Self {
        Self {
            cfg: self.cfg.clone(),
            extractor: self.extractor.as_ref().map(DeepExtractor::zeros_like),
            projection: self.projection.as_ref().map(ProjectionHead::zeros_like),
            joint: self.joint.as_ref().map(JointMlp::zeros_like),
            regressor: self.regressor.zeros_like(),
        }
    }

    /// Named trainable parameter slices in deterministic order.
    pub fn collect_params(&mut self) -> ParamList<'_> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.extractor {
            e.collect_params("extractor", &mut out);
        }
        if let Some(p) = &mut self.projection {
            p.collect_params("projection", &mut out);
        }
        if let Some(j) = &mut self.joint {
            j.collect_params("joint", &mut out);
        }
        self.regressor.collect_params("regressor", &mut out);
        out
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn collect_state(&mut self) -> ParamList<'_> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.extractor {
            e.collect_state("extractor", &mut out);
        }
        out
    }

    /// Trainable parameters and running statistics interleaved, in one
    /// deterministic order (checkpoint IO uses this).
    pub fn collect_all(&mut self) -> ParamList<'_> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.extractor {
            e.collect_all("extractor", &mut out);
        }
        if let Some(p) = &mut self.projection {
            p.collect_params("projection", &mut out);
        }
        if let Some(j) = &mut self.joint {
            j.collect_params("joint", &mut out);
        }
        self.regressor.collect_params("regressor", &mut out);
        out
    }

    fn validate_inputs(
        &self,
        frames: Option<&Array4<f64>>,
        joints: Option<&Array2<f64>>,
    ) -> Result<usize, ModelError> {
        let mut batch = None;
        if self.cfg.use_deep_branch {
            let frames = frames.ok_or_else(|| ModelError::ShapeMismatch {
                context: "frames".into(),
                expected: "(N, 1, H, W) tensor".into(),
                found: "absent".into(),
            })?;
            let (n, c, h, w) = frames.dim();
            if c != 1 || h < 4 || w < 4 {
                return Err(ModelError::ShapeMismatch {
                    context: "frames".into(),
                    expected: "(N, 1, H >= 4, W >= 4)".into(),
                    found: format!("({n}, {c}, {h}, {w})"),
                });
            }
            batch = Some(n);
        }
        if self.cfg.use_joint_branch {
            if let Some(j) = joints {
                let (n, width) = j.dim();
                if width != 2 * self.cfg.joint_count {
                    return Err(ModelError::ShapeMismatch {
                        context: "joints".into(),
                        expected: format!("(N, {})", 2 * self.cfg.joint_count),
                        found: format!("({n}, {width})"),
                    });
                }
                if let Some(b) = batch {
                    if b != n {
                        return Err(ModelError::ShapeMismatch {
                            context: "joints".into(),
                            expected: format!("batch {b}"),
                            found: format!("batch {n}"),
                        });
                    }
                }
                batch = Some(n);
            } else if batch.is_none() {
                return Err(ModelError::ShapeMismatch {
                    context: "joints".into(),
                    expected: "joint vectors for the joint-only model".into(),
                    found: "absent".into(),
                });
            }
        }
        batch.ok_or_else(|| ModelError::Config("no branch enabled".into()))
    }

    fn assemble_regressor_input(
        &self,
        n: usize,
        features: Option<&Array2<f64>>,
        jfeat: Option<&Array2<f64>>,
    ) -> Array2<f64> {
        let mut reg_in = Array2::zeros((n, self.cfg.regressor_input_dim()));
        let mut col = 0;
        if let Some(f) = features {
            reg_in.slice_mut(s![.., col..col + f.ncols()]).assign(f);
            col += f.ncols();
        }
        if let Some(j) = jfeat {
            reg_in.slice_mut(s![.., col..col + j.ncols()]).assign(j);
        }
        reg_in
    }

    /// Training-mode forward: batch statistics in the norm layers, caches for
    /// [`MassNet::backward`]. Pure (running statistics are not touched).
    pub fn forward_train(
        &self,
        frames: Option<&Array4<f64>>,
        joints: Option<&Array2<f64>>,
    ) -> Result<(TrainOutput, MassNetCache), ModelError> {
        let n = self.validate_inputs(frames, joints)?;

        let (features, ext_cache) = match (&self.extractor, frames) {
            (Some(e), Some(f)) => {
                let (feat, cache) = e.forward_train(f);
                (Some(feat), Some(cache))
            }
            _ => (None, None),
        };

        let (embeddings, proj_cache) = match (&self.projection, &features) {
            (Some(p), Some(f)) => {
                let (emb, cache) = p.forward_train(f)?;
                (Some(emb), Some(cache))
            }
            _ => (None, None),
        };

        let zero_joints;
        let joint_in = match (self.joint.is_some(), joints) {
            (true, Some(j)) => Some(j),
            (true, None) => {
                zero_joints = Array2::zeros((n, 2 * self.cfg.joint_count));
                Some(&zero_joints)
            }
            _ => None,
        };
        let (jfeat, joint_cache) = match (&self.joint, joint_in) {
            (Some(m), Some(j)) => {
                let (f, cache) = m.forward_train(j);
                (Some(f), Some(cache))
            }
            _ => (None, None),
        };

        let reg_in = self.assemble_regressor_input(n, features.as_ref(), jfeat.as_ref());
        let pred2 = self.regressor.forward(&reg_in);
        let predictions = pred2.column(0).to_owned();

        Ok((
            TrainOutput {
                predictions,
                features: features.clone(),
                embeddings,
            },
            MassNetCache {
                extractor: ext_cache,
                features,
                projection: proj_cache,
                joint: joint_cache,
                reg_in,
            },
        ))
    }

    /// Backward pass. `dpred` is the gradient on predictions, `demb` the
    /// gradient on embeddings (when the contrastive loss is active).
    /// Parameter gradients accumulate into `grad`.
    pub fn backward(
        &self,
        frames: Option<&Array4<f64>>,
        joints: Option<&Array2<f64>>,
        cache: &MassNetCache,
        dpred: &Array1<f64>,
        demb: Option<&Array2<f64>>,
        grad: &mut MassNet,
    ) {
        let n = dpred.len();
        let dpred2 = dpred.view().insert_axis(Axis(1)).to_owned();
        let dreg_in = self
            .regressor
            .backward(&cache.reg_in, &dpred2, &mut grad.regressor);

        let mut col = 0;
        let mut dfeat: Option<Array2<f64>> = None;
        if self.cfg.use_deep_branch {
            let d = self.cfg.deep_feature_dim;
            dfeat = Some(dreg_in.slice(s![.., 0..d]).to_owned());
            col = d;
        }
        if let (Some(joint), Some(jc)) = (&self.joint, &cache.joint) {
            let dj = dreg_in
                .slice(s![.., col..col + self.cfg.joint_feature_dim])
                .to_owned();
            let zero_joints;
            let joint_in = match joints {
                Some(j) => j,
                None => {
                    zero_joints = Array2::zeros((n, 2 * self.cfg.joint_count));
                    &zero_joints
                }
            };
            joint.backward(joint_in, jc, &dj, grad.joint.as_mut().expect("twin"));
        }

        if let (Some(extractor), Some(ec)) = (&self.extractor, &cache.extractor) {
            let mut dfeat = dfeat.expect("deep branch active");
            if let (Some(projection), Some(pc), Some(demb)) =
                (&self.projection, &cache.projection, demb)
            {
                let features = cache.features.as_ref().expect("cached features");
                dfeat += &projection.backward(
                    features,
                    pc,
                    demb,
                    grad.projection.as_mut().expect("twin"),
                );
            }
            let frames = frames.expect("deep branch requires frames");
            extractor.backward(frames, ec, &dfeat, grad.extractor.as_mut().expect("twin"));
        }
    }

    /// Commit cached batch statistics into the running statistics.
    pub fn update_running(&mut self, cache: &MassNetCache, momentum: f64) {
        if let (Some(e), Some(c)) = (&mut self.extractor, &cache.extractor) {
            e.update_running(c, momentum);
        }
    }

    /// Inference-mode deep features (running statistics, no caches).
    pub fn extract_deep_features(&self, frames: &Array4<f64>) -> Result<Array2<f64>, ModelError> {
        let e = self
            .extractor
            .as_ref()
            .ok_or_else(|| ModelError::Config("deep branch disabled".into()))?;
        self.validate_inputs(Some(frames), None)?;
        Ok(e.forward_infer(frames))
    }

    /// Inference-mode joint features.
    pub fn extract_joint_features(&self, joints: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let j = self
            .joint
            .as_ref()
            .ok_or_else(|| ModelError::Config("joint branch disabled".into()))?;
        if joints.ncols() != 2 * self.cfg.joint_count {
            return Err(ModelError::ShapeMismatch {
                context: "joints".into(),
                expected: format!("(N, {})", 2 * self.cfg.joint_count),
                found: format!("(N, {})", joints.ncols()),
            });
        }
        Ok(j.forward(joints))
    }

    /// Project features to unit-norm embeddings.
    pub fn project_embedding(&self, features: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let p = self
            .projection
            .as_ref()
            .ok_or_else(|| ModelError::Config("deep branch disabled".into()))?;
        p.forward(features)
    }

    /// Inference: predicted weights in kg, one per batch row. Checks every
    /// stage output for non-finite values and names the offending layer.
    pub fn predict(
        &self,
        frames: Option<&Array4<f64>>,
        joints: Option<&Array2<f64>>,
    ) -> Result<Array1<f64>, ModelError> {
        let n = self.validate_inputs(frames, joints)?;
        fn check<'a>(
            name: &str,
            mut vals: impl Iterator<Item = &'a f64>,
        ) -> Result<(), ModelError> {
            if vals.any(|v| !v.is_finite()) {
                Err(ModelError::NonFinite { layer: name.into() })
            } else {
                Ok(())
            }
        }

        let features = match (&self.extractor, frames) {
            (Some(e), Some(f)) => {
                check("input", f.iter())?;
                let feat = e.forward_infer(f);
                check("extractor", feat.iter())?;
                Some(feat)
            }
            _ => None,
        };

        let zero_joints;
        let joint_in = match (self.joint.is_some(), joints) {
            (true, Some(j)) => Some(j),
            (true, None) => {
                zero_joints = Array2::zeros((n, 2 * self.cfg.joint_count));
                Some(&zero_joints)
            }
            _ => None,
        };
        let jfeat = match (&self.joint, joint_in) {
            (Some(m), Some(j)) => {
                let f = m.forward(j);
                check("joint_mlp", f.iter())?;
                Some(f)
            }
            _ => None,
        };

        let reg_in = self.assemble_regressor_input(n, features.as_ref(), jfeat.as_ref());
        let pred = self.regressor.forward(&reg_in);
        check("regressor", pred.iter())?;
        Ok(pred.column(0).to_owned())
    }

    pub fn num_params(&self) -> usize {
        self.extractor.as_ref().map_or(0, DeepExtractor::num_params)
            + self.projection.as_ref().map_or(0, ProjectionHead::num_params)
            + self.joint.as_ref().map_or(0, JointMlp::num_params)
            + self.regressor.num_params()
    }
}

/// Exact count of trainable scalars for a model built from `cfg`.
pub fn count_parameters(cfg: &ModelConfig) -> Result<usize, ModelError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Ok(MassNet::init(cfg, &mut rng)?.num_params())
}
