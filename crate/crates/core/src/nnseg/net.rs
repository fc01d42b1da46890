use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{pointwise_conv, res_block, BatchNorm, ConvKernel, Pointwise, ResBlock};
use super::weights::{LayerKind, LayerRecord, NetworkWeights};
use super::{NnError, Tensor};
use crate::imagecore::{resize_bilinear, Circle, FloatImage, GrayImage, MaskImage};
use crate::segment::{SegResult, SegmentationError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Channels at the top level; each level below doubles it.
    pub width: usize,
    /// Number of resolution levels.
    pub depth: usize,
    /// Square side the input is resampled to.
    pub input_size: usize,
    pub dilation: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            width: 64,
            depth: 4,
            input_size: 256,
            dilation: 2,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.width == 0 || self.depth == 0 {
            return Err(NnError::Config("width and depth must be positive".into()));
        }
        if self.dilation == 0 {
            return Err(NnError::Config("dilation must be positive".into()));
        }
        if self.depth >= usize::BITS as usize || self.input_size == 0 || !self.input_size.is_multiple_of(1 << self.depth) {
            return Err(NnError::Config(format!(
                "input size {} not divisible by 2^{}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.width << level
    }

    /// Grid nodes `(level, column)` in evaluation order.
    fn nodes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .flat_map(|j| (0..self.depth - j).map(move |i| (i, j)))
            .collect()
    }

    fn node_in_channels(&self, i: usize, j: usize) -> usize {
        match (i, j) {
            (0, 0) => 1,
            (i, 0) => self.channels(i - 1),
            (i, _) => self.channels(i) + self.channels(i + 1),
        }
    }
}

/// Nested U-Net. Node `(i, 0)` encodes level `i` from the level above,
/// downsampled by 2; node `(i, j)` fuses node `(i, j−1)` with the upsampled
/// node `(i+1, j−1)`. A 1×1 head over every top-row node gives two logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    blocks: Vec<((usize, usize), ResBlock)>,
    head: Pointwise,
}

impl Network {
    pub fn zeros(config: &NetworkConfig) -> Result<Self, NnError> {
        config.validate()?;
        let blocks = config
            .nodes()
            .into_iter()
            .map(|(i, j)| ((i, j), ResBlock::zeros(config.node_in_channels(i, j), config.channels(i))))
            .collect();
        Ok(Self {
            config: config.clone(),
            blocks,
            head: Pointwise::zeros(2, config.depth * config.width),
        })
    }

    /// He-normal kernels, identity batch norm, zero biases.
    pub fn random(config: &NetworkConfig, seed: u64) -> Result<Self, NnError> {
        let mut net = Self::zeros(config)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |data: &mut [f32], fan_in: usize| {
            let n = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            data.iter_mut().for_each(|v| *v = n.sample(&mut rng) as f32);
        };
        for (_, b) in &mut net.blocks {
            let cin = b.conv1.in_channels;
            fill(&mut b.conv1.data, cin * 9);
            let cmid = b.conv2.in_channels;
            fill(&mut b.conv2.data, cmid * 9);
            if let Some(p) = &mut b.project {
                let cin = p.in_channels;
                for o in 0..p.out_channels {
                    fill(&mut p.data[o * (cin + 1)..o * (cin + 1) + cin], cin);
                }
            }
        }
        let cin = net.head.in_channels;
        for o in 0..2 {
            fill(&mut net.head.data[o * (cin + 1)..o * (cin + 1) + cin], cin);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn to_weights(&self) -> NetworkWeights {
        let mut layers = Vec::new();
        for ((i, j), b) in &self.blocks {
            let p = format!("x{i}_{j}");
            layers.push(conv_record(format!("{p}.conv1"), &b.conv1));
            layers.push(bn_record(format!("{p}.bn1"), &b.bn1));
            layers.push(conv_record(format!("{p}.conv2"), &b.conv2));
            layers.push(bn_record(format!("{p}.bn2"), &b.bn2));
            if let Some(proj) = &b.project {
                layers.push(pointwise_record(format!("{p}.proj"), proj));
            }
        }
        layers.push(pointwise_record("head".into(), &self.head));
        NetworkWeights { layers }
    }

    /// Builds the network, checking every record against the layout `config`
    /// implies. Reports the first record that disagrees.
    pub fn from_weights(weights: &NetworkWeights, config: &NetworkConfig) -> Result<Self, NnError> {
        let expected = Self::zeros(config)?.to_weights();
        for (k, exp) in expected.layers.iter().enumerate() {
            let Some(got) = weights.layers.get(k) else {
                return Err(model_err(&exp.name, "missing from weight file"));
            };
            if got.name != exp.name || got.kind != exp.kind || got.shape != exp.shape {
                return Err(model_err(
                    &got.name,
                    format!(
                        "expected {} {:?} {:?}, found {:?} {:?}",
                        exp.name, exp.kind, exp.shape, got.kind, got.shape
                    ),
                ));
            }
            if got.data.len() != exp.data.len() {
                return Err(model_err(&got.name, format!("{} values, expected {}", got.data.len(), exp.data.len())));
            }
            if got.data.iter().any(|v| !v.is_finite()) {
                return Err(model_err(&got.name, "non-finite parameter"));
            }
        }
        if let Some(extra) = weights.layers.get(expected.layers.len()) {
            return Err(model_err(&extra.name, "unexpected extra layer"));
        }
        let mut net = Self::zeros(config)?;
        let mut it = weights.layers.iter();
        let mut next = || it.next().expect("layout checked above");
        for (_, b) in &mut net.blocks {
            b.conv1.data.clone_from(&next().data);
            b.bn1 = bn_from(&next().data);
            b.conv2.data.clone_from(&next().data);
            b.bn2 = bn_from(&next().data);
            if let Some(p) = &mut b.project {
                p.data.clone_from(&next().data);
            }
        }
        net.head.data.clone_from(&next().data);
        Ok(net)
    }

    fn block(&self, i: usize, j: usize) -> &ResBlock {
        &self.blocks.iter().find(|(k, _)| *k == (i, j)).expect("node exists").1
    }

    /// Iris-class probability per source pixel, in [0, 1].
    pub fn forward(&self, img: &GrayImage) -> Result<FloatImage, NnError> {
        let cfg = &self.config;
        let s = cfg.input_size;
        let resized = resize_bilinear(&img.to_float(), s, s);
        let vals = resized.values();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let input = Tensor::from_vec(
            1,
            s,
            s,
            vals.iter()
                .map(|v| if std > 0.0 { ((v - mean) / std) as f32 } else { 0.0 })
                .collect(),
        )?;

        let d = cfg.depth;
        let mut grid: Vec<Vec<Option<Tensor>>> = vec![vec![None; d]; d];
        for (i, j) in cfg.nodes() {
            let side = s >> i;
            let x = if j == 0 {
                if i == 0 {
                    input.clone()
                } else {
                    grid[i - 1][0].as_ref().expect("computed").resize(side, side)
                }
            } else {
                let left = grid[i][j - 1].as_ref().expect("computed");
                let below = grid[i + 1][j - 1].as_ref().expect("computed").resize(side, side);
                Tensor::concat(&[left, &below])?
            };
            grid[i][j] = Some(res_block(&x, self.block(i, j), cfg.dilation)?);
        }
        let top: Vec<&Tensor> = grid[0].iter().map(|t| t.as_ref().expect("computed")).collect();
        let logits = pointwise_conv(&Tensor::concat(&top)?, &self.head)?;
        let mut prob = Tensor::zeros(1, s, s);
        for (p, (&l0, &l1)) in prob.data_mut().iter_mut().zip(logits.plane(0).iter().zip(logits.plane(1))) {
            *p = 1.0 / (1.0 + (l0 - l1).exp());
        }
        let back = prob.resize(img.height(), img.width());
        Ok(FloatImage::from_raw(
            img.width(),
            img.height(),
            back.data().iter().map(|&v| (v as f64).clamp(0.0, 1.0)).collect(),
        ))
    }
}

fn model_err(layer: &str, reason: impl Into<String>) -> NnError {
    NnError::Model {
        layer: layer.into(),
        reason: reason.into(),
    }
}

fn conv_record(name: String, k: &ConvKernel) -> LayerRecord {
    LayerRecord {
        name,
        kind: LayerKind::SharedAtrousConv,
        shape: vec![k.out_channels, k.in_channels, 3, 3],
        data: k.data.clone(),
    }
}

fn bn_record(name: String, bn: &BatchNorm) -> LayerRecord {
    let mut data = bn.gamma.clone();
    data.extend(&bn.beta);
    data.extend(&bn.mean);
    data.extend(&bn.var);
    LayerRecord {
        name,
        kind: LayerKind::BatchNorm,
        shape: vec![4, bn.channels()],
        data,
    }
}

fn bn_from(data: &[f32]) -> BatchNorm {
    let c = data.len() / 4;
    BatchNorm {
        gamma: data[..c].to_vec(),
        beta: data[c..2 * c].to_vec(),
        mean: data[2 * c..3 * c].to_vec(),
        var: data[3 * c..].to_vec(),
    }
}

fn pointwise_record(name: String, p: &Pointwise) -> LayerRecord {
    LayerRecord {
        name,
        kind: LayerKind::PointwiseConv,
        shape: vec![p.out_channels, p.in_channels + 1],
        data: p.data.clone(),
    }
}

/// Thresholds a probability map and fits pupil and iris circles by casting
/// rays from the mask centroid: the first mask pixel along each ray lies on
/// the pupil boundary, the last on the iris boundary.
pub fn mask_to_seg(prob: &FloatImage, threshold: f64) -> Result<SegResult, SegmentationError> {
    let (w, h) = (prob.width(), prob.height());
    let mask = MaskImage::from_fn(w, h, |x, y| prob.get(x, y) >= threshold);
    let fail = |reason: &str| SegmentationError::SegmentationFailed {
        stage: "nn",
        reason: reason.into(),
    };
    let n = mask.count();
    if n < 16 {
        return Err(fail("probability map has no iris region"));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let r_max = (w.max(h)) as f64;
    let (mut inner, mut outer) = (Vec::new(), Vec::new());
    for k in 0..64 {
        let th = k as f64 * std::f64::consts::TAU / 64.0;
        let (dx, dy) = (th.cos(), -th.sin());
        let (mut first, mut last) = (None, None);
        let mut r = 0.0;
        while r < r_max {
            let (x, y) = ((cx + r * dx).round(), (cy + r * dy).round());
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                break;
            }
            if mask.get(x as usize, y as usize) {
                first.get_or_insert(r);
                last = Some(r);
            }
            r += 0.5;
        }
        if let (Some(f), Some(l)) = (first, last) {
            inner.push(f);
            outer.push(l + 0.5);
        }
    }
    if inner.len() < 8 {
        return Err(fail("too few boundary rays"));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let rp = median(&mut inner);
    let ri = median(&mut outer);
    let pupil = Circle::new(cx, cy, rp.max(1.0));
    let iris = Circle::new(cx, cy, ri);
    let seg = SegResult {
        pupil,
        iris,
        mask,
        confidence: 1.0,
    };
    if !seg.is_valid() {
        return Err(fail("fitted circles are not nested"));
    }
    Ok(seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnseg::weights::{decode_weights, encode_weights};

    fn small() -> NetworkConfig {
        NetworkConfig {
            width: 4,
            depth: 3,
            input_size: 32,
            dilation: 2,
        }
    }

    #[test]
    fn zero_network_is_half() {
        let net = Network::zeros(&small()).unwrap();
        let img = GrayImage::from_raw(40, 30, (0..1200).map(|i| (i * 7 % 251) as u8).collect());
        let p = net.forward(&img).unwrap();
        assert_eq!((p.width(), p.height()), (40, 30));
        assert!(p.values().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn random_network_range_and_determinism() {
        let net = Network::random(&small(), 5).unwrap();
        let img = GrayImage::from_raw(40, 30, (0..1200).map(|i| (i * 13 % 256) as u8).collect());
        let a = net.forward(&img).unwrap();
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, net.forward(&img).unwrap());
    }

    #[test]
    fn weights_roundtrip_through_file_format() {
        let net = Network::random(&small(), 9).unwrap();
        let w = decode_weights(&encode_weights(&net.to_weights())).unwrap();
        assert_eq!(Network::from_weights(&w, &small()).unwrap(), net);
    }

    #[test]
    fn mismatched_layer_named() {
        let mut w = Network::zeros(&small()).unwrap().to_weights();
        w.layers[2].shape = vec![4, 5, 3, 3];
        match Network::from_weights(&w, &small()) {
            Err(NnError::Model { layer, .. }) => assert_eq!(layer, "x0_0.conv2"),
            other => panic!("{other:?}"),
        }
        let other = NetworkConfig { width: 8, ..small() };
        assert!(Network::from_weights(&Network::zeros(&small()).unwrap().to_weights(), &other).is_err());
    }

    #[test]
    fn config_checked() {
        assert!(NetworkConfig { input_size: 36, ..small() }.validate().is_err());
        assert!(NetworkConfig { width: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn mask_fit_recovers_annulus() {
        let (pupil, iris) = (Circle::new(60.0, 50.0, 12.0), Circle::new(60.0, 50.0, 35.0));
        let prob = FloatImage::from_raw(
            120,
            100,
            (0..12000)
                .map(|i| {
                    let (x, y) = ((i % 120) as f64, (i / 120) as f64);
                    if iris.contains(x, y) && !pupil.contains(x, y) { 0.9 } else { 0.1 }
                })
                .collect(),
        );
        let seg = mask_to_seg(&prob, 0.5).unwrap();
        assert!((seg.pupil.r - 12.0).abs() < 1.5 && (seg.iris.r - 35.0).abs() < 1.5);
        assert!(seg.pupil.center_distance(&pupil) < 1.0);
        assert!(mask_to_seg(&FloatImage::zeros(50, 50), 0.5).is_err());
    }
}
