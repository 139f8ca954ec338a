//! The full segmentation network (internally "LEANet"; the same design is
//! also published under the name CSSNet).
//!
//! ```text
//! image ─ backbone ─┬─ low-level (stride 1) ───────────────────────────┐
//!                   ├─ stage 3 ─ aux head                              │
//!                   └─ stage 4 ─┬─ attention ─┐                        │
//!                               └─ ASPP ──────┴─ concat ─ 1×1 ─ upsample ─ concat ─ 3×3 ─ 3×3 ─ 1×1 ─ logits
//! ```

pub mod aspp;
pub mod backbone;
pub mod checkpoint;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionRun, LeaAttention, LocationSource};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::layers::Conv;
use crate::mask::{MultiLabelMask, ProbMask};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;

pub use aspp::Aspp;
pub use backbone::{Backbone, BackboneContract, BackboneFeatures, ToyBackbone};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub backbone: BackboneContract,
    /// Stem width followed by the four stage widths.
    pub backbone_widths: Vec<usize>,
    pub num_classes: usize,
    pub attention: AttentionConfig,
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub aspp_global_pool: bool,
    pub fuse_channels: usize,
    pub low_level_channels: usize,
    pub decoder_channels: usize,
    /// Seed for parameter initialisation.
    pub init_seed: u64,
}

impl NetworkConfig {
    /// Desk-scale network used throughout the tests and the toy pipeline.
    pub fn toy(num_classes: usize) -> Self {
        let widths = vec![8, 16, 24, 32, 32];
        let feature_channels = widths[4];
        Self {
            backbone: BackboneContract {
                name: ToyBackbone::NAME.into(),
                output_stride: 8,
                feature_channels,
                aux_tap: "stage3".into(),
            },
            backbone_widths: widths,
            num_classes,
            attention: AttentionConfig::new(feature_channels, 16),
            aspp_rates: vec![1, 2, 3],
            aspp_channels: 16,
            aspp_global_pool: true,
            fuse_channels: 16,
            low_level_channels: 8,
            decoder_channels: 16,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be at least 1"));
        }
        if self.attention.in_channels != self.backbone.feature_channels {
            return Err(Error::config(format!(
                "attention in_channels {} must equal backbone feature_channels {}",
                self.attention.in_channels, self.backbone.feature_channels
            )));
        }
        if [self.aspp_channels, self.fuse_channels, self.low_level_channels, self.decoder_channels].contains(&0) {
            return Err(Error::config("head channel counts must be positive"));
        }
        self.attention.validate()
    }
}

/// How the attention branch behaves in a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AttentionMode {
    #[default]
    Normal,
    /// Location grid replaced by zeros.
    ZeroLocation,
    /// Branch output replaced by its reduced input `A`.
    Bypass,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Enables location jitter.
    pub training: bool,
    pub jitter_seed: u64,
    pub attention: AttentionMode,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(jitter_seed: u64) -> Self {
        Self {
            training: true,
            jitter_seed,
            attention: AttentionMode::Normal,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegOutput {
    /// Raw per-class scores `[K, H, W]`.
    pub logits: Tensor,
    pub aux_logits: Tensor,
}

#[derive(Clone, Debug)]
pub enum AnyBackbone {
    Toy(ToyBackbone),
}

impl Backbone for AnyBackbone {
    fn contract(&self) -> &BackboneContract {
        match self {
            AnyBackbone::Toy(b) => b.contract(),
        }
    }

    fn low_level_channels(&self) -> usize {
        match self {
            AnyBackbone::Toy(b) => b.low_level_channels(),
        }
    }

    fn aux_channels(&self) -> usize {
        match self {
            AnyBackbone::Toy(b) => b.aux_channels(),
        }
    }

    fn forward(&self, g: &mut Graph, image: Var) -> BackboneFeatures {
        match self {
            AnyBackbone::Toy(b) => b.forward(g, image),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegNet {
    config: NetworkConfig,
    store: ParamStore,
    backbone: AnyBackbone,
    attention: LeaAttention,
    aspp: Aspp,
    fuse: Conv,
    low_proj: Conv,
    decoder1: Conv,
    decoder2: Conv,
    classifier: Conv,
    aux_head: Conv,
}

impl SegNet {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let backbone = match config.backbone.name.as_str() {
            ToyBackbone::NAME => AnyBackbone::Toy(ToyBackbone::new(
                config.backbone.clone(),
                &config.backbone_widths,
                &mut store,
                &mut rng,
            )?),
            other => {
                return Err(Error::config(format!(
                    "backbone `{other}` is not available in this build (only `{}`)",
                    ToyBackbone::NAME
                )))
            }
        };
        let attention = LeaAttention::new(config.attention.clone(), &mut store, "attention", &mut rng)?;
        let aspp = Aspp::new(
            &mut store,
            "aspp",
            config.backbone.feature_channels,
            config.aspp_channels,
            &config.aspp_rates,
            config.aspp_global_pool,
            &mut rng,
        )?;
        let head = ParamGroup::Head;
        let one = ConvSpec::same(1, 1);
        let three = ConvSpec::same(3, 1);
        let fuse = Conv::new(
            &mut store,
            "fuse",
            config.attention.proj_channels + config.aspp_channels,
            config.fuse_channels,
            1,
            one,
            head,
            &mut rng,
        );
        let low_proj = Conv::new(
            &mut store,
            "decoder.low",
            backbone.low_level_channels(),
            config.low_level_channels,
            1,
            one,
            head,
            &mut rng,
        );
        let decoder1 = Conv::new(
            &mut store,
            "decoder.conv1",
            config.fuse_channels + config.low_level_channels,
            config.decoder_channels,
            3,
            three,
            head,
            &mut rng,
        );
        let decoder2 = Conv::new(
            &mut store,
            "decoder.conv2",
            config.decoder_channels,
            config.decoder_channels,
            3,
            three,
            head,
            &mut rng,
        );
        let classifier = Conv::new(
            &mut store,
            "classifier",
            config.decoder_channels,
            config.num_classes,
            1,
            one,
            head,
            &mut rng,
        );
        let aux_head = Conv::new(
            &mut store,
            "aux_classifier",
            backbone.aux_channels(),
            config.num_classes,
            1,
            one,
            head,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            backbone,
            attention,
            aspp,
            fuse,
            low_proj,
            decoder1,
            decoder2,
            classifier,
            aux_head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn attention(&self) -> &LeaAttention {
        &self.attention
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Append the network to `g`. Returns `(logits, aux_logits)`, both at the
    /// resolution of `image`.
    pub fn forward_graph(&self, g: &mut Graph, image: Var, opts: &ForwardOptions) -> Result<(Var, Var)> {
        let (c, h, w) = g.value(image).dims3();
        if c != 3 {
            return Err(Error::shape(format!("image must have 3 channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("image is empty"));
        }
        let stride = self.config.backbone.output_stride;
        let (ph, pw) = (h.div_ceil(stride) * stride, w.div_ceil(stride) * stride);
        let x = if (ph, pw) != (h, w) { g.pad(image, ph, pw) } else { image };

        let feats = self.backbone.forward(g, x);
        let location = match opts.attention {
            AttentionMode::ZeroLocation => LocationSource::Zero,
            _ => LocationSource::Learned,
        };
        let run = AttentionRun {
            training: opts.training,
            jitter_seed: opts.jitter_seed,
            location,
            bypass: opts.attention == AttentionMode::Bypass,
        };
        let att = self.attention.forward_graph(g, feats.out, &run)?;
        let multi = self.aspp.forward_graph(g, feats.out);
        let cat = g.concat(&[att.e, multi]);
        let fused = self.fuse.forward(g, cat);
        let fused = g.relu(fused);
        let up = g.resize(fused, ph, pw);

        let low = self.low_proj.forward(g, feats.low);
        let low = g.relu(low);
        let dec_in = g.concat(&[up, low]);
        let d1 = self.decoder1.forward(g, dec_in);
        let d1 = g.relu(d1);
        let d2 = self.decoder2.forward(g, d1);
        let d2 = g.relu(d2);
        let logits = self.classifier.forward(g, d2);

        let aux = self.aux_head.forward(g, feats.aux);
        let aux = g.resize(aux, ph, pw);

        if (ph, pw) != (h, w) {
            Ok((g.crop(logits, h, w), g.crop(aux, h, w)))
        } else {
            Ok((logits, aux))
        }
    }

    pub fn forward(&self, image: &Tensor, opts: &ForwardOptions) -> Result<SegOutput> {
        if image.shape().len() != 3 {
            return Err(Error::shape(format!("image must be [3,H,W], got {:?}", image.shape())));
        }
        let mut g = Graph::new(&self.store);
        let x = g.constant(image.clone());
        let (logits, aux) = self.forward_graph(&mut g, x, opts)?;
        Ok(SegOutput {
            logits: g.value(logits).clone(),
            aux_logits: g.value(aux).clone(),
        })
    }

    /// Sigmoid probabilities and thresholded mask for an RGB image (eval mode).
    pub fn predict(&self, image: &RgbImage, threshold: f64) -> Result<(ProbMask, MultiLabelMask)> {
        let out = self.forward(&image_to_tensor(image), &ForwardOptions::eval())?;
        let mask = predict_mask(&out.logits, threshold)?;
        Ok((ProbMask::from_logits(&out.logits), mask))
    }

    pub fn check_label_count(&self, k: usize) -> Result<()> {
        if k != self.config.num_classes {
            return Err(Error::config(format!(
                "network predicts {} classes but the label set has {k}",
                self.config.num_classes
            )));
        }
        Ok(())
    }
}

/// Per-pixel, per-class sigmoid followed by `p >= threshold`.
pub fn predict_mask(logits: &Tensor, threshold: f64) -> Result<MultiLabelMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(ProbMask::from_logits(logits).threshold(threshold))
}

/// Normalise an 8-bit RGB image to a `[3, H, W]` tensor centred on zero.
pub fn image_to_tensor(image: &RgbImage) -> Tensor {
    let (w, h) = image.dimensions();
    let (w, h) = (w as usize, h as usize);
    let raw = image.as_raw();
    Tensor::from_fn3(3, h, w, |c, y, x| (raw[(y * w + x) * 3 + c] as f64 / 255.0 - 0.5) / 0.25)
}
