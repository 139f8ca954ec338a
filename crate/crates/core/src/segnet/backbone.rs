use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::layers::Conv;
use crate::params::{ParamGroup, ParamStore};

/// What the rest of the network relies on from a feature extractor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneContract {
    pub name: String,
    /// 8 or 16.
    pub output_stride: usize,
    pub feature_channels: usize,
    /// Layer whose output feeds the auxiliary head.
    pub aux_tap: String,
}

impl BackboneContract {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.output_stride, 8 | 16) {
            return Err(Error::config(format!(
                "output stride must be 8 or 16, got {}",
                self.output_stride
            )));
        }
        if self.feature_channels == 0 {
            return Err(Error::config("backbone feature channels must be positive"));
        }
        Ok(())
    }
}

/// Feature maps handed to the heads.
#[derive(Clone, Copy, Debug)]
pub struct BackboneFeatures {
    /// Full-resolution features for the decoder.
    pub low: Var,
    pub aux: Var,
    /// `[F, H/stride, W/stride]`.
    pub out: Var,
}

pub trait Backbone {
    fn contract(&self) -> &BackboneContract;
    fn low_level_channels(&self) -> usize;
    fn aux_channels(&self) -> usize;
    fn forward(&self, g: &mut Graph, image: Var) -> BackboneFeatures;
}

/// A stem plus four strided 3×3 stages. At output stride 8 the last stage
/// keeps its resolution and dilates by 2 instead of striding.
#[derive(Clone, Debug)]
pub struct ToyBackbone {
    contract: BackboneContract,
    stem: Conv,
    stages: Vec<Conv>,
}

impl ToyBackbone {
    pub const NAME: &'static str = "toy";

    /// `widths` = stem followed by the four stage widths.
    pub fn new(
        contract: BackboneContract,
        widths: &[usize],
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        contract.validate()?;
        if widths.len() != 5 || widths.contains(&0) {
            return Err(Error::config(format!(
                "toy backbone needs 5 positive widths, got {widths:?}"
            )));
        }
        if widths[4] != contract.feature_channels {
            return Err(Error::config(format!(
                "last stage width {} disagrees with feature_channels {}",
                widths[4], contract.feature_channels
            )));
        }
        let g = ParamGroup::Backbone;
        let stem = Conv::new(store, "backbone.stem", 3, widths[0], 3, ConvSpec::same(3, 1), g, rng);
        let mut stages = Vec::with_capacity(4);
        for s in 0..4 {
            let spec = if s == 3 && contract.output_stride == 8 {
                ConvSpec::same(3, 2)
            } else {
                ConvSpec::strided(3, 2)
            };
            stages.push(Conv::new(
                store,
                &format!("backbone.stage{}", s + 1),
                widths[s],
                widths[s + 1],
                3,
                spec,
                g,
                rng,
            ));
        }
        Ok(Self { contract, stem, stages })
    }
}

impl Backbone for ToyBackbone {
    fn contract(&self) -> &BackboneContract {
        &self.contract
    }

    fn low_level_channels(&self) -> usize {
        self.stem.out_channels
    }

    fn aux_channels(&self) -> usize {
        self.stages[2].out_channels
    }

    fn forward(&self, g: &mut Graph, image: Var) -> BackboneFeatures {
        let stem = self.stem.forward(g, image);
        let low = g.relu(stem);
        let mut x = low;
        let mut aux = low;
        for (i, stage) in self.stages.iter().enumerate() {
            let y = stage.forward(g, x);
            x = g.relu(y);
            if i == 2 {
                aux = x;
            }
        }
        BackboneFeatures { low, aux, out: x }
    }
}
