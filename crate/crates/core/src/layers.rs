use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::kernels::ConvSpec;
use crate::params::{kaiming_normal, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

/// A convolution whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        spec: ConvSpec,
        group: ParamGroup,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_normal(&[out_channels, in_channels, kernel, kernel], rng),
            group,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]), group);
        Self {
            weight,
            bias: Some(bias),
            spec,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.conv2d(x, w, b, self.spec)
    }

    /// Overwrite the weights with an identity map (centre tap, zero bias).
    /// Only meaningful when `in_channels >= out_channels`.
    pub fn set_identity(&self, store: &mut ParamStore) {
        let k = self.kernel;
        let mut w = Tensor::zeros(&[self.out_channels, self.in_channels, k, k]);
        for o in 0..self.out_channels.min(self.in_channels) {
            w.data_mut()[((o * self.in_channels + o) * k + k / 2) * k + k / 2] = 1.0;
        }
        store.get_mut(self.weight).value = w;
        if let Some(b) = self.bias {
            store.get_mut(b).value = Tensor::zeros(&[self.out_channels]);
        }
    }
}
