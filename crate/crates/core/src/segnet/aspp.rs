use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::{ConvSpec, PadMode};
use crate::layers::Conv;
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;

/// Parallel dilated branches plus an optional image-pooling branch, fused by a
/// 1×1 projection. Rate 1 is a 1×1 branch; larger rates are dilated 3×3 with
/// edge-replicate padding, so a constant map stays constant.
#[derive(Clone, Debug)]
pub struct Aspp {
    pub rates: Vec<usize>,
    pub branches: Vec<Conv>,
    pub pool: Option<Conv>,
    pub project: Conv,
}

impl Aspp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        channels: usize,
        rates: &[usize],
        global_pool: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::config("ASPP needs at least one rate"));
        }
        let mut seen = rates.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != rates.len() || rates.contains(&0) {
            return Err(Error::config(format!("ASPP rates must be distinct and positive: {rates:?}")));
        }
        let g = ParamGroup::Head;
        let branches = rates
            .iter()
            .map(|&r| {
                let name = format!("{prefix}.rate{r}");
                if r == 1 {
                    Conv::new(store, &name, in_channels, channels, 1, ConvSpec::same(1, 1), g, rng)
                } else {
                    let spec = ConvSpec::same(3, r).with_pad_mode(PadMode::Replicate);
                    Conv::new(store, &name, in_channels, channels, 3, spec, g, rng)
                }
            })
            .collect();
        let pool = global_pool.then(|| {
            Conv::new(store, &format!("{prefix}.pool"), in_channels, channels, 1, ConvSpec::same(1, 1), g, rng)
        });
        let n_branches = rates.len() + usize::from(global_pool);
        let project = Conv::new(
            store,
            &format!("{prefix}.project"),
            n_branches * channels,
            channels,
            1,
            ConvSpec::same(1, 1),
            g,
            rng,
        );
        Ok(Self {
            rates: rates.to_vec(),
            branches,
            pool,
            project,
        })
    }

    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> Var {
        let (_, h, w) = g.value(x).dims3();
        let mut outs = Vec::with_capacity(self.branches.len() + 1);
        for (conv, &rate) in self.branches.iter().zip(&self.rates) {
            if rate > 1 && rate >= h && rate >= w {
                log::warn!("ASPP rate {rate} exceeds the {h}x{w} feature map; branch sees only edge-replicated taps");
            }
            let y = conv.forward(g, x);
            outs.push(g.relu(y));
        }
        if let Some(pool) = &self.pool {
            let pooled = g.global_avg_pool(x);
            let y = pool.forward(g, pooled);
            let y = g.relu(y);
            outs.push(g.expand(y, h, w));
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs) };
        let y = self.project.forward(g, cat);
        g.relu(y)
    }

    /// Evaluate on a plain `[F, H, W]` tensor.
    pub fn forward(&self, store: &ParamStore, features: &Tensor) -> Result<Tensor> {
        let (f, h, w) = features.dims3();
        let expected = self.branches[0].in_channels;
        if f != expected {
            return Err(Error::shape(format!("ASPP expects {expected} channels, got {f}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("ASPP input has an empty spatial extent"));
        }
        let mut g = Graph::new(store);
        let x = g.constant(features.clone());
        let y = self.forward_graph(&mut g, x);
        Ok(g.value(y).clone())
    }
}
