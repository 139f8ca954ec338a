use crate::params::{Gradients, ParamGroup, ParamStore};
use crate::tensor::Tensor;

/// SGD with heavy-ball momentum and per-group L2 weight decay:
/// `g ← g + wd·w`, `v ← μ·v + g`, `w ← w − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub wd_backbone: f64,
    pub wd_head: f64,
    velocity: Vec<Option<Tensor>>,
}

impl Sgd {
    pub fn new(momentum: f64, wd_backbone: f64, wd_head: f64) -> Self {
        Self {
            momentum,
            wd_backbone,
            wd_head,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        if self.velocity.len() < store.len() {
            self.velocity.resize(store.len(), None);
        }
        for (id, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let wd = match p.group {
                ParamGroup::Backbone => self.wd_backbone,
                ParamGroup::Head => self.wd_head,
            };
            let mut g = match grads.get(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.value.shape()),
            };
            if wd != 0.0 {
                g.add_scaled_assign(&p.value, wd);
            }
            let v = self.velocity[id.index()].get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.momentum * *vi + gi;
            }
            p.value.add_scaled_assign(v, -lr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_steps_by_hand() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(1.0), ParamGroup::Backbone);
        let f = store.add("f", Tensor::scalar(1.0), ParamGroup::Head);
        store.get_mut(f).trainable = false;
        let mut grads = Gradients::new(store.len());
        grads.accumulate(w, &Tensor::scalar(0.5), 1.0);
        let mut opt = Sgd::new(0.9, 0.1, 0.0);
        opt.step(&mut store, &grads, 0.1);
        // g = 0.5 + 0.1 = 0.6, v = 0.6, w = 1 - 0.06
        assert!((store.value(w).item() - 0.94).abs() < 1e-15);
        opt.step(&mut store, &grads, 0.1);
        // g = 0.5 + 0.094 = 0.594, v = 0.54 + 0.594 = 1.134, w = 0.94 - 0.1134
        assert!((store.value(w).item() - 0.8266).abs() < 1e-12);
        assert_eq!(store.value(f).item(), 1.0);
    }
}
