//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the backward sweep simply walks the tape in reverse.

use crate::kernels::{self, ConvSpec};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    Add(Var, Var),
    /// Tensor times a one-element node.
    Scale { x: Var, s: Var },
    ScaleConst { x: Var, c: f64 },
    OneMinus(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Resize(Var),
    GlobalAvgPool(Var),
    Expand(Var),
    AttnEnergy { q: Var, k: Var },
    SoftmaxRows(Var),
    AttnApply { s: Var, v: Var },
    Pad(Var),
    Crop(Var),
    BceLogits { x: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of every node on the tape with respect to one scalar output.
pub struct NodeGrads {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, ParamId)>,
    num_params: usize,
}

impl NodeGrads {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Collect the gradients that reached parameter leaves.
    pub fn param_grads(&self) -> Gradients {
        let mut out = Gradients::new(self.num_params);
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                out.accumulate(id, g, 1.0);
            }
        }
        out
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A constant that still receives a gradient (used for input-gradient checks).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Var {
        let out = kernels::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), &spec);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        self.push(out, Op::Conv2d { x, w, b, spec }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).add(self.value(b)).expect("add: shape mismatch");
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: Var) -> Var {
        let k = self.value(s).item();
        let out = self.value(x).scale(k);
        let ng = self.ng(x) || self.ng(s);
        self.push(out, Op::Scale { x, s }, ng)
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).scale(c);
        let ng = self.ng(x);
        self.push(out, Op::ScaleConst { x, c }, ng)
    }

    pub fn one_minus(&mut self, s: Var) -> Var {
        let out = self.value(s).map(|v| 1.0 - v);
        let ng = self.ng(s);
        self.push(out, Op::OneMinus(s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&vals).expect("concat: spatial mismatch");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::Concat(parts.to_vec()), ng)
    }

    pub fn resize(&mut self, x: Var, h: usize, w: usize) -> Var {
        let out = tensor::resize_bilinear(self.value(x), h, w);
        let ng = self.ng(x);
        self.push(out, Op::Resize(x), ng)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let plane = (h * w) as f64;
        let data = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / plane)
            .collect();
        let out = Tensor::from_vec(&[c, 1, 1], data).expect("pool shape");
        let ng = self.ng(x);
        self.push(out, Op::GlobalAvgPool(x), ng)
    }

    /// Broadcast a `[C,1,1]` node over an `h × w` grid.
    pub fn expand(&mut self, x: Var, h: usize, w: usize) -> Var {
        let (c, _, _) = self.value(x).dims3();
        let src = self.value(x).data().to_vec();
        let out = Tensor::from_fn3(c, h, w, |ci, _, _| src[ci]);
        let ng = self.ng(x);
        self.push(out, Op::Expand(x), ng)
    }

    pub fn attn_energy(&mut self, q: Var, k: Var) -> Var {
        let out = kernels::attention_energy(self.value(q), self.value(k));
        let ng = self.ng(q) || self.ng(k);
        self.push(out, Op::AttnEnergy { q, k }, ng)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = kernels::softmax_rows(self.value(x));
        let ng = self.ng(x);
        self.push(out, Op::SoftmaxRows(x), ng)
    }

    pub fn attn_apply(&mut self, s: Var, v: Var) -> Var {
        let out = kernels::attention_apply(self.value(s), self.value(v));
        let ng = self.ng(s) || self.ng(v);
        self.push(out, Op::AttnApply { s, v }, ng)
    }

    /// Zero-pad on the bottom and right up to `h × w`.
    pub fn pad(&mut self, x: Var, h: usize, w: usize) -> Var {
        let src = self.value(x);
        let (c, sh, sw) = src.dims3();
        let out = Tensor::from_fn3(c, h, w, |ci, y, xx| {
            if y < sh && xx < sw {
                src.at3(ci, y, xx)
            } else {
                0.0
            }
        });
        let ng = self.ng(x);
        self.push(out, Op::Pad(x), ng)
    }

    /// Keep the top-left `h × w` window.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Var {
        let src = self.value(x);
        let (c, _, _) = src.dims3();
        let out = Tensor::from_fn3(c, h, w, |ci, y, xx| src.at3(ci, y, xx));
        let ng = self.ng(x);
        self.push(out, Op::Crop(x), ng)
    }

    /// Mean binary cross-entropy between logits `x` and a same-shaped 0/1 target.
    pub fn bce_with_logits(&mut self, x: Var, target: Tensor) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape(), target.shape(), "bce: shape mismatch");
        let n = xv.len() as f64;
        let loss: f64 = xv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&z, &t)| kernels::bce_with_logit(z, t))
            .sum::<f64>()
            / n;
        let ng = self.ng(x);
        self.push(Tensor::scalar(loss), Op::BceLogits { x, target }, ng)
    }

    /// Reverse sweep from a one-element node.
    pub fn backward(&self, loss: Var) -> NodeGrads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant | Op::Param(_) => {
                    grads[idx] = Some(g);
                }
                Op::Conv2d { x, w, b, spec } => {
                    let (dx, dw, db) = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        spec,
                        self.ng(*x),
                    );
                    if let Some(dx) = dx {
                        acc(&mut grads, *x, dx);
                    }
                    if self.ng(*w) {
                        acc(&mut grads, *w, dw);
                    }
                    if let Some(b) = b {
                        if self.ng(*b) {
                            acc(&mut grads, *b, db);
                        }
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Scale { x, s } => {
                    if self.ng(*s) {
                        let dot: f64 = g.data().iter().zip(self.value(*x).data()).map(|(a, b)| a * b).sum();
                        acc(&mut grads, *s, Tensor::full(self.value(*s).shape(), dot));
                    }
                    if self.ng(*x) {
                        acc(&mut grads, *x, g.scale(self.value(*s).item()));
                    }
                }
                Op::ScaleConst { x, c } => acc(&mut grads, *x, g.scale(*c)),
                Op::OneMinus(s) => acc(&mut grads, *s, g.scale(-1.0)),
                Op::Relu(x) => {
                    let d = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 }).expect("relu shape");
                    acc(&mut grads, *x, d);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let (pc, _, _) = self.value(*p).dims3();
                        if self.ng(*p) {
                            acc(&mut grads, *p, g.channels(start, pc));
                        }
                        start += pc;
                    }
                }
                Op::Resize(x) => {
                    let (_, h, w) = self.value(*x).dims3();
                    acc(&mut grads, *x, tensor::resize_bilinear_backward(&g, h, w));
                }
                Op::GlobalAvgPool(x) => {
                    let (c, h, w) = self.value(*x).dims3();
                    let plane = (h * w) as f64;
                    let d = Tensor::from_fn3(c, h, w, |ci, _, _| g.data()[ci] / plane);
                    acc(&mut grads, *x, d);
                }
                Op::Expand(x) => {
                    let (c, _, _) = self.value(*x).dims3();
                    let (_, h, w) = g.dims3();
                    let data = g.data().chunks(h * w).map(|p| p.iter().sum()).collect();
                    acc(&mut grads, *x, Tensor::from_vec(&[c, 1, 1], data).expect("expand shape"));
                }
                Op::AttnEnergy { q, k } => {
                    // e[j,i] = Σ_c q[c,i] k[c,j]
                    let qv = self.value(*q);
                    let kv = self.value(*k);
                    let (c, h, w) = qv.dims3();
                    let n = h * w;
                    let gd = g.data();
                    if self.ng(*q) {
                        let mut dq = Tensor::zeros(&[c, h, w]);
                        let dqd = dq.data_mut();
                        for ch in 0..c {
                            let krow = &kv.data()[ch * n..(ch + 1) * n];
                            let drow = &mut dqd[ch * n..(ch + 1) * n];
                            for (j, &kj) in krow.iter().enumerate() {
                                for (dv, &gv) in drow.iter_mut().zip(&gd[j * n..(j + 1) * n]) {
                                    *dv += gv * kj;
                                }
                            }
                        }
                        acc(&mut grads, *q, dq);
                    }
                    if self.ng(*k) {
                        let mut dk = Tensor::zeros(&[c, h, w]);
                        let dkd = dk.data_mut();
                        for ch in 0..c {
                            let qrow = &qv.data()[ch * n..(ch + 1) * n];
                            for j in 0..n {
                                dkd[ch * n + j] = gd[j * n..(j + 1) * n].iter().zip(qrow).map(|(a, b)| a * b).sum();
                            }
                        }
                        acc(&mut grads, *k, dk);
                    }
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let m = y.shape()[2];
                    let mut d = Tensor::zeros(y.shape());
                    for ((drow, yrow), grow) in d
                        .data_mut()
                        .chunks_mut(m)
                        .zip(y.data().chunks(m))
                        .zip(g.data().chunks(m))
                    {
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for ((dv, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                            *dv = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::AttnApply { s, v } => {
                    // out[c,j] = Σ_i s[j,i] v[c,i]
                    let sv = self.value(*s);
                    let vv = self.value(*v);
                    let (c, h, w) = vv.dims3();
                    let n = h * w;
                    let gd = g.data();
                    if self.ng(*s) {
                        let mut ds = Tensor::zeros(sv.shape());
                        let dsd = ds.data_mut();
                        for ch in 0..c {
                            let vrow = &vv.data()[ch * n..(ch + 1) * n];
                            for j in 0..n {
                                let gj = gd[ch * n + j];
                                for (dv, &vi) in dsd[j * n..(j + 1) * n].iter_mut().zip(vrow) {
                                    *dv += gj * vi;
                                }
                            }
                        }
                        acc(&mut grads, *s, ds);
                    }
                    if self.ng(*v) {
                        let mut dv = Tensor::zeros(&[c, h, w]);
                        let dvd = dv.data_mut();
                        for ch in 0..c {
                            let drow = &mut dvd[ch * n..(ch + 1) * n];
                            for j in 0..n {
                                let gj = gd[ch * n + j];
                                for (d, &sji) in drow.iter_mut().zip(&sv.data()[j * n..(j + 1) * n]) {
                                    *d += gj * sji;
                                }
                            }
                        }
                        acc(&mut grads, *v, dv);
                    }
                }
                Op::Pad(x) => {
                    let (c, h, w) = self.value(*x).dims3();
                    acc(&mut grads, *x, Tensor::from_fn3(c, h, w, |ci, y, xx| g.at3(ci, y, xx)));
                }
                Op::Crop(x) => {
                    let (c, h, w) = self.value(*x).dims3();
                    let (_, ch, cw) = g.dims3();
                    let d = Tensor::from_fn3(c, h, w, |ci, y, xx| {
                        if y < ch && xx < cw {
                            g.at3(ci, y, xx)
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *x, d);
                }
                Op::BceLogits { x, target } => {
                    let xv = self.value(*x);
                    let scale = g.item() / xv.len() as f64;
                    let d = xv
                        .zip_map(target, |z, t| (kernels::sigmoid(z) - t) * scale)
                        .expect("bce shape");
                    acc(&mut grads, *x, d);
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((i, id)),
                _ => None,
            })
            .collect();
        NodeGrads {
            grads,
            params,
            num_params: self.store.len(),
        }
    }
}
