//! Numeric kernels shared by the autograd graph and the plain-tensor APIs.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    #[default]
    Zeros,
    /// Out-of-range taps read the nearest edge pixel.
    Replicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub pad_mode: PadMode,
}

impl ConvSpec {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
            pad_mode: PadMode::Zeros,
        }
    }

    pub fn strided(kernel: usize, stride: usize) -> Self {
        Self {
            stride,
            padding: (kernel - 1) / 2,
            dilation: 1,
            pad_mode: PadMode::Zeros,
        }
    }

    pub fn with_pad_mode(mut self, mode: PadMode) -> Self {
        self.pad_mode = mode;
        self
    }

    pub fn out_len(&self, in_len: usize, kernel: usize) -> usize {
        let span = self.dilation * (kernel - 1) + 1;
        (in_len + 2 * self.padding).saturating_sub(span) / self.stride + 1
    }
}

/// For each kernel tap and output position, the input index it reads (if any).
fn tap_table(out_len: usize, in_len: usize, kernel: usize, spec: &ConvSpec) -> Vec<Vec<Option<usize>>> {
    (0..kernel)
        .map(|k| {
            (0..out_len)
                .map(|o| {
                    let pos = (o * spec.stride + k * spec.dilation) as isize - spec.padding as isize;
                    if pos >= 0 && (pos as usize) < in_len {
                        Some(pos as usize)
                    } else {
                        match spec.pad_mode {
                            PadMode::Zeros => None,
                            PadMode::Replicate => Some(pos.clamp(0, in_len as isize - 1) as usize),
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// 2-D convolution of `input [I,H,W]` with `weight [O,I,kh,kw]` and optional `bias [O]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
    let (ic, h, w) = input.dims3();
    let ws = weight.shape();
    let (oc, wic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    assert_eq!(ic, wic, "conv2d: input has {ic} channels, weight expects {wic}");
    let oh = spec.out_len(h, kh);
    let ow = spec.out_len(w, kw);
    let rows = tap_table(oh, h, kh, spec);
    let cols = tap_table(ow, w, kw, spec);
    let mut out = Tensor::zeros(&[oc, oh, ow]);
    let src = input.data();
    let wt = weight.data();
    let dst = out.data_mut();
    for o in 0..oc {
        let out_plane = &mut dst[o * oh * ow..(o + 1) * oh * ow];
        if let Some(b) = bias {
            out_plane.fill(b.data()[o]);
        }
        for i in 0..ic {
            let in_plane = &src[i * h * w..(i + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wt[((o * ic + i) * kh + ky) * kw + kx];
                    let col_map = &cols[kx];
                    for (oy, iy) in rows[ky].iter().enumerate() {
                        let Some(iy) = iy else { continue };
                        let in_row = &in_plane[iy * w..(iy + 1) * w];
                        let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                        for (ov, ix) in out_row.iter_mut().zip(col_map) {
                            if let Some(ix) = ix {
                                *ov += wv * in_row[*ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d`]: `(d_input, d_weight, d_bias)`. `d_input` is skipped
/// when `need_input` is false.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
    need_input: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (ic, h, w) = input.dims3();
    let ws = weight.shape();
    let (oc, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (_, oh, ow) = grad_out.dims3();
    let rows = tap_table(oh, h, kh, spec);
    let cols = tap_table(ow, w, kw, spec);
    let src = input.data();
    let wt = weight.data();
    let g = grad_out.data();

    let mut d_w = Tensor::zeros(ws);
    let mut d_b = Tensor::zeros(&[oc]);
    let mut d_in = need_input.then(|| Tensor::zeros(&[ic, h, w]));

    for o in 0..oc {
        let g_plane = &g[o * oh * ow..(o + 1) * oh * ow];
        d_b.data_mut()[o] = g_plane.iter().sum();
        for i in 0..ic {
            let in_plane = &src[i * h * w..(i + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((o * ic + i) * kh + ky) * kw + kx;
                    let wv = wt[widx];
                    let col_map = &cols[kx];
                    let mut acc = 0.0;
                    for (oy, iy) in rows[ky].iter().enumerate() {
                        let Some(iy) = iy else { continue };
                        let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                        let in_row = &in_plane[iy * w..(iy + 1) * w];
                        for (gv, ix) in g_row.iter().zip(col_map) {
                            if let Some(ix) = ix {
                                acc += gv * in_row[*ix];
                            }
                        }
                        if let Some(d_in) = d_in.as_mut() {
                            let d_row = &mut d_in.data_mut()[(i * h + iy) * w..(i * h + iy + 1) * w];
                            for (gv, ix) in g_row.iter().zip(col_map) {
                                if let Some(ix) = ix {
                                    d_row[*ix] += wv * gv;
                                }
                            }
                        }
                    }
                    d_w.data_mut()[widx] = acc;
                }
            }
        }
    }
    (d_in, d_w, d_b)
}

/// Attention logits: `energy[j, i] = q[:, i] · k[:, j]` for `q, k` of shape `[C,H,W]`.
/// Returned as `[1, N, N]` with `N = H·W`.
pub fn attention_energy(q: &Tensor, k: &Tensor) -> Tensor {
    let (c, h, w) = q.dims3();
    let n = h * w;
    let qd = q.data();
    let kd = k.data();
    let mut out = Tensor::zeros(&[1, n, n]);
    let e = out.data_mut();
    for ch in 0..c {
        let qrow = &qd[ch * n..(ch + 1) * n];
        let krow = &kd[ch * n..(ch + 1) * n];
        for (j, &kv) in krow.iter().enumerate() {
            let erow = &mut e[j * n..(j + 1) * n];
            for (ev, &qv) in erow.iter_mut().zip(qrow) {
                *ev += qv * kv;
            }
        }
    }
    out
}

/// Row-wise softmax of a `[1, N, M]` tensor, with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n, m) = (s[1], s[2]);
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(m).take(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Attended values: `out[c, j] = Σ_i s[j, i] · v[c, i]`.
pub fn attention_apply(s: &Tensor, v: &Tensor) -> Tensor {
    let (c, h, w) = v.dims3();
    let n = h * w;
    let sd = s.data();
    let vd = v.data();
    let mut out = Tensor::zeros(&[c, h, w]);
    let od = out.data_mut();
    for ch in 0..c {
        let vrow = &vd[ch * n..(ch + 1) * n];
        let orow = &mut od[ch * n..(ch + 1) * n];
        for (j, ov) in orow.iter_mut().enumerate() {
            let srow = &sd[j * n..(j + 1) * n];
            *ov = srow.iter().zip(vrow).map(|(a, b)| a * b).sum();
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}
