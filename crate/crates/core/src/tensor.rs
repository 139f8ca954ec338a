//! Dense row-major `f64` tensors.
//!
//! Feature maps are rank 3 (`[channels, height, width]`); convolution weights
//! are rank 4 (`[out, in, kh, kw]`). Scalars are stored as `[1]`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index of a rank-3 shape.
    pub fn from_fn3(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ci, y, x));
                }
            }
        }
        Self {
            shape: vec![c, h, w],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)`; panics if the tensor is not rank 3.
    pub fn dims3(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected rank-3 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (_, h, w) = self.dims3();
        self.data[(c * h + y) * w + x]
    }

    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (_, h, w) = self.dims3();
        self.data[(c * h + y) * w + x] = v;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled_assign(&mut self, other: &Tensor, s: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    /// Channel slice `[start, start + count)` of a rank-3 tensor.
    pub fn channels(&self, start: usize, count: usize) -> Tensor {
        let (c, h, w) = self.dims3();
        assert!(start + count <= c);
        let plane = h * w;
        Tensor {
            shape: vec![count, h, w],
            data: self.data[start * plane..(start + count) * plane].to_vec(),
        }
    }

    /// Concatenate rank-3 tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let (_, h, w) = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?
            .dims3();
        let mut data = Vec::new();
        let mut c = 0;
        for p in parts {
            let (pc, ph, pw) = p.dims3();
            if (ph, pw) != (h, w) {
                return Err(Error::shape(format!(
                    "concat spatial mismatch: {h}x{w} vs {ph}x{pw}"
                )));
            }
            c += pc;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            shape: vec![c, h, w],
            data,
        })
    }
}

/// Source coordinate mapping for bilinear resizing with half-pixel centers.
fn bilinear_axis(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = if i0 == in_len - 1 { 0.0 } else { src - i0 as f64 };
            (i0, i1, frac)
        })
        .collect()
}

/// Bilinear resize of a rank-3 tensor (half-pixel centers, edges clamped).
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = t.dims3();
    if (out_h, out_w) == (h, w) {
        return t.clone();
    }
    let ys = bilinear_axis(out_h, h);
    let xs = bilinear_axis(out_w, w);
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    let src = t.data();
    let dst = out.data_mut();
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            let row = &mut dst[(ci * out_h + oy) * out_w..(ci * out_h + oy + 1) * out_w];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                row[ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Adjoint of [`resize_bilinear`]: scatters an output gradient back to the input grid.
pub fn resize_bilinear_backward(grad: &Tensor, in_h: usize, in_w: usize) -> Tensor {
    let (c, out_h, out_w) = grad.dims3();
    if (out_h, out_w) == (in_h, in_w) {
        return grad.clone();
    }
    let ys = bilinear_axis(out_h, in_h);
    let xs = bilinear_axis(out_w, in_w);
    let mut out = Tensor::zeros(&[c, in_h, in_w]);
    let g = grad.data();
    let dst = out.data_mut();
    for ci in 0..c {
        let base = ci * in_h * in_w;
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v = g[(ci * out_h + oy) * out_w + ox];
                dst[base + y0 * in_w + x0] += v * (1.0 - fy) * (1.0 - fx);
                dst[base + y0 * in_w + x1] += v * (1.0 - fy) * fx;
                dst[base + y1 * in_w + x0] += v * fy * (1.0 - fx);
                dst[base + y1 * in_w + x1] += v * fy * fx;
            }
        }
    }
    out
}
