//! Sinusoidal location encoding over feature-map rows and columns.
//!
//! Each axis gets its own code: channel `2i` holds `sin(f·p / base^(2i/C))`
//! and channel `2i+1` the matching cosine, where `p` is the row (or column)
//! index. The two axis codes are broadcast over the other axis and blended by
//! a weight `beta`: `L = beta·PE_h + (1 - beta)·PE_v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

pub const DEFAULT_BASE: f64 = 100.0;
pub const DEFAULT_JITTER: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub channels: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    /// Ratio between image size and grid size; normally the backbone output stride.
    pub reduction_ratio: usize,
    pub frequency: f64,
    pub jitter_amplitude: f64,
    pub base: f64,
}

impl EncodingConfig {
    pub fn new(channels: usize, grid_height: usize, grid_width: usize) -> Self {
        Self {
            channels,
            grid_height,
            grid_width,
            reduction_ratio: 1,
            frequency: 1.0,
            jitter_amplitude: DEFAULT_JITTER,
            base: DEFAULT_BASE,
        }
    }

    /// Grid sized for an `image_height × image_width` input at reduction `r`.
    pub fn for_image(channels: usize, image_height: usize, image_width: usize, r: usize) -> Self {
        Self {
            reduction_ratio: r,
            ..Self::new(channels, image_height.div_ceil(r.max(1)), image_width.div_ceil(r.max(1)))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.grid_height == 0 || self.grid_width == 0 || self.reduction_ratio == 0 {
            return Err(Error::config("encoding dimensions must be positive"));
        }
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return Err(Error::config(format!("frequency must be positive, got {}", self.frequency)));
        }
        if !(self.jitter_amplitude >= 0.0) {
            return Err(Error::config(format!(
                "jitter amplitude must be non-negative, got {}",
                self.jitter_amplitude
            )));
        }
        if !(self.base > 1.0) {
            return Err(Error::config(format!("base must exceed 1, got {}", self.base)));
        }
        Ok(())
    }

    /// Build the blended grid for this configuration.
    pub fn build(&self, beta: f64) -> Result<LocationEncoding> {
        self.validate()?;
        let pe_h = make_axis_encoding(self.grid_width, self.channels, self.base, self.frequency)?;
        let pe_v = make_axis_encoding(self.grid_height, self.channels, self.base, self.frequency)?;
        blend(&pe_h, &pe_v, beta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocationEncoding {
    /// `[C, grid_height, grid_width]`
    pub values: Tensor,
    pub beta: f64,
}

impl LocationEncoding {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dims3()
    }
}

/// Sinusoidal code for one axis, shape `[channels, axis_length]`.
pub fn make_axis_encoding(axis_length: usize, channels: usize, base: f64, frequency: f64) -> Result<Tensor> {
    if axis_length == 0 || channels == 0 {
        return Err(Error::config(format!(
            "axis encoding needs positive dimensions, got length {axis_length}, channels {channels}"
        )));
    }
    if !(base > 1.0) || !(frequency > 0.0) {
        return Err(Error::config(format!(
            "invalid encoding base {base} or frequency {frequency}"
        )));
    }
    let mut data = Vec::with_capacity(channels * axis_length);
    for c in 0..channels {
        let pair = (c / 2) as f64;
        let denom = base.powf(2.0 * pair / channels as f64);
        for p in 0..axis_length {
            let arg = frequency * p as f64 / denom;
            // An unpaired trailing channel (odd C) lands on the even/sin branch.
            data.push(if c % 2 == 0 { arg.sin() } else { arg.cos() });
        }
    }
    Tensor::from_vec(&[channels, axis_length], data)
}

/// Broadcast the width code over rows and the height code over columns, then
/// mix them: `beta·PE_h + (1 - beta)·PE_v`.
pub fn blend(pe_h: &Tensor, pe_v: &Tensor, beta: f64) -> Result<LocationEncoding> {
    let (ch, width) = axis_dims(pe_h)?;
    let (cv, height) = axis_dims(pe_v)?;
    if ch != cv {
        return Err(Error::shape(format!(
            "axis encodings disagree on channels: {ch} vs {cv}"
        )));
    }
    let h = pe_h.data();
    let v = pe_v.data();
    let values = Tensor::from_fn3(ch, height, width, |c, row, col| {
        beta * h[c * width + col] + (1.0 - beta) * v[c * height + row]
    });
    Ok(LocationEncoding { values, beta })
}

fn axis_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [c, n] => Ok((*c, *n)),
        other => Err(Error::shape(format!("axis encoding must be rank 2, got {other:?}"))),
    }
}

/// Uniform noise in `[-amplitude, amplitude]` for every entry of a `[C,H,W]` grid.
pub fn jitter_noise(c: usize, h: usize, w: usize, amplitude: f64, seed: u64) -> Result<Tensor> {
    if !(amplitude >= 0.0) {
        return Err(Error::config(format!("jitter amplitude must be non-negative, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(Tensor::zeros(&[c, h, w]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Tensor::from_fn3(c, h, w, |_, _, _| rng.gen_range(-amplitude..=amplitude)))
}

pub fn apply_jitter(enc: &LocationEncoding, amplitude: f64, seed: u64) -> Result<LocationEncoding> {
    let (c, h, w) = enc.dims();
    let noise = jitter_noise(c, h, w, amplitude, seed)?;
    if amplitude == 0.0 {
        return Ok(enc.clone());
    }
    Ok(LocationEncoding {
        values: enc.values.add(&noise)?,
        beta: enc.beta,
    })
}

/// Match the grid to a feature map's spatial size (bilinear).
pub fn resize_to(enc: &LocationEncoding, target_height: usize, target_width: usize) -> Result<LocationEncoding> {
    if target_height == 0 || target_width == 0 {
        return Err(Error::config("resize target must be at least 1x1"));
    }
    Ok(LocationEncoding {
        values: tensor::resize_bilinear(&enc.values, target_height, target_width),
        beta: enc.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_encoding_examples() {
        let pe = make_axis_encoding(8, 4, 100.0, 1.0).unwrap();
        assert_eq!(pe.shape(), &[4, 8]);
        assert_eq!(pe.data()[0], 0.0); // channel 0, v = 0
        assert_eq!(pe.data()[8], 1.0); // channel 1, v = 0
        // sin(1), from a scalar calculator
        assert!((pe.data()[1] - 0.841_470_984_807_896_5).abs() < 1e-15);
        // channel 2 pairs with exponent 2/4: sin(1 / 100^0.5) = sin(0.1)
        assert!((pe.data()[2 * 8 + 1] - 0.099_833_416_646_828_15).abs() < 1e-15);
    }

    #[test]
    fn odd_channel_count_uses_sin_for_last() {
        let pe = make_axis_encoding(4, 3, 100.0, 1.0).unwrap();
        // channel 2 is unpaired: sin(v / 100^(2/3))
        let expected = (3.0 / 100f64.powf(2.0 / 3.0)).sin();
        assert!((pe.data()[2 * 4 + 3] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(make_axis_encoding(0, 4, 100.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_axis_encoding(4, 0, 100.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn blend_endpoints_reduce_to_single_axis() {
        let pe_h = make_axis_encoding(5, 4, 100.0, 1.0).unwrap();
        let pe_v = make_axis_encoding(3, 4, 100.0, 1.0).unwrap();
        let l0 = blend(&pe_h, &pe_v, 0.0).unwrap();
        let l1 = blend(&pe_h, &pe_v, 1.0).unwrap();
        assert_eq!(l0.dims(), (4, 3, 5));
        for c in 0..4 {
            for row in 0..3 {
                for col in 0..5 {
                    assert_eq!(l0.values.at3(c, row, col), pe_v.data()[c * 3 + row]);
                    assert_eq!(l1.values.at3(c, row, col), pe_h.data()[c * 5 + col]);
                }
            }
        }
    }

    #[test]
    fn blend_half_at_origin() {
        let pe = make_axis_encoding(1, 2, 100.0, 1.0).unwrap();
        let l = blend(&pe, &pe, 0.5).unwrap();
        assert_eq!(l.values.data(), &[0.0, 1.0]);
    }

    #[test]
    fn blend_channel_mismatch() {
        let a = make_axis_encoding(2, 4, 100.0, 1.0).unwrap();
        let b = make_axis_encoding(2, 2, 100.0, 1.0).unwrap();
        assert!(matches!(blend(&a, &b, 0.3), Err(Error::Shape(_))));
    }

    #[test]
    fn jitter_contract() {
        let enc = EncodingConfig::new(4, 10, 25).build(0.3).unwrap();
        assert_eq!(apply_jitter(&enc, 0.0, 7).unwrap(), enc);
        let a = apply_jitter(&enc, 0.01, 7).unwrap();
        let b = apply_jitter(&enc, 0.01, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, apply_jitter(&enc, 0.01, 8).unwrap());
        // 4 * 10 * 25 = 1000 sampled entries
        assert!(a.values.max_abs_diff(&enc.values) <= 0.01);
        assert!(a.values.max_abs_diff(&enc.values) > 0.005);
        assert!(matches!(apply_jitter(&enc, -0.1, 1), Err(Error::Config(_))));
    }

    #[test]
    fn resize_cases() {
        let enc = EncodingConfig::new(3, 4, 6).build(0.4).unwrap();
        assert_eq!(resize_to(&enc, 4, 6).unwrap(), enc);

        let small = LocationEncoding {
            values: Tensor::from_vec(&[1, 2, 2], vec![0.1, 0.5, -0.3, 0.9]).unwrap(),
            beta: 0.0,
        };
        // half-pixel centres: the single output sample sits at (0.5, 0.5) → weight 1/4 each
        let r = resize_to(&small, 1, 1).unwrap();
        assert!((r.values.item() - 0.3).abs() < 1e-12);

        let constant = LocationEncoding {
            values: Tensor::full(&[2, 3, 5], 0.7),
            beta: 0.0,
        };
        let r = resize_to(&constant, 7, 2).unwrap();
        assert!(r.values.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(resize_to(&constant, 0, 2).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = EncodingConfig::new(4, 2, 2);
        assert!(c.validate().is_ok());
        c.base = 1.0;
        assert!(c.validate().is_err());
        c.base = 100.0;
        c.frequency = 0.0;
        assert!(c.validate().is_err());
        c.frequency = 1.0;
        c.jitter_amplitude = -1.0;
        assert!(c.validate().is_err());
        assert_eq!(EncodingConfig::for_image(8, 33, 64, 16).grid_height, 3);
    }
}
