//! Location-encoded spatial attention.
//!
//! The input is reduced to `A`, projected to `B`, `C` and `D`, and the
//! location grid `L` is added to one of them (the injection point). With
//! `L` on `B`, the attention map is
//!
//! ```text
//! s[j][i] = exp((B_i + L_i) · C_j) / Σ_i exp((B_i + L_i) · C_j)
//! ```
//!
//! so each row `j` of `S` is a distribution over source positions `i`. The
//! output mixes attended values with the reduced input,
//! `E_j = α · Σ_i s[j][i] · D_i + (1 − α) · A_j`, and `α` starts at zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::{self, ConvSpec};
use crate::layers::Conv;
use crate::locenc::{self, LocationEncoding, DEFAULT_BASE, DEFAULT_JITTER};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Which projected feature receives the location grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum InjectionPoint {
    A,
    #[default]
    B,
    C,
    D,
    #[serde(rename = "none")]
    None,
}

impl InjectionPoint {
    pub const ALL: [InjectionPoint; 5] = [
        InjectionPoint::None,
        InjectionPoint::A,
        InjectionPoint::B,
        InjectionPoint::C,
        InjectionPoint::D,
    ];

    pub fn label(self) -> &'static str {
        match self {
            InjectionPoint::A => "A",
            InjectionPoint::B => "B",
            InjectionPoint::C => "C",
            InjectionPoint::D => "D",
            InjectionPoint::None => "none",
        }
    }
}

impl std::str::FromStr for InjectionPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(InjectionPoint::A),
            "b" => Ok(InjectionPoint::B),
            "c" => Ok(InjectionPoint::C),
            "d" => Ok(InjectionPoint::D),
            "none" => Ok(InjectionPoint::None),
            other => Err(Error::config(format!("unknown injection point `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub in_channels: usize,
    pub proj_channels: usize,
    pub injection_point: InjectionPoint,
    pub alpha_init: f64,
    pub beta_init: f64,
    /// When false, `beta` stays at `beta_init`.
    pub beta_learnable: bool,
    /// Append normalised (y, x) coordinate channels to `A` before projecting.
    pub coordconv: bool,
    pub frequency: f64,
    pub base: f64,
    pub jitter_amplitude: f64,
}

impl AttentionConfig {
    pub fn new(in_channels: usize, proj_channels: usize) -> Self {
        Self {
            in_channels,
            proj_channels,
            injection_point: InjectionPoint::B,
            alpha_init: 0.0,
            beta_init: 0.0,
            beta_learnable: true,
            coordconv: false,
            frequency: 1.0,
            base: DEFAULT_BASE,
            jitter_amplitude: DEFAULT_JITTER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.proj_channels == 0 {
            return Err(Error::config("attention channels must be positive"));
        }
        if !(self.frequency > 0.0) || !(self.base > 1.0) || !(self.jitter_amplitude >= 0.0) {
            return Err(Error::config(format!(
                "invalid location encoding parameters: frequency {}, base {}, jitter {}",
                self.frequency, self.base, self.jitter_amplitude
            )));
        }
        Ok(())
    }
}

/// Where the location grid comes from during a forward pass.
#[derive(Clone, Copy, Debug, Default)]
pub enum LocationSource<'a> {
    /// Sinusoidal axis codes blended by the module's own `beta` parameter.
    #[default]
    Learned,
    /// A caller-supplied grid, resized to the feature map.
    Fixed(&'a LocationEncoding),
    /// An all-zero grid.
    Zero,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AttentionRun<'a> {
    pub training: bool,
    pub jitter_seed: u64,
    pub location: LocationSource<'a>,
    /// Replace the output by `A` (the module reduced to its residual path).
    pub bypass: bool,
}

/// Graph handles for every intermediate of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub a: Var,
    pub b: Var,
    pub c: Var,
    pub d: Var,
    pub l: Option<Var>,
    pub s: Option<Var>,
    pub e: Var,
}

/// Materialised intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct AttentionState {
    pub a: Tensor,
    pub b: Tensor,
    pub c_feat: Tensor,
    pub d: Tensor,
    pub l: Option<Tensor>,
    /// `[N, N]`, row `j` is the distribution over source positions `i`.
    pub s: Tensor,
    pub alpha: f64,
    pub e: Tensor,
}

#[derive(Clone, Debug)]
pub struct Projections {
    pub a: Tensor,
    pub b: Tensor,
    pub c_feat: Tensor,
    pub d: Tensor,
}

#[derive(Clone, Debug)]
pub struct LeaAttention {
    pub config: AttentionConfig,
    pub conv_a: Conv,
    pub conv_b: Conv,
    pub conv_c: Conv,
    pub conv_d: Conv,
    pub alpha: ParamId,
    pub beta: ParamId,
}

impl LeaAttention {
    pub fn new(config: AttentionConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let c = config.proj_channels;
        let proj_in = if config.coordconv { c + 2 } else { c };
        let g = ParamGroup::Head;
        let one = ConvSpec::same(1, 1);
        let conv_a = Conv::new(store, &format!("{prefix}.reduce"), config.in_channels, c, 1, one, g, rng);
        let conv_b = Conv::new(store, &format!("{prefix}.query"), proj_in, c, 1, one, g, rng);
        let conv_c = Conv::new(store, &format!("{prefix}.key"), proj_in, c, 1, one, g, rng);
        let conv_d = Conv::new(store, &format!("{prefix}.value"), proj_in, c, 1, one, g, rng);
        let alpha = store.add(format!("{prefix}.alpha"), Tensor::scalar(config.alpha_init), g);
        let beta = store.add(format!("{prefix}.beta"), Tensor::scalar(config.beta_init), g);
        store.get_mut(beta).trainable = config.beta_learnable;
        Ok(Self {
            config,
            conv_a,
            conv_b,
            conv_c,
            conv_d,
            alpha,
            beta,
        })
    }

    pub fn alpha(&self, store: &ParamStore) -> f64 {
        store.value(self.alpha).item()
    }

    pub fn beta(&self, store: &ParamStore) -> f64 {
        store.value(self.beta).item()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().len() != 3 {
            return Err(Error::shape(format!("attention input must be [C,H,W], got {:?}", input.shape())));
        }
        let (c, h, w) = input.dims3();
        if c != self.config.in_channels {
            return Err(Error::shape(format!(
                "attention expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("attention input has an empty spatial extent"));
        }
        check_finite("input", input)
    }

    fn location_var(&self, g: &mut Graph, h: usize, w: usize, run: &AttentionRun) -> Result<Var> {
        let c = self.config.proj_channels;
        let l = match run.location {
            LocationSource::Learned => {
                let pe_h = locenc::make_axis_encoding(w, c, self.config.base, self.config.frequency)?;
                let pe_v = locenc::make_axis_encoding(h, c, self.config.base, self.config.frequency)?;
                // beta = 1 and beta = 0 give the pure per-axis broadcasts
                let h_grid = locenc::blend(&pe_h, &pe_v, 1.0)?.values;
                let v_grid = locenc::blend(&pe_h, &pe_v, 0.0)?.values;
                let h_var = g.constant(h_grid);
                let v_var = g.constant(v_grid);
                let beta = g.param(self.beta);
                let one_minus = g.one_minus(beta);
                let hs = g.scale(h_var, beta);
                let vs = g.scale(v_var, one_minus);
                g.add(hs, vs)
            }
            LocationSource::Fixed(enc) => {
                let (ec, _, _) = enc.dims();
                if ec != c {
                    return Err(Error::shape(format!(
                        "location encoding has {ec} channels, attention projects to {c}"
                    )));
                }
                g.constant(locenc::resize_to(enc, h, w)?.values)
            }
            LocationSource::Zero => g.constant(Tensor::zeros(&[c, h, w])),
        };
        if run.training && self.config.jitter_amplitude > 0.0 {
            let noise = locenc::jitter_noise(c, h, w, self.config.jitter_amplitude, run.jitter_seed)?;
            let n = g.constant(noise);
            return Ok(g.add(l, n));
        }
        Ok(l)
    }

    /// Append the attention computation for feature node `x` to the graph.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, run: &AttentionRun) -> Result<AttentionVars> {
        let a = self.conv_a.forward(g, x);
        let (_, h, w) = g.value(a).dims3();
        let inj = if self.config.coordconv {
            InjectionPoint::None
        } else {
            self.config.injection_point
        };
        let l = match inj {
            InjectionPoint::None => None,
            _ => Some(self.location_var(g, h, w, run)?),
        };
        let a_used = match (inj, l) {
            (InjectionPoint::A, Some(l)) => g.add(a, l),
            _ => a,
        };
        let proj_in = if self.config.coordconv {
            let coords = g.constant(coordinate_channels(h, w));
            g.concat(&[a_used, coords])
        } else {
            a_used
        };
        let b = self.conv_b.forward(g, proj_in);
        let c = self.conv_c.forward(g, proj_in);
        let d = self.conv_d.forward(g, proj_in);
        if run.bypass {
            return Ok(AttentionVars { a: a_used, b, c, d, l, s: None, e: a_used });
        }
        let q = match (inj, l) {
            (InjectionPoint::B, Some(l)) => g.add(b, l),
            _ => b,
        };
        let k = match (inj, l) {
            (InjectionPoint::C, Some(l)) => g.add(c, l),
            _ => c,
        };
        let v = match (inj, l) {
            (InjectionPoint::D, Some(l)) => g.add(d, l),
            _ => d,
        };
        let energy = g.attn_energy(q, k);
        let s = g.softmax_rows(energy);
        let attended = g.attn_apply(s, v);
        let alpha = g.param(self.alpha);
        let keep = g.one_minus(alpha);
        let att_part = g.scale(attended, alpha);
        let res_part = g.scale(a_used, keep);
        let e = g.add(att_part, res_part);
        Ok(AttentionVars { a: a_used, b, c, d, l, s: Some(s), e })
    }

    /// The four raw projections (no location injection).
    pub fn project(&self, store: &ParamStore, input: &Tensor) -> Result<Projections> {
        self.check_input(input)?;
        let mut g = Graph::new(store);
        let x = g.constant(input.clone());
        let a = self.conv_a.forward(&mut g, x);
        let proj_in = if self.config.coordconv {
            let (_, h, w) = g.value(a).dims3();
            let coords = g.constant(coordinate_channels(h, w));
            g.concat(&[a, coords])
        } else {
            a
        };
        let b = self.conv_b.forward(&mut g, proj_in);
        let c = self.conv_c.forward(&mut g, proj_in);
        let d = self.conv_d.forward(&mut g, proj_in);
        Ok(Projections {
            a: g.value(a).clone(),
            b: g.value(b).clone(),
            c_feat: g.value(c).clone(),
            d: g.value(d).clone(),
        })
    }

    /// Full forward pass on a plain tensor, returning every intermediate.
    pub fn forward(&self, store: &ParamStore, input: &Tensor, run: &AttentionRun) -> Result<AttentionState> {
        self.check_input(input)?;
        let mut g = Graph::new(store);
        let x = g.constant(input.clone());
        let vars = self.forward_graph(&mut g, x, run)?;
        let (_, h, w) = g.value(vars.a).dims3();
        let n = h * w;
        let s = match vars.s {
            Some(s) => g.value(s).clone().reshape(&[n, n])?,
            None => identity(n),
        };
        let e = g.value(vars.e).clone();
        check_finite("output", &e)?;
        Ok(AttentionState {
            a: g.value(vars.a).clone(),
            b: g.value(vars.b).clone(),
            c_feat: g.value(vars.c).clone(),
            d: g.value(vars.d).clone(),
            l: vars.l.map(|l| g.value(l).clone()),
            s,
            alpha: self.alpha(store),
            e,
        })
    }
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.data_mut()[i * n + i] = 1.0;
    }
    t
}

/// Two channels holding row and column coordinates scaled to `[-1, 1]`.
pub fn coordinate_channels(h: usize, w: usize) -> Tensor {
    let norm = |p: usize, n: usize| if n > 1 { 2.0 * p as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    Tensor::from_fn3(2, h, w, |c, y, x| if c == 0 { norm(y, h) } else { norm(x, w) })
}

fn check_finite(name: &str, t: &Tensor) -> Result<()> {
    match t.first_non_finite() {
        Some(index) => Err(Error::NonFinite {
            tensor: name.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Spatial attention map `[N, N]` from query features `b`, key features
/// `c_feat` and location grid `l`. `l` takes part only when the injection
/// point is `B`; other injection points add it upstream of this call.
pub fn attention_map(b: &Tensor, c_feat: &Tensor, l: &Tensor, injection_point: InjectionPoint) -> Result<Tensor> {
    b.check_same_shape(c_feat)?;
    b.check_same_shape(l)?;
    if b.shape().len() != 3 {
        return Err(Error::shape(format!("expected [C,H,W], got {:?}", b.shape())));
    }
    check_finite("B", b)?;
    check_finite("C", c_feat)?;
    check_finite("L", l)?;
    let q = if injection_point == InjectionPoint::B {
        b.add(l)?
    } else {
        b.clone()
    };
    let (_, h, w) = q.dims3();
    let n = h * w;
    let s = kernels::softmax_rows(&kernels::attention_energy(&q, c_feat));
    if let Some(index) = s.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: "S".into(),
            index,
        });
    }
    s.reshape(&[n, n])
}

/// `E = α · (S applied to D) + (1 − α) · A`.
pub fn mix(a: &Tensor, d: &Tensor, s: &Tensor, alpha: f64) -> Result<Tensor> {
    a.check_same_shape(d)?;
    let (_, h, w) = a.dims3();
    let n = h * w;
    if s.shape() != [n, n] {
        return Err(Error::shape(format!(
            "attention map must be [{n}, {n}], got {:?}",
            s.shape()
        )));
    }
    let s3 = s.clone().reshape(&[1, n, n])?;
    let attended = kernels::attention_apply(&s3, d);
    attended.zip_map(a, |att, av| alpha * att + (1.0 - alpha) * av)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn module(in_c: usize, c: usize, inj: InjectionPoint, seed: u64) -> (LeaAttention, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = AttentionConfig::new(in_c, c);
        cfg.injection_point = inj;
        let m = LeaAttention::new(cfg, &mut store, "att", &mut rng).unwrap();
        (m, store)
    }

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn3(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn single_position_map_is_one() {
        let b = random(3, 1, 1, 1);
        let s = attention_map(&b, &random(3, 1, 1, 2), &random(3, 1, 1, 3), InjectionPoint::B).unwrap();
        assert_eq!(s.data(), &[1.0]);
    }

    #[test]
    fn zero_query_gives_uniform_rows() {
        let z = Tensor::zeros(&[2, 2, 3]);
        let s = attention_map(&z, &random(2, 2, 3, 4), &z, InjectionPoint::B).unwrap();
        assert!(s.data().iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn two_logit_example() {
        // B + L = [0, 1] along the width, C = [1, 1]: every row is softmax([0, 1])
        let b = Tensor::from_vec(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        let c = Tensor::from_vec(&[1, 1, 2], vec![1.0, 1.0]).unwrap();
        let s = attention_map(&b, &c, &Tensor::zeros(&[1, 1, 2]), InjectionPoint::B).unwrap();
        // 1 / (1 + e) and e / (1 + e), evaluated independently
        let lo = 0.268_941_421_369_995_1;
        let hi = 0.731_058_578_630_004_9;
        for row in s.data().chunks(2) {
            assert!((row[0] - lo).abs() < 1e-12 && (row[1] - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn location_only_used_for_b_injection() {
        let b = random(2, 2, 2, 5);
        let c = random(2, 2, 2, 6);
        let l = random(2, 2, 2, 7);
        let plain = attention_map(&b, &c, &Tensor::zeros(&[2, 2, 2]), InjectionPoint::B).unwrap();
        assert_eq!(attention_map(&b, &c, &l, InjectionPoint::C).unwrap(), plain);
        assert_ne!(attention_map(&b, &c, &l, InjectionPoint::B).unwrap(), plain);
    }

    #[test]
    fn non_finite_reported_with_position() {
        let mut b = random(2, 2, 2, 5);
        b.data_mut()[3] = f64::NAN;
        let err = attention_map(&b, &random(2, 2, 2, 6), &Tensor::zeros(&[2, 2, 2]), InjectionPoint::B).unwrap_err();
        match err {
            Error::NonFinite { tensor, index } => {
                assert_eq!(tensor, "B");
                assert_eq!(index, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mix_examples() {
        let a = random(2, 2, 2, 1);
        let d = random(2, 2, 2, 2);
        let s = attention_map(&random(2, 2, 2, 3), &random(2, 2, 2, 4), &Tensor::zeros(&[2, 2, 2]), InjectionPoint::B).unwrap();
        assert_eq!(mix(&a, &d, &s, 0.0).unwrap(), a);
        assert_eq!(mix(&a, &d, &identity(4), 1.0).unwrap(), d);
        let a1 = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let d1 = Tensor::from_vec(&[1, 1, 1], vec![4.0]).unwrap();
        assert_eq!(mix(&a1, &d1, &identity(1), 0.5).unwrap().data(), &[3.0]);
        assert!(mix(&a, &d, &identity(3), 0.5).is_err());
    }

    #[test]
    fn identity_projections_copy_input() {
        let (m, mut store) = module(3, 3, InjectionPoint::B, 0);
        for conv in [&m.conv_a, &m.conv_b, &m.conv_c, &m.conv_d] {
            conv.set_identity(&mut store);
        }
        let x = random(3, 2, 4, 9);
        let p = m.project(&store, &x).unwrap();
        assert_eq!(p.a, x);
        assert_eq!(p.b, x);
        assert_eq!(p.c_feat, x);
        assert_eq!(p.d, x);
    }

    #[test]
    fn project_shapes_and_errors() {
        let (m, store) = module(5, 4, InjectionPoint::B, 0);
        let p = m.project(&store, &random(5, 1, 1, 1)).unwrap();
        assert_eq!(p.a.shape(), &[4, 1, 1]);
        assert_eq!(p.d.shape(), &[4, 1, 1]);
        assert!(matches!(m.project(&store, &random(3, 2, 2, 1)), Err(Error::Shape(_))));
        let x = random(5, 3, 3, 4);
        let p1 = m.project(&store, &x).unwrap();
        let p2 = m.project(&store, &x).unwrap();
        assert_eq!(p1.b, p2.b);
    }

    #[test]
    fn alpha_zero_forward_is_a() {
        let (m, store) = module(4, 4, InjectionPoint::B, 3);
        let x = random(4, 3, 3, 11);
        let enc = crate::locenc::EncodingConfig::new(4, 3, 3).build(0.7).unwrap();
        for loc in [LocationSource::Learned, LocationSource::Fixed(&enc), LocationSource::Zero] {
            let run = AttentionRun { location: loc, ..Default::default() };
            let st = m.forward(&store, &x, &run).unwrap();
            assert!(st.e.max_abs_diff(&st.a) <= 1e-12);
        }
    }

    #[test]
    fn fixed_encoding_channel_mismatch() {
        let (m, store) = module(4, 4, InjectionPoint::B, 3);
        let enc = crate::locenc::EncodingConfig::new(2, 3, 3).build(0.0).unwrap();
        let run = AttentionRun { location: LocationSource::Fixed(&enc), ..Default::default() };
        assert!(matches!(m.forward(&store, &random(4, 3, 3, 1), &run), Err(Error::Shape(_))));
    }

    #[test]
    fn coordinate_channels_span_unit_interval() {
        let c = coordinate_channels(3, 5);
        assert_eq!(c.at3(0, 0, 0), -1.0);
        assert_eq!(c.at3(0, 2, 0), 1.0);
        assert_eq!(c.at3(1, 1, 4), 1.0);
        assert_eq!(c.at3(1, 1, 2), 0.0);
    }
}
