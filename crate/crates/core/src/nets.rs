//! Desk-scale residual encoder/decoder generator and PatchGAN
//! discriminator, plus their parameter store and checkpoint format.
//!
//! Tensors live in "ink space": pixel `v ∈ [0, 1]` maps to `1 − 2v`, so ink
//! is +1 and background −1.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{Pad2d, Real, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

pub const NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;

pub fn to_ink_space(v: f64) -> f64 {
    1.0 - 2.0 * v
}

pub fn from_ink_space(t: f64) -> f64 {
    ((1.0 - t) / 2.0).clamp(0.0, 1.0)
}

/// Stacks square patches into an `[N, 1, p, p]` ink-space tensor.
pub fn patches_to_tensor<T: Real>(patches: &[&GrayImage]) -> Result<Tensor<T>> {
    let Some(first) = patches.first() else {
        return Err(Error::Dimension("empty patch batch".into()));
    };
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(patches.len() * w * h);
    for p in patches {
        if (p.width(), p.height()) != (w, h) {
            return Err(Error::Dimension("patch batch has mixed sizes".into()));
        }
        data.extend(p.pixels().iter().map(|&v| T::lit(to_ink_space(v))));
    }
    Tensor::new(vec![patches.len(), 1, h, w], data)
}

/// Splits an `[N, 1, h, w]` ink-space tensor back into images.
pub fn tensor_to_patches<T: Real>(t: &Tensor<T>) -> Result<Vec<GrayImage>> {
    let [n, c, h, w] = t.dims4()?;
    if c != 1 {
        return Err(Error::Dimension(format!("expected one channel, got {c}")));
    }
    (0..n)
        .map(|i| {
            let px = t.data()[i * h * w..(i + 1) * h * w]
                .iter()
                .map(|v| from_ink_space(v.to_f64().unwrap_or(0.0)))
                .collect();
            GrayImage::new(w, h, px)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub base_width: usize,
    pub res_blocks: usize,
    pub down_levels: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            base_width: 16,
            res_blocks: 3,
            down_levels: 2,
        }
    }
}

impl GeneratorSpec {
    /// Input sides must be divisible by this.
    pub fn side_multiple(&self) -> usize {
        1 << self.down_levels
    }

    fn slot_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let w = self.base_width;
        let mut s = vec![("g.stem.w".to_string(), vec![w, 1, 7, 7])];
        for i in 0..self.down_levels {
            s.push((format!("g.down{i}.w"), vec![w << (i + 1), w << i, 3, 3]));
        }
        let deep = w << self.down_levels;
        for j in 0..self.res_blocks {
            s.push((format!("g.res{j}.a.w"), vec![deep, deep, 3, 3]));
            s.push((format!("g.res{j}.b.w"), vec![deep, deep, 3, 3]));
        }
        for i in 0..self.down_levels {
            let cin = deep >> i;
            s.push((format!("g.up{i}.w"), vec![cin, cin / 2, 4, 4]));
        }
        s.push(("g.head.w".to_string(), vec![1, w, 7, 7]));
        s.push(("g.head.b".to_string(), vec![1]));
        s
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.base_width, self.res_blocks, self.down_levels
        )
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    /// `base_width,res_blocks,down_levels`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad generator spec {s:?}")))?;
        match v.as_slice() {
            &[base_width, res_blocks, down_levels] if base_width > 0 => Ok(GeneratorSpec {
                base_width,
                res_blocks,
                down_levels,
            }),
            _ => Err(Error::Config(format!(
                "generator spec needs width,blocks,levels: {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscriminatorSpec {
    /// Channel widths of the stride-2 layers.
    pub widths: Vec<usize>,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            widths: vec![16, 32, 64],
        }
    }
}

impl DiscriminatorSpec {
    /// Side of the score map for a `p × p` input.
    pub fn score_side(&self, p: usize) -> Option<usize> {
        let mut n = p;
        for _ in &self.widths {
            n = crate::tensor::conv_out_dim(n, 1, 1, 4, 2)?;
        }
        n = crate::tensor::conv_out_dim(n, 1, 1, 4, 1)?;
        crate::tensor::conv_out_dim(n, 1, 1, 4, 1)
    }

    fn slot_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut s = Vec::new();
        let mut cin = 1;
        for (i, &w) in self.widths.iter().enumerate() {
            s.push((format!("d.l{i}.w"), vec![w, cin, 4, 4]));
            if i == 0 {
                s.push(("d.l0.b".to_string(), vec![w]));
            }
            cin = w;
        }
        s.push(("d.mid.w".to_string(), vec![cin, cin, 4, 4]));
        s.push(("d.out.w".to_string(), vec![1, cin, 4, 4]));
        s.push(("d.out.b".to_string(), vec![1]));
        s
    }
}

impl fmt::Display for DiscriminatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "{}", w.join(","))
    }
}

impl FromStr for DiscriminatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let widths: Vec<usize> = s
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad discriminator spec {s:?}")))?;
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Config(format!("bad discriminator spec {s:?}")));
        }
        Ok(DiscriminatorSpec { widths })
    }
}

/// Named parameter slots in a fixed order. Shapes never change after
/// creation.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    slots: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ModelParams<T> {
    fn from_shapes(shapes: Vec<(String, Vec<usize>)>, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let slots = shapes
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".b") {
                    Tensor::zeros(&shape)
                } else {
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
                    Tensor::new(shape, data).expect("shape product")
                };
                (name, t)
            })
            .collect();
        ModelParams { slots }
    }

    pub fn slots(&self) -> &[(String, Tensor<T>)] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.slots.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.slots.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.slots
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn num_values(&self) -> usize {
        self.slots.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            slots: self
                .slots
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }

    /// Records every slot as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            vars: self
                .slots
                .iter()
                .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
                .collect(),
        }
    }

    /// Replaces every slot value by `f(name, value)`; used for stubs and
    /// tests.
    pub fn map(&mut self, mut f: impl FnMut(&str, &mut Tensor<T>)) {
        for (n, t) in &mut self.slots {
            f(n, t);
        }
    }
}

/// Tape variables for a bound [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    /// Binds existing tape variables to slot names.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Contract(format!("missing parameter slot {name}")))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Generator and discriminator parameters with the specs and seed they
/// were initialized from.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub generator_spec: GeneratorSpec,
    pub discriminator_spec: DiscriminatorSpec,
    pub seed: u64,
    pub generator: ModelParams<f32>,
    pub discriminator: ModelParams<f32>,
}

/// Weights ~ N(0, 0.02), biases 0. The generator and discriminator use
/// separate streams of one seeded generator.
pub fn init_params(g: &GeneratorSpec, d: &DiscriminatorSpec, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = ModelParams::from_shapes(g.slot_shapes(), &mut rng);
    rng.set_stream(1);
    let discriminator = ModelParams::from_shapes(d.slot_shapes(), &mut rng);
    Model {
        generator_spec: *g,
        discriminator_spec: d.clone(),
        seed,
        generator,
        discriminator,
    }
}

fn norm_relu<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let n = tape.instance_norm(x, T::lit(NORM_EPS))?;
    tape.relu(n)
}

/// `[N, 1, p, p]` ink-space hybrid to `[N, 1, p, p]` output in `(−1, 1)`.
pub fn generator_forward<T: Real>(
    tape: &mut Tape<T>,
    spec: &GeneratorSpec,
    params: &Bound,
    x: Var,
) -> Result<Var> {
    let [_, c, h, w] = tape.value(x).dims4()?;
    let m = spec.side_multiple();
    if c != 1 || h % m != 0 || w % m != 0 || h == 0 || w == 0 {
        return Err(Error::Dimension(format!(
            "generator needs one channel and sides divisible by {m}, got {c}x{h}x{w}"
        )));
    }
    let padded = tape.pad_reflect(x, 3)?;
    let y = tape.conv2d(padded, params.var("g.stem.w")?, 1, Pad2d::NONE)?;
    let mut y = norm_relu(tape, y)?;
    for i in 0..spec.down_levels {
        let z = tape.conv2d(
            y,
            params.var(&format!("g.down{i}.w"))?,
            2,
            Pad2d::uniform(1),
        )?;
        y = norm_relu(tape, z)?;
    }
    for j in 0..spec.res_blocks {
        let a = tape.conv2d(
            y,
            params.var(&format!("g.res{j}.a.w"))?,
            1,
            Pad2d::uniform(1),
        )?;
        let a = norm_relu(tape, a)?;
        let b = tape.conv2d(
            a,
            params.var(&format!("g.res{j}.b.w"))?,
            1,
            Pad2d::uniform(1),
        )?;
        let b = tape.instance_norm(b, T::lit(NORM_EPS))?;
        y = tape.add(y, b)?;
    }
    for i in 0..spec.down_levels {
        let z =
            tape.conv2d_transpose(y, params.var(&format!("g.up{i}.w"))?, 2, Pad2d::uniform(1))?;
        y = norm_relu(tape, z)?;
    }
    let padded = tape.pad_reflect(y, 3)?;
    let out = tape.conv2d(padded, params.var("g.head.w")?, 1, Pad2d::NONE)?;
    let out = tape.channel_bias(out, params.var("g.head.b")?)?;
    tape.tanh(out)
}

/// `[N, 1, p, p]` patch to an `[N, 1, s, s]` score map.
pub fn discriminator_forward<T: Real>(
    tape: &mut Tape<T>,
    spec: &DiscriminatorSpec,
    params: &Bound,
    x: Var,
) -> Result<Var> {
    let slope = T::lit(LEAKY_SLOPE);
    let mut y = x;
    for i in 0..spec.widths.len() {
        y = tape.conv2d(y, params.var(&format!("d.l{i}.w"))?, 2, Pad2d::uniform(1))?;
        if i == 0 {
            y = tape.channel_bias(y, params.var("d.l0.b")?)?;
        } else {
            y = tape.instance_norm(y, T::lit(NORM_EPS))?;
        }
        y = tape.leaky_relu(y, slope)?;
    }
    y = tape.conv2d(y, params.var("d.mid.w")?, 1, Pad2d::uniform(1))?;
    y = tape.instance_norm(y, T::lit(NORM_EPS))?;
    y = tape.leaky_relu(y, slope)?;
    let out = tape.conv2d(y, params.var("d.out.w")?, 1, Pad2d::uniform(1))?;
    tape.channel_bias(out, params.var("d.out.b")?)
}

const MAGIC: &str = "PATCHSTYLE-CHECKPOINT 1";

impl Model {
    /// Text header (specs, seed, slot count) then, per slot, a
    /// `name dims...` line followed by raw little-endian `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let slots: Vec<&(String, Tensor<f32>)> = self
            .generator
            .slots
            .iter()
            .chain(&self.discriminator.slots)
            .collect();
        let mut out = format!(
            "{MAGIC}\ngenerator={}\ndiscriminator={}\nseed={}\nslots={}\n",
            self.generator_spec,
            self.discriminator_spec,
            self.seed,
            slots.len()
        )
        .into_bytes();
        for (name, t) in slots {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            out.extend(format!("{name} {}\n", dims.join(" ")).as_bytes());
            for v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut cur = bytes;
        let line = |cur: &mut &[u8]| -> Result<String> {
            let end = cur
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header"))?;
            let s = std::str::from_utf8(&cur[..end])
                .map_err(|_| bad("header is not UTF-8"))?
                .to_string();
            *cur = &cur[end + 1..];
            Ok(s)
        };
        if line(&mut cur)? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let field = |cur: &mut &[u8], key: &str| -> Result<String> {
            let l = line(cur)?;
            l.strip_prefix(&format!("{key}="))
                .map(str::to_string)
                .ok_or_else(|| Error::Checkpoint(format!("expected {key}=, got {l:?}")))
        };
        let g: GeneratorSpec = field(&mut cur, "generator")?.parse()?;
        let d: DiscriminatorSpec = field(&mut cur, "discriminator")?.parse()?;
        let seed: u64 = field(&mut cur, "seed")?
            .parse()
            .map_err(|_| bad("bad seed"))?;
        let count: usize = field(&mut cur, "slots")?
            .parse()
            .map_err(|_| bad("bad slot count"))?;
        let mut model = init_params(&g, &d, seed);
        let expected: Vec<(String, Vec<usize>)> =
            g.slot_shapes().into_iter().chain(d.slot_shapes()).collect();
        if expected.len() != count {
            return Err(Error::Checkpoint(format!(
                "spec implies {} slots, file has {count}",
                expected.len()
            )));
        }
        let mut loaded: HashMap<String, Tensor<f32>> = HashMap::new();
        for _ in 0..count {
            let l = line(&mut cur)?;
            let mut parts = l.split(' ');
            let name = parts.next().unwrap_or_default().to_string();
            let shape: Vec<usize> = parts
                .map(|p| p.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Checkpoint(format!("bad shape line {l:?}")))?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            cur.read_exact(&mut raw)
                .map_err(|_| bad("truncated slot data"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            loaded.insert(name, Tensor::new(shape, data)?);
        }
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        for (name, shape) in expected {
            let t = loaded
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing slot {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "slot {name} has shape {:?}, spec needs {shape:?}",
                    t.shape()
                )));
            }
            let dst = if name.starts_with("g.") {
                model.generator.get_mut(&name)
            } else {
                model.discriminator.get_mut(&name)
            };
            *dst.expect("slot from spec") = t;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Anything that turns a hybrid patch into a fully styled patch.
pub trait Translator {
    /// Patch sides must be multiples of this.
    fn side_multiple(&self) -> usize {
        1
    }

    fn translate(&self, hybrid: &GrayImage) -> Result<GrayImage>;
}

/// Returns the hybrid unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, hybrid: &GrayImage) -> Result<GrayImage> {
        Ok(hybrid.clone())
    }
}

/// A trained generator used for inference.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub params: ModelParams<f32>,
}

impl Generator {
    pub fn from_model(model: &Model) -> Self {
        Generator {
            spec: model.generator_spec,
            params: model.generator.clone(),
        }
    }

    pub fn translate_batch(&self, hybrids: &[&GrayImage]) -> Result<Vec<GrayImage>> {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(patches_to_tensor(hybrids)?);
        let bound = self.params.bind(&mut tape);
        let y = generator_forward(&mut tape, &self.spec, &bound, x)?;
        tensor_to_patches(tape.value(y))
    }
}

impl Translator for Generator {
    fn side_multiple(&self) -> usize {
        self.spec.side_multiple()
    }

    fn translate(&self, hybrid: &GrayImage) -> Result<GrayImage> {
        Ok(self.translate_batch(&[hybrid])?.remove(0))
    }
}
