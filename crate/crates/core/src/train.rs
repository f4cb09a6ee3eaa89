//! Adversarial training of the seamless translator on hybrid patches.
//!
//! Generator objective, all terms unit weighted:
//! `mean|G(h) − s| + mean (D(G(h)) − 1)² + mean|g(G(h)) − g(s)|`
//! where `g` is the 10-tap, σ = 10 Gaussian. The discriminator uses the
//! least-squares objective with real styled patches against detached
//! generator output.

use crate::config::parse_kv;
use crate::error::{Error, Result};
use crate::hybrid::{compose, max_band, sample_mask, HybridMask};
use crate::image::{GaussianFilter, GrayImage};
use crate::nets::{
    discriminator_forward, generator_forward, init_params, patches_to_tensor, Bound,
    DiscriminatorSpec, GeneratorSpec, Model, ModelParams,
};
use crate::patches::PatchPair;
use crate::tensor::{Real, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which optional generator terms are active. L1 is always on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossToggles {
    pub adversarial: bool,
    pub shape: bool,
}

impl LossToggles {
    pub const FULL: LossToggles = LossToggles {
        adversarial: true,
        shape: true,
    };

    /// The four ablation variants: L1, L1 + adversarial, L1 + shape, full.
    pub fn variants() -> [LossToggles; 4] {
        [
            LossToggles {
                adversarial: false,
                shape: false,
            },
            LossToggles {
                adversarial: true,
                shape: false,
            },
            LossToggles {
                adversarial: false,
                shape: true,
            },
            LossToggles::FULL,
        ]
    }
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles::FULL
    }
}

impl fmt::Display for LossToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.adversarial, self.shape) {
            (false, false) => "l1",
            (true, false) => "l1+adv",
            (false, true) => "l1+shape",
            (true, true) => "full",
        })
    }
}

impl FromStr for LossToggles {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossToggles::variants()
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown loss variant {s:?} (l1, l1+adv, l1+shape, full)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub delta: usize,
    pub patch_size: usize,
    pub losses: LossToggles,
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            iterations: 2000,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            delta: 8,
            patch_size: 64,
            losses: LossToggles::FULL,
            seed: 0,
            checkpoint_every: 0,
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Applies `key=value` overrides on top of `self`.
    pub fn apply_kv(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_kv(&parse_kv(text)?)?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "losses" => self.losses = value.parse()?,
            "adversarial" => self.losses.adversarial = num(key, value)?,
            "shape" => self.losses.shape = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "generator" => self.generator = value.parse()?,
            "discriminator" => self.discriminator = value.parse()?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Resolved configuration as `key=value` lines.
    pub fn to_kv_text(&self) -> String {
        format!(
            "batch_size={}\niterations={}\nlearning_rate={}\nbeta1={}\nbeta2={}\nepsilon={}\ndelta={}\n\
             patch_size={}\nlosses={}\nseed={}\ncheckpoint_every={}\ngenerator={}\ndiscriminator={}\n",
            self.batch_size,
            self.iterations,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.delta,
            self.patch_size,
            self.losses,
            self.seed,
            self.checkpoint_every,
            self.generator,
            self.discriminator
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return bad("learning_rate and epsilon must be positive".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        max_band(self.patch_size, self.delta).map_err(|e| Error::Config(e.to_string()))?;
        if !self.patch_size.is_multiple_of(self.generator.side_multiple()) {
            return bad(format!(
                "patch_size {} is not divisible by {}",
                self.patch_size,
                self.generator.side_multiple()
            ));
        }
        if self.losses.adversarial && self.discriminator.score_side(self.patch_size).is_none() {
            return bad(format!(
                "discriminator does not fit {0}x{0} patches",
                self.patch_size
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Scalar tape nodes of the generator objective.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub total: Var,
    pub l1: Var,
    pub adversarial: Option<Var>,
    pub shape: Option<Var>,
}

/// Assembles the generator objective from the generator output `fake`,
/// target `styled`, and (optionally) the discriminator's scores on `fake`.
/// The shape term is recorded for monitoring even when it is excluded from
/// `total`.
pub fn generator_objective<T: Real>(
    tape: &mut Tape<T>,
    fake: Var,
    styled: Var,
    scores: Option<Var>,
    shape_filter: &GaussianFilter,
    use_shape: bool,
) -> Result<GeneratorTerms> {
    let diff = tape.sub(fake, styled)?;
    let abs = tape.abs(diff)?;
    let l1 = tape.mean(abs)?;
    let mut total = l1;
    let adversarial = match scores {
        Some(s) => {
            let d = tape.add_scalar(s, -T::one())?;
            let sq = tape.square(d)?;
            let adv = tape.mean(sq)?;
            total = tape.add(total, adv)?;
            Some(adv)
        }
        None => None,
    };
    let gf = shape_filter.apply(tape, fake)?;
    let gs = shape_filter.apply(tape, styled)?;
    let sd = tape.sub(gf, gs)?;
    let sa = tape.abs(sd)?;
    let shape = tape.mean(sa)?;
    if use_shape {
        total = tape.add(total, shape)?;
    }
    Ok(GeneratorTerms {
        total,
        l1,
        adversarial,
        shape: Some(shape),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorTerms {
    pub total: Var,
    pub real: Var,
    pub fake: Var,
}

/// `mean (D(real) − 1)² + mean D(fake)²` from precomputed score maps.
pub fn discriminator_objective<T: Real>(
    tape: &mut Tape<T>,
    real_scores: Var,
    fake_scores: Var,
) -> Result<DiscriminatorTerms> {
    let r = tape.add_scalar(real_scores, -T::one())?;
    let r = tape.square(r)?;
    let real = tape.mean(r)?;
    let f = tape.square(fake_scores)?;
    let fake = tape.mean(f)?;
    let total = tape.add(real, fake)?;
    Ok(DiscriminatorTerms { total, real, fake })
}

/// Discriminator loss on a fake batch (detached here, so no gradient
/// reaches the generator) and a real batch.
pub fn discriminator_loss<T: Real>(
    tape: &mut Tape<T>,
    spec: &DiscriminatorSpec,
    params: &Bound,
    fake: Var,
    real: Var,
) -> Result<DiscriminatorTerms> {
    let fake = tape.detach(fake);
    let sr = discriminator_forward(tape, spec, params, real)?;
    let sf = discriminator_forward(tape, spec, params, fake)?;
    discriminator_objective(tape, sr, sf)
}

/// Builds hybrids from aligned batches and records the full generator
/// objective. `discriminator` is `None` when the adversarial term is off.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<T: Real>(
    tape: &mut Tape<T>,
    g_spec: &GeneratorSpec,
    g_params: &Bound,
    discriminator: Option<(&DiscriminatorSpec, &Bound)>,
    plain: &[&GrayImage],
    styled: &[&GrayImage],
    masks: &[HybridMask],
    use_shape: bool,
) -> Result<(Var, GeneratorTerms)> {
    if plain.len() != styled.len() || plain.len() != masks.len() {
        return Err(Error::Dimension(format!(
            "batch sizes differ: {} plain, {} styled, {} masks",
            plain.len(),
            styled.len(),
            masks.len()
        )));
    }
    let hybrids: Vec<GrayImage> = plain
        .iter()
        .zip(styled)
        .zip(masks)
        .map(|((p, s), m)| compose(p, s, m))
        .collect::<Result<_>>()?;
    let h = tape.leaf(patches_to_tensor(&hybrids.iter().collect::<Vec<_>>())?);
    let s = tape.leaf(patches_to_tensor(styled)?);
    let fake = generator_forward(tape, g_spec, g_params, h)?;
    let scores = match discriminator {
        Some((spec, bound)) => Some(discriminator_forward(tape, spec, bound, fake)?),
        None => None,
    };
    let terms = generator_objective(tape, fake, s, scores, &GaussianFilter::default(), use_shape)?;
    Ok((fake, terms))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Per-slot first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params
            .slots()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected adaptive-moment update; `grads` follows slot order.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} gradients for {} slots",
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (_, slot)) in params.slots_mut().enumerate() {
        let g = grads[i].data();
        if g.len() != slot.len() {
            return Err(Error::Dimension(format!(
                "gradient {i} has {} values for {}",
                g.len(),
                slot.len()
            )));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, p) in slot.data_mut().iter_mut().enumerate() {
            let gk = f64::from(g[k]);
            let mk = cfg.beta1 * f64::from(m[k]) + (1.0 - cfg.beta1) * gk;
            let vk = cfg.beta2 * f64::from(v[k]) + (1.0 - cfg.beta2) * gk * gk;
            m[k] = mk as f32;
            v[k] = vk as f32;
            let update = cfg.lr * (mk / c1) / ((vk / c2).sqrt() + cfg.epsilon);
            *p = (f64::from(*p) - update) as f32;
        }
    }
    Ok(())
}

/// Loss components of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub l1: f64,
    pub adv_g: f64,
    pub shape: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl LossRecord {
    /// The generator objective as optimized under `toggles`.
    pub fn generator_total(&self, toggles: LossToggles) -> f64 {
        let mut t = self.l1;
        if toggles.adversarial {
            t += self.adv_g;
        }
        if toggles.shape {
            t += self.shape;
        }
        t
    }
}

pub const TRACE_HEADER: &str = "iteration,l1,adv_g,shape,d_real,d_fake";

pub fn trace_to_csv(trace: &[LossRecord]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.l1, r.adv_g, r.shape, r.d_real, r.d_fake
        ));
    }
    s
}

pub fn trace_from_csv(text: &str) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format("loss trace: missing header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Format(format!("loss trace: bad row {l:?}"));
            if f.len() != 6 {
                return Err(bad());
            }
            let n = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                l1: n(1)?,
                adv_g: n(2)?,
                shape: n(3)?,
                d_real: n(4)?,
                d_fake: n(5)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<LossRecord>,
}

/// Indices and masks for one iteration, drawn before any optimization.
#[derive(Clone, Debug, PartialEq)]
struct BatchPlan {
    items: Vec<usize>,
    masks: Vec<HybridMask>,
    real: Vec<usize>,
}

fn draw_plan(rng: &mut ChaCha8Rng, pool: usize, config: &TrainConfig) -> Result<BatchPlan> {
    let b = config.batch_size;
    let items = (0..b).map(|_| rng.random_range(0..pool)).collect();
    let masks = (0..b)
        .map(|_| sample_mask(config.patch_size, config.delta, rng))
        .collect::<Result<_>>()?;
    let real = (0..b).map(|_| rng.random_range(0..pool)).collect();
    Ok(BatchPlan { items, masks, real })
}

/// Trains from freshly initialized parameters.
pub fn train(
    pairs: &[PatchPair],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_with(pairs, config, out_dir, |_| {})
}

/// Like [`train`], calling `observe` after every iteration.
///
/// With `out_dir`, checkpoints are written every `checkpoint_every`
/// iterations as `checkpoint_NNNNNN.bin`, and a batch that produces a
/// non-finite value is dumped under `failure_NNNNNN/`.
pub fn train_with(
    pairs: &[PatchPair],
    config: &TrainConfig,
    out_dir: Option<&Path>,
    mut observe: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no patch pairs to train on".into()));
    }
    let p = config.patch_size;
    if let Some(bad) = pairs.iter().find(|pp| {
        (
            pp.plain.width(),
            pp.plain.height(),
            pp.styled.width(),
            pp.styled.height(),
        ) != (p, p, p, p)
    }) {
        return Err(Error::Dimension(format!(
            "pair from exemplar {} at {:?} is not {p}x{p}",
            bad.exemplar, bad.origin
        )));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut model = init_params(&config.generator, &config.discriminator, config.seed);
    let mut g_state = AdamState::new(&model.generator);
    let mut d_state = AdamState::new(&model.discriminator);
    let adam = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut trace = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let plan = draw_plan(&mut rng, pairs.len(), config)?;
        let record = match train_step(
            &mut model,
            &mut g_state,
            &mut d_state,
            pairs,
            &plan,
            config,
            &adam,
            it,
        ) {
            Ok(r) => r,
            Err(Error::Numeric(msg)) => {
                let mut detail = format!(
                    "iteration {it}: {msg}; batch items {:?}, masks {:?}, real items {:?}",
                    plan.items, plan.masks, plan.real
                );
                if let Some(dir) = out_dir {
                    let dump = dir.join(format!("failure_{it:06}"));
                    dump_batch(&dump, pairs, &plan)?;
                    detail.push_str(&format!("; batch dumped to {}", dump.display()));
                }
                return Err(Error::Numeric(detail));
            }
            Err(e) => return Err(e),
        };
        observe(&record);
        trace.push(record);
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 {
                model.save(dir.join(format!("checkpoint_{:06}.bin", it + 1)))?;
            }
        }
    }
    Ok(TrainOutcome { model, trace })
}

fn dump_batch(dir: &Path, pairs: &[PatchPair], plan: &BatchPlan) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, (&i, m)) in plan.items.iter().zip(&plan.masks).enumerate() {
        let pair = &pairs[i];
        compose(&pair.plain, &pair.styled, m)?.save(dir.join(format!("{k:02}.hybrid.pgm")))?;
        pair.styled.save(dir.join(format!("{k:02}.styled.pgm")))?;
    }
    Ok(())
}

fn grads_of(tape: &Tape<f32>, bound: &Bound) -> Vec<Tensor<f32>> {
    bound.vars().map(|(_, v)| tape.grad(v)).collect()
}

fn scalar(tape: &Tape<f32>, v: Var) -> Result<f64> {
    let x = f64::from(tape.value(v).item()?);
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut Model,
    g_state: &mut AdamState,
    d_state: &mut AdamState,
    pairs: &[PatchPair],
    plan: &BatchPlan,
    config: &TrainConfig,
    adam: &AdamConfig,
    iteration: usize,
) -> Result<LossRecord> {
    let plain: Vec<&GrayImage> = plan.items.iter().map(|&i| &pairs[i].plain).collect();
    let styled: Vec<&GrayImage> = plan.items.iter().map(|&i| &pairs[i].styled).collect();
    let hybrids: Vec<GrayImage> = plain
        .iter()
        .zip(&styled)
        .zip(&plan.masks)
        .map(|((p, s), m)| compose(p, s, m))
        .collect::<Result<_>>()?;

    let mut tape = Tape::<f32>::new();
    let g_bound = model.generator.bind(&mut tape);
    let h = tape.leaf(patches_to_tensor(&hybrids.iter().collect::<Vec<_>>())?);
    let s = tape.leaf(patches_to_tensor(&styled)?);
    let fake = generator_forward(&mut tape, &model.generator_spec, &g_bound, h)?;

    let (mut d_real, mut d_fake) = (0.0, 0.0);
    let scores = if config.losses.adversarial {
        let real_patches: Vec<&GrayImage> = plan.real.iter().map(|&i| &pairs[i].styled).collect();
        let real = tape.leaf(patches_to_tensor(&real_patches)?);
        let d_bound = model.discriminator.bind(&mut tape);
        let terms = discriminator_loss(&mut tape, &model.discriminator_spec, &d_bound, fake, real)?;
        d_real = scalar(&tape, terms.real)?;
        d_fake = scalar(&tape, terms.fake)?;
        tape.backward(terms.total)?;
        adam_step(
            &mut model.discriminator,
            &grads_of(&tape, &d_bound),
            d_state,
            adam,
        )?;
        // The generator is judged by the freshly updated discriminator.
        let d_bound = model.discriminator.bind(&mut tape);
        Some(discriminator_forward(
            &mut tape,
            &model.discriminator_spec,
            &d_bound,
            fake,
        )?)
    } else {
        None
    };

    let terms = generator_objective(
        &mut tape,
        fake,
        s,
        scores,
        &GaussianFilter::default(),
        config.losses.shape,
    )?;
    let record = LossRecord {
        iteration,
        l1: scalar(&tape, terms.l1)?,
        adv_g: match terms.adversarial {
            Some(v) => scalar(&tape, v)?,
            None => 0.0,
        },
        shape: match terms.shape {
            Some(v) => scalar(&tape, v)?,
            None => 0.0,
        },
        d_real,
        d_fake,
    };
    scalar(&tape, terms.total)?;
    tape.backward(terms.total)?;
    adam_step(
        &mut model.generator,
        &grads_of(&tape, &g_bound),
        g_state,
        adam,
    )?;
    Ok(record)
}
