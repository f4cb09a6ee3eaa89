//! Central finite-difference checking of tape gradients in 64-bit.

use crate::error::Result;
use crate::image::GaussianFilter;
use crate::nets::{
    discriminator_forward, generator_forward, init_params, Bound, DiscriminatorSpec, GeneratorSpec,
};
use crate::tensor::{Pad2d, Tape, Tensor, Var};
use crate::train::generator_objective;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error `|a - d| / (|a| + |d| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// (input index, element index) of the worst coordinate.
    pub worst: (usize, usize),
}

/// Compares the tape gradient of `build` with central differences at step
/// `step` for every input.
///
/// `build` must record a scalar loss from the given leaves. When
/// `max_coords` is set, at most that many randomly chosen coordinates per
/// input are probed.
pub fn check<F, R>(
    name: &str,
    inputs: &[Tensor<f64>],
    step: f64,
    max_coords: Option<usize>,
    rng: &mut R,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    R: Rng,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v)).collect();

    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: 0,
        max_rel_error: 0.0,
        worst: (0, 0),
    };
    let mut probe = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < input.len() => {
                let mut c = sample(rng, input.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..input.len()).collect(),
        };
        for idx in coords {
            let orig = input.data()[idx];
            probe[ii].data_mut()[idx] = orig + step;
            let plus = eval(&probe)?;
            probe[ii].data_mut()[idx] = orig - step;
            let minus = eval(&probe)?;
            probe[ii].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[ii].data()[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ii, idx);
            }
        }
    }
    Ok(report)
}

/// Finite-difference step used by the suites.
pub const STEP: f64 = 1e-3;

fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape product")
}

/// Random values at least `gap` away from zero, clear of relu/abs kinks.
fn random_off_kink(shape: &[usize], gap: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = r.random_range(gap..1.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

/// Projects an op's output to a scalar with fixed random weights.
fn projected(t: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let proj = random(t.value(y).shape(), &mut r);
    let p = t.leaf(proj);
    let m = t.mul(y, p)?;
    t.mean(m)
}

/// Checks every tape operation on small random inputs.
pub fn op_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let step = STEP;
    let mut reports = Vec::new();
    let x4 = random(&[2, 2, 5, 5], &mut r);
    let k = random(&[3, 2, 3, 3], &mut r);
    reports.push(check(
        "conv2d",
        &[x4.clone(), k.clone()],
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.conv2d(
                v[0],
                v[1],
                2,
                Pad2d {
                    top: 1,
                    bottom: 0,
                    left: 1,
                    right: 2,
                },
            )?;
            projected(t, y, 100)
        },
    )?);
    let kt = random(&[2, 3, 4, 4], &mut r);
    reports.push(check(
        "conv2d_transpose",
        &[x4.clone(), kt],
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.conv2d_transpose(v[0], v[1], 2, Pad2d::uniform(1))?;
            projected(t, y, 101)
        },
    )?);
    reports.push(check(
        "pad_reflect",
        std::slice::from_ref(&x4),
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.pad_reflect(v[0], 2)?;
            projected(t, y, 102)
        },
    )?);
    let b = random(&[2], &mut r);
    reports.push(check(
        "channel_bias",
        &[x4.clone(), b],
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.channel_bias(v[0], v[1])?;
            projected(t, y, 103)
        },
    )?);
    reports.push(check(
        "instance_norm",
        std::slice::from_ref(&x4),
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.instance_norm(v[0], 1e-5)?;
            projected(t, y, 104)
        },
    )?);
    let a = random(&[3, 4], &mut r);
    let c = random(&[3, 4], &mut r);
    for (name, kind) in [("add", 0), ("sub", 1), ("mul", 2)] {
        reports.push(check(
            name,
            &[a.clone(), c.clone()],
            step,
            None,
            &mut r,
            move |t, v| {
                let y = match kind {
                    0 => t.add(v[0], v[1])?,
                    1 => t.sub(v[0], v[1])?,
                    _ => t.mul(v[0], v[1])?,
                };
                projected(t, y, 105)
            },
        )?);
    }
    reports.push(check(
        "scalar_broadcast",
        &[a.clone(), Tensor::scalar(0.7)],
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.mul(v[0], v[1])?;
            let y = t.sub(y, v[1])?;
            projected(t, y, 106)
        },
    )?);
    let off = random_off_kink(&[3, 4], 0.05, &mut r);
    reports.push(check(
        "relu",
        std::slice::from_ref(&off),
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.relu(v[0])?;
            projected(t, y, 107)
        },
    )?);
    reports.push(check(
        "leaky_relu",
        std::slice::from_ref(&off),
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.leaky_relu(v[0], 0.2)?;
            projected(t, y, 108)
        },
    )?);
    reports.push(check("abs", std::slice::from_ref(&off), step, None, &mut r, |t, v| {
        let y = t.abs(v[0])?;
        projected(t, y, 109)
    })?);
    reports.push(check("tanh", std::slice::from_ref(&a), step, None, &mut r, |t, v| {
        let y = t.tanh(v[0])?;
        projected(t, y, 110)
    })?);
    reports.push(check(
        "square+scale+add_scalar",
        std::slice::from_ref(&a),
        step,
        None,
        &mut r,
        |t, v| {
            let y = t.square(v[0])?;
            let y = t.scale(y, -1.7)?;
            let y = t.add_scalar(y, 0.3)?;
            projected(t, y, 111)
        },
    )?);
    let kern = [0.1, 0.5, 0.3, 0.2];
    reports.push(check(
        "separable_filter",
        std::slice::from_ref(&x4),
        step,
        None,
        &mut r,
        move |t, v| {
            let y = t.separable_filter(v[0], &kern, 2)?;
            projected(t, y, 112)
        },
    )?);
    Ok(reports)
}

/// Checks the generator objective (L1, adversarial and shape terms) as a
/// function of a `16 × 16` generator output and a `2 × 2` score map. The
/// output is kept at least 0.05 away from the target so the L1 kinks stay
/// outside the probe interval.
pub fn composed_suite(seed: u64) -> Result<GradCheckReport> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let target = random(&[1, 1, 16, 16], &mut r);
    let offset = random_off_kink(&[1, 1, 16, 16], 0.05, &mut r);
    let mut fake = target.clone();
    for (f, o) in fake.data_mut().iter_mut().zip(offset.data()) {
        *f += o;
    }
    let scores = random(&[1, 1, 2, 2], &mut r);
    let filter = GaussianFilter::default();
    check(
        "generator_objective",
        &[fake, scores],
        STEP,
        None,
        &mut r,
        move |t, v| {
            let s = t.leaf(target.clone());
            Ok(generator_objective(t, v[0], s, Some(v[1]), &filter, true)?.total)
        },
    )
}

/// Checks the generator objective end to end through both networks at
/// `step`, probing up to `coords` coordinates of the `16 × 16` input and of
/// every parameter slot. The discriminator keeps the first two stride-2
/// layers of `d`; a third would leave no score for a 16-pixel input.
///
/// Central differences of a relu network cross activation kinks once the
/// step is large, so this is meant for small steps.
pub fn network_check(
    g: &GeneratorSpec,
    d: &DiscriminatorSpec,
    seed: u64,
    step: f64,
    coords: usize,
) -> Result<GradCheckReport> {
    let d = DiscriminatorSpec {
        widths: d.widths.iter().copied().take(2).collect(),
    };
    let model = init_params(g, &d, seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[1, 1, 16, 16], &mut r);
    let s = random(&[1, 1, 16, 16], &mut r);
    let slots: Vec<_> = model
        .generator
        .slots()
        .iter()
        .chain(model.discriminator.slots())
        .collect();
    let names: Vec<String> = slots.iter().map(|(n, _)| n.clone()).collect();
    let mut inputs = vec![x];
    inputs.extend(slots.iter().map(|(_, t)| t.cast::<f64>()));
    let gn = model.generator.slots().len();
    let filter = GaussianFilter::default();
    let (gspec, dspec) = (*g, d.clone());
    check(
        "network_objective",
        &inputs,
        step,
        Some(coords),
        &mut r,
        move |t, v| {
            let gb = Bound::from_pairs(names[..gn].iter().cloned().zip(v[1..=gn].iter().copied()));
            let db =
                Bound::from_pairs(names[gn..].iter().cloned().zip(v[gn + 1..].iter().copied()));
            let fake = generator_forward(t, &gspec, &gb, v[0])?;
            let scores = discriminator_forward(t, &dspec, &db, fake)?;
            let st = t.leaf(s.clone());
            Ok(generator_objective(t, fake, st, Some(scores), &filter, true)?.total)
        },
    )
}

/// Every op plus the composed objective.
pub fn full_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = op_suite(seed)?;
    reports.push(composed_suite(seed)?);
    Ok(reports)
}
