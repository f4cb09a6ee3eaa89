use super::kernels::{
    self, col2im, filter_axis, filter_axis_adjoint, gemm, im2col, ConvGeom, Pad2d,
};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: Pad2d,
    },
    ConvTranspose2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: Pad2d,
    },
    PadReflect {
        x: Var,
        pad: usize,
    },
    ChannelBias {
        x: Var,
        b: Var,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    Binary {
        kind: BinKind,
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    AddScalar {
        x: Var,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Tanh {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Square {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Separable {
        x: Var,
        kernel: Vec<T>,
        anchor: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    grad: Option<Vec<T>>,
}

/// Records the forward computation so [`Tape::backward`] can replay it in
/// reverse. Node ids are assigned in creation order, which is already a
/// topological order.
///
/// A tape is confined to one thread; build independent tapes to run in
/// parallel.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn check_finite<T: Real>(data: &[T], op: &str) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{op} produced a non-finite value at index {i}"
        )));
    }
    Ok(())
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &str) -> Result<Var> {
        check_finite(value.data(), name)?;
        self.nodes.push(Node {
            value,
            op,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A new leaf holding a copy of `x`'s value; gradients stop here.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.leaf(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`;
    /// zeros when `v` was not reachable from the loss.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        let data = node
            .grad
            .clone()
            .unwrap_or_else(|| vec![T::zero(); node.value.len()]);
        Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value shape")
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: Pad2d) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let [f, kc, kh, kw] = self.value(k).dims4()?;
        if kc != c {
            return Err(Error::Dimension(format!(
                "conv2d: kernel expects {kc} input channels, input has {c}"
            )));
        }
        let (oh, ow) = match (
            kernels::conv_out_dim(h, pad.top, pad.bottom, kh, stride),
            kernels::conv_out_dim(w, pad.left, pad.right, kw, stride),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d: kernel {kh}x{kw} stride {stride} does not fit padded {h}x{w} input"
                )))
            }
        };
        let geom = ConvGeom {
            channels: c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        };
        let mut out = vec![T::zero(); n * f * oh * ow];
        let mut cols = vec![T::zero(); geom.col_rows() * geom.col_cols()];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        for b in 0..n {
            im2col(&xv[b * c * h * w..(b + 1) * c * h * w], &geom, &mut cols);
            gemm(
                f,
                geom.col_rows(),
                geom.col_cols(),
                kv,
                false,
                &cols,
                false,
                T::zero(),
                &mut out[b * f * oh * ow..(b + 1) * f * oh * ow],
            );
        }
        let value = Tensor::new(vec![n, f, oh, ow], out)?;
        self.push(value, Op::Conv2d { x, k, stride, pad }, "conv2d")
    }

    /// Exact adjoint of [`Tape::conv2d`]. `k` has shape `[C_in, C_out, kh, kw]`.
    pub fn conv2d_transpose(&mut self, x: Var, k: Var, stride: usize, pad: Pad2d) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let [kc, co, kh, kw] = self.value(k).dims4()?;
        if kc != c {
            return Err(Error::Dimension(format!(
                "conv2d_transpose: kernel expects {kc} input channels, input has {c}"
            )));
        }
        let (oh, ow) = match (
            kernels::conv_transpose_out_dim(h, pad.top, pad.bottom, kh, stride),
            kernels::conv_transpose_out_dim(w, pad.left, pad.right, kw, stride),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d_transpose: empty output for {h}x{w} input, kernel {kh}x{kw}, stride {stride}"
                )))
            }
        };
        // Geometry of the forward convolution this op is the adjoint of.
        let geom = ConvGeom {
            channels: co,
            h: oh,
            w: ow,
            kh,
            kw,
            stride,
            pad,
            oh: h,
            ow: w,
        };
        let mut out = vec![T::zero(); n * co * oh * ow];
        let mut cols = vec![T::zero(); geom.col_rows() * geom.col_cols()];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        for b in 0..n {
            gemm(
                geom.col_rows(),
                c,
                h * w,
                kv,
                true,
                &xv[b * c * h * w..(b + 1) * c * h * w],
                false,
                T::zero(),
                &mut cols,
            );
            col2im(
                &cols,
                &geom,
                &mut out[b * co * oh * ow..(b + 1) * co * oh * ow],
            );
        }
        let value = Tensor::new(vec![n, co, oh, ow], out)?;
        self.push(
            value,
            Op::ConvTranspose2d { x, k, stride, pad },
            "conv2d_transpose",
        )
    }

    /// Reflection padding (edge pixel not repeated) on every spatial side.
    pub fn pad_reflect(&mut self, x: Var, pad: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if pad >= h || pad >= w {
            return Err(Error::Dimension(format!(
                "pad_reflect: padding {pad} needs spatial dims > {pad}, got {h}x{w}"
            )));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * c * ph * pw];
        for plane in 0..n * c {
            for y in 0..ph {
                let sy = reflect(y as isize - pad as isize, h);
                for xx in 0..pw {
                    let sx = reflect(xx as isize - pad as isize, w);
                    out[plane * ph * pw + y * pw + xx] = src[plane * h * w + sy * w + sx];
                }
            }
        }
        let value = Tensor::new(vec![n, c, ph, pw], out)?;
        self.push(value, Op::PadReflect { x, pad }, "pad_reflect")
    }

    /// Adds `b[c]` to every pixel of channel `c`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if self.value(b).shape() != [c] {
            return Err(Error::Dimension(format!(
                "channel_bias: bias shape {:?} for {c} channels",
                self.value(b).shape()
            )));
        }
        let bv = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for (i, chunk) in out.chunks_mut(h * w).enumerate() {
            let bias = bv[i % c];
            chunk.iter_mut().for_each(|v| *v = *v + bias);
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.push(value, Op::ChannelBias { x, b }, "channel_bias")
    }

    /// Per-(n, c) plane normalization to zero mean and unit population
    /// variance, no affine part.
    pub fn instance_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        let hw = h * w;
        let count = T::from_usize(hw).unwrap();
        let mut out = self.value(x).data().to_vec();
        let mut inv_std = Vec::with_capacity(n * c);
        for plane in out.chunks_mut(hw) {
            let mean = plane.iter().copied().sum::<T>() / count;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let is = T::one() / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.push(value, Op::InstanceNorm { x, inv_std }, "instance_norm")
    }

    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = if av.shape() == bv.shape() || (bv.len() == 1 && bv.shape().is_empty()) {
            av.shape().to_vec()
        } else if av.len() == 1 && av.shape().is_empty() {
            bv.shape().to_vec()
        } else {
            return Err(Error::Dimension(format!(
                "{kind:?}: shapes {:?} and {:?} differ",
                av.shape(),
                bv.shape()
            )));
        };
        let len: usize = shape.iter().product();
        let ad = av.data();
        let bd = bv.data();
        let at = |i: usize| if ad.len() == 1 { ad[0] } else { ad[i] };
        let bt = |i: usize| if bd.len() == 1 { bd[0] } else { bd[i] };
        let out: Vec<T> = (0..len)
            .map(|i| match kind {
                BinKind::Add => at(i) + bt(i),
                BinKind::Sub => at(i) - bt(i),
                BinKind::Mul => at(i) * bt(i),
            })
            .collect();
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::Binary { kind, a, b }, "binary")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    fn unary(&mut self, x: Var, op: Op<T>, name: &str, f: impl Fn(T) -> T) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(value, op, name)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary(x, Op::Scale { x, c }, "scale", |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        self.unary(x, Op::AddScalar { x }, "add_scalar", |v| v + c)
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu { x }, "relu", |v| {
            if v > T::zero() {
                v
            } else {
                T::zero()
            }
        })
    }

    /// The subgradient at 0 is `slope`.
    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        self.unary(x, Op::LeakyRelu { x, slope }, "leaky_relu", |v| {
            if v > T::zero() {
                v
            } else {
                v * slope
            }
        })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh { x }, "tanh", |v| v.tanh())
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Abs { x }, "abs", |v| v.abs())
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square { x }, "square", |v| v * v)
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Dimension("mean of an empty tensor".into()));
        }
        let m = xv.data().iter().copied().sum::<T>() / T::from_usize(xv.len()).unwrap();
        self.push(Tensor::scalar(m), Op::Mean { x }, "mean")
    }

    /// Separable 2-D filter `kernel ⊗ kernel` over each spatial plane with
    /// replicate-edge padding. Tap `t` reads offset `t - anchor`.
    pub fn separable_filter(&mut self, x: Var, kernel: &[T], anchor: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if kernel.is_empty() || anchor >= kernel.len() {
            return Err(Error::Dimension(format!(
                "separable_filter: anchor {anchor} outside kernel of length {}",
                kernel.len()
            )));
        }
        let src = self.value(x).data();
        let mut tmp = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        filter_axis(src, n * c, h, w, kernel, anchor, true, &mut tmp);
        filter_axis(&tmp, n * c, h, w, kernel, anchor, false, &mut out);
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.push(
            value,
            Op::Separable {
                x,
                kernel: kernel.to_vec(),
                anchor,
            },
            "separable_filter",
        )
    }

    /// Reverse pass from a scalar `loss`. Populates gradients for every node
    /// that `loss` depends on; earlier gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(id, &g, &mut grads);
            self.nodes[id].grad = Some(g);
        }
        Ok(())
    }

    fn backward_node(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, k, stride, pad } => {
                let [n, c, h, w] = val(x).dims4().unwrap();
                let [f, _, kh, kw] = val(k).dims4().unwrap();
                let [_, _, oh, ow] = node.value.dims4().unwrap();
                let geom = ConvGeom {
                    channels: c,
                    h,
                    w,
                    kh,
                    kw,
                    stride,
                    pad,
                    oh,
                    ow,
                };
                let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
                let mut cols = vec![T::zero(); rows * cols_n];
                let mut dcols = vec![T::zero(); rows * cols_n];
                let xv = val(x).data();
                let kv = val(k).data();
                let mut dk = vec![T::zero(); kv.len()];
                let mut dx = vec![T::zero(); xv.len()];
                for b in 0..n {
                    let gout = &g[b * f * oh * ow..(b + 1) * f * oh * ow];
                    im2col(&xv[b * c * h * w..(b + 1) * c * h * w], &geom, &mut cols);
                    gemm(f, cols_n, rows, gout, false, &cols, true, T::one(), &mut dk);
                    gemm(
                        rows,
                        f,
                        cols_n,
                        kv,
                        true,
                        gout,
                        false,
                        T::zero(),
                        &mut dcols,
                    );
                    col2im(&dcols, &geom, &mut dx[b * c * h * w..(b + 1) * c * h * w]);
                }
                add_into(accumulate(grads, k, kv.len()), &dk);
                add_into(accumulate(grads, x, xv.len()), &dx);
            }
            &Op::ConvTranspose2d { x, k, stride, pad } => {
                let [n, c, h, w] = val(x).dims4().unwrap();
                let [_, co, kh, kw] = val(k).dims4().unwrap();
                let [_, _, oh, ow] = node.value.dims4().unwrap();
                let geom = ConvGeom {
                    channels: co,
                    h: oh,
                    w: ow,
                    kh,
                    kw,
                    stride,
                    pad,
                    oh: h,
                    ow: w,
                };
                let rows = geom.col_rows();
                let mut dcols = vec![T::zero(); rows * h * w];
                let xv = val(x).data();
                let kv = val(k).data();
                let mut dk = vec![T::zero(); kv.len()];
                let mut dx = vec![T::zero(); xv.len()];
                for b in 0..n {
                    im2col(
                        &g[b * co * oh * ow..(b + 1) * co * oh * ow],
                        &geom,
                        &mut dcols,
                    );
                    gemm(
                        c,
                        rows,
                        h * w,
                        kv,
                        false,
                        &dcols,
                        false,
                        T::zero(),
                        &mut dx[b * c * h * w..(b + 1) * c * h * w],
                    );
                    gemm(
                        c,
                        h * w,
                        rows,
                        &xv[b * c * h * w..(b + 1) * c * h * w],
                        false,
                        &dcols,
                        true,
                        T::one(),
                        &mut dk,
                    );
                }
                add_into(accumulate(grads, k, kv.len()), &dk);
                add_into(accumulate(grads, x, xv.len()), &dx);
            }
            &Op::PadReflect { x, pad } => {
                let [n, c, h, w] = val(x).dims4().unwrap();
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let dx = accumulate(grads, x, n * c * h * w);
                for plane in 0..n * c {
                    for y in 0..ph {
                        let sy = reflect(y as isize - pad as isize, h);
                        for xx in 0..pw {
                            let sx = reflect(xx as isize - pad as isize, w);
                            let d = &mut dx[plane * h * w + sy * w + sx];
                            *d = *d + g[plane * ph * pw + y * pw + xx];
                        }
                    }
                }
            }
            &Op::ChannelBias { x, b } => {
                let [_, c, h, w] = val(x).dims4().unwrap();
                add_into(accumulate(grads, x, g.len()), g);
                let db = accumulate(grads, b, c);
                for (i, chunk) in g.chunks(h * w).enumerate() {
                    db[i % c] = db[i % c] + chunk.iter().copied().sum::<T>();
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let [_, _, h, w] = val(*x).dims4().unwrap();
                let hw = h * w;
                let count = T::from_usize(hw).unwrap();
                let xhat = node.value.data();
                let dx = accumulate(grads, *x, g.len());
                for (p, &is) in inv_std.iter().enumerate() {
                    let r = p * hw..(p + 1) * hw;
                    let (gp, xp) = (&g[r.clone()], &xhat[r.clone()]);
                    let mean_g = gp.iter().copied().sum::<T>() / count;
                    let mean_gx = gp.iter().zip(xp).map(|(&a, &b)| a * b).sum::<T>() / count;
                    for ((d, &gi), &xi) in dx[r].iter_mut().zip(gp).zip(xp) {
                        *d = *d + is * (gi - mean_g - xi * mean_gx);
                    }
                }
            }
            &Op::Binary { kind, a, b } => {
                let (ad, bd) = (val(a).data(), val(b).data());
                let at = |i: usize| if ad.len() == 1 { ad[0] } else { ad[i] };
                let bt = |i: usize| if bd.len() == 1 { bd[0] } else { bd[i] };
                let da: Vec<T> = match kind {
                    BinKind::Add | BinKind::Sub => g.to_vec(),
                    BinKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * bt(i)).collect(),
                };
                let db: Vec<T> = match kind {
                    BinKind::Add => g.to_vec(),
                    BinKind::Sub => g.iter().map(|&gi| -gi).collect(),
                    BinKind::Mul => g.iter().enumerate().map(|(i, &gi)| gi * at(i)).collect(),
                };
                reduce_into(accumulate(grads, a, ad.len()), &da);
                reduce_into(accumulate(grads, b, bd.len()), &db);
            }
            &Op::Scale { x, c } => {
                let dx = accumulate(grads, x, g.len());
                dx.iter_mut().zip(g).for_each(|(d, &gi)| *d = *d + gi * c);
            }
            &Op::AddScalar { x } => add_into(accumulate(grads, x, g.len()), g),
            &Op::Relu { x } => {
                let xv = val(x).data();
                let dx = accumulate(grads, x, g.len());
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    if xi > T::zero() {
                        *d = *d + gi;
                    }
                }
            }
            &Op::LeakyRelu { x, slope } => {
                let xv = val(x).data();
                let dx = accumulate(grads, x, g.len());
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    *d = *d + if xi > T::zero() { gi } else { gi * slope };
                }
            }
            &Op::Tanh { x } => {
                let y = node.value.data();
                let dx = accumulate(grads, x, g.len());
                for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                    *d = *d + gi * (T::one() - yi * yi);
                }
            }
            &Op::Abs { x } => {
                let xv = val(x).data();
                let dx = accumulate(grads, x, g.len());
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    let s = if xi > T::zero() {
                        T::one()
                    } else if xi < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    *d = *d + gi * s;
                }
            }
            &Op::Square { x } => {
                let xv = val(x).data();
                let two = T::lit(2.0);
                let dx = accumulate(grads, x, g.len());
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    *d = *d + two * xi * gi;
                }
            }
            &Op::Mean { x } => {
                let len = val(x).len();
                let share = g[0] / T::from_usize(len).unwrap();
                accumulate(grads, x, len)
                    .iter_mut()
                    .for_each(|d| *d = *d + share);
            }
            Op::Separable { x, kernel, anchor } => {
                let [n, c, h, w] = val(*x).dims4().unwrap();
                let mut tmp = vec![T::zero(); g.len()];
                filter_axis_adjoint(g, n * c, h, w, kernel, *anchor, false, &mut tmp);
                let dx = accumulate(grads, *x, g.len());
                filter_axis_adjoint(&tmp, n * c, h, w, kernel, *anchor, true, dx);
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

/// Adds `src` into `dst`, summing everything when `dst` is a broadcast scalar.
fn reduce_into<T: Real>(dst: &mut [T], src: &[T]) {
    if dst.len() == src.len() {
        add_into(dst, src);
    } else {
        dst[0] = dst[0] + src.iter().copied().sum::<T>();
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}
