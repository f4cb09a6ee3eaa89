//! Raw numeric kernels behind the tape ops. Everything here works on flat
//! row-major slices; shape validation happens in the tape layer.

use super::Real;

/// Zero padding extents for a 2-D convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pad2d {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad2d {
    pub const NONE: Pad2d = Pad2d {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn uniform(p: usize) -> Self {
        Pad2d {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

/// `floor((n + pad_lo + pad_hi - k) / stride) + 1`, or `None` when the kernel
/// does not fit in the padded extent.
pub fn conv_out_dim(
    n: usize,
    pad_lo: usize,
    pad_hi: usize,
    k: usize,
    stride: usize,
) -> Option<usize> {
    let padded = n + pad_lo + pad_hi;
    if stride == 0 || k == 0 || k > padded {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// `(n - 1) * stride - pad_lo - pad_hi + k`, or `None` if that is not positive.
pub fn conv_transpose_out_dim(
    n: usize,
    pad_lo: usize,
    pad_hi: usize,
    k: usize,
    stride: usize,
) -> Option<usize> {
    if stride == 0 || k == 0 || n == 0 {
        return None;
    }
    let full = (n - 1) * stride + k;
    full.checked_sub(pad_lo + pad_hi).filter(|&v| v > 0)
}

/// Geometry of one convolution: input plane `h × w` read by a `kh × kw`
/// window producing an `oh × ow` output plane.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: Pad2d,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfold `[C, H, W]` into `[C*kh*kw, oh*ow]` columns.
pub(crate) fn im2col<T: Real>(src: &[T], g: &ConvGeom, dst: &mut [T]) {
    let cols = g.col_cols();
    debug_assert_eq!(dst.len(), g.col_rows() * cols);
    for c in 0..g.channels {
        let plane = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let out = &mut dst[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad.top as isize;
                    let seg = &mut out[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in seg.iter_mut().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad.left as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[C, H, W]`.
pub(crate) fn col2im<T: Real>(cols_buf: &[T], g: &ConvGeom, dst: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols_buf[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad.top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + j) as isize - g.pad.left as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = op(a) · op(b) + beta · c` for row-major operands where `op(a)` is
/// `m × k` and `op(b)` is `k × n`. A transposed operand is stored in its
/// untransposed row-major layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    beta: T,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the length asserts above bound every index the strides reach.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// One 1-D pass of a separable filter with replicate-edge padding.
///
/// `out[i] = sum_t kernel[t] * src[clamp(i + t - anchor)]` applied along
/// the chosen axis of every `h × w` plane.
#[allow(clippy::too_many_arguments)]
pub(crate) fn filter_axis<T: Real>(
    src: &[T],
    planes: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    anchor: usize,
    along_rows: bool,
    dst: &mut [T],
) {
    let (len, count, step, lane_step) = if along_rows {
        (w, h, 1, w)
    } else {
        (h, w, w, 1)
    };
    for p in 0..planes {
        let base = p * h * w;
        for lane in 0..count {
            let lb = base + lane * lane_step;
            for i in 0..len {
                let mut acc = T::zero();
                for (t, &kv) in kernel.iter().enumerate() {
                    let pos = (i + t) as isize - anchor as isize;
                    let pos = pos.clamp(0, len as isize - 1) as usize;
                    acc = acc + kv * src[lb + pos * step];
                }
                dst[lb + i * step] = acc;
            }
        }
    }
}

/// Exact adjoint of [`filter_axis`]: accumulates into `dst`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn filter_axis_adjoint<T: Real>(
    grad: &[T],
    planes: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    anchor: usize,
    along_rows: bool,
    dst: &mut [T],
) {
    let (len, count, step, lane_step) = if along_rows {
        (w, h, 1, w)
    } else {
        (h, w, w, 1)
    };
    for p in 0..planes {
        let base = p * h * w;
        for lane in 0..count {
            let lb = base + lane * lane_step;
            for i in 0..len {
                let g = grad[lb + i * step];
                for (t, &kv) in kernel.iter().enumerate() {
                    let pos = (i + t) as isize - anchor as isize;
                    let pos = pos.clamp(0, len as isize - 1) as usize;
                    dst[lb + pos * step] = dst[lb + pos * step] + kv * g;
                }
            }
        }
    }
}
