//! Conventional convolution routines: direct valid convolution and the
//! upsample → pad → convolve transpose convolution used as ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::tensor::{check_channels, pad, upsample2x, Element, Kernel, Tensor};

/// Receives multiply counts from the convolution inner loops.
///
/// The unit type is the no-op counter used on the hot path.
pub trait MulCounter {
    fn add(&mut self, mults: u64);
}

impl MulCounter for () {
    #[inline(always)]
    fn add(&mut self, _mults: u64) {}
}

/// Running total of multiplications.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MulCount(pub u64);

impl MulCounter for MulCount {
    #[inline]
    fn add(&mut self, mults: u64) {
        self.0 += mults;
    }
}

/// Shape facts for a 2× transpose convolution with padding `p_orig` applied
/// to the zero-inserted input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub p_orig: usize,
    /// Padding applied to the original input by the fused path, `⌊p_orig/2⌋`.
    pub p_fused: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// The 2×2 block grid has one more row than the output needs.
    pub trim_extra_row: bool,
    pub trim_extra_col: bool,
}

impl TConvGeometry {
    pub fn new(in_h: usize, in_w: usize, kh: usize, kw: usize, p_orig: usize) -> Result<Self> {
        if in_h == 0 || in_w == 0 || kh == 0 || kw == 0 {
            return Err(shape("input and kernel dims must be positive"));
        }
        let padded_h = 2 * in_h - 1 + 2 * p_orig;
        let padded_w = 2 * in_w - 1 + 2 * p_orig;
        if kh > padded_h || kw > padded_w {
            return Err(shape(format!(
                "{kh}x{kw} kernel does not fit the {padded_h}x{padded_w} padded upsampled map"
            )));
        }
        let out_h = padded_h - kh + 1;
        let out_w = padded_w - kw + 1;
        Ok(Self {
            in_h,
            in_w,
            kh,
            kw,
            p_orig,
            p_fused: p_orig / 2,
            out_h,
            out_w,
            trim_extra_row: out_h % 2 == 1,
            trim_extra_col: out_w % 2 == 1,
        })
    }

    /// Side of the zero-inserted map after padding, `2N − 1 + 2P`.
    pub fn upsampled_padded_h(&self) -> usize {
        2 * self.in_h - 1 + 2 * self.p_orig
    }

    pub fn upsampled_padded_w(&self) -> usize {
        2 * self.in_w - 1 + 2 * self.p_orig
    }

    /// Rows of 2×2 output blocks, including a partial trailing row.
    pub fn block_rows(&self) -> usize {
        self.out_h.div_ceil(2)
    }

    pub fn block_cols(&self) -> usize {
        self.out_w.div_ceil(2)
    }
}

/// Square-input convenience for [`TConvGeometry::new`].
pub fn geometry(n_in: usize, kh: usize, kw: usize, p_orig: usize) -> Result<TConvGeometry> {
    TConvGeometry::new(n_in, n_in, kh, kw, p_orig)
}

/// Valid (unpadded, stride 1) convolution.
///
/// Each output element accumulates its products in `(u, v, c)` order
/// starting from zero. The fused path relies on this order.
pub fn conv2d_valid<T: Element>(input: &Tensor<T>, kernel: &Kernel<T>) -> Result<Tensor<T>> {
    conv2d_valid_counted(input, kernel, &mut ())
}

pub fn conv2d_valid_counted<T: Element, C: MulCounter>(
    input: &Tensor<T>,
    kernel: &Kernel<T>,
    counter: &mut C,
) -> Result<Tensor<T>> {
    check_channels(input.channels(), kernel.cin())?;
    let (h, w, _) = input.dims();
    if kernel.kh() > h || kernel.kw() > w {
        return Err(shape(format!(
            "{}x{} kernel is larger than the {h}x{w} input",
            kernel.kh(),
            kernel.kw()
        )));
    }
    let (oh, ow) = (h - kernel.kh() + 1, w - kernel.kw() + 1);
    let cout = kernel.cout();
    let per_pixel = (kernel.taps() * kernel.cin() * cout) as u64;
    let mut out = Tensor::zeros(oh, ow, cout);
    for y in 0..oh {
        for x in 0..ow {
            let acc = out.pixel_mut(y, x);
            for u in 0..kernel.kh() {
                for v in 0..kernel.kw() {
                    let src = input.pixel(y + u, x + v);
                    let tap = kernel.tap(u, v);
                    for (a, krow) in src.iter().zip(tap.chunks_exact(cout)) {
                        for (o, k) in acc.iter_mut().zip(krow) {
                            *o += *a * *k;
                        }
                    }
                }
            }
            counter.add(per_pixel);
        }
    }
    Ok(out)
}

/// Conventional transpose convolution: zero-insertion upsampling, padding
/// by `p_orig`, then valid convolution.
pub fn transpose_conv_naive<T: Element>(
    input: &Tensor<T>,
    kernel: &Kernel<T>,
    p_orig: usize,
) -> Result<Tensor<T>> {
    transpose_conv_naive_counted(input, kernel, p_orig, &mut ())
}

pub fn transpose_conv_naive_counted<T: Element, C: MulCounter>(
    input: &Tensor<T>,
    kernel: &Kernel<T>,
    p_orig: usize,
    counter: &mut C,
) -> Result<Tensor<T>> {
    check_channels(input.channels(), kernel.cin())?;
    TConvGeometry::new(
        input.height(),
        input.width(),
        kernel.kh(),
        kernel.kw(),
        p_orig,
    )?;
    conv2d_valid_counted(&pad(&upsample2x(input), p_orig), kernel, counter)
}
