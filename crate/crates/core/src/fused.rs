//! Transpose convolution computed directly from the original input.
//!
//! Output position `(2i + r, 2j + c)` is a dense convolution of the
//! `⌊P/2⌋`-padded input with sub-kernel `(r, c)`, starting at
//! `(i + off_r, j + off_c)`. No zero-inserted map is ever built, and every
//! multiplication involves a real input sample or a border zero of the small
//! padding.

use std::ops::Range;

use crate::error::{contract, Result};
use crate::reference::{MulCounter, TConvGeometry};
use crate::segregation::{class_index, segregate, SubKernelSet};
use crate::tensor::{pad, Element, Kernel, Tensor};

fn check_inputs<T: Element>(
    input: &Tensor<T>,
    sks: &SubKernelSet<T>,
    geom: &TConvGeometry,
) -> Result<()> {
    if input.channels() != sks.cin() {
        return Err(contract(format!(
            "input has {} channels but sub-kernels expect {}",
            input.channels(),
            sks.cin()
        )));
    }
    if (input.height(), input.width()) != (geom.in_h, geom.in_w) {
        return Err(contract(format!(
            "geometry is for a {}x{} input, got {}x{}",
            geom.in_h,
            geom.in_w,
            input.height(),
            input.width()
        )));
    }
    if sks.source_dims() != (geom.kh, geom.kw) || sks.p_orig_parity() != geom.p_orig % 2 {
        return Err(contract(
            "sub-kernels were not segregated for this geometry's kernel and padding",
        ));
    }
    Ok(())
}

/// Computes output rows `rows` into `out`, which holds exactly those rows.
fn fill_rows<T: Element, C: MulCounter>(
    padded: &Tensor<T>,
    sks: &SubKernelSet<T>,
    geom: &TConvGeometry,
    rows: Range<usize>,
    out: &mut [T],
    counter: &mut C,
) {
    let cout = sks.cout();
    let row_len = geom.out_w * cout;
    for y in rows.clone() {
        let (i, r) = (y / 2, y % 2);
        let out_row = &mut out[(y - rows.start) * row_len..(y - rows.start + 1) * row_len];
        for c in 0..2 {
            let class = class_index(r, c);
            let sub = sks.sub(class);
            let (off_r, off_c) = sks.class_input_offset(class);
            let per_pixel = (sub.taps() * sub.cin() * cout) as u64;
            // Clamped so the odd trailing column of the block grid is skipped.
            let blocks = (geom.out_w + 1 - c) / 2;
            for j in 0..blocks {
                let x = 2 * j + c;
                let acc = &mut out_row[x * cout..(x + 1) * cout];
                for u in 0..sub.kh() {
                    for v in 0..sub.kw() {
                        let src = padded.pixel(i + off_r + u, j + off_c + v);
                        let tap = sub.tap(u, v);
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
    }
}

/// Fused transpose convolution. Bitwise equal to
/// [`transpose_conv_naive`](crate::reference::transpose_conv_naive) up to the
/// sign of zero results.
pub fn transpose_conv_fused<T: Element>(
    input: &Tensor<T>,
    sks: &SubKernelSet<T>,
    geom: &TConvGeometry,
) -> Result<Tensor<T>> {
    transpose_conv_fused_counted(input, sks, geom, &mut ())
}

pub fn transpose_conv_fused_counted<T: Element, C: MulCounter>(
    input: &Tensor<T>,
    sks: &SubKernelSet<T>,
    geom: &TConvGeometry,
    counter: &mut C,
) -> Result<Tensor<T>> {
    check_inputs(input, sks, geom)?;
    let padded = pad(input, geom.p_fused);
    let mut out = Tensor::zeros(geom.out_h, geom.out_w, sks.cout());
    fill_rows(&padded, sks, geom, 0..geom.out_h, out.data_mut(), counter);
    Ok(out)
}

/// Multi-threaded fused transpose convolution.
///
/// Output rows are split into `workers` contiguous bands, one writer per
/// band. Each element is still accumulated by one thread in the sequential
/// order, so the result is bitwise identical for any worker count.
pub fn transpose_conv_fused_parallel<T: Element>(
    input: &Tensor<T>,
    sks: &SubKernelSet<T>,
    geom: &TConvGeometry,
    workers: usize,
) -> Result<Tensor<T>> {
    if workers == 0 {
        return Err(contract("worker count must be positive"));
    }
    check_inputs(input, sks, geom)?;
    let padded = pad(input, geom.p_fused);
    let mut out = Tensor::zeros(geom.out_h, geom.out_w, sks.cout());
    let row_len = geom.out_w * sks.cout();
    let band = geom.out_h.div_ceil(workers);
    std::thread::scope(|scope| {
        for (k, chunk) in out.data_mut().chunks_mut(band * row_len).enumerate() {
            let start = k * band;
            let rows = start..start + chunk.len() / row_len;
            let padded = &padded;
            scope.spawn(move || fill_rows(padded, sks, geom, rows, chunk, &mut ()));
        }
    });
    Ok(out)
}

/// Segregates `kernel` and runs the fused path in one call.
pub fn transpose_conv<T: Element>(
    input: &Tensor<T>,
    kernel: &Kernel<T>,
    p_orig: usize,
) -> Result<Tensor<T>> {
    let geom = TConvGeometry::new(
        input.height(),
        input.width(),
        kernel.kh(),
        kernel.kw(),
        p_orig,
    )?;
    transpose_conv_fused(input, &segregate(kernel, p_orig), &geom)
}
