//! Kernel segregation: splitting a kernel into the four sub-kernels that
//! serve the four output parity classes.
//!
//! On the zero-inserted, padded map a kernel tap `(u, v)` only ever meets a
//! real input sample at output `(y, x)` when `y + u − P` and `x + v − P` are
//! both even. Grouping output positions by `(y mod 2, x mod 2)` therefore
//! groups kernel taps by parity as well, and each group can be applied to the
//! original input as an ordinary dense convolution.

use crate::error::{contract, Result};
use crate::tensor::{Element, Kernel};

/// Class index for output parity `(row, col)`.
#[inline]
pub fn class_index(row_parity: usize, col_parity: usize) -> usize {
    row_parity * 2 + col_parity
}

/// First kernel row (or column) active for outputs of the given parity.
#[inline]
pub fn first_active_tap(p_orig: usize, parity: usize) -> usize {
    (p_orig + parity) % 2
}

/// Number of kernel rows (or columns) active for outputs of the given parity.
#[inline]
pub fn active_tap_count(k: usize, p_orig: usize, parity: usize) -> usize {
    let first = first_active_tap(p_orig, parity);
    if k > first {
        (k - first).div_ceil(2)
    } else {
        0
    }
}

/// Offset into the `⌊P/2⌋`-padded original input at which the window of a
/// parity class starts, relative to the block index.
#[inline]
pub fn class_input_offset(p_orig: usize, parity: usize) -> usize {
    // (parity + first − P) / 2 + ⌊P/2⌋, which always lands in {0, 1}.
    let first = first_active_tap(p_orig, parity) as isize;
    let p = p_orig as isize;
    let off = (parity as isize + first - p) / 2 + p / 2;
    debug_assert!(off == 0 || off == 1);
    off as usize
}

/// The four parity sub-kernels of one original kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SubKernelSet<T> {
    subs: [Kernel<T>; 4],
    class_input_offsets: [(usize, usize); 4],
    first_taps: [(usize, usize); 4],
    source_dims: (usize, usize),
    p_orig_parity: usize,
}

impl<T: Element> SubKernelSet<T> {
    /// Sub-kernel for output class `class_index(r, c)`.
    pub fn sub(&self, class: usize) -> &Kernel<T> {
        &self.subs[class]
    }

    pub fn subs(&self) -> &[Kernel<T>; 4] {
        &self.subs
    }

    /// Mutable access, for tests that need a deliberately broken set.
    pub fn sub_mut(&mut self, class: usize) -> &mut Kernel<T> {
        &mut self.subs[class]
    }

    pub fn class_input_offset(&self, class: usize) -> (usize, usize) {
        self.class_input_offsets[class]
    }

    /// Original-kernel tap that sub-kernel tap `(0, 0)` of `class` came from.
    pub fn first_tap(&self, class: usize) -> (usize, usize) {
        self.first_taps[class]
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn p_orig_parity(&self) -> usize {
        self.p_orig_parity
    }

    pub fn cin(&self) -> usize {
        self.subs[0].cin()
    }

    pub fn cout(&self) -> usize {
        self.subs[0].cout()
    }
}

/// Splits `kernel` into the four parity sub-kernels for padding `p_orig`.
///
/// Sub-kernel `(r, c)` holds taps `(u, v)` with `u ≡ P + r` and `v ≡ P + c`
/// (mod 2), in their original `(u, v)` order. For odd `P` this swaps the
/// even- and odd-indexed tap sets relative to even `P`.
pub fn segregate<T: Element>(kernel: &Kernel<T>, p_orig: usize) -> SubKernelSet<T> {
    let (kh, kw, cin, cout) = (kernel.kh(), kernel.kw(), kernel.cin(), kernel.cout());
    let block = cin * cout;
    let mut first_taps = [(0, 0); 4];
    let mut offsets = [(0, 0); 4];
    let subs = std::array::from_fn(|class| {
        let (r, c) = (class / 2, class % 2);
        let (u0, v0) = (first_active_tap(p_orig, r), first_active_tap(p_orig, c));
        let (rows, cols) = (
            active_tap_count(kh, p_orig, r),
            active_tap_count(kw, p_orig, c),
        );
        first_taps[class] = (u0, v0);
        offsets[class] = (class_input_offset(p_orig, r), class_input_offset(p_orig, c));
        let mut data = Vec::with_capacity(rows * cols * block);
        for u in 0..rows {
            for v in 0..cols {
                data.extend_from_slice(kernel.tap(u0 + 2 * u, v0 + 2 * v));
            }
        }
        Kernel::from_parts(rows, cols, cin, cout, data)
    });
    SubKernelSet {
        subs,
        class_input_offsets: offsets,
        first_taps,
        source_dims: (kh, kw),
        p_orig_parity: p_orig % 2,
    }
}

/// Sub-kernel sizes for an odd `n × n` kernel under even padding, in class
/// order (0,0), (0,1), (1,0), (1,1).
pub fn sub_kernel_dims(n: usize) -> Result<[(usize, usize); 4]> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(contract(format!(
            "closed-form sub-kernel sizes need an odd kernel size, got {n}; use segregate"
        )));
    }
    let (hi, lo) = (n.div_ceil(2), n / 2);
    Ok([(hi, hi), (hi, lo), (lo, hi), (lo, lo)])
}
