//! Dense HWC feature maps and 4-D filter banks.
//!
//! Both containers are row-major with the channel axis innermost, so one
//! output pixel's channels (or one kernel tap's `cin × cout` block) are
//! contiguous in memory.

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{contract, shape, Error, Result};

/// Element precision of a tensor, also used as the on-disk precision code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn code(self) -> u32 {
        match self {
            Precision::Single => 0,
            Precision::Double => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Precision::Single),
            1 => Some(Precision::Double),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

/// Floating point element type usable in tensors and kernels.
pub trait Element:
    Float + FromPrimitive + AddAssign + Default + Debug + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one element from exactly `PRECISION.bytes()` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const PRECISION: Precision = Precision::Single;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::Double;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// A `height × width × channels` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    /// Builds a tensor from external data, rejecting bad lengths and
    /// non-finite values.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(shape(format!(
                "tensor dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(shape(format!(
                "tensor {height}x{width}x{channels} needs {} elements, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Internal constructor for computed data; the length must already match.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::from_parts(
            height,
            width,
            channels,
            vec![T::zero(); height * width * channels],
        )
    }

    /// Builds a tensor from a function of `(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_parts(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the element buffer in bytes.
    pub fn bytes(&self) -> usize {
        self.data.len() * T::PRECISION.bytes()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [T] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Converts to another precision.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.height,
            self.width,
            self.channels,
            self.data
                .iter()
                .map(|v| U::from(*v).expect("float conversion"))
                .collect(),
        )
    }
}

/// A `kh × kw × cin × cout` filter bank.
///
/// Sub-kernels produced by segregation may have zero rows or columns; user
/// kernels built through [`Kernel::new`] may not.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    data: Vec<T>,
}

impl<T: Element> Kernel<T> {
    pub fn new(kh: usize, kw: usize, cin: usize, cout: usize, data: Vec<T>) -> Result<Self> {
        if kh == 0 || kw == 0 || cin == 0 || cout == 0 {
            return Err(shape(format!(
                "kernel dims must be positive, got {kh}x{kw}x{cin}x{cout}"
            )));
        }
        if data.len() != kh * kw * cin * cout {
            return Err(shape(format!(
                "kernel {kh}x{kw}x{cin}x{cout} needs {} elements, got {}",
                kh * kw * cin * cout,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            kh,
            kw,
            cin,
            cout,
            data,
        })
    }

    pub(crate) fn from_parts(kh: usize, kw: usize, cin: usize, cout: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), kh * kw * cin * cout);
        Self {
            kh,
            kw,
            cin,
            cout,
            data,
        }
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        Self::from_parts(kh, kw, cin, cout, vec![T::zero(); kh * kw * cin * cout])
    }

    /// Builds a kernel from a function of `(u, v, cin, cout)`.
    pub fn from_fn(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(kh * kw * cin * cout);
        for u in 0..kh {
            for v in 0..kw {
                for c in 0..cin {
                    for o in 0..cout {
                        data.push(f(u, v, c, o));
                    }
                }
            }
        }
        Self::from_parts(kh, kw, cin, cout, data)
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn cin(&self) -> usize {
        self.cin
    }

    pub fn cout(&self) -> usize {
        self.cout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Number of spatial taps, `kh × kw`.
    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize, c: usize, o: usize) -> usize {
        ((u * self.kw + v) * self.cin + c) * self.cout + o
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize, o: usize) -> T {
        self.data[self.index(u, v, c, o)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: usize, o: usize, val: T) {
        let i = self.index(u, v, c, o);
        self.data[i] = val;
    }

    /// The `cin × cout` block of one spatial tap.
    #[inline]
    pub fn tap(&self, u: usize, v: usize) -> &[T] {
        let block = self.cin * self.cout;
        let start = (u * self.kw + v) * block;
        &self.data[start..start + block]
    }

    pub fn cast<U: Element>(&self) -> Kernel<U> {
        Kernel::from_parts(
            self.kh,
            self.kw,
            self.cin,
            self.cout,
            self.data
                .iter()
                .map(|v| U::from(*v).expect("float conversion"))
                .collect(),
        )
    }
}

/// Surrounds `t` with `p` rows/columns of zeros on every side.
pub fn pad<T: Element>(t: &Tensor<T>, p: usize) -> Tensor<T> {
    if p == 0 {
        return t.clone();
    }
    let (h, w, c) = t.dims();
    let mut out = Tensor::zeros(h + 2 * p, w + 2 * p, c);
    let row = w * c;
    for y in 0..h {
        let dst = out.index(y + p, p, 0);
        out.data[dst..dst + row].copy_from_slice(&t.data[y * row..(y + 1) * row]);
    }
    out
}

/// Inverse of [`pad`]: drops `p` border rows/columns on every side.
pub fn crop<T: Element>(t: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let (h, w, c) = t.dims();
    if h <= 2 * p || w <= 2 * p {
        return Err(shape(format!("cannot crop {p} from a {h}x{w} tensor")));
    }
    let (oh, ow) = (h - 2 * p, w - 2 * p);
    let mut data = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        let src = t.index(y + p, p, 0);
        data.extend_from_slice(&t.data[src..src + ow * c]);
    }
    Ok(Tensor::from_parts(oh, ow, c, data))
}

/// Zero-insertion upsampling: `h × w` becomes `(2h−1) × (2w−1)` with the
/// original values at even coordinates.
pub fn upsample2x<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = t.dims();
    let mut out = Tensor::zeros(2 * h - 1, 2 * w - 1, c);
    for y in 0..h {
        for x in 0..w {
            out.pixel_mut(2 * y, 2 * x).copy_from_slice(t.pixel(y, x));
        }
    }
    out
}

/// Reads back the even-coordinate samples of an upsampled map. Used by the
/// conventional network layer's backward pass.
pub fn downsample2x<T: Element>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = t.dims();
    if h % 2 == 0 || w % 2 == 0 {
        return Err(shape(format!(
            "{h}x{w} is not the size of a zero-inserted map"
        )));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(oh, ow, c);
    for y in 0..oh {
        for x in 0..ow {
            out.pixel_mut(y, x).copy_from_slice(t.pixel(2 * y, 2 * x));
        }
    }
    Ok(out)
}

/// Bitwise equality of dims and elements, except that `+0.0 == -0.0`.
pub fn tensors_equal_exact<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> bool {
    a.dims() == b.dims() && a.data.iter().zip(&b.data).all(|(x, y)| x == y)
}

/// Elementwise `|a − b| ≤ rel_tol · max(|a|, |b|, 1)`.
pub fn tensors_equal_approx<T: Element>(a: &Tensor<T>, b: &Tensor<T>, rel_tol: f64) -> bool {
    a.dims() == b.dims()
        && a.data.iter().zip(&b.data).all(|(x, y)| {
            let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
            (x - y).abs() <= rel_tol * x.abs().max(y.abs()).max(1.0)
        })
}

/// First position where two same-shaped tensors differ, for diagnostics.
pub fn first_mismatch<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Option<(usize, usize, usize)> {
    if a.dims() != b.dims() {
        return Some((0, 0, 0));
    }
    let i = a.data.iter().zip(&b.data).position(|(x, y)| x != y)?;
    let c = a.channels;
    Some((i / c / a.width, (i / c) % a.width, i % c))
}

pub(crate) fn check_channels(input_channels: usize, kernel_cin: usize) -> Result<()> {
    if input_channels != kernel_cin {
        return Err(contract(format!(
            "input has {input_channels} channels but kernel expects {kernel_cin}"
        )));
    }
    Ok(())
}
