//! Layers with hand-written backward passes.

use crate::error::{contract, Error, Result};
use crate::fused::transpose_conv_fused;
use crate::reference::{conv2d_valid, TConvGeometry};
use crate::segregation::segregate;
use crate::tensor::{crop, downsample2x, pad, upsample2x, Element, Kernel, Tensor};

/// A differentiable layer. `backward` consumes the state cached by the most
/// recent `forward` and accumulates parameter gradients until
/// [`Layer::zero_grads`] is called.
pub trait Layer<T: Element>: Send {
    fn name(&self) -> &'static str;

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&[T]> {
        Vec::new()
    }

    /// `(parameter, gradient)` pairs in the same order as [`Layer::params`].
    fn params_and_grads(&mut self) -> Vec<(&mut [T], &mut [T])> {
        Vec::new()
    }

    fn zero_grads(&mut self) {
        for (_, g) in self.params_and_grads() {
            g.fill(T::zero());
        }
    }
}

fn not_run(name: &str) -> Error {
    Error::State(format!("{name}: backward called before forward"))
}

fn check_grad_dims<T: Element>(
    name: &str,
    grad: &Tensor<T>,
    dims: (usize, usize, usize),
) -> Result<()> {
    if grad.dims() != dims {
        return Err(contract(format!(
            "{name}: gradient dims {:?} do not match output dims {dims:?}",
            grad.dims()
        )));
    }
    Ok(())
}

/// Transpose convolution computed with segregated sub-kernels, forward and
/// backward. Neither pass builds the zero-inserted map.
pub struct FusedTransposeConv<T> {
    kernel: Kernel<T>,
    grad: Vec<T>,
    p_orig: usize,
    cache: Option<(Tensor<T>, TConvGeometry)>,
}

impl<T: Element> FusedTransposeConv<T> {
    pub fn new(kernel: Kernel<T>, p_orig: usize) -> Self {
        let grad = vec![T::zero(); kernel.data().len()];
        Self {
            kernel,
            grad,
            p_orig,
            cache: None,
        }
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn kernel_grad(&self) -> &[T] {
        &self.grad
    }
}

impl<T: Element> Layer<T> for FusedTransposeConv<T> {
    fn name(&self) -> &'static str {
        "fused_transpose_conv"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let k = &self.kernel;
        let geom = TConvGeometry::new(input.height(), input.width(), k.kh(), k.kw(), self.p_orig)?;
        // Weights change between steps, so segregate on every call.
        let out = transpose_conv_fused(input, &segregate(k, self.p_orig), &geom)?;
        self.cache = Some((pad(input, geom.p_fused), geom));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (padded, geom) = self.cache.as_ref().ok_or_else(|| not_run(self.name()))?;
        let cout = self.kernel.cout();
        check_grad_dims(self.name(), grad_out, (geom.out_h, geom.out_w, cout))?;
        let sks = segregate(&self.kernel, self.p_orig);
        let mut grad_padded = Tensor::zeros(padded.height(), padded.width(), padded.channels());
        let cin = self.kernel.cin();
        for y in 0..geom.out_h {
            for x in 0..geom.out_w {
                let class = (y % 2) * 2 + x % 2;
                let sub = sks.sub(class);
                let (off_r, off_c) = sks.class_input_offset(class);
                let (u0, v0) = sks.first_tap(class);
                let g = grad_out.pixel(y, x);
                let (i, j) = (y / 2 + off_r, x / 2 + off_c);
                for u in 0..sub.kh() {
                    for v in 0..sub.kw() {
                        let tap = sub.tap(u, v);
                        let src = padded.pixel(i + u, j + v);
                        let dst = grad_padded.pixel_mut(i + u, j + v);
                        let gk_start = self.kernel.index(u0 + 2 * u, v0 + 2 * v, 0, 0);
                        let gk = &mut self.grad[gk_start..gk_start + cin * cout];
                        for ch in 0..cin {
                            let krow = &tap[ch * cout..(ch + 1) * cout];
                            let gkrow = &mut gk[ch * cout..(ch + 1) * cout];
                            let mut acc = T::zero();
                            for f in 0..cout {
                                acc += g[f] * krow[f];
                                gkrow[f] += src[ch] * g[f];
                            }
                            dst[ch] += acc;
                        }
                    }
                }
            }
        }
        if geom.p_fused == 0 {
            Ok(grad_padded)
        } else {
            crop(&grad_padded, geom.p_fused)
        }
    }

    fn params(&self) -> Vec<&[T]> {
        vec![self.kernel.data()]
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [T], &mut [T])> {
        vec![(self.kernel.data_mut(), &mut self.grad)]
    }
}

/// Zero-insertion upsampling as a layer.
#[derive(Default)]
pub struct Upsample2x {
    input_dims: Option<(usize, usize, usize)>,
}

impl<T: Element> Layer<T> for Upsample2x {
    fn name(&self) -> &'static str {
        "upsample2x"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_dims = Some(input.dims());
        Ok(upsample2x(input))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, c) = self.input_dims.ok_or_else(|| not_run("upsample2x"))?;
        check_grad_dims("upsample2x", grad_out, (2 * h - 1, 2 * w - 1, c))?;
        downsample2x(grad_out)
    }
}

/// Stride-1 convolution with symmetric zero padding.
pub struct Conv2d<T> {
    kernel: Kernel<T>,
    grad: Vec<T>,
    padding: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Element> Conv2d<T> {
    pub fn new(kernel: Kernel<T>, padding: usize) -> Self {
        let grad = vec![T::zero(); kernel.data().len()];
        Self {
            kernel,
            grad,
            padding,
            cache: None,
        }
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }
}

impl<T: Element> Layer<T> for Conv2d<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let padded = pad(input, self.padding);
        let out = conv2d_valid(&padded, &self.kernel)?;
        self.cache = Some(padded);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let padded = self.cache.as_ref().ok_or_else(|| not_run("conv2d"))?;
        let k = &self.kernel;
        let (kh, kw, cin, cout) = (k.kh(), k.kw(), k.cin(), k.cout());
        let (oh, ow) = (padded.height() - kh + 1, padded.width() - kw + 1);
        check_grad_dims("conv2d", grad_out, (oh, ow, cout))?;
        let mut grad_padded = Tensor::zeros(padded.height(), padded.width(), cin);
        for y in 0..oh {
            for x in 0..ow {
                let g = grad_out.pixel(y, x);
                for u in 0..kh {
                    for v in 0..kw {
                        let tap = k.tap(u, v);
                        let src = padded.pixel(y + u, x + v);
                        let dst = grad_padded.pixel_mut(y + u, x + v);
                        let gk_start = k.index(u, v, 0, 0);
                        let gk = &mut self.grad[gk_start..gk_start + cin * cout];
                        for ch in 0..cin {
                            let krow = &tap[ch * cout..(ch + 1) * cout];
                            let gkrow = &mut gk[ch * cout..(ch + 1) * cout];
                            let mut acc = T::zero();
                            for f in 0..cout {
                                acc += g[f] * krow[f];
                                gkrow[f] += src[ch] * g[f];
                            }
                            dst[ch] += acc;
                        }
                    }
                }
            }
        }
        if self.padding == 0 {
            Ok(grad_padded)
        } else {
            crop(&grad_padded, self.padding)
        }
    }

    fn params(&self) -> Vec<&[T]> {
        vec![self.kernel.data()]
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [T], &mut [T])> {
        vec![(self.kernel.data_mut(), &mut self.grad)]
    }
}

#[derive(Default)]
pub struct Relu {
    /// Which inputs were positive, plus the input dims.
    mask: Option<(Vec<bool>, (usize, usize, usize))>,
}

impl<T: Element> Layer<T> for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = input.data().iter().map(|v| *v > T::zero()).collect();
        self.mask = Some((mask, input.dims()));
        Ok(input.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (mask, dims) = self.mask.as_ref().ok_or_else(|| not_run("relu"))?;
        check_grad_dims("relu", grad_out, *dims)?;
        let (h, w, c) = *dims;
        let data = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(g, m)| if *m { *g } else { T::zero() })
            .collect();
        Ok(Tensor::from_parts(h, w, c, data))
    }
}

/// 2×2 max pooling, stride 2, ceiling mode: a trailing odd row or column
/// forms its own (clipped) window.
#[derive(Default)]
pub struct MaxPool2 {
    /// Flat input index of each output's maximum, plus the input dims.
    argmax: Option<(Vec<usize>, (usize, usize, usize))>,
}

impl MaxPool2 {
    pub fn output_dims(h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(2), w.div_ceil(2))
    }
}

impl<T: Element> Layer<T> for MaxPool2 {
    fn name(&self) -> &'static str {
        "maxpool2"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, c) = input.dims();
        let (oh, ow) = MaxPool2::output_dims(h, w);
        let mut out = Tensor::zeros(oh, ow, c);
        let mut argmax = Vec::with_capacity(oh * ow * c);
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let mut best = input.index(2 * y, 2 * x, ch);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let (yy, xx) = (2 * y + dy, 2 * x + dx);
                        if yy < h && xx < w {
                            let idx = input.index(yy, xx, ch);
                            if input.data()[idx] > input.data()[best] {
                                best = idx;
                            }
                        }
                    }
                    out.set(y, x, ch, input.data()[best]);
                    argmax.push(best);
                }
            }
        }
        self.argmax = Some((argmax, (h, w, c)));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, (h, w, c)) = self.argmax.as_ref().ok_or_else(|| not_run("maxpool2"))?;
        let (oh, ow) = MaxPool2::output_dims(*h, *w);
        check_grad_dims("maxpool2", grad_out, (oh, ow, *c))?;
        let mut grad = Tensor::zeros(*h, *w, *c);
        for (g, &idx) in grad_out.data().iter().zip(argmax) {
            grad.data_mut()[idx] += *g;
        }
        Ok(grad)
    }
}

/// Fully connected layer over the flattened input, producing a `1 × 1 × out`
/// tensor.
pub struct Dense<T> {
    in_features: usize,
    out_features: usize,
    /// Row-major `out × in`.
    weights: Vec<T>,
    bias: Vec<T>,
    grad_w: Vec<T>,
    grad_b: Vec<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Element> Dense<T> {
    pub fn new(
        in_features: usize,
        out_features: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if weights.len() != in_features * out_features || bias.len() != out_features {
            return Err(contract(format!(
                "dense {in_features}->{out_features} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            grad_w: vec![T::zero(); weights.len()],
            grad_b: vec![T::zero(); bias.len()],
            weights,
            bias,
            cache: None,
        })
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }
}

impl<T: Element> Layer<T> for Dense<T> {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        if input.len() != self.in_features {
            return Err(contract(format!(
                "dense expects {} inputs, got {}",
                self.in_features,
                input.len()
            )));
        }
        let x = input.data();
        let out = self
            .weights
            .chunks_exact(self.in_features)
            .zip(&self.bias)
            .map(|(row, b)| {
                let mut acc = *b;
                for (w, v) in row.iter().zip(x) {
                    acc += *w * *v;
                }
                acc
            })
            .collect();
        self.cache = Some(input.clone());
        Ok(Tensor::from_parts(1, 1, self.out_features, out))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.as_ref().ok_or_else(|| not_run("dense"))?;
        check_grad_dims("dense", grad_out, (1, 1, self.out_features))?;
        let (h, w, c) = input.dims();
        let mut grad_in = vec![T::zero(); self.in_features];
        let rows = self
            .weights
            .chunks_exact(self.in_features)
            .zip(self.grad_w.chunks_exact_mut(self.in_features));
        for ((row, grow), (g, gb)) in rows.zip(grad_out.data().iter().zip(&mut self.grad_b)) {
            *gb += *g;
            for ((wv, gw), (x, gi)) in row
                .iter()
                .zip(grow)
                .zip(input.data().iter().zip(&mut grad_in))
            {
                *gw += *g * *x;
                *gi += *g * *wv;
            }
        }
        Ok(Tensor::from_parts(h, w, c, grad_in))
    }

    fn params(&self) -> Vec<&[T]> {
        vec![&self.weights, &self.bias]
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [T], &mut [T])> {
        vec![
            (&mut self.weights, &mut self.grad_w),
            (&mut self.bias, &mut self.grad_b),
        ]
    }
}

/// Numerically stable softmax cross-entropy for one sample: returns the loss and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Element>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(contract(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    let loss = sum.ln() - (logits[label] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| e / sum - if i == label { T::one() } else { T::zero() })
        .collect();
    Ok((loss, grad))
}
