use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    softmax_cross_entropy, Conv2d, Dense, FusedTransposeConv, Layer, MaxPool2, Relu, Upsample2x,
};
use crate::error::Result;
use crate::tensor::{Element, Kernel, Tensor};

pub const INPUT_SIDE: usize = 28;
pub const KERNEL_SIDE: usize = 5;
pub const FILTERS: usize = 8;
pub const CLASSES: usize = 10;
/// 28 → 2·28 − 5 = 51 after the transpose convolution, 26 after pooling.
pub const TCONV_SIDE: usize = 2 * INPUT_SIDE - KERNEL_SIDE;
pub const POOLED_SIDE: usize = TCONV_SIDE.div_ceil(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Explicit upsampling followed by a valid convolution.
    Conventional,
    /// The segregated transpose convolution layer.
    Proposed,
}

impl ModelVariant {
    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::Conventional => "conventional",
            ModelVariant::Proposed => "proposed",
        }
    }
}

/// Single-sample classifier: transpose convolution (8 filters, 5×5) → ReLU
/// → 2×2 max pool → dense(10).
pub struct Model<T: Element> {
    variant: ModelVariant,
    layers: Vec<Box<dyn Layer<T>>>,
}

struct InitialWeights<T> {
    kernel: Kernel<T>,
    dense_w: Vec<T>,
    dense_b: Vec<T>,
}

fn initial_weights<T: Element>(seed: u64) -> InitialWeights<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Each output of the transpose convolution sees about a quarter of the taps.
    let k_scale = (6.0 / (KERNEL_SIDE * KERNEL_SIDE) as f64 * 4.0).sqrt() * 0.5;
    let kernel = Kernel::from_fn(KERNEL_SIDE, KERNEL_SIDE, 1, FILTERS, |_, _, _, _| {
        T::from_f64(rng.gen_range(-k_scale..k_scale)).unwrap()
    });
    let fan_in = POOLED_SIDE * POOLED_SIDE * FILTERS;
    let d_scale = (6.0 / (fan_in + CLASSES) as f64).sqrt();
    let dense_w = (0..fan_in * CLASSES)
        .map(|_| T::from_f64(rng.gen_range(-d_scale..d_scale)).unwrap())
        .collect();
    InitialWeights {
        kernel,
        dense_w,
        dense_b: vec![T::zero(); CLASSES],
    }
}

impl<T: Element> Model<T> {
    /// Builds either variant. Equal seeds give both variants the same weights.
    pub fn new(variant: ModelVariant, seed: u64) -> Self {
        let w = initial_weights::<T>(seed);
        let dense = Dense::new(
            POOLED_SIDE * POOLED_SIDE * FILTERS,
            CLASSES,
            w.dense_w,
            w.dense_b,
        )
        .expect("dense shapes are consistent");
        let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
        match variant {
            ModelVariant::Conventional => {
                layers.push(Box::new(Upsample2x::default()));
                layers.push(Box::new(Conv2d::new(w.kernel, 0)));
            }
            ModelVariant::Proposed => layers.push(Box::new(FusedTransposeConv::new(w.kernel, 0))),
        }
        layers.push(Box::new(Relu::default()));
        layers.push(Box::new(MaxPool2::default()));
        layers.push(Box::new(dense));
        Self { variant, layers }
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn layer_names(&self) -> Vec<&'static str> {
        self.layers.iter().map(|l| l.name()).collect()
    }

    /// Runs every layer, returning each layer's output (the last is the logits).
    pub fn forward_trace(&mut self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let next = layer.forward(outs.last().unwrap_or(input))?;
            outs.push(next);
        }
        Ok(outs)
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Loss for one sample without touching gradients.
    pub fn loss(&mut self, input: &Tensor<T>, label: u8) -> Result<T> {
        let logits = self.forward(input)?;
        Ok(softmax_cross_entropy(logits.data(), label as usize)?.0)
    }

    /// Forward, loss and backward for one sample; gradients accumulate.
    /// Returns the loss and the gradient with respect to the input.
    pub fn accumulate(&mut self, input: &Tensor<T>, label: u8) -> Result<(T, Tensor<T>)> {
        let logits = self.forward(input)?;
        let (loss, grad) = softmax_cross_entropy(logits.data(), label as usize)?;
        let mut g = Tensor::from_parts(1, 1, CLASSES, grad);
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok((loss, g))
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    /// Plain SGD step: `p -= scale · g`.
    pub fn sgd_step(&mut self, scale: T) {
        for layer in &mut self.layers {
            for (p, g) in layer.params_and_grads() {
                for (pv, gv) in p.iter_mut().zip(g.iter()) {
                    *pv = *pv - scale * *gv;
                }
            }
        }
    }

    /// All parameters concatenated in layer order.
    pub fn params_flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.params()
                    .into_iter()
                    .flatten()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// All parameter gradients concatenated in layer order.
    pub fn grads_flat(&mut self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for (_, g) in layer.params_and_grads() {
                out.extend_from_slice(g);
            }
        }
        out
    }

    /// Overwrites parameter `index` of the flattened parameter vector.
    pub fn set_param(&mut self, mut index: usize, value: T) {
        for layer in &mut self.layers {
            for (p, _) in layer.params_and_grads() {
                if index < p.len() {
                    p[index] = value;
                    return;
                }
                index -= p.len();
            }
        }
        panic!("parameter index out of range");
    }
}

pub fn build_conventional_model<T: Element>(seed: u64) -> Model<T> {
    Model::new(ModelVariant::Conventional, seed)
}

pub fn build_proposed_model<T: Element>(seed: u64) -> Model<T> {
    Model::new(ModelVariant::Proposed, seed)
}
