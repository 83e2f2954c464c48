//! Central finite-difference gradient checks in double precision.
//!
//! The scalar objective for a layer is `Σ forward(x) ⊙ R` for a fixed random
//! `R`, so `R` is the upstream gradient fed to `backward`. Agreement is
//! measured per gradient tensor as `‖a − n‖₂ / (‖a‖₂ + ‖n‖₂)`, which stays
//! meaningful when individual entries are near zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{softmax_cross_entropy, Layer};
use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `‖a − n‖₂ / (‖a‖₂ + ‖n‖₂)`, or 0 when both are exactly zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub layer: &'static str,
    pub input_error: f64,
    pub param_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.param_errors
            .iter()
            .copied()
            .fold(self.input_error, f64::max)
    }
}

fn objective(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, r: &[f64]) -> Result<f64> {
    let out = layer.forward(x)?;
    Ok(out.data().iter().zip(r).map(|(o, w)| o * w).sum())
}

/// Compares a layer's analytic input and parameter gradients at `input`
/// against central differences with step `eps`.
pub fn check_layer(
    layer: &mut dyn Layer<f64>,
    input: &Tensor<f64>,
    seed: u64,
    eps: f64,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = layer.forward(input)?;
    let r_data: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (h, w, c) = out.dims();
    let r = Tensor::new(h, w, c, r_data.clone())?;

    layer.zero_grads();
    let grad_in = layer.backward(&r)?;
    let analytic_params: Vec<Vec<f64>> = layer
        .params_and_grads()
        .into_iter()
        .map(|(_, g)| g.to_vec())
        .collect();

    let mut x = input.clone();
    let mut numeric_in = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let plus = objective(layer, &x, &r_data)?;
        x.data_mut()[i] = orig - eps;
        let minus = objective(layer, &x, &r_data)?;
        x.data_mut()[i] = orig;
        numeric_in.push((plus - minus) / (2.0 * eps));
    }

    let mut param_errors = Vec::new();
    for (t, analytic) in analytic_params.iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..analytic.len() {
            let orig = layer.params_and_grads()[t].0[j];
            layer.params_and_grads()[t].0[j] = orig + eps;
            let plus = objective(layer, input, &r_data)?;
            layer.params_and_grads()[t].0[j] = orig - eps;
            let minus = objective(layer, input, &r_data)?;
            layer.params_and_grads()[t].0[j] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        param_errors.push(relative_error(analytic, &numeric));
    }

    Ok(GradCheck {
        layer: layer.name(),
        input_error: relative_error(grad_in.data(), &numeric_in),
        param_errors,
    })
}

/// Checks the softmax cross-entropy gradient with respect to the logits.
pub fn check_softmax_cross_entropy(logits: &[f64], label: usize, eps: f64) -> Result<f64> {
    let (_, analytic) = softmax_cross_entropy(logits, label)?;
    let mut z = logits.to_vec();
    let mut numeric = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let orig = z[i];
        z[i] = orig + eps;
        let plus = softmax_cross_entropy(&z, label)?.0;
        z[i] = orig - eps;
        let minus = softmax_cross_entropy(&z, label)?.0;
        z[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }
    Ok(relative_error(&analytic, &numeric))
}
