//! Randomized fused-vs-naive equivalence check.
//!
//! Inputs and kernels are small integers stored as `f32`, so every product
//! and partial sum is exactly representable and any mismatch is a logic
//! error rather than rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fused::transpose_conv_fused;
use crate::reference::{transpose_conv_naive, TConvGeometry};
use crate::segregation::segregate;
use crate::tensor::{first_mismatch, tensors_equal_exact, Kernel, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyOptions {
    pub cases: usize,
    pub seed: u64,
    pub max_size: usize,
    pub max_kernel: usize,
    pub max_padding: usize,
    pub max_channels: usize,
    /// Perturb one sub-kernel tap before running the fused path, to exercise
    /// the failure report.
    pub corrupt_subkernel: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            cases: 200,
            seed: 0,
            max_size: 16,
            max_kernel: 7,
            max_padding: 4,
            max_channels: 4,
            corrupt_subkernel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub case: usize,
    /// Seed that regenerates this case on its own.
    pub case_seed: u64,
    pub n_in: usize,
    pub kernel: usize,
    pub padding: usize,
    pub cin: usize,
    pub cout: usize,
    /// `(row, col, channel)` of the first differing output element.
    pub position: (usize, usize, usize),
    pub fused: f32,
    pub naive: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub cases_run: usize,
    pub failure: Option<Counterexample>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub input: Tensor<f32>,
    pub kernel: Kernel<f32>,
    pub padding: usize,
}

pub fn case_seed(seed: u64, case: usize) -> u64 {
    seed ^ (case as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws one valid case from the option ranges.
pub fn generate_case(opts: &VerifyOptions, case_seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let (n, k, p) = loop {
        let n = rng.gen_range(1..=opts.max_size.max(1));
        let k = rng.gen_range(1..=opts.max_kernel.max(1));
        let p = rng.gen_range(0..=opts.max_padding);
        if 2 * n - 1 + 2 * p >= k {
            break (n, k, p);
        }
    };
    let cin = rng.gen_range(1..=opts.max_channels.max(1));
    let cout = rng.gen_range(1..=opts.max_channels.max(1));
    let mut int = || rng.gen_range(-8i32..=8) as f32;
    Case {
        input: Tensor::from_fn(n, n, cin, |_, _, _| int()),
        kernel: Kernel::from_fn(k, k, cin, cout, |_, _, _, _| int()),
        padding: p,
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifySummary> {
    for case in 0..opts.cases {
        let seed = case_seed(opts.seed, case);
        let Case {
            input,
            kernel,
            padding,
        } = generate_case(opts, seed);
        let geom = TConvGeometry::new(
            input.height(),
            input.width(),
            kernel.kh(),
            kernel.kw(),
            padding,
        )?;
        let mut sks = segregate(&kernel, padding);
        if opts.corrupt_subkernel {
            if let Some(sub) = sks.subs().iter().position(|s| s.taps() > 0) {
                sks.sub_mut(sub).data_mut()[0] += 1.0;
            }
        }
        let fused = transpose_conv_fused(&input, &sks, &geom)?;
        let naive = transpose_conv_naive(&input, &kernel, padding)?;
        if !tensors_equal_exact(&fused, &naive) {
            let position = first_mismatch(&fused, &naive).unwrap_or_default();
            let (y, x, c) = position;
            return Ok(VerifySummary {
                cases_run: case + 1,
                failure: Some(Counterexample {
                    case,
                    case_seed: seed,
                    n_in: input.height(),
                    kernel: kernel.kh(),
                    padding,
                    cin: kernel.cin(),
                    cout: kernel.cout(),
                    position,
                    fused: fused.get(y, x, c),
                    naive: naive.get(y, x, c),
                }),
            });
        }
    }
    Ok(VerifySummary {
        cases_run: opts.cases,
        failure: None,
    })
}
