//! Wall-clock comparison of the naive, fused and multi-threaded fused
//! transpose convolutions on seeded random data.
//!
//! Protocol: one untimed warmup, then `reps` timed runs on a monotonic
//! clock; the median is reported.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{gan_model, LayerShape};
use crate::error::{contract, Result};
use crate::fused::{transpose_conv_fused, transpose_conv_fused_parallel};
use crate::reference::transpose_conv_naive;
use crate::segregation::segregate;
use crate::tensor::{Kernel, Tensor};

pub const MIN_REPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Naive,
    Fused,
    FusedParallel,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Fused => "fused",
            Variant::FusedParallel => "fused_parallel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub label: String,
    pub shape: LayerShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub label: String,
    pub shape: LayerShape,
    pub variant: Variant,
    pub workers: usize,
    pub wall_seconds: f64,
    pub repetitions: usize,
    pub speedup_vs_naive: f64,
}

/// 224×224×3 images with 3×3, 4×4 and 5×5 single-filter kernels. Padding is
/// `n − 2` for an `n × n` kernel; the label records it.
pub fn flowers_preset() -> Vec<BenchCase> {
    [5, 4, 3]
        .into_iter()
        .map(|n| {
            let shape = LayerShape::new(224, 3, 1, n, n - 2);
            BenchCase {
                label: format!("flowers 224x224x3 k{n}x{n}x3 P={}", n - 2),
                shape,
            }
        })
        .collect()
}

/// Transpose convolution layers of one GAN generator.
pub fn gan_preset(model: &str) -> Option<Vec<BenchCase>> {
    let (name, layers) = gan_model(model)?;
    Some(
        layers
            .into_iter()
            .map(|(layer, shape)| BenchCase {
                label: format!("{name} layer {layer}"),
                shape,
            })
            .collect(),
    )
}

/// Resolves `flowers` or `gan:<model>`.
pub fn preset(name: &str) -> Option<Vec<BenchCase>> {
    match name {
        "flowers" => Some(flowers_preset()),
        _ => gan_preset(name.strip_prefix("gan:")?),
    }
}

/// Median wall time of `reps` runs of `f` after one warmup run.
pub fn median_seconds<R>(reps: usize, mut f: impl FnMut() -> R) -> f64 {
    std::hint::black_box(f());
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    }
}

pub fn random_inputs(shape: &LayerShape, seed: u64) -> (Tensor<f32>, Kernel<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::from_fn(shape.n_in, shape.n_in, shape.cin, |_, _, _| {
        rng.gen_range(-1.0..1.0)
    });
    let kernel = Kernel::from_fn(shape.kh, shape.kw, shape.cin, shape.cout, |_, _, _, _| {
        rng.gen_range(-1.0..1.0)
    });
    (input, kernel)
}

/// Times all three variants of one case on identical inputs.
pub fn bench_case(
    case: &BenchCase,
    workers: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    if reps < MIN_REPS {
        return Err(contract(format!(
            "at least {MIN_REPS} repetitions are required, got {reps}"
        )));
    }
    if workers == 0 {
        return Err(contract("worker count must be positive"));
    }
    let geom = case.shape.geometry()?;
    let (input, kernel) = random_inputs(&case.shape, seed);
    let p = case.shape.p_orig;

    let naive = median_seconds(reps, || transpose_conv_naive(&input, &kernel, p));
    let fused = median_seconds(reps, || {
        transpose_conv_fused(&input, &segregate(&kernel, p), &geom)
    });
    let parallel = median_seconds(reps, || {
        transpose_conv_fused_parallel(&input, &segregate(&kernel, p), &geom, workers)
    });

    let record = |variant, workers, secs: f64| BenchRecord {
        label: case.label.clone(),
        shape: case.shape,
        variant,
        workers,
        wall_seconds: secs.max(f64::MIN_POSITIVE),
        repetitions: reps,
        speedup_vs_naive: naive / secs.max(f64::MIN_POSITIVE),
    };
    Ok(vec![
        record(Variant::Naive, 1, naive),
        record(Variant::Fused, 1, fused),
        record(Variant::FusedParallel, workers, parallel),
    ])
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    label: String,
    variant: Variant,
    workers: usize,
    n_in: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    p_orig: usize,
    wall_seconds: f64,
    repetitions: usize,
    speedup_vs_naive: f64,
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow {
            label: r.label.clone(),
            variant: r.variant,
            workers: r.workers,
            n_in: r.shape.n_in,
            cin: r.shape.cin,
            cout: r.shape.cout,
            kh: r.shape.kh,
            kw: r.shape.kw,
            p_orig: r.shape.p_orig,
            wall_seconds: r.wall_seconds,
            repetitions: r.repetitions,
            speedup_vs_naive: r.speedup_vs_naive,
        })
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn records_from_csv(text: &str) -> std::result::Result<Vec<BenchRecord>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<CsvRow>()
        .map(|row| {
            row.map(|r| BenchRecord {
                label: r.label,
                shape: LayerShape {
                    n_in: r.n_in,
                    cin: r.cin,
                    cout: r.cout,
                    kh: r.kh,
                    kw: r.kw,
                    p_orig: r.p_orig,
                },
                variant: r.variant,
                workers: r.workers,
                wall_seconds: r.wall_seconds,
                repetitions: r.repetitions,
                speedup_vs_naive: r.speedup_vs_naive,
            })
        })
        .collect()
}

pub fn records_to_json(records: &[BenchRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}
