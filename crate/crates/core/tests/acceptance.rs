//! End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Runs as its own binary (no libtest harness) so the counting allocator and
//! the timing measurements are not disturbed by concurrent tests.

use std::alloc::{GlobalAlloc, Layout, System};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segconv::analysis::{
    count_ops_fused, count_ops_naive, memory_saved_bytes, table4_report, LayerShape,
};
use segconv::fused::transpose_conv_fused_counted;
use segconv::net::data::synthetic_digits;
use segconv::net::gradcheck::{check_layer, check_softmax_cross_entropy, DEFAULT_EPSILON};
use segconv::net::model::{POOLED_SIDE, TCONV_SIDE};
use segconv::net::{
    build_conventional_model, build_proposed_model, train, Conv2d, Dense, FusedTransposeConv,
    Layer, MaxPool2, Relu, TrainConfig, Upsample2x,
};
use segconv::reference::{transpose_conv_naive_counted, MulCount};
use segconv::timing::{bench_case, flowers_preset, Variant};
use segconv::verify::{run_verify, VerifyOptions};
use segconv::{geometry, segregate, transpose_conv_fused, Kernel, TConvGeometry, Tensor};

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
            LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Runs `f` and returns its result with (peak bytes above the starting
/// level, largest single allocation).
fn measure_allocs<R>(f: impl FnOnce() -> R) -> (R, usize, usize) {
    let base = CURRENT.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    LARGEST.store(0, Ordering::Relaxed);
    let r = f();
    let peak = PEAK.load(Ordering::Relaxed) - base;
    (r, peak, LARGEST.load(Ordering::Relaxed))
}

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn oracle_exactness() -> Outcome {
    let start = Instant::now();
    let summary = run_verify(&VerifyOptions::default()).expect("fuzz cases are valid");
    let secs = start.elapsed().as_secs_f64();
    match summary.failure {
        None => outcome(
            secs < 30.0,
            format!("{} cases exact in {secs:.2}s", summary.cases_run),
        ),
        Some(cx) => outcome(false, format!("mismatch: {cx:?}")),
    }
}

fn table4() -> Outcome {
    // Published values; the four misprinted cells are entered at their
    // corrected values (the report flags them).
    #[rustfmt::skip]
    let layers: &[(&str, &str, u64, u64, u64, u64)] = &[
        ("DCGAN/DiscoGAN", "2", 536_870_912, 134_217_728, 536_838_144, 134_184_960),
        ("DCGAN/DiscoGAN", "3", 536_870_912, 134_217_728, 536_805_376, 134_152_192),
        ("DCGAN/DiscoGAN", "4", 536_870_912, 134_217_728, 536_739_840, 134_086_656),
        ("DCGAN/DiscoGAN", "5", 25_165_824, 6_291_456, 25_153_536, 6_279_168),
        ("DCGAN/DiscoGAN", "total", 1_635_778_560, 408_944_640, 1_635_536_896, 408_702_976),
        ("Art-GAN", "2", 134_217_728, 33_554_432, 134_201_344, 33_538_048),
        ("Art-GAN", "3", 134_217_728, 33_554_432, 134_184_960, 33_521_664),
        ("Art-GAN", "4", 268_435_456, 67_108_864, 268_304_384, 66_977_792),
        ("Art-GAN", "6", 25_165_824, 6_291_456, 25_153_536, 6_279_168),
        ("Art-GAN", "total", 562_036_736, 140_509_184, 561_844_224, 140_316_672),
        ("GP-GAN", "2", 134_217_728, 33_554_432, 134_201_344, 33_538_048),
        ("GP-GAN", "3", 134_217_728, 33_554_432, 134_184_960, 33_521_664),
        ("GP-GAN", "4", 134_217_728, 33_554_432, 134_152_192, 33_488_896),
        ("GP-GAN", "5", 12_582_912, 3_145_728, 12_570_624, 3_133_440),
        ("GP-GAN", "total", 415_236_096, 103_809_024, 415_109_120, 103_682_048),
        ("EB-GAN", "2", 2_147_483_648, 536_870_912, 2_147_418_112, 536_805_376),
        ("EB-GAN", "3", 2_147_483_648, 536_870_912, 2_147_352_576, 536_739_840),
        ("EB-GAN", "4", 2_147_483_648, 536_870_912, 2_147_221_504, 536_608_768),
        ("EB-GAN", "5", 2_147_483_648, 536_870_912, 2_146_959_360, 536_346_624),
        ("EB-GAN", "6", 2_147_483_648, 536_870_912, 2_146_435_072, 535_822_336),
        ("EB-GAN", "7", 4_294_967_296, 1_073_741_824, 4_290_772_992, 1_069_547_520),
        ("EB-GAN", "total", 15_032_385_536, 3_758_096_384, 15_026_159_616, 3_751_870_464),
    ];
    let reductions: &[(&str, u64, u64)] = &[
        ("DCGAN/DiscoGAN", 1_226_833_920, 1_226_833_920),
        ("Art-GAN", 421_527_552, 421_527_552),
        ("GP-GAN", 311_427_072, 311_427_072),
        ("EB-GAN", 11_274_289_152, 11_274_289_152),
    ];

    let start = Instant::now();
    let report = table4_report();
    let secs = start.elapsed().as_secs_f64();
    let find =
        |model: &str, layer: &str| report.iter().find(|r| r.model == model && r.layer == layer);

    let mut bad = Vec::new();
    for &(model, layer, mn, mf, an, af) in layers {
        match find(model, layer) {
            Some(r)
                if (r.mults_naive, r.mults_fused, r.adds_naive, r.adds_fused)
                    == (mn, mf, an, af) => {}
            other => bad.push(format!("{model} {layer}: {other:?}")),
        }
    }
    for &(model, rm, ra) in reductions {
        match find(model, "total") {
            Some(r) if (r.reduction_mults, r.reduction_adds) == (rm, ra) => {}
            other => bad.push(format!("{model} reductions: {other:?}")),
        }
    }
    let flagged = report.iter().filter(|r| !r.note.is_empty()).count();
    if flagged != 3 {
        bad.push(format!(
            "expected 3 rows flagged as misprinted, found {flagged}"
        ));
    }
    if report.len() != layers.len() {
        bad.push(format!(
            "report has {} rows, expected {}",
            report.len(),
            layers.len()
        ));
    }
    if bad.is_empty() && secs < 1.0 {
        outcome(
            true,
            format!(
                "{} rows exact, {flagged} misprints flagged, {secs:.3}s",
                report.len()
            ),
        )
    } else {
        outcome(false, bad.join("; "))
    }
}

fn counted_ratio(shape: &LayerShape, seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::<f32>::from_fn(shape.n_in, shape.n_in, shape.cin, |_, _, _| {
        rng.gen_range(-1.0..1.0)
    });
    let kernel = Kernel::<f32>::from_fn(shape.kh, shape.kw, shape.cin, shape.cout, |_, _, _, _| {
        rng.gen_range(-1.0..1.0)
    });
    let geom = shape.geometry().unwrap();
    let mut naive = MulCount::default();
    let mut fused = MulCount::default();
    transpose_conv_naive_counted(&input, &kernel, shape.p_orig, &mut naive).unwrap();
    transpose_conv_fused_counted(&input, &segregate(&kernel, shape.p_orig), &geom, &mut fused)
        .unwrap();
    (naive.0, fused.0)
}

fn mult_reduction() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    // 4×4 kernels, P=2, GAN spatial sizes with reduced channel counts so the
    // instrumented naive pass stays quick; the ratio is channel-independent.
    for n in [4, 8, 16, 32, 64] {
        let shape = LayerShape::new(n, 4, 3, 4, 2);
        let (naive, fused) = counted_ratio(&shape, n as u64);
        let analytic = (
            count_ops_naive(&shape).unwrap().mults,
            count_ops_fused(&shape).unwrap().mults,
        );
        let ok = naive == 4 * fused && (naive, fused) == analytic;
        pass &= ok;
        lines.push(format!("4x4 N={n}: {:.3}", naive as f64 / fused as f64));
    }
    for (n, k, p) in [
        (224, 5, 3),
        (224, 3, 1),
        (224, 5, 2),
        (32, 3, 2),
        (17, 5, 1),
        (9, 7, 4),
        (16, 1, 0),
    ] {
        let shape = LayerShape::new(n, 3, 2, k, p);
        let (naive, fused) = counted_ratio(&shape, (n * k + p) as u64);
        let ratio = naive as f64 / fused as f64;
        let ok = ratio > 3.5 && ratio < 4.1 && fused == count_ops_fused(&shape).unwrap().mults;
        pass &= ok;
        lines.push(format!("{k}x{k} N={n} P={p}: {ratio:.3}"));
    }
    outcome(pass, lines.join(", "))
}

fn cpu_speedup() -> Outcome {
    let start = Instant::now();
    let case = flowers_preset()
        .into_iter()
        .find(|c| c.shape.kh == 5)
        .expect("flowers preset has a 5x5 case");
    let single = bench_case(&case, 1, 5, 0).unwrap();
    let parallel = bench_case(&case, 4, 5, 0).unwrap();
    let fused = single
        .iter()
        .find(|r| r.variant == Variant::Fused)
        .unwrap()
        .speedup_vs_naive;
    let par = parallel
        .iter()
        .find(|r| r.variant == Variant::FusedParallel)
        .unwrap()
        .speedup_vs_naive;
    let secs = start.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        fused >= 2.0 && par >= 3.0 && secs < 120.0,
        format!(
            "{}: fused {fused:.2}x, 4 workers {par:.2}x on {cores} core(s), {secs:.1}s",
            case.label
        ),
    )
}

fn memory() -> Outcome {
    let shape = LayerShape::new(224, 3, 1, 4, 2);
    let geom = shape.geometry().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = Tensor::<f32>::from_fn(224, 224, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let kernel = Kernel::<f32>::from_fn(4, 4, 3, 1, |_, _, _, _| rng.gen_range(-1.0..1.0));
    let sks = segregate(&kernel, 2);

    let (out, peak, largest) =
        measure_allocs(|| transpose_conv_fused(&input, &sks, &geom).unwrap());
    let elem = std::mem::size_of::<f32>();
    let padded_side = 224 + 2 * geom.p_fused;
    let bound = padded_side * padded_side * 3 * elem + out.len() * elem;
    let upsampled = (2 * 224 - 1) * (2 * 224 - 1) * 3 * elem;
    let saved = memory_saved_bytes(&shape, elem);
    outcome(
        peak <= bound && largest < upsampled && saved == 1_827_900,
        format!(
            "peak aux {peak} B <= bound {bound} B, largest alloc {largest} B < upsampled {upsampled} B, saved {saved} B"
        ),
    )
}

fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor<f64> {
    Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

fn random_kernel(rng: &mut ChaCha8Rng, k: usize, cin: usize, cout: usize) -> Kernel<f64> {
    Kernel::from_fn(k, k, cin, cout, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

fn gradient_checks() -> Outcome {
    const INSTANCES: u64 = 20;
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name)
    {
        Some((_, w)) => *w = w.max(err),
        None => worst.push((name, err)),
    };
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n: usize = rng.gen_range(2..=6);
        let k: usize = rng.gen_range(1..=5);
        let p = rng.gen_range(0..=3).max(k.saturating_sub(2 * n - 1));
        let (cin, cout) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let x = random_tensor(&mut rng, n, n, cin);

        let mut layers: Vec<Box<dyn Layer<f64>>> = vec![
            Box::new(FusedTransposeConv::new(
                random_kernel(&mut rng, k, cin, cout),
                p,
            )),
            Box::new(Upsample2x::default()),
            Box::new(Conv2d::new(
                random_kernel(&mut rng, k.min(n), cin, cout),
                rng.gen_range(0..=2),
            )),
            Box::new(Relu::default()),
            Box::new(MaxPool2::default()),
        ];
        let features = n * n * cin;
        let dense_w = (0..features * 4)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let dense_b = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        layers.push(Box::new(Dense::new(features, 4, dense_w, dense_b).unwrap()));

        for layer in &mut layers {
            let check = check_layer(layer.as_mut(), &x, seed, DEFAULT_EPSILON).unwrap();
            record(check.layer, check.max_error());
        }
        let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let err =
            check_softmax_cross_entropy(&logits, rng.gen_range(0..10), DEFAULT_EPSILON).unwrap();
        record("softmax_cross_entropy", err);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.iter().all(|(_, e)| *e < 1e-6) && secs < 60.0;
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        pass,
        format!("{INSTANCES} instances each, max rel err: {detail}"),
    )
}

fn training_demo() -> Outcome {
    let start = Instant::now();
    let data = synthetic_digits::<f32>(1000, 7, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    let cfg = TrainConfig {
        iterations: 10_000,
        ..TrainConfig::default()
    };
    let conv = train(&mut build_conventional_model(0), &data, &cfg).unwrap();
    let prop = train(&mut build_proposed_model(0), &data, &cfg).unwrap();
    let ratio = conv.wall_seconds / prop.wall_seconds;
    let secs = start.elapsed().as_secs_f64();
    let pass = ratio >= 1.5
        && conv.final_loss < conv.initial_loss
        && prop.final_loss < prop.initial_loss
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "conventional {:.2}s (loss {:.3}->{:.3}), proposed {:.2}s (loss {:.3}->{:.3}), ratio {ratio:.2}",
            conv.wall_seconds, conv.initial_loss, conv.final_loss, prop.wall_seconds, prop.initial_loss, prop.final_loss
        ),
    )
}

fn geometry_table() -> Outcome {
    let mut chain = vec![4];
    let mut pass = true;
    for _ in 0..4 {
        let n = *chain.last().unwrap();
        let g = geometry(n, 4, 4, 2).unwrap();
        pass &= g.out_h == g.out_w && g.out_h == 2 * n;
        chain.push(g.out_h);
    }
    pass &= chain == [4, 8, 16, 32, 64];
    let eb = geometry(64, 4, 4, 2).unwrap();
    pass &= eb.out_h == 128 && geometry(128, 4, 4, 2).unwrap().out_h == 256;

    let demo: TConvGeometry = geometry(28, 5, 5, 0).unwrap();
    let pooled = MaxPool2::output_dims(demo.out_h, demo.out_w);
    pass &= demo.out_h == 51 && demo.out_h == TCONV_SIDE && pooled == (26, 26) && POOLED_SIDE == 26;
    outcome(
        pass,
        format!(
            "GAN {} (then 128, 256); demo 28->{}->{}",
            chain
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("->"),
            demo.out_h,
            pooled.0
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("SEGCONV_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 8] = [
        ("oracle exactness", oracle_exactness),
        ("operation-count table", table4),
        ("multiply reduction ratio", mult_reduction),
        ("cpu speedup", cpu_speedup),
        ("memory", memory),
        ("gradient checks", gradient_checks),
        ("training demo", training_demo),
        ("geometry table", geometry_table),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let Outcome { pass, detail } = run();
        println!(
            "[{}] {id}. {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
