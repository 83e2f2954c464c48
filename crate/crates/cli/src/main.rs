use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use segconv::analysis::{report_to_csv, report_to_json, table4_report, LayerShape};
use segconv::io::idx::load_idx_dataset;
use segconv::io::pnm::{encode_pnm_8bit, read_pnm_file};
use segconv::io::tensor_file::kernel_from_tensor;
use segconv::io::{read_tensor_file, write_tensor_file};
use segconv::net::data::synthetic_digits;
use segconv::net::{build_conventional_model, build_proposed_model, train, TrainConfig};
use segconv::timing::{self, bench_case, records_to_csv, records_to_json, BenchCase, MIN_REPS};
use segconv::verify::{run_verify, VerifyOptions};
use segconv::{
    segregate, transpose_conv_fused, transpose_conv_fused_parallel, transpose_conv_naive, Error,
    Kernel, TConvGeometry, Tensor,
};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "segconv",
    version,
    about = "2x transpose convolution by kernel segregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApplyVariant {
    Naive,
    Fused,
    Parallel,
}

#[derive(Subcommand)]
enum Command {
    /// Fuzz the fused path against the naive oracle.
    Verify {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest input side.
        #[arg(long, default_value_t = 16)]
        max_size: usize,
        /// Largest kernel side.
        #[arg(long = "kernel", default_value_t = 7)]
        max_kernel: usize,
        /// Largest padding.
        #[arg(long = "padding", default_value_t = 4)]
        max_padding: usize,
        #[arg(long, default_value_t = 4)]
        max_channels: usize,
        /// Perturb one sub-kernel tap; the run must then fail.
        #[arg(long, hide = true)]
        corrupt_subkernel: bool,
    },
    /// Time naive, fused and multi-threaded fused variants.
    Bench {
        /// `flowers`, `gan:<model>` (dcgan, artgan, gpgan, ebgan) or `custom`.
        #[arg(long, default_value = "flowers")]
        preset: String,
        /// Input side for `custom`.
        #[arg(long, default_value_t = 224)]
        size: usize,
        /// Input channels for `custom`.
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Output channels for `custom`.
        #[arg(long, default_value_t = 1)]
        filters: usize,
        /// Kernel side for `custom`.
        #[arg(long, default_value_t = 5)]
        kernel: usize,
        /// Padding for `custom`.
        #[arg(long, default_value_t = 2)]
        padding: usize,
        /// Worker threads for the parallel variant [default: available cores].
        #[arg(long, env = "SEGCONV_THREADS")]
        workers: Option<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the GAN operation-count report.
    Flops {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transpose-convolve a PGM/PPM image.
    Apply {
        image: PathBuf,
        /// Tensor file, or one of `ones`, `gaussian`, `random:<seed>`.
        #[arg(long, default_value = "gaussian")]
        kernel: String,
        /// Side of a preset kernel.
        #[arg(long, default_value_t = 5)]
        kernel_size: usize,
        #[arg(long, default_value_t = 2)]
        padding: usize,
        #[arg(long, value_enum, default_value_t = ApplyVariant::Fused)]
        variant: ApplyVariant,
        #[arg(long, env = "SEGCONV_THREADS")]
        workers: Option<usize>,
        /// Output tensor file.
        #[arg(long)]
        out: PathBuf,
        /// Also write the result as an 8-bit PGM/PPM, clamped to [0, 1].
        #[arg(long)]
        image_out: Option<PathBuf>,
    },
    /// Train the conventional and segregated classifiers and compare wall time.
    TrainDemo {
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        /// Synthetic dataset size (ignored with --images/--labels).
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// IDX image file; requires --labels.
        #[arg(long, requires = "labels")]
        images: Option<PathBuf>,
        /// IDX label file; requires --images.
        #[arg(long, requires = "images")]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Shape(_) | Error::Contract(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = Result<u8, Failure>;

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure {
            code: EXIT_IO,
            msg: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn verify(opts: VerifyOptions) -> CmdResult {
    if opts.cases == 0 {
        eprintln!("warning: --cases 0 runs no cases; nothing was verified");
    }
    let summary = run_verify(&opts)?;
    match &summary.failure {
        None => {
            println!(
                "verify: {} cases, fused output equals naive output",
                summary.cases_run
            );
            Ok(0)
        }
        Some(cx) => {
            println!("verify: mismatch in case {} of {}", cx.case, opts.cases);
            println!(
                "  input {0}x{0}x{1}, kernel {2}x{2}x{1}x{3}, padding {4}, case seed {5}",
                cx.n_in, cx.cin, cx.kernel, cx.cout, cx.padding, cx.case_seed
            );
            println!(
                "  first difference at {:?}: fused {} vs naive {}",
                cx.position, cx.fused, cx.naive
            );
            Ok(EXIT_VERIFY)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    preset: &str,
    custom: LayerShape,
    workers: Option<usize>,
    reps: usize,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> CmdResult {
    if reps < MIN_REPS {
        return Err(Failure::usage(format!(
            "--reps must be at least {MIN_REPS}"
        )));
    }
    let workers = workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::usage("--workers must be positive"));
    }
    let cases = if preset == "custom" {
        custom.geometry()?;
        vec![BenchCase {
            label: format!("custom {} k{}", custom.input_label(), custom.kernel_label()),
            shape: custom,
        }]
    } else {
        timing::preset(preset).ok_or_else(|| {
            Failure::usage(format!(
                "unknown preset `{preset}`; expected flowers, gan:<dcgan|artgan|gpgan|ebgan> or custom"
            ))
        })?
    };
    let mut records = Vec::new();
    for case in &cases {
        eprintln!("bench: {}", case.label);
        records.extend(bench_case(case, workers, reps, seed)?);
    }
    let text = match format {
        Format::Csv => records_to_csv(&records),
        Format::Json => records_to_json(&records),
    };
    emit(&text, out)?;
    Ok(0)
}

fn flops(format: Format, out: Option<&Path>) -> CmdResult {
    let rows = table4_report();
    for row in rows.iter().filter(|r| !r.note.is_empty()) {
        eprintln!("note: {} layer {}: {}", row.model, row.layer, row.note);
    }
    let text = match format {
        Format::Csv => report_to_csv(&rows),
        Format::Json => report_to_json(&rows),
    };
    emit(&text, out)?;
    Ok(0)
}

/// Builds a named preset kernel. `ones` and `gaussian` act on each channel
/// separately; `gaussian` taps sum to 4 so that, with three quarters of the
/// upsampled samples being zero, flat regions keep their brightness.
fn preset_kernel(spec: &str, size: usize, channels: usize) -> Result<Kernel<f32>, Failure> {
    if size == 0 {
        return Err(Failure::usage("--kernel-size must be positive"));
    }
    let diagonal = |w: &dyn Fn(usize, usize) -> f32| {
        Kernel::from_fn(size, size, channels, channels, |u, v, ci, co| {
            if ci == co {
                w(u, v)
            } else {
                0.0
            }
        })
    };
    match spec {
        "ones" => Ok(diagonal(&|_, _| 1.0)),
        "gaussian" => {
            let sigma = (size as f32 / 4.0).max(0.5);
            let c = (size as f32 - 1.0) / 2.0;
            let g = |u: usize, v: usize| {
                let (du, dv) = (u as f32 - c, v as f32 - c);
                (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp()
            };
            let total: f32 = (0..size)
                .flat_map(|u| (0..size).map(move |v| (u, v)))
                .map(|(u, v)| g(u, v))
                .sum();
            Ok(diagonal(&|u, v| 4.0 * g(u, v) / total))
        }
        _ => {
            let seed = spec
                .strip_prefix("random:")
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Failure::usage(format!("unknown kernel preset `{spec}`")))?;
            let (_, kernel) =
                timing::random_inputs(&LayerShape::new(1, channels, channels, size, 0), seed);
            Ok(kernel)
        }
    }
}

fn load_kernel(spec: &str, size: usize, channels: usize) -> Result<Kernel<f32>, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        let t: Tensor<f32> = read_tensor_file(path)?.to_precision();
        Ok(kernel_from_tensor(&t, channels)?)
    } else {
        preset_kernel(spec, size, channels)
    }
}

#[allow(clippy::too_many_arguments)]
fn apply(
    image: &Path,
    kernel_spec: &str,
    kernel_size: usize,
    padding: usize,
    variant: ApplyVariant,
    workers: Option<usize>,
    out: &Path,
    image_out: Option<&Path>,
) -> CmdResult {
    let img = read_pnm_file(image)?;
    let input: Tensor<f32> = img.to_tensor();
    let kernel = load_kernel(kernel_spec, kernel_size, input.channels())?;
    if kernel.cin() != input.channels() {
        return Err(Error::Contract(format!(
            "kernel expects {} channels but the image has {}",
            kernel.cin(),
            input.channels()
        ))
        .into());
    }
    let geom = TConvGeometry::new(
        input.height(),
        input.width(),
        kernel.kh(),
        kernel.kw(),
        padding,
    )?;
    let result = match variant {
        ApplyVariant::Naive => transpose_conv_naive(&input, &kernel, padding)?,
        ApplyVariant::Fused => transpose_conv_fused(&input, &segregate(&kernel, padding), &geom)?,
        ApplyVariant::Parallel => {
            let workers = workers.unwrap_or_else(default_workers);
            if workers == 0 {
                return Err(Failure::usage("--workers must be positive"));
            }
            transpose_conv_fused_parallel(&input, &segregate(&kernel, padding), &geom, workers)?
        }
    };
    write_tensor_file(out, &result)?;
    if let Some(path) = image_out {
        std::fs::write(path, encode_pnm_8bit(&result)?)?;
    }
    let (h, w, c) = result.dims();
    println!(
        "apply: {}x{}x{} -> {h}x{w}x{c}, written to {}",
        input.height(),
        input.width(),
        input.channels(),
        out.display()
    );
    Ok(0)
}

fn train_demo(
    cfg: TrainConfig,
    samples: usize,
    idx: Option<(PathBuf, PathBuf)>,
    out: Option<&Path>,
) -> CmdResult {
    let data = match idx {
        Some((images, labels)) => load_idx_dataset::<f32>(images, labels)?,
        None => synthetic_digits(samples, cfg.seed, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]),
    };
    let conventional = train(&mut build_conventional_model(cfg.seed), &data, &cfg)?;
    let proposed = train(&mut build_proposed_model(cfg.seed), &data, &cfg)?;
    let ratio = if proposed.wall_seconds > 0.0 {
        conventional.wall_seconds / proposed.wall_seconds
    } else {
        f64::NAN
    };
    eprintln!(
        "train-demo: conventional {:.2}s, proposed {:.2}s, ratio {ratio:.2}",
        conventional.wall_seconds, proposed.wall_seconds
    );
    let report = json!({
        "conventional": conventional,
        "proposed": proposed,
        "wall_time_ratio": if ratio.is_finite() { json!(ratio) } else { json!(null) },
    });
    emit(
        &serde_json::to_string_pretty(&report).expect("report serializes"),
        out,
    )?;
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Verify {
            cases,
            seed,
            max_size,
            max_kernel,
            max_padding,
            max_channels,
            corrupt_subkernel,
        } => verify(VerifyOptions {
            cases,
            seed,
            max_size,
            max_kernel,
            max_padding,
            max_channels,
            corrupt_subkernel,
        }),
        Command::Bench {
            preset,
            size,
            channels,
            filters,
            kernel,
            padding,
            workers,
            reps,
            seed,
            format,
            out,
        } => {
            let custom = LayerShape::new(size, channels, filters, kernel, padding);
            bench(&preset, custom, workers, reps, seed, format, out.as_deref())
        }
        Command::Flops { format, out } => flops(format, out.as_deref()),
        Command::Apply {
            image,
            kernel,
            kernel_size,
            padding,
            variant,
            workers,
            out,
            image_out,
        } => apply(
            &image,
            &kernel,
            kernel_size,
            padding,
            variant,
            workers,
            &out,
            image_out.as_deref(),
        ),
        Command::TrainDemo {
            iterations,
            seed,
            learning_rate,
            samples,
            images,
            labels,
            out,
        } => {
            if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
                return Err(Failure::usage(
                    "--learning-rate must be a non-negative number",
                ));
            }
            let cfg = TrainConfig {
                iterations,
                learning_rate,
                seed,
                ..TrainConfig::default()
            };
            train_demo(cfg, samples, images.zip(labels), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, msg }) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
