use std::path::Path;
use std::process::{Command, Output};

use segconv::io::pnm::parse_pnm;
use segconv::io::read_tensor_file;
use segconv::io::tensor_file::kernel_to_tensor;
use segconv::io::write_tensor_file;
use segconv::Kernel;

fn segconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segconv"))
        .args(args)
        .env_remove("SEGCONV_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_ppm(path: &Path, w: usize, h: usize) {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h * 3).map(|i| (i * 7 % 256) as u8));
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn verify_default_passes() {
    let o = segconv(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("200 cases"));
}

#[test]
fn verify_reports_corruption() {
    let o = segconv(&["verify", "--corrupt-subkernel", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("mismatch"), "{out}");
    assert!(out.contains("case seed"), "{out}");
}

#[test]
fn verify_zero_cases_warns() {
    let o = segconv(&["verify", "--cases", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(segconv(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(segconv(&["bench", "--reps", "2"]).status.code(), Some(2));
    assert_eq!(
        segconv(&["bench", "--preset", "imagenet"]).status.code(),
        Some(2)
    );
    assert_eq!(
        segconv(&["bench", "--preset", "gan:nope"]).status.code(),
        Some(2)
    );
    assert_eq!(
        segconv(&["flops", "--format", "xml"]).status.code(),
        Some(2)
    );
    assert_eq!(segconv(&["--help"]).status.code(), Some(0));
}

#[test]
fn bench_custom_csv_and_threads_env() {
    let o = Command::new(env!("CARGO_BIN_EXE_segconv"))
        .args([
            "bench",
            "--preset",
            "custom",
            "--size",
            "12",
            "--kernel",
            "3",
            "--padding",
            "1",
            "--reps",
            "3",
        ])
        .env("SEGCONV_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("label,variant,workers"));
    assert!(lines[3].contains("fused_parallel,3,"));
}

#[test]
fn bench_json_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let o = segconv(&[
        "bench",
        "--preset",
        "custom",
        "--size",
        "8",
        "--channels",
        "2",
        "--filters",
        "2",
        "--kernel",
        "4",
        "--padding",
        "2",
        "--workers",
        "2",
        "--format",
        "json",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs
        .iter()
        .all(|r| r["wall_seconds"].as_f64().unwrap() > 0.0));
    assert_eq!(recs[0]["speedup_vs_naive"].as_f64(), Some(1.0));
}

#[test]
fn flops_csv_and_json_agree() {
    let csv = segconv(&["flops"]);
    assert_eq!(csv.status.code(), Some(0));
    let csv = stdout(&csv);
    assert!(csv.contains("536870912"));
    assert!(csv.contains("11274289152"));

    let json = segconv(&["flops", "--format", "json"]);
    let rows: Vec<segconv::analysis::ReportRow> = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(segconv::analysis::report_from_csv(&csv).unwrap(), rows);
    assert!(stderr(&json).contains("printed as"));
}

#[test]
fn apply_identity_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("one.pgm");
    std::fs::write(&img, b"P5\n1 1\n255\n\xff").unwrap();
    let out = dir.path().join("out.sgc");
    let o = segconv(&[
        "apply",
        path_str(&img),
        "--kernel",
        "ones",
        "--kernel-size",
        "1",
        "--padding",
        "0",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_tensor_file(&out).unwrap().to_precision::<f32>();
    assert_eq!(t.dims(), (1, 1, 1));
    assert_eq!(t.data(), &[1.0]);
}

#[test]
fn apply_224_ppm_all_variants_agree() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.ppm");
    write_ppm(&img, 224, 224);
    let mut outputs = Vec::new();
    for variant in ["naive", "fused", "parallel"] {
        let out = dir.path().join(format!("{variant}.sgc"));
        let png = dir.path().join(format!("{variant}.ppm"));
        let o = segconv(&[
            "apply",
            path_str(&img),
            "--kernel",
            "gaussian",
            "--padding",
            "2",
            "--variant",
            variant,
            "--workers",
            "3",
            "--out",
            path_str(&out),
            "--image-out",
            path_str(&png),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let image = parse_pnm(&std::fs::read(&png).unwrap()).unwrap();
        assert_eq!((image.width, image.height, image.channels), (447, 447, 3));
        outputs.push(read_tensor_file(&out).unwrap().to_precision::<f32>());
    }
    assert_eq!(outputs[0].dims(), (447, 447, 3));
    assert!(segconv::tensors_equal_exact(&outputs[0], &outputs[1]));
    assert!(segconv::tensors_equal_exact(&outputs[1], &outputs[2]));
}

#[test]
fn apply_truncated_ppm_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("bad.ppm");
    std::fs::write(&img, b"P6\n4 4\n255\n\x01\x02\x03").unwrap();
    let out = dir.path().join("out.sgc");
    let o = segconv(&["apply", path_str(&img), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("expected 48 bytes, found 3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn apply_kernel_file_channel_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.ppm");
    write_ppm(&img, 4, 4);
    let kernel = dir.path().join("k.sgc");
    // 2 input channels × 1 output: 2 channels, not a multiple of the image's 3.
    let k = Kernel::<f32>::from_fn(3, 3, 2, 1, |_, _, _, _| 1.0);
    write_tensor_file(&kernel, &kernel_to_tensor(&k)).unwrap();
    let o = segconv(&[
        "apply",
        path_str(&img),
        "--kernel",
        path_str(&kernel),
        "--out",
        path_str(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("contract violation"));
}

#[test]
fn apply_missing_image_is_io_error() {
    let o = segconv(&["apply", "/nonexistent/x.pgm", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_demo_is_deterministic() {
    let args = [
        "train-demo",
        "--iterations",
        "40",
        "--samples",
        "30",
        "--seed",
        "4",
    ];
    let a: serde_json::Value = serde_json::from_str(&stdout(&segconv(&args))).unwrap();
    let b: serde_json::Value = serde_json::from_str(&stdout(&segconv(&args))).unwrap();
    for model in ["conventional", "proposed"] {
        assert_eq!(a[model]["loss_curve"], b[model]["loss_curve"]);
        assert!(!a[model]["loss_curve"].as_array().unwrap().is_empty());
    }
    assert!(a["wall_time_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_demo_zero_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = segconv(&[
        "train-demo",
        "--iterations",
        "0",
        "--samples",
        "10",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for model in ["conventional", "proposed"] {
        assert_eq!(v[model]["initial_loss"], v[model]["final_loss"]);
    }
}

#[test]
fn train_demo_unreadable_dataset() {
    let o = segconv(&[
        "train-demo",
        "--images",
        "/nonexistent/i",
        "--labels",
        "/nonexistent/l",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(
        segconv(&["train-demo", "--images", "/x"]).status.code(),
        Some(2)
    );
}
