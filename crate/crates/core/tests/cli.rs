//! End-to-end exercises of the `corridor` binary: every subcommand over a
//! small generated dataset, plus the main error paths.

use std::path::Path;
use std::process::{Command, Output};

fn corridor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corridor"))
        .args(args)
        .output()
        .expect("spawn corridor")
}

fn run_ok(args: &[&str]) -> String {
    let out = corridor(args);
    assert!(
        out.status.success(),
        "`corridor {}` failed:\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn run_err(args: &[&str]) -> String {
    let out = corridor(args);
    assert!(
        !out.status.success(),
        "`corridor {}` unexpectedly succeeded",
        args.join(" ")
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf8 path")
}

#[test]
fn full_pipeline_over_smoke_dataset() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let ds = tmp.path().join("ds");
    let seg = tmp.path().join("seg");
    let post = tmp.path().join("post");
    let energy = tmp.path().join("energy");
    let fused = tmp.path().join("fused");
    let evald = tmp.path().join("eval");

    // scenegen
    let out = run_ok(&["scenegen", "--out", p(&ds), "--protocol", "smoke", "--seed", "5"]);
    assert!(out.contains("wrote 7 scenes"), "{out}");
    assert!(ds.join("manifest.txt").is_file());
    for f in ["image.png", "gt_corridor.png", "gt_obstacle.png", "meta"] {
        assert!(ds.join("runs/run00/frame0000").join(f).is_file(), "missing {f}");
    }

    // segment with logits; wrap corruption degrades obstacle scenes only
    run_ok(&[
        "segment", "--dataset", p(&ds), "--out", p(&seg),
        "--corruption", "wrap", "--logits",
    ]);
    let scene_rel = "scenes/25/crate_red/v0";
    assert!(seg.join(scene_rel).join("mask.png").is_file());
    assert!(seg.join(scene_rel).join("logits.bin").is_file());

    // postprocess + energy + fuse in batch mode
    run_ok(&["postprocess", "--dataset", p(&ds), "--in", p(&seg), "--out", p(&post)]);
    run_ok(&["energy", "--dataset", p(&ds), "--in", p(&seg), "--out", p(&energy)]);
    run_ok(&[
        "fuse", "--dataset", p(&ds), "--corridor", p(&post),
        "--energy", p(&energy), "--out", p(&fused),
    ]);
    assert!(fused.join(scene_rel).join("mask.png").is_file());

    // eval writes the four artifacts and prints the table
    let table = run_ok(&[
        "eval", "--dataset", p(&ds), "--pred", p(&fused),
        "--method", "fused", "--out-dir", p(&evald),
    ]);
    for f in ["verdicts.csv", "rates.csv", "fp.csv", "table.txt"] {
        assert!(evald.join(f).is_file(), "missing {f}");
    }
    assert!(table.contains("fused"), "{table}");
    let verdicts = std::fs::read_to_string(evald.join("verdicts.csv")).unwrap();
    assert!(verdicts.starts_with("scene_id,bin_m,correct,estimated_m,error_m,failure_mode"));
    // 2 bins x 2 sprites x 1 variant obstacle scenes
    assert_eq!(verdicts.lines().count(), 1 + 4, "{verdicts}");

    // report re-renders the CSVs into the same table
    let report_path = tmp.path().join("report.txt");
    let rates = evald.join("rates.csv");
    let fp = evald.join("fp.csv");
    let rendered = run_ok(&[
        "report", "--rates", p(&rates), "--fp", p(&fp), "--out", p(&report_path),
    ]);
    assert_eq!(rendered, std::fs::read_to_string(evald.join("table.txt")).unwrap());

    // single-file stage mode round trip
    let single_out = tmp.path().join("single.png");
    let single_in = post.join(scene_rel).join("mask.png");
    run_ok(&["postprocess", "--in", p(&single_in), "--out", p(&single_out)]);
    assert!(single_out.is_file());
}

#[test]
fn bench_reports_percentiles() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let csv_path = tmp.path().join("bench.csv");
    let out = run_ok(&["bench", "--frames", "3", "--out", p(&csv_path)]);
    for stage in ["postprocess", "energy", "fuse", "total"] {
        assert!(out.contains(stage), "missing {stage} in:\n{out}");
    }
    assert!(out.contains("p95"));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3, "{csv}");
    assert!(csv.starts_with("frame,postprocess_ms,energy_ms,fuse_ms,total_ms"));
}

#[test]
fn error_paths_fail_cleanly() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let ds = tmp.path().join("ds");
    run_ok(&[
        "scenegen", "--out", p(&ds), "--protocol", "smoke",
        "--runs", "0", "--bins", "25", "--sprites", "1",
    ]);

    let seg = tmp.path().join("seg");
    let err = run_err(&[
        "segment", "--dataset", p(&ds), "--out", p(&seg), "--corruption", "sideways",
    ]);
    assert!(err.contains("unknown corruption"), "{err}");
    let err = run_err(&[
        "segment", "--dataset", p(&ds), "--out", p(&seg), "--corruption", "holes",
    ]);
    assert!(err.contains("numeric argument"), "{err}");

    let err = run_err(&["scenegen", "--out", p(&ds), "--protocol", "big"]);
    assert!(err.contains("unknown protocol"), "{err}");

    // missing predictions
    let err = run_err(&[
        "eval", "--dataset", p(&ds), "--pred", p(&tmp.path().join("nope")),
        "--out-dir", p(&tmp.path().join("evald")),
    ]);
    assert!(err.contains("error:"), "{err}");

    // unreadable config file
    let err = run_err(&[
        "--config", p(&tmp.path().join("missing.conf")),
        "bench", "--frames", "1",
    ]);
    assert!(err.contains("error:"), "{err}");
}
