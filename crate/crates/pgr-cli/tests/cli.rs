//! End-to-end runs of the `pgr` binary on small synthetic workloads.

use std::path::Path;
use std::process::{Command, Output};

fn pgr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgr"))
        .args(args)
        .current_dir(dir)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = pgr(args, dir);
    assert!(
        out.status.success(),
        "pgr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_small(dir: &Path, frames: &str) {
    ok(
        &[
            "synth",
            "--out",
            "frames",
            "--frames",
            frames,
            "--seed",
            "3",
            "--extent",
            "10",
            "--ground-density",
            "2",
            "--object-density",
            "40",
            "--cars",
            "1",
            "--pedestrians",
            "1",
            "--cyclists",
            "0",
        ],
        dir,
    );
}

#[test]
fn remove_pipeline_writes_frames_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "2");
    let stdout = ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "removed",
        ],
        dir.path(),
    );
    assert!(stdout.contains("kept"));
    let summary = std::fs::read_to_string(dir.path().join("removed/removal_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frame,points_in,points_kept,pillars,retained,restored"
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let points_in: usize = fields[1].parse().unwrap();
        let points_kept: usize = fields[2].parse().unwrap();
        assert!(points_kept < points_in, "some ground must go: {line}");
        assert!(points_kept > 0, "objects must stay: {line}");
    }
    for i in 0..2 {
        let path = dir.path().join(format!("removed/frame_{i:04}.bin"));
        assert!(path.is_file());
    }
}

#[test]
fn no_restoration_keeps_fewer_points() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "full",
        ],
        dir.path(),
    );
    ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "ablated",
            "--no-restoration",
        ],
        dir.path(),
    );
    let size = |p: &str| {
        std::fs::metadata(dir.path().join(p).join("frame_0000.bin"))
            .unwrap()
            .len()
    };
    assert!(size("ablated") < size("full"));
}

#[test]
fn empty_glob_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgr(
        &[
            "remove",
            "--input",
            "void/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no frames"));
}

#[test]
fn unknown_config_lists_the_presets() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    let out = pgr(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "nope",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pgr-c0-kitti") && stderr.contains("pgr-c4"));
}

#[test]
fn config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    let cfg = named_config_toml();
    std::fs::write(dir.path().join("custom.toml"), cfg).unwrap();
    ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "custom.toml",
            "--out",
            "removed",
        ],
        dir.path(),
    );
}

fn named_config_toml() -> &'static str {
    "resolution = 0.4\n\
     delta_minmax = 0.4\n\
     er = 1.8\n\
     delta_env = 0.4\n\n\
     [[restore_rules]]\n\
     max_range = 30.0\n\
     delta_res = 1.8\n\n\
     [[restore_rules]]\n\
     max_range = inf\n\
     delta_res = 5.4\n"
}

#[test]
fn oracle_pipeline_consumes_masks_and_boxes() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    let stdout = ok(
        &[
            "oracle",
            "--input",
            "frames/*.bin",
            "--ef",
            "0.3",
            "--out",
            "oracled",
        ],
        dir.path(),
    );
    assert!(stdout.contains("kept"));
    assert!(dir.path().join("oracled/frame_0000.bin").is_file());
}

#[test]
fn encode_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    ok(
        &[
            "encode",
            "--input",
            "frames/*.bin",
            "--scale",
            "0.063",
            "--out",
            "streams",
        ],
        dir.path(),
    );
    let stdout = ok(
        &["decode", "--input", "streams/*.pcb", "--out", "decoded"],
        dir.path(),
    );
    assert!(stdout.contains("points"));
    let decoded = dir.path().join("decoded/frame_0000.bin");
    assert!(decoded.is_file());
    assert_eq!(std::fs::metadata(&decoded).unwrap().len() % 16, 0);
}

#[test]
fn sweep_writes_the_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "2");
    ok(
        &[
            "sweep",
            "--input",
            "frames/*.bin",
            "--pre",
            "none",
            "--pre",
            "pgr:pgr-c0-kitti",
            "--scales",
            "0.01,0.063",
            "--out",
            "rates.csv",
        ],
        dir.path(),
    );
    let table = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "scale,bpp,preprocessor,frames");
    assert_eq!(lines.len(), 5, "2 preprocessors x 2 scales + header");
    let bpp = |line: &str| line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(bpp(lines[1]) < bpp(lines[2]), "bpp grows with scale");
    assert!(bpp(lines[3]) <= bpp(lines[1]), "removal cannot cost bits");
}

#[test]
fn synthetic_sweep_needs_no_input_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "sweep",
            "--synth-frames",
            "2",
            "--seed",
            "5",
            "--extent",
            "8",
            "--ground-density",
            "2",
            "--pre",
            "oracle:0.5",
            "--scales",
            "0.035",
            "--out",
            "rates.csv",
        ],
        dir.path(),
    );
    let table = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn bench_reports_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "bench",
            "--points",
            "20000",
            "--frames",
            "2",
            "--reps",
            "1",
            "--seed",
            "1",
            "--stage-breakdown",
        ],
        dir.path(),
    );
    assert!(stdout.contains("fps"));
    assert!(stdout.contains("stage restoration"));
    // Same seed, same workload: the deterministic point counts repeat.
    let again = ok(
        &[
            "bench", "--points", "20000", "--frames", "2", "--reps", "1", "--seed", "1",
        ],
        dir.path(),
    );
    let counts = |s: &str| -> Vec<String> {
        s.lines()
            .filter(|l| l.starts_with("frame "))
            .map(String::from)
            .collect()
    };
    assert_eq!(counts(&stdout), counts(&again));
}

#[test]
fn bd_of_identical_curves_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    ok(
        &[
            "sweep",
            "--input",
            "frames/*.bin",
            "--pre",
            "none",
            "--scales",
            "0.01,0.022,0.035,0.063",
            "--out",
            "rates.csv",
        ],
        dir.path(),
    );
    std::fs::write(
        dir.path().join("metric.csv"),
        "scale,metric\n0.01,50\n0.022,60\n0.035,65\n0.063,70\n",
    )
    .unwrap();
    let stdout = ok(
        &[
            "bd",
            "--anchor",
            "rates.csv",
            "--anchor-metric",
            "metric.csv",
            "--test",
            "rates.csv",
            "--test-metric",
            "metric.csv",
        ],
        dir.path(),
    );
    assert!(stdout.contains("0.000000"), "got {stdout}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "1");
    ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "a",
        ],
        dir.path(),
    );
    ok(
        &[
            "remove",
            "--input",
            "frames/*.bin",
            "--config",
            "pgr-c0-kitti",
            "--out",
            "b",
            "--workers",
            "2",
        ],
        dir.path(),
    );
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/frame_0000.bin"), read("b/frame_0000.bin"));
    assert_eq!(read("a/removal_summary.csv"), read("b/removal_summary.csv"));
}
