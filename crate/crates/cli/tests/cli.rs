use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn spraygate(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spraygate"));
    cmd.args(args).env_remove("SPRAYGATE_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn simulate(dir: &Path, frames: usize) -> String {
    let cfg = write(
        &dir.join("sim.toml"),
        &format!("[simulate]\nframes = {frames}\nbase_seed = 3\n[simulate.scene]\nlead_distance = 12.0\nlead_distance_spread = 30.0\nclutter_target_prob = 0.3\n"),
    );
    let data = dir.join("data");
    ok(&spraygate(
        &["simulate", "-c", &cfg, "-o", data.to_str().unwrap()],
        &[],
    ));
    data.join("manifest.json").to_string_lossy().into_owned()
}

#[test]
fn simulate_creates_missing_dirs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("s.toml"), "[simulate]\nframes = 5\n");
    let a = dir.path().join("deep/nested/a");
    let b = dir.path().join("b");
    ok(&spraygate(
        &["simulate", "-c", &cfg, "-o", a.to_str().unwrap()],
        &[],
    ));
    ok(&spraygate(
        &["simulate", "-c", &cfg, "-o", b.to_str().unwrap(), "-j", "1"],
        &[],
    ));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["frames"].as_array().unwrap().len(), 5);
    assert_eq!(tree(&a), tree(&b));
    assert!(a.join("resolved_config.toml").is_file());
}

#[test]
fn calibrate_then_filter_with_the_calibration_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), 4);
    let cal_dir = dir.path().join("cal");
    let msg = ok(&spraygate(
        &["calibrate", "-i", &input, "-o", cal_dir.to_str().unwrap()],
        &[],
    ));
    assert!(msg.contains("tau ="), "{msg}");
    let cal: toml::Value =
        toml::from_str(&std::fs::read_to_string(cal_dir.join("calibration.toml")).unwrap()).unwrap();
    let tau = cal["tau"].as_float().unwrap();
    assert!(cal["achieved_tpr"].as_float().unwrap() >= 0.99);

    let cfg = write(
        &dir.path().join("f.toml"),
        &format!(
            "[filter]\nmethod = \"threshold\"\ncalibration = {:?}\n",
            cal_dir.join("calibration.toml")
        ),
    );
    let out = dir.path().join("filtered");
    ok(&spraygate(
        &["filter", "-c", &cfg, "-i", &input, "-o", out.to_str().unwrap()],
        &[],
    ));
    let metrics = std::fs::read_to_string(out.join("filter_metrics.csv")).unwrap();
    assert!(metrics.starts_with("frame_id,points,kept,"), "{metrics}");
    assert_eq!(metrics.lines().count(), 5);
    assert!(out.join("masks/frame_00000.mask").is_file());
    let resolved = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains(&format!("tau = {tau}")), "{resolved}");
    assert!(!resolved.contains("calibration ="));

    // The filtered dataset is itself a valid input.
    let det = dir.path().join("det");
    let filtered = out.join("manifest.json");
    ok(&spraygate(
        &[
            "detect",
            "-i",
            filtered.to_str().unwrap(),
            "-o",
            det.to_str().unwrap(),
        ],
        &[],
    ));
    let gated = dir.path().join("gated");
    let msg = ok(&spraygate(
        &[
            "gate",
            "-i",
            det.join("manifest.json").to_str().unwrap(),
            "-o",
            gated.to_str().unwrap(),
        ],
        &[],
    ));
    assert!(msg.starts_with("gate kept"), "{msg}");
    let summary = std::fs::read_to_string(gated.join("gate_summary.csv")).unwrap();
    assert!(summary.starts_with("frame_id,radar_targets,before,after"));
}

#[test]
fn none_method_is_a_pass_through() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), 2);
    let out = dir.path().join("f");
    ok(&spraygate(
        &["filter", "-i", &input, "-o", out.to_str().unwrap()],
        &[],
    ));
    let src = dir.path().join("data/frames/frame_00000.bin");
    let dst = out.join("frames/frame_00000.bin");
    assert_eq!(std::fs::read(src).unwrap(), std::fs::read(dst).unwrap());
}

#[test]
fn dsor_filter_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), 2);
    let cfg = write(
        &dir.path().join("d.toml"),
        "[filter]\nmethod = \"dsor\"\n[filter.dsor]\nk = 4\n",
    );
    let out = dir.path().join("f");
    ok(&spraygate(
        &["filter", "-c", &cfg, "-i", &input, "-o", out.to_str().unwrap()],
        &[],
    ));
    assert!(out.join("filter_metrics.csv").is_file());
}

#[test]
fn pipeline_reports_three_bins_and_sweep_grids() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), 6);
    let cfg = write(
        &dir.path().join("p.toml"),
        "[filter]\nmethod = \"threshold\"\n[gate]\nenabled = true\n",
    );
    let run = dir.path().join("run");
    let table = ok(&spraygate(
        &["pipeline", "-c", &cfg, "-i", &input, "-o", run.to_str().unwrap()],
        &[],
    ));
    assert!(table.contains("threshold+gate"), "{table}");
    let csv = std::fs::read_to_string(run.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);

    let sweep = dir.path().join("sweep");
    ok(&spraygate(
        &["sweep", "-c", &cfg, "-i", &input, "-o", sweep.to_str().unwrap()],
        &[],
    ));
    let tau = std::fs::read_to_string(sweep.join("sweep_tau.csv")).unwrap();
    let gamma = std::fs::read_to_string(sweep.join("sweep_gamma.csv")).unwrap();
    assert_eq!(tau.lines().count(), 1 + 3 * 3);
    assert_eq!(gamma.lines().count(), 1 + 4 * 3);
    assert!(tau.starts_with("level,tau,bin,lo,hi,ap,"));
}

#[test]
fn external_detections_are_evaluated() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), 3);
    let gt = std::fs::read_to_string(dir.path().join("data/frames/frame_00001.gt.jsonl")).unwrap();
    // A perfect detector: ground truth echoed back with a confidence.
    let det = gt.trim_end().replace("\"class\"", "\"confidence\":0.9,\"class\"");
    let dets = write(&dir.path().join("ext.jsonl"), &format!("{det}\n"));
    let cfg = write(
        &dir.path().join("e.toml"),
        &format!("[detector]\nsource = \"external\"\ndetections = {dets:?}\n"),
    );
    let run = dir.path().join("run");
    ok(&spraygate(
        &["pipeline", "-c", &cfg, "-i", &input, "-o", run.to_str().unwrap()],
        &[],
    ));
    let csv = std::fs::read_to_string(run.join("report.csv")).unwrap();
    let overall = csv.lines().find(|l| l.contains(",overall,")).unwrap();
    let fields: Vec<&str> = overall.split(',').collect();
    // One of three vehicles found, without false positives.
    assert_eq!(&fields[6..11], ["0.3333333333333333", "3", "1", "0", "2"]);
}

#[test]
fn exit_codes_separate_config_data_and_success() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let bad_key = write(&dir.path().join("bad.toml"), "[filter]\nmethd = \"none\"\n");
    assert_eq!(
        spraygate(&["simulate", "-c", &bad_key, "-o", out], &[])
            .status
            .code(),
        Some(2)
    );
    let bad_value = write(&dir.path().join("bad2.toml"), "[gate]\ngamma = -1.0\n");
    assert_eq!(
        spraygate(&["simulate", "-c", &bad_value, "-o", out], &[])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(spraygate(&["simulate"], &[]).status.code(), Some(2));
    assert_eq!(
        spraygate(&["simulate", "-o", out], &[("SPRAYGATE_WORKERS", "zero")])
            .status
            .code(),
        Some(2)
    );

    let missing = dir.path().join("nope/manifest.json");
    let r = spraygate(&["pipeline", "-i", missing.to_str().unwrap(), "-o", out], &[]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope"));

    // Gate enabled on frames without radar: the error names the frame.
    let input = simulate(dir.path(), 2);
    std::fs::remove_file(dir.path().join("data/frames/frame_00001.radar.csv")).unwrap();
    let manifest = std::fs::read_to_string(&input).unwrap();
    let stripped = manifest.replace(",\n      \"radar\": \"frames/frame_00001.radar.csv\"", "");
    assert_ne!(manifest, stripped);
    std::fs::write(&input, stripped).unwrap();
    let cfg = write(&dir.path().join("g.toml"), "[gate]\nenabled = true\n");
    let r = spraygate(&["pipeline", "-c", &cfg, "-i", &input, "-o", out], &[]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("frame_00001"));

    ok(&spraygate(
        &["simulate", "-o", out],
        &[("SPRAYGATE_WORKERS", "2")],
    ));
}
