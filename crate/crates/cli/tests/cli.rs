use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtr"))
        .args(args)
        .output()
        .expect("spawn vtr")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fx(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn help_for_every_subcommand() {
    for sub in ["infer", "simulate", "count", "validate", "bench", "trace-compare"] {
        let o = vtr(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("--json"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(vtr(&[]).status.code(), Some(2));
    assert_eq!(vtr(&["count", "--bogus"]).status.code(), Some(2));
    assert_eq!(vtr(&["count", "--patch", "8"]).status.code(), Some(2));
    let o = vtr(&["simulate", "--preset", "best-mstar", "--ppe", "7", "--block", "16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("multiple"));
    assert_eq!(vtr(&["bench", "--preset", "best-mstar", "--iters", "0"]).status.code(), Some(2));
}

#[test]
fn infer_matches_manifest_class() {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("manifest.json")).unwrap()).unwrap();
    for case in m["cases"].as_array().unwrap() {
        let o = vtr(&[
            "infer",
            "--weights",
            &fx(case["weights"].as_str().unwrap()),
            "--image",
            &fx(case["image"].as_str().unwrap()),
            "--json",
        ]);
        assert_eq!(o.status.code(), Some(0));
        let v = json(&o);
        assert_eq!(v["argmax"], case["expected_class"]);
        let p: f64 = v["probabilities"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-9);
    }
}

#[test]
fn infer_text_has_six_decimals() {
    let o = vtr(&["infer", "--weights", &fx("odd.vtrw"), "--image", &fx("images/odd-0-ring.pgm")]);
    let text = stdout(&o);
    let line = text.lines().nth(1).unwrap();
    let prob = line.split_whitespace().last().unwrap();
    assert_eq!(prob.split('.').nth(1).unwrap().len(), 6, "{line}");
    assert!(text.contains("argmax 0"));
}

#[test]
fn missing_file_names_path() {
    let o = vtr(&["infer", "--weights", "/nonexistent/w.vtrw", "--image", &fx("images/odd-0-ring.pgm")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/w.vtrw"));
    let o = vtr(&["infer", "--weights", &fx("images/odd-0-ring.pgm"), "--image", &fx("images/odd-0-ring.pgm")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));
}

#[test]
fn trace_has_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = vtr(&[
        "infer",
        "--weights",
        &fx("toy.vtrw"),
        "--image",
        &fx("images/toy-0-blob.pgm"),
        "--trace",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut want: Vec<String> = vtr_core::model::stage::all(2).iter().map(|s| format!("{s}.vtrt")).collect();
    want.sort();
    assert_eq!(names, want);

    // the fresh trace agrees with the committed reference
    let o = vtr(&["trace-compare", "--reference", &fx("traces/toy-0-blob"), "--trace", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn simulate_agrees_with_infer_and_sums() {
    let args = ["--weights", &fx("toy.vtrw"), "--image", &fx("images/toy-1-bar.pgm")];
    let inf = json(&vtr(&[&["infer"][..], &args, &["--json"]].concat()));
    let sim = json(&vtr(&[&["simulate"][..], &args, &["--json"]].concat()));
    let a: Vec<f64> = inf["logits"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let b: Vec<f64> = sim["result"]["logits"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let max = a.iter().fold(0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(&b).fold(0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err / max < 1e-4);
    let total: u64 = sim["stages"].as_array().unwrap().iter().map(|s| s["cycles"].as_u64().unwrap()).sum();
    assert_eq!(total, sim["total_cycles"].as_u64().unwrap());
    assert_eq!(sim["hppu_model_macs"], sim["model_macs"]);
}

#[test]
fn simulate_best_mstar_respects_bound() {
    let v = json(&vtr(&["simulate", "--preset", "best-mstar", "--json"]));
    let latency = v["latency_s"].as_f64().unwrap();
    let bound = v["latency_lower_bound_s"].as_f64().unwrap();
    assert!(bound > 0.092e-3 && bound < 0.094e-3, "{bound}");
    assert!(latency >= bound);
    let u = v["utilization"].as_f64().unwrap();
    assert!(u > 0.0 && u <= 1.0);
    let fd = json(&vtr(&["simulate", "--preset", "best-mstar", "--cost-model", "fill-drain", "--json"]));
    assert!(fd["total_cycles"].as_u64().unwrap() > v["total_cycles"].as_u64().unwrap());
}

#[test]
fn count_reads_weights_and_config() {
    let v = json(&vtr(&["count", "--weights", &fx("toy.vtrw"), "--json"]));
    let (w, _) = vtr_core::io::load_weights::<f32>(fixtures().join("toy.vtrw")).unwrap();
    assert_eq!(v["params_full"].as_u64().unwrap(), w.element_count() as u64);
    let v = json(&vtr(&["count", "--dataset", "mstar", "--patch", "8", "--dim", "44", "--depth", "4", "--heads", "2", "--json"]));
    assert_eq!(v["macs"], 18_280_504);
    assert_eq!(v["params_paper_comparable"], 109_994);
    let t = json(&vtr(&["count", "--table", "--json"]));
    assert_eq!(t.as_array().unwrap().len(), 96);
}

#[test]
fn validate_outcomes() {
    let o = vtr(&["validate", "--fixtures", fixtures().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let empty = tempfile::tempdir().unwrap();
    let o = vtr(&["validate", "--fixtures", empty.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no fixtures"));
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            std::fs::copy(e.path(), dst).unwrap();
        }
    }
}

#[test]
fn perturbed_weight_byte_is_reported_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    let p = dir.path().join("odd.vtrw");
    let mut b = std::fs::read(&p).unwrap();
    // exponent byte of the last fc2 weight; behind it sit fc2.bias [20],
    // head.ln [20 + 20], head.linear.weight [20x3] and head.linear.bias [3]
    let n = b.len();
    b[n - 4 * 123 - 1] ^= 0x08;
    std::fs::write(&p, b).unwrap();

    let o = vtr(&["validate", "--fixtures", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("stage layer0.mlp_out"), "{}", stdout(&o));

    let o = vtr(&[
        "trace-compare",
        "--reference",
        dir.path().join("traces/odd-0-ring").to_str().unwrap(),
        "--weights",
        p.to_str().unwrap(),
        "--image",
        dir.path().join("images/odd-0-ring.pgm").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL  layer0.mlp_out"), "{text}");
    assert!(text.contains("ok    layer0.res1"), "{text}");
}

#[test]
fn bench_single_iteration() {
    let v = json(&vtr(&["bench", "--dataset", "gbsar", "--patch", "11", "--dim", "44", "--depth", "4", "--heads", "2", "--iters", "1", "--json"]));
    assert_eq!(v["samples"], 1);
    assert_eq!(v["min_s"], v["median_s"]);
    assert_eq!(v["min_s"], v["mean_s"]);
}

#[test]
fn bench_threads_do_not_regress() {
    let base = ["bench", "--dataset", "mstar", "--patch", "11", "--dim", "44", "--depth", "4", "--heads", "2", "--iters", "6"];
    let best = |threads: &str| {
        (0..3)
            .map(|_| {
                let v = json(&vtr(&[&base[..], &["--threads", threads, "--json"]].concat()));
                assert_eq!(v["samples"].as_u64().unwrap(), 6 * threads.parse::<u64>().unwrap());
                v["images_per_s"].as_f64().unwrap()
            })
            .fold(0.0, f64::max)
    };
    let (t1, t2) = (best("1"), best("2"));
    // equal within timing noise on a single core
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let floor = if cores > 1 { 1.0 } else { 0.95 };
    assert!(t2 >= floor * t1, "{t2} < {floor} x {t1} on {cores} cores");
}
