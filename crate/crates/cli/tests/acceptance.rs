//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtr_core::accel::{latency_lower_bound, peak_throughput, simulate_forward, AccelConfig};
use vtr_core::model::{
    count_macs, forward, forward_traced, logits_relative_error, lsa_attention, random_dense,
    random_init, stage, table_grid, VtrConfig,
};
use vtr_core::spt::Image;
use vtr_core::tensor::{dbmm, from_blocked, naive_matmul, to_blocked, Matrix, Orientation};

type Outcome = Result<String, String>;

fn vtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtr"))
        .args(args)
        .output()
        .expect("spawn vtr")
}

fn json(o: &Output) -> Result<serde_json::Value, String> {
    if o.status.code() != Some(0) {
        return Err(format!(
            "exit {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        ));
    }
    serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    if elapsed <= budget {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, budget {budget:.0?}"))
    }
}

fn param_table() -> Outcome {
    // (patch, dim, depth, heads, published count)
    let rows = [
        (8, 44, 4, 2, 109_990.0),
        (8, 44, 6, 2, 157_330.0),
        (8, 88, 12, 4, 1_156_000.0),
        (11, 44, 4, 2, 123_100.0),
    ];
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (patch, dim, depth, heads, want) in rows {
        let args = [
            "count", "--dataset", "mstar",
            "--patch", &patch.to_string(), "--dim", &dim.to_string(),
            "--depth", &depth.to_string(), "--heads", &heads.to_string(),
            "--paper-comparable", "--json",
        ];
        let t0 = Instant::now();
        let v = json(&vtr(&args))?;
        slowest = slowest.max(t0.elapsed());
        let got = v["params"].as_f64().ok_or("no params field")?;
        let rel = (got - want).abs() / want;
        if rel > 0.02 {
            return Err(format!("patch {patch} D {dim} L {depth}: {got} vs {want} ({:.2}%)", rel * 100.0));
        }
        worst = worst.max(rel);
    }
    within_budget(slowest, Duration::from_secs(1))?;
    Ok(format!("4 configs, worst {:.3}%, slowest {slowest:.2?}", worst * 100.0))
}

fn peak_performance() -> Outcome {
    let cfg = AccelConfig::default();
    let per_cycle = cfg.peak_macs_per_cycle();
    if per_cycle != 4 * 12 * 2 * 8 * 8 {
        return Err(format!("{per_cycle} MACs/cycle"));
    }
    let peak = peak_throughput(&cfg);
    let rel = (peak - 1.8e12).abs() / 1.8e12;
    if rel > 0.03 {
        return Err(format!("{peak:.4e} MAC/s is {:.2}% from 1.8e12", rel * 100.0));
    }
    Ok(format!("{per_cycle} MACs/cycle, {peak:.4e} MAC/s, {:.2}% from 1.8T", rel * 100.0))
}

fn triple_loop(a: &Matrix<f32>, w: &Matrix<f32>) -> Vec<f64> {
    let (m, k, n) = (a.rows(), a.cols(), w.cols());
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a.get(i, p) as f64 * w.get(p, j) as f64).sum();
        }
    }
    out
}

fn rel_frobenius(got: &[f32], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).powi(2)).sum();
    let den: f64 = want.iter().map(|w| w * w).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn dbmm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDB);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..200 {
        let (m, k, n) = (rng.random_range(1..=128), rng.random_range(1..=128), rng.random_range(1..=128));
        let b = [8, 16, 32][rng.random_range(0..3)];
        let mut rand_matrix = |r, c| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0f32..1.0));
        let a = rand_matrix(m, k);
        let w = rand_matrix(k, n);

        let ab = to_blocked(&a, b, Orientation::BlockRowMajor);
        let wb = to_blocked(&w, b, Orientation::BlockColMajor);
        if from_blocked(&ab) != a || from_blocked(&wb) != w {
            return Err(format!("case {case}: layout round trip changed values"));
        }
        if !ab.padding_is_zero() || !wb.padding_is_zero() {
            return Err(format!("case {case}: nonzero padding"));
        }
        let got = from_blocked(&dbmm(&ab, &wb).map_err(|e| e.to_string())?);
        let want = triple_loop(&a, &w);
        let rel = rel_frobenius(got.data(), &want);
        let naive = naive_matmul(&a, &w).map_err(|e| e.to_string())?;
        let rel_naive = rel_frobenius(naive.data(), &want);
        if rel > 1e-5 || rel_naive > 1e-5 {
            return Err(format!("case {case} ({m}x{k}x{n}, b {b}): dbmm {rel:.2e}, naive {rel_naive:.2e}"));
        }
        worst = worst.max(rel);
    }
    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(30))?;
    Ok(format!("200 cases, worst rel {worst:.2e}, round trips exact, {elapsed:.2?}"))
}

fn lsa_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x15A);
    let mut rows = 0usize;
    let (mut worst_sum, mut worst_diag) = (0.0f64, 0.0f64);
    for model in 0..100u64 {
        let patch = [2, 4][rng.random_range(0..2)];
        let side = patch * rng.random_range(2..=5);
        let heads = rng.random_range(1..=4);
        let dim = heads * rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let cfg = VtrConfig::square(side, patch, dim, depth, heads, 3);
        let w = random_dense::<f32>(&cfg, model, rng.random_range(0.1..2.0));
        let img = Image::from_fn(side, side, 1, |_, _, _| rng.random_range(-3.0f32..3.0));
        let (_, trace) = forward_traced(&img, &w, &cfg).map_err(|e| e.to_string())?;
        let t = cfg.seq_len();
        for i in 0..depth {
            let name = stage::layer(i, "attn_scores");
            let s = trace.get(&name).ok_or(format!("model {model}: {name} missing"))?;
            for r in 0..s.rows() {
                let sum: f64 = s.row(r).iter().map(|&v| v as f64).sum();
                let diag = s.get(r, r % t) as f64;
                worst_sum = worst_sum.max((sum - 1.0).abs());
                worst_diag = worst_diag.max(diag);
                if (sum - 1.0).abs() > 1e-6 || diag >= 1e-6 {
                    return Err(format!("model {model} {name} row {r}: sum {sum}, diagonal {diag}"));
                }
                rows += 1;
            }
        }
    }

    let mut cfg = VtrConfig::square(2, 2, 4, 1, 1, 2);
    cfg.image_height = 2;
    cfg.image_width = 2;
    cfg.num_shifts = 0;
    let w = random_dense::<f32>(&cfg, 7, 1.0);
    let z = Matrix::from_fn(2, 4, |r, c| (r as f32 - 0.5) * (c as f32 + 1.0));
    let out = lsa_attention(&z, &w.layers[0], &cfg, 0).map_err(|e| e.to_string())?;
    if out.scores.data() != [0.0, 1.0, 1.0, 0.0] {
        return Err(format!("2-token scores {:?}", out.scores.data()));
    }
    Ok(format!(
        "100 models, {rows} rows, max |sum-1| {worst_sum:.1e}, max diagonal {worst_diag:.1e}, 2-token case exact"
    ))
}

fn engine_simulator_grid() -> Outcome {
    let acfg = AccelConfig::default();
    let t0 = Instant::now();
    let grid = table_grid();
    let mut worst = 0.0f64;
    let mut min_slack = f64::INFINITY;
    for (idx, (ds, cfg)) in grid.iter().enumerate() {
        let label = format!("{ds:?} p{} D{} L{} H{}", cfg.patch, cfg.hidden_dim, cfg.depth, cfg.heads);
        let w = random_init::<f32>(cfg, idx as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + idx as u64);
        let img = Image::from_fn(cfg.image_height, cfg.image_width, 1, |_, _, _| rng.random_range(0.0f32..1.0));
        let engine = forward(&img, &w, cfg).map_err(|e| format!("{label}: {e}"))?;
        let (sim, report) = simulate_forward(&img, &w, cfg, &acfg).map_err(|e| format!("{label}: {e}"))?;
        let rel = logits_relative_error(&sim, &engine);
        if !(rel <= 1e-4) {
            return Err(format!("{label}: logits rel {rel:.2e}"));
        }
        let macs = count_macs(cfg);
        if report.hppu_model_macs() != macs {
            return Err(format!("{label}: HPPU MACs {} vs {macs}", report.hppu_model_macs()));
        }
        let util = report.utilization();
        if !(util <= 1.0) {
            return Err(format!("{label}: utilization {util}"));
        }
        let bound = latency_lower_bound(cfg, &acfg);
        let latency = report.latency_seconds();
        if latency < bound {
            return Err(format!("{label}: latency {latency:.3e} below bound {bound:.3e}"));
        }
        worst = worst.max(rel);
        min_slack = min_slack.min(latency / bound);
    }
    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "{} configs, worst logits rel {worst:.1e}, MACs exact, min latency/bound {min_slack:.2}, {elapsed:.1?}",
        grid.len()
    ))
}

fn golden_fixtures() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let o = vtr(&["validate", "--fixtures", dir.to_str().unwrap(), "--json"]);
    let v: serde_json::Value =
        serde_json::from_slice(&o.stdout).map_err(|e| format!("exit {:?}: {e}", o.status.code()))?;
    let cases = v["cases"].as_array().ok_or("no cases")?;
    let stages: usize = cases.iter().map(|c| c["stages"].as_array().map_or(0, |s| s.len())).sum();
    if o.status.code() != Some(0) || v["passed"] != true {
        return Err(format!("validate failed: {}", String::from_utf8_lossy(&o.stdout)));
    }
    Ok(format!("{} cases, {stages} stages within tolerance", cases.len()))
}

fn desk_latency() -> Outcome {
    let v = json(&vtr(&["bench", "--preset", "best-mstar", "--iters", "10", "--json"]))?;
    let median = v["median_s"].as_f64().ok_or("no median")?;
    if median >= 0.05 {
        return Err(format!("median {:.2} ms", median * 1e3));
    }
    Ok(format!("median {:.2} ms over 10 images", median * 1e3))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("parameter table", param_table),
        ("peak performance", peak_performance),
        ("dbmm oracle suite", dbmm_oracle),
        ("lsa invariants", lsa_invariants),
        ("engine-simulator equivalence", engine_simulator_grid),
        ("golden fixtures", golden_fixtures),
        ("desk-scale latency", desk_latency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 7 - failed, 7);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
