use std::fmt;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use serde_json::json;
use vtr_core::accel::{latency_lower_bound, simulate_forward, AccelConfig, CostModel};
use vtr_core::io::{load_image, load_weights, read_trace, write_trace};
use vtr_core::model::{
    best_mstar, count_macs, forward, forward_traced, mac_breakdown, param_breakdown, random_init,
    stage, table_grid, ActivationTrace, Dataset, Logits, ParamVariant, VtrConfig, WeightSet,
    MAC_FORMULA,
};
use vtr_core::spt::Image;
use vtr_core::validate::{compare_traces, validate_fixtures};

use crate::{
    BenchArgs, ConfigArgs, CountArgs, InferArgs, ModelArgs, SimulateArgs, TraceCompareArgs,
    ValidateArgs,
};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(vtr_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(EXIT_USAGE),
            CliError::Core(vtr_core::Error::InvalidConfig(_))
            | CliError::Core(vtr_core::Error::InvalidAccelConfig(_)) => ExitCode::from(EXIT_USAGE),
            CliError::Core(_) => ExitCode::from(EXIT_IO),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<vtr_core::Error> for CliError {
    fn from(e: vtr_core::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult = Result<ExitCode, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn pass_fail(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

impl ConfigArgs {
    fn is_empty(&self) -> bool {
        self.preset.is_none()
            && self.dataset.is_none()
            && self.image_size.is_none()
            && self.channels.is_none()
            && self.patch.is_none()
            && self.dim.is_none()
            && self.depth.is_none()
            && self.heads.is_none()
            && self.classes.is_none()
    }

    fn resolve(&self) -> Result<VtrConfig, CliError> {
        let base = match self.preset.as_deref() {
            Some("best-mstar") => Some(best_mstar()),
            Some(p) => return Err(usage(format!("unknown preset {p:?} (known: best-mstar)"))),
            None => None,
        };
        let dataset = match self.dataset.as_deref() {
            Some(d) => Some(Dataset::parse(d).ok_or_else(|| {
                usage(format!("unknown dataset {d:?} (known: mstar, synthwake, gbsar)"))
            })?),
            None => None,
        };
        let need = |v: Option<usize>, from_base: Option<usize>, flag: &str| {
            v.or(from_base)
                .ok_or_else(|| usage(format!("missing --{flag} (or use --preset/--weights)")))
        };
        let size = need(
            self.image_size,
            base.map(|b| b.image_height).or(dataset.map(Dataset::image_size)),
            "image-size",
        )?;
        let classes = need(
            self.classes,
            base.map(|b| b.num_classes).or(dataset.map(Dataset::num_classes)),
            "classes",
        )?;
        let patch = need(self.patch, base.map(|b| b.patch), "patch")?;
        let dim = need(self.dim, base.map(|b| b.hidden_dim), "dim")?;
        let depth = need(self.depth, base.map(|b| b.depth), "depth")?;
        let heads = need(self.heads, base.map(|b| b.heads), "heads")?;
        let mut cfg = VtrConfig::square(size, patch, dim, depth, heads, classes);
        cfg.channels = self.channels.unwrap_or(1);
        cfg.validate_strict()?;
        Ok(cfg)
    }
}

impl ModelArgs {
    fn load(&self) -> Result<(WeightSet<f32>, VtrConfig), CliError> {
        match &self.weights {
            Some(path) => {
                if !self.config.is_empty() {
                    return Err(usage("--weights carries its own config; drop the config flags"));
                }
                Ok(load_weights(path)?)
            }
            None => {
                if self.config.is_empty() {
                    return Err(usage("give --weights, --preset or config flags"));
                }
                let cfg = self.config.resolve()?;
                Ok((random_init(&cfg, self.seed), cfg))
            }
        }
    }
}

/// Deterministic stand-in input when no image is given.
fn synthetic_image(cfg: &VtrConfig) -> Image<f32> {
    let (h, w) = (cfg.image_height as f32, cfg.image_width as f32);
    Image::from_fn(cfg.image_height, cfg.image_width, cfg.channels, |r, c, ch| {
        let dy = (r as f32 - h / 2.0) / h;
        let dx = (c as f32 - w / 2.0) / w;
        (-(dx * dx + dy * dy) * 12.0).exp() * (1.0 - 0.1 * ch as f32)
    })
}

fn input_image(path: Option<&Path>, cfg: &VtrConfig) -> Result<Image<f32>, CliError> {
    match path {
        Some(p) => Ok(load_image(p)?),
        None => Ok(synthetic_image(cfg)),
    }
}

fn logits_json(l: &Logits<f32>) -> serde_json::Value {
    json!({
        "logits": l.values,
        "probabilities": l.probabilities(),
        "argmax": l.argmax(),
    })
}

fn print_probabilities(l: &Logits<f32>) {
    println!("class  logit         probability");
    for (i, (v, p)) in l.values.iter().zip(l.probabilities()).enumerate() {
        println!("{i:<5}  {v:<12.6}  {p:.6}");
    }
    println!("argmax {}", l.argmax());
}

pub fn infer(a: InferArgs) -> CliResult {
    let (w, cfg) = load_weights::<f32>(&a.weights)?;
    let img = load_image::<f32>(&a.image)?;
    let logits = match &a.trace {
        Some(dir) => {
            let (l, trace) = forward_traced(&img, &w, &cfg)?;
            write_trace(&trace, dir)?;
            l
        }
        None => forward(&img, &w, &cfg)?,
    };
    if a.json {
        let mut v = logits_json(&logits);
        if let Some(dir) = &a.trace {
            v["trace_dir"] = json!(dir);
            v["stages"] = json!(stage::all(cfg.depth));
        }
        print_json(&v);
    } else {
        print_probabilities(&logits);
        if let Some(dir) = &a.trace {
            println!("trace written to {}", dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let cost_model = CostModel::parse(&a.cost_model)
        .ok_or_else(|| usage(format!("unknown cost model {:?} (ideal, fill-drain)", a.cost_model)))?;
    let acfg = AccelConfig {
        hcus: a.ph,
        pe_rows: a.pt,
        pe_cols: a.pc,
        pe_size: a.ppe,
        block: a.block,
        clock_hz: a.clock_mhz * 1e6,
        cost_model,
    };
    acfg.validate()?;
    let (w, cfg) = a.model.load()?;
    let img = input_image(a.image.as_deref(), &cfg)?;
    let (logits, report) = simulate_forward(&img, &w, &cfg, &acfg)?;
    let bound = latency_lower_bound(&cfg, &acfg);
    if a.json {
        let mut v = report.to_json();
        v["config"] = json!(cfg);
        v["latency_lower_bound_s"] = json!(bound);
        v["result"] = logits_json(&logits);
        print_json(&v);
    } else {
        print!("{}", report.to_text());
        println!("latency bound     {:.6} ms", bound * 1e3);
        print_probabilities(&logits);
    }
    Ok(ExitCode::SUCCESS)
}

fn count_row(cfg: &VtrConfig) -> serde_json::Value {
    let p = param_breakdown(cfg);
    json!({
        "config": cfg,
        "params_full": p.total(ParamVariant::Full),
        "params_paper_comparable": p.total(ParamVariant::PaperComparable),
        "macs": count_macs(cfg),
        "param_breakdown": p,
        "mac_breakdown": mac_breakdown(cfg),
    })
}

fn kilo(n: u64) -> String {
    format!("{:.2}K", n as f64 / 1e3)
}

pub fn count(a: CountArgs) -> CliResult {
    let variant = if a.paper_comparable {
        ParamVariant::PaperComparable
    } else {
        ParamVariant::Full
    };
    if a.table {
        if a.weights.is_some() || !a.config.is_empty() {
            return Err(usage("--table takes no config"));
        }
        let rows: Vec<_> = table_grid()
            .into_iter()
            .map(|(d, c)| {
                let mut r = count_row(&c);
                r["dataset"] = json!(d);
                r
            })
            .collect();
        if a.json {
            print_json(&json!(rows));
        } else {
            println!("dataset    patch  dim  depth  heads  params      MACs");
            for (d, c) in table_grid() {
                println!(
                    "{:<9}  {:>5}  {:>3}  {:>5}  {:>5}  {:>10}  {:>11}",
                    format!("{d:?}").to_lowercase(),
                    c.patch,
                    c.hidden_dim,
                    c.depth,
                    c.heads,
                    kilo(vtr_core::model::count_params(&c, variant)),
                    count_macs(&c)
                );
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = match &a.weights {
        Some(p) => {
            if !a.config.is_empty() {
                return Err(usage("--weights carries its own config; drop the config flags"));
            }
            load_weights::<f32>(p)?.1
        }
        None => a.config.resolve()?,
    };
    let mut row = count_row(&cfg);
    let selected = vtr_core::model::count_params(&cfg, variant);
    if a.json {
        row["variant"] = json!(variant);
        row["params"] = json!(selected);
        row["mac_formula"] = json!(MAC_FORMULA);
        print_json(&row);
    } else {
        println!(
            "config    image {}x{}x{}  patch {}  dim {}  depth {}  heads {}  classes {}",
            cfg.image_height,
            cfg.image_width,
            cfg.channels,
            cfg.patch,
            cfg.hidden_dim,
            cfg.depth,
            cfg.heads,
            cfg.num_classes
        );
        let label = if a.paper_comparable { "paper-comparable" } else { "full" };
        println!("params    {selected} ({}) [{label}]", kilo(selected));
        println!("  full              {}", row["params_full"]);
        println!("  paper-comparable  {}", row["params_paper_comparable"]);
        println!("MACs      {} ({:.2}M)", count_macs(&cfg), count_macs(&cfg) as f64 / 1e6);
        println!("formula   {MAC_FORMULA}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn validate(a: ValidateArgs) -> CliResult {
    let rep = validate_fixtures(&a.fixtures)?;
    if a.json {
        let mut v = serde_json::to_value(&rep).expect("report serializes");
        v["passed"] = json!(rep.passed());
        print_json(&v);
    } else {
        print!("{}", rep.to_text());
    }
    Ok(pass_fail(rep.passed()))
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 || q != 0.5 {
        sorted[((n - 1) as f64 * q).round() as usize]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn bench(a: BenchArgs) -> CliResult {
    if a.iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    if a.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let (w, cfg) = a.model.load()?;
    let img = input_image(a.image.as_deref(), &cfg)?;
    forward(&img, &w, &cfg)?;

    let wall = Instant::now();
    let per_thread: Vec<Vec<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..a.threads)
            .map(|_| {
                s.spawn(|| {
                    for _ in 0..a.warmup {
                        std::hint::black_box(forward(&img, &w, &cfg).expect("checked above"));
                    }
                    (0..a.iters)
                        .map(|_| {
                            let t = Instant::now();
                            std::hint::black_box(forward(&img, &w, &cfg).expect("checked above"));
                            t.elapsed().as_secs_f64()
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker")).collect()
    });
    let wall = wall.elapsed().as_secs_f64();

    let mut all: Vec<f64> = per_thread.concat();
    all.sort_by(f64::total_cmp);
    let min = all[0];
    let median = percentile_sorted(&all, 0.5);
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let images = all.len();
    // warmup time is inside the wall clock, so count it too
    let throughput = (images + a.threads * a.warmup) as f64 / wall;
    if a.json {
        print_json(&json!({
            "config": cfg,
            "threads": a.threads,
            "iters": a.iters,
            "samples": images,
            "min_s": min,
            "median_s": median,
            "mean_s": mean,
            "images_per_s": throughput,
        }));
    } else {
        println!("threads {}  iters {}  samples {images}", a.threads, a.iters);
        println!("min     {:.3} ms", min * 1e3);
        println!("median  {:.3} ms", median * 1e3);
        println!("mean    {:.3} ms", mean * 1e3);
        println!("throughput {throughput:.1} images/s");
    }
    Ok(ExitCode::SUCCESS)
}

/// Stage names present in a bundle directory, in execution order where known.
fn bundle_stages(dir: &Path) -> Result<Vec<String>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| {
        CliError::Core(vtr_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    let mut names: Vec<String> = rd
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".vtrt").map(String::from))
        .collect();
    if names.is_empty() {
        return Err(CliError::Core(vtr_core::Error::NoFixtures(dir.to_path_buf())));
    }
    let order = |n: &String| -> (usize, usize, String) {
        let rank = |s: &str| stage::LAYER_STAGES.iter().position(|x| *x == s).unwrap_or(99);
        match n.as_str() {
            "spt" => (0, 0, String::new()),
            "tokens" => (1, 0, String::new()),
            "embed" => (2, 0, String::new()),
            "head_ln" => (usize::MAX - 1, 0, String::new()),
            "logits" => (usize::MAX, 0, String::new()),
            other => match other.strip_prefix("layer").and_then(|r| r.split_once('.')) {
                Some((i, sub)) => (3 + i.parse::<usize>().unwrap_or(usize::MAX / 2), rank(sub), String::new()),
                None => (usize::MAX - 2, 0, other.to_string()),
            },
        }
    };
    names.sort_by_key(order);
    Ok(names)
}

pub fn trace_compare(a: TraceCompareArgs) -> CliResult {
    let stages = bundle_stages(&a.reference)?;
    let reference: ActivationTrace<f32> = read_trace(&a.reference, &stages)?;
    let got = match (&a.trace, &a.weights, &a.image) {
        (Some(dir), _, _) => {
            let present: Vec<String> = stages
                .iter()
                .filter(|s| dir.join(vtr_core::io::stage_file(s)).is_file())
                .cloned()
                .collect();
            read_trace(dir, &present)?
        }
        (None, Some(w), Some(i)) => {
            let (w, cfg) = load_weights::<f32>(w)?;
            let img = load_image::<f32>(i)?;
            forward_traced(&img, &w, &cfg)?.1
        }
        _ => return Err(usage("give --trace, or --weights with --image")),
    };
    let checks = compare_traces(&got, &reference, a.tolerance);
    let ok = checks.iter().all(|c| c.passed);
    if a.json {
        print_json(&json!({ "passed": ok, "stages": checks }));
    } else {
        for c in &checks {
            let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
            println!(
                "{:<4}  {:<22}  rel {:.3e}{note}",
                if c.passed { "ok" } else { "FAIL" },
                c.stage,
                c.rel_error
            );
        }
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.stage.as_str()).collect();
        if failed.is_empty() {
            println!("{} stages within {:.1e}", checks.len(), a.tolerance);
        } else {
            println!("{} of {} stages differ: {}", failed.len(), checks.len(), failed.join(", "));
        }
    }
    Ok(pass_fail(ok))
}
