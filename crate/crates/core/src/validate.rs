//! Golden-fixture validation and trace comparison.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::accel::{simulate_forward, AccelConfig};
use crate::error::{Error, Result};
use crate::io::{load_image, load_manifest, load_weights, read_trace, FixtureCase, Tolerances, MANIFEST_FILE};
use crate::model::{forward_traced, logits_relative_error, stage, ActivationTrace, VtrConfig};
use crate::scalar::Scalar;
use crate::tensor::{relative_max_error, Matrix};

/// Attention rows must sum to one within this, and masked entries stay below it.
pub const SOFTMAX_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageCheck {
    pub stage: String,
    /// `‖got − want‖∞ / ‖want‖∞`; infinite on shape mismatch or missing data.
    pub rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StageCheck {
    fn failed(stage: &str, tolerance: f64, note: String) -> Self {
        Self {
            stage: stage.into(),
            rel_error: f64::INFINITY,
            tolerance,
            passed: false,
            note: Some(note),
        }
    }
}

/// Compare one matrix against a reference.
pub fn compare_stage<T: Scalar>(name: &str, got: &Matrix<T>, want: &Matrix<T>, tolerance: f64) -> StageCheck {
    if got.shape() != want.shape() {
        return StageCheck::failed(
            name,
            tolerance,
            format!("shape {:?} vs reference {:?}", got.shape(), want.shape()),
        );
    }
    let rel_error = relative_max_error(got, want);
    StageCheck {
        stage: name.into(),
        rel_error,
        tolerance,
        passed: rel_error <= tolerance,
        note: None,
    }
}

/// Compare every stage of `reference` that `got` must also contain.
pub fn compare_traces<T: Scalar>(
    got: &ActivationTrace<T>,
    reference: &ActivationTrace<T>,
    tolerance: f64,
) -> Vec<StageCheck> {
    reference
        .iter()
        .map(|(name, want)| match got.get(name) {
            Some(m) => compare_stage(name, m, want, tolerance),
            None => StageCheck::failed(name, tolerance, "stage missing".into()),
        })
        .collect()
}

/// Softmax row sums and masked diagonals of every `attn_scores` stage.
pub fn attention_invariants<T: Scalar>(trace: &ActivationTrace<T>, cfg: &VtrConfig) -> Vec<String> {
    let t = cfg.seq_len();
    let mut problems = Vec::new();
    for i in 0..cfg.depth {
        let name = stage::layer(i, "attn_scores");
        let Some(s) = trace.get(&name) else {
            problems.push(format!("{name}: missing"));
            continue;
        };
        for r in 0..s.rows() {
            let row = s.row(r);
            let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
            if (sum - 1.0).abs() > SOFTMAX_TOL {
                problems.push(format!("{name}: row {r} sums to {sum}"));
            }
            let diag = row[r % t].as_f64();
            if diag >= SOFTMAX_TOL {
                problems.push(format!("{name}: diagonal score {diag} in row {r}"));
            }
        }
    }
    problems
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub stages: Vec<StageCheck>,
    pub expected_class: usize,
    pub predicted_class: Option<usize>,
    pub sim_logits_rel: Option<f64>,
    pub invariant_failures: Vec<String>,
    pub errors: Vec<String>,
}

impl CaseReport {
    pub fn argmax_ok(&self) -> bool {
        self.predicted_class == Some(self.expected_class)
    }

    pub fn passed(&self, tol: &Tolerances) -> bool {
        self.errors.is_empty()
            && self.invariant_failures.is_empty()
            && self.argmax_ok()
            && self.stages.iter().all(|s| s.passed)
            && self.sim_logits_rel.is_some_and(|e| e <= tol.logits_rel)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub root: PathBuf,
    pub tolerances: Tolerances,
    pub dangling: Vec<PathBuf>,
    pub cases: Vec<CaseReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.dangling.is_empty() && self.cases.iter().all(|c| c.passed(&self.tolerances))
    }

    pub fn stage_count(&self) -> usize {
        self.cases.iter().map(|c| c.stages.len()).sum()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .dangling
            .iter()
            .map(|p| format!("dangling path {}", p.display()))
            .collect();
        for c in &self.cases {
            out.extend(c.errors.iter().map(|e| format!("{}: {e}", c.name)));
            out.extend(c.invariant_failures.iter().map(|e| format!("{}: {e}", c.name)));
            for s in c.stages.iter().filter(|s| !s.passed) {
                let note = s.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
                out.push(format!(
                    "{}: stage {} rel error {:.3e} > {:.1e}{note}",
                    c.name, s.stage, s.rel_error, s.tolerance
                ));
            }
            if c.errors.is_empty() && !c.argmax_ok() {
                out.push(format!(
                    "{}: predicted class {:?}, expected {}",
                    c.name, c.predicted_class, c.expected_class
                ));
            }
            if let Some(e) = c.sim_logits_rel.filter(|&e| e > self.tolerances.logits_rel) {
                out.push(format!("{}: simulator logits rel error {e:.3e}", c.name));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.cases {
            let worst = c.stages.iter().map(|s| s.rel_error).fold(0.0, f64::max);
            s.push_str(&format!(
                "{:<5} {}  stages {}/{}  max rel {:.2e}  class {:?}/{}  sim rel {}\n",
                if c.passed(&self.tolerances) { "PASS" } else { "FAIL" },
                c.name,
                c.stages.iter().filter(|s| s.passed).count(),
                c.stages.len(),
                worst,
                c.predicted_class,
                c.expected_class,
                c.sim_logits_rel.map_or("-".into(), |e| format!("{e:.2e}")),
            ));
        }
        for f in self.failures() {
            s.push_str(&format!("  {f}\n"));
        }
        s.push_str(&format!(
            "{} cases, {} stage checks: {}\n",
            self.cases.len(),
            self.stage_count(),
            if self.passed() { "all passed" } else { "FAILED" }
        ));
        s
    }
}

fn run_case(root: &Path, case: &FixtureCase, tol: &Tolerances) -> CaseReport {
    let mut rep = CaseReport {
        name: case.name.clone(),
        expected_class: case.expected_class,
        ..CaseReport::default()
    };
    let loaded = load_weights::<f32>(root.join(&case.weights))
        .and_then(|(w, cfg)| load_image::<f32>(root.join(&case.image)).map(|img| (w, cfg, img)));
    let (w, cfg, img) = match loaded {
        Ok(v) => v,
        Err(e) => {
            rep.errors.push(e.to_string());
            return rep;
        }
    };
    if let Some(bad) = case.stages.iter().find(|s| !stage::is_valid(s)) {
        rep.errors.push(format!("unknown stage name {bad:?}"));
        return rep;
    }
    let (logits, trace) = match forward_traced(&img, &w, &cfg) {
        Ok(v) => v,
        Err(e) => {
            rep.errors.push(format!("forward: {e}"));
            return rep;
        }
    };
    rep.predicted_class = Some(logits.argmax());
    match read_trace::<f32>(root.join(&case.trace_dir), &case.stages) {
        Ok(reference) => rep.stages = compare_traces(&trace, &reference, tol.stage_rel),
        Err(e) => rep.errors.push(e.to_string()),
    }
    rep.invariant_failures = attention_invariants(&trace, &cfg);
    match simulate_forward(&img, &w, &cfg, &AccelConfig::default()) {
        Ok((sim, _)) => rep.sim_logits_rel = Some(logits_relative_error(&sim, &logits)),
        Err(e) => rep.errors.push(format!("simulate: {e}")),
    }
    rep
}

/// Validate every case listed in `<dir>/manifest.json`.
pub fn validate_fixtures(dir: impl AsRef<Path>) -> Result<ValidationReport> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "fixture directory not found"),
        ));
    }
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(Error::NoFixtures(dir.to_path_buf()));
    }
    let manifest = load_manifest(dir)?;
    if manifest.cases.is_empty() {
        return Err(Error::NoFixtures(dir.to_path_buf()));
    }
    let cases = manifest
        .cases
        .iter()
        .map(|c| run_case(dir, c, &manifest.tolerances))
        .collect();
    Ok(ValidationReport {
        root: dir.to_path_buf(),
        tolerances: manifest.tolerances,
        dangling: manifest.dangling(dir),
        cases,
    })
}
