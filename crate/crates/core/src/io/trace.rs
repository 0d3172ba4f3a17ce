//! Trace bundles: one `<stage>.vtrt` file per recorded stage.

use std::path::Path;

use super::vtrt::{load_tensor, save_tensor, Tensor};
use crate::error::{Error, Result};
use crate::model::ActivationTrace;
use crate::scalar::Scalar;

pub fn stage_file(stage: &str) -> String {
    format!("{stage}.vtrt")
}

/// Write every stage of `trace` into `dir`, creating it if needed.
pub fn write_trace<T: Scalar>(trace: &ActivationTrace<T>, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(trace.len());
    for (name, m) in trace.iter() {
        let f = stage_file(name);
        save_tensor(&Tensor::from_matrix(m), dir.join(&f))?;
        files.push(f);
    }
    Ok(files)
}

/// Read the named stages back from `dir`.
pub fn read_trace<T: Scalar>(dir: impl AsRef<Path>, stages: &[String]) -> Result<ActivationTrace<T>> {
    let dir = dir.as_ref();
    let mut trace = ActivationTrace::new();
    for s in stages {
        let path = dir.join(stage_file(s));
        let m = load_tensor(&path)?.to_matrix().map_err(|e| e.at(&path))?;
        trace.record(s.clone(), m);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_traced, random_dense, stage, VtrConfig};
    use crate::spt::Image;

    #[test]
    fn bundle_round_trip() {
        let cfg = VtrConfig::square(16, 8, 8, 2, 2, 3);
        let w = random_dense::<f32>(&cfg, 1, 0.5);
        let (_, trace) = forward_traced(&Image::from_fn(16, 16, 1, |r, _, _| r as f32 / 16.0), &w, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_trace(&trace, dir.path()).unwrap();
        assert_eq!(files.len(), stage::all(2).len());
        assert!(files.contains(&"layer1.attn_scores.vtrt".to_string()));
        let names: Vec<String> = trace.names().map(String::from).collect();
        let back = read_trace::<f32>(dir.path(), &names).unwrap();
        for (n, m) in trace.iter() {
            assert_eq!(back.get(n).unwrap(), m);
        }
        let e = read_trace::<f32>(dir.path(), &["nope".to_string()]).unwrap_err();
        assert!(e.to_string().contains("nope.vtrt"));
    }
}
