//! CSV writers, trace thinning and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::Command;

/// Largest number of rows kept in a trace file.
pub const MAX_TRACE_ROWS: usize = 2000;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Header-only files still carry their columns; `csv` needs one record for
/// that, so empty tables go through here.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    w.flush()?;
    Ok(())
}

/// Row indices kept when thinning `n` rows to at most `max` by a uniform
/// stride. The last row is kept when there is room for it.
pub fn thin_indices(n: usize, max: usize) -> Vec<usize> {
    if n == 0 || max == 0 {
        return Vec::new();
    }
    let stride = n.div_ceil(max);
    let mut keep: Vec<usize> = (0..n).step_by(stride).collect();
    if keep.last() != Some(&(n - 1)) && keep.len() < max {
        keep.push(n - 1);
    }
    keep
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

/// Wall-clock per named phase.
#[derive(Debug)]
pub struct PhaseTimer {
    phases: Vec<Phase>,
    current: Option<(String, Instant)>,
}

impl PhaseTimer {
    pub fn new() -> Self {
        PhaseTimer { phases: Vec::new(), current: None }
    }

    pub fn start(&mut self, name: &str) {
        self.stop();
        self.current = Some((name.to_string(), Instant::now()));
    }

    pub fn stop(&mut self) {
        if let Some((name, t)) = self.current.take() {
            self.phases.push(Phase { name, seconds: t.elapsed().as_secs_f64() });
        }
    }

    pub fn finish(mut self) -> Vec<Phase> {
        self.stop();
        self.phases
    }
}

impl Default for PhaseTimer {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub run: Command,
    pub version: String,
    /// Deterministic outputs; a replay reproduces these byte for byte.
    pub summary_outputs: Vec<String>,
    /// Wall-clock and trace outputs.
    pub other_outputs: Vec<String>,
    pub phases: Vec<Phase>,
    pub shuffle_algorithm: String,
}

impl RunManifest {
    pub fn path(out: &Path, command: &str) -> PathBuf {
        out.join(format!("{command}-manifest.json"))
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = Self::path(out, self.run.name());
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CounterexampleArgs;

    #[test]
    fn thinning_is_bounded_and_uniform() {
        assert_eq!(thin_indices(5, 2000), vec![0, 1, 2, 3, 4]);
        assert_eq!(thin_indices(0, 2000), Vec::<usize>::new());
        let keep = thin_indices(32561, 2000);
        assert!(keep.len() <= 2000);
        assert_eq!(keep[1] - keep[0], 17);
        assert_eq!(*keep.last().unwrap(), 32560);
        assert_eq!(thin_indices(4000, 2000).len(), 2000);
        assert_eq!(thin_indices(10, 3), vec![0, 4, 8]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest {
            run: Command::Counterexample(CounterexampleArgs {
                m: 3,
                s: 30,
                lambda: 1.0,
                epsilon: 0.01,
                out: dir.path().to_path_buf(),
            }),
            version: "0.1.0".into(),
            summary_outputs: vec!["counterexample.csv".into()],
            other_outputs: vec![],
            phases: vec![Phase { name: "sketch".into(), seconds: 0.5 }],
            shuffle_algorithm: "none".into(),
        };
        let path = manifest.write(dir.path()).unwrap();
        assert!(path.ends_with("counterexample-manifest.json"));
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back.phases, manifest.phases);
        match back.run {
            Command::Counterexample(a) => assert_eq!((a.m, a.s), (3, 30)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_header_without_rows() {
        #[derive(Serialize)]
        struct Row {
            a: u32,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv_with_header::<Row>(&p, &["a"], &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n");
        write_csv(&p, &[Row { a: 1 }]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\n1\n");
    }
}
