//! Run manifests: everything about a run that is allowed to vary between
//! otherwise identical invocations lives here, not in the report.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub input_digest: Option<String>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
}

/// Collects timings while a command runs.
pub struct ManifestBuilder {
    command: String,
    started: Instant,
    started_unix: f64,
    last: Instant,
    stages: Vec<StageTiming>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        let now = Instant::now();
        Self { command: command.into(), started: now, started_unix: unix_now(), last: now, stages: Vec::new() }
    }

    /// Close the current stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming { stage: name.into(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }

    pub fn finish(
        self,
        config_digest: String,
        config: serde_json::Value,
        input_digest: Option<String>,
        seeds: Vec<u64>,
        outputs: Vec<PathBuf>,
    ) -> RunManifest {
        RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest,
            config,
            input_digest,
            seeds,
            threads: rayon::current_num_threads(),
            started_unix: self.started_unix,
            finished_unix: unix_now(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            stages: self.stages,
            outputs,
        }
    }
}

/// `report.json` → `report.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_report() {
        assert_eq!(manifest_path(Path::new("out/fit.json")), PathBuf::from("out/fit.manifest.json"));
        assert_eq!(manifest_path(Path::new("run")), PathBuf::from("run.manifest.json"));
    }

    #[test]
    fn stages_are_recorded_in_order() {
        let mut b = ManifestBuilder::start("fit");
        b.stage("read");
        b.stage("solve");
        let m = b.finish("d".into(), serde_json::Value::Null, None, vec![3], vec![]);
        assert_eq!(m.stages.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(), ["read", "solve"]);
        assert!(m.finished_unix >= m.started_unix);
    }
}
