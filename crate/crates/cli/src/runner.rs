//! Executes a resolved spec: thread pool, dataset files and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ExperimentSpec;
use crate::dataset::Dataset;
use crate::error::CliError;
use crate::experiments::run_experiment;

/// Exit code when some datasets were written before a numeric failure.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub error: Option<CliError>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            None => 0,
            Some(_) if self.files.is_empty() => 2,
            Some(_) => EXIT_PARTIAL,
        }
    }
}

/// Run `spec` on a pool of `threads` workers (0 picks the rayon default)
/// and write results into `spec.output_dir`.
pub fn run(spec: &ExperimentSpec, threads: usize) -> Result<RunReport, CliError> {
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Parse(format!("cannot start thread pool: {e}")))?;
    let dir = spec.output_dir.clone();
    let start = Instant::now();
    let mut files = Vec::new();
    let result = pool.install(|| {
        let mut sink = |ds: Dataset| -> Result<(), CliError> {
            files.extend(ds.write(&dir)?);
            Ok(())
        };
        run_experiment(spec, &mut sink)
    });
    let wall = start.elapsed().as_secs_f64();
    let error = result.err();
    let manifest = write_manifest(spec, &dir, &files, error.as_ref(), wall, pool.current_num_threads())?;
    Ok(RunReport {
        files,
        manifest,
        error,
        wall_clock_seconds: wall,
    })
}

fn write_manifest(
    spec: &ExperimentSpec,
    dir: &Path,
    files: &[PathBuf],
    error: Option<&CliError>,
    wall: f64,
    threads: usize,
) -> Result<PathBuf, CliError> {
    let status = match (error, files.is_empty()) {
        (None, _) => "complete",
        (Some(_), true) => "failed",
        (Some(_), false) => "partial",
    };
    let mut table = toml::Table::new();
    table.insert("experiment".into(), spec.experiment.as_str().into());
    table.insert("status".into(), status.into());
    table.insert("wall_clock_seconds".into(), wall.into());
    table.insert("threads".into(), (threads as i64).into());
    table.insert("seed".into(), (spec.seed as i64).into());
    let names: Vec<toml::Value> = files
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned().into())
        .collect();
    table.insert("files".into(), names.into());
    if let Some(e) = error {
        table.insert("error".into(), e.to_string().into());
    }
    let path = dir.join(format!("{}_manifest.toml", spec.experiment.as_str()));
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let text = toml::to_string(&table).map_err(|e| CliError::Parse(e.to_string()))?;
    std::fs::write(&path, text).map_err(io)?;
    Ok(path)
}
