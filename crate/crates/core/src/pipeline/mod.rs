//! End-to-end orchestration: datasets, the random-forest baseline, phase
//! scans, transition fits and the cached stage runner.

pub mod config;
pub mod dataset;
pub mod forest;
pub mod regression;
pub mod run;
pub mod scan;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use config::PipelineConfig;
pub use dataset::{gen_dataset, Dataset, DatasetFile, GenParams};
pub use forest::{baseline_random_forest, RandomForest};
pub use regression::{fit_transition, RegressionResult};
pub use run::{run_pipeline, Manifest, StageStatus};
pub use scan::{ScanMode, ScanPoint};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a sibling temp file and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp).map_err(io_err(tmp))?;
        f.write_all(bytes).map_err(io_err(tmp))?;
        f.sync_all().map_err(io_err(tmp))?;
    }
    fs::rename(tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest text that parses back to the same float, for file names.
pub(crate) fn fmt_field(h: f64) -> String {
    format!("{h}")
}
