//! Optional TOML file supplying defaults for command-line flags.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/today"
//! no_timestamp = true
//!
//! [csv]
//! date_column = "Date"
//! price_column = "Adj Close"
//!
//! [calibration]
//! multistart = 16
//!
//! [report]
//! bins = 80
//! paths = 5
//! ```
//!
//! Flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult, EXIT_IO};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub no_timestamp: Option<bool>,
    #[serde(default)]
    pub csv: CsvSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    pub date_column: Option<String>,
    pub price_column: Option<String>,
    pub date_format: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub multistart: Option<usize>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub full_search: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub bins: Option<usize>,
    pub paths: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))
    }
}
