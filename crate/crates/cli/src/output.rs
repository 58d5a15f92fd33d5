//! CSV tables with the config block in leading comment lines.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Header context shared by every table of one run.
#[derive(Clone, Debug)]
pub struct RunInfo {
    pub command: &'static str,
    pub config_json: String,
    pub hash: String,
    pub seed: u64,
}

/// A table whose rows start with `config_hash, master_seed`.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<File>,
    hash: String,
    seed: String,
}

impl Table {
    /// Creates `<dir>/<name>.csv`, writing `# svnet <command>` and
    /// `# config <json>` before the header row.
    pub fn create(dir: &Path, name: &str, info: &RunInfo, columns: &[&str]) -> Result<Self, CliError> {
        let path = dir.join(format!("{name}.csv"));
        let mut file = File::create(&path)?;
        writeln!(file, "# svnet {}", info.command)?;
        writeln!(file, "# config {}", info.config_json)?;
        let mut writer = csv::Writer::from_writer(file);
        let mut header = vec!["config_hash", "master_seed"];
        header.extend_from_slice(columns);
        writer.write_record(&header)?;
        Ok(Self {
            path,
            writer,
            hash: info.hash.clone(),
            seed: info.seed.to_string(),
        })
    }

    pub fn row(&mut self, fields: Vec<String>) -> Result<(), CliError> {
        let mut rec = vec![self.hash.as_str(), self.seed.as_str()];
        rec.extend(fields.iter().map(String::as_str));
        self.writer.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Builds a row from displayable values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => {
        vec![$(format!("{}", $v)),*]
    };
}
