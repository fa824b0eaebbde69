use std::path::Path;

use crate::config::Config;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Writes `<out>/manifest.txt` with the command, code version, thread count
/// and every resolved key. Loading it as a config reproduces the run.
pub fn write_manifest(out: &Path, command: &str, cfg: &mut Config) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    cfg.set("command", command)?;
    cfg.set("code_version", env!("CARGO_PKG_VERSION"))?;
    cfg.set("threads", &rayon::current_num_threads().to_string())?;
    let body = format!("# mlm-budget run manifest\n{}", cfg.render()?);
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, body).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
