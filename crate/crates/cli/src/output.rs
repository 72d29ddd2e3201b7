use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(CliError::io(&tmp))?;
    f.write_all(contents).map_err(CliError::io(&tmp))?;
    f.sync_all().map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

/// Renders with `f` into memory, then writes atomically.
pub fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(CliError::io(path))?;
    write_atomic(path, &buf)?;
    Ok(path.to_path_buf())
}
