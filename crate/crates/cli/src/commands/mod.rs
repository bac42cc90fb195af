pub mod degrade;
pub mod enhance;
pub mod fit;
pub mod gradcheck;

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Writes `contents` to a temporary sibling of `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}

pub(crate) fn load(path: &Path) -> Result<diffisp::ImageF, CliError> {
    diffisp::load_image(path).map_err(|e| CliError::Validation(e.to_string()))
}
