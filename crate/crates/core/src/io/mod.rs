//! On-disk formats: PNG rasters, float tensor blobs, JSON configuration and
//! overlay rendering. Every writer replaces its target atomically.

mod config;
mod overlay;
mod png;
mod tensor;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::PipelineConfig;
pub use overlay::{render_mask_overlay, render_overlay, FOREGROUND_TINT, OVERLAY_ALPHA, UNCERTAIN_TINT};
pub use png::{load_mask, load_rgb, load_tri, save_mask, save_rgb, save_tri};
pub use tensor::{read_tensor, write_tensor, TensorBlob, TENSOR_MAGIC};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}
