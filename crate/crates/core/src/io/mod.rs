//! File formats: FTEN tensors, WAV audio, CSV tables, JSON reports, SVG
//! plots and run manifests. Every writer is atomic (temp file + rename).

mod ften;
mod manifest;
pub mod plot;
mod table;
mod wav;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use ften::{decode_tensor, encode_tensor, read_tensor, write_tensor, FTEN_MAGIC, FTEN_VERSION};
pub use manifest::{file_digest, RunManifest};
pub use table::{factors_to_csv, parse_factors, read_factors, selection_csv, write_factors};
pub use wav::{encode_wav_pcm16, parse_wav, read_wav, write_wav_pcm16};

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON; keys follow struct field order, maps are sorted.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}
