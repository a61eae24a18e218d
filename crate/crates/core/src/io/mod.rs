//! File formats: PNG images, SVG export/import, atomic writes.

mod png;
mod svg;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use png::{decode_png, decode_png_bytes, encode_png, encode_png_bytes, load_style_image, square_resize};
pub use svg::{export_svg, parse_svg, to_svg_string};

/// Write `bytes` to a temporary file in the destination directory and rename
/// it over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
