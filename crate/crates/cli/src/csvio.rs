//! Small CSV helpers. Floats are written with Rust's shortest round-trip
//! formatting, so parsing a written file gives back the same bits.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Header plus one row per entry of the equally long `columns`.
pub fn write_columns(w: &mut dyn Write, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    writeln!(w, "{}", names.join(","))?;
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
