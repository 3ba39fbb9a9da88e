//! Artifact I/O: binary field snapshots with JSON sidecars, CSV tables, and
//! PGM previews.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField};

/// 8-byte format tag, zero-padded to a 16-byte magic block on disk.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"DJKOFLD1";

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SnapshotMeta {
    pub step: usize,
    pub time: f64,
    pub energy_model: String,
    pub growth_model: String,
}

/// Binary layout: 16-byte magic, LE u32 dim, u32 n per axis, f64 origin and
/// extent per axis, then the values row-major.
pub fn write_snapshot(path: &Path, field: &ScalarField, meta: &SnapshotMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut magic = [0u8; 16];
    magic[..8].copy_from_slice(SNAPSHOT_MAGIC);
    w.write_all(&magic)?;
    let g = &field.grid;
    w.write_u32::<LittleEndian>(g.dim as u32)?;
    for a in 0..g.dim {
        w.write_u32::<LittleEndian>(g.n[a] as u32)?;
    }
    for a in 0..g.dim {
        w.write_f64::<LittleEndian>(g.origin[a])?;
        w.write_f64::<LittleEndian>(g.extent[a])?;
    }
    for &v in &field.values {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    let sidecar = sidecar_path(path);
    let mut s = BufWriter::new(File::create(sidecar)?);
    serde_json::to_writer_pretty(&mut s, meta)
        .map_err(|e| Error::Snapshot(format!("sidecar serialization failed: {e}")))?;
    s.flush()?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    os.into()
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, SnapshotMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if &magic[..8] != SNAPSHOT_MAGIC || magic[8..] != [0u8; 8] {
        return Err(Error::Snapshot("bad magic block".into()));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if !(dim == 1 || dim == 2) {
        return Err(Error::Snapshot(format!("unsupported dim {dim}")));
    }
    let mut n = [1usize; 2];
    for v in n.iter_mut().take(dim) {
        *v = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut origin = [0.0f64; 2];
    let mut extent = [1.0f64; 2];
    for a in 0..dim {
        origin[a] = r.read_f64::<LittleEndian>()?;
        extent[a] = r.read_f64::<LittleEndian>()?;
    }
    let grid = if dim == 1 {
        GridSpec::line(origin[0], origin[0] + extent[0], n[0])?
    } else {
        GridSpec::rect(origin, [origin[0] + extent[0], origin[1] + extent[1]], n)?
    };
    let mut values = vec![0.0f64; grid.len()];
    for v in &mut values {
        *v = r.read_f64::<LittleEndian>()?;
    }
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(Error::Snapshot(format!("{} trailing bytes", trailing.len())));
    }
    let field = ScalarField::from_values(&grid, values)?;
    let meta: SnapshotMeta = match File::open(sidecar_path(path)) {
        Ok(f) => serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Snapshot(format!("sidecar parse failed: {e}")))?,
        Err(_) => SnapshotMeta::default(),
    };
    Ok((field, meta))
}

/// CSV with a documented header row; each row must match the header arity.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("row arity {} != header arity {}", row.len(), header.len()),
            )));
        }
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// 8-bit grayscale preview, densities clipped to [0, max].
pub fn write_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let g = &field.grid;
    let (w_px, h_px) = (g.n[1].max(1), g.n[0]);
    let max = field.values.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{w_px} {h_px}\n255\n")?;
    let mut buf = Vec::with_capacity(w_px * h_px);
    for &v in &field.values {
        let t = (v.max(0.0) / max * 255.0).round().clamp(0.0, 255.0);
        buf.push(t as u8);
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}
