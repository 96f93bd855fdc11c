//! Grid function files: CSV with node coordinates, and a raw little-endian
//! `f64` block next to a JSON sidecar holding the grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Writes one row per node: coordinates, then one column per component.
pub fn write_csv(path: &Path, names: &[String], fields: &[GridFunction]) -> Result<()> {
    let grid = check(names, fields)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<&str> = AXES[..grid.dim()].iter().copied().chain(names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..grid.len() {
        let row: Vec<String> = grid
            .point(i)
            .into_iter()
            .chain(fields.iter().map(|f| f.values()[i]))
            .map(|v| format!("{v:e}"))
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`] back onto `grid`.
pub fn read_csv(path: &Path, grid: &Grid) -> Result<(Vec<String>, Vec<GridFunction>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let d = grid.dim();
    if header.len() <= d || header.iter().take(d).ne(AXES[..d].iter().copied()) {
        return Err(Error::Parse(format!("unexpected CSV header in {}", path.display())));
    }
    let names: Vec<String> = header.iter().skip(d).map(String::from).collect();
    let mut values = vec![Vec::with_capacity(grid.len()); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (k, field) in rec.iter().skip(d).enumerate() {
            values[k].push(field.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{field}: {e}")))?);
        }
    }
    let fields = values.into_iter().map(|v| GridFunction::new(*grid, v)).collect::<Result<_>>()?;
    Ok((names, fields))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    pub components: Vec<String>,
    pub dtype: String,
    pub byte_order: String,
    /// Components one after another, each with the x index varying fastest.
    pub layout: String,
    pub data_file: String,
}

/// Writes `<stem>.f64` and `<stem>.json`; returns both paths.
pub fn write_raw(stem: &Path, names: &[String], fields: &[GridFunction]) -> Result<(PathBuf, PathBuf)> {
    let grid = check(names, fields)?;
    let data_path = stem.with_extension("f64");
    let meta_path = stem.with_extension("json");
    let mut bytes = Vec::with_capacity(8 * grid.len() * fields.len());
    for f in fields {
        for v in f.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&data_path, bytes)?;
    let meta = RawSidecar {
        lo: grid.lo().to_vec(),
        hi: grid.hi().to_vec(),
        nodes: grid.nodes().to_vec(),
        components: names.to_vec(),
        dtype: "float64".into(),
        byte_order: "little".into(),
        layout: "component-major, x fastest".into(),
        data_file: data_path.file_name().unwrap().to_string_lossy().into_owned(),
    };
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok((data_path, meta_path))
}

/// Reads a sidecar and its data block (resolved next to the sidecar).
pub fn read_raw(sidecar: &Path) -> Result<(Vec<String>, Vec<GridFunction>)> {
    let meta: RawSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    if meta.dtype != "float64" || meta.byte_order != "little" {
        return Err(Error::Parse(format!("unsupported raw encoding {} / {}", meta.dtype, meta.byte_order)));
    }
    let grid = Grid::new(&meta.lo, &meta.hi, &meta.nodes)?;
    let data = fs::read(sidecar.with_file_name(&meta.data_file))?;
    let expected = 8 * grid.len() * meta.components.len();
    if data.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: data.len() });
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let fields = values
        .chunks(grid.len())
        .map(|c| GridFunction::new(grid, c.to_vec()))
        .collect::<Result<_>>()?;
    Ok((meta.components, fields))
}

fn check(names: &[String], fields: &[GridFunction]) -> Result<Grid> {
    if names.len() != fields.len() || fields.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: fields.len(),
            got: names.len(),
        });
    }
    let grid = *fields[0].grid();
    if fields.iter().any(|f| *f.grid() != grid) {
        return Err(Error::InvalidArgument("components live on different grids".into()));
    }
    Ok(grid)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
