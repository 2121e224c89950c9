//! CSV and JSON persistence for grid functions, ensembles and reports.
//!
//! Values are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces the in-memory values bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gridfn::{Grid, GridFunction};
use crate::models::{PathEnsemble, ProcessModel, SmoothingRecord};
use crate::{Error, Result, Scalar};

fn parse<T: Scalar>(field: &str, what: &str) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| Error::Parse(format!("cannot parse {what} value {field:?}")))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Rebuild a lattice from row-major `(t1, t2)` points, first axis outer.
fn lattice_from_points(points: &[(f64, f64)]) -> Result<Grid> {
    let mut axis2: Vec<f64> = Vec::new();
    for p in points {
        if p.0 != points[0].0 {
            break;
        }
        axis2.push(p.1);
    }
    let width = axis2.len();
    if width == 0 || !points.len().is_multiple_of(width) {
        return Err(Error::Parse("lattice points are not a full rectangle".into()));
    }
    let axis1: Vec<f64> = points.iter().step_by(width).map(|p| p.0).collect();
    let grid = Grid::lattice(axis1, axis2)?;
    let matches = (0..grid.len()).all(|i| grid.point(i) == points[i]);
    if !matches {
        return Err(Error::Parse("lattice points are not in row-major order".into()));
    }
    Ok(grid)
}

/// Write `t,value` (1D) or `t1,t2,value` (2D) rows.
pub fn write_grid_function<T: Scalar, W: Write>(h: &GridFunction<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let two_d = h.grid().dims() == 2;
    if two_d {
        w.write_record(["t1", "t2", "value"]).map_err(csv_error)?;
    } else {
        w.write_record(["t", "value"]).map_err(csv_error)?;
    }
    for (i, v) in h.values().iter().enumerate() {
        let (t1, t2) = h.grid().point(i);
        if two_d {
            w.write_record([t1.to_string(), t2.to_string(), v.to_string()]).map_err(csv_error)?;
        } else {
            w.write_record([t1.to_string(), v.to_string()]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_function<T: Scalar, R: Read>(input: R) -> Result<GridFunction<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
    let two_d = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "value"] => false,
        ["t1", "t2", "value"] => true,
        other => return Err(Error::Parse(format!("unexpected grid function header {other:?}"))),
    };
    let mut points = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        if two_d {
            points.push((parse::<f64>(&rec[0], "t1")?, parse::<f64>(&rec[1], "t2")?));
            values.push(parse::<T>(&rec[2], "value")?);
        } else {
            points.push((parse::<f64>(&rec[0], "t")?, 0.0));
            values.push(parse::<T>(&rec[1], "value")?);
        }
    }
    if points.is_empty() {
        return Err(Error::Parse("grid function file has no rows".into()));
    }
    let grid = if two_d { lattice_from_points(&points)? } else { Grid::line(points.iter().map(|p| p.0).collect())? };
    GridFunction::new(Arc::new(grid), values)
}

/// Header row: grid points (`t1:t2` on lattices), then one path per row.
pub fn write_ensemble_csv<T: Scalar, W: Write>(ens: &PathEnsemble<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let grid = ens.grid();
    let header: Vec<String> = (0..grid.len())
        .map(|i| {
            let (t1, t2) = grid.point(i);
            if grid.dims() == 2 {
                format!("{t1}:{t2}")
            } else {
                t1.to_string()
            }
        })
        .collect();
    w.write_record(&header).map_err(csv_error)?;
    for path in ens.paths() {
        w.write_record(path.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ensemble_csv<T: Scalar, R: Read>(input: R) -> Result<PathEnsemble<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    let lattice = header.iter().any(|f| f.contains(':'));
    let grid = if lattice {
        let points = header
            .iter()
            .map(|f| {
                let (a, b) =
                    f.split_once(':').ok_or_else(|| Error::Parse(format!("lattice header field {f:?} lacks ':'")))?;
                Ok((parse::<f64>(a, "t1")?, parse::<f64>(b, "t2")?))
            })
            .collect::<Result<Vec<_>>>()?;
        lattice_from_points(&points)?
    } else {
        Grid::line(header.iter().map(|f| parse::<f64>(f, "t")).collect::<Result<_>>()?)?
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        rows.push(rec.iter().map(|f| parse::<T>(f, "path")).collect::<Result<Vec<T>>>()?);
    }
    PathEnsemble::from_rows(Arc::new(grid), rows)
}

/// Provenance stored next to an ensemble CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSidecar {
    pub model: Option<ProcessModel>,
    pub seed: Option<u64>,
    pub n: usize,
    pub m: usize,
    pub grid: Grid,
    pub smoothing: Option<SmoothingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EnsembleSidecar {
    pub fn of<T: Scalar>(ens: &PathEnsemble<T>, config_hash: Option<String>) -> Self {
        Self {
            model: ens.model().cloned(),
            seed: ens.seed(),
            n: ens.n(),
            m: ens.width(),
            grid: (**ens.grid()).clone(),
            smoothing: ens.smoothing(),
            config_hash,
        }
    }
}

/// `paths.csv` → `paths.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Replace `path` with `bytes` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    // Temporary files are private; outputs get ordinary permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Write the ensemble CSV and its JSON sidecar.
pub fn save_ensemble<T: Scalar>(path: &Path, ens: &PathEnsemble<T>, config_hash: Option<String>) -> Result<()> {
    let mut buf = Vec::new();
    write_ensemble_csv(ens, &mut buf)?;
    write_atomic(path, &buf)?;
    let sidecar = serde_json::to_vec_pretty(&EnsembleSidecar::of(ens, config_hash))?;
    write_atomic(&sidecar_path(path), &sidecar)
}

/// Read an ensemble CSV, attaching provenance from its sidecar when present.
pub fn load_ensemble<T: Scalar>(path: &Path) -> Result<PathEnsemble<T>> {
    let ens: PathEnsemble<T> = read_ensemble_csv(fs::File::open(path)?)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(ens);
    }
    let meta: EnsembleSidecar = serde_json::from_slice(&fs::read(&side)?)?;
    if meta.grid != **ens.grid() || meta.n != ens.n() {
        return Err(Error::Parse(format!("sidecar {} does not describe {}", side.display(), path.display())));
    }
    Ok(ens.with_provenance(meta.model, meta.seed, meta.smoothing))
}

pub fn load_grid_function<T: Scalar>(path: &Path) -> Result<GridFunction<T>> {
    read_grid_function(fs::File::open(path)?)
}

pub fn save_grid_function<T: Scalar>(path: &Path, h: &GridFunction<T>) -> Result<()> {
    let mut buf = Vec::new();
    write_grid_function(h, &mut buf)?;
    write_atomic(path, &buf)
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<S: Serialize>(value: &S) -> Result<String> {
    // Round-trip through `Value` so map keys come out sorted.
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate;
    use crate::smoothing::{smooth_ensemble, SmoothingDensity};

    #[test]
    fn grid_function_round_trip() {
        let grid = Arc::new(Grid::uniform(5).unwrap());
        let h = GridFunction::<f64>::from_fn(grid, |t, _| (7.0 * t).sin() / 3.0).unwrap();
        let mut buf = Vec::new();
        write_grid_function(&h, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t,value\n0,0\n"));
        let back: GridFunction<f64> = read_grid_function(buf.as_slice()).unwrap();
        assert_eq!(back.values(), h.values());
        assert_eq!(**back.grid(), **h.grid());

        let lat = Arc::new(Grid::uniform_lattice(2).unwrap());
        let h = GridFunction::<f32>::from_fn(lat, |a, b| a * 0.1 - b / 3.0).unwrap();
        let mut buf = Vec::new();
        write_grid_function(&h, &mut buf).unwrap();
        let back: GridFunction<f32> = read_grid_function(buf.as_slice()).unwrap();
        assert_eq!(back.values(), h.values());
        assert_eq!(**back.grid(), **h.grid());
    }

    #[test]
    fn rejects_bad_grid_function_files() {
        assert!(read_grid_function::<f64, _>("x,value\n0,1\n".as_bytes()).is_err());
        assert!(read_grid_function::<f64, _>("t,value\n0,abc\n".as_bytes()).is_err());
        assert!(read_grid_function::<f64, _>("t,value\n0.5,1\n0.2,1\n".as_bytes()).is_err());
    }

    #[test]
    fn ensemble_round_trip_is_exact() {
        let ens = simulate::<f64>(&crate::ProcessModel::brownian(), 7, 9, 3).unwrap();
        let ens = smooth_ensemble(&ens, SmoothingDensity::laplace(0.7).unwrap(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("paths.csv");
        save_ensemble(&p, &ens, Some("abc".into())).unwrap();
        let back: PathEnsemble<f64> = load_ensemble(&p).unwrap();
        assert_eq!(back, ens);

        let sheet = simulate::<f32>(&crate::ProcessModel::new(crate::ProcessKind::BrownianSheet), 3, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&sheet, &mut buf).unwrap();
        let back: PathEnsemble<f32> = read_ensemble_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), sheet.values());
        assert_eq!(**back.grid(), **sheet.grid());
    }

    #[test]
    fn config_hash_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":[1,2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":[1,2],"b":1}"#).unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
