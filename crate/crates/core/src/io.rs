//! File formats: path CSV/JSON, Schauder coefficient JSON, profile CSV with
//! a JSON sidecar.
//!
//! CSV files have a `t,value` header, one row per point, LF line endings and
//! shortest round-trip decimal floats.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Path;
use crate::schauder::SchauderCoefficients;
use crate::variation::{ProfileKind, SourceMode, VariationProfile};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    value: f64,
}

fn write_rows<W: Write>(w: W, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = BufWriter::with_capacity(1 << 20, w);
    let mut buf = ryu::Buffer::new();
    // divergent profiles hold +inf, written as `inf`
    let mut put = |w: &mut BufWriter<W>, v: f64| -> std::io::Result<()> {
        if v.is_finite() {
            w.write_all(buf.format_finite(v).as_bytes())
        } else {
            write!(w, "{v}")
        }
    };
    w.write_all(b"t,value\n")?;
    for (t, value) in rows {
        put(&mut w, t)?;
        w.write_all(b",")?;
        put(&mut w, value)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(r: R) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::InvalidPath(format!(
            "expected header `t,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_path_csv<W: Write>(x: &Path, w: W) -> Result<()> {
    write_rows(w, x.samples().iter().enumerate().map(|(j, &v)| (x.time(j), v)))
}

/// Reads a `t,value` CSV. The times must be equispaced with `2^L + 1` rows;
/// any interval `[t_0, t_last]` is mapped affinely onto `[0, 1]`.
pub fn read_path_csv<R: Read>(r: R, label: impl Into<String>) -> Result<Path> {
    let rows = read_rows(r)?;
    let n = rows.len();
    if n < 2 || !(n - 1).is_power_of_two() {
        return Err(Error::InvalidPath(format!(
            "a dyadic grid needs 2^L + 1 rows, got {n}"
        )));
    }
    let grid_level = (n - 1).trailing_zeros();
    let (t0, t1) = (rows[0].t, rows[n - 1].t);
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidPath("times must increase".into()));
    }
    let step = (t1 - t0) / (n - 1) as f64;
    for (j, row) in rows.iter().enumerate() {
        let expected = t0 + j as f64 * step;
        if (row.t - expected).abs() > 1e-9 * (t1 - t0).max(1.0) {
            return Err(Error::InvalidPath(format!(
                "row {j}: time {} is off the uniform grid (expected {expected})",
                row.t
            )));
        }
    }
    Path::new(grid_level, rows.into_iter().map(|r| r.value).collect(), label)
}

pub fn write_path_json<W: Write>(x: &Path, w: W) -> Result<()> {
    serde_json::to_writer(w, x)?;
    Ok(())
}

pub fn read_path_json<R: Read>(r: R) -> Result<Path> {
    #[derive(Deserialize)]
    struct Raw {
        grid_level: u32,
        samples: Vec<f64>,
        #[serde(default)]
        label: String,
    }
    let raw: Raw = serde_json::from_reader(r)?;
    Path::new(raw.grid_level, raw.samples, raw.label)
}

/// Loads a path from `.csv` or `.json` by extension.
pub fn load_path(path: &FsPath) -> Result<Path> {
    let file = File::open(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_path_json(file),
        _ => read_path_csv(file, label),
    }
}

/// Saves a path as `.json` or CSV by extension.
pub fn save_path(x: &Path, path: &FsPath) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => write_path_json(x, &mut w)?,
        _ => write_path_csv(x, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_coefficients<R: Read>(r: R) -> Result<SchauderCoefficients> {
    let c: SchauderCoefficients = serde_json::from_reader(r)?;
    c.validate()?;
    Ok(c)
}

pub fn write_coefficients<W: Write>(c: &SchauderCoefficients, w: W) -> Result<()> {
    serde_json::to_writer(w, c)?;
    Ok(())
}

/// Sidecar metadata written next to a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub level: u32,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub kind: ProfileKind,
    pub terminal: f64,
    pub source_mode: Option<SourceMode>,
    pub divergent: bool,
    pub clamped: usize,
    pub atom_share: f64,
}

impl ProfileMeta {
    pub fn of(profile: &VariationProfile, source_mode: Option<SourceMode>) -> Self {
        Self {
            level: profile.level,
            p: profile.p,
            gamma: profile.gamma,
            kind: profile.kind,
            terminal: profile.terminal(),
            source_mode,
            divergent: profile.divergent,
            clamped: profile.clamped,
            atom_share: profile.atom_share(),
        }
    }
}

pub fn write_profile_csv<W: Write>(profile: &VariationProfile, w: W) -> Result<()> {
    write_rows(w, profile.times.iter().copied().zip(profile.values.iter().copied()))
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn save_profile(
    profile: &VariationProfile,
    source_mode: Option<SourceMode>,
    dir: &FsPath,
    stem: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    write_profile_csv(profile, &mut w)?;
    w.flush()?;
    save_json(&ProfileMeta::of(profile, source_mode), &dir.join(format!("{stem}.json")))
}

/// Reads a profile CSV and its sidecar back. Partition points are mapped to
/// grid indices of `grid_level`.
pub fn load_profile(csv_path: &FsPath, grid_level: u32) -> Result<VariationProfile> {
    let rows = read_rows(File::open(csv_path)?)?;
    let meta: ProfileMeta = serde_json::from_reader(File::open(csv_path.with_extension("json"))?)?;
    let scale = (grid_level as f64).exp2();
    let indices = rows
        .iter()
        .map(|r| {
            let j = r.t * scale;
            if j.fract() != 0.0 || j < 0.0 || j > scale {
                Err(Error::InvalidPartition(format!(
                    "time {} is not a grid point of level {grid_level}",
                    r.t
                )))
            } else {
                Ok(j as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let max_block = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(VariationProfile {
        level: meta.level,
        grid_level,
        indices,
        times: rows.iter().map(|r| r.t).collect(),
        values,
        p: meta.p,
        gamma: meta.gamma,
        kind: meta.kind,
        divergent: meta.divergent,
        clamped: meta.clamped,
        max_block,
        masses: Vec::new(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(value: &T, path: &FsPath) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dyadic_partition;
    use crate::schauder::{schauder_eval, takagi_coefficients, SignSource};
    use crate::variation::pth_variation;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let x = Path::new(1, vec![0.0, 0.1, -2.5], "x").unwrap();
        let mut buf = Vec::new();
        write_path_csv(&x, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,value\n0.0,0.0\n0.5,0.1\n1.0,-2.5\n");
    }

    #[test]
    fn infinite_profile_values_round_trip() {
        let mut buf = Vec::new();
        write_rows(&mut buf, [(0.0, 0.0), (1.0, f64::INFINITY)].into_iter()).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,value\n0.0,0.0\n1.0,inf\n");
        let rows = read_rows(&buf[..]).unwrap();
        assert_eq!(rows[1].value, f64::INFINITY);
    }

    #[test]
    fn csv_reparametrises_interval() {
        let text = "t,value\n2.0,1.0\n3.0,2.0\n4.0,0.5\n5.0,0.0\n6.0,1.0\n";
        let x = read_path_csv(text.as_bytes(), "shifted").unwrap();
        assert_eq!(x.grid_level(), 2);
        assert_eq!(x.samples(), &[1.0, 2.0, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(read_path_csv("t,value\n0,1\n0.5,1\n0.7,1\n1,1\n".as_bytes(), "x").is_err());
        assert!(read_path_csv("t,value\n0,1\n0.3,1\n1,1\n".as_bytes(), "x").is_err());
        assert!(read_path_csv("time,v\n0,1\n1,1\n".as_bytes(), "x").is_err());
        assert!(read_path_csv("t,value\n0,1\n0.5,nan\n1,1\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn json_schema() {
        let x = Path::new(1, vec![0.0, 1.0, 0.0], "tent").unwrap();
        let mut buf = Vec::new();
        write_path_json(&x, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["grid_level"], 1);
        assert_eq!(v["label"], "tent");
        assert_eq!(read_path_json(&buf[..]).unwrap(), x);
        assert!(read_path_json(r#"{"grid_level":2,"samples":[0,1]}"#.as_bytes()).is_err());
    }

    #[test]
    fn coefficient_json() {
        let c = takagi_coefficients(0.4, SignSource::Seeded(1), 4).unwrap();
        let mut buf = Vec::new();
        write_coefficients(&c, &mut buf).unwrap();
        assert_eq!(read_coefficients(&buf[..]).unwrap(), c);
        let bad = r#"{"max_level":2,"theta":[[1.0],[1.0]],"label":"x"}"#;
        assert!(read_coefficients(bad.as_bytes()).is_err());
    }

    #[test]
    fn profile_files() {
        let dir = std::env::temp_dir().join(format!("roughvar-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let c = takagi_coefficients(0.5, SignSource::AllPlus, 8).unwrap();
        let x = schauder_eval(&c, 8).unwrap();
        let prof = pth_variation(&x, &dyadic_partition(5, 8).unwrap(), 2.0).unwrap();
        save_profile(&prof, None, &dir, "level5").unwrap();
        let back = load_profile(&dir.join("level5.csv"), 8).unwrap();
        assert_eq!(back.values, prof.values);
        assert_eq!(back.indices, prof.indices);
        let meta: serde_json::Value =
            serde_json::from_reader(File::open(dir.join("level5.json")).unwrap()).unwrap();
        assert_eq!(meta["kind"], "pth");
        assert_eq!(meta["terminal"], prof.terminal());
        std::fs::remove_dir_all(&dir).ok();
    }

    proptest! {
        #[test]
        fn path_csv_round_trip(samples in proptest::collection::vec(-1e6f64..1e6, 17)) {
            let x = Path::new(4, samples, "r").unwrap();
            let mut buf = Vec::new();
            write_path_csv(&x, &mut buf).unwrap();
            let back = read_path_csv(&buf[..], "r").unwrap();
            prop_assert_eq!(back.samples(), x.samples());
        }
    }
}
