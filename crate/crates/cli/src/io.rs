//! Image files: CSV (lossless) and 16-bit binary PGM with a JSON sidecar.
//!
//! CSV: one image row per line, comma-separated decimals; row `i` holds the
//! samples at `x_i`. An optional first line `# m=<int> delta=<float>` is
//! checked against the data.
//!
//! PGM: `P5`, maxval 65535, big-endian samples, PGM row `i` = image row `i`.
//! Values are stored as `offset + scale · raw`; `<file>.json` records
//! `{ "scale": …, "offset": … }`. Without a sidecar, raw values are used.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use symaxis::ImageGrid;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Csv,
    Pgm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") | Some("txt") => Ok(Self::Csv),
            Some("pgm") => Ok(Self::Pgm),
            _ => Err(CliError::Usage(format!(
                "cannot tell the image format of {} (use .csv or .pgm)",
                path.display()
            ))),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_header(line: &str) -> Result<(Option<usize>, Option<f64>), CliError> {
    let mut m = None;
    let mut delta = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("m=") {
            m = Some(
                v.parse()
                    .map_err(|_| CliError::Data(format!("bad header value m={v}")))?,
            );
        } else if let Some(v) = tok.strip_prefix("delta=") {
            delta = Some(
                v.parse()
                    .map_err(|_| CliError::Data(format!("bad header value delta={v}")))?,
            );
        }
    }
    Ok((m, delta))
}

pub fn read_csv(path: &Path) -> Result<ImageGrid, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (header, body) = match text.lines().next() {
        Some(first) if first.trim_start().starts_with('#') => (Some(parse_header(first)?), &text[first.len()..]),
        _ => (None, text.as_str()),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{}: row {}: '{f}' is not a number", path.display(), n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 {
        return Err(CliError::Data(format!("{}: no samples", path.display())));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != m) {
        return Err(CliError::Data(format!(
            "{}: image must be square; row {} has {} values for {m} rows",
            path.display(),
            bad + 1,
            rows[bad].len()
        )));
    }
    if let Some((hm, hd)) = header {
        if hm.is_some_and(|hm| hm != m) {
            return Err(CliError::Data(format!(
                "{}: header m={} but {m} rows",
                path.display(),
                hm.unwrap()
            )));
        }
        if hd.is_some_and(|d| (d - 2.0 / m as f64).abs() > 1e-9) {
            return Err(CliError::Data(format!(
                "{}: header delta does not equal 2/m",
                path.display()
            )));
        }
    }
    let values = Array2::from_shape_vec((m, m), rows.into_iter().flatten().collect()).expect("row lengths checked");
    Ok(ImageGrid::from_values(values)?)
}

pub fn write_csv(path: &Path, grid: &ImageGrid) -> Result<(), CliError> {
    let mut out = format!("# m={} delta={}\n", grid.m(), fmt_f64(grid.delta()));
    for row in grid.values().rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmScale {
    pub scale: f64,
    pub offset: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_pgm(path: &Path) -> Result<ImageGrid, CliError> {
    let img = image::ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(CliError::Data(format!(
            "{}: image must be square, got {w}x{h}",
            path.display()
        )));
    }
    let sidecar = sidecar_path(path);
    let scale = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| CliError::io(&sidecar, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", sidecar.display())))?
    } else {
        PgmScale {
            scale: 1.0,
            offset: 0.0,
        }
    };
    let m = w as usize;
    // PGM rows run along the second index; pixel (col, row) = (j, i).
    let values = Array2::from_shape_fn((m, m), |(i, j)| {
        scale.offset + scale.scale * img.get_pixel(j as u32, i as u32)[0] as f64
    });
    Ok(ImageGrid::from_values(values)?)
}

pub fn write_pgm(path: &Path, grid: &ImageGrid) -> Result<(), CliError> {
    let v = grid.values();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(CliError::Data("cannot write non-finite samples to PGM".into()));
    }
    let scale = if hi > lo { (hi - lo) / 65535.0 } else { 1.0 };
    let m = grid.m() as u32;
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(m, m, |col, row| {
        let x = v[[row as usize, col as usize]];
        Luma([((x - lo) / scale).round().clamp(0.0, 65535.0) as u16])
    });
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&PgmScale { scale, offset: lo }).expect("serialisable");
    fs::write(&sidecar, json).map_err(|e| CliError::io(&sidecar, e))
}

pub fn read_image(path: &Path) -> Result<ImageGrid, CliError> {
    match ImageFormat::from_path(path)? {
        ImageFormat::Csv => read_csv(path),
        ImageFormat::Pgm => read_pgm(path),
    }
}

pub fn write_image(path: &Path, grid: &ImageGrid) -> Result<(), CliError> {
    match ImageFormat::from_path(path)? {
        ImageFormat::Csv => write_csv(path, grid),
        ImageFormat::Pgm => write_pgm(path, grid),
    }
}

/// Writes rows of floats as CSV with a header line.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(|e| CliError::Data(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report is serialisable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let grid = ImageGrid::from_values(Array2::from_shape_fn((5, 5), |(i, j)| {
            (i as f64 * 0.1).exp() - j as f64 / 3.0 + 1e-300
        }))
        .unwrap();
        write_csv(&path, &grid).unwrap();
        assert_eq!(read_csv(&path).unwrap(), grid);
    }

    #[test]
    fn csv_without_header_and_with_spaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        fs::write(&path, "1, 2\n3 ,4\n\n").unwrap();
        let g = read_csv(&path).unwrap();
        assert_eq!(g.values()[[1, 0]], 3.0);
    }

    #[test]
    fn csv_rejects_non_square_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "1,2,3\n4,5,6\n").unwrap();
        assert!(matches!(read_csv(&path), Err(CliError::Data(_))));
        fs::write(&path, "# m=3 delta=0.5\n1,2\n3,4\n").unwrap();
        assert!(matches!(read_csv(&path), Err(CliError::Data(_))));
    }

    #[test]
    fn pgm_round_trip_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let grid =
            ImageGrid::from_values(Array2::from_shape_fn((6, 6), |(i, j)| (i * 6 + j) as f64 * 0.37 - 2.0)).unwrap();
        write_pgm(&path, &grid).unwrap();
        let back = read_pgm(&path).unwrap();
        let step = (35.0 * 0.37) / 65535.0;
        for (a, b) in grid.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= step, "{a} vs {b}");
        }
        // Orientation: first index is the PGM row.
        assert!((back.values()[[1, 0]] - grid.values()[[1, 0]]).abs() <= step);
    }
}
