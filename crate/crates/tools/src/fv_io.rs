//! Front-view exports (CSV rasters, binary PGM) and score raster import.
//!
//! CSV rasters list row 0 (lowest elevation) first; empty pixels are blank
//! cells. The PGM is flipped so the sky is at the top.

use carlo_core::fv::{FvImage, ScoreRaster};

use crate::dump::{csv_writer, finish, fmt_sig9};
use crate::error::{DataError, DataResult};
use crate::provenance::Provenance;

fn raster(img: &FvImage, cell: impl Fn(usize) -> String, prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    for r in 0..img.rows() {
        let rec: Vec<String> = (0..img.cols()).map(|c| cell(img.index(r, c))).collect();
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w, prov)
}

pub fn write_range_csv(img: &FvImage, prov: Option<&Provenance>) -> String {
    raster(img, |i| if img.count[i] > 0 { fmt_sig9(img.range[i]) } else { String::new() }, prov)
}

pub fn write_count_csv(img: &FvImage, prov: Option<&Provenance>) -> String {
    raster(img, |i| img.count[i].to_string(), prov)
}

/// 8-bit graymap: nearer is brighter, empty pixels are black.
pub fn write_pgm(img: &FvImage, prov: Option<&Provenance>) -> Vec<u8> {
    let far = img
        .range
        .iter()
        .zip(&img.count)
        .filter(|(_, &n)| n > 0)
        .map(|(&r, _)| r)
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let mut out = Vec::new();
    out.extend_from_slice(b"P5\n");
    if let Some(p) = prov {
        out.extend_from_slice(p.comment().as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(format!("{} {}\n255\n", img.cols(), img.rows()).as_bytes());
    for r in (0..img.rows()).rev() {
        for c in 0..img.cols() {
            let i = img.index(r, c);
            let v = if img.count[i] == 0 {
                0
            } else {
                (255.0 * (1.0 - img.range[i] / far)).round().clamp(1.0, 255.0) as u8
            };
            out.push(v);
        }
    }
    out
}

/// Reads a headerless numeric CSV raster (same orientation as the exports).
pub fn read_score_raster(text: &str) -> DataResult<ScoreRaster> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for rec in rdr.into_records() {
        let rec = rec.map_err(|e| DataError::parse("score raster", rows + 1, e.to_string()))?;
        let line = rec.position().map_or(rows + 1, |p| p.line() as usize);
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(DataError::parse("score raster", line, format!("expected {c} columns, found {}", rec.len())))
            }
            _ => {}
        }
        for t in rec.iter() {
            let v: f64 = t
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::parse("score raster", line, format!("bad value {t:?}")))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(ScoreRaster {
        rows,
        cols: cols.unwrap_or(0),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use carlo_core::cloud::{Point, PointCloud};
    use carlo_core::fv::{build_fv_image, FvConfig};

    #[test]
    fn exports_and_import() {
        let cfg = FvConfig::new(1.0, 1.0, -2.0, -2.0, 4.0, 3.0).unwrap();
        let img = build_fv_image(&PointCloud::new(vec![Point::new(10.0, 0.0, 0.0, 0.5)]), &cfg);
        let csv = write_range_csv(&img, None);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(2).unwrap(), ",,10,");
        let counts = read_score_raster(&write_count_csv(&img, None)).unwrap();
        assert_eq!((counts.rows, counts.cols), (3, 4));
        assert_eq!(counts.values.iter().sum::<f64>(), 1.0);
        let pgm = write_pgm(&img, None);
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pgm.len(), 11 + 12);
        assert!(read_score_raster("1,2\n3\n").is_err());
        assert!(read_score_raster("1,x\n").is_err());
    }
}
