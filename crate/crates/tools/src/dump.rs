//! Detection dump CSV: `frame_id,x,y,z,l,w,h,yaw,score` in the LiDAR frame.
//! Numbers are written with nine significant digits, so a second write of a
//! read dump reproduces it byte for byte. Lines starting with `#` are
//! comments.

use carlo_core::geometry::Box3D;
use carlo_core::harness::Detection;
use carlo_core::math::Vec3;

use crate::error::{DataError, DataResult};
use crate::provenance::Provenance;

pub const DUMP_HEADER: [&str; 9] = ["frame_id", "x", "y", "z", "l", "w", "h", "yaw", "score"];

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub frame_id: String,
    pub detection: Detection,
}

/// Rounds to nine significant digits and prints the shortest text that
/// parses back to the rounded value.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("scientific literal");
    format!("{rounded}")
}

/// Optional cell: empty when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

/// Prepends the provenance comment (if any) to finished CSV bytes.
pub(crate) fn finish(w: csv::Writer<Vec<u8>>, prov: Option<&Provenance>) -> String {
    let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv");
    match prov {
        Some(p) => format!("{}\n{body}", p.comment()),
        None => body,
    }
}

pub(crate) fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub fn write_detection_dump(rows: &[DumpRow], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(DUMP_HEADER).expect("in-memory write");
    for r in rows {
        let b = &r.detection.bbox;
        let mut rec = vec![r.frame_id.clone()];
        rec.extend(
            [b.center.x, b.center.y, b.center.z, b.length, b.width, b.height, b.yaw, r.detection.score]
                .into_iter()
                .map(fmt_sig9),
        );
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w, prov)
}

pub fn read_detection_dump(text: &str) -> DataResult<Vec<DumpRow>> {
    let mut rdr = csv_reader(text);
    let header = rdr
        .headers()
        .map_err(|e| DataError::parse("detection dump", 1, e.to_string()))?
        .clone();
    if header.iter().ne(DUMP_HEADER) {
        return Err(DataError::parse(
            "detection dump",
            1,
            format!("header must be `{}`", DUMP_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::parse("detection dump", 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != DUMP_HEADER.len() {
            return Err(DataError::parse(
                "detection dump",
                line,
                format!("expected {} columns, found {}", DUMP_HEADER.len(), rec.len()),
            ));
        }
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            let t = &rec[k + 1];
            *slot = t
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| DataError::parse("detection dump", line, format!("{}: bad number {t:?}", DUMP_HEADER[k + 1])))?;
        }
        let [x, y, z, l, w, h, yaw, score] = v;
        if !(0.0..=1.0).contains(&score) {
            return Err(DataError::parse("detection dump", line, format!("score {score} outside [0, 1]")));
        }
        let bbox = Box3D::new(Vec3::new(x, y, z), l, w, h, yaw)
            .map_err(|e| DataError::parse("detection dump", line, e.to_string()))?;
        out.push(DumpRow {
            frame_id: rec[0].to_string(),
            detection: Detection { bbox, score },
        });
    }
    Ok(out)
}

/// Groups rows by frame id, keeping first-appearance order of frames and
/// row order within a frame.
pub fn group_by_frame(rows: &[DumpRow]) -> Vec<(String, Vec<Detection>)> {
    let mut out: Vec<(String, Vec<Detection>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in rows {
        let k = *index.entry(r.frame_id.clone()).or_insert_with(|| {
            out.push((r.frame_id.clone(), Vec::new()));
            out.len() - 1
        });
        out[k].1.push(r.detection);
    }
    out
}
