use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::appearance::FeatureVec;
use crate::fusion::{group_tracklets, Detection, GlobalTrack, Tracklet};
use crate::geometry::{BBox, GlobalPoint};
use crate::metrics::LabeledTimeline;
use crate::{Error, Result};

pub const TRACKLET_COLUMNS: [&str; 7] = ["frame", "local_track_id", "x1", "y1", "x2", "y2", "confidence"];
pub const TRACK_COLUMNS: [&str; 6] = ["frame", "global_id", "gx", "gy", "source_camera", "source_local_id"];
pub const FEATURE_MAGIC: &[u8; 8] = b"TFFEAT01";

/// Features keyed by `(frame, local_track_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: BTreeMap<(u32, u32), FeatureVec>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn from_tracklets(dim: usize, tracklets: &[Tracklet]) -> Self {
        let rows = tracklets
            .iter()
            .flat_map(|t| &t.detections)
            .filter_map(|d| d.feature.clone().map(|f| ((d.frame, d.local_track_id), f)))
            .collect();
        Self { dim, rows }
    }

    /// Attaches features to matching detections.
    pub fn attach(&self, tracklets: &mut [Tracklet]) {
        for d in tracklets.iter_mut().flat_map(|t| t.detections.iter_mut()) {
            if let Some(f) = self.rows.get(&(d.frame, d.local_track_id)) {
                d.feature = Some(f.clone());
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn write_comment(out: &mut impl Write, path: &Path, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::parse(
            path,
            format!("expected columns [{}], found [{}]", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(path, format!("line {line}: column `{name}`: cannot parse {raw:?}")))
}

/// Reads one camera's tracklet CSV.
pub fn read_tracklets_csv(path: &Path, camera_id: u32) -> Result<Vec<Tracklet>> {
    let mut rdr = reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &headers, &TRACKLET_COLUMNS)?;
    let mut dets = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let frame = field(path, &rec, 0, "frame")?;
        let local = field(path, &rec, 1, "local_track_id")?;
        let coords: [f64; 4] = [
            field(path, &rec, 2, "x1")?,
            field(path, &rec, 3, "y1")?,
            field(path, &rec, 4, "x2")?,
            field(path, &rec, 5, "y2")?,
        ];
        let confidence: f64 = field(path, &rec, 6, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(path, format!("line {line}: confidence {confidence} outside [0, 1]")));
        }
        let bbox = BBox::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        dets.push(Detection::new(frame, camera_id, local, bbox, confidence));
    }
    group_tracklets(dets).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_tracklets_csv(path: &Path, tracklets: &[Tracklet], comment: Option<&str>) -> Result<()> {
    let mut out = create(path)?;
    write_comment(&mut out, path, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACKLET_COLUMNS).map_err(|e| csv_err(path, e))?;
    let mut dets: Vec<&Detection> = tracklets.iter().flat_map(|t| &t.detections).collect();
    dets.sort_by_key(|d| (d.frame, d.local_track_id));
    for d in dets {
        let b = d.bbox;
        w.write_record([
            d.frame.to_string(),
            d.local_track_id.to_string(),
            b.x1.to_string(),
            b.y1.to_string(),
            b.x2.to_string(),
            b.y2.to_string(),
            d.confidence.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features_csv(path: &Path, table: &FeatureTable, comment: Option<&str>) -> Result<()> {
    let mut out = create(path)?;
    write_comment(&mut out, path, comment)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frame".to_string(), "local_track_id".to_string()];
    header.extend((0..table.dim).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for ((frame, local), f) in &table.rows {
        let mut rec = vec![frame.to_string(), local.to_string()];
        rec.extend(f.as_slice().iter().map(|v| (*v as f32).to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<FeatureTable> {
    let mut rdr = reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let dim = headers.len().saturating_sub(2);
    let mut expected = vec!["frame".to_string(), "local_track_id".to_string()];
    expected.extend((0..dim).map(|i| format!("f{i}")));
    check_header(path, &headers, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut table = FeatureTable::new(dim);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let frame = field(path, &rec, 0, "frame")?;
        let local = field(path, &rec, 1, "local_track_id")?;
        let values = (0..dim)
            .map(|i| field::<f64>(path, &rec, i + 2, &format!("f{i}")))
            .collect::<Result<Vec<_>>>()?;
        insert_feature(path, &mut table, frame, local, values)?;
    }
    Ok(table)
}

fn insert_feature(path: &Path, table: &mut FeatureTable, frame: u32, local: u32, values: Vec<f64>) -> Result<()> {
    let f = FeatureVec::new(values).map_err(|e| Error::parse(path, format!("frame {frame} track {local}: {e}")))?;
    if table.rows.insert((frame, local), f.normalized()).is_some() {
        return Err(Error::parse(path, format!("duplicate feature for frame {frame} track {local}")));
    }
    Ok(())
}

/// Binary layout: magic, `u32` dim, `u64` count, then per record `u32`
/// frame, `u32` local id and `dim` `f32` values, all little-endian.
pub fn write_features_bin(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut out = create(path)?;
    let mut buf = Vec::with_capacity(20 + table.rows.len() * (8 + 4 * table.dim));
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(table.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(table.rows.len() as u64).to_le_bytes());
    for ((frame, local), f) in &table.rows {
        buf.extend_from_slice(&frame.to_le_bytes());
        buf.extend_from_slice(&local.to_le_bytes());
        for v in f.as_slice() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_bin(path: &Path) -> Result<FeatureTable> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let truncated = || Error::parse(path, "truncated binary feature file");
    if bytes.len() < 20 || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::parse(path, "missing binary feature header"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let record = 8 + 4 * dim;
    let body = &bytes[20..];
    if (body.len() as u64) != count.checked_mul(record as u64).ok_or_else(truncated)? {
        return Err(truncated());
    }
    let mut table = FeatureTable::new(dim);
    for chunk in body.chunks_exact(record) {
        let frame = u32::from_le_bytes(chunk[0..4].try_into().expect("4 bytes"));
        let local = u32::from_le_bytes(chunk[4..8].try_into().expect("4 bytes"));
        let values = chunk[8..]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        insert_feature(path, &mut table, frame, local, values)?;
    }
    Ok(table)
}

/// Reads a feature file in either format, sniffing the binary magic.
pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut head = [0u8; 8];
    let n = open(path)?.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n == 8 && &head == FEATURE_MAGIC {
        read_features_bin(path)
    } else {
        read_features_csv(path)
    }
}

/// Writes fused tracks, one row per (frame, global id).
pub fn write_tracks_csv(path: &Path, tracks: &[GlobalTrack], comment: Option<&str>) -> Result<()> {
    let mut out = create(path)?;
    write_comment(&mut out, path, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACK_COLUMNS).map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<(u32, u32, &Detection)> = tracks
        .iter()
        .flat_map(|t| t.detections.iter().map(move |d| (d.frame, t.global_id, d)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (frame, gid, d) in rows {
        w.write_record([
            frame.to_string(),
            gid.to_string(),
            d.global_pos.x.to_string(),
            d.global_pos.y.to_string(),
            d.camera_id.to_string(),
            d.local_track_id.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a labelled timeline in the track schema with empty source columns.
pub fn write_timeline_csv(path: &Path, timeline: &LabeledTimeline, comment: Option<&str>) -> Result<()> {
    let mut out = create(path)?;
    write_comment(&mut out, path, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACK_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (frame, points) in timeline.frames() {
        let mut points = points.to_vec();
        points.sort_by_key(|p| p.0);
        for (id, p) in points {
            w.write_record([frame.to_string(), id.to_string(), p.x.to_string(), p.y.to_string(), String::new(), String::new()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a track or ground-truth CSV into a timeline.
pub fn read_timeline_csv(path: &Path) -> Result<LabeledTimeline> {
    let mut rdr = reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &headers, &TRACK_COLUMNS)?;
    let mut timeline = LabeledTimeline::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let frame = field(path, &rec, 0, "frame")?;
        let id = field(path, &rec, 1, "global_id")?;
        let x: f64 = field(path, &rec, 2, "gx")?;
        let y: f64 = field(path, &rec, 3, "gy")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::parse(path, format!("line {line}: non-finite position")));
        }
        timeline
            .insert(frame, id, GlobalPoint::new(x, y))
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
    }
    Ok(timeline)
}
