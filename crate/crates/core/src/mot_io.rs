//! MOT Challenge text formats (detections, ground truth, results), the
//! embedding sidecar, and the event log.
//!
//! Parsers reject malformed input instead of repairing it; errors carry
//! 1-based line numbers. Writers use fixed decimal formatting so output is
//! byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::identity::{FalsificationEvent, RectificationKind, RectificationOutcome};
use crate::pipeline::{FrameResult, TrackEvent};
use crate::types::{BoundingBox, Detection, Embedding, TrackId};

/// One line of a det or result file:
/// `frame,id,left,top,width,height,score,x,y,z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFileRow {
    pub frame: u32,
    /// -1 for raw detections, the track id in result files.
    pub id: i64,
    pub bbox: BoundingBox,
    pub score: f64,
    pub extra: [f64; 3],
}

/// One line of a ground-truth file: `frame,id,left,top,width,height,conf,class,visibility`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SidecarEncoding {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingSidecarHeader {
    pub rows: usize,
    pub dim: usize,
    pub encoding: SidecarEncoding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub header: EmbeddingSidecarHeader,
    /// Unit-normalized, in file order.
    pub rows: Vec<Embedding>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} `{}`", raw.trim())))
}

fn parse_box(line: usize, f: &[&str]) -> Result<BoundingBox> {
    let left: f64 = field(line, "left", f[0])?;
    let top: f64 = field(line, "top", f[1])?;
    let width: f64 = field(line, "width", f[2])?;
    let height: f64 = field(line, "height", f[3])?;
    BoundingBox::new(left, top, width, height)
        .map_err(|_| Error::parse(line, format!("invalid box ({left}, {top}, {width}, {height})")))
}

fn parse_frame(line: usize, raw: &str) -> Result<u32> {
    let frame: u32 = field(line, "frame", raw)?;
    if frame == 0 {
        return Err(Error::parse(line, "frame must be >= 1"));
    }
    Ok(frame)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_detection_rows(text: &str) -> Result<Vec<DetectionFileRow>> {
    let mut rows = Vec::new();
    let mut last_frame = 0;
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 10 {
            return Err(Error::parse(line, format!("expected 10 fields, got {}", f.len())));
        }
        let frame = parse_frame(line, f[0])?;
        if frame < last_frame {
            return Err(Error::parse(
                line,
                format!("frame {frame} after frame {last_frame}"),
            ));
        }
        last_frame = frame;
        let id: i64 = field(line, "id", f[1])?;
        let bbox = parse_box(line, &f[2..6])?;
        let score: f64 = field(line, "score", f[6])?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(line, format!("score {score} outside [0, 1]")));
        }
        let extra = [
            field(line, "field 8", f[7])?,
            field(line, "field 9", f[8])?,
            field(line, "field 10", f[9])?,
        ];
        rows.push(DetectionFileRow {
            frame,
            id,
            bbox,
            score,
            extra,
        });
    }
    Ok(rows)
}

pub fn read_detection_rows(path: impl AsRef<Path>) -> Result<Vec<DetectionFileRow>> {
    parse_detection_rows(&read(path.as_ref())?)
}

/// Groups rows by frame, preserving file order within a frame.
pub fn group_by_frame(rows: &[DetectionFileRow]) -> Vec<FrameDetections> {
    let mut out: Vec<FrameDetections> = Vec::new();
    for r in rows {
        let det = Detection::new(r.frame, r.bbox, r.score, None);
        match out.last_mut() {
            Some(fd) if fd.frame == r.frame => fd.detections.push(det),
            _ => out.push(FrameDetections {
                frame: r.frame,
                detections: vec![det],
            }),
        }
    }
    out
}

/// Reads a MOT det file into per-frame detection lists (without embeddings).
pub fn parse_detections(path: impl AsRef<Path>) -> Result<Vec<FrameDetections>> {
    Ok(group_by_frame(&read_detection_rows(path)?))
}

pub fn format_detection_rows(rows: &[DetectionFileRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let b = r.bbox;
        let _ = writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.6},{},{},{}",
            r.frame,
            r.id,
            b.left,
            b.top,
            b.width,
            b.height,
            r.score,
            r.extra[0],
            r.extra[1],
            r.extra[2]
        );
    }
    s
}

pub fn write_detection_rows(rows: &[DetectionFileRow], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_detection_rows(rows))
}

pub fn parse_embedding_text(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing sidecar header"))?;
    let h: Vec<&str> = head.trim().split(',').collect();
    if h.len() != 3 {
        return Err(Error::parse(1, "header must be `rows,dim,encoding`"));
    }
    let rows: usize = field(1, "row count", h[0])?;
    let dim: usize = field(1, "dimension", h[1])?;
    let encoding = match h[2].trim() {
        "text" => SidecarEncoding::Text,
        "binary" => {
            return Err(Error::parse(1, "binary sidecar encoding is not supported"));
        }
        other => return Err(Error::parse(1, format!("unknown encoding `{other}`"))),
    };
    if dim == 0 {
        return Err(Error::parse(1, "dimension must be positive"));
    }
    let mut out = Vec::with_capacity(rows);
    for (line, l) in lines {
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let values: Vec<f64> = l
            .split_whitespace()
            .map(|v| field(line, "embedding value", v))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                line,
                format!("expected {dim} values, got {}", values.len()),
            ));
        }
        let e = Embedding::unit(values).map_err(|e| match e {
            Error::ZeroNorm => Error::parse(line, format!("embedding row {} is a zero vector", out.len() + 1)),
            other => Error::parse(line, other.to_string()),
        })?;
        out.push(e);
    }
    if out.len() != rows {
        return Err(Error::parse(
            1,
            format!("header declares {rows} rows, file has {}", out.len()),
        ));
    }
    Ok(EmbeddingTable {
        header: EmbeddingSidecarHeader {
            rows,
            dim,
            encoding,
        },
        rows: out,
    })
}

pub fn parse_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    parse_embedding_text(&read(path.as_ref())?)
}

pub fn format_embeddings(embeddings: &[Embedding], dim: usize) -> String {
    let mut s = format!("{},{},text\n", embeddings.len(), dim);
    for e in embeddings {
        let mut first = true;
        for v in e.values() {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v:.8}");
        }
        s.push('\n');
    }
    s
}

pub fn write_embeddings(embeddings: &[Embedding], dim: usize, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_embeddings(embeddings, dim))
}

/// Attaches sidecar embeddings to detections in file-row order. The sidecar may
/// cover every row, or only rows with `score >= tau`.
pub fn attach_embeddings(
    frames: &mut [FrameDetections],
    table: &EmbeddingTable,
    tau: f64,
) -> Result<()> {
    let total: usize = frames.iter().map(|f| f.detections.len()).sum();
    let high = frames
        .iter()
        .flat_map(|f| &f.detections)
        .filter(|d| d.score >= tau)
        .count();
    let got = table.rows.len();
    let all_rows = if got == total {
        true
    } else if got == high {
        false
    } else {
        return Err(Error::EmbeddingRowCount { got, total, high });
    };
    let mut next = table.rows.iter();
    for d in frames.iter_mut().flat_map(|f| f.detections.iter_mut()) {
        if all_rows || d.score >= tau {
            d.embedding = next.next().cloned();
        }
    }
    Ok(())
}

fn result_rows(results: &[FrameResult]) -> Vec<DetectionFileRow> {
    let mut rows = Vec::new();
    for fr in results {
        let mut outs: Vec<_> = fr.outputs.iter().collect();
        outs.sort_by_key(|o| o.id);
        for o in outs {
            rows.push(DetectionFileRow {
                frame: fr.frame,
                id: o.id.0 as i64,
                bbox: o.bbox,
                score: o.score,
                extra: [-1.0; 3],
            });
        }
    }
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}

pub fn format_results(results: &[FrameResult]) -> String {
    format_detection_rows(&result_rows(results))
}

pub fn write_results(results: &[FrameResult], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_results(results))
}

pub fn parse_ground_truth_text(text: &str) -> Result<Vec<GtRow>> {
    let mut rows = Vec::new();
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 9 && f.len() != 10 {
            return Err(Error::parse(line, format!("expected 9 fields, got {}", f.len())));
        }
        let frame = parse_frame(line, f[0])?;
        let id: u64 = field(line, "id", f[1])?;
        let bbox = parse_box(line, &f[2..6])?;
        rows.push(GtRow { frame, id, bbox });
    }
    Ok(rows)
}

pub fn parse_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GtRow>> {
    parse_ground_truth_text(&read(path.as_ref())?)
}

pub fn format_ground_truth(rows: &[GtRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let b = r.bbox;
        let _ = writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},1,1,1",
            r.frame, r.id, b.left, b.top, b.width, b.height
        );
    }
    s
}

pub fn write_ground_truth(rows: &[GtRow], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_ground_truth(rows))
}

pub fn format_event(e: &TrackEvent) -> String {
    match e {
        TrackEvent::Birth { frame, id } => format!("{frame},BIRTH,{id}"),
        TrackEvent::Remove { frame, id } => format!("{frame},REMOVE,{id}"),
        TrackEvent::Falsify(f) => {
            format!("{},FALSIFY,{},{:.6}", f.frame, f.track_id, f.tspec_at_flag)
        }
        TrackEvent::Rectify(r) => match &r.kind {
            RectificationKind::Recovered { cost, .. } => {
                format!("{},RECOVER,{},{:.6}", r.frame, r.track_id, cost)
            }
            RectificationKind::Reassigned { new_id } => {
                format!("{},REASSIGN,{},{}", r.frame, r.track_id, new_id)
            }
        },
    }
}

pub fn format_events<'a>(events: impl IntoIterator<Item = &'a TrackEvent>) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&format_event(e));
        s.push('\n');
    }
    s
}

pub fn write_events<'a>(
    events: impl IntoIterator<Item = &'a TrackEvent>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &format_events(events))
}

/// Parses an event log. Recovery lines do not record the detection index, so
/// it reads back as 0.
pub fn parse_events_text(text: &str) -> Result<Vec<TrackEvent>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let f: Vec<&str> = l.split(',').collect();
        let frame = parse_frame(line, f[0])?;
        let kind = f.get(1).map(|k| k.trim()).unwrap_or("");
        let want = match kind {
            "BIRTH" | "REMOVE" => 3,
            "FALSIFY" | "RECOVER" | "REASSIGN" => 4,
            other => return Err(Error::parse(line, format!("unknown event kind `{other}`"))),
        };
        if f.len() != want {
            return Err(Error::parse(line, format!("{kind} needs {want} fields, got {}", f.len())));
        }
        let id = TrackId(field(line, "track id", f[2])?);
        out.push(match kind {
            "BIRTH" => TrackEvent::Birth { frame, id },
            "REMOVE" => TrackEvent::Remove { frame, id },
            "FALSIFY" => TrackEvent::Falsify(FalsificationEvent {
                track_id: id,
                frame,
                tspec_at_flag: field(line, "tspec", f[3])?,
            }),
            "RECOVER" => TrackEvent::Rectify(RectificationOutcome {
                track_id: id,
                kind: RectificationKind::Recovered {
                    detection: 0,
                    cost: field(line, "cost", f[3])?,
                },
                frame,
            }),
            _ => TrackEvent::Rectify(RectificationOutcome {
                track_id: id,
                kind: RectificationKind::Reassigned {
                    new_id: TrackId(field(line, "new id", f[3])?),
                },
                frame,
            }),
        });
    }
    Ok(out)
}

pub fn parse_events(path: impl AsRef<Path>) -> Result<Vec<TrackEvent>> {
    parse_events_text(&read(path.as_ref())?)
}
