//! Feature-record containers and landmark files.
//!
//! Binary container (canonical, magic `FVB1`, little-endian):
//!
//! ```text
//! "FVB1" | record_count u32
//! per record:
//!   id_len u32 | id utf8 | kind u8 | segment_count u32
//!   per segment: scale u32 | block_row u32 | block_col u32
//!   value_count u32 | values f32 * value_count
//! ```
//!
//! The CSV container mirrors it with one row per record:
//! `image_id, kind, layout (s:r:c segments joined by ';'), values...`.
//!
//! Landmark files are 27 headerless `x,y` rows in the 300x300 frame.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FeatureKind, Landmarks, LbpError, Segment, LANDMARK_COUNT, SEGMENT_BINS};

const MAGIC: &[u8; 4] = b"FVB1";

/// One extracted vector tagged with its source image. `layout` is empty
/// for reduced (post-PCA) vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    pub kind: FeatureKind,
    pub layout: Vec<Segment>,
    pub values: Vec<f32>,
}

impl FeatureRecord {
    fn validate(&self) -> Result<(), LbpError> {
        if !self.layout.is_empty() && self.values.len() != self.layout.len() * SEGMENT_BINS {
            return Err(LbpError::LayoutMismatch {
                got: self.values.len(),
                segments: self.layout.len(),
            });
        }
        Ok(())
    }
}

fn kind_tag(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::Lbp => 0,
        FeatureKind::MsLbp => 1,
        FeatureKind::HighDim => 2,
        FeatureKind::HighDimPca => 3,
    }
}

fn kind_from_tag(tag: u8) -> Option<FeatureKind> {
    match tag {
        0 => Some(FeatureKind::Lbp),
        1 => Some(FeatureKind::MsLbp),
        2 => Some(FeatureKind::HighDim),
        3 => Some(FeatureKind::HighDimPca),
        _ => None,
    }
}

pub fn write_feature_file(records: &[FeatureRecord], path: &Path) -> Result<(), LbpError> {
    let io_err = |source| LbpError::Io {
        path: path.display().to_string(),
        source,
    };
    for r in records {
        r.validate()?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(records.len() as u32)?;
        for r in records {
            w.write_u32::<LittleEndian>(r.image_id.len() as u32)?;
            w.write_all(r.image_id.as_bytes())?;
            w.write_u8(kind_tag(r.kind))?;
            w.write_u32::<LittleEndian>(r.layout.len() as u32)?;
            for seg in &r.layout {
                w.write_u32::<LittleEndian>(seg.scale_index)?;
                w.write_u32::<LittleEndian>(seg.block_row)?;
                w.write_u32::<LittleEndian>(seg.block_col)?;
            }
            w.write_u32::<LittleEndian>(r.values.len() as u32)?;
            for &v in &r.values {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(io_err)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureRecord>, LbpError> {
    let io_err = |source: std::io::Error| LbpError::Io {
        path: path.display().to_string(),
        source,
    };
    let fmt_err = |msg: String| LbpError::FileFormat {
        path: path.display().to_string(),
        msg,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic".into()));
    }
    let count = r
        .read_u32::<LittleEndian>()
        .map_err(|_| fmt_err("truncated header".into()))? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for ri in 0..count {
        let trunc = |_| fmt_err(format!("truncated record {ri}"));
        let id_len = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if id_len > 1 << 16 {
            return Err(fmt_err(format!("implausible id length in record {ri}")));
        }
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(trunc)?;
        let image_id =
            String::from_utf8(id).map_err(|_| fmt_err(format!("record {ri} id is not utf8")))?;
        let tag = r.read_u8().map_err(trunc)?;
        let kind = kind_from_tag(tag).ok_or_else(|| fmt_err(format!("unknown kind tag {tag}")))?;
        let seg_count = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if seg_count > 1 << 24 {
            return Err(fmt_err(format!("implausible segment count in record {ri}")));
        }
        let mut layout = Vec::with_capacity(seg_count);
        for si in 0..seg_count {
            layout.push(Segment {
                scale_index: r.read_u32::<LittleEndian>().map_err(trunc)?,
                block_row: r.read_u32::<LittleEndian>().map_err(trunc)?,
                block_col: r.read_u32::<LittleEndian>().map_err(trunc)?,
                offset: (si * SEGMENT_BINS) as u32,
            });
        }
        let value_count = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if value_count > 1 << 28 {
            return Err(fmt_err(format!("implausible value count in record {ri}")));
        }
        let mut values = vec![0f32; value_count];
        r.read_f32_into::<LittleEndian>(&mut values)
            .map_err(trunc)?;
        let record = FeatureRecord {
            image_id,
            kind,
            layout,
            values,
        };
        record.validate()?;
        records.push(record);
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(fmt_err("trailing bytes after last record".into())),
        Err(e) => return Err(io_err(e)),
    }
    Ok(records)
}

fn layout_string(layout: &[Segment]) -> String {
    layout
        .iter()
        .map(|s| format!("{}:{}:{}", s.scale_index, s.block_row, s.block_col))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_layout(s: &str) -> Option<Vec<Segment>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    let mut layout = Vec::new();
    for (i, part) in s.split(';').enumerate() {
        let mut nums = part.split(':');
        let scale_index = nums.next()?.parse().ok()?;
        let block_row = nums.next()?.parse().ok()?;
        let block_col = nums.next()?.parse().ok()?;
        if nums.next().is_some() {
            return None;
        }
        layout.push(Segment {
            scale_index,
            block_row,
            block_col,
            offset: (i * SEGMENT_BINS) as u32,
        });
    }
    Some(layout)
}

/// CSV sibling of the binary container; same records, text encoded.
pub fn write_feature_records_csv(records: &[FeatureRecord], path: &Path) -> Result<(), LbpError> {
    let io_err = |source: std::io::Error| LbpError::Io {
        path: path.display().to_string(),
        source,
    };
    for r in records {
        r.validate()?;
    }
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(source),
            other => LbpError::FileFormat {
                path: path.display().to_string(),
                msg: format!("{other:?}"),
            },
        })?;
    for r in records {
        let mut row = vec![
            r.image_id.clone(),
            r.kind.to_string(),
            layout_string(&r.layout),
        ];
        row.extend(r.values.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(|e| LbpError::FileFormat {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    w.flush().map_err(io_err)
}

pub fn read_feature_records_csv(path: &Path) -> Result<Vec<FeatureRecord>, LbpError> {
    let fmt_err = |msg: String| LbpError::FileFormat {
        path: path.display().to_string(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| fmt_err(e.to_string()))?;
    let mut records = Vec::new();
    for (ri, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| fmt_err(e.to_string()))?;
        if row.len() < 3 {
            return Err(fmt_err(format!("row {ri} has fewer than 3 fields")));
        }
        let kind = FeatureKind::parse(&row[1])
            .ok_or_else(|| fmt_err(format!("row {ri}: unknown kind `{}`", &row[1])))?;
        let layout =
            parse_layout(&row[2]).ok_or_else(|| fmt_err(format!("row {ri}: bad layout field")))?;
        let values = row
            .iter()
            .skip(3)
            .map(|v| v.parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .map_err(|e| fmt_err(format!("row {ri}: bad value: {e}")))?;
        let record = FeatureRecord {
            image_id: row[0].to_string(),
            kind,
            layout,
            values,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Write 27 `x,y` rows.
pub fn save_landmarks(lm: &Landmarks, path: &Path) -> Result<(), LbpError> {
    let io_err = |source: std::io::Error| LbpError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    for &(x, y) in lm.points() {
        out.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Read 27 `x,y` rows (no header).
pub fn load_landmarks(path: &Path) -> Result<Landmarks, LbpError> {
    let io_err = |source: std::io::Error| LbpError::Io {
        path: path.display().to_string(),
        source,
    };
    let fmt_err = |msg: String| LbpError::FileFormat {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut points = Vec::with_capacity(LANDMARK_COUNT);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (xs, ys) = line
            .split_once(',')
            .ok_or_else(|| fmt_err(format!("line {}: expected `x,y`", i + 1)))?;
        let x: f64 = xs
            .trim()
            .parse()
            .map_err(|_| fmt_err(format!("line {}: bad x", i + 1)))?;
        let y: f64 = ys
            .trim()
            .parse()
            .map_err(|_| fmt_err(format!("line {}: bad y", i + 1)))?;
        points.push((x, y));
    }
    Landmarks::new(points)
}
