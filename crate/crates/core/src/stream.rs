//! Descriptor stream files: one JSON object per line.
//!
//! ```text
//! {"frame": 0, "full": [...], "left": [...], "middle": [...], "right": [...]}
//! ```
//!
//! The segment fields are optional but all-or-nothing.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::descriptor::{GlobalDescriptor, ObservationDescriptors, Segments};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u64,
    full: GlobalDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<GlobalDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    middle: Option<GlobalDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<GlobalDescriptor>,
}

impl From<&ObservationDescriptors> for FrameRecord {
    fn from(obs: &ObservationDescriptors) -> Self {
        let seg = obs.segments.as_ref();
        Self {
            frame: obs.frame_index,
            full: obs.full.clone(),
            left: seg.map(|s| s.left.clone()),
            middle: seg.map(|s| s.middle.clone()),
            right: seg.map(|s| s.right.clone()),
        }
    }
}

fn format_error(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        column: 0,
        message: message.into(),
    }
}

/// Parses a single stream line. `line_no` is 1-based and only used for errors.
pub fn parse_record(text: &str, line_no: usize) -> Result<ObservationDescriptors> {
    let rec: FrameRecord = serde_json::from_str(text).map_err(|e| Error::from_json(e, line_no - 1))?;
    let segments = match (rec.left, rec.middle, rec.right) {
        (None, None, None) => None,
        (Some(left), Some(middle), Some(right)) => Some(Segments { left, middle, right }),
        _ => {
            return Err(format_error(
                line_no,
                "left, middle and right must be given together",
            ))
        }
    };
    let dim = rec.full.dim();
    if let Some(s) = &segments {
        for d in [&s.left, &s.middle, &s.right] {
            if d.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: d.dim(),
                });
            }
        }
    }
    Ok(ObservationDescriptors {
        frame_index: rec.frame,
        full: rec.full,
        segments,
    })
}

/// Reads a whole stream, checking shared dimension and strictly increasing frames.
/// Blank lines are skipped.
pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<ObservationDescriptors>> {
    let mut out: Vec<ObservationDescriptors> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obs = parse_record(&line, i + 1)?;
        if let Some(prev) = out.last() {
            if obs.dim() != prev.dim() {
                return Err(Error::DimMismatch {
                    expected: prev.dim(),
                    found: obs.dim(),
                });
            }
            if obs.frame_index <= prev.frame_index {
                return Err(Error::NonMonotonicFrame {
                    prev: prev.frame_index,
                    got: obs.frame_index,
                });
            }
        }
        out.push(obs);
    }
    Ok(out)
}

pub fn read_stream_file(path: impl AsRef<std::path::Path>) -> Result<Vec<ObservationDescriptors>> {
    let file = std::fs::File::open(path)?;
    read_stream(std::io::BufReader::new(file))
}

pub fn write_record<W: Write>(mut writer: W, obs: &ObservationDescriptors) -> Result<()> {
    serde_json::to_writer(&mut writer, &FrameRecord::from(obs)).map_err(|e| Error::from_json(e, 0))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_stream<W: Write>(mut writer: W, stream: &[ObservationDescriptors]) -> Result<()> {
    for obs in stream {
        write_record(&mut writer, obs)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_stream_file(path: impl AsRef<std::path::Path>, stream: &[ObservationDescriptors]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_stream(std::io::BufWriter::new(file), stream)
}
