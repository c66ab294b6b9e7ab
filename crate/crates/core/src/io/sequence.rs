//! Pose sequence files.
//!
//! Two encodings, chosen by extension:
//!
//! * Binary (`.pseq` or `.bin`): magic `PSEQ`, then `version`, `frames`,
//!   `joints`, `dims` as little-endian `u32` (version 1, dims 2 or 3), then
//!   `frames * joints * dims` little-endian `f64` values, frame-major.
//! * Text (`.txt` or `.csv`): one frame per line, `joints * dims`
//!   comma-separated values. An optional first line `# joints=J dims=D`
//!   pins the shape; without it, `dims` is inferred from the value count
//!   (an error if both 2 and 3 divide it and joints are ambiguous).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Pose3DSequence, PoseSequence2D};

/// A loaded sequence: 2D detections or 3D poses.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceData {
    Pose2D(PoseSequence2D),
    Pose3D(Pose3DSequence),
}

impl SequenceData {
    pub fn frames(&self) -> usize {
        match self {
            SequenceData::Pose2D(s) => s.frames(),
            SequenceData::Pose3D(s) => s.frames(),
        }
    }

    pub fn joints(&self) -> usize {
        match self {
            SequenceData::Pose2D(s) => s.joints(),
            SequenceData::Pose3D(s) => s.joints(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            SequenceData::Pose2D(_) => 2,
            SequenceData::Pose3D(_) => 3,
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            SequenceData::Pose2D(s) => s.data(),
            SequenceData::Pose3D(s) => s.data(),
        }
    }
}

const MAGIC: &[u8; 4] = b"PSEQ";
const VERSION: u32 = 1;

fn is_binary_ext(path: &Path) -> Result<bool> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pseq") | Some("bin") => Ok(true),
        Some("txt") | Some("csv") => Ok(false),
        other => Err(Error::Parse {
            location: path.display().to_string(),
            detail: format!(
                "unknown sequence extension {:?} (expected pseq, bin, txt, or csv)",
                other.unwrap_or("")
            ),
        }),
    }
}

/// Loads a sequence file, picking the encoding from the extension.
pub fn load_sequence(path: &Path) -> Result<SequenceData> {
    if is_binary_ext(path)? {
        load_binary(path)
    } else {
        load_text(path)
    }
}

/// Loads a sequence file and requires 2D content.
pub fn load_pose2d(path: &Path) -> Result<PoseSequence2D> {
    match load_sequence(path)? {
        SequenceData::Pose2D(s) => Ok(s),
        SequenceData::Pose3D(_) => Err(Error::Config(format!(
            "{} holds 3D poses where a 2D sequence is required",
            path.display()
        ))),
    }
}

/// Writes a sequence file, picking the encoding from the extension.
pub fn save_sequence(path: &Path, seq: &SequenceData) -> Result<()> {
    if is_binary_ext(path)? {
        save_binary(path, seq)
    } else {
        save_text(path, seq)
    }
}

fn build(frames: usize, joints: usize, dims: usize, values: Vec<f64>) -> Result<SequenceData> {
    match dims {
        2 => Ok(SequenceData::Pose2D(PoseSequence2D::new(
            frames, joints, values,
        )?)),
        3 => Ok(SequenceData::Pose3D(Pose3DSequence::new(
            frames, joints, values,
        )?)),
        d => Err(Error::Parse {
            location: "header".into(),
            detail: format!("dims must be 2 or 3, got {d}"),
        }),
    }
}

fn load_binary(path: &Path) -> Result<SequenceData> {
    let bytes = fs::read(path)?;
    let at = |off: usize| format!("{}: byte {off}", path.display());
    if bytes.len() < 20 {
        return Err(Error::Parse {
            location: at(bytes.len()),
            detail: format!("file too short for a header (20 bytes), got {}", bytes.len()),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Parse {
            location: at(0),
            detail: "bad magic (expected PSEQ)".into(),
        });
    }
    let u32_at = |off: usize| -> u32 {
        u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
    };
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Parse {
            location: at(4),
            detail: format!("unsupported version {version}"),
        });
    }
    let frames = u32_at(8) as usize;
    let joints = u32_at(12) as usize;
    let dims = u32_at(16) as usize;
    let expected = frames * joints * dims * 8;
    let payload = &bytes[20..];
    if payload.len() != expected {
        return Err(Error::Parse {
            location: at(20),
            detail: format!(
                "payload of {expected} bytes expected ({frames}x{joints}x{dims} f64), found {}",
                payload.len()
            ),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    build(frames, joints, dims, values)
}

fn save_binary(path: &Path, seq: &SequenceData) -> Result<()> {
    let mut bytes = Vec::with_capacity(20 + seq.values().len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(seq.frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(seq.joints() as u32).to_le_bytes());
    bytes.extend_from_slice(&(seq.dims() as u32).to_le_bytes());
    for v in seq.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn parse_header_line(line: &str) -> Result<Option<(usize, usize)>> {
    let body = line.trim_start_matches('#').trim();
    if body.is_empty() {
        return Ok(None);
    }
    let mut joints = None;
    let mut dims = None;
    for part in body.split_whitespace() {
        if let Some((k, v)) = part.split_once('=') {
            let n: usize = v.parse().map_err(|_| Error::Parse {
                location: "line 1".into(),
                detail: format!("bad header value '{v}'"),
            })?;
            match k {
                "joints" => joints = Some(n),
                "dims" => dims = Some(n),
                other => {
                    return Err(Error::Parse {
                        location: "line 1".into(),
                        detail: format!("unknown header field '{other}'"),
                    })
                }
            }
        }
    }
    match (joints, dims) {
        (Some(j), Some(d)) => Ok(Some((j, d))),
        (None, None) => Ok(None),
        _ => Err(Error::Parse {
            location: "line 1".into(),
            detail: "header must set both joints and dims".into(),
        }),
    }
}

fn infer_shape(per_line: usize) -> Result<(usize, usize)> {
    let by2 = per_line.is_multiple_of(2);
    let by3 = per_line.is_multiple_of(3);
    match (by2, by3) {
        (true, true) => Err(Error::Parse {
            location: "line 2".into(),
            detail: format!(
                "{per_line} values per line is ambiguous (both dims 2 and 3 fit); \
                 add a '# joints=J dims=D' header line"
            ),
        }),
        (true, false) => Ok((per_line / 2, 2)),
        (false, true) => Ok((per_line / 3, 3)),
        (false, false) => Err(Error::Parse {
            location: "line 2".into(),
            detail: format!("{per_line} values per line fit neither 2D nor 3D joints"),
        }),
    }
}

fn load_text(path: &Path) -> Result<SequenceData> {
    let text = fs::read_to_string(path)?;
    let mut header: Option<(usize, usize)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if rows.is_empty() && header.is_none() {
                header = parse_header_line(line)?;
                continue;
            }
            continue; // later comment lines are skipped
        }
        let loc = format!("{}: line {}", path.display(), i + 1);
        let vals: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    location: loc.clone(),
                    detail: format!("bad number '{}'", tok.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(prev) = rows.first() {
            if vals.len() != prev.len() {
                return Err(Error::Parse {
                    location: loc,
                    detail: format!(
                        "expected {} values per line, got {}",
                        prev.len(),
                        vals.len()
                    ),
                });
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            location: path.display().to_string(),
            detail: "no frames in file".into(),
        });
    }
    let per_line = rows[0].len();
    let (joints, dims) = match header {
        Some((j, d)) => {
            if j * d != per_line {
                return Err(Error::Parse {
                    location: "line 2".into(),
                    detail: format!(
                        "header says {j} joints x {d} dims = {} values, lines have {per_line}",
                        j * d
                    ),
                });
            }
            (j, d)
        }
        None => infer_shape(per_line)?,
    };
    let frames = rows.len();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    build(frames, joints, dims, values)
}

fn save_text(path: &Path, seq: &SequenceData) -> Result<()> {
    let (joints, dims) = (seq.joints(), seq.dims());
    let mut out = format!("# joints={joints} dims={dims}\n");
    let stride = joints * dims;
    for frame in seq.values().chunks(stride) {
        let line: Vec<String> = frame.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("vpt-seq-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn text_two_frame_example() {
        let path = tmp("two.txt");
        fs::write(&path, "0,0\n1,1\n").unwrap();
        let seq = load_sequence(&path).unwrap();
        assert_eq!(seq.frames(), 2);
        assert_eq!(seq.joints(), 1);
        assert_eq!(seq.dims(), 2);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn binary_round_trip_bitwise() {
        let mut rng = Rng::new(6);
        let data: Vec<f64> = (0..4 * 3 * 2).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let seq = SequenceData::Pose2D(PoseSequence2D::new(4, 3, data).unwrap());
        let path = tmp("rt.pseq");
        save_sequence(&path, &seq).unwrap();
        let back = load_sequence(&path).unwrap();
        assert_eq!(back, seq);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn text_round_trip_bitwise() {
        let mut rng = Rng::new(7);
        let data: Vec<f64> = (0..3 * 2 * 3).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let seq = SequenceData::Pose3D(Pose3DSequence::new(3, 2, data).unwrap());
        let path = tmp("rt.txt");
        save_sequence(&path, &seq).unwrap();
        let back = load_sequence(&path).unwrap();
        assert_eq!(back, seq);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_binary_names_lengths() {
        let seq = SequenceData::Pose2D(PoseSequence2D::zeros(3, 2));
        let path = tmp("trunc.pseq");
        save_sequence(&path, &seq).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, bytes).unwrap();
        match load_sequence(&path) {
            Err(Error::Parse { detail, .. }) => {
                assert!(detail.contains("96"), "expected byte count in: {detail}");
                assert!(detail.contains("88"), "actual byte count in: {detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn ambiguous_width_needs_header() {
        let path = tmp("ambig.txt");
        fs::write(&path, "1,2,3,4,5,6\n").unwrap();
        assert!(matches!(load_sequence(&path), Err(Error::Parse { .. })));
        fs::write(&path, "# joints=3 dims=2\n1,2,3,4,5,6\n").unwrap();
        let seq = load_sequence(&path).unwrap();
        assert_eq!(seq.joints(), 3);
        assert_eq!(seq.dims(), 2);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn unknown_extension_rejected() {
        assert!(load_sequence(Path::new("poses.dat")).is_err());
    }

    #[test]
    fn ragged_lines_rejected() {
        let path = tmp("ragged.txt");
        fs::write(&path, "0,0\n1,1,1\n").unwrap();
        assert!(matches!(load_sequence(&path), Err(Error::Parse { .. })));
        fs::remove_file(&path).ok();
    }
}
