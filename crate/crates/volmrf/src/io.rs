//! The volume container format and CSV score emission.
//!
//! A volume file is a single JSON header line followed by a raw
//! little-endian payload:
//!
//! ```text
//! {"magic":"volmrf","version":1,"dtype":"f32le","dims":[64,64,8],"channels":3,"spacing_mm":[1.0,1.0,1.3]}
//! <x * y * z * channels * sizeof(dtype) payload bytes>
//! ```
//!
//! Payload order is x fastest, then y, then z, channel outermost.
//! Probabilities and intensities use `f32le`, labels `u16le` with
//! `channels = 1`. Loading validates every type invariant, so a volume read
//! back from disk is guaranteed NaN-free and in range.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::metrics::StructureScore;
use crate::volume::{IntensityVolume, LabelVolume, ProbabilityVolume};

pub const MAGIC: &str = "volmrf";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F32: &str = "f32le";
const DTYPE_U16: &str = "u16le";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VolumeHeader {
    magic: String,
    version: u32,
    dtype: String,
    dims: [usize; 3],
    channels: usize,
    spacing_mm: [f64; 3],
}

/// A volume of any of the three stored kinds.
#[derive(Debug, Clone)]
pub enum Volume {
    Probability(ProbabilityVolume),
    Intensity(IntensityVolume),
    Label(LabelVolume),
}

impl Volume {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Volume::Probability(_) => "probability volume",
            Volume::Intensity(_) => "intensity volume",
            Volume::Label(_) => "label volume",
        }
    }
}

fn dtype_size(dtype: &str) -> Option<usize> {
    match dtype {
        DTYPE_F32 => Some(4),
        DTYPE_U16 => Some(2),
        _ => None,
    }
}

/// Reads and type-dispatches a volume file, validating all invariants.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io(path, e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format(format!(
            "{}: missing header line",
            path.display()
        )));
    }
    let header: VolumeHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;

    if header.magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: unrecognized magic {:?}",
            path.display(),
            header.magic
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            header.version
        )));
    }
    let Some(elem_size) = dtype_size(&header.dtype) else {
        return Err(Error::Format(format!(
            "{}: unknown dtype {:?}",
            path.display(),
            header.dtype
        )));
    };
    if header.channels == 0 {
        return Err(Error::Format(format!(
            "{}: channel count must be >= 1",
            path.display()
        )));
    }
    let [x, y, z] = header.dims;
    let dims = Dims::new(x, y, z, header.spacing_mm)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;

    let expected = dims
        .voxel_count()
        .checked_mul(header.channels)
        .and_then(|v| v.checked_mul(elem_size))
        .ok_or_else(|| {
            Error::Format(format!("{}: payload size overflows", path.display()))
        })?;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    if payload.len() != expected {
        return Err(Error::Truncation {
            expected: expected as u64,
            found: payload.len() as u64,
        });
    }

    match (header.dtype.as_str(), header.channels) {
        (DTYPE_U16, 1) => {
            let data = payload
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect();
            Ok(Volume::Label(LabelVolume::new(dims, data)?))
        }
        (DTYPE_U16, _) => Err(Error::Format(format!(
            "{}: label volumes are single-channel, header declares {}",
            path.display(),
            header.channels
        ))),
        (DTYPE_F32, 1) => {
            let data = decode_f32(&payload);
            Ok(Volume::Intensity(IntensityVolume::new(dims, data)?))
        }
        (DTYPE_F32, channels) => {
            let data = decode_f32(&payload);
            Ok(Volume::Probability(ProbabilityVolume::new(
                dims, channels, data,
            )?))
        }
        _ => unreachable!("dtype already validated"),
    }
}

fn decode_f32(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect()
}

pub fn read_probability(path: impl AsRef<Path>) -> Result<ProbabilityVolume> {
    match read_volume(&path)? {
        Volume::Probability(v) => Ok(v),
        other => Err(wrong_kind(path.as_ref(), "probability volume", &other)),
    }
}

pub fn read_intensity(path: impl AsRef<Path>) -> Result<IntensityVolume> {
    match read_volume(&path)? {
        Volume::Intensity(v) => Ok(v),
        other => Err(wrong_kind(path.as_ref(), "intensity volume", &other)),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_volume(&path)? {
        Volume::Label(v) => Ok(v),
        other => Err(wrong_kind(path.as_ref(), "label volume", &other)),
    }
}

fn wrong_kind(path: &Path, wanted: &str, got: &Volume) -> Error {
    Error::Format(format!(
        "{}: expected a {wanted}, found a {}",
        path.display(),
        got.kind_name()
    ))
}

fn write_parts(path: &Path, header: &VolumeHeader, payload: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header_json = serde_json::to_string(header).expect("header serialization cannot fail");
    (|| -> std::io::Result<()> {
        w.write_all(header_json.as_bytes())?;
        w.write_all(b"\n")?;
        w.write_all(payload)?;
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

fn header_for(dims: &Dims, dtype: &str, channels: usize) -> VolumeHeader {
    VolumeHeader {
        magic: MAGIC.to_string(),
        version: FORMAT_VERSION,
        dtype: dtype.to_string(),
        dims: dims.extent(),
        channels,
        spacing_mm: dims.spacing_mm(),
    }
}

fn encode_f32(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

pub fn write_probability(vol: &ProbabilityVolume, path: impl AsRef<Path>) -> Result<()> {
    write_parts(
        path.as_ref(),
        &header_for(vol.dims(), DTYPE_F32, vol.channels()),
        &encode_f32(vol.data()),
    )
}

pub fn write_intensity(vol: &IntensityVolume, path: impl AsRef<Path>) -> Result<()> {
    write_parts(
        path.as_ref(),
        &header_for(vol.dims(), DTYPE_F32, 1),
        &encode_f32(vol.data()),
    )
}

pub fn write_labels(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(vol.data().len() * 2);
    for &l in vol.data() {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    write_parts(path.as_ref(), &header_for(vol.dims(), DTYPE_U16, 1), &bytes)
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    match vol {
        Volume::Probability(v) => write_probability(v, path),
        Volume::Intensity(v) => write_intensity(v, path),
        Volume::Label(v) => write_labels(v, path),
    }
}

/// Stable CSV: fixed column order, six decimals, `NA` for undefined
/// distances.
pub fn write_scores_csv<W: Write>(scores: &[StructureScore], mut w: W) -> std::io::Result<()> {
    writeln!(w, "label,dice,hausdorff_mm,contour_mean_mm")?;
    for s in scores {
        writeln!(
            w,
            "{},{:.6},{},{}",
            s.label,
            s.dice,
            fmt_distance(s.hausdorff_mm),
            fmt_distance(s.contour_mean_mm)
        )?;
    }
    Ok(())
}

pub fn scores_csv_string(scores: &[StructureScore]) -> String {
    let mut buf = Vec::new();
    write_scores_csv(scores, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

fn fmt_distance(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    }
}
