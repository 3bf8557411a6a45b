//! Raw volumes: `<name>.bin` holding flat x-fastest samples plus a
//! `<name>.json` sidecar `{dims, spacing, dtype, byte_order, frame_id?}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FrameId, Result, VolumeError, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawDataType {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl RawDataType {
    fn size(self) -> usize {
        match self {
            RawDataType::Uint8 => 1,
            RawDataType::Int16 => 2,
            RawDataType::Int32 | RawDataType::Float32 => 4,
            RawDataType::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [i64; 3],
    spacing: [f64; 3],
    dtype: RawDataType,
    byte_order: ByteOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_id: Option<String>,
}

fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bin"))
}

pub fn read_raw(path: &Path) -> Result<VoxelVolume> {
    let (json, bin) = paths(path);
    let side: Sidecar = serde_json::from_slice(&std::fs::read(&json)?)?;
    if side.dims.iter().any(|&d| d < 1) {
        return Err(VolumeError::CorruptHeader(format!("dims {:?}", side.dims)));
    }
    if side.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::CorruptHeader(format!(
            "spacing {:?}",
            side.spacing
        )));
    }
    let dims = side.dims.map(|d| d as usize);
    let n = dims[0] * dims[1] * dims[2];
    let bytes = std::fs::read(&bin)?;
    let width = side.dtype.size();
    if bytes.len() != n * width {
        return Err(VolumeError::CorruptHeader(format!(
            "expected {} bytes, found {}",
            n * width,
            bytes.len()
        )));
    }
    let big = side.byte_order == ByteOrder::Big;
    let values = bytes
        .chunks_exact(width)
        .map(|c| decode(side.dtype, big, c))
        .collect();
    let frame = side
        .frame_id
        .map(FrameId)
        .unwrap_or_else(|| FrameId::from_geometry(dims, side.spacing, [0.0; 3]));
    VoxelVolume::with_frame(dims, side.spacing, values, frame)
}

fn decode(dtype: RawDataType, big: bool, c: &[u8]) -> f64 {
    macro_rules! num {
        ($t:ty) => {{
            let a = c.try_into().unwrap();
            if big {
                <$t>::from_be_bytes(a)
            } else {
                <$t>::from_le_bytes(a)
            }
        }};
    }
    match dtype {
        RawDataType::Uint8 => f64::from(c[0]),
        RawDataType::Int16 => f64::from(num!(i16)),
        RawDataType::Int32 => f64::from(num!(i32)),
        RawDataType::Float32 => f64::from(num!(f32)),
        RawDataType::Float64 => num!(f64),
    }
}

/// Writes `volume` as little-endian raw data plus sidecar. `path` may name
/// either file; both are written.
pub fn write_raw(path: &Path, volume: &VoxelVolume, dtype: RawDataType) -> Result<()> {
    let (json, bin) = paths(path);
    let mut body = Vec::with_capacity(volume.len() * dtype.size());
    for &v in volume.values() {
        match dtype {
            RawDataType::Uint8 => body.push(v.round().clamp(0.0, 255.0) as u8),
            RawDataType::Int16 => body.extend_from_slice(
                &(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes(),
            ),
            RawDataType::Int32 => body.extend_from_slice(
                &(v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32).to_le_bytes(),
            ),
            RawDataType::Float32 => body.extend_from_slice(&(v as f32).to_le_bytes()),
            RawDataType::Float64 => body.extend_from_slice(&v.to_le_bytes()),
        }
    }
    let side = Sidecar {
        dims: volume.dims().map(|d| d as i64),
        spacing: volume.spacing(),
        dtype,
        byte_order: ByteOrder::Little,
        frame_id: Some(volume.frame_id().0.clone()),
    };
    std::fs::write(bin, body)?;
    std::fs::write(json, serde_json::to_vec_pretty(&side)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_endian_int16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.json");
        std::fs::write(
            &p,
            r#"{"dims":[2,1,1],"spacing":[1,1,1],"dtype":"int16","byte_order":"big"}"#,
        )
        .unwrap();
        let mut b = Vec::new();
        b.extend_from_slice(&(-1000i16).to_be_bytes());
        b.extend_from_slice(&(40i16).to_be_bytes());
        std::fs::write(p.with_extension("bin"), b).unwrap();
        let v = read_raw(&p).unwrap();
        assert_eq!(v.values(), &[-1000.0, 40.0]);
    }

    #[test]
    fn short_body_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"dims":[2,2,2],"spacing":[1,1,1],"dtype":"uint8","byte_order":"little"}"#,
        )
        .unwrap();
        std::fs::write(p.with_extension("bin"), [0u8; 7]).unwrap();
        assert!(matches!(read_raw(&p), Err(VolumeError::CorruptHeader(_))));
    }
}
