//! NIfTI-1 single-file (`n+1`) subset: 3D scalar images, optional gzip.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{FrameId, Result, VolumeError, VoxelVolume};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const FRAME_PREFIX: &str = "frame:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDataType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl NiftiDataType {
    fn code(self) -> i16 {
        match self {
            NiftiDataType::U8 => 2,
            NiftiDataType::I16 => 4,
            NiftiDataType::I32 => 8,
            NiftiDataType::F32 => 16,
            NiftiDataType::F64 => 64,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => NiftiDataType::U8,
            4 => NiftiDataType::I16,
            8 => NiftiDataType::I32,
            16 => NiftiDataType::F32,
            64 => NiftiDataType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            NiftiDataType::U8 => 1,
            NiftiDataType::I16 => 2,
            NiftiDataType::I32 | NiftiDataType::F32 => 4,
            NiftiDataType::F64 => 8,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

struct Bytes<'a> {
    buf: &'a [u8],
    big: bool,
}

impl Bytes<'_> {
    fn arr<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[at..at + N]);
        a
    }
    fn i16(&self, at: usize) -> i16 {
        let a = self.arr::<2>(at);
        if self.big {
            i16::from_be_bytes(a)
        } else {
            i16::from_le_bytes(a)
        }
    }
    fn i32(&self, at: usize) -> i32 {
        let a = self.arr::<4>(at);
        if self.big {
            i32::from_be_bytes(a)
        } else {
            i32::from_le_bytes(a)
        }
    }
    fn f32(&self, at: usize) -> f32 {
        let a = self.arr::<4>(at);
        if self.big {
            f32::from_be_bytes(a)
        } else {
            f32::from_le_bytes(a)
        }
    }
    fn f64(&self, at: usize) -> f64 {
        let a = self.arr::<8>(at);
        if self.big {
            f64::from_be_bytes(a)
        } else {
            f64::from_le_bytes(a)
        }
    }
}

/// Reads a NIfTI-1 file. `scl_slope`/`scl_inter` are applied when the slope
/// is finite and nonzero. Rotations in qform/sform are ignored with a warning.
pub fn read_nifti(path: &Path) -> Result<VoxelVolume> {
    let file = BufReader::new(File::open(path)?);
    let mut buf = Vec::new();
    if is_gz(path) {
        GzDecoder::new(file).read_to_end(&mut buf)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut buf)?;
    }
    if buf.len() < HEADER_SIZE {
        return Err(VolumeError::CorruptHeader("file shorter than header".into()));
    }
    let big = match (
        i32::from_le_bytes(buf[0..4].try_into().unwrap()),
        i32::from_be_bytes(buf[0..4].try_into().unwrap()),
    ) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(VolumeError::UnsupportedFormat("not a NIfTI-1 header".into())),
    };
    if &buf[344..347] != b"n+1" && &buf[344..347] != b"ni1" {
        return Err(VolumeError::UnsupportedFormat("bad NIfTI-1 magic".into()));
    }
    let b = Bytes { buf: &buf, big };
    let ndim = b.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(VolumeError::CorruptHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate().take(ndim.min(3) as usize) {
        let v = b.i16(42 + 2 * a as usize);
        if v < 1 {
            return Err(VolumeError::CorruptHeader(format!("dim[{}] = {v}", a + 1)));
        }
        *d = v as usize;
    }
    for a in 3..ndim as usize {
        if b.i16(42 + 2 * a) > 1 {
            return Err(VolumeError::UnsupportedFormat(
                "only 3D scalar images are supported".into(),
            ));
        }
    }
    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        *s = f64::from(b.f32(80 + 4 * a)).abs();
        if a as i16 >= ndim && *s == 0.0 {
            *s = 1.0;
        }
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolumeError::CorruptHeader(format!("pixdim {spacing:?}")));
    }
    let dtype = NiftiDataType::from_code(b.i16(70)).ok_or_else(|| {
        VolumeError::UnsupportedFormat(format!("datatype code {}", b.i16(70)))
    })?;
    let vox_offset = b.f32(108);
    let offset = if vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        DATA_OFFSET
    };
    let slope = f64::from(b.f32(112));
    let inter = f64::from(b.f32(116));
    let scaled = slope.is_finite() && slope != 0.0;

    let sform_code = b.i16(254);
    let srow: Vec<f32> = (0..12).map(|k| b.f32(280 + 4 * k)).collect();
    let origin = if sform_code > 0 {
        let off_diag = [1usize, 2, 4, 6, 8, 9]
            .iter()
            .any(|&k| srow[k].abs() > 1e-6 * srow[0].abs().max(1.0));
        if off_diag {
            log::warn!("{}: sform rotation ignored", path.display());
        }
        [f64::from(srow[3]), f64::from(srow[7]), f64::from(srow[11])]
    } else {
        [
            f64::from(b.f32(268)),
            f64::from(b.f32(272)),
            f64::from(b.f32(276)),
        ]
    };

    let n = dims[0] * dims[1] * dims[2];
    let need = offset + n * dtype.size();
    if buf.len() < need {
        return Err(VolumeError::CorruptHeader(format!(
            "expected {need} bytes, found {}",
            buf.len()
        )));
    }
    let data = Bytes {
        buf: &buf[offset..need],
        big,
    };
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let raw = match dtype {
            NiftiDataType::U8 => f64::from(data.buf[i]),
            NiftiDataType::I16 => f64::from(data.i16(2 * i)),
            NiftiDataType::I32 => f64::from(data.i32(4 * i)),
            NiftiDataType::F32 => f64::from(data.f32(4 * i)),
            NiftiDataType::F64 => data.f64(8 * i),
        };
        let v = if scaled { raw * slope + inter } else { raw };
        if !v.is_finite() {
            return Err(VolumeError::NonFiniteData(i));
        }
        values.push(v);
    }

    let descrip = &buf[148..228];
    let end = descrip.iter().position(|&c| c == 0).unwrap_or(descrip.len());
    let descrip = String::from_utf8_lossy(&descrip[..end]);
    let frame = match descrip.strip_prefix(FRAME_PREFIX) {
        Some(id) if !id.is_empty() => FrameId(id.to_string()),
        _ => FrameId::from_geometry(dims, spacing, origin),
    };
    VoxelVolume::with_frame(dims, spacing, values, frame)
}

/// Writes a little-endian NIfTI-1 file (gzip when the name ends in `.gz`).
///
/// Values are cast to `dtype`; integer types round to nearest. The frame id
/// is stored in `descrip` when it fits.
pub fn write_nifti(path: &Path, volume: &VoxelVolume, dtype: NiftiDataType) -> Result<()> {
    let dims = volume.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(VolumeError::UnsupportedFormat(
            "dimension exceeds NIfTI-1 limit".into(),
        ));
    }
    let sp = volume.spacing();
    let mut h = vec![0u8; DATA_OFFSET];
    let put = |h: &mut Vec<u8>, at: usize, bytes: &[u8]| {
        h[at..at + bytes.len()].copy_from_slice(bytes);
    };
    put(&mut h, 0, &348i32.to_le_bytes());
    put(&mut h, 38, b"r");
    put(&mut h, 40, &3i16.to_le_bytes());
    for a in 0..3 {
        put(&mut h, 42 + 2 * a, &(dims[a] as i16).to_le_bytes());
    }
    for a in 3..7 {
        put(&mut h, 42 + 2 * a, &1i16.to_le_bytes());
    }
    put(&mut h, 70, &dtype.code().to_le_bytes());
    put(&mut h, 72, &((dtype.size() * 8) as i16).to_le_bytes());
    put(&mut h, 76, &1f32.to_le_bytes());
    for a in 0..3 {
        put(&mut h, 80 + 4 * a, &(sp[a] as f32).to_le_bytes());
    }
    put(&mut h, 108, &(DATA_OFFSET as f32).to_le_bytes());
    put(&mut h, 112, &1f32.to_le_bytes());
    put(&mut h, 123, &[2u8]); // mm
    let frame = format!("{FRAME_PREFIX}{}", volume.frame_id());
    if frame.len() < 80 {
        put(&mut h, 148, frame.as_bytes());
    }
    put(&mut h, 254, &1i16.to_le_bytes());
    put(&mut h, 280, &(sp[0] as f32).to_le_bytes());
    put(&mut h, 296 + 4, &(sp[1] as f32).to_le_bytes());
    put(&mut h, 312 + 8, &(sp[2] as f32).to_le_bytes());
    put(&mut h, 344, b"n+1\0");

    let mut body = Vec::with_capacity(volume.len() * dtype.size());
    for &v in volume.values() {
        match dtype {
            NiftiDataType::U8 => body.push(v.round().clamp(0.0, 255.0) as u8),
            NiftiDataType::I16 => body.extend_from_slice(
                &(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes(),
            ),
            NiftiDataType::I32 => body.extend_from_slice(
                &(v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32).to_le_bytes(),
            ),
            NiftiDataType::F32 => body.extend_from_slice(&(v as f32).to_le_bytes()),
            NiftiDataType::F64 => body.extend_from_slice(&v.to_le_bytes()),
        }
    }

    let file = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&h)?;
        enc.write_all(&body)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(&h)?;
        file.write_all(&body)?;
        file.flush()?;
    }
    Ok(())
}
