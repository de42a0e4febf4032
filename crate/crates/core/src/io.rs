//! Binary frame files.
//!
//! Layout (little-endian):
//!
//! ```text
//! header   b"TGPC"  u32 version (=1)  u32 frame_count
//! frame    u32 index  f64 timestamp  u32 point_count  point_count * (f32 x, f32 y, f32 z)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{check_sequence, Frame, Point3, PointCloud};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TGPC";
pub const VERSION: u32 = 1;

const HEADER_LEN: usize = 12;
const FRAME_HEADER_LEN: usize = 16;
const POINT_LEN: usize = 12;

/// Serializes frames into the binary frame format.
pub fn encode_frames(frames: &[Frame]) -> Vec<u8> {
    let payload: usize = frames
        .iter()
        .map(|f| FRAME_HEADER_LEN + POINT_LEN * f.cloud.len())
        .sum();
    let mut buf = Vec::with_capacity(HEADER_LEN + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        buf.extend_from_slice(&f.index.to_le_bytes());
        buf.extend_from_slice(&f.timestamp.to_le_bytes());
        buf.extend_from_slice(&(f.cloud.len() as u32).to_le_bytes());
        for p in f.cloud.iter() {
            buf.extend_from_slice(&p.x.to_le_bytes());
            buf.extend_from_slice(&p.y.to_le_bytes());
            buf.extend_from_slice(&p.z.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TruncatedRecord {
                offset: self.pos,
                detail: format!(
                    "{what} needs {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses the binary frame format.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<Frame>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedRecord {
            offset: 0,
            detail: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadHeader(format!("magic {:?}", &bytes[..4])));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::BadHeader(format!("unsupported version {version}")));
    }
    let count = r.u32("frame count")? as usize;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let index = r.u32("frame index")?;
        let timestamp = r.f64("timestamp")?;
        let n = r.u32("point count")? as usize;
        let raw = r.take(
            n.checked_mul(POINT_LEN).ok_or_else(|| Error::TruncatedRecord {
                offset: r.pos,
                detail: "point count overflows".into(),
            })?,
            "point block",
        )?;
        if !timestamp.is_finite() {
            return Err(Error::NonFiniteValue {
                frame: index,
                point: usize::MAX,
            });
        }
        let mut cloud = PointCloud::with_capacity(n);
        for (i, rec) in raw.chunks_exact(POINT_LEN).enumerate() {
            let c = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            let p = Point3::new(c(0), c(1), c(2));
            if !p.is_finite() {
                return Err(Error::NonFiniteValue { frame: index, point: i });
            }
            cloud.push(p);
        }
        frames.push(Frame::new(index, timestamp, cloud));
    }
    if r.pos != bytes.len() {
        return Err(Error::TruncatedRecord {
            offset: r.pos,
            detail: format!("{} trailing bytes after last frame", bytes.len() - r.pos),
        });
    }
    check_sequence(&frames)?;
    Ok(frames)
}

pub fn save_frames(frames: &[Frame], path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&encode_frames(frames))?;
    Ok(())
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_frames(&bytes)
}
