//! Binary named-tensor archive.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "SGAN" | version | tensor count
//! per tensor: name length | name bytes | rank | dims... | f32 values
//! metadata length | metadata (canonical JSON)
//! CRC32 of everything above
//! ```

use std::path::Path;

use crate::error::{bail, Error, Result};
use crate::numeric::Tensor;

pub const MAGIC: &[u8; 4] = b"SGAN";
pub const VERSION: u32 = 1;

/// Tensors in file order plus the metadata text.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub tensors: Vec<(String, Tensor)>,
    pub meta: String,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Argument(format!("{v} does not fit the archive format")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Archive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut buf, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(&mut buf, name.len())?;
            buf.extend_from_slice(name.as_bytes());
            put_u32(&mut buf, t.shape().len())?;
            for &d in t.shape() {
                put_u32(&mut buf, d)?;
            }
            for &x in t.data() {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        put_u32(&mut buf, self.meta.len())?;
        buf.extend_from_slice(self.meta.as_bytes());
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            bail!(CheckpointCorrupt, "missing SGAN header");
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        if bytes.len() < 16 {
            bail!(CheckpointCorrupt, "file is truncated");
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            bail!(CheckpointCorrupt, "checksum mismatch (truncated or damaged file)");
        }
        let mut r = Reader { buf: body, pos: 8 };
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()?;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let Some(n) = n else {
                bail!(CheckpointCorrupt, "tensor `{name}` is too large");
            };
            let raw = r.take(n.saturating_mul(4))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
            tensors.push((name, t));
        }
        let meta = r.string()?;
        if r.pos != body.len() {
            bail!(CheckpointCorrupt, "trailing bytes after metadata");
        }
        Ok(Self { tensors, meta })
    }

    /// Writes atomically: a sibling temp file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() - self.pos {
            bail!(CheckpointCorrupt, "unexpected end of data");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CheckpointCorrupt("name is not UTF-8".into()))
    }
}
