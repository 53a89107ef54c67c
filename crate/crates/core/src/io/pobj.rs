//! POBJ: per-movie sets of detected-object feature vectors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "POBJ" | u32 version | u32 record count
//! per record:
//!   u16 id length | id bytes (UTF-8) | u32 M | u32 dim | M*dim f32 | u32 crc32
//! ```
//!
//! The checksum is CRC-32 over the record bytes that precede it.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const POBJ_MAGIC: &[u8; 4] = b"POBJ";
pub const POBJ_VERSION: u32 = 1;
pub const POBJ_HEADER_LEN: usize = 12;

/// Object features for one poster, one row per detected object.
#[derive(Debug, Clone, PartialEq)]
pub struct PosterObjectSet {
    pub movie_id: String,
    pub objects: Array2<f32>,
}

impl PosterObjectSet {
    pub fn n_objects(&self) -> usize {
        self.objects.nrows()
    }

    pub fn dim(&self) -> usize {
        self.objects.ncols()
    }
}

/// Shape summary of a well-formed POBJ file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PobjSummary {
    pub records: usize,
    pub dims: Vec<usize>,
    pub max_objects: usize,
}

pub fn encode_pobj(sets: &[PosterObjectSet]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(POBJ_HEADER_LEN);
    out.extend_from_slice(POBJ_MAGIC);
    out.extend_from_slice(&POBJ_VERSION.to_le_bytes());
    let count = u32::try_from(sets.len()).map_err(|_| Error::Invalid("too many POBJ records".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for set in sets {
        let start = out.len();
        let id = set.movie_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Invalid(format!("movie id {:?} is longer than 65535 bytes", set.movie_id)))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(set.n_objects() as u32).to_le_bytes());
        out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
        for x in set.objects.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated: {what} needs {n} bytes, {} remain", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn decode_header(c: &mut Cursor) -> Result<u32> {
    let magic = c.take(4, "magic")?;
    if magic != POBJ_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}"),
        });
    }
    let version = c.u32("version")?;
    if version != POBJ_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    c.u32("record count")
}

fn decode_record(c: &mut Cursor, index: usize) -> Result<PosterObjectSet> {
    let start = c.pos;
    let ctx = |what: &str| format!("record {index} {what}");
    let id_len = c.u16(&ctx("id length"))? as usize;
    let id_bytes = c.take(id_len, &ctx("id"))?;
    let movie_id = std::str::from_utf8(id_bytes)
        .map_err(|_| Error::Format {
            offset: (start + 2) as u64,
            msg: ctx("id is not UTF-8"),
        })?
        .to_string();
    let m = c.u32(&ctx("object count"))? as usize;
    let dim = c.u32(&ctx("dim"))? as usize;
    let n = m.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Format {
        offset: c.pos as u64,
        msg: ctx("payload size overflows"),
    })?;
    let payload = c.take(n, &ctx("features"))?;
    let expected = crc32fast::hash(&c.bytes[start..c.pos]);
    let crc_at = c.pos;
    let crc = c.u32(&ctx("checksum"))?;
    if crc != expected {
        return Err(Error::Format {
            offset: crc_at as u64,
            msg: format!("record {index} ({movie_id:?}) checksum {crc:#010x} != computed {expected:#010x}"),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(PosterObjectSet {
        movie_id,
        objects: Array2::from_shape_vec((m, dim), values).expect("sized from header"),
    })
}

pub fn decode_pobj(bytes: &[u8]) -> Result<Vec<PosterObjectSet>> {
    let mut c = Cursor { bytes, pos: 0 };
    let count = decode_header(&mut c)? as usize;
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        sets.push(decode_record(&mut c, i)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Format {
            offset: c.pos as u64,
            msg: format!("{} trailing bytes after {count} records", bytes.len() - c.pos),
        });
    }
    Ok(sets)
}

/// Check structure and checksums without keeping the features.
pub fn validate_pobj(bytes: &[u8]) -> Result<PobjSummary> {
    let sets = decode_pobj(bytes)?;
    let mut dims: Vec<usize> = sets.iter().map(PosterObjectSet::dim).collect();
    dims.sort_unstable();
    dims.dedup();
    Ok(PobjSummary {
        records: sets.len(),
        dims,
        max_objects: sets.iter().map(PosterObjectSet::n_objects).max().unwrap_or(0),
    })
}

pub fn write_pobj(path: &Path, sets: &[PosterObjectSet]) -> Result<()> {
    std::fs::write(path, encode_pobj(sets)?).map_err(|e| Error::io(path, e))
}

pub fn read_pobj(path: &Path) -> Result<Vec<PosterObjectSet>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pobj(&bytes)
}
