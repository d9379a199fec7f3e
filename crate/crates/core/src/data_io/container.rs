//! The `STEM` container: a fixed header followed by row-major little-endian
//! `f32` rows.
//!
//! ```text
//! magic "STEM" | version u16 | feat_dim u32 | segment_len u32 | stride u32 | num_segments u32 | rows...
//! ```
//!
//! Row `i` describes frames `[i * stride, i * stride + segment_len)`.

use std::path::Path;

use crate::error::{Error, Result};

pub const STEM_MAGIC: &[u8; 4] = b"STEM";
pub const STEM_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub feat_dim: u32,
    pub segment_len: u32,
    pub stride: u32,
    pub num_segments: u32,
}

impl StreamHeader {
    /// Frames spanned by all rows.
    pub fn num_frames(&self) -> u64 {
        if self.num_segments == 0 {
            0
        } else {
            (self.num_segments as u64 - 1) * self.stride as u64 + self.segment_len as u64
        }
    }
}

/// A decoded feature stream: header plus `num_segments` rows of `feat_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub header: StreamHeader,
    pub data: Vec<f32>,
}

impl FeatureStream {
    pub fn new(feat_dim: usize, segment_len: usize, stride: usize, data: Vec<f32>) -> Result<Self> {
        if feat_dim == 0 || segment_len == 0 || stride == 0 {
            return Err(Error::Config("feature stream dimensions must be positive".into()));
        }
        if data.len() % feat_dim != 0 {
            return Err(Error::Shape(format!("{} values is not a multiple of feat_dim {feat_dim}", data.len())));
        }
        let header = StreamHeader {
            feat_dim: feat_dim as u32,
            segment_len: segment_len as u32,
            stride: stride as u32,
            num_segments: (data.len() / feat_dim) as u32,
        };
        Ok(Self { header, data })
    }

    /// Builds a stream from rows of equal length.
    pub fn from_rows<I, R>(feat_dim: usize, segment_len: usize, stride: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f32]>,
    {
        let mut data = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            if row.len() != feat_dim {
                return Err(Error::Shape(format!("row {i} has {} values, expected {feat_dim}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::new(feat_dim, segment_len, stride, data)
    }

    pub fn feat_dim(&self) -> usize {
        self.header.feat_dim as usize
    }

    pub fn len(&self) -> usize {
        self.header.num_segments as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.feat_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.feat_dim())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(STEM_MAGIC);
        out.extend_from_slice(&STEM_VERSION.to_le_bytes());
        for v in [self.header.feat_dim, self.header.segment_len, self.header.stride, self.header.num_segments] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(format!("header needs {HEADER_LEN} bytes, found {}", bytes.len())));
        }
        if &bytes[..4] != STEM_MAGIC {
            return Err(Error::Schema(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != STEM_VERSION {
            return Err(Error::Version { found: version as u32, expected: STEM_VERSION as u32 });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap());
        let header = StreamHeader { feat_dim: word(0), segment_len: word(1), stride: word(2), num_segments: word(3) };
        if header.feat_dim == 0 || header.segment_len == 0 || header.stride == 0 {
            return Err(Error::Schema(format!("invalid header {header:?}")));
        }
        let expected = header.feat_dim as usize * header.num_segments as usize * 4;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::Truncated(format!("payload has {} bytes, header implies {expected}", payload.len())));
        }
        if payload.len() > expected {
            return Err(Error::Shape(format!(
                "payload has {} bytes but header implies {expected} (feat_dim {})",
                payload.len(),
                header.feat_dim
            )));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, data })
    }
}

/// One spatio-temporal embedding and the first frame of its segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSegment {
    pub start_frame: u64,
    pub values: Vec<f32>,
}

pub fn read_stream(path: &Path) -> Result<FeatureStream> {
    FeatureStream::from_bytes(&std::fs::read(path)?)
}

pub fn write_stream(path: &Path, stream: &FeatureStream) -> Result<()> {
    super::write_atomic(path, &stream.to_bytes())
}

/// Reads an embedding file as segments in ascending start frame.
pub fn read_embeddings(path: &Path) -> Result<(StreamHeader, Vec<EmbeddingSegment>)> {
    let stream = read_stream(path)?;
    let stride = stream.header.stride as u64;
    let segments = stream
        .rows()
        .enumerate()
        .map(|(i, row)| EmbeddingSegment { start_frame: i as u64 * stride, values: row.to_vec() })
        .collect();
    Ok((stream.header, segments))
}
