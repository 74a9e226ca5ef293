//! TMNF feature files: one video's `h × d` frame features.
//!
//! Layout, all little-endian: `b"TMNF"`, `u32` version (1), `u32` rows,
//! `u32` cols, then `rows · cols` IEEE-754 `f32` values, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::DenseMatrix;
use crate::temporal::FrameFeatureSequence;

pub const MAGIC: &[u8; 4] = b"TMNF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Appends one matrix block (header and payload) to `out`.
pub fn encode_matrix(matrix: &DenseMatrix<f32>, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 4 * matrix.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for v in matrix.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes one matrix block starting at `bytes[*offset]`, advancing the
/// offset past it. `base` is added to reported error offsets.
pub fn decode_matrix(bytes: &[u8], offset: &mut usize, base: u64) -> Result<DenseMatrix<f32>> {
    let start = *offset;
    let err = |at: usize, reason: String| Error::Format {
        offset: base + at as u64,
        reason,
    };
    if bytes.len() < start + HEADER_LEN {
        return Err(err(
            bytes.len(),
            format!("truncated header: need {HEADER_LEN} bytes"),
        ));
    }
    if &bytes[start..start + 4] != MAGIC {
        return Err(err(start, "bad magic, expected TMNF".into()));
    }
    let word = |i: usize| {
        let at = start + 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
    };
    let version = word(0);
    if version != VERSION {
        return Err(err(start + 4, format!("unsupported version {version}")));
    }
    let (rows, cols) = (word(1) as usize, word(2) as usize);
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err(start + 8, format!("dimensions {rows}x{cols} overflow")))?;
    let body = start + HEADER_LEN;
    if bytes.len() < body + payload {
        return Err(err(
            bytes.len(),
            format!("truncated payload: {rows}x{cols} needs {payload} bytes"),
        ));
    }
    let values = bytes[body..body + payload]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    *offset = body + payload;
    DenseMatrix::from_vec(rows, cols, values)
}

pub fn encode_features(seq: &FrameFeatureSequence<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    encode_matrix(seq.frames(), &mut out);
    out
}

pub fn decode_features(video_id: &str, bytes: &[u8]) -> Result<FrameFeatureSequence<f32>> {
    let mut offset = 0;
    let frames = decode_matrix(bytes, &mut offset, 0)?;
    if offset != bytes.len() {
        return Err(Error::Format {
            offset: offset as u64,
            reason: format!("{} trailing bytes", bytes.len() - offset),
        });
    }
    FrameFeatureSequence::new(video_id, frames)
}

pub fn write_features(path: &Path, seq: &FrameFeatureSequence<f32>) -> Result<()> {
    let bytes = encode_features(seq);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Loads a feature file; the video id is the file stem.
pub fn load_features(path: &Path) -> Result<FrameFeatureSequence<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_features(&id, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(h: usize, d: usize) -> FrameFeatureSequence<f32> {
        let values = (0..h * d).map(|i| i as f32 * 0.25 - 0.5).collect();
        FrameFeatureSequence::new("v", DenseMatrix::from_vec(h, d, values).unwrap()).unwrap()
    }

    #[test]
    fn size_matches_layout() {
        let bytes = encode_features(&seq(2, 3));
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 24);
        assert_eq!(&bytes[..4], b"TMNF");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip_7.tmnf");
        let original = seq(4, 5);
        write_features(&path, &original).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(loaded.frames(), original.frames());
        assert_eq!(loaded.video_id, "clip_7");
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut bytes = encode_features(&seq(2, 3));
        bytes.truncate(30);
        match decode_features("v", &bytes).unwrap_err() {
            Error::Format { offset, reason } => {
                assert_eq!(offset, 30);
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode_features("v", &bytes[..10]), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_features(&seq(2, 2));
        bytes[0] = b'X';
        assert!(matches!(decode_features("v", &bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = encode_features(&seq(2, 2));
        bytes[4] = 2;
        assert!(matches!(decode_features("v", &bytes), Err(Error::Format { offset: 4, .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(h in 2usize..6, d in 1usize..5, bits in prop::collection::vec(any::<u32>(), 30)) {
            let values: Vec<f32> = (0..h * d).map(|i| f32::from_bits(bits[i % bits.len()])).collect();
            let s = FrameFeatureSequence::new("v", DenseMatrix::from_vec(h, d, values.clone()).unwrap()).unwrap();
            let back = decode_features("v", &encode_features(&s)).unwrap();
            let got: Vec<u32> = back.frames().values().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
