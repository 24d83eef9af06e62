//! `CAPF` little-endian feature file:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "CAPF"
//! 4       4           u32 version (1)
//! 8       4           u32 rows
//! 12      4           u32 dim
//! 16      rows*dim*4  f32 payload, row-major
//! ..      rows*4      u32 labels
//! ..      rows        u8 origin (0 = real, 1 = synthetic)
//! ```

use std::fs;
use std::path::Path;

use super::matrix::{FeatureMatrix, Origin};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CAPF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode_feature_file(m: &FeatureMatrix) -> Vec<u8> {
    let rows = m.rows();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * m.dim() * 4 + rows * 5);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in m.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend(m.origin().iter().map(|o| o.to_byte()));
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureMatrix> {
    let actual = bytes.len();
    if actual < 4 {
        return Err(Error::Truncated {
            section: "magic",
            offset: 0,
            expected: HEADER_LEN,
            actual,
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            found: bytes[..4].try_into().unwrap(),
        });
    }
    if actual < HEADER_LEN {
        return Err(Error::Truncated {
            section: "header",
            offset: 4,
            expected: HEADER_LEN,
            actual,
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    let rows = u32_at(bytes, 8) as usize;
    let dim = u32_at(bytes, 12) as usize;

    let payload_end = HEADER_LEN + rows * dim * 4;
    let labels_end = payload_end + rows * 4;
    let expected = labels_end + rows;
    for (section, offset, end) in [
        ("payload", HEADER_LEN, payload_end),
        ("labels", payload_end, labels_end),
        ("origin", labels_end, expected),
    ] {
        if actual < end {
            return Err(Error::Truncated {
                section,
                offset,
                expected,
                actual,
            });
        }
    }
    if actual > expected {
        return Err(Error::TrailingBytes { expected, actual });
    }

    let data: Vec<f32> = bytes[HEADER_LEN..payload_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels: Vec<u32> = bytes[payload_end..labels_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let origin = bytes[labels_end..expected]
        .iter()
        .enumerate()
        .map(|(row, &value)| {
            Origin::from_byte(value).ok_or(Error::InvalidOrigin {
                row,
                value,
                offset: labels_end + row,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(rows, dim, data, labels, origin)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes)
}

pub fn write_feature_file(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_file(m)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_three() -> FeatureMatrix {
        FeatureMatrix::new(
            2,
            3,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0, 1],
            vec![Origin::Real, Origin::Synthetic],
        )
        .unwrap()
    }

    fn header(rows: u32, dim: u32) -> Vec<u8> {
        let mut h = MAGIC.to_vec();
        for v in [VERSION, rows, dim] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h
    }

    #[test]
    fn minimal_file() {
        let mut bytes = header(2, 3);
        for i in 0..6 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 1]);
        let m = decode_feature_file(&bytes).unwrap();
        assert_eq!((m.rows(), m.dim()), (2, 3));
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(m.origin(), &[Origin::Real, Origin::Synthetic]);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = header(2, 3);
        bytes.extend_from_slice(&[0u8; 20]);
        match decode_feature_file(&bytes).unwrap_err() {
            Error::Truncated { section, offset, .. } => {
                assert_eq!(section, "payload");
                assert_eq!(offset, HEADER_LEN);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_feature_file(&two_by_three());
        bytes[..4].copy_from_slice(b"NOPE");
        assert!(matches!(
            decode_feature_file(&bytes),
            Err(Error::BadMagic { found }) if &found == b"NOPE"
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_feature_file(&two_by_three());
        bytes.push(0);
        assert!(matches!(decode_feature_file(&bytes), Err(Error::TrailingBytes { .. })));
    }

    #[test]
    fn bad_origin_byte() {
        let mut bytes = encode_feature_file(&two_by_three());
        let n = bytes.len();
        bytes[n - 1] = 7;
        assert!(matches!(
            decode_feature_file(&bytes),
            Err(Error::InvalidOrigin { row: 1, value: 7, .. })
        ));
    }

    #[test]
    fn non_finite_payload() {
        let mut m = encode_feature_file(&two_by_three());
        m[HEADER_LEN + 4 * 4..HEADER_LEN + 5 * 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_feature_file(&m),
            Err(Error::NonFinite { row: 1, col: 1 })
        ));
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode_feature_file(&FeatureMatrix::empty(512));
        assert_eq!(bytes.len(), 16);
        let back = decode_feature_file(&bytes).unwrap();
        assert_eq!((back.rows(), back.dim()), (0, 512));
    }

    #[test]
    fn half_encoding() {
        let m = FeatureMatrix::new(1, 1, vec![0.5], vec![0], vec![Origin::Real]).unwrap();
        let bytes = encode_feature_file(&m);
        assert_eq!(&bytes[16..20], &[0x00, 0x00, 0x00, 0x3F]);
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..12, dim in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data = (0..rows * dim).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let labels = (0..rows).map(|_| rng.random_range(0..100)).collect();
            let origin = (0..rows)
                .map(|_| if rng.random_bool(0.5) { Origin::Real } else { Origin::Synthetic })
                .collect();
            let m = FeatureMatrix::new(rows, dim, data, labels, origin).unwrap();
            let back = decode_feature_file(&encode_feature_file(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
