//! Binary score-matrix cache: magic bytes, instance count, then row-major
//! doubles. Scoring dominates runtime, so solves reuse this file.

use std::fs;
use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::fusion::ScoreMatrix;

const MAGIC: &[u8; 8] = b"CTXSCOR1";

pub fn scores_to_bytes(s: &ScoreMatrix) -> Vec<u8> {
    let n = s.len();
    let mut out = Vec::with_capacity(8 + 8 + n * n * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in s.raw() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_scores(s: &ScoreMatrix, path: &Path) -> Result<()> {
    atomic_write(path, &scores_to_bytes(s))
}

pub fn scores_from_bytes(bytes: &[u8]) -> Result<ScoreMatrix> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "not a score matrix file (bad magic)".into(),
        });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + n * n * 8;
    if bytes.len() != expected {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "score matrix payload is {} bytes, expected {expected} for n={n}",
                bytes.len()
            ),
        });
    }
    let mut data = Vec::with_capacity(n * n);
    for chunk in bytes[16..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    ScoreMatrix::from_rows(n, data)
}

pub fn load_scores(path: &Path) -> Result<ScoreMatrix> {
    scores_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut s = ScoreMatrix::zeros(3);
        s.set(0, 1, 1.0 / 3.0);
        s.set(1, 0, 1.0 / 3.0);
        s.set(2, 2, -0.0);
        let back = scores_from_bytes(&scores_to_bytes(&s)).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.get(2, 2).to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn bad_magic_and_truncation_are_rejected() {
        let s = ScoreMatrix::zeros(2);
        let mut bytes = scores_to_bytes(&s);
        assert!(scores_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(scores_from_bytes(&bytes).is_err());
    }
}
