use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, MAX_NDIM};

pub const FTEN_MAGIC: &[u8; 4] = b"FTEN";
pub const FTEN_VERSION: u16 = 1;

/// Header (`FTEN`, version u16, ndim u16, extents u64...) followed by
/// little-endian f64 payload in row-major order.
pub fn encode_tensor(x: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * x.ndim() + 8 * x.len());
    out.extend_from_slice(FTEN_MAGIC);
    out.extend_from_slice(&FTEN_VERSION.to_le_bytes());
    out.extend_from_slice(&(x.ndim() as u16).to_le_bytes());
    for &e in x.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DenseTensor> {
    let fail = |msg: String| Error::Format(format!("FTEN: {msg}"));
    if bytes.len() < 8 {
        return Err(fail(format!("header truncated at {} bytes", bytes.len())));
    }
    if &bytes[..4] != FTEN_MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FTEN_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let ndim = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(fail(format!("ndim {ndim} outside 1..={MAX_NDIM}")));
    }
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(fail("extent list truncated".into()));
    }
    let shape: Vec<usize> = bytes[8..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) as usize)
        .collect();
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| fail(format!("extents {shape:?} overflow")))?;
    if bytes.len() - header != len {
        return Err(fail(format!(
            "payload is {} bytes, extents {shape:?} need {len}",
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseTensor::new(shape, data)
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    decode_tensor(&super::read_bytes(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_tensor(path: &Path, x: &DenseTensor) -> Result<()> {
    super::write_atomic(path, &encode_tensor(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let x = DenseTensor::new(vec![2, 1], vec![1.5, -0.0]).unwrap();
        let b = encode_tensor(&x);
        assert_eq!(&b[..4], b"FTEN");
        assert_eq!(&b[4..8], &[1, 0, 2, 0]);
        assert_eq!(b.len(), 8 + 16 + 16);
        let back = decode_tensor(&b).unwrap();
        assert_eq!(back.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let x = DenseTensor::zeros(&[2, 3]).unwrap();
        let good = encode_tensor(&x);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_tensor(&bad_magic), Err(Error::Format(_))));
        assert!(matches!(decode_tensor(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_tensor(&good[..5]), Err(Error::Format(_))));
        let mut too_deep = good.clone();
        too_deep[6] = 9;
        assert!(matches!(decode_tensor(&too_deep), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shape in proptest::collection::vec(1usize..4, 1..=8),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let mut state = seed;
            let data: Vec<f64> = (0..n)
                .map(|_| {
                    state = crate::seed::derive(state, &[7]);
                    f64::from_bits(state & !(0x7ffu64 << 52) | (((state >> 52) % 2046 + 1) << 52))
                })
                .collect();
            let x = DenseTensor::new(shape, data).unwrap();
            let back = decode_tensor(&encode_tensor(&x)).unwrap();
            prop_assert_eq!(back.shape(), x.shape());
            for (a, b) in back.data().iter().zip(x.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
