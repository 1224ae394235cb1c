//! `BSG1` tensor and `BSCK` checkpoint containers.
//!
//! ```text
//! BSG1: "BSG1" | dtype u8 (0 = f32 LE, 1 = u8) | ndims u8 | ndims × u32 LE | payload
//! BSCK: "BSCK" | count u32 LE | count × (name_len u16 LE | name | BSG1)
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::ParameterSet;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const BSG1_MAGIC: &[u8; 4] = b"BSG1";
pub const BSCK_MAGIC: &[u8; 4] = b"BSCK";

#[derive(Debug, Clone, PartialEq)]
pub enum Bsg1Data {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl Bsg1Data {
    pub fn dtype(&self) -> u8 {
        match self {
            Bsg1Data::F32(_) => 0,
            Bsg1Data::U8(_) => 1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Bsg1Data::F32(v) => v.len(),
            Bsg1Data::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array as stored in a BSG1 container.
#[derive(Debug, Clone, PartialEq)]
pub struct Bsg1Array {
    pub dims: Vec<u32>,
    pub data: Bsg1Data,
}

impl Bsg1Array {
    pub fn new(dims: Vec<u32>, data: Bsg1Data) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("{} dims exceed the 255 limit", dims.len())));
        }
        let numel: usize = dims.iter().map(|&d| d as usize).product();
        if numel != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} hold {numel} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Bsg1Array { dims, data })
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Self {
        Bsg1Array {
            dims: t.shape().dims().map(|d| d as u32).to_vec(),
            data: Bsg1Data::F32(t.data().to_vec()),
        }
    }

    /// Stores a {0, 1} tensor as bytes.
    pub fn from_mask(t: &Tensor<f32>) -> Result<Self> {
        let bytes = t
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0u8),
                1.0 => Ok(1u8),
                _ => Err(Error::Data(format!("mask value {v} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Bsg1Array {
            dims: t.shape().dims().map(|d| d as u32).to_vec(),
            data: Bsg1Data::U8(bytes),
        })
    }

    /// Converts to a rank-4 tensor, left-padding fewer dims with ones.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        if self.dims.len() > 4 {
            return Err(Error::Format(format!(
                "{} dims cannot map onto an (n, c, h, w) tensor",
                self.dims.len()
            )));
        }
        let mut d = [1usize; 4];
        for (slot, &v) in d[4 - self.dims.len()..].iter_mut().zip(&self.dims) {
            *slot = v as usize;
        }
        let shape = Shape::new(d[0], d[1], d[2], d[3])
            .map_err(|_| Error::Format(format!("dims {:?} contain a zero extent", self.dims)))?;
        let data = match &self.data {
            Bsg1Data::F32(v) => v.clone(),
            Bsg1Data::U8(v) => v.iter().map(|&b| b as f32).collect(),
        };
        Tensor::from_vec(shape, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(BSG1_MAGIC);
        out.push(self.data.dtype());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            Bsg1Data::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Bsg1Data::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Decodes one container from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != BSG1_MAGIC {
            return Err(Error::Format(format!("bad BSG1 magic {magic:?}")));
        }
        let dtype = r.u8("dtype")?;
        let elem = match dtype {
            0 => 4,
            1 => 1,
            other => {
                return Err(Error::Format(format!(
                    "unknown BSG1 dtype {other} (expected 0 = f32 or 1 = u8)"
                )))
            }
        };
        let ndims = r.u8("ndims")? as usize;
        let dims = (0..ndims)
            .map(|_| r.u32("dims"))
            .collect::<Result<Vec<u32>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let nbytes = numel
            .checked_mul(elem)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload = r.take(nbytes, "payload")?;
        let data = if dtype == 0 {
            Bsg1Data::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        } else {
            Bsg1Data::U8(payload.to_vec())
        };
        Ok((Bsg1Array { dims, data }, r.pos))
    }

    /// Decodes a buffer holding exactly one container.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (arr, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after BSG1 payload",
                bytes.len() - used
            )));
        }
        Ok(arr)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated {what}: need {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn write_bsg1(path: impl AsRef<Path>, arr: &Bsg1Array) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, arr.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_bsg1(path: impl AsRef<Path>) -> Result<Bsg1Array> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Bsg1Array::decode(&bytes).map_err(|e| with_path(path, e))
}

/// Reads a BSG1 file straight into a tensor.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    read_bsg1(path)?.to_tensor().map_err(|e| with_path(path, e))
}

pub fn encode_checkpoint(params: &ParameterSet<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(BSCK_MAGIC);
    let count = u32::try_from(params.len())
        .map_err(|_| Error::Format("too many checkpoint records".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in params.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("parameter name {name:?} is too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&Bsg1Array::from_tensor(t).encode());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParameterSet<f32>> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != BSCK_MAGIC {
        return Err(Error::Format(format!("bad BSCK magic {magic:?}")));
    }
    let count = r.u32("record count")?;
    let mut params = ParameterSet::new();
    for i in 0..count {
        let rec = |e: Error| match e {
            Error::Format(m) => Error::Format(format!("record {i}: {m}")),
            other => other,
        };
        let len = r.u16("name length").map_err(rec)? as usize;
        let name = r.take(len, "name").map_err(rec)?;
        let name = std::str::from_utf8(name)
            .map_err(|_| Error::Format(format!("record {i}: name is not UTF-8")))?;
        let (arr, used) = Bsg1Array::decode_prefix(&bytes[r.pos..]).map_err(rec)?;
        r.pos += used;
        if !matches!(arr.data, Bsg1Data::F32(_)) {
            return Err(Error::Format(format!("record {i} ({name}): expected f32 payload")));
        }
        let t = arr.to_tensor().map_err(rec)?;
        params
            .insert(name, t)
            .map_err(|_| Error::Format(format!("record {i}: duplicate name {name:?}")))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} bytes follow the {count} declared records",
            bytes.len() - r.pos
        )));
    }
    Ok(params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParameterSet<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParameterSet<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| with_path(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Tensor<f32> {
        Tensor::from_fn(Shape::new(2, 1, 3, 3).unwrap(), |[n, _, h, w]| {
            (n as f32 - 0.5) * (h * 3 + w) as f32 / 7.0
        })
    }

    #[test]
    fn tensor_roundtrip_is_bitwise() {
        let t = sample();
        let back = Bsg1Array::decode(&Bsg1Array::from_tensor(&t).encode())
            .unwrap()
            .to_tensor()
            .unwrap();
        assert!(back.bitwise_eq(&t));
    }

    #[test]
    fn header_layout() {
        let arr = Bsg1Array::new(vec![2, 3], Bsg1Data::U8(vec![0, 1, 1, 0, 0, 1])).unwrap();
        let b = arr.encode();
        assert_eq!(&b[..4], b"BSG1");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 2);
        assert_eq!(&b[6..14], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&b[14..], &[0, 1, 1, 0, 0, 1]);
        assert_eq!(arr.to_tensor().unwrap().shape().dims(), [1, 1, 2, 3]);
    }

    #[test]
    fn malformed_containers() {
        let good = Bsg1Array::from_tensor(&sample()).encode();
        let err = |b: &[u8]| match Bsg1Array::decode(b) {
            Err(Error::Format(m)) => m,
            other => panic!("expected format error, got {other:?}"),
        };
        assert!(err(&good[..3]).contains("truncated"));
        assert!(err(&good[..good.len() - 1]).contains("payload"));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(err(&bad).contains("magic"));
        let mut bad = good.clone();
        bad[4] = 7;
        assert!(err(&bad).contains("dtype 7"));
        let mut bad = good;
        bad.push(0);
        assert!(err(&bad).contains("trailing"));
    }

    #[test]
    fn mask_rejects_fractions() {
        let t = Tensor::new([1, 1, 1, 2], vec![0.0f32, 0.5]).unwrap();
        assert!(matches!(Bsg1Array::from_mask(&t), Err(Error::Data(_))));
    }

    fn params() -> ParameterSet<f32> {
        let mut p = ParameterSet::new();
        p.insert("conv.weight", sample()).unwrap();
        p.insert("conv.bias", Tensor::new([2, 1, 1, 1], vec![0.5f32, -0.25]).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn checkpoint_roundtrip_and_empty() {
        let p = params();
        let back = decode_checkpoint(&encode_checkpoint(&p).unwrap()).unwrap();
        assert!(back.bitwise_eq(&p));
        assert_eq!(back.names().collect::<Vec<_>>(), ["conv.weight", "conv.bias"]);
        let empty = encode_checkpoint(&ParameterSet::new()).unwrap();
        assert_eq!(empty, b"BSCK\0\0\0\0");
        assert!(decode_checkpoint(&empty).unwrap().is_empty());
    }

    #[test]
    fn checkpoint_errors_name_the_record() {
        let mut b = encode_checkpoint(&params()).unwrap();
        // offset of the second record's name length
        let first = 4 + 4 + 2 + "conv.weight".len() + Bsg1Array::from_tensor(&sample()).encode().len();
        b[first] = 0xff;
        match decode_checkpoint(&b) {
            Err(Error::Format(m)) => assert!(m.contains("record 1"), "{m}"),
            other => panic!("{other:?}"),
        }
        let mut b = encode_checkpoint(&params()).unwrap();
        b[4] = 3;
        assert!(matches!(decode_checkpoint(&b), Err(Error::Format(_))));
        let mut b = encode_checkpoint(&params()).unwrap();
        b[4] = 1;
        assert!(matches!(decode_checkpoint(&b), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_names_are_format_errors() {
        let p = params();
        let mut b = encode_checkpoint(&p).unwrap();
        // append a third record reusing the first name
        let rec = {
            let mut r = Vec::new();
            r.extend_from_slice(&(11u16).to_le_bytes());
            r.extend_from_slice(b"conv.weight");
            r.extend_from_slice(&Bsg1Array::from_tensor(&sample()).encode());
            r
        };
        b[4] = 3;
        b.extend_from_slice(&rec);
        match decode_checkpoint(&b) {
            Err(Error::Format(m)) => assert!(m.contains("duplicate"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn arbitrary_f32_roundtrip(bits in prop::collection::vec(any::<u32>(), 1..40)) {
            let v: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let arr = Bsg1Array::new(vec![v.len() as u32], Bsg1Data::F32(v)).unwrap();
            let back = Bsg1Array::decode(&arr.encode()).unwrap();
            match (&arr.data, &back.data) {
                (Bsg1Data::F32(a), Bsg1Data::F32(b)) => {
                    prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
                }
                _ => prop_assert!(false),
            }
        }
    }
}
