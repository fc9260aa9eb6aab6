//! The `STATTN1` container: an ordered list of named `f64` arrays.
//!
//! Checkpoints and processed datasets share this layout. All integers are
//! 64-bit little-endian unsigned.
//!
//! ```text
//! magic      7 bytes   "STATTN1"
//! count      u64       number of entries
//! entry * count:
//!   name_len u64       byte length of the UTF-8 name
//!   name     name_len bytes
//!   rank     u64
//!   dims     rank * u64
//!   payload  product(dims) * f64 (IEEE-754 little-endian, row-major)
//! ```
//!
//! A rank-0 entry holds a single scalar.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 7] = b"STATTN1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        NamedArray {
            name: name.into(),
            dims: vec![],
            data: vec![value],
        }
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        NamedArray {
            name: name.into(),
            dims: vec![data.len()],
            data,
        }
    }

    pub fn matrix(name: impl Into<String>, m: &Matrix) -> Self {
        NamedArray {
            name: name.into(),
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.dims.as_slice() {
            [r, c] => Matrix::from_vec(*r, *c, self.data.clone()),
            [_] => Ok(Matrix::row(self.data.clone())),
            [] => Ok(Matrix::scalar(self.data[0])),
            _ => Err(Error::Format(format!(
                "entry {:?} has rank {}, expected at most 2",
                self.name,
                self.dims.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub entries: Vec<NamedArray>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: NamedArray) {
        self.entries.push(entry);
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&NamedArray> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing entry {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.require(name)?;
        match e.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Format(format!("entry {name:?} is not a scalar"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u64).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.dims.len() as u64).to_le_bytes());
            for d in &e.dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic, not a STATTN1 container".into()));
        }
        let count = r.u64()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.len_u64()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Format(format!("entry name is not UTF-8: {e}")))?
                .to_string();
            let rank = r.len_u64()?;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.len_u64()?);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("entry {name:?} size overflows")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("payload overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            entries.push(NamedArray { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Ok(Container { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length exceeds usize".into()))
    }
}
