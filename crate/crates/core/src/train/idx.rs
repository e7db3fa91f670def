//! IDX files holding unsigned-byte arrays (`0x00 0x00 0x08 ndim`, big-endian
//! dimension sizes, then the bytes).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    /// `[n, ...]`; images are `[n, rows, cols]`.
    pub dims: Vec<usize>,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.dims[0]
    }

    pub fn item_shape(&self) -> &[usize] {
        &self.dims[1..]
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let w: usize = self.item_shape().iter().product();
        &self.pixels[i * w..(i + 1) * w]
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let format = |offset: usize, message: String| Error::Format { offset, message };
        if bytes.len() < 4 {
            return Err(format(bytes.len(), "file ends inside the magic number".into()));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(format(0, "magic number must start with two zero bytes".into()));
        }
        if bytes[2] != 0x08 {
            return Err(format(2, format!("unsupported element type 0x{:02x}, only unsigned bytes", bytes[2])));
        }
        let ndim = bytes[3] as usize;
        if ndim == 0 {
            return Err(format(3, "zero dimensions".into()));
        }
        let header = 4 + 4 * ndim;
        if bytes.len() < header {
            return Err(format(bytes.len(), format!("file ends inside the {ndim} dimension sizes")));
        }
        let dims: Vec<usize> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
            .collect();
        if let Some(i) = dims.iter().position(|d| *d == 0) {
            return Err(format(4 + 4 * i, "zero-sized dimension".into()));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .ok_or_else(|| format(4, "dimension sizes overflow".into()))?;
        if bytes.len() != header + total {
            return Err(format(
                bytes.len().min(header + total),
                format!("expected {} data bytes, found {}", total, bytes.len() - header),
            ));
        }
        Ok(Self {
            dims,
            pixels: bytes[header..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, 0x08, self.dims.len() as u8];
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0x00, 0x00, 0x08, 0x03];
        b.extend_from_slice(&[0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3]);
        b.extend_from_slice(&[0, 1, 2, 3, 4, 5]);
        b.extend_from_slice(&[255, 128, 127, 64, 32, 16]);
        b
    }

    #[test]
    fn hand_written_file_parses() {
        let img = IdxImages::parse(&fixture()).unwrap();
        assert_eq!(img.dims, vec![2, 2, 3]);
        assert_eq!(img.item(0), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(img.item(1), &[255, 128, 127, 64, 32, 16]);
        assert_eq!(img.to_bytes(), fixture());
    }

    #[test]
    fn malformed_files_name_the_offset() {
        let mut b = fixture();
        b[2] = 0x0D;
        assert!(matches!(IdxImages::parse(&b), Err(Error::Format { offset: 2, .. })));
        let b = fixture();
        assert!(matches!(IdxImages::parse(&b[..9]), Err(Error::Format { offset: 9, .. })));
        assert!(matches!(IdxImages::parse(&b[..20]), Err(Error::Format { offset: 20, .. })));
        let mut b = fixture();
        b.push(0);
        assert!(matches!(IdxImages::parse(&b), Err(Error::Format { offset: 28, .. })));
        assert!(matches!(IdxImages::parse(&[1, 0, 8, 1]), Err(Error::Format { offset: 0, .. })));
    }
}
