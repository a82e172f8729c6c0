//! The `CWT1` image tensor file: magic `"CWT1"`, then `W`, `H`, `C` as
//! little-endian `u32`, then `W*H*C` little-endian `f32` pixels in row-major
//! `(h, w, c)` order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Image, Shape};

pub const TENSOR_MAGIC: &[u8; 4] = b"CWT1";

pub fn encode_image(image: &Image) -> Vec<u8> {
    let shape = image.shape();
    let mut out = Vec::with_capacity(16 + 4 * image.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for dim in [shape.width, shape.height, shape.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in image.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let mut r = ByteReader::new(bytes, "tensor file");
    if r.take(4)? != TENSOR_MAGIC {
        return Err(Error::BadMagic { what: "tensor file", expected: "CWT1" });
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let shape = Shape::new(width, height, channels);
    let mut data = Vec::with_capacity(shape.len());
    for _ in 0..shape.len() {
        data.push(r.f32()? as f64);
    }
    if !r.is_done() {
        return Err(Error::invalid("trailing bytes after tensor payload"));
    }
    Image::new(shape, data)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_image(image)).map_err(Error::at_path(path))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_image(&bytes)
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        ByteReader { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::Truncated { what: self.what }),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
