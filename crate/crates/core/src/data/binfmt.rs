//! Little-endian binary primitives shared by the dataset, adjacency and
//! checkpoint formats. Every file starts with an 8-byte magic and a u32
//! version.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) struct Reader<'a, R: Read> {
    inner: R,
    path: &'a Path,
}

impl<'a, R: Read> Reader<'a, R> {
    pub fn new(inner: R, path: &'a Path) -> Self {
        Self { inner, path }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format(self.path, format!("truncated while reading {what}")))
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf, "magic bytes")?;
        if &buf != magic {
            return Err(Error::format(
                self.path,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(&buf)
                ),
            ));
        }
        Ok(())
    }

    pub fn expect_version(&mut self) -> Result<()> {
        let version = self.read_u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                self.path,
                format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        Ok(())
    }

    pub fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.fill(&mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn read_f64(&mut self, what: &str) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf, what)?;
        Ok(f64::from_le_bytes(buf))
    }

    pub fn read_f32_block(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 4];
        self.fill(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    pub fn read_f64_block(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        self.fill(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Bytes that must each be 0 or 1.
    pub fn read_bit_bytes(&mut self, count: usize, what: &str) -> Result<Vec<u8>> {
        let mut bytes = vec![0u8; count];
        self.fill(&mut bytes, what)?;
        if let Some(bad) = bytes.iter().find(|&&b| b > 1) {
            return Err(Error::format(
                self.path,
                format!("{what} contains byte {bad}, expected 0 or 1"),
            ));
        }
        Ok(bytes)
    }

    /// Fail if any payload bytes remain.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut buf = [0u8; 1];
        match self.inner.read(&mut buf) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.path, "trailing bytes after payload")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}

pub(crate) struct Writer<'a, W: Write> {
    inner: W,
    path: &'a Path,
}

impl<'a, W: Write> Writer<'a, W> {
    pub fn new(inner: W, path: &'a Path) -> Self {
        Self { inner, path }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|e| Error::io(self.path, e))
    }

    pub fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        self.put(magic)?;
        self.write_u32(FORMAT_VERSION)
    }

    pub fn write_u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn write_f64(&mut self, v: f64) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn write_f32_block(&mut self, values: &[f64]) -> Result<()> {
        for &v in values {
            self.put(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_f64_block(&mut self, values: &[f64]) -> Result<()> {
        for &v in values {
            self.put(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.put(bytes)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(self.path, e))
    }
}
