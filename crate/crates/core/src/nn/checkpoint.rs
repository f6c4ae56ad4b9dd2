//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes   "ELRL"
//! version      u32
//! header_len   u32       byte length of the UTF-8 header text
//! header       [u8]      architecture descriptor / agent metadata
//! param_count  u64
//! params       [f64]     param_count little-endian doubles, layer order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ELRL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.header.len() as u32).to_le_bytes())?;
        w.write_all(self.header.as_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.header.len() + 8 * self.params.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let trunc = |what: &str| Error::Checkpoint(format!("truncated checkpoint while reading {what}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| trunc("magic"))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| trunc("version"))?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        r.read_exact(&mut b4).map_err(|_| trunc("header length"))?;
        let mut header = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut header).map_err(|_| trunc("header"))?;
        let header = String::from_utf8(header).map_err(|_| Error::Checkpoint("header is not valid UTF-8".into()))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| trunc("parameter count"))?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut params = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(|_| trunc("parameters"))?;
            params.push(f64::from_le_bytes(b8));
        }
        Ok(Self { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}
