//! Binary chain archives: `MLGP`, a little-endian `u32` version, a `u64`
//! header length, the JSON header, then fixed-length records of
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MLGP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub config_hash: String,
    pub name: String,
    pub seed: u64,
    pub chain: u32,
    pub dim: usize,
    pub n: usize,
    /// Real coordinates per layer.
    pub coefficients: usize,
    pub hyper_layers: usize,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
}

impl ArchiveHeader {
    /// Each record holds `wbar` (all hyper-layers) followed by `u_J`.
    pub fn record_len(&self) -> usize {
        (self.hyper_layers + 1) * self.coefficients
    }

    pub fn wbar_len(&self) -> usize {
        self.hyper_layers * self.coefficients
    }
}

pub struct ArchiveWriter<W: Write> {
    out: W,
    record_len: usize,
    records: u64,
}

impl ArchiveWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &ArchiveHeader) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> ArchiveWriter<W> {
    pub fn new(mut out: W, header: &ArchiveHeader) -> Result<Self> {
        let json = serde_json::to_vec(header)?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(Self {
            out,
            record_len: header.record_len(),
            records: 0,
        })
    }

    pub fn push(&mut self, record: &[f64]) -> Result<()> {
        if record.len() != self.record_len {
            return Err(Error::Archive(format!(
                "record of {} values, header declares {}",
                record.len(),
                self.record_len
            )));
        }
        for v in record {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainArchive {
    pub header: ArchiveHeader,
    pub records: Vec<Vec<f64>>,
}

impl ChainArchive {
    pub fn read(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Archive(msg) => Error::Archive(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Archive(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(fail("not a chain archive"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Archive(format!("unsupported archive version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + len).ok_or_else(|| fail("truncated header"))?;
        let header: ArchiveHeader =
            serde_json::from_slice(body).map_err(|e| Error::Archive(format!("bad header: {e}")))?;
        let data = &bytes[16 + len..];
        let stride = header.record_len() * 8;
        if stride == 0 || data.len() % stride != 0 {
            return Err(fail("record data is not a whole number of records"));
        }
        let records = data
            .chunks_exact(stride)
            .map(|rec| {
                rec.chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect();
        Ok(Self { header, records })
    }

    /// `u_J` real coordinates of every record.
    pub fn last_layers(&self) -> impl Iterator<Item = &[f64]> {
        let skip = self.header.wbar_len();
        self.records.iter().map(move |r| &r[skip..])
    }

    pub fn wbars(&self) -> impl Iterator<Item = &[f64]> {
        let take = self.header.wbar_len();
        self.records.iter().map(move |r| &r[..take])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> ArchiveHeader {
        ArchiveHeader {
            config_hash: "abc".into(),
            name: "t".into(),
            seed: 1,
            chain: 0,
            dim: 1,
            n: 1,
            coefficients: 3,
            hyper_layers: 1,
            iterations: 10,
            burn_in: 1,
            thinning: 3,
        }
    }

    #[test]
    fn write_then_read() {
        let mut w = ArchiveWriter::new(Vec::new(), &header()).unwrap();
        w.push(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        w.push(&[-1.0, f64::MIN_POSITIVE, 0.0, 1e300, 7.0, 8.0]).unwrap();
        assert!(w.push(&[1.0]).is_err());
        let bytes = w.finish().unwrap();
        assert_eq!(&bytes[..4], b"MLGP");
        let archive = ChainArchive::from_bytes(&bytes).unwrap();
        assert_eq!(archive.header, header());
        assert_eq!(archive.records[1][1], f64::MIN_POSITIVE);
        assert_eq!(archive.last_layers().next().unwrap(), &[4.0, 5.0, 6.0]);
        assert_eq!(archive.wbars().nth(1).unwrap(), &[-1.0, f64::MIN_POSITIVE, 0.0]);
    }

    #[test]
    fn header_only_archive_is_valid() {
        let bytes = ArchiveWriter::new(Vec::new(), &header()).unwrap().finish().unwrap();
        assert!(ChainArchive::from_bytes(&bytes).unwrap().records.is_empty());
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let mut bytes = ArchiveWriter::new(Vec::new(), &header()).unwrap().finish().unwrap();
        bytes.push(0);
        assert!(matches!(ChainArchive::from_bytes(&bytes), Err(Error::Archive(_))));
        assert!(ChainArchive::from_bytes(b"NOPE0000000000000000").is_err());
    }
}
