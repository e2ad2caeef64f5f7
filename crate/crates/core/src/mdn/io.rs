//! Versioned binary parameter files.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic  "BMCMDN\0\0"
//! u32    format version
//! u32 n, n bytes   input-encoding layout tag (UTF-8)
//! u32 n, n bytes   network config (JSON)
//! u64 n, n × f64   parameters: W1 (row-major, out × in), b1, W2, b2, W3, b3
//! ```
//!
//! A human-readable JSON sidecar with the same header fields is written
//! next to the binary file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MdnConfig, MdnParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BMCMDN\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub layout: String,
    pub config: MdnConfig,
    pub num_params: usize,
}

pub fn to_bytes(params: &MdnParams, layout: &str) -> Vec<u8> {
    let cfg = serde_json::to_vec(&params.config).expect("config serializes");
    let flat = params.flat();
    let mut out = Vec::with_capacity(32 + layout.len() + cfg.len() + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    out.extend_from_slice(layout.as_bytes());
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for x in flat {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Version(format!("truncated parameter file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a parameter file, returning the parameters and the layout tag.
pub fn from_bytes(bytes: &[u8]) -> Result<(MdnParams, String)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Version("not a network parameter file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!("format version {version}, this build reads {FORMAT_VERSION}")));
    }
    let n = r.u32()? as usize;
    let layout = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Version("layout tag is not UTF-8".into()))?;
    let n = r.u32()? as usize;
    let config: MdnConfig = serde_json::from_slice(r.take(n)?)?;
    config.validate()?;
    let count = r.u64()? as usize;
    let mut params = MdnParams::zeros(config);
    if count != params.num_params() {
        return Err(Error::Version(format!(
            "file stores {count} parameters, config implies {}",
            params.num_params()
        )));
    }
    let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Version("parameter count overflow".into()))?)?;
    let flat: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    params.set_flat(&flat)?;
    if r.pos != bytes.len() {
        return Err(Error::Version("trailing bytes after parameters".into()));
    }
    Ok((params, layout))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save(path: &Path, params: &MdnParams, layout: &str) -> Result<()> {
    std::fs::write(path, to_bytes(params, layout))?;
    let side = Sidecar {
        format_version: FORMAT_VERSION,
        layout: layout.to_string(),
        config: params.config.clone(),
        num_params: params.num_params(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Loads a parameter file. When `expected_layout` is given, a different
/// stored tag is a [`Error::Version`].
pub fn load(path: &Path, expected_layout: Option<&str>) -> Result<(MdnParams, String)> {
    let bytes = std::fs::read(path)?;
    let (p, layout) = from_bytes(&bytes)?;
    if let Some(want) = expected_layout {
        if want != layout {
            return Err(Error::Version(format!("input layout {layout:?}, expected {want:?}")));
        }
    }
    Ok((p, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::Head;
    use crate::rng;

    fn params() -> MdnParams {
        let c = MdnConfig::sized(5, vec![Head::Categorical { cardinality: 3 }, Head::Gaussian { dim: 2 }], 4, 2.0);
        MdnParams::init(c, &mut rng::seeded(8))
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = params();
        let (q, tag) = from_bytes(&to_bytes(&p, "toy-v1")).unwrap();
        assert_eq!(tag, "toy-v1");
        assert_eq!(p.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), q.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(p.config, q.config);
    }

    #[test]
    fn file_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        save(&path, &params(), "toy-v1").unwrap();
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.layout, "toy-v1");
        assert!(load(&path, Some("toy-v1")).is_ok());
        assert!(matches!(load(&path, Some("other")), Err(Error::Version(_))));
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = to_bytes(&params(), "toy-v1");
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Version(_))));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Version(_))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Version(_))));
    }
}
