//! Binary parameter checkpoints.
//!
//! Layout: `b"MIR3CKPT"`, format version (u16 LE), then per entry a u16 name
//! length, the UTF-8 name, a u32 element count and that many f32 LE values.
//! Version 1 files end after the last entry. Version 2 files carry a
//! partition record after the entries: one byte per agent flag followed by
//! the agent count as u16 LE, so the record can be located from the end.

use std::path::Path;

use super::param::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MIR3CKPT";
pub const VERSION_PLAIN: u16 = 1;
pub const VERSION_WITH_PARTITION: u16 = 2;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<(String, Vec<f32>)>,
    pub partition: Option<Vec<bool>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_store(&mut self, store: &ParamStore) {
        for (name, e) in store.iter() {
            self.entries
                .push((name.clone(), e.values.iter().map(|&v| v as f32).collect()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Overwrites every parameter of `store` with the stored values.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        for (name, e) in store.iter_mut() {
            let vals = self
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))?;
            if vals.len() != e.values.len() {
                return Err(Error::Checkpoint(format!(
                    "entry `{name}` has {} values, expected {}",
                    vals.len(),
                    e.values.len()
                )));
            }
            for (dst, &src) in e.values.iter_mut().zip(vals) {
                *dst = f64::from(src);
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let version = if self.partition.is_some() {
            VERSION_WITH_PARTITION
        } else {
            VERSION_PLAIN
        };
        out.extend_from_slice(&version.to_le_bytes());
        for (name, vals) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
            let count = u32::try_from(vals.len())
                .map_err(|_| Error::Checkpoint(format!("array too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&count.to_le_bytes());
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(flags) = &self.partition {
            let n = u16::try_from(flags.len())
                .map_err(|_| Error::Checkpoint("partition too long".into()))?;
            out.extend(flags.iter().map(|&f| u8::from(f)));
            out.extend_from_slice(&n.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        let (end, partition) = match version {
            VERSION_PLAIN => (bytes.len(), None),
            VERSION_WITH_PARTITION => {
                if bytes.len() < 12 {
                    return Err(Error::Checkpoint("truncated partition record".into()));
                }
                let n = u16::from_le_bytes([bytes[bytes.len() - 2], bytes[bytes.len() - 1]]) as usize;
                let start = bytes
                    .len()
                    .checked_sub(2 + n)
                    .filter(|&s| s >= 10)
                    .ok_or_else(|| Error::Checkpoint("truncated partition record".into()))?;
                let flags = bytes[start..start + n]
                    .iter()
                    .map(|&b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(Error::Checkpoint(format!("bad partition flag {other}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                (start, Some(flags))
            }
            v => return Err(Error::Checkpoint(format!("unsupported version {v}"))),
        };
        let mut pos = 10;
        let mut entries = Vec::new();
        let take = |pos: &mut usize, n: usize, end: usize| -> Result<std::ops::Range<usize>> {
            if *pos + n > end {
                return Err(Error::Checkpoint("truncated entry".into()));
            }
            let r = *pos..*pos + n;
            *pos += n;
            Ok(r)
        };
        while pos < end {
            let r = take(&mut pos, 2, end)?;
            let name_len = u16::from_le_bytes([bytes[r.start], bytes[r.start + 1]]) as usize;
            let r = take(&mut pos, name_len, end)?;
            let name = std::str::from_utf8(&bytes[r])
                .map_err(|_| Error::Checkpoint("name is not utf-8".into()))?
                .to_string();
            let r = take(&mut pos, 4, end)?;
            let count = u32::from_le_bytes(bytes[r].try_into().unwrap()) as usize;
            let r = take(&mut pos, count * 4, end)?;
            let vals = bytes[r]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push((name, vals));
        }
        Ok(Checkpoint { entries, partition })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
