//! Binary checkpoints: the current field plus the `J` history.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `TDOCCKPT` |
//! | 4 | format version (u32) |
//! | 8 | iteration `k` (u64) |
//! | 8 | `dt` (f64) |
//! | 8 | `n_steps` (u64) |
//! | 4 | field components (u32) |
//! | 8 | number of `J` values (u64) |
//! | 8·m | `J^(0) … J^(k)` (f64) |
//! | 8·s | field samples, `(n_steps + 1)·components` (f64) |

use std::path::Path;

use tdoc_core::field::ControlField;
use tdoc_core::grid::TimeGrid;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TDOCCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Iterations completed when the checkpoint was written.
    pub iteration: u64,
    pub j_history: Vec<f64>,
    pub field: ControlField,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let time = self.field.time_grid();
        let samples = self.field.samples();
        let mut out = Vec::with_capacity(48 + 8 * (self.j_history.len() + samples.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&time.dt().to_le_bytes());
        out.extend_from_slice(&(time.n_steps() as u64).to_le_bytes());
        out.extend_from_slice(&(self.field.n_components() as u32).to_le_bytes());
        out.extend_from_slice(&(self.j_history.len() as u64).to_le_bytes());
        for v in self.j_history.iter().chain(samples) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let iteration = u64::from_le_bytes(r.array()?);
        let dt = f64::from_le_bytes(r.array()?);
        let n_steps = u64::from_le_bytes(r.array()?) as usize;
        let components = u32::from_le_bytes(r.array()?) as usize;
        let n_j = u64::from_le_bytes(r.array()?) as usize;
        let j_history = r.floats(n_j)?;
        let samples = r.floats((n_steps + 1).saturating_mul(components))?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let time = TimeGrid::new(dt, n_steps).map_err(|e| e.to_string())?;
        let field = ControlField::from_samples(time, components, samples).map_err(|e| e.to_string())?;
        Ok(Self {
            iteration,
            j_history,
            field,
        })
    }

    /// Writes through a temporary file and a rename, so an interrupted
    /// write never leaves a truncated checkpoint behind.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "checkpoint is truncated".to_string())?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn floats(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let len = n.checked_mul(8).ok_or("checkpoint is truncated")?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}
