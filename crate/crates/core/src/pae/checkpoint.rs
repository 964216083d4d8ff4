//! Checkpoint file: header, configuration, normalization, flat parameters.
//!
//! ```text
//! magic        8 bytes "PMCKPT\0\0"
//! version      u32
//! d, c, window, hidden, kernel, pred_steps   u32 each
//! dt           f64
//! flags        u32     bit 0: model consumes velocities
//! norm dims    u32, then mean[d] f64, std[d] f64
//! param count  u64, then f64 values in TENSOR_NAMES order
//! ```

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::motiondata::NormStats;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PMCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub params: ModelParams<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [c.d, c.c, c.window, c.hidden, c.kernel, c.pred_steps] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        b.extend_from_slice(&c.dt.to_le_bytes());
        b.extend_from_slice(&u32::from(c.use_velocities).to_le_bytes());
        b.extend_from_slice(&(self.norm.dims() as u32).to_le_bytes());
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let flat = self.params.to_flat();
        b.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = buf
                .get(pos..pos + n)
                .ok_or_else(|| Error::format(path, "truncated checkpoint"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not a checkpoint"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let mut dims = [0usize; 6];
        for v in dims.iter_mut() {
            *v = u32_at(take(4)?) as usize;
        }
        let dt = f64_at(take(8)?);
        let flags = u32_at(take(4)?);
        let config = ModelConfig {
            d: dims[0],
            c: dims[1],
            window: dims[2],
            hidden: dims[3],
            kernel: dims[4],
            pred_steps: dims[5],
            dt,
            use_velocities: flags & 1 != 0,
        };
        config
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        let nd = u32_at(take(4)?) as usize;
        if nd != config.d {
            return Err(Error::format(path, "normalization size does not match d"));
        }
        let mut mean = Vec::with_capacity(nd);
        let mut std = Vec::with_capacity(nd);
        for _ in 0..nd {
            mean.push(f64_at(take(8)?));
        }
        for _ in 0..nd {
            std.push(f64_at(take(8)?));
        }
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut params = ModelParams::zeros(&config);
        if count != params.num_params() {
            return Err(Error::format(
                path,
                format!(
                    "{count} parameters, configuration needs {}",
                    params.num_params()
                ),
            ));
        }
        let mut flat = Vec::with_capacity(count);
        for _ in 0..count {
            flat.push(f64_at(take(8)?));
        }
        if pos != buf.len() {
            return Err(Error::format(path, "trailing bytes"));
        }
        params.load_flat(&flat)?;
        Ok(Self {
            config,
            norm: NormStats { mean, std },
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, path)
    }
}
