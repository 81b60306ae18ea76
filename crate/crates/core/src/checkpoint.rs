//! Versioned model container shared by the generator, the visual
//! discriminator and detectors.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then the parameter vector as little-endian `f64`.

use std::path::Path;

use camo_nn::{Architecture, Network};
use serde::{Deserialize, Serialize};

use crate::error::{CamoError, Result};
use crate::params::ParamRanges;

const MAGIC: &[u8; 8] = b"CAMOCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Generator,
    Visual,
    Detector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub role: ModelRole,
    pub name: String,
    pub provenance: String,
    pub architecture: Architecture,
    /// Present for generators only.
    pub ranges: Option<ParamRanges>,
    pub gradient_access: bool,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(header: CheckpointHeader, params: Vec<f64>) -> Result<Self> {
        if header.param_count != params.len() || header.architecture.param_count() != params.len() {
            return Err(CamoError::Checkpoint(format!(
                "header expects {} parameters, architecture {}, got {}",
                header.param_count,
                header.architecture.param_count(),
                params.len()
            )));
        }
        Ok(Self { header, params })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header is serializable");
        let mut out = Vec::with_capacity(20 + header.len() + self.params.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CamoError::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CamoError::Checkpoint(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| CamoError::Checkpoint(format!("header: {e}")))?;
        let rest = &bytes[20 + hlen..];
        if rest.len() != header.param_count * 8 {
            return Err(CamoError::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                header.param_count * 8,
                rest.len()
            )));
        }
        let params = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(header, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CamoError::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| CamoError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CamoError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CamoError::Checkpoint(m) => CamoError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks role, architecture and (for generators) parameter ranges.
    pub fn expect(
        &self,
        role: ModelRole,
        architecture: Option<&Architecture>,
        ranges: Option<&ParamRanges>,
    ) -> Result<()> {
        if self.header.role != role {
            return Err(CamoError::Checkpoint(format!(
                "holds a {:?} model, expected {:?}",
                self.header.role, role
            )));
        }
        if let Some(a) = architecture {
            if *a != self.header.architecture {
                return Err(CamoError::Checkpoint(format!(
                    "architecture '{}' does not match expected '{}'",
                    self.header.architecture.name, a.name
                )));
            }
        }
        if let Some(r) = ranges {
            if self.header.ranges.as_ref() != Some(r) {
                return Err(CamoError::Checkpoint("parameter ranges do not match".into()));
            }
        }
        Ok(())
    }

    pub fn network(&self) -> Result<Network> {
        Ok(Network::from_params(self.header.architecture.clone(), self.params.clone())?)
    }
}
