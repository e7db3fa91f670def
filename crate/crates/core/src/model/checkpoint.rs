//! Binary checkpoint format:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 4 | magic `GDNM` |
//! | 4 | 4 | format version, u32 LE |
//! | 8 | 4 | header length `h`, u32 LE |
//! | 12 | h | UTF-8 JSON header |
//! | 12 + h | 8 n | parameters, f64 LE, in layer order |
//! | ... | 16 n | Adam first then second moments, when the header has `adam` |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Architecture, Denoiser};
use crate::error::{Error, Result};
use crate::noise::FamilySpec;
use crate::schedule::{NoiseSchedule, ScheduleSpec};

pub const MAGIC: &[u8; 4] = b"GDNM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Denoiser,
    pub family: FamilySpec,
    pub schedule: NoiseSchedule,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub adam: Option<AdamState>,
    /// Free-form metadata, e.g. the training config.
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    family: FamilySpec,
    schedule: ScheduleSpec,
    schedule_hash: String,
    step: u64,
    n_params: usize,
    #[serde(default)]
    adam: Option<AdamState>,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.model.params().len();
        let header = Header {
            architecture: self.model.architecture().clone(),
            family: self.family.clone(),
            schedule: self.schedule.spec(),
            schedule_hash: self.schedule.hash(),
            step: self.step,
            n_params: n,
            adam: self.adam.clone(),
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let blob = if self.adam.is_some() { 3 * n } else { n };
        let mut out = Vec::with_capacity(12 + json.len() + 8 * blob);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut push = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        push(self.model.params());
        if let Some(a) = &self.adam {
            if a.m.len() != n || a.v.len() != n {
                return Err(Error::invalid("Adam state does not match the model"));
            }
            push(&a.m);
            push(&a.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let format = |offset: usize, message: String| Error::Format { offset, message };
        if bytes.len() < 12 {
            return Err(format(bytes.len(), format!("file is {} bytes, shorter than the 12-byte preamble", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(format(0, format!("bad magic {:?}, expected \"GDNM\"", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format(4, format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + hlen;
        if bytes.len() < body {
            return Err(format(bytes.len(), format!("header needs {hlen} bytes, file ends early")));
        }
        let header: Header = serde_json::from_slice(&bytes[12..body]).map_err(|e| {
            format(12 + line_col_offset(&bytes[12..body], e.line(), e.column()), format!("header: {e}"))
        })?;
        header.architecture.validate()?;
        if header.n_params != header.architecture.n_params() {
            return Err(format(12, format!(
                "header lists {} parameters, architecture has {}",
                header.n_params,
                header.architecture.n_params()
            )));
        }
        let schedule = header.schedule.build()?;
        if schedule.hash() != header.schedule_hash {
            return Err(format(12, format!(
                "schedule hash {} does not match stored schedule ({})",
                header.schedule_hash,
                schedule.hash()
            )));
        }
        let n = header.n_params;
        let blocks = if header.adam.is_some() { 3 } else { 1 };
        let expected = body + 8 * n * blocks;
        if bytes.len() != expected {
            let at = bytes.len().min(expected);
            return Err(format(at, format!("expected {expected} bytes, file has {}", bytes.len())));
        }
        let read = |block: usize| -> Result<Vec<f64>> {
            let start = body + 8 * n * block;
            bytes[start..start + 8 * n]
                .chunks_exact(8)
                .enumerate()
                .map(|(i, c)| {
                    let v = f64::from_le_bytes(c.try_into().unwrap());
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format(start + 8 * i, format!("non-finite value {v}")))
                    }
                })
                .collect()
        };
        let model = Denoiser::from_params(header.architecture, read(0)?)?;
        let adam = match header.adam {
            Some(mut a) => {
                a.m = read(1)?;
                a.v = read(2)?;
                Some(a)
            }
            None => None,
        };
        Ok(Self {
            model,
            family: header.family,
            schedule,
            step: header.step,
            adam,
            extra: header.extra,
        })
    }
}

fn line_col_offset(text: &[u8], line: usize, col: usize) -> usize {
    let mut off = 0;
    for (i, l) in text.split(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            return (off + col.saturating_sub(1)).min(text.len());
        }
        off += l.len() + 1;
    }
    text.len()
}

/// Writes through a temporary file and a rename so readers never see a
/// partial checkpoint.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
