//! Checkpoint persistence: a text header describing named tensors followed by
//! little-endian 32-bit float payloads in header order.
//!
//! ```text
//! setiscan checkpoint v1
//! config_hash <hex>
//! epoch <n>
//! optim_step <n>          (absent when no optimizer state is stored)
//! tensor <name> <d0>x<d1>... <offset-in-elements>
//! ...
//! end
//! <payload>
//! ```

use std::fs;
use std::path::Path;

use super::model::{MiniDense, ModelConfig};
use super::NnError;

const MAGIC: &str = "setiscan checkpoint v1";

/// A parsed checkpoint: named f32 tensors plus training progress metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub epoch: u64,
    /// Optimizer step count when optimizer state is included.
    pub optim_step: Option<u64>,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, shape, data)| (shape.as_slice(), data.as_slice()))
    }

    /// Collects the model parameters (plus any extra named tensors, e.g.
    /// optimizer state) into a checkpoint.
    pub fn from_model(
        model: &MiniDense<f32>,
        config_hash: &str,
        epoch: u64,
        optim_step: Option<u64>,
        extra: Vec<(String, Vec<usize>, Vec<f32>)>,
    ) -> Self {
        let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = model
            .parameters()
            .map(|(name, t)| (name.to_string(), t.shape().to_vec(), t.data().to_vec()))
            .collect();
        tensors.extend(extra);
        Checkpoint {
            config_hash: config_hash.to_string(),
            epoch,
            optim_step,
            tensors,
        }
    }

    /// Reconstructs a model, requiring every parameter to be present exactly
    /// once with the right shape (extra `optim.*` tensors are ignored here).
    pub fn build_model(&self, cfg: &ModelConfig) -> Result<MiniDense<f32>, NnError> {
        let mut model = MiniDense::<f32>::new(cfg, 0)?;
        let mut seen = std::collections::BTreeSet::new();
        for (name, shape, data) in &self.tensors {
            if name.starts_with("optim.") {
                continue;
            }
            let param = model.parameter_mut(name).ok_or_else(|| {
                NnError::BadCheckpoint(format!("unexpected tensor {name:?}"))
            })?;
            if param.shape() != shape.as_slice() {
                return Err(NnError::BadCheckpoint(format!(
                    "tensor {name:?} has shape {shape:?}, model expects {:?}",
                    param.shape()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(NnError::BadCheckpoint(format!(
                    "tensor {name:?} appears twice"
                )));
            }
            param.data_mut().copy_from_slice(data);
        }
        let expected: Vec<String> = model.parameter_names().iter().map(|s| s.to_string()).collect();
        for name in expected {
            if !seen.contains(&name) {
                return Err(NnError::BadCheckpoint(format!("missing tensor {name:?}")));
            }
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("config_hash {}\n", ckpt.config_hash));
    header.push_str(&format!("epoch {}\n", ckpt.epoch));
    if let Some(step) = ckpt.optim_step {
        header.push_str(&format!("optim_step {step}\n"));
    }
    let mut offset = 0usize;
    for (name, shape, data) in &ckpt.tensors {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("tensor {name} {} {offset}\n", dims.join("x")));
        offset += data.len();
    }
    header.push_str("end\n");

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 4);
    for (_, _, data) in &ckpt.tensors {
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = fs::read(path)?;
    let header_end = find_header_end(&bytes)
        .ok_or_else(|| NnError::BadCheckpoint("missing end marker".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| NnError::BadCheckpoint("non-utf8 header".into()))?;
    let payload = &bytes[header_end..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(NnError::BadCheckpoint("bad magic line".into()));
    }
    let mut config_hash = String::new();
    let mut epoch = 0u64;
    let mut optim_step = None;
    let mut specs: Vec<(String, Vec<usize>, usize)> = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("config_hash") => {
                config_hash = parts
                    .next()
                    .ok_or_else(|| NnError::BadCheckpoint("config_hash missing value".into()))?
                    .to_string();
            }
            Some("epoch") => {
                epoch = parse_u64(parts.next(), "epoch")?;
            }
            Some("optim_step") => {
                optim_step = Some(parse_u64(parts.next(), "optim_step")?);
            }
            Some("tensor") => {
                let name = parts
                    .next()
                    .ok_or_else(|| NnError::BadCheckpoint("tensor missing name".into()))?
                    .to_string();
                let dims_text = parts
                    .next()
                    .ok_or_else(|| NnError::BadCheckpoint("tensor missing shape".into()))?;
                let shape: Vec<usize> = dims_text
                    .split('x')
                    .map(|d| {
                        d.parse()
                            .map_err(|_| NnError::BadCheckpoint(format!("bad dim {d:?}")))
                    })
                    .collect::<Result<_, _>>()?;
                let offset = parse_u64(parts.next(), "tensor offset")? as usize;
                specs.push((name, shape, offset));
            }
            Some("end") => break,
            Some(other) => {
                return Err(NnError::BadCheckpoint(format!("unknown field {other:?}")))
            }
            None => continue,
        }
    }

    let mut tensors = Vec::with_capacity(specs.len());
    for (name, shape, offset) in specs {
        let numel: usize = shape.iter().product();
        let start = offset * 4;
        let end = start + numel * 4;
        if end > payload.len() {
            return Err(NnError::BadCheckpoint(format!(
                "tensor {name:?} extends past payload ({end} > {})",
                payload.len()
            )));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((name, shape, data));
    }
    Ok(Checkpoint {
        config_hash,
        epoch,
        optim_step,
        tensors,
    })
}

fn parse_u64(text: Option<&str>, field: &str) -> Result<u64, NnError> {
    text.ok_or_else(|| NnError::BadCheckpoint(format!("{field} missing value")))?
        .parse()
        .map_err(|_| NnError::BadCheckpoint(format!("bad {field} value")))
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end\n";
    bytes
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
}
