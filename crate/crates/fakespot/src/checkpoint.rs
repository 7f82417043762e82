//! Model persistence.
//!
//! Layout (all integers little-endian):
//!   magic "FSPT" | version u16 | descriptor len u32 | descriptor (UTF-8 JSON)
//!   | tensor count u32 | per tensor: rank u8, dims u32 x rank, payload f32 LE
//!   | CRC-32 (IEEE) of all preceding bytes, u32
//!
//! The descriptor holds the topology plus training provenance, so a
//! checkpoint is self-describing. Tensor order is the fixed parameter
//! order documented on [`Parameters::tensors`](crate::nn::Parameters::tensors).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{init_parameters, Model, ModelTopology, Parameters};
use crate::rng::SeededRng;
use crate::Error;

pub const MAGIC: &[u8; 4] = b"FSPT";
pub const VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    topology: ModelTopology,
    seed: u64,
    epochs_trained: usize,
}

fn push_tensor(buf: &mut Vec<u8>, dims: &[u32], data: &[f32]) {
    buf.push(dims.len() as u8);
    for &d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &Model<f32>) -> Result<Vec<u8>, Error> {
    let descriptor = serde_json::to_vec(&Descriptor {
        topology: model.topology.clone(),
        seed: model.seed,
        epochs_trained: model.epochs_trained,
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    buf.extend_from_slice(&descriptor);

    let p = &model.params;
    let tensor_count = p.tensors().len() as u32;
    buf.extend_from_slice(&tensor_count.to_le_bytes());
    for c in &p.conv {
        let (f, ic, kh, kw) = c.kernels.shape();
        push_tensor(&mut buf, &[f as u32, ic as u32, kh as u32, kw as u32], c.kernels.data());
        push_tensor(&mut buf, &[c.bias.len() as u32], &c.bias);
    }
    for d in p.dense.iter().chain(std::iter::once(&p.output)) {
        push_tensor(&mut buf, &[d.units as u32, d.in_len as u32], &d.weights);
        push_tensor(&mut buf, &[d.bias.len() as u32], &d.bias);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(Vec<u32>, Vec<f32>), Error> {
        let rank = self.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()?);
        }
        let len: usize = dims.iter().map(|&d| d as usize).product();
        let raw = self.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok((dims, data))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model<f32>, Error> {
    if bytes.len() < 14 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual_crc = crc32fast::hash(body);
    if stored_crc != actual_crc {
        return Err(Error::Checkpoint(format!(
            "CRC mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not an FSPT checkpoint)".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let desc_len = r.u32()? as usize;
    let descriptor: Descriptor = serde_json::from_slice(r.take(desc_len)?)
        .map_err(|e| Error::Checkpoint(format!("topology parse failure: {e}")))?;
    descriptor.topology.validate()?;

    // Materialize correctly shaped parameters, then overwrite each tensor.
    let mut params: Parameters<f32> =
        init_parameters(&descriptor.topology, &mut SeededRng::new(0))?;
    let tensor_count = r.u32()? as usize;
    {
        let mut slots = params.tensors_mut();
        if tensor_count != slots.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this topology, found {tensor_count}",
                slots.len()
            )));
        }
        for slot in slots.iter_mut() {
            let (dims, data) = r.tensor()?;
            let len: usize = dims.iter().map(|&d| d as usize).product();
            if len != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor length {len} does not match topology ({} expected)",
                    slot.len()
                )));
            }
            slot.copy_from_slice(&data);
        }
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    Ok(Model {
        topology: descriptor.topology,
        params,
        seed: descriptor.seed,
        epochs_trained: descriptor.epochs_trained,
    })
}

/// Write atomically (temp file then rename).
pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    let bytes = encode(model)?;
    let tmp = path.with_extension("fspt.tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> Model<f32> {
        let topology = ModelTopology::new(&[4, 8], &[16]).unwrap();
        let mut m = Model::new(topology, 7).unwrap();
        m.epochs_trained = 3;
        m
    }

    #[test]
    fn round_trip_bitwise() {
        let model = toy_model();
        let bytes = encode(&model).unwrap();
        let loaded = decode(&bytes).unwrap();
        assert_eq!(loaded.topology, model.topology);
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.seed, 7);
        assert_eq!(loaded.epochs_trained, 3);
    }

    #[test]
    fn corruption_detected() {
        let model = toy_model();
        let mut bytes = encode(&model).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        match decode(&bytes) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("CRC")),
            other => panic!("expected CRC error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_error_not_panic() {
        let model = toy_model();
        let bytes = encode(&model).unwrap();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn version_bump_rejected() {
        let model = toy_model();
        let mut bytes = encode(&model).unwrap();
        bytes[4] = 0xFF; // version low byte
        let len = bytes.len();
        let crc = crc32fast::hash(&bytes[..len - 4]);
        bytes[len - 4..].copy_from_slice(&crc.to_le_bytes());
        match decode(&bytes) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fspt");
        let model = toy_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, model.params);
    }
}
