//! Binary checkpoints of trainable and state tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RPNETCK1"  u32 layer_count
//! u32 seed_count   { u32 layer, u64 seed }*
//! u32 record_count { u32 layer, u8 role, str name, str kind,
//!                    u32 rank, u64 dims[rank], f64 values[prod(dims)] }*
//! ```
//!
//! `str` is a u16 byte length followed by UTF-8. `role` is 0 for trainable
//! tensors and 1 for running statistics. Fixed projection matrices are not
//! stored: they are regenerated from the recorded seeds, which must match
//! the network on load.

use std::fs;
use std::path::Path;

use crate::linalg::Tensor;
use crate::{Error, Result};

use super::network::Network;
use super::params::{tensor_names, LayerParams, Parameters};

pub const MAGIC: &[u8; 8] = b"RPNETCK1";

pub fn to_bytes(net: &Network, params: &Parameters) -> Result<Vec<u8>> {
    if params.layers.len() != net.len() {
        return Err(Error::shape("parameters do not belong to this network"));
    }
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, net.len() as u32);
    let seeds: Vec<(u32, u64)> = (0..net.len())
        .filter_map(|i| net.layer_spec(i).projection_seed().map(|s| (i as u32, s)))
        .collect();
    put_u32(&mut out, seeds.len() as u32);
    for (layer, seed) in seeds {
        put_u32(&mut out, layer);
        out.extend_from_slice(&seed.to_le_bytes());
    }
    let mut records = Vec::new();
    for (i, lp) in params.layers.iter().enumerate() {
        let (train_names, state_names) = tensor_names(net.layer_spec(i));
        for (role, names, tensors) in [(0u8, train_names, &lp.trainable), (1u8, state_names, &lp.state)] {
            if names.len() != tensors.len() {
                return Err(Error::shape(format!("layer {i} has {} tensors, expected {}", tensors.len(), names.len())));
            }
            for (name, t) in names.iter().zip(tensors) {
                records.push((i, role, *name, t));
            }
        }
    }
    put_u32(&mut out, records.len() as u32);
    for (i, role, name, t) in records {
        put_u32(&mut out, i as u32);
        out.push(role);
        put_str(&mut out, name);
        put_str(&mut out, net.layer_spec(i).kind());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint and checks it against `net`: same layer count,
/// projection seeds, layer kinds, tensor names and shapes.
pub fn from_bytes(net: &Network, bytes: &[u8]) -> Result<Parameters> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let layers = r.u32()? as usize;
    if layers != net.len() {
        return Err(Error::Format(format!("checkpoint has {layers} layers, network has {}", net.len())));
    }
    for _ in 0..r.u32()? {
        let layer = r.u32()? as usize;
        let seed = r.u64()?;
        let want = (layer < net.len()).then(|| net.layer_spec(layer).projection_seed()).flatten();
        if want != Some(seed) {
            return Err(Error::Format(format!("projection seed {seed} of layer {layer} does not match the network")));
        }
    }
    let mut params = net.init_params(0);
    let mut seen = vec![(0usize, 0usize); net.len()];
    for _ in 0..r.u32()? {
        let layer = r.u32()? as usize;
        let role = r.take(1)?[0];
        let name = r.str()?;
        let kind = r.str()?;
        if layer >= net.len() || kind != net.layer_spec(layer).kind() {
            return Err(Error::Format(format!("record for layer {layer} has kind {kind:?}")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let (train_names, state_names) = tensor_names(net.layer_spec(layer));
        let LayerParams { trainable, state } = &mut params.layers[layer];
        let (slots, names, index) = match role {
            0 => (trainable, train_names, &mut seen[layer].0),
            1 => (state, state_names, &mut seen[layer].1),
            _ => return Err(Error::Format(format!("unknown tensor role {role}"))),
        };
        if names.get(*index) != Some(&name.as_str()) || slots[*index].shape() != shape.as_slice() {
            return Err(Error::Format(format!("unexpected tensor {name:?} {shape:?} in layer {layer}")));
        }
        slots[*index] = Tensor::new(shape, data)?;
        *index += 1;
    }
    for (i, &(t, s)) in seen.iter().enumerate() {
        let (tn, sn) = tensor_names(net.layer_spec(i));
        if t != tn.len() || s != sn.len() {
            return Err(Error::Format(format!("checkpoint is missing tensors of layer {i}")));
        }
    }
    if r.at != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(params)
}

pub fn save(path: &Path, net: &Network, params: &Parameters) -> Result<()> {
    fs::write(path, to_bytes(net, params)?)?;
    Ok(())
}

pub fn load(path: &Path, net: &Network) -> Result<Parameters> {
    from_bytes(net, &fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 name".into()))
    }
}
