//! Version-stamped parameter snapshots: a JSON manifest (layer shapes,
//! activation tags, block layout, Adam step counter) plus the flat arrays,
//! either inline in the JSON or in a little-endian `f64` side file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{Activation, Mlp};
use super::params::{ParamBlock, ParamVector};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Mlp,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetManifest {
    pub name: String,
    pub kind: NetKind,
    pub layers: Vec<LayerManifest>,
    pub blocks: Vec<ParamBlock>,
    pub step: u64,
    pub len: usize,
    /// Offset (in `f64`s) of this net's arrays inside a binary bundle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSnapshot {
    pub manifest: NetManifest,
    pub values: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl NetSnapshot {
    pub fn capture(name: &str, kind: NetKind, layers: Vec<LayerManifest>, params: &ParamVector) -> Self {
        let (m, v) = params.moments();
        Self {
            manifest: NetManifest {
                name: name.to_string(),
                kind,
                layers,
                blocks: params.blocks().to_vec(),
                step: params.step(),
                len: params.len(),
                bin_offset: None,
            },
            values: params.values().to_vec(),
            adam_m: m.to_vec(),
            adam_v: v.to_vec(),
        }
    }

    /// Rebuilds a parameter vector with the recorded block layout and
    /// optimizer state.
    pub fn to_params(&self) -> Result<ParamVector> {
        let mut params = ParamVector::new();
        for block in &self.manifest.blocks {
            let end = block.offset + block.len;
            if end > self.values.len() {
                return Err(Error::Format(format!("block `{}` exceeds stored values", block.name)));
            }
            params.push_block(block.name.clone(), self.values[block.offset..end].to_vec());
        }
        if params.len() != self.manifest.len {
            return Err(Error::Format(format!(
                "manifest length {} does not match blocks ({})",
                self.manifest.len,
                params.len()
            )));
        }
        params.restore_optimizer(self.adam_m.clone(), self.adam_v.clone(), self.manifest.step)?;
        Ok(params)
    }
}

impl Mlp {
    pub fn snapshot(&self, name: &str) -> NetSnapshot {
        let layers = self
            .layers()
            .iter()
            .map(|l| LayerManifest {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                activation: l.activation,
            })
            .collect();
        NetSnapshot::capture(name, NetKind::Mlp, layers, self.params())
    }

    pub fn from_snapshot(snap: &NetSnapshot) -> Result<Self> {
        if snap.manifest.kind != NetKind::Mlp {
            return Err(Error::Format(format!("`{}` is not an mlp snapshot", snap.manifest.name)));
        }
        let params = snap.to_params()?;
        let mut spec = Vec::new();
        for (i, layer) in snap.manifest.layers.iter().enumerate() {
            let w_block = find_block(&snap.manifest.blocks, &format!("layer{i}.weight"))?;
            let b_block = find_block(&snap.manifest.blocks, &format!("layer{i}.bias"))?;
            let w = ndarray::Array2::from_shape_vec(
                (layer.in_dim, layer.out_dim),
                params.values()[w_block.offset..w_block.offset + w_block.len].to_vec(),
            )
            .map_err(|e| Error::Format(e.to_string()))?;
            let b = ndarray::Array1::from(params.values()[b_block.offset..b_block.offset + b_block.len].to_vec());
            spec.push((w, b, layer.activation));
        }
        let mut net = Mlp::from_layers(spec)?;
        let (m, v) = params.moments();
        net.params_mut().restore_optimizer(m.to_vec(), v.to_vec(), params.step())?;
        Ok(net)
    }
}

fn find_block<'a>(blocks: &'a [ParamBlock], name: &str) -> Result<&'a ParamBlock> {
    blocks
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::Format(format!("missing block `{name}`")))
}

/// A set of network snapshots stored together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBundle {
    pub version: u32,
    pub nets: Vec<NetSnapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BinaryManifest {
    version: u32,
    nets: Vec<NetManifest>,
}

impl SnapshotBundle {
    pub fn new(nets: Vec<NetSnapshot>) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            nets,
        }
    }

    pub fn get(&self, name: &str) -> Option<&NetSnapshot> {
        self.nets.iter().find(|n| n.manifest.name == name)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: Self = serde_json::from_str(&text)?;
        bundle.check_version()?;
        Ok(bundle)
    }

    /// Writes `manifest` (JSON) and `data` (values, m, v per net, LE f64).
    pub fn save_binary(&self, manifest: &Path, data: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        let mut nets = Vec::with_capacity(self.nets.len());
        let mut offset = 0usize;
        for net in &self.nets {
            let mut m = net.manifest.clone();
            m.bin_offset = Some(offset);
            for x in net.values.iter().chain(&net.adam_m).chain(&net.adam_v) {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            offset += 3 * net.values.len();
            nets.push(m);
        }
        let manifest_doc = BinaryManifest {
            version: self.version,
            nets,
        };
        fs::write(manifest, serde_json::to_string_pretty(&manifest_doc)?).map_err(|e| Error::io(manifest, e))?;
        fs::write(data, bytes).map_err(|e| Error::io(data, e))
    }

    pub fn load_binary(manifest: &Path, data: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let doc: BinaryManifest = serde_json::from_str(&text)?;
        let bytes = fs::read(data).map_err(|e| Error::io(data, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{}: length is not a multiple of 8", data.display())));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut nets = Vec::with_capacity(doc.nets.len());
        for m in doc.nets {
            let start = m
                .bin_offset
                .ok_or_else(|| Error::Format(format!("`{}` has no binary offset", m.name)))?;
            let n = m.len;
            if start + 3 * n > floats.len() {
                return Err(Error::Format(format!("`{}` exceeds {}", m.name, data.display())));
            }
            nets.push(NetSnapshot {
                values: floats[start..start + n].to_vec(),
                adam_m: floats[start + n..start + 2 * n].to_vec(),
                adam_v: floats[start + 2 * n..start + 3 * n].to_vec(),
                manifest: m,
            });
        }
        let bundle = Self {
            version: doc.version,
            nets,
        };
        bundle.check_version()?;
        Ok(bundle)
    }

    fn check_version(&self) -> Result<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                self.version
            )));
        }
        Ok(())
    }
}
