//! Versioned binary caches: collaborative KG, PageRank store and model
//! checkpoint. All integers and floats are little-endian.
//!
//! Every file starts with an 8-byte magic and a `u32` version. Writes go to a
//! temporary file in the target directory that is renamed into place, so a
//! failed write never leaves a partial file under the final name.
//!
//! CKG (`KUCCKG\0\0`, v1): `u64` users, items, forward relations, entities,
//! nodes, edges; `u32 x entities` entity nodes; `u32 x items` aligned entity
//! (`u32::MAX` for none); `u64 x (nodes + 1)` offsets; `u32 x edges`
//! relations; `u32 x edges` tails.
//!
//! PPR (`KUCPPR\0\0`, v1): `f64` alpha; `u64` iterations, nodes, users,
//! dataset fingerprint; `f64 x users x nodes` scores, row-major by user.
//!
//! Checkpoint (`KUCCKPT\0`, v1): `u64` header length; UTF-8 JSON header with
//! the model shape, relation names and training settings; then every
//! parameter tensor as `f64`, in [`ModelParams::tensors`] order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kucnet_core::ckg::CollaborativeKG;
use kucnet_core::model::ModelParams;
use kucnet_core::ppr::PprStore;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSpec, TrainSettings};
use crate::error::{format_err, io_err, Error, Result};

pub const CKG_MAGIC: &[u8; 8] = b"KUCCKG\0\0";
pub const PPR_MAGIC: &[u8; 8] = b"KUCPPR\0\0";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KUCCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Default)]
struct Out(Vec<u8>);

impl Out {
    fn header(magic: &[u8; 8]) -> Self {
        let mut o = Out(magic.to_vec());
        o.u32(VERSION);
        o
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct In<'a> {
    path: &'a Path,
    buf: &'a [u8],
    at: usize,
}

impl<'a> In<'a> {
    fn open(path: &'a Path, buf: &'a [u8], magic: &[u8; 8]) -> Result<Self> {
        let mut r = In { path, buf, at: 0 };
        if r.take(8)? != magic {
            return Err(format_err(path, "bad magic"));
        }
        let v = r.u32()?;
        if v != VERSION {
            return Err(format_err(path, format!("unsupported version {v}")));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err(self.path, "truncated file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format_err(self.path, "length overflow"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| format_err(self.path, "length overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| format_err(self.path, "length overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn finish(self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(format_err(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| format_err(path, "not a file path"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn encode_ckg(g: &CollaborativeKG) -> Vec<u8> {
    let mut o = Out::header(CKG_MAGIC);
    for v in [
        g.user_count(),
        g.item_count(),
        g.forward_relation_count(),
        g.entity_nodes().len(),
        g.node_count(),
        g.edge_count(),
    ] {
        o.u64(v as u64);
    }
    g.entity_nodes().iter().for_each(|&n| o.u32(n));
    g.item_entities().iter().for_each(|e| o.u32(e.unwrap_or(u32::MAX)));
    g.offsets().iter().for_each(|&x| o.u64(x as u64));
    g.relations().iter().for_each(|&r| o.u32(r));
    g.tails().iter().for_each(|&t| o.u32(t));
    o.0
}

pub fn decode_ckg(path: &Path, bytes: &[u8]) -> Result<CollaborativeKG> {
    let mut r = In::open(path, bytes, CKG_MAGIC)?;
    let (users, items, fwd, entities, nodes, edges) = (r.len()?, r.len()?, r.len()?, r.len()?, r.len()?, r.len()?);
    let entity_node = r.u32s(entities)?;
    let item_entity = r
        .u32s(items)?
        .into_iter()
        .map(|e| (e != u32::MAX).then_some(e))
        .collect();
    let offsets = (0..nodes
        .checked_add(1)
        .ok_or_else(|| format_err(path, "length overflow"))?)
        .map(|_| r.len())
        .collect::<Result<Vec<_>>>()?;
    let rels = r.u32s(edges)?;
    let tails = r.u32s(edges)?;
    r.finish()?;
    CollaborativeKG::from_parts(users, items, fwd, entity_node, item_entity, offsets, rels, tails)
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn save_ckg(path: &Path, g: &CollaborativeKG) -> Result<()> {
    write_atomic(path, &encode_ckg(g))
}

pub fn load_ckg(path: &Path) -> Result<CollaborativeKG> {
    decode_ckg(path, &read(path)?)
}

/// A PageRank store and the fingerprint of the dataset it was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct PprCache {
    pub store: PprStore,
    pub fingerprint: u64,
}

pub fn encode_ppr(cache: &PprCache) -> Vec<u8> {
    let s = &cache.store;
    let mut o = Out::header(PPR_MAGIC);
    o.f64(s.alpha());
    o.u64(s.iterations() as u64);
    o.u64(s.node_count() as u64);
    o.u64(s.user_count() as u64);
    o.u64(cache.fingerprint);
    o.0.reserve(s.raw().len() * 8);
    s.raw().iter().for_each(|&x| o.f64(x));
    o.0
}

pub fn decode_ppr(path: &Path, bytes: &[u8]) -> Result<PprCache> {
    let mut r = In::open(path, bytes, PPR_MAGIC)?;
    let alpha = r.f64()?;
    let (iterations, nodes, users) = (r.len()?, r.len()?, r.len()?);
    let fingerprint = r.u64()?;
    let total = users
        .checked_mul(nodes)
        .ok_or_else(|| format_err(path, "length overflow"))?;
    let scores = r.f64s(total)?;
    r.finish()?;
    let store = PprStore::from_raw(alpha, iterations, nodes, scores).map_err(|e| format_err(path, e.to_string()))?;
    Ok(PprCache { store, fingerprint })
}

pub fn save_ppr(path: &Path, cache: &PprCache) -> Result<()> {
    write_atomic(path, &encode_ppr(cache))
}

pub fn load_ppr(path: &Path) -> Result<PprCache> {
    decode_ppr(path, &read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    model: ModelSpec,
    relations: Vec<String>,
    train: Option<TrainSettings>,
    tensor_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Name of every relation id, forward then reverse.
    pub relations: Vec<String>,
    pub train: Option<TrainSettings>,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = CheckpointHeader {
        model: ck.params.config.into(),
        relations: ck.relations.clone(),
        train: ck.train.clone(),
        tensor_lengths: ck.params.tensors().iter().map(|t| t.len()).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut o = Out::header(CHECKPOINT_MAGIC);
    o.u64(json.len() as u64);
    o.0.extend_from_slice(&json);
    for t in ck.params.tensors() {
        t.iter().for_each(|&x| o.f64(x));
    }
    o.0
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = In::open(path, bytes, CHECKPOINT_MAGIC)?;
    let n = r.len()?;
    let header: CheckpointHeader = serde_json::from_slice(r.take(n)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut params = ModelParams::zeros((&header.model).try_into()?)?;
    let lengths: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if lengths != header.tensor_lengths {
        return Err(format_err(path, "tensor lengths do not match the model shape"));
    }
    for t in params.tensors_mut() {
        let vals = r.f64s(t.len())?;
        t.copy_from_slice(&vals);
    }
    r.finish()?;
    if header.relations.len() != params.config.relation_count {
        return Err(format_err(path, "relation names do not match the model shape"));
    }
    Ok(Checkpoint {
        params,
        relations: header.relations,
        train: header.train,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(path, &read(path)?)
}
