//! Binary index file.
//!
//! Layout (little endian): magic, version u32, n u64, d u32, build_seed u64,
//! mode u8, m u32, ef_construction u32, ef_search u32, n*d f32 vectors,
//! n f64 pctrs, n length-prefixed ids, n length-prefixed texts, embedder
//! spec as length-prefixed JSON, then the graph when present.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::{AdIndex, Hnsw, HnswParams, IndexParams, SearchMode};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ADSIDX\0\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn get_bytes(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    r.take(len as u64).read_to_end(&mut b)?;
    if b.len() != len {
        return Err(Error::Format("truncated file".into()));
    }
    Ok(b)
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let len = get_u32(r)? as usize;
    String::from_utf8(get_bytes(r, len)?).map_err(|e| Error::Format(e.to_string()))
}

pub(super) fn write_to(index: &AdIndex, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u64(w, index.len() as u64)?;
    put_u32(w, index.dim as u32)?;
    put_u64(w, index.params.build_seed)?;
    w.write_all(&[match index.params.mode {
        SearchMode::Hnsw => 0,
        SearchMode::BruteForce => 1,
    }])?;
    let h = index.params.hnsw;
    for v in [h.m, h.ef_construction, h.ef_search] {
        put_u32(w, v as u32)?;
    }
    for v in &index.vectors {
        w.write_all(&v.to_le_bytes())?;
    }
    for p in &index.pctrs {
        w.write_all(&p.to_le_bytes())?;
    }
    for s in index.ids.iter().chain(&index.texts) {
        put_str(w, s)?;
    }
    let meta = serde_json::to_vec(&index.embedder)?;
    put_u64(w, meta.len() as u64)?;
    w.write_all(&meta)?;
    match &index.graph {
        None => w.write_all(&[0])?,
        Some(g) => {
            w.write_all(&[1])?;
            put_u32(w, g.entry)?;
            put_u32(w, g.max_level as u32)?;
            for node in &g.links {
                put_u32(w, node.len() as u32)?;
                for level in node {
                    put_u32(w, level.len() as u32)?;
                    for &nb in level {
                        put_u32(w, nb)?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub(super) fn read_from(r: &mut impl Read) -> Result<AdIndex> {
    if &get::<8>(r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = get_u64(r)? as usize;
    let dim = get_u32(r)? as usize;
    let build_seed = get_u64(r)?;
    let mode = match get::<1>(r)?[0] {
        0 => SearchMode::Hnsw,
        1 => SearchMode::BruteForce,
        m => return Err(Error::Format(format!("unknown search mode {m}"))),
    };
    let hnsw = HnswParams {
        m: get_u32(r)? as usize,
        ef_construction: get_u32(r)? as usize,
        ef_search: get_u32(r)? as usize,
    };
    let raw = get_bytes(r, n * dim * 4)?;
    let vectors: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let raw = get_bytes(r, n * 8)?;
    let pctrs: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let ids = (0..n).map(|_| get_str(r)).collect::<Result<Vec<_>>>()?;
    let texts = (0..n).map(|_| get_str(r)).collect::<Result<Vec<_>>>()?;
    let meta_len = get_u64(r)? as usize;
    let embedder = serde_json::from_slice(&get_bytes(r, meta_len)?)?;
    let graph = match get::<1>(r)?[0] {
        0 => None,
        1 => {
            let entry = get_u32(r)?;
            let max_level = get_u32(r)? as usize;
            let mut links = Vec::with_capacity(n);
            for _ in 0..n {
                let levels = get_u32(r)? as usize;
                let mut node = Vec::with_capacity(levels);
                for _ in 0..levels {
                    let len = get_u32(r)? as usize;
                    let list = (0..len).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
                    if list.iter().any(|&x| x as usize >= n) {
                        return Err(Error::Format("graph link out of range".into()));
                    }
                    node.push(list);
                }
                links.push(node);
            }
            Some(Hnsw {
                params: hnsw,
                entry,
                max_level,
                links,
            })
        }
        g => return Err(Error::Format(format!("bad graph marker {g}"))),
    };
    let index = AdIndex {
        ids,
        texts,
        dim,
        vectors,
        pctrs,
        params: IndexParams { mode, hnsw, build_seed },
        embedder,
        graph,
        digest: OnceLock::new(),
    };
    if index.embedder.dim() != dim {
        return Err(Error::Format("embedder dimension disagrees with header".into()));
    }
    Ok(index)
}

pub(super) fn digest(index: &AdIndex) -> String {
    struct HashWriter(Sha256);
    impl Write for HashWriter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.update(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    let mut w = BufWriter::new(HashWriter(Sha256::new()));
    write_to(index, &mut w).expect("hashing cannot fail");
    let h = w.into_inner().unwrap_or_else(|_| unreachable!());
    hex::encode(h.0.finalize())
}

impl AdIndex {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write_to(self, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AdIndex> {
        read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        write_to(self, &mut v).expect("writing to memory cannot fail");
        v
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<AdIndex> {
        read_from(&mut bytes)
    }
}
