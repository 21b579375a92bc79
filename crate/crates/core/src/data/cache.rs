//! On-disk cache of prepared datasets, keyed by a hash of the data
//! configuration and the bytes of every input file.

use super::prepare::{prepare, DataConfig, PreparedDataset};
use super::{DataError, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"BKCACHE\0";
const VERSION: u32 = 1;

/// Hash of the configuration (input paths excluded) and input file contents.
pub fn cache_key(cfg: &DataConfig) -> Result<String> {
    let mut canonical = cfg.clone();
    for p in [
        &mut canonical.snapshots,
        &mut canonical.trips,
        &mut canonical.stations,
        &mut canonical.weather,
    ] {
        if p.is_some() {
            *p = Some("<input>".into());
        }
    }
    // serde_json maps are sorted, so this rendering is canonical
    let json = serde_json::to_value(&canonical).and_then(|v| serde_json::to_string(&v)).expect("config serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    let mut buf = vec![0u8; 1 << 16];
    for path in cfg.input_files() {
        let mut f = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        h.update(b"\0file\0");
        loop {
            let k = f.read(&mut buf).map_err(|e| DataError::Io(e.to_string()))?;
            if k == 0 {
                break;
            }
            h.update(&buf[..k]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize, Deserialize)]
struct Header {
    key: String,
    dataset: PreparedDataset,
}

/// Writes the dataset; the panel payload goes out as raw little-endian f64.
pub fn write_cache(path: &Path, key: &str, ds: &PreparedDataset) -> Result<()> {
    let io = |e: std::io::Error| DataError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut shell = ds.clone();
    let payload = std::mem::replace(&mut shell.panel.values, Tensor::zeros(vec![0]));
    let header = serde_json::to_vec(&Header {
        key: key.to_string(),
        dataset: shell,
    })
    .expect("dataset serializes");
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        let shape = payload.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io)?;
        for &s in shape {
            w.write_all(&(s as u64).to_le_bytes()).map_err(io)?;
        }
        for v in payload.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> DataError {
    DataError::Cache(msg.into())
}

/// Reads a cache file, returning its key and dataset.
pub fn read_cache(path: &Path) -> Result<(String, PreparedDataset)> {
    let f = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(f);
    let mut read = |buf: &mut [u8]| r.read_exact(buf).map_err(|e| corrupt(format!("truncated cache: {e}")));
    let mut magic = [0u8; 8];
    read(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("not a dataset cache file"));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    read(&mut u32b)?;
    if u32::from_le_bytes(u32b) != VERSION {
        return Err(corrupt(format!("cache version {} unsupported", u32::from_le_bytes(u32b))));
    }
    read(&mut u64b)?;
    let hlen = u64::from_le_bytes(u64b) as usize;
    if hlen > 1 << 30 {
        return Err(corrupt("implausible header length"));
    }
    let mut header = vec![0u8; hlen];
    read(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| corrupt(format!("bad header: {e}")))?;
    read(&mut u32b)?;
    let rank = u32::from_le_bytes(u32b) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        read(&mut u64b)?;
        shape.push(u64::from_le_bytes(u64b) as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        read(&mut u64b)?;
        data.push(f64::from_le_bytes(u64b));
    }
    let mut ds = header.dataset;
    ds.panel.values = Tensor::new(shape, data).map_err(|e| corrupt(e.to_string()))?;
    Ok((header.key, ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

/// Loads the dataset from `cache` when its key matches, otherwise prepares
/// it from the raw inputs and rewrites the cache.
pub fn load_or_prepare(cfg: &DataConfig, cache: &Path) -> Result<(PreparedDataset, String, CacheStatus)> {
    let key = cache_key(cfg)?;
    if cache.exists() {
        match read_cache(cache) {
            Ok((k, ds)) if k == key => return Ok((ds, key, CacheStatus::Hit)),
            Ok(_) => log::info!("cache {} is stale; rebuilding", cache.display()),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", cache.display()),
        }
    }
    let ds = prepare(cfg)?;
    write_cache(cache, &key, &ds)?;
    Ok((ds, key, CacheStatus::Miss))
}
