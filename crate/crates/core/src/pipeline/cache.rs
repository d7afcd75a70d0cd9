use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hashing::hex;

/// Derived per-page vectors keyed by content hash, held in memory and
/// optionally mirrored to a directory as raw little-endian f64 files.
#[derive(Debug, Default)]
pub struct FeatureCache {
    dir: Option<PathBuf>,
    memory: HashMap<[u8; 32], Vec<f64>>,
    hits: u64,
    misses: u64,
}

impl FeatureCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn persistent(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            ..Self::default()
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn get_or_compute(
        &mut self,
        key: [u8; 32],
        compute: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        if let Some(v) = self.memory.get(&key) {
            self.hits += 1;
            return Ok(v.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("{}.f64", hex(&key))));
        if let Some(path) = path.as_ref().filter(|p| p.exists()) {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::format("feature cache", format!("{} is truncated", path.display())));
            }
            let v: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            self.hits += 1;
            self.memory.insert(key, v.clone());
            return Ok(v);
        }
        self.misses += 1;
        let v = compute()?;
        if let Some(path) = path {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        self.memory.insert(key, v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn computes_once_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = FeatureCache::persistent(dir.path()).unwrap();
        let key = [7u8; 32];
        let v = cache.get_or_compute(key, || Ok(vec![1.5, -2.0])).unwrap();
        let again = cache.get_or_compute(key, || panic!("recomputed")).unwrap();
        assert_eq!(v, again);
        let mut fresh = FeatureCache::persistent(dir.path()).unwrap();
        assert_eq!(fresh.get_or_compute(key, || panic!("recomputed")).unwrap(), v);
        assert_eq!((fresh.hits(), fresh.misses()), (1, 0));
    }
}
