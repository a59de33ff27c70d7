//! Content-addressed on-disk cache of oracle answers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{exact_densest, OracleMethod, OracleResult};
use crate::graph::DynamicGraph;
use crate::nodeset::NodeSet;

#[derive(Serialize, Deserialize)]
struct Entry {
    members: Vec<usize>,
    numer: u64,
    denom: u64,
    method: OracleMethod,
}

/// Stores `exact_densest` answers as `<dir>/<sha256 of graph>.json`.
#[derive(Debug, Clone)]
pub struct OracleCache {
    dir: PathBuf,
}

impl OracleCache {
    pub fn new(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    fn path(&self, g: &DynamicGraph) -> PathBuf {
        self.dir.join(format!("{}.json", g.content_hash()))
    }

    pub fn lookup(&self, g: &DynamicGraph) -> Option<OracleResult> {
        let text = fs::read_to_string(self.path(g)).ok()?;
        let e: Entry = serde_json::from_str(&text).ok()?;
        if e.denom == 0 || e.members.iter().any(|&v| v >= g.node_count()) {
            return None;
        }
        Some(OracleResult {
            members: NodeSet::from_ids(g.node_count(), e.members),
            density: Ratio::new(e.numer, e.denom),
            method: e.method,
            runtime_secs: 0.0,
        })
    }

    /// Returns the cached answer or computes, stores and returns a fresh one.
    pub fn densest(&self, g: &DynamicGraph) -> io::Result<OracleResult> {
        if let Some(hit) = self.lookup(g) {
            return Ok(hit);
        }
        let r = exact_densest(g);
        let e = Entry {
            members: r.members.to_vec(),
            numer: *r.density.numer(),
            denom: *r.density.denom(),
            method: r.method,
        };
        let tmp = self.path(g).with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&e).map_err(io::Error::other)?)?;
        fs::rename(tmp, self.path(g))?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gnp;

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = OracleCache::new(dir.path()).unwrap();
        let g = gnp(30, 0.2, 9).unwrap();
        assert!(cache.lookup(&g).is_none());
        let fresh = cache.densest(&g).unwrap();
        let hit = cache.lookup(&g).unwrap();
        assert_eq!(hit.density, fresh.density);
        assert_eq!(hit.members, fresh.members);
    }
}
