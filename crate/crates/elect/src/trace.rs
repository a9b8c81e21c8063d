//! `trace.json` export and relevance-map dumps.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use elect_core::engine::{CandidateInfo, EngineConfig, RunObserver, SelectionTrace};
use elect_core::Tensor;
use serde::Serialize;

use crate::io::write_elct;

/// Layout of `trace.json`: the selection trace's fields at top level plus the
/// run configuration.
#[derive(Debug, Serialize)]
pub struct TraceFile<'a> {
    pub denoiser: &'a str,
    pub config: &'a EngineConfig,
    #[serde(flatten)]
    pub trace: &'a SelectionTrace,
}

pub fn write_trace(path: &Path, file: &TraceFile<'_>) -> Result<()> {
    let text = serde_json::to_string_pretty(file)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Collects maps during a run for [`MapDump::write`].
#[derive(Debug, Default)]
pub struct MapDump {
    maps: Vec<(String, Tensor)>,
}

impl MapDump {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.maps.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<usize> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, t) in &self.maps {
            write_elct(&dir.join(name), t)?;
        }
        Ok(self.maps.len())
    }
}

impl RunObserver for MapDump {
    fn relevance_map(&mut self, c: &CandidateInfo, t: usize, map: &Tensor) {
        self.maps
            .push((format!("relmap_c{}_s{}_t{t}.elct", c.id, c.seed), map.clone()));
    }

    fn selection(&mut self, t: usize, mean_map: &Tensor, weight: &Tensor) {
        self.maps.push((format!("mean_map_t{t}.elct"), mean_map.clone()));
        self.maps.push((format!("weight_t{t}.elct"), weight.clone()));
    }
}
