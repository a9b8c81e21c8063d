//! Tensor files and task directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use elect_core::engine::EditTask;
use elect_core::{elct, Tensor};

pub fn read_elct(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    elct::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn write_elct(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = elct::encode(t).with_context(|| format!("encoding {}", path.display()))?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// One task loaded from `<dir>/source.elct`, `<dir>/instruction.txt`, and the
/// optional `<dir>/mask.elct` and `<dir>/meta.json`.
#[derive(Debug, Clone)]
pub struct TaskDir {
    pub name: String,
    pub task: EditTask,
    pub meta: Option<serde_json::Value>,
}

pub fn load_task_dir(dir: &Path) -> Result<TaskDir> {
    let source_latent = read_elct(&dir.join("source.elct"))?;
    let instruction_path = dir.join("instruction.txt");
    let instruction = fs::read_to_string(&instruction_path)
        .with_context(|| format!("reading {}", instruction_path.display()))?
        .trim()
        .to_string();
    let mask_path = dir.join("mask.elct");
    let gt_mask = if mask_path.exists() {
        Some(read_elct(&mask_path)?)
    } else {
        None
    };
    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", meta_path.display()))?)
    } else {
        None
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(TaskDir {
        name,
        task: EditTask {
            source_latent,
            instruction,
            gt_mask,
        },
        meta,
    })
}

/// Every task subdirectory of `root`, sorted by name.
pub fn load_dataset(root: &Path) -> Result<Vec<TaskDir>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("listing {}", root.display()))?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    dirs.iter().map(|d| load_task_dir(d)).collect()
}
