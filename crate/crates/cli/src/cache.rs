//! On-disk value tables, one JSON file per `(q, t)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use laserlab_core::laser_engine::ValueTable;

pub const DEFAULT_DIR: &str = "laserlab-cache";

pub fn file_name(q: u32, t: u32) -> String {
    format!("cw_q{q}_t{t}.json")
}

pub fn table_path(dir: &Path, q: u32, t: u32) -> PathBuf {
    dir.join(file_name(q, t))
}

/// Writes through a temporary file in the same directory and renames it over
/// the target, so readers never see a partial table.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("table"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn store(dir: &Path, table: &ValueTable) -> Result<PathBuf> {
    let path = table_path(dir, table.q, table.t);
    write_atomic(&path, &table.to_json()?)?;
    Ok(path)
}

/// Table files in `dir`, sorted by name. A missing directory is empty.
pub fn table_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.starts_with("cw_q") && s.ends_with(".json"))
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn load(path: &Path) -> Result<ValueTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ValueTable::from_json(&text).with_context(|| format!("loading {}", path.display()))
}
