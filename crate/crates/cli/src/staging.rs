//! Directory outputs are assembled in a hidden sibling directory and moved
//! into place only after every file has been written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

fn scratch_for(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parent.join(format!(".{name}.partial-{}", std::process::id()))
}

/// Runs `fill` on an empty scratch directory, then moves its entries into
/// `out` (created if missing). On error nothing under `out` changes.
pub fn write_dir(out: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() && !out.is_dir() {
        anyhow::bail!("{} exists and is not a directory", out.display());
    }
    let scratch = scratch_for(out);
    if scratch.exists() {
        fs::remove_dir_all(&scratch).with_context(|| format!("clearing {}", scratch.display()))?;
    }
    fs::create_dir_all(&scratch).with_context(|| format!("creating {}", scratch.display()))?;
    let filled = fill(&scratch).and_then(|()| publish(&scratch, out));
    let _ = fs::remove_dir_all(&scratch);
    filled
}

fn publish(scratch: &Path, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries: Vec<_> = fs::read_dir(scratch)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let dest = out.join(entry.file_name());
        if dest.is_dir() {
            fs::remove_dir_all(&dest).with_context(|| format!("replacing {}", dest.display()))?;
        }
        fs::rename(entry.path(), &dest)
            .with_context(|| format!("moving output into {}", dest.display()))?;
    }
    Ok(())
}
