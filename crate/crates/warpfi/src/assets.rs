//! The shipped reference network and frame set.

use std::path::{Path, PathBuf};

use warpfi_core::nn::{reference_frames, reference_network};

use crate::error::{Error, Result};
use crate::formats::{save_frame, save_network};

pub const NETWORK_FILE: &str = "reference.wfnn";
pub const FRAMES_DIR: &str = "frames";

pub fn frame_file(index: usize) -> String {
    format!("frame_{index:02}.wfmx")
}

/// Paths written by [`generate`], relative to its output directory.
pub fn asset_paths() -> (PathBuf, Vec<PathBuf>) {
    let frames = (0..reference_frames().len()).map(|i| Path::new(FRAMES_DIR).join(frame_file(i))).collect();
    (PathBuf::from(NETWORK_FILE), frames)
}

/// Writes the reference weights and frames under `dir`.
pub fn generate(dir: &Path) -> Result<Vec<PathBuf>> {
    let frames_dir = dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut written = vec![dir.join(NETWORK_FILE)];
    save_network(&written[0], &reference_network())?;
    for (i, frame) in reference_frames().iter().enumerate() {
        let path = frames_dir.join(frame_file(i));
        save_frame(&path, frame)?;
        written.push(path);
    }
    Ok(written)
}
