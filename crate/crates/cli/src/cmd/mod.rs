pub mod bench;
pub mod eval;
pub mod oob;
pub mod synth_gen;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};
use pcrf::frame::Dataset;
use pcrf::manifest::attach_channels;

/// Attaches image channels to every frame when the corpus has images and
/// `geometric_only` is off.
pub(crate) fn maybe_attach_channels(
    ds: &mut Dataset,
    data: &Path,
    geometric_only: bool,
) -> Result<()> {
    if geometric_only || ds.frames.iter().all(|f| f.image.is_none()) {
        return Ok(());
    }
    let root = data.parent().unwrap_or(Path::new("."));
    log::info!("building image channels for {} frames", ds.frames.len());
    attach_channels(&mut ds.frames, root).context("building image channels")
}
