//! Manifest helper: every artifact-producing invocation records its resolved
//! parameters and the checksums of everything it read and wrote.

use anyhow::Result;
use convlasso::io::{self, ArtifactRef, RunManifest};
use std::path::Path;

pub fn write<P: AsRef<Path>>(
    manifest_path: &Path,
    command: &str,
    params: serde_json::Value,
    inputs: &[P],
    outputs: &[P],
    wall_seconds: f64,
) -> Result<()> {
    let describe = |paths: &[P]| -> Result<Vec<ArtifactRef>> {
        paths
            .iter()
            .map(|p| {
                Ok(ArtifactRef {
                    path: p.as_ref().display().to_string(),
                    checksum: io::checksum_file(p.as_ref())?,
                })
            })
            .collect()
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        params,
        inputs: describe(inputs)?,
        outputs: describe(outputs)?,
        wall_seconds,
    };
    io::write_manifest(manifest_path, &manifest)?;
    Ok(())
}
