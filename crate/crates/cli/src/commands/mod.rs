pub mod eval;
pub mod plot;
pub mod predict;
pub mod synth;
pub mod train;

use std::path::Path;

use poselift::skeleton::SkeletonTopology;

use crate::CliError;

/// The topology every command works with: the embedded default or a
/// user-supplied description file.
pub fn load_topology(path: Option<&Path>) -> Result<SkeletonTopology, CliError> {
    match path {
        None => Ok(SkeletonTopology::default_h36m17()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("topology {}: {e}", p.display())))?;
            SkeletonTopology::from_text(&text).map_err(CliError::from)
        }
    }
}
