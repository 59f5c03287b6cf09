//! Run manifest written next to a results file.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{GridSpec, RunSettings};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub preset: String,
    pub base_seed: u64,
    pub cells: u64,
    /// SHA-256 over the grid and every run setting.
    pub config_hash: String,
    pub version: String,
    pub conventions: String,
}

impl Manifest {
    pub fn new(preset: &str, grid: &GridSpec, settings: &RunSettings) -> Self {
        let canonical = format!("{grid:?}\n{settings:?}");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut config_hash = String::with_capacity(64);
        for b in digest {
            let _ = write!(config_hash, "{b:02x}");
        }
        let c = settings.conventions;
        Self {
            preset: preset.into(),
            base_seed: settings.base_seed,
            cells: grid.cell_count(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").into(),
            conventions: format!(
                "fulfillment={} cost_basis={} overdue={}",
                c.fulfillment.label(),
                c.cost_basis.label(),
                settings.overdue.label()
            ),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "preset = {}\nbase_seed = {}\ncells = {}\nconfig_hash = {}\nversion = {}\nconventions = {}\n\
             random_numbers = common across parameter sets and modes within a replication\n",
            self.preset, self.base_seed, self.cells, self.config_hash, self.version, self.conventions
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_settings() {
        let g = GridSpec::desk();
        let a = Manifest::new("desk", &g, &RunSettings::for_grid(1, &g));
        assert_eq!(a, Manifest::new("desk", &g, &RunSettings::for_grid(1, &g)));
        assert_eq!(a.config_hash.len(), 64);
        assert_ne!(a.config_hash, Manifest::new("desk", &g, &RunSettings::for_grid(2, &g)).config_hash);
        let g2 = GridSpec { replications: 3, ..g.clone() };
        assert_ne!(a.config_hash, Manifest::new("desk", &g2, &RunSettings::for_grid(1, &g2)).config_hash);
        assert!(a.to_text().contains("cells = 2160"));
    }
}
