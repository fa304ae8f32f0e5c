//! Run configuration: one JSON document covering the grid, the synthetic
//! generator, the boosting setup, and the split plan. Unknown keys are
//! rejected. A root seed, when present, overrides every per-module seed so
//! that a whole experiment flows from a single integer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::BoostConfig;
use crate::dataset::{PathLossParams, SplitPlan};
use crate::error::{Error, Result};
use crate::grid::{GridMap, GridSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySpec {
    pub n_steps: usize,
    pub n_cells: usize,
    /// Explicit cell sequence; overrides the generated trajectory.
    pub cells: Option<Vec<String>>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            n_steps: 1090,
            n_cells: 54,
            cells: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; when set (or given via --seed) it replaces every
    /// per-module seed below.
    pub seed: Option<u64>,
    pub grid: GridSpec,
    pub path_loss: PathLossParams,
    /// Explicit beacon positions; default is a lattice of `n_beacons`.
    pub beacons: Option<Vec<(f64, f64)>>,
    pub n_beacons: usize,
    pub trajectory: TrajectorySpec,
    /// Imputation floor for missing readings, dBm.
    pub impute_floor: f64,
    pub boost: BoostConfig,
    pub split: SplitPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            grid: GridSpec::default(),
            path_loss: PathLossParams::default(),
            beacons: None,
            n_beacons: 10,
            trajectory: TrajectorySpec::default(),
            impute_floor: -100.0,
            boost: BoostConfig::default(),
            split: SplitPlan::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_root_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_root_seed();
    }

    fn apply_root_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.path_loss.seed = seed;
            self.boost.seed = seed;
            self.split.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.path_loss.validate()?;
        self.boost.validate()?;
        let grid = self.grid_map()?;
        let m = self
            .beacons
            .as_ref()
            .map_or(self.n_beacons, Vec::len);
        if self.boost.n_subsets > m {
            return Err(Error::Config(format!(
                "n_subsets {} exceeds the {m} features",
                self.boost.n_subsets
            )));
        }
        if let Some(cells) = &self.trajectory.cells {
            for c in cells {
                if !grid.contains(c) {
                    return Err(Error::Config(format!(
                        "trajectory cell '{c}' not an active grid cell"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid_map(&self) -> Result<GridMap> {
        GridMap::new(self.grid.clone())
    }

    pub fn beacon_positions(&self, grid: &GridMap) -> Vec<(f64, f64)> {
        match &self.beacons {
            Some(b) => b.clone(),
            None => crate::dataset::default_beacons(grid, self.n_beacons),
        }
    }

    pub fn trajectory_cells(&self, grid: &GridMap) -> Result<Vec<String>> {
        match &self.trajectory.cells {
            Some(cells) => Ok(cells.clone()),
            None => crate::dataset::default_trajectory(
                grid,
                self.trajectory.n_steps,
                self.trajectory.n_cells,
                self.path_loss.seed,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.boost.n_stages, 150);
        assert_eq!(cfg.boost.refresh_period, 15);
        assert_eq!(cfg.split.repetitions, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), r#"{"definitely_not_a_key": 1}"#).unwrap();
        assert!(RunConfig::load(f.path()).is_err());
    }

    #[test]
    fn root_seed_overrides_module_seeds() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), r#"{"seed": 99}"#).unwrap();
        let cfg = RunConfig::load(f.path()).unwrap();
        assert_eq!(cfg.path_loss.seed, 99);
        assert_eq!(cfg.boost.seed, 99);
        assert_eq!(cfg.split.seed, 99);
    }

    #[test]
    fn oversized_subset_count_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            f.path(),
            r#"{"n_beacons": 4, "boost": {"n_subsets": 7}}"#,
        )
        .unwrap();
        // partial boost objects are not accepted; write the full object
        if RunConfig::load(f.path()).is_ok() {
            panic!("expected rejection");
        }
    }
}
