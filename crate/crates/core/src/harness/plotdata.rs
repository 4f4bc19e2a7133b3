//! Data files for the arena figure: the obstacle-cost contour over the
//! arena floor plan and one trajectory per configured setting.

use std::path::{Path, PathBuf};

use crate::dynamics::HybridModel;
use crate::error::Result;
use crate::flightlog::write_log_file;
use crate::simworld::obstacle_cost_grid;

use super::config::{ExperimentConfig, ModelKind};
use super::experiment::{fly_setting, TrialRecord};

#[derive(Debug, Clone)]
pub struct PlotFiles {
    pub contour: PathBuf,
    pub trajectories: Vec<(PathBuf, TrialRecord)>,
}

pub fn write_contour(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let n = config.plot.grid.max(2);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "obstacle_cost"])?;
    for [x, y, c] in obstacle_cost_grid(&config.task, n, n) {
        w.write_record([x.to_string(), y.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `contour.csv` and one `trajectory_<setting>.csv` per plot
/// setting, flown with the base seed. Learned settings are skipped when no
/// model is given.
pub fn write_plotdata(config: &ExperimentConfig, learned: Option<&HybridModel>, dir: &Path) -> Result<PlotFiles> {
    std::fs::create_dir_all(dir)?;
    let contour = dir.join("contour.csv");
    write_contour(config, &contour)?;
    let mut trajectories = Vec::new();
    for setting in &config.plot.settings {
        if setting.model == ModelKind::Learned && learned.is_none() {
            continue;
        }
        let record = fly_setting(config, setting, learned, config.seed)?;
        let path = dir.join(format!("trajectory_{}.csv", setting.label()));
        write_log_file(&path, &record.rows)?;
        trajectories.push((path, record));
    }
    Ok(PlotFiles { contour, trajectories })
}
