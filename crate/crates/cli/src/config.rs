//! Run settings. Every flag can also be given in a `--config` JSON file whose
//! keys are the flag names (`"tol-descent": 1e-12`); flags on the command
//! line win over the file, and the file wins over the defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use lasalle_core::cellset::DEFAULT_CELLS_PER_AXIS;
use lasalle_core::dynsys::DEFAULT_R_MAX;
use lasalle_core::lasalle::LasalleOptions;
use lasalle_core::limitset::LimitSetOptions;
use lasalle_core::{ImageConfig, Padding};
use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Cells per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Motion length N.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Fraction of each motion discarded as transient.
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub tol_descent: Option<f64>,
    /// Tolerance for ΔV = 0 in the E-set (default scales with max |V|).
    #[arg(long)]
    pub tol_zero: Option<f64>,
    #[arg(long)]
    pub tol_cluster: Option<f64>,
    #[arg(long)]
    pub tol_approach: Option<f64>,
    #[arg(long)]
    pub tol_level: Option<f64>,
    /// Residual tolerance for fixed points.
    #[arg(long)]
    pub tol_fixed: Option<f64>,
    /// Lattice subdivisions per axis when sampling a cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Image dilation in cells (0 disables); ignored with --lipschitz.
    #[arg(long)]
    pub pad: Option<usize>,
    /// ℓ∞ Lipschitz bound of the map; makes cell images rigorous.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Divergence radius.
    #[arg(long)]
    pub rmax: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_period: Option<usize>,
    /// First image index kept by the truncated limit-set iteration.
    #[arg(long)]
    pub j_max: Option<usize>,
    /// Last image index of the truncated limit-set iteration.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Output path (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV plot data path for cell-set results.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

macro_rules! overlay {
    ($a:expr, $b:expr, $($f:ident),*) => {
        RunConfig { $($f: $a.$f.or($b.$f),)* }
    };
}

impl RunConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win; the rest come from `fallback`.
    pub fn or(self, fallback: RunConfig) -> RunConfig {
        overlay!(
            self, fallback, grid, steps, burn_in, tol_descent, tol_zero, tol_cluster, tol_approach, tol_level,
            tol_fixed, samples, pad, lipschitz, rmax, max_iters, max_period, j_max, n_max, out, plot
        )
    }

    pub fn resolve(&self) -> CliResult<Settings> {
        let lasalle = LasalleOptions::default();
        let limit = LimitSetOptions::default();
        let s = Settings {
            grid: self.grid.unwrap_or(DEFAULT_CELLS_PER_AXIS),
            steps: self.steps.unwrap_or(limit.n_total),
            burn_in: self.burn_in.unwrap_or(limit.burn_in),
            tol_descent: self.tol_descent.unwrap_or(lasalle.descent_tol),
            tol_zero: self.tol_zero,
            tol_cluster: self.tol_cluster.unwrap_or(limit.cluster_tol),
            tol_approach: self.tol_approach.unwrap_or(lasalle.approach_tol),
            tol_level: self.tol_level.unwrap_or(lasalle.level_tol),
            tol_fixed: self.tol_fixed.unwrap_or(1e-9),
            samples: self.samples.unwrap_or(ImageConfig::default().samples_per_axis),
            pad: self.pad.unwrap_or(1),
            lipschitz: self.lipschitz,
            rmax: self.rmax.unwrap_or(DEFAULT_R_MAX),
            max_iters: self.max_iters,
            max_period: self.max_period.unwrap_or(limit.max_period),
            j_max: self.j_max.unwrap_or(20),
            n_max: self.n_max.unwrap_or(100),
            out: self.out.clone(),
            plot: self.plot.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

/// [`RunConfig`] with defaults filled in and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub grid: usize,
    pub steps: usize,
    pub burn_in: f64,
    pub tol_descent: f64,
    pub tol_zero: Option<f64>,
    pub tol_cluster: f64,
    pub tol_approach: f64,
    pub tol_level: f64,
    pub tol_fixed: f64,
    pub samples: usize,
    pub pad: usize,
    pub lipschitz: Option<f64>,
    pub rmax: f64,
    pub max_iters: Option<usize>,
    pub max_period: usize,
    pub j_max: usize,
    pub n_max: usize,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl Settings {
    fn validate(&self) -> CliResult<()> {
        let positive = [
            ("tol-descent", Some(self.tol_descent)),
            ("tol-zero", self.tol_zero),
            ("tol-cluster", Some(self.tol_cluster)),
            ("tol-approach", Some(self.tol_approach)),
            ("tol-level", Some(self.tol_level)),
            ("tol-fixed", Some(self.tol_fixed)),
            ("lipschitz", self.lipschitz),
            ("rmax", Some(self.rmax)),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(CliError::input(format!("--{name} must be positive, got {v}")));
                }
            }
        }
        let counts = [
            ("grid", Some(self.grid)),
            ("samples", Some(self.samples)),
            ("max-period", Some(self.max_period)),
            ("max-iters", self.max_iters),
            ("n-max", Some(self.n_max)),
        ];
        for (name, v) in counts {
            if v == Some(0) {
                return Err(CliError::input(format!("--{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(CliError::input(format!("--burn-in must lie in [0, 1), got {}", self.burn_in)));
        }
        if self.j_max > self.n_max {
            return Err(CliError::input("--j-max must not exceed --n-max"));
        }
        Ok(())
    }

    pub fn image(&self) -> ImageConfig {
        let padding = match (self.lipschitz, self.pad) {
            (Some(l), _) => Padding::Lipschitz(l),
            (None, 0) => Padding::None,
            (None, r) => Padding::Cells(r),
        };
        ImageConfig {
            samples_per_axis: self.samples,
            padding,
        }
    }

    pub fn limit_set(&self) -> LimitSetOptions {
        LimitSetOptions {
            n_total: self.steps,
            burn_in: self.burn_in,
            cluster_tol: self.tol_cluster,
            max_period: self.max_period,
            r_max: self.rmax,
        }
    }

    pub fn lasalle(&self) -> LasalleOptions {
        LasalleOptions {
            cells_per_axis: self.grid,
            samples_per_cell: self.samples,
            n_total: self.steps,
            burn_in: self.burn_in,
            descent_tol: self.tol_descent,
            zero_tol: self.tol_zero,
            level_tol: self.tol_level,
            approach_tol: self.tol_approach,
            r_max: self.rmax,
            image: self.image(),
            max_iters: self.max_iters,
        }
    }
}
