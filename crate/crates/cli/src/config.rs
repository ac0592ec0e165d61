//! Run configuration: one JSON file per run, validated before any computation.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::Deserialize;

use magorb_core::dynamics::IntegrateOptions;
use magorb_core::mane::PotentialOptions;
use magorb_core::solvers::SolverConfig;
use magorb_core::{FreeHomotopyClass, ModelSpec, SurfaceModel, Vec2};

use crate::Command;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl KRange {
    /// Evenly spaced energies from `min`; a single step gives `[min]`.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + h * i as f64 })
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalValueBlock {
    pub k_max: f64,
    pub tol: f64,
    pub radius: Option<f64>,
    pub grid_n: Option<usize>,
}

impl Default for CriticalValueBlock {
    fn default() -> Self {
        Self {
            k_max: 2.0,
            tol: 0.02,
            radius: None,
            grid_n: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub q0: [f64; 2],
    pub q1: [f64; 2],
    #[serde(default)]
    pub options: PotentialOptions,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    /// Loop CSV; its JSON sidecar sits next to it. Relative to the config file.
    #[serde(rename = "loop")]
    pub loop_csv: PathBuf,
    #[serde(default = "default_verify_tol")]
    pub tolerance: f64,
}

fn default_verify_tol() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicBlock {
    pub q: [f64; 2],
    pub v: [f64; 2],
    pub duration: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub k_range: Option<KRange>,
    #[serde(default)]
    pub class: FreeHomotopyClass,
    /// Overrides `solver.N`.
    #[serde(rename = "N", default)]
    pub n_points: Option<usize>,
    /// Overrides `solver.P`.
    #[serde(rename = "P", default)]
    pub path_segments: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Overrides `solver.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub integrate: IntegrateOptions,
    #[serde(default)]
    pub critical_value: Option<CriticalValueBlock>,
    #[serde(default)]
    pub potential: Option<PotentialBlock>,
    #[serde(default)]
    pub verify: Option<VerifyBlock>,
    #[serde(default)]
    pub geodesic: Option<GeodesicBlock>,
}

/// A config that passed validation for one command.
pub struct Run {
    pub config: RunConfig,
    pub model: SurfaceModel,
    pub solver: SolverConfig,
    /// Directory of the config file, for resolving relative input paths.
    pub base_dir: PathBuf,
}

impl Run {
    pub fn k(&self) -> f64 {
        self.config.k.expect("validated")
    }
}

fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    ensure!(v.is_finite() && v > 0.0, "{name} must be positive and finite, got {v}");
    Ok(())
}

fn point(model: &SurfaceModel, name: &str, p: [f64; 2]) -> anyhow::Result<Vec2> {
    let q = Vec2::new(p[0], p[1]);
    ensure!(model.in_domain(&q), "{name} = {p:?} lies outside the chart domain");
    Ok(q)
}

pub fn load(path: &Path, command: Command) -> anyhow::Result<Run> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate(config, command, base_dir)
}

pub fn validate(config: RunConfig, command: Command, base_dir: PathBuf) -> anyhow::Result<Run> {
    let model = config.model.build()?;
    let mut solver = config.solver.clone();
    if let Some(n) = config.n_points {
        solver.n_points = n;
    }
    if let Some(p) = config.path_segments {
        solver.path_segments = p;
    }
    if let Some(s) = config.seed {
        solver.seed = s;
    }
    solver.validate()?;
    if let Some(w) = config.workers {
        ensure!(w >= 1, "workers must be at least 1");
    }
    let integ = &config.integrate;
    positive("integrate.max_step", integ.max_step)?;
    positive("integrate.energy_tol", integ.energy_tol)?;
    ensure!(integ.sample_every >= 1, "integrate.sample_every must be at least 1");

    let needs_k = matches!(command, Command::Orbit | Command::Potential | Command::Verify);
    if needs_k {
        match config.k {
            Some(k) => positive("k", k)?,
            None => bail!("`k` is required for {command}"),
        }
    } else if let Some(k) = config.k {
        positive("k", k)?;
    }
    match command {
        Command::Orbit => {
            model.deck_map(config.class)?;
        }
        Command::Sweep => {
            let Some(r) = &config.k_range else {
                bail!("`k_range` is required for sweep");
            };
            positive("k_range.min", r.min)?;
            ensure!(r.max.is_finite(), "k_range.max must be finite");
            ensure!(r.min < r.max, "k_range.min must be below k_range.max, got {} >= {}", r.min, r.max);
            ensure!(r.steps >= 1, "k_range.steps must be at least 1");
        }
        Command::CriticalValue => {
            let b = config.critical_value.clone().unwrap_or_default();
            positive("critical_value.k_max", b.k_max)?;
            positive("critical_value.tol", b.tol)?;
            if let Some(r) = b.radius {
                positive("critical_value.radius", r)?;
            }
            if let Some(n) = b.grid_n {
                ensure!(n >= 16, "critical_value.grid_n must be at least 16");
            }
        }
        Command::Potential => {
            let Some(b) = &config.potential else {
                bail!("a `potential` block is required");
            };
            point(&model, "potential.q0", b.q0)?;
            point(&model, "potential.q1", b.q1)?;
            ensure!(b.options.segments >= 2, "potential.options.segments must be at least 2");
            ensure!(!b.options.duration_factors.is_empty(), "potential.options.duration_factors is empty");
        }
        Command::Verify => {
            let Some(b) = &config.verify else {
                bail!("a `verify` block is required");
            };
            positive("verify.tolerance", b.tolerance)?;
        }
        Command::Geodesic => {
            let Some(b) = &config.geodesic else {
                bail!("a `geodesic` block is required");
            };
            point(&model, "geodesic.q", b.q)?;
            ensure!(b.v.iter().all(|c| c.is_finite()), "geodesic.v must be finite");
            positive("geodesic.duration", b.duration)?;
        }
    }
    Ok(Run {
        config,
        model,
        solver,
        base_dir,
    })
}
