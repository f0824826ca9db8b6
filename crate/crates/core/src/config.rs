//! Run configuration: a flat TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cases::CaseSpec;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::stepper::{EtaPolicy, StepperConfig};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "APFLOW_OUT";

/// User-facing configuration. Unset fields fall back to the case defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub case: String,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub counts: Option<Vec<usize>>,
    /// Fraction in the time-step bound, default 1/2.
    pub beta: Option<f64>,
    /// `None` selects the automatic lower bound `3 / (2 min rho_D)`.
    pub eta: Option<f64>,
    pub eta_floor: Option<f64>,
    pub dt_max: Option<f64>,
    pub t_end: Option<f64>,
    pub newton_rtol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub snapshot_times: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
    /// Recorded in the manifest; the solver itself is deterministic.
    pub seed: Option<u64>,
    /// Write the manifest only and take no steps.
    #[serde(default)]
    pub dry_run: bool,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub case: CaseSpec,
    pub mesh: Mesh,
    pub stepper: StepperConfig,
    pub eps: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl RunConfig {
    pub fn for_case(case: &str) -> Self {
        Self { case: case.to_string(), ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            eps, gamma, counts, beta, eta, eta_floor, dt_max, t_end, newton_rtol, newton_max_iter,
            snapshot_times, output_dir, seed
        );
        if !other.case.is_empty() {
            self.case = other.case;
        }
        self.dry_run |= other.dry_run;
        self
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let mut case = CaseSpec::by_name(&self.case)?;
        if let Some(g) = self.gamma {
            case.gamma = g;
        }
        let eps = self.eps.unwrap_or_else(|| case.default_eps());
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Config(format!("eps = {eps} outside (0, 1]")));
        }
        let counts = self.counts.clone().unwrap_or_else(|| case.default_counts.clone());
        if counts.len() != case.dim() {
            return Err(Error::Config(format!(
                "{} is {}-dimensional but {} cell counts were given",
                case.name,
                case.dim(),
                counts.len()
            )));
        }
        let mesh = Mesh::uniform(&case.extents, &counts)?;
        let mut stepper = StepperConfig::new(&mesh, eps, case.gamma);
        if let Some(b) = self.beta {
            stepper.beta = b;
        }
        if let Some(v) = self.eta {
            stepper.eta = EtaPolicy::Fixed(v);
        }
        if let Some(v) = self.eta_floor {
            stepper.eta_floor = v;
        }
        if let Some(v) = self.dt_max {
            stepper.dt_max = v;
        }
        if let Some(v) = self.newton_rtol {
            stepper.newton_rtol = v;
        }
        if let Some(v) = self.newton_max_iter {
            stepper.newton_max_iter = v;
        }
        stepper.validate()?;

        let t_end = self.t_end.unwrap_or(case.t_end);
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {t_end} must be non-negative")));
        }
        let mut snapshot_times: Vec<f64> = self
            .snapshot_times
            .clone()
            .unwrap_or_else(|| case.snapshot_times.clone())
            .into_iter()
            .filter(|&t| t <= t_end)
            .collect();
        if snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("snapshot times must be non-negative".into()));
        }
        snapshot_times.push(t_end);
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        Ok(ResolvedRun { case, mesh, stepper, eps, t_end, snapshot_times })
    }

    /// `output_dir`, else `$APFLOW_OUT/<default_name>`, else `apflow-out/<default_name>`.
    pub fn output_dir_or(&self, default_name: &str) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| output_root().join(default_name))
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("apflow-out"))
}
