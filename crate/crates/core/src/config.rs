//! JSON run configuration. Every field has a default, so `{}` is a valid
//! synthetic run on the bundled fixture.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ecg::Electrodes;
use crate::error::{Error, Result};
use crate::fixtures::{self, VentricleShape};
use crate::forward::{Anatomy, ForwardSettings, RootPlacement};
use crate::inference::{synthetic_reference, AcquisitionOptions, Bounds, IdentificationOptions, RunBudget, N_PARAMS};
use crate::mesh::{load_surface, load_volume, SurfaceFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reference from a forward run at `synthetic.theta`, beats from noise.
    #[default]
    Synthetic,
    /// Reference and beats from `beats_dir`.
    Beats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnatomySource {
    /// The bundled half-ellipsoid ventricle.
    Fixture,
    Files {
        volume: PathBuf,
        left_surface: PathBuf,
        right_surface: PathBuf,
    },
}

impl Default for AnatomySource {
    fn default() -> Self {
        AnatomySource::Fixture
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticData {
    pub theta: Vec<f64>,
    pub n_beats: usize,
    /// Noise standard deviation as a fraction of each lead's peak.
    pub noise: f64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        SyntheticData { theta: synthetic_reference().0.to_vec(), n_beats: 20, noise: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub anatomy: AnatomySource,
    /// Overrides the anatomy's electrodes.
    pub electrodes: Option<Electrodes>,
    /// Overrides the anatomy's root placements (left, right).
    pub roots: Option<[RootPlacement; 2]>,
    pub forward: ForwardSettings,
    pub bounds: Bounds,
    pub budget: RunBudget,
    pub seed: u64,
    pub gp_restarts: usize,
    pub acquisition: AcquisitionOptions,
    pub eval_batch: usize,
    /// Divide all traces by the reference's QRS peak before computing losses.
    pub normalize: bool,
    pub synthetic: SyntheticData,
    pub beats_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let id = IdentificationOptions::default();
        RunConfig {
            mode: Mode::Synthetic,
            anatomy: AnatomySource::Fixture,
            electrodes: None,
            roots: None,
            forward: ForwardSettings::default(),
            bounds: id.bounds,
            budget: id.budget,
            seed: 0,
            gp_restarts: id.gp_restarts,
            acquisition: id.acquisition,
            eval_batch: id.eval_batch,
            normalize: true,
            synthetic: SyntheticData::default(),
            beats_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("run configuration: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks values and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        self.bounds.validate()?;
        self.budget.validate()?;
        if self.eval_batch == 0 || self.gp_restarts == 0 {
            return Err(Error::Config("eval_batch and gp_restarts must be positive".into()));
        }
        if self.acquisition.candidates == 0 {
            return Err(Error::Config("at least one acquisition candidate is needed".into()));
        }
        if let AnatomySource::Files { volume, left_surface, right_surface } = &self.anatomy {
            for p in [volume, left_surface, right_surface] {
                if !p.exists() {
                    return Err(Error::Config(format!("anatomy file {} does not exist", p.display())));
                }
            }
        }
        match self.mode {
            Mode::Synthetic => {
                if self.synthetic.theta.len() != N_PARAMS {
                    return Err(Error::Config(format!(
                        "synthetic theta needs {N_PARAMS} values, got {}",
                        self.synthetic.theta.len()
                    )));
                }
                if self.synthetic.n_beats < 2 || !(self.synthetic.noise >= 0.0) {
                    return Err(Error::Config("synthetic data needs at least two beats and noise >= 0".into()));
                }
            }
            Mode::Beats => match &self.beats_dir {
                Some(d) if d.is_dir() => {}
                Some(d) => return Err(Error::Config(format!("beats directory {} does not exist", d.display()))),
                None => return Err(Error::Config("beats mode requires beats_dir".into())),
            },
        }
        Ok(())
    }

    pub fn identification(&self) -> IdentificationOptions {
        IdentificationOptions {
            bounds: self.bounds.clone(),
            budget: self.budget.clone(),
            seed: self.seed,
            gp_restarts: self.gp_restarts,
            acquisition: self.acquisition,
            eval_batch: self.eval_batch,
        }
    }

    /// Builds the anatomy, applying electrode and root overrides.
    pub fn anatomy(&self) -> Result<Anatomy> {
        let mut a = match &self.anatomy {
            AnatomySource::Fixture => fixtures::ventricles(&VentricleShape::default())?,
            AnatomySource::Files { volume, left_surface, right_surface } => {
                let fmt = |p: &Path| {
                    SurfaceFormat::from_path(p)
                        .ok_or_else(|| Error::Config(format!("{}: unknown surface format", p.display())))
                };
                let mut vm = load_volume(volume)?;
                let left = load_surface(left_surface, fmt(left_surface)?)?;
                let right = load_surface(right_surface, fmt(right_surface)?)?;
                vm.endocardial_ids.left = vm.link_surface(&left, 1e-6)?;
                vm.endocardial_ids.right = vm.link_surface(&right, 1e-6)?;
                Anatomy {
                    volume: vm,
                    left,
                    right,
                    roots: [RootPlacement::default(); 2],
                    electrodes: fixtures::default_electrodes(),
                }
            }
        };
        if let Some(e) = self.electrodes {
            a.electrodes = e;
        }
        if let Some(r) = self.roots {
            a.roots = r;
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn json_roundtrip() {
        let mut c = RunConfig::default();
        c.seed = 17;
        c.budget.n_init = 12;
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn bad_bounds_are_rejected() {
        let c = RunConfig::from_json(r#"{"bounds": [[1, 0]]}"#).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_fields_fail_cleanly() {
        assert!(RunConfig::from_json(r#"{"mode": "magic"}"#).is_err());
    }
}
