//! Parameter vector to simulated ECG: tree growth in both charts, coupled
//! activation, lead-field ECG, and the loss against reference beats.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{
    root_times_from_delay, ActivationField, ConductivityModel, CoupledOutcome, CoupledSolver, CouplingConfig,
    MyocardiumSolver,
};
use crate::ecg::{align_and_loss, beat_errors, build_lead_fields, ActionPotentialTemplate, EcgOperator, EcgTrace, Electrodes};
use crate::error::{Error, Result};
use crate::inference::{Evaluation, Objective, ParamVector};
use crate::mesh::{SurfaceChart, SurfaceMesh, VolumeMesh};
use crate::rng::{stream_rng, Stream};
use crate::tree::{grow_tree, PurkinjeTree, TreeGrowthConfig};

/// Root node and initial bundle direction in a chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPlacement {
    pub uv: [f64; 2],
    pub direction: [f64; 2],
}

impl Default for RootPlacement {
    fn default() -> Self {
        RootPlacement { uv: [0.0, 0.0], direction: [1.0, 0.0] }
    }
}

/// Everything fixed about one heart. Left comes first in every pair.
#[derive(Debug, Clone)]
pub struct Anatomy {
    pub volume: VolumeMesh,
    pub left: SurfaceMesh,
    pub right: SurfaceMesh,
    pub roots: [RootPlacement; 2],
    pub electrodes: Electrodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardSettings {
    /// Fractal constants. Root position and direction come from the anatomy.
    pub growth: TreeGrowthConfig,
    pub conductivity: ConductivityModel,
    pub template: ActionPotentialTemplate,
    /// The velocity is replaced by the parameter vector's.
    pub coupling: CouplingConfig,
    /// ECG sampling step, ms.
    pub dt: f64,
    /// Samples kept after the end of the QRS, ms.
    pub padding: f64,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        ForwardSettings {
            growth: TreeGrowthConfig::default(),
            conductivity: ConductivityModel::default(),
            template: ActionPotentialTemplate::default(),
            coupling: CouplingConfig::default(),
            dt: 1.0,
            padding: 50.0,
        }
    }
}

impl ForwardSettings {
    pub fn validate(&self) -> Result<()> {
        self.growth.validate()?;
        self.conductivity.validate()?;
        self.template.validate()?;
        if !(self.dt > 0.0) || !(self.padding >= 0.0) {
            return Err(Error::Config(format!("invalid sampling: dt {} padding {}", self.dt, self.padding)));
        }
        if !(self.coupling.tol > 0.0) || self.coupling.max_outer_iters == 0 {
            return Err(Error::Config("coupling tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trees: [PurkinjeTree; 2],
    pub activation: CoupledOutcome,
    pub ecg: EcgTrace,
}

/// Precomputed charts, eikonal tensors and lead-field weights.
#[derive(Debug)]
pub struct ForwardModel {
    charts: [SurfaceChart; 2],
    growth: [TreeGrowthConfig; 2],
    myo: MyocardiumSolver,
    ecg: EcgOperator,
    settings: ForwardSettings,
}

impl ForwardModel {
    pub fn new(anatomy: Anatomy, settings: ForwardSettings) -> Result<Self> {
        settings.validate()?;
        let lf = build_lead_fields(&anatomy.volume, &anatomy.electrodes)?;
        let ecg = EcgOperator::new(&anatomy.volume, &settings.conductivity, &lf)?;
        let charts = [SurfaceChart::flatten(anatomy.left)?, SurfaceChart::flatten(anatomy.right)?];
        let growth = anatomy.roots.map(|r| TreeGrowthConfig {
            root_uv: r.uv,
            initial_direction_uv: r.direction,
            ..settings.growth.clone()
        });
        for g in &growth {
            g.validate()?;
        }
        let myo = MyocardiumSolver::new(anatomy.volume, &settings.conductivity)?;
        Ok(ForwardModel { charts, growth, myo, ecg, settings })
    }

    pub fn settings(&self) -> &ForwardSettings {
        &self.settings
    }

    pub fn myocardium(&self) -> &MyocardiumSolver {
        &self.myo
    }

    pub fn mesh(&self) -> &VolumeMesh {
        self.myo.mesh()
    }

    pub fn charts(&self) -> &[SurfaceChart; 2] {
        &self.charts
    }

    pub fn growth(&self) -> &[TreeGrowthConfig; 2] {
        &self.growth
    }

    pub fn grow(&self, theta: &ParamVector) -> Result<[PurkinjeTree; 2]> {
        let [vl, vr] = theta.ventricles();
        Ok([grow_tree(&self.charts[0], &self.growth[0], &vl)?, grow_tree(&self.charts[1], &self.growth[1], &vr)?])
    }

    pub fn coupling(&self, theta: &ParamVector) -> CouplingConfig {
        CouplingConfig { cv: theta.cv(), ..self.settings.coupling }
    }

    pub fn activate(&self, trees: &[PurkinjeTree; 2], theta: &ParamVector) -> Result<CoupledOutcome> {
        let [tl, tr] = root_times_from_delay(theta.root_time());
        let solver = CoupledSolver::new(&self.myo, vec![(trees[0].clone(), tl), (trees[1].clone(), tr)], self.coupling(theta))?;
        solver.solve()
    }

    /// ECG sampled from 0 to the end of the QRS plus the padding.
    pub fn ecg(&self, field: &ActivationField) -> Result<EcgTrace> {
        let ap = &self.settings.template;
        let horizon = field.max_time() + 10.0 * ap.upstroke_width + self.settings.padding;
        self.ecg.apply(&field.tau_myo, ap, self.settings.dt, horizon)
    }

    pub fn simulate(&self, theta: &ParamVector) -> Result<Simulation> {
        let trees = self.grow(theta)?;
        let activation = self.activate(&trees, theta)?;
        let ecg = self.ecg(&activation.field)?;
        Ok(Simulation { trees, activation, ecg })
    }
}

/// Pseudo-beats: the reference plus iid Gaussian noise whose standard
/// deviation is `noise` times each lead's peak absolute value.
pub fn synthetic_beats(reference: &EcgTrace, n_beats: usize, noise: f64, seed: u64) -> Result<Vec<EcgTrace>> {
    if !(noise >= 0.0) {
        return Err(Error::Config(format!("beat noise {noise} must be non-negative")));
    }
    let sigmas: Vec<f64> =
        reference.leads.iter().map(|l| noise * l.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    (0..n_beats)
        .map(|b| {
            let mut rng = stream_rng(seed, Stream::BeatNoise, b as u64);
            let mut beat = reference.clone();
            for (lead, &s) in beat.leads.iter_mut().zip(&sigmas) {
                if s > 0.0 {
                    let dist = Normal::new(0.0, s).expect("positive sigma");
                    for v in lead.iter_mut() {
                        *v += dist.sample(&mut rng);
                    }
                }
            }
            Ok(beat)
        })
        .collect()
}

/// Loss of a parameter vector: ECG against the reference, plus the error
/// against each beat. All traces are divided by the reference's QRS peak
/// when `normalize` is set.
#[derive(Debug)]
pub struct EcgObjective<'a> {
    model: &'a ForwardModel,
    reference: EcgTrace,
    beats: Vec<EcgTrace>,
    gain: f64,
}

impl<'a> EcgObjective<'a> {
    pub fn new(model: &'a ForwardModel, reference: EcgTrace, beats: Vec<EcgTrace>, normalize: bool) -> Result<Self> {
        if reference.qrs_range().is_none() {
            return Err(Error::Config("reference has an empty QRS window".into()));
        }
        if beats.len() < 2 {
            return Err(Error::Config(format!("at least two beats required, got {}", beats.len())));
        }
        let gain = if normalize {
            let peak = reference.qrs_peak();
            if !(peak > 0.0) {
                return Err(Error::Numeric("reference QRS is flat; cannot normalise".into()));
            }
            1.0 / peak
        } else {
            1.0
        };
        let reference = reference.scaled(gain);
        let beats = beats.iter().map(|b| b.scaled(gain)).collect();
        Ok(EcgObjective { model, reference, beats, gain })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Normalised reference.
    pub fn reference(&self) -> &EcgTrace {
        &self.reference
    }

    pub fn model(&self) -> &ForwardModel {
        self.model
    }

    /// Loss of an unnormalised simulated trace.
    pub fn score(&self, ecg: &EcgTrace) -> Result<Evaluation> {
        let sim = ecg.scaled(self.gain);
        let (shift, y) = align_and_loss(&self.reference, &sim)?;
        let errors = beat_errors(&self.beats, &sim)?;
        Ok(Evaluation { y, shift, errors })
    }

    pub fn try_evaluate(&self, theta: &ParamVector) -> Result<Evaluation> {
        let sim = self.model.simulate(theta)?;
        self.score(&sim.ecg)
    }
}

impl Objective for EcgObjective<'_> {
    fn evaluate(&self, theta: &ParamVector) -> Evaluation {
        match self.try_evaluate(theta) {
            Ok(e) => e,
            Err(e) => {
                log::debug!("forward evaluation failed: {e}");
                Evaluation::failed()
            }
        }
    }
}
