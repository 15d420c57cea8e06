//! Latin-hypercube seeding, Bayesian optimisation with expected improvement,
//! and rejection-ABC with a GP-informed prior.

mod acquisition;
mod params;
mod prior;
mod records;
mod sampling;
mod tv;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpFitOptions, GpModel};

pub use acquisition::{expected_improvement, maximize_ei, AcquisitionOptions};
pub use params::{synthetic_reference, Bounds, ParamVector, CV_INDEX, N_PARAMS, PARAM_NAMES, RT_INDEX};
pub use prior::{prior_density, rejection_sample_prior, PriorDraw, PriorSample};
pub use records::{
    parse_records, read_records, records_header, records_to_csv, Evaluation, EvaluationRecord, Provenance,
    RecordWriter,
};
pub use sampling::{latin_hypercube, uniform_in_box};
pub use tv::{silverman_bandwidth, tv_between, tv_distance, Kde};

/// Forward map from parameters to loss and per-beat errors. Failures are
/// reported as [`Evaluation::failed`].
pub trait Objective: Sync {
    fn evaluate(&self, theta: &ParamVector) -> Evaluation;
}

impl<F> Objective for F
where
    F: Fn(&ParamVector) -> Evaluation + Sync,
{
    fn evaluate(&self, theta: &ParamVector) -> Evaluation {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunBudget {
    pub n_init: usize,
    pub n_bo: usize,
    pub n_prior_samples: usize,
    pub n_posterior: usize,
    pub retrain_after: usize,
    pub accept_threshold: f64,
    /// Cap on forward evaluations during the ABC walk.
    pub max_abc_evaluations: usize,
}

impl Default for RunBudget {
    fn default() -> Self {
        RunBudget {
            n_init: 60,
            n_bo: 60,
            n_prior_samples: 200_000,
            n_posterior: 30,
            retrain_after: 50,
            accept_threshold: 0.9,
            max_abc_evaluations: 1000,
        }
    }
}

impl RunBudget {
    pub fn paper_scale() -> Self {
        RunBudget { n_init: 250, n_bo: 300, n_prior_samples: 5_000_000, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_init, self.n_prior_samples, self.n_posterior, self.retrain_after, self.max_abc_evaluations];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("budget counts must be positive".into()));
        }
        if self.n_init < 2 {
            return Err(Error::Config("at least two initial samples are needed to fit the GP".into()));
        }
        if !(self.accept_threshold > 0.0 && self.accept_threshold <= 1.0) {
            return Err(Error::Config(format!("accept threshold {} outside (0, 1]", self.accept_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IdentificationOptions {
    pub bounds: Bounds,
    pub budget: RunBudget,
    pub seed: u64,
    pub gp_restarts: usize,
    pub acquisition: AcquisitionOptions,
    /// Candidates evaluated together in the ABC walk. Fixed so that results
    /// do not depend on the thread count.
    pub eval_batch: usize,
}

impl Default for IdentificationOptions {
    fn default() -> Self {
        IdentificationOptions {
            bounds: Bounds::default(),
            budget: RunBudget::default(),
            seed: 0,
            gp_restarts: 4,
            acquisition: AcquisitionOptions::default(),
            eval_batch: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub theta: ParamVector,
    pub eval: Evaluation,
    pub tv: f64,
    pub prior: f64,
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub records: Vec<EvaluationRecord>,
    pub model: GpModel,
    pub theta_min: ParamVector,
    pub y_min: f64,
    pub reference_errors: Vec<f64>,
    pub ensemble: Vec<Member>,
    pub status: RunStatus,
    pub retrains: usize,
}

pub type EvalCache = HashMap<[u64; N_PARAMS], Evaluation>;

/// Evaluation cache seeded from earlier records, for resuming a run.
pub fn cache_from_records(records: &[EvaluationRecord]) -> EvalCache {
    records.iter().map(|r| (r.theta.key(), r.eval.clone())).collect()
}

struct Runner<'a> {
    objective: &'a dyn Objective,
    opts: &'a IdentificationOptions,
    cache: EvalCache,
    records: Vec<EvaluationRecord>,
    sink: &'a mut dyn FnMut(&EvaluationRecord) -> Result<()>,
    fits: u64,
}

impl<'a> Runner<'a> {
    fn evaluate_many(&mut self, thetas: &[ParamVector]) -> Vec<Evaluation> {
        let missing: Vec<ParamVector> = thetas.iter().filter(|t| !self.cache.contains_key(&t.key())).copied().collect();
        let fresh: Vec<Evaluation> = missing.par_iter().map(|t| self.objective.evaluate(t)).collect();
        for (t, e) in missing.iter().zip(fresh) {
            self.cache.insert(t.key(), e);
        }
        thetas.iter().map(|t| self.cache[&t.key()].clone()).collect()
    }

    fn push(&mut self, theta: ParamVector, eval: Evaluation, provenance: Provenance) -> Result<()> {
        let r = EvaluationRecord { theta, eval, provenance };
        (self.sink)(&r)?;
        self.records.push(r);
        Ok(())
    }

    fn fit(&mut self, warm: Option<&GpModel>) -> Result<GpModel> {
        let (x, y): (Vec<Vec<f64>>, Vec<f64>) = self
            .records
            .iter()
            .filter(|r| !r.eval.is_failed())
            .map(|r| (r.theta.0.to_vec(), r.eval.y))
            .unzip();
        if x.len() < 2 {
            return Err(Error::Numeric(format!("only {} successful evaluations; cannot fit the GP", x.len())));
        }
        let fit_opts = GpFitOptions {
            restarts: self.opts.gp_restarts,
            seed: self.opts.seed.wrapping_add(self.fits.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            warm_start: warm.map(|m| m.hyper.clone()),
            ..Default::default()
        };
        self.fits += 1;
        GpModel::fit(&x, &y, &self.opts.bounds.0, &fit_opts)
    }

    fn best(&self) -> Option<&EvaluationRecord> {
        self.records
            .iter()
            .filter(|r| !r.eval.is_failed())
            .min_by(|a, b| a.eval.y.total_cmp(&b.eval.y))
    }
}

/// One Bayesian-optimisation step: maximise EI under `model`, evaluate the
/// objective there and return the new record.
pub fn bo_step(
    model: &GpModel,
    records: &[EvaluationRecord],
    objective: &dyn Objective,
    bounds: &Bounds,
    seed: u64,
    step: u64,
    acq: &AcquisitionOptions,
) -> Result<EvaluationRecord> {
    let y_best = records
        .iter()
        .filter(|r| !r.eval.is_failed())
        .map(|r| r.eval.y)
        .fold(f64::INFINITY, f64::min);
    if !y_best.is_finite() {
        return Err(Error::Numeric("no successful evaluation to improve on".into()));
    }
    let (theta, _) = maximize_ei(model, &bounds.0, y_best, seed, step, acq);
    let theta = ParamVector::from_slice(&theta)?;
    let eval = objective.evaluate(&theta);
    Ok(EvaluationRecord { theta, eval, provenance: Provenance::Bo })
}

/// Full identification. `cache` holds evaluations from an interrupted run;
/// `sink` sees every new record in order.
pub fn run_identification(
    objective: &dyn Objective,
    opts: &IdentificationOptions,
    cache: EvalCache,
    sink: &mut dyn FnMut(&EvaluationRecord) -> Result<()>,
) -> Result<IdentificationResult> {
    opts.bounds.validate()?;
    opts.budget.validate()?;
    let budget = &opts.budget;
    let bounds = &opts.bounds.0;
    let mut run = Runner { objective, opts, cache, records: Vec::new(), sink, fits: 0 };

    let lhs: Vec<ParamVector> = latin_hypercube(budget.n_init, bounds, opts.seed)
        .into_iter()
        .map(|v| ParamVector::from_slice(&v))
        .collect::<Result<_>>()?;
    let evals = run.evaluate_many(&lhs);
    for (t, e) in lhs.into_iter().zip(evals) {
        run.push(t, e, Provenance::Lhs)?;
    }

    let mut model = run.fit(None)?;
    for step in 0..budget.n_bo {
        let y_best = run.best().map(|r| r.eval.y).expect("fit succeeded so some record is finite");
        let (theta, _) = maximize_ei(&model, bounds, y_best, opts.seed, step as u64, &opts.acquisition);
        let theta = ParamVector::from_slice(&theta)?;
        let eval = run.evaluate_many(&[theta]).remove(0);
        log::info!("BO step {}: y = {:.5e} (best {:.5e})", step + 1, eval.y, y_best.min(eval.y));
        run.push(theta, eval, Provenance::Bo)?;
        model = run.fit(Some(&model))?;
    }

    let best = run.best().expect("at least one finite record").clone();
    let theta_min = best.theta;
    let reference_errors = best.eval.errors.clone();
    if reference_errors.is_empty() {
        return Err(Error::Numeric("the best evaluation carries no beat errors".into()));
    }

    let mut ensemble = Vec::new();
    let mut abc_evals = 0usize;
    let mut round = 0u64;
    let status = 'outer: loop {
        let (y_min, var_min) = model.predict(&theta_min.0);
        let draw = rejection_sample_prior(&model, bounds, y_min, var_min, budget.n_prior_samples, opts.seed, round)?;
        let mut consecutive = 0usize;
        let mut exhausted_list = true;
        'walk: for chunk in draw.accepted.chunks(opts.eval_batch.max(1)) {
            let thetas: Vec<ParamVector> =
                chunk.iter().map(|s| ParamVector::from_slice(&s.theta)).collect::<Result<_>>()?;
            let evals = run.evaluate_many(&thetas);
            for ((t, e), sample) in thetas.into_iter().zip(evals).zip(chunk) {
                abc_evals += 1;
                let tv = if e.is_failed() || e.errors.is_empty() {
                    1.0
                } else {
                    tv_distance(&e.errors, &reference_errors)?
                };
                run.push(t, e.clone(), Provenance::Abc)?;
                if tv < budget.accept_threshold {
                    ensemble.push(Member { theta: t, eval: e, tv, prior: sample.p });
                    consecutive = 0;
                    if ensemble.len() == budget.n_posterior {
                        break 'outer RunStatus::Complete;
                    }
                } else {
                    consecutive += 1;
                }
                if abc_evals >= budget.max_abc_evaluations {
                    break 'outer RunStatus::BudgetExhausted;
                }
                if consecutive >= budget.retrain_after {
                    exhausted_list = false;
                    break 'walk;
                }
            }
        }
        log::info!(
            "ABC round {round}: {} accepted so far, {}; retraining",
            ensemble.len(),
            if exhausted_list { "candidate list exhausted" } else { "too many consecutive rejections" }
        );
        round += 1;
        model = run.fit(Some(&model))?;
    };

    Ok(IdentificationResult {
        y_min: best.eval.y,
        records: run.records,
        model,
        theta_min,
        reference_errors,
        ensemble,
        status,
        retrains: round as usize,
    })
}
