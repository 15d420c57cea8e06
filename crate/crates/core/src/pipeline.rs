//! File-level commands behind the `purkinje` binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::ecg::{ingest_beats, load_beats, BeatSet, EcgTrace};
use crate::error::{Error, Result};
use crate::fixtures::{self, VentricleShape};
use crate::forward::{synthetic_beats, EcgObjective, ForwardModel, Simulation};
use crate::inference::{
    cache_from_records, read_records, run_identification, IdentificationResult, ParamVector, RecordWriter, RunStatus,
    N_PARAMS, PARAM_NAMES,
};
use crate::mesh::{harmonic_flatten, load_surface, write_obj, write_volume, FlatMap, SurfaceFormat};

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

/// `path` if free, else the first free `path-1`, `path-2`, ...
pub fn versioned(path: &Path) -> PathBuf {
    if !path.exists() {
        return path.to_path_buf();
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (1..)
        .map(|k| path.with_file_name(format!("{name}-{k}")))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

/// Parses a parameter vector from JSON: either a list of twelve numbers or
/// an object keyed by parameter name.
pub fn parse_theta(text: &str) -> Result<ParamVector> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    match v {
        serde_json::Value::Array(items) => {
            let nums: Option<Vec<f64>> = items.iter().map(|x| x.as_f64()).collect();
            ParamVector::from_slice(&nums.ok_or_else(|| Error::Config("theta entries must be numbers".into()))?)
        }
        serde_json::Value::Object(map) => {
            let mut out = [0.0; N_PARAMS];
            for (k, name) in PARAM_NAMES.iter().enumerate() {
                out[k] = map
                    .get(*name)
                    .and_then(|x| x.as_f64())
                    .ok_or_else(|| Error::Config(format!("theta is missing {name}")))?;
            }
            Ok(ParamVector(out))
        }
        _ => Err(Error::Config("theta must be a list or an object".into())),
    }
}

pub fn cmd_flatten(surface: &Path, out: &Path) -> Result<FlatMap> {
    let format = SurfaceFormat::from_path(surface)
        .ok_or_else(|| Error::Config(format!("{}: expected a .obj or .off surface", surface.display())))?;
    let mesh = load_surface(surface, format)?;
    let fm = harmonic_flatten(&mesh).map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("{}: {m}", surface.display())),
        other => other,
    })?;
    write(out, serde_json::to_string(&fm)?)?;
    Ok(fm)
}

pub fn cmd_grow(cfg: &RunConfig, theta: &ParamVector, out: &Path) -> Result<()> {
    cfg.validate()?;
    let model = ForwardModel::new(cfg.anatomy()?, cfg.forward.clone())?;
    let trees = model.grow(theta)?;
    mkdir(out)?;
    for (side, tree) in ["left", "right"].iter().zip(&trees) {
        write(&out.join(format!("tree_{side}.json")), tree.to_json()?)?;
        write(&out.join(format!("tree_{side}.obj")), tree.to_obj())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardStatus {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub changes: Vec<f64>,
    pub min_time: f64,
    pub max_time: f64,
    pub qrs_onset: f64,
    pub qrs_duration: f64,
}

fn write_simulation(dir: &Path, theta: &ParamVector, model: &ForwardModel, sim: &Simulation) -> Result<ForwardStatus> {
    mkdir(dir)?;
    sim.ecg.write_csv(&dir.join("ecg.csv"))?;
    sim.activation.field.write_csv(&dir.join("activation.csv"))?;
    write(&dir.join("activation.vtk"), sim.activation.field.to_vtk(model.mesh()))?;
    for (side, tree) in ["left", "right"].iter().zip(&sim.trees) {
        write(&dir.join(format!("tree_{side}.json")), tree.to_json()?)?;
    }
    let status = ForwardStatus {
        theta: theta.0.to_vec(),
        sweeps: sim.activation.sweeps,
        converged: sim.activation.converged,
        changes: sim.activation.changes.clone(),
        min_time: sim.activation.field.min_time(),
        max_time: sim.activation.field.max_time(),
        qrs_onset: sim.ecg.qrs_onset,
        qrs_duration: sim.ecg.qrs_duration,
    };
    write(&dir.join("status.json"), to_json(&status)?)?;
    Ok(status)
}

/// Grows, activates and records one parameter vector. Outputs are written
/// even when the coupling does not converge; that case is then an error.
pub fn cmd_forward(cfg: &RunConfig, theta: &ParamVector, out: &Path) -> Result<ForwardStatus> {
    cfg.validate()?;
    let model = ForwardModel::new(cfg.anatomy()?, cfg.forward.clone())?;
    let sim = model.simulate(theta)?;
    let status = write_simulation(out, theta, &model, &sim)?;
    if !status.converged {
        return Err(Error::Numeric(format!("coupled activation did not converge in {} sweeps", status.sweeps)));
    }
    Ok(status)
}

/// Reference trace and beats for a run.
pub fn reference_data(cfg: &RunConfig, model: &ForwardModel) -> Result<(EcgTrace, Vec<EcgTrace>)> {
    match cfg.mode {
        Mode::Synthetic => {
            let theta = ParamVector::from_slice(&cfg.synthetic.theta)?;
            let reference = model.simulate(&theta)?.ecg;
            let beats = synthetic_beats(&reference, cfg.synthetic.n_beats, cfg.synthetic.noise, cfg.seed)?;
            Ok((reference, beats))
        }
        Mode::Beats => {
            let dir = cfg.beats_dir.as_ref().ok_or_else(|| Error::Config("beats mode requires beats_dir".into()))?;
            let set = ingest_beats(load_beats(dir)?)?;
            Ok((set.mean, set.beats))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMeta {
    pub index: usize,
    pub theta: Vec<f64>,
    pub y: f64,
    pub shift: f64,
    pub errors: Vec<f64>,
    pub tv: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStatus {
    pub status: RunStatus,
    pub records: usize,
    pub retrains: usize,
    pub ensemble: usize,
    pub theta_min: Vec<f64>,
    pub y_min: f64,
    /// Mean QRS power of the normalised reference.
    pub reference_power: f64,
    pub gain: f64,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub dir: PathBuf,
    pub status: FitStatus,
    pub result: IdentificationResult,
    pub resumed_records: usize,
}

/// Picks the run directory: resume an unfinished run with the same
/// configuration, otherwise the first free versioned name.
fn run_directory(out: &Path, cfg: &RunConfig) -> Result<(PathBuf, bool)> {
    if out.join("run_config.json").exists() && !out.join("status.json").exists() {
        let previous = RunConfig::load(&out.join("run_config.json"))?;
        if &previous == cfg {
            return Ok((out.to_path_buf(), true));
        }
    }
    let is_empty_dir = out.is_dir() && std::fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_none();
    if is_empty_dir {
        return Ok((out.to_path_buf(), false));
    }
    Ok((versioned(out), false))
}

/// Full identification into a run directory (`records.csv`, `gp_model.json`,
/// `ensemble/`, `run_config.json`, `status.json`, `reference.csv`).
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<FitOutcome> {
    cfg.validate()?;
    let (dir, resume) = run_directory(out, cfg)?;
    mkdir(&dir)?;
    let records_path = dir.join("records.csv");
    let existing = if resume && records_path.exists() { read_records(&records_path)? } else { Vec::new() };
    if resume {
        log::info!("resuming {} with {} recorded evaluations", dir.display(), existing.len());
    } else {
        write(&dir.join("run_config.json"), cfg.to_json()?)?;
    }

    let model = ForwardModel::new(cfg.anatomy()?, cfg.forward.clone())?;
    let (reference, beats) = reference_data(cfg, &model)?;
    let objective = EcgObjective::new(&model, reference, beats, cfg.normalize)?;
    objective.reference().write_csv(&dir.join("reference.csv"))?;

    let mut writer = RecordWriter::create(&records_path, &existing)?;
    let cache = cache_from_records(&existing);
    let mut seen = 0usize;
    let mut sink = |r: &crate::inference::EvaluationRecord| -> Result<()> {
        seen += 1;
        match existing.get(seen - 1) {
            Some(old) if old == r => Ok(()),
            Some(_) => Err(Error::Config(format!(
                "record {seen} differs from the interrupted run; refusing to resume {}",
                records_path.display()
            ))),
            None => writer.append(r),
        }
    };
    let result = run_identification(&objective, &cfg.identification(), cache, &mut sink)?;

    write(&dir.join("gp_model.json"), result.model.to_json()?)?;
    let ens_dir = dir.join("ensemble");
    mkdir(&ens_dir)?;
    for (i, m) in result.ensemble.iter().enumerate() {
        let sim = model.simulate(&m.theta)?;
        let mdir = ens_dir.join(format!("member_{i:03}"));
        mkdir(&mdir)?;
        sim.ecg.write_csv(&mdir.join("ecg.csv"))?;
        for (side, tree) in ["left", "right"].iter().zip(&sim.trees) {
            write(&mdir.join(format!("tree_{side}.json")), tree.to_json()?)?;
        }
        let meta = MemberMeta {
            index: i,
            theta: m.theta.0.to_vec(),
            y: m.eval.y,
            shift: m.eval.shift,
            errors: m.eval.errors.clone(),
            tv: m.tv,
            prior: m.prior,
        };
        write(&mdir.join("member.json"), to_json(&meta)?)?;
    }
    let status = FitStatus {
        status: result.status,
        records: result.records.len(),
        retrains: result.retrains,
        ensemble: result.ensemble.len(),
        theta_min: result.theta_min.0.to_vec(),
        y_min: result.y_min,
        reference_power: objective.reference().qrs_power(),
        gain: objective.gain(),
    };
    write(&dir.join("status.json"), to_json(&status)?)?;
    Ok(FitOutcome { dir, status, result, resumed_records: existing.len() })
}

/// Members stored under `run/ensemble`, in index order.
pub fn load_ensemble(run: &Path) -> Result<Vec<MemberMeta>> {
    let ens = run.join("ensemble");
    let entries = std::fs::read_dir(&ens).map_err(|e| Error::io(&ens, e))?;
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    let members: Vec<MemberMeta> = dirs
        .iter()
        .map(|d| {
            let p = d.join("member.json");
            serde_json::from_str(&read(&p)?).map_err(|e| Error::parse(p.display().to_string(), e.to_string()))
        })
        .collect::<Result<_>>()?;
    if members.is_empty() {
        return Err(Error::Config(format!("{} holds no ensemble members", ens.display())));
    }
    Ok(members)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacedMember {
    pub index: usize,
    pub fitted_root_time: f64,
    pub fitted_max_time: f64,
    pub paced_max_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaceSummary {
    pub members: Vec<PacedMember>,
    /// Member indices with the smallest, median and largest paced maximum
    /// activation time.
    pub min: usize,
    pub median: usize,
    pub max: usize,
}

/// Members ordered by paced maximum activation time; returns (min, median,
/// max) picks. Ties keep member order.
pub fn select_extremes(members: &[PacedMember]) -> (usize, usize, usize) {
    let mut order: Vec<&PacedMember> = members.iter().collect();
    order.sort_by(|a, b| a.paced_max_time.total_cmp(&b.paced_max_time));
    let n = order.len();
    (order[0].index, order[(n - 1) / 2].index, order[n - 1].index)
}

/// Re-solves every ensemble member with both roots at time 0.
pub fn cmd_pace(run: &Path, out: Option<&Path>) -> Result<(PathBuf, PaceSummary)> {
    let cfg = RunConfig::load(&run.join("run_config.json"))?;
    let members = load_ensemble(run)?;
    let model = ForwardModel::new(cfg.anatomy()?, cfg.forward.clone())?;
    let dir = versioned(&out.map(Path::to_path_buf).unwrap_or_else(|| run.join("paced")));
    mkdir(&dir)?;
    let mut paced = Vec::with_capacity(members.len());
    for m in &members {
        let theta = ParamVector::from_slice(&m.theta)?;
        let trees = model.grow(&theta)?;
        let fitted = model.activate(&trees, &theta)?;
        let paced_theta = theta.with_root_time(0.0);
        let act = model.activate(&trees, &paced_theta)?;
        let ecg = model.ecg(&act.field)?;
        let sim = Simulation { trees, activation: act, ecg };
        write_simulation(&dir.join(format!("member_{:03}", m.index)), &paced_theta, &model, &sim)?;
        paced.push(PacedMember {
            index: m.index,
            fitted_root_time: theta.root_time(),
            fitted_max_time: fitted.field.max_time(),
            paced_max_time: sim.activation.field.max_time(),
        });
    }
    let (min, median, max) = select_extremes(&paced);
    let summary = PaceSummary { members: paced, min, median, max };
    write(&dir.join("summary.json"), to_json(&summary)?)?;
    Ok((dir, summary))
}

/// Aligns, detrends and summarises a directory of beats; writes the mean,
/// envelope and processed beats.
pub fn cmd_ingest_beats(input: &Path, out: &Path) -> Result<BeatSet> {
    let set = ingest_beats(load_beats(input)?)?;
    mkdir(&out.join("beats"))?;
    set.mean.write_csv(&out.join("mean.csv"))?;
    for (name, env) in [("lower", &set.lower), ("upper", &set.upper)] {
        let trace = EcgTrace { leads: env.clone(), ..set.mean.clone() };
        trace.write_csv(&out.join(format!("{name}.csv")))?;
    }
    for (i, b) in set.beats.iter().enumerate() {
        b.write_csv(&out.join("beats").join(format!("beat_{i:03}.csv")))?;
    }
    Ok(set)
}

/// Writes the bundled meshes and a configuration that points at them.
pub fn cmd_fixtures(out: &Path) -> Result<()> {
    mkdir(out)?;
    let a = fixtures::ventricles(&VentricleShape::default())?;
    write(&out.join("ventricle_volume.txt"), write_volume(&a.volume))?;
    write(&out.join("ventricle_left.obj"), write_obj(&a.left))?;
    write(&out.join("ventricle_right.obj"), write_obj(&a.right))?;
    write(&out.join("electrodes.json"), to_json(&a.electrodes)?)?;
    write(&out.join("disk.obj"), write_obj(&fixtures::disk_mesh(10)))?;
    write(&out.join("hemisphere.obj"), write_obj(&fixtures::hemisphere_mesh(13, 10.0)))?;
    write(&out.join("cube.txt"), write_volume(&fixtures::cube_mesh(20, 10.0)))?;
    let abs = |name: &str| -> Result<PathBuf> {
        let p = out.join(name);
        std::fs::canonicalize(&p).map_err(|e| Error::io(&p, e))
    };
    let cfg = RunConfig {
        anatomy: crate::config::AnatomySource::Files {
            volume: abs("ventricle_volume.txt")?,
            left_surface: abs("ventricle_left.obj")?,
            right_surface: abs("ventricle_right.obj")?,
        },
        electrodes: Some(a.electrodes),
        roots: Some(a.roots),
        ..RunConfig::default()
    };
    write(&out.join("config.json"), cfg.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_from_list_or_names() {
        let list = serde_json::to_string(&crate::inference::synthetic_reference().0.to_vec()).unwrap();
        let a = parse_theta(&list).unwrap();
        let obj: serde_json::Map<String, serde_json::Value> =
            PARAM_NAMES.iter().zip(a.0).map(|(n, v)| (n.to_string(), v.into())).collect();
        let b = parse_theta(&serde_json::to_string(&obj).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(parse_theta("[1, 2]").is_err());
    }

    #[test]
    fn versioning_never_reuses_a_path() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("run");
        assert_eq!(versioned(&p), p);
        mkdir(&p).unwrap();
        assert_eq!(versioned(&p), tmp.path().join("run-1"));
        mkdir(&tmp.path().join("run-1")).unwrap();
        assert_eq!(versioned(&p), tmp.path().join("run-2"));
    }

    #[test]
    fn extremes_by_paced_time() {
        let m = |index, t| PacedMember { index, fitted_root_time: 0.0, fitted_max_time: 0.0, paced_max_time: t };
        let members = vec![m(0, 5.0), m(1, 1.0), m(2, 9.0), m(3, 3.0), m(4, 7.0)];
        assert_eq!(select_extremes(&members), (1, 0, 2));
    }
}
