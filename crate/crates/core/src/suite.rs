//! Experiment grids over meshes, cavity kinds, perturbation angles and
//! methods, with JSON-lines reports and a per-cell CSV summary.

use std::io::Write;
use std::path::Path;

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    run_trial, sample_goal, CavityKind, ControllerConfig, KittingTrial, Method, SceneConfig,
    TrialReport,
};
use crate::error::{Error, Result};
use crate::estimator::EstimatorSpec;
use crate::mesh::TriMesh;
use crate::render::CameraModel;
use crate::rng::stream;
use crate::so3::{rad, sample_bounded, sample_with_angle, UnitQuaternion, Vec3};

/// Which axes initial perturbations are drawn about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbationAxes {
    /// Uniform over the sphere.
    Any,
    /// Uniform over horizontal axes, so the rotation is purely out of plane.
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Corpus ids to run; empty means every mesh.
    pub meshes: Vec<String>,
    pub cavity_kinds: Vec<CavityKind>,
    pub angles_deg: Vec<f64>,
    pub trials_per_cell: usize,
    pub methods: Vec<Method>,
    pub perturbation_axes: PerturbationAxes,
    /// Draw angles uniformly below each grid angle instead of exactly at it.
    pub bounded: bool,
    pub controller: ControllerConfig,
    pub scene: SceneConfig,
    pub camera: CameraModel,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            meshes: Vec::new(),
            cavity_kinds: vec![CavityKind::Prismatic],
            angles_deg: vec![30.0, 60.0],
            trials_per_cell: 10,
            methods: vec![
                Method::Controller {
                    estimator: EstimatorSpec::brute_force(10.0),
                },
                Method::Baseline2d,
                Method::BaselineRandom,
            ],
            perturbation_axes: PerturbationAxes::Any,
            bounded: false,
            controller: ControllerConfig::default(),
            scene: SceneConfig::default(),
            camera: CameraModel::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cavity_kinds.is_empty() || self.angles_deg.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("suite grid has an empty axis".into()));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::Config("trials_per_cell must be at least 1".into()));
        }
        if let Some(a) = self.angles_deg.iter().find(|a| !(0.0..=180.0).contains(*a)) {
            return Err(Error::Config(format!("angle {a} outside [0, 180]")));
        }
        for m in &self.methods {
            if let Method::Controller { estimator } = m {
                estimator.validate()?;
            }
        }
        self.controller.validate()?;
        self.scene.validate()?;
        self.camera.validate()
    }
}

/// Draws the initial perturbation for one trial.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    angle_deg: f64,
    axes: PerturbationAxes,
    bounded: bool,
) -> Result<UnitQuaternion> {
    let angle = rad(angle_deg);
    match axes {
        PerturbationAxes::Any if bounded => sample_bounded(rng, angle),
        PerturbationAxes::Any => Ok(sample_with_angle(rng, angle)),
        PerturbationAxes::Horizontal => {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let a = if bounded {
                rng.random::<f64>() * angle
            } else {
                angle
            };
            Ok(UnitQuaternion::from_axis_angle(
                &Vec3::new(phi.cos(), phi.sin(), 0.0),
                a,
            ))
        }
    }
}

/// Expands the grid into trials. Goal pose and perturbation depend only on
/// `(seed, mesh, kind, angle, index)`, so every method sees the same
/// scenario.
pub fn build_trials(
    corpus: &[(String, TriMesh)],
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<Vec<KittingTrial>> {
    cfg.validate()?;
    let selected: Vec<&(String, TriMesh)> = if cfg.meshes.is_empty() {
        corpus.iter().collect()
    } else {
        cfg.meshes
            .iter()
            .map(|id| {
                corpus
                    .iter()
                    .find(|(i, _)| i == id)
                    .ok_or_else(|| Error::Config(format!("mesh {id} not in corpus")))
            })
            .collect::<Result<_>>()?
    };
    let mut trials = Vec::new();
    for (id, mesh) in selected {
        let object = mesh.centered().with_name(id.clone());
        for &kind in &cfg.cavity_kinds {
            for &angle in &cfg.angles_deg {
                for i in 0..cfg.trials_per_cell {
                    let key = format!("{id}/{}/{angle}/{i}", kind.as_str());
                    let mut rng = stream(seed, &key);
                    let goal = sample_goal(&object, kind, &cfg.scene, &mut rng)?;
                    let perturbation =
                        sample_perturbation(&mut rng, angle, cfg.perturbation_axes, cfg.bounded)?;
                    for method in &cfg.methods {
                        trials.push(KittingTrial::new(
                            format!("{key}/{}", method.label()),
                            &object,
                            kind,
                            goal,
                            perturbation,
                            cfg.camera,
                            method.clone(),
                            cfg.controller,
                            cfg.scene,
                            seed,
                        )?);
                    }
                }
            }
        }
    }
    Ok(trials)
}

/// Grid angle a trial was generated for, parsed back from its id.
fn grid_angle(trial_id: &str) -> f64 {
    trial_id
        .split('/')
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN)
}

/// Runs every trial of the grid; reports come back in grid order.
pub fn run_suite(
    corpus: &[(String, TriMesh)],
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<Vec<TrialReport>> {
    let trials = build_trials(corpus, cfg, seed)?;
    run_trials(&trials)
}

pub fn run_trials(trials: &[KittingTrial]) -> Result<Vec<TrialReport>> {
    #[cfg(feature = "parallel")]
    let iter = trials.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = trials.iter();
    iter.map(|t| {
        let mut r = run_trial(t)?;
        r.init_angle_deg = grid_angle(&t.trial_id);
        Ok(r)
    })
    .collect()
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub object: String,
    pub cavity_kind: CavityKind,
    pub init_angle_deg: f64,
    pub method: String,
    pub trials: usize,
    pub successes: usize,
    pub mean_fit: Option<f64>,
    pub median_fit: Option<f64>,
    pub mean_steps: Option<f64>,
    /// Trials that produced a percent fit (no estimator or setup error).
    pub completed: usize,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Aggregates reports per (object, cavity kind, angle, method), in order of
/// first appearance.
pub fn summarize(reports: &[TrialReport]) -> Vec<SummaryRow> {
    let mut rows: Vec<(SummaryRow, Vec<f64>, Vec<usize>)> = Vec::new();
    for r in reports {
        let pos = rows.iter().position(|(row, _, _)| {
            row.object == r.object
                && row.cavity_kind == r.cavity_kind
                && row.init_angle_deg.to_bits() == r.init_angle_deg.to_bits()
                && row.method == r.method
        });
        let idx = match pos {
            Some(i) => i,
            None => {
                rows.push((
                    SummaryRow {
                        object: r.object.clone(),
                        cavity_kind: r.cavity_kind,
                        init_angle_deg: r.init_angle_deg,
                        method: r.method.clone(),
                        trials: 0,
                        successes: 0,
                        mean_fit: None,
                        median_fit: None,
                        mean_steps: None,
                        completed: 0,
                    },
                    Vec::new(),
                    Vec::new(),
                ));
                rows.len() - 1
            }
        };
        let (row, fits, steps) = &mut rows[idx];
        row.trials += 1;
        row.successes += r.success as usize;
        if let Some(f) = r.percent_fit {
            fits.push(f);
            steps.push(r.applied_steps());
        }
    }
    rows.into_iter()
        .map(|(mut row, mut fits, steps)| {
            row.completed = fits.len();
            if !fits.is_empty() {
                row.mean_fit = Some(fits.iter().sum::<f64>() / fits.len() as f64);
                row.mean_steps = Some(steps.iter().sum::<usize>() as f64 / steps.len() as f64);
            }
            row.median_fit = median(&mut fits);
            row
        })
        .collect()
}

pub fn write_jsonl<W: Write>(reports: &[TrialReport], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("results", e))?;
    }
    out.flush().map_err(|e| Error::io("results", e))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("summary", e))?;
    Ok(())
}

/// Measured times of one trial, kept apart from its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub trial_id: String,
    pub wall_time: f64,
    pub step_latencies: Vec<f64>,
}

/// Moves wall time and step latencies out of `reports`, leaving zeros, so
/// the reports depend only on configuration and seed.
pub fn split_timing(reports: &[TrialReport]) -> (Vec<TrialReport>, Vec<TrialTiming>) {
    reports
        .iter()
        .map(|r| {
            let timing = TrialTiming {
                trial_id: r.trial_id.clone(),
                wall_time: r.wall_time,
                step_latencies: r.steps.iter().map(|s| s.latency).collect(),
            };
            let mut r = r.clone();
            r.wall_time = 0.0;
            r.steps.iter_mut().for_each(|s| s.latency = 0.0);
            (r, timing)
        })
        .unzip()
}

/// Writes `results.jsonl` (timings zeroed), `timing.jsonl` and
/// `summary.csv` into `dir`.
pub fn write_outputs(dir: &Path, reports: &[TrialReport]) -> Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let open = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(p.display().to_string(), e))
    };
    let (deterministic, timings) = split_timing(reports);
    write_jsonl(&deterministic, open("results.jsonl")?)?;
    let mut t = open("timing.jsonl")?;
    for timing in &timings {
        serde_json::to_writer(&mut t, timing)?;
        t.write_all(b"\n").map_err(|e| Error::io("timing", e))?;
    }
    t.flush().map_err(|e| Error::io("timing", e))?;
    let rows = summarize(reports);
    write_summary_csv(&rows, open("summary.csv")?)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::box_mesh;
    use crate::so3::deg;

    fn tiny() -> SuiteConfig {
        SuiteConfig {
            angles_deg: vec![30.0, 60.0],
            trials_per_cell: 2,
            methods: vec![Method::Controller {
                estimator: EstimatorSpec::Perfect,
            }],
            scene: SceneConfig {
                fit_samples: 500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn perturbation_modes() {
        let mut rng = stream(1, "p");
        for _ in 0..50 {
            let q =
                sample_perturbation(&mut rng, 60.0, PerturbationAxes::Horizontal, false).unwrap();
            let (axis, angle) = q.axis_angle();
            assert!((deg(angle) - 60.0).abs() < 1e-9);
            assert!(axis.z.abs() < 1e-9);
            let b = sample_perturbation(&mut rng, 30.0, PerturbationAxes::Any, true).unwrap();
            assert!(deg(b.angle()) <= 30.0 + 1e-9);
        }
    }

    #[test]
    fn grid_shape_and_summary() {
        let corpus = vec![
            ("a".to_string(), box_mesh([0.1, 0.06, 0.04])),
            ("b".to_string(), box_mesh([0.08, 0.08, 0.03])),
        ];
        let reports = run_suite(&corpus, &tiny(), 7).unwrap();
        assert_eq!(reports.len(), 2 * 2 * 2);
        let rows = summarize(&reports);
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.trials, 2);
            assert_eq!(row.completed, 2);
            assert_eq!(row.successes, 2, "{row:?}");
        }
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "object,cavity_kind,init_angle_deg,method,trials,successes,mean_fit,median_fit,mean_steps,completed\n"
        ));
    }

    #[test]
    fn unknown_mesh_and_bad_grid_rejected() {
        let corpus = vec![("a".to_string(), box_mesh([0.1, 0.06, 0.04]))];
        let cfg = SuiteConfig {
            meshes: vec!["zzz".into()],
            ..tiny()
        };
        assert!(build_trials(&corpus, &cfg, 1).is_err());
        let cfg = SuiteConfig {
            trials_per_cell: 0,
            ..tiny()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
