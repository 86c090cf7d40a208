//! Experiment orchestration: configs, multi-seed runs, averaging and output.

mod aggregate;
mod config;
mod plot;
mod presets;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use aggregate::{AggregateResult, AggregateRow, AGGREGATE_CSV_HEADER};
pub use config::{BatchSpec, ExperimentConfig, Method, ProblemSpec, SgdStep};
pub use plot::{emit_plot, render_svg, Baseline};
pub use presets::{preset, LowerBoundJob, Preset, PRESET_NAMES};

use crate::error::{Error, Result};
use crate::multistage::{multistage_run, PanSchedule};
use crate::optimizers::{nesterov_run, sgd_run, shb_avg_run, shb_run, RunConfig, Trajectory};
use crate::problems::QuadraticProblem;
use crate::schedules::{constant_params, misestimated_exp_schedule, ExpSchedule};
use crate::twophase::{twophase_run, TwoPhaseConfig};

/// Runs one method for one seed.
pub fn run_method(p: &QuadraticProblem, method: &Method, cfg: &RunConfig, seed: u64) -> Result<Trajectory> {
    let (l, mu) = (p.smoothness(), p.strong_convexity());
    match *method {
        Method::Sgd(step) => {
            let alpha = match step {
                SgdStep::InverseL => 1.0 / l,
                SgdStep::InverseMaxSample => 1.0 / p.max_sample_smoothness(),
            };
            sgd_run(p, |_| alpha, cfg, seed)
        }
        Method::ShbConst { a } => shb_run(p, &constant_params(l, mu, a)?, cfg, seed),
        Method::ShbExp { tau, nu_l, nu_mu, scale } => {
            let sched = misestimated_exp_schedule(l, mu, nu_l, nu_mu, cfg.horizon, tau, scale)?;
            shb_avg_run(p, &sched, cfg, seed)
        }
        Method::Multistage(mode) => multistage_run(p, cfg, seed, mode),
        Method::TwoPhase { c } => twophase_run(p, &TwoPhaseConfig::new(c, cfg.horizon)?, cfg, seed),
        Method::Nesterov => nesterov_run(p, &ExpSchedule::new(l, mu, cfg.horizon, 1.0)?, cfg, seed),
        Method::PanMultistage { c } => shb_run(p, &PanSchedule::new(cfg.horizon, l, mu, c)?, cfg, seed),
    }
}

/// Output of [`run_experiment`]: one aggregate per method, plus every
/// trajectory (outer index method, inner index seed, in config order).
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub kappa: f64,
    pub aggregates: Vec<AggregateResult>,
    pub trajectories: Vec<Vec<Trajectory>>,
}

impl ExperimentResult {
    pub fn all_diverged(&self) -> bool {
        self.trajectories.iter().flatten().all(|t| t.diverged)
    }

    pub fn aggregate(&self, method: &Method) -> Option<&AggregateResult> {
        let label = method.to_string();
        self.aggregates.iter().find(|a| a.label == label)
    }
}

/// Builds the problem once and runs every (method, seed) pair in parallel.
///
/// When `cfg.output_dir` is set, writes `<out>/<name>/<method>/seed_<s>.csv`
/// and `<out>/<name>/<method>/aggregate.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let p = cfg.problem.build()?;
    run_experiment_on(cfg, &p)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, p: &QuadraticProblem) -> Result<ExperimentResult> {
    cfg.validate()?;
    let run_cfg = cfg.run_config(p)?;
    let jobs: Vec<(usize, u64)> = (0..cfg.methods.len())
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut done = jobs
        .par_iter()
        .map(|&(m, s)| run_method(p, &cfg.methods[m], &run_cfg, s).map(|t| (m, t)))
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    let mut trajectories = Vec::with_capacity(cfg.methods.len());
    let mut aggregates = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let runs: Vec<Trajectory> = done.by_ref().take(cfg.seeds.len()).map(|(_, t)| t).collect();
        aggregates.push(AggregateResult::from_runs(method.to_string(), &runs)?);
        trajectories.push(runs);
    }
    let result = ExperimentResult { name: cfg.name.clone(), kappa: p.kappa(), aggregates, trajectories };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&result, cfg, dir)?;
    }
    Ok(result)
}

fn write_outputs(res: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let root = dir.join(&res.name);
    for ((method, agg), runs) in cfg.methods.iter().zip(&res.aggregates).zip(&res.trajectories) {
        let mdir = root.join(method.file_stem());
        std::fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
        for t in runs {
            t.write_csv(mdir.join(format!("seed_{}.csv", t.seed)))?;
        }
        agg.write_csv(mdir.join("aggregate.csv"))?;
    }
    let cfg_path = root.join("config.txt");
    std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(())
}

/// Where [`run_experiment`] puts a method's aggregate CSV.
pub fn aggregate_path(out: &Path, experiment: &str, method: &Method) -> PathBuf {
    out.join(experiment).join(method.file_stem()).join("aggregate.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multistage::MomentumMode;

    fn small(methods: Vec<Method>, batch: BatchSpec, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            problem: ProblemSpec::Regression { n: 80, d: 5, kappa: 20.0, noise: 1e-3, seed: 7 },
            methods,
            batch,
            horizon: 120,
            seeds,
            record_every: None,
            w0: 0.0,
            output_dir: None,
        }
    }

    #[test]
    fn single_deterministic_run_equals_aggregate() {
        let cfg = small(vec![Method::ShbConst { a: 1.0 }], BatchSpec::Fraction(1.0), vec![4]);
        let res = run_experiment(&cfg).unwrap();
        let t = &res.trajectories[0][0];
        let agg = &res.aggregates[0];
        assert_eq!(agg.rows.len(), t.records.len());
        for (row, rec) in agg.rows.iter().zip(&t.records) {
            assert_eq!(row.k, rec.k);
            assert_eq!(row.mean_grad_norm, rec.grad_norm);
            assert_eq!(row.mean_dist, rec.dist);
        }
    }

    #[test]
    fn seed_isolation() {
        let methods = vec![Method::Sgd(SgdStep::InverseL), Method::Multistage(MomentumMode::PerStage)];
        let a = run_experiment(&small(methods.clone(), BatchSpec::Absolute(8), vec![1, 2, 3])).unwrap();
        let b = run_experiment(&small(methods, BatchSpec::Absolute(8), vec![3, 1])).unwrap();
        // seed 3 is third in one run and first in the other
        assert_eq!(a.trajectories[0][2], b.trajectories[0][0]);
        assert_eq!(a.trajectories[1][0], b.trajectories[1][1]);
    }

    #[test]
    fn every_method_runs() {
        let methods = vec![
            Method::Sgd(SgdStep::InverseMaxSample),
            Method::ShbConst { a: 0.5 },
            Method::shb_exp(1.0),
            Method::Multistage(MomentumMode::ConstantHeuristic),
            Method::TwoPhase { c: 0.5 },
            Method::Nesterov,
            Method::PanMultistage { c: 2.0 },
        ];
        let res = run_experiment(&small(methods.clone(), BatchSpec::Fraction(0.5), vec![0, 1])).unwrap();
        assert_eq!(res.aggregates.len(), methods.len());
        for (m, agg) in methods.iter().zip(&res.aggregates) {
            assert_eq!(agg.label, m.to_string());
            assert_eq!(agg.rows.last().unwrap().k, 120);
            assert!(res.aggregate(m).is_some());
        }
        assert!(!res.all_diverged());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(vec![Method::Nesterov], BatchSpec::Absolute(10), vec![5]);
        cfg.output_dir = Some(dir.path().to_path_buf());
        let res = run_experiment(&cfg).unwrap();
        let path = aggregate_path(dir.path(), "small", &Method::Nesterov);
        let back = AggregateResult::read_csv("nesterov", &path).unwrap();
        assert_eq!(back, res.aggregates[0]);
        assert!(path.with_file_name("seed_5.csv").exists());
        assert!(dir.path().join("small/config.txt").exists());
    }
}
