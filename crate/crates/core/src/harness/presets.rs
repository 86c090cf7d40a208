//! Ready-made configurations for the standard experiments.

use super::config::{BatchSpec, ExperimentConfig, Method, ProblemSpec, SgdStep};
use crate::error::{Error, Result};
use crate::multistage::{min_batch_size, MomentumMode};
use crate::schedules::StepScale;

pub const PRESET_NAMES: [&str; 7] = ["fig2", "fig3", "fig4d", "fig5grid", "fig6grid", "appC_mis", "lowerbound_fit"];

/// Threshold-regression job: `beta*` for each batch size, then a line fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundJob {
    pub n: usize,
    pub b_values: Vec<usize>,
    pub grid_size: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Experiments(Vec<ExperimentConfig>),
    LowerBound(LowerBoundJob),
}

impl Preset {
    pub fn experiments(&self) -> &[ExperimentConfig] {
        match self {
            Preset::Experiments(v) => v,
            Preset::LowerBound(_) => &[],
        }
    }
}

const NOISY_N: usize = 10_000;
const NOISY_D: usize = 20;

fn noisy(name: String, kappa: f64, noise: f64, methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig {
        name,
        problem: ProblemSpec::Regression { n: NOISY_N, d: NOISY_D, kappa, noise, seed: 0 },
        methods,
        batch: BatchSpec::Fraction(0.9),
        horizon: 7000,
        seeds: vec![1, 2, 3],
        record_every: None,
        w0: 0.0,
        output_dir: None,
    }
}

fn noisy_methods() -> Vec<Method> {
    vec![
        Method::Sgd(SgdStep::InverseL),
        Method::ShbConst { a: 1.0 },
        Method::Multistage(MomentumMode::PerStage),
        Method::Multistage(MomentumMode::ConstantHeuristic),
        Method::TwoPhase { c: 0.5 },
        Method::Nesterov,
    ]
}

fn label(x: f64) -> String {
    format!("{x:e}").replace('.', "p")
}

pub fn preset(name: &str) -> Result<Preset> {
    let p = match name {
        "fig2" => Preset::Experiments(vec![noisy("fig2".into(), 500.0, 1e-4, noisy_methods())]),
        "fig5grid" => {
            let mut v = Vec::new();
            for kappa in [1000.0, 500.0, 200.0] {
                for noise in [1e-2, 1e-4, 1e-6] {
                    v.push(noisy(format!("fig5_k{kappa}_r{}", label(noise)), kappa, noise, noisy_methods()));
                }
            }
            Preset::Experiments(v)
        }
        "fig3" => {
            let (n, kappa) = (100, 5000.0);
            let base = ExperimentConfig {
                name: "fig3_pan_b1".into(),
                problem: ProblemSpec::Diagonal { n, kappa },
                methods: vec![Method::PanMultistage { c: 2.0 }],
                batch: BatchSpec::Absolute(1),
                horizon: 5000,
                seeds: vec![1, 2, 3, 4, 5],
                record_every: None,
                w0: 100.0,
                output_dir: None,
            };
            let ours = ExperimentConfig {
                name: "fig3_multistage".into(),
                methods: vec![Method::Multistage(MomentumMode::PerStage)],
                batch: BatchSpec::Absolute(min_batch_size(n, kappa, 1.0)),
                ..base.clone()
            };
            Preset::Experiments(vec![base, ours])
        }
        "fig4d" => Preset::Experiments(vec![ExperimentConfig {
            name: "fig4d".into(),
            problem: ProblemSpec::Diagonal { n: 100, kappa: 10.0 },
            methods: vec![Method::ShbConst { a: 1.0 }, Method::Sgd(SgdStep::InverseMaxSample)],
            batch: BatchSpec::Absolute(10),
            horizon: 3000,
            seeds: vec![1, 2, 3, 4, 5],
            record_every: None,
            w0: 1.0,
            output_dir: None,
        }]),
        "fig6grid" => {
            let mut v = Vec::new();
            for e in 3..=11 {
                let kappa = f64::from(1u32 << e);
                let base = ExperimentConfig {
                    name: String::new(),
                    problem: ProblemSpec::Feasible { n: NOISY_N, d: NOISY_D, kappa, seed: 0 },
                    methods: vec![Method::ShbConst { a: 1.0 }],
                    batch: BatchSpec::Fraction(1.0),
                    horizon: 2000,
                    seeds: vec![1, 2, 3, 4, 5],
                    record_every: None,
                    w0: 0.0,
                    output_dir: None,
                };
                for tenths in 1..=10 {
                    v.push(ExperimentConfig {
                        name: format!("fig6_k{kappa}_xi{tenths}"),
                        batch: BatchSpec::Fraction(tenths as f64 / 10.0),
                        ..base.clone()
                    });
                }
                v.push(ExperimentConfig {
                    name: format!("fig6_k{kappa}_baselines"),
                    methods: vec![Method::Sgd(SgdStep::InverseL), Method::shb_exp(1.0)],
                    batch: BatchSpec::Fraction(0.3),
                    ..base
                });
            }
            Preset::Experiments(v)
        }
        "appC_mis" => {
            let exp = |nu_l, nu_mu, scale| Method::ShbExp { tau: 1.0, nu_l, nu_mu, scale };
            Preset::Experiments(vec![noisy(
                "appC_mis".into(),
                500.0,
                1e-4,
                vec![
                    exp(1.0, 1.0, StepScale::Half),
                    exp(4.0, 1.0, StepScale::Half),
                    exp(0.25, 1.0, StepScale::Half),
                    exp(1.0, 0.1, StepScale::Half),
                    exp(1.0, 10.0, StepScale::Half),
                ],
            )])
        }
        "lowerbound_fit" => Preset::LowerBound(LowerBoundJob {
            n: 100,
            b_values: (1..=19).map(|i| 5 * i).collect(),
            grid_size: 2048,
            tol: 1e-4,
        }),
        other => {
            return Err(Error::UnknownPreset(format!("{other} (known: {})", PRESET_NAMES.join(", "))));
        }
    };
    Ok(p)
}
