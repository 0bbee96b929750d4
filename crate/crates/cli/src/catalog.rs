//! Built-in scenarios.

use cbilab::mechanisms::{CbiParams, LevyMeasure};
use cbilab::metrics::Observable;
use cbilab::sde::{
    CbireParams, CnbiParams, Drift, EnvironmentParams, ModelSpec, NonlinearRates, PowerRate,
    TestFunction,
};

use crate::config::{Experiment, Scenario, SimSection};

fn cir() -> CbiParams {
    CbiParams::diffusion(1.0, 1.0, 2f64.sqrt())
}

fn sim(dt: f64, horizon: f64, seed: u64, paths: usize, every: f64) -> SimSection {
    SimSection {
        dt,
        horizon,
        seed,
        paths,
        record_every: Some(every),
        record_times: None,
        jump_cutoff: None,
    }
}

fn cnbi() -> ModelSpec {
    ModelSpec::Cnbi(CnbiParams {
        rates: NonlinearRates {
            gamma0: Drift::Affine { beta: 1.0, b: 1.0 },
            gamma1: PowerRate::new(1.0, 1.5),
            gamma2: PowerRate::new(1.0, 1.2),
        },
        m: LevyMeasure::FiniteAtoms {
            atoms: vec![(0.5, 1.0)],
        },
        nu: LevyMeasure::Zero,
    })
}

fn cbire() -> ModelSpec {
    ModelSpec::Cbire(CbireParams {
        cbi: cir(),
        env: EnvironmentParams {
            b_e: 0.0,
            sigma_e: 0.3,
            mu_e: LevyMeasure::Zero,
        },
    })
}

fn heavy_cbi() -> ModelSpec {
    ModelSpec::Cbi(
        CbiParams::diffusion(0.5, 1.0, 1.0)
            .with_m(LevyMeasure::PowerLawDensity {
                coefficient: 0.5,
                exponent: -2.5,
                cutoff: None,
            })
            .with_nu(LevyMeasure::PowerLawDensity {
                coefficient: 0.5,
                exponent: -1.5,
                cutoff: None,
            }),
    )
}

fn scenario(name: &str, result: &str, model: ModelSpec, sim: SimSection, e: Experiment) -> Scenario {
    Scenario {
        name: name.into(),
        result: result.into(),
        model,
        sim,
        experiment: e,
    }
}

/// All presets in catalog order.
pub fn catalog() -> Vec<Scenario> {
    let quick = || sim(1e-3, 1.0, 1, 1, 1.0);
    vec![
        scenario(
            "cir-check",
            "Grey's condition, log-moment and invariant-law criteria",
            ModelSpec::Cbi(cir().with_nu(LevyMeasure::FiniteAtoms {
                atoms: vec![(1.0, 1.0)],
            })),
            quick(),
            Experiment::MechanismReport,
        ),
        scenario(
            "cir-flow",
            "Laplace transform through the flow equation",
            ModelSpec::Cbi(cir()),
            quick(),
            Experiment::FlowEval {
                lambda: 1.0,
                times: vec![0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            },
        ),
        scenario(
            "cir-w1",
            "W1 contraction at the dissipativity rate",
            ModelSpec::Cbi(cir()),
            sim(1e-3, 3.0, 2024, 10_000, 0.25),
            Experiment::W1Decay { x0: 0.0, y0: 5.0 },
        ),
        scenario(
            "cir-wlog",
            "W_log contraction of CBI processes",
            ModelSpec::Cbi(cir()),
            sim(1e-3, 3.0, 2025, 10_000, 0.25),
            Experiment::WlogDecay { x0: 0.0, y0: 5.0 },
        ),
        scenario(
            "cir-tv",
            "total-variation ergodicity under Grey's condition",
            ModelSpec::Cbi(cir().with_nu(LevyMeasure::FiniteAtoms {
                atoms: vec![(1.0, 1.0)],
            })),
            sim(2e-3, 4.0, 606, 100_000, 0.5),
            Experiment::TvDecay {
                x0: 0.0,
                y0: 5.0,
                bins: 100,
            },
        ),
        scenario(
            "cir-invariant",
            "weak convergence to the invariant law",
            ModelSpec::Cbi(cir()),
            sim(2e-3, 6.0, 7, 20_000, 0.5),
            Experiment::InvariantConvergence {
                x0: 5.0,
                lambda: 1.0,
            },
        ),
        scenario(
            "cir-slln",
            "strong law of large numbers for time averages",
            ModelSpec::Cbi(cir()),
            sim(1e-3, 1000.0, 8, 1, 0.02),
            Experiment::Slln {
                x0: 1.0,
                observable: Observable::Exp { lambda: 1.0 },
                batches: 25,
            },
        ),
        scenario(
            "fclt-cir",
            "central limit theorem for additive functionals",
            ModelSpec::Cbi(cir()),
            sim(2e-3, 1e4, 909, 16, 0.02),
            Experiment::Fclt {
                x0: 1.0,
                lambda: 1.0,
                batches: 32,
            },
        ),
        scenario(
            "cnbi-w1",
            "W1 contraction with nonlinear branching",
            cnbi(),
            sim(1e-3, 4.0, 1212, 10_000, 0.5),
            Experiment::W1Decay { x0: 0.0, y0: 5.0 },
        ),
        scenario(
            "cbire-w1",
            "W1 contraction in a Lévy random environment",
            cbire(),
            sim(1e-3, 4.0, 1010, 10_000, 0.5),
            Experiment::W1Decay { x0: 0.0, y0: 5.0 },
        ),
        scenario(
            "cbire-tv",
            "total-variation ergodicity in a Lévy random environment",
            cbire(),
            sim(2e-3, 4.0, 1111, 100_000, 0.5),
            Experiment::CbireTv {
                x0: 0.0,
                y0: 5.0,
                bins: 100,
            },
        ),
        scenario(
            "lyapunov-log",
            "logarithmic Lyapunov bound under the log-moment condition",
            heavy_cbi(),
            quick(),
            Experiment::LyapunovScan {
                test_function: TestFunction::Log1p,
                x_max: 1e6,
            },
        ),
        scenario(
            "lyapunov-power",
            "power Lyapunov bound for nonlinear branching",
            cnbi(),
            quick(),
            Experiment::LyapunovScan {
                test_function: TestFunction::Power { lambda: 1.5 },
                x_max: 1e6,
            },
        ),
    ]
}

pub fn find(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name == name)
}
