use cbilab::flow::first_moment;
use cbilab::mechanisms::{CbiParams, LevyMeasure};
use cbilab::metrics::MeanEstimate;
use cbilab::sde::{
    generator_apply, log_lyapunov_bound, simulate_coupled, simulate_ensemble, simulate_environment,
    simulate_path, CbireParams, CnbiParams, Drift, EnvironmentParams, ModelSpec, NonlinearRates,
    PowerRate, SimConfig, TestFunction,
};
use cbilab::Error;

fn cir() -> ModelSpec {
    ModelSpec::Cbi(CbiParams::diffusion(1.0, 1.0, 2f64.sqrt()))
}

fn jumpy_cbi() -> ModelSpec {
    ModelSpec::Cbi(
        CbiParams::diffusion(0.5, 1.0, 0.5)
            .with_m(LevyMeasure::PowerLawDensity {
                coefficient: 0.3,
                exponent: -2.5,
                cutoff: None,
            })
            .with_nu(LevyMeasure::FiniteAtoms {
                atoms: vec![(1.0, 0.7), (3.0, 0.1)],
            }),
    )
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
        nu: LevyMeasure::FiniteAtoms {
            atoms: vec![(1.0, 0.5)],
        },
    })
}

fn cbire() -> ModelSpec {
    ModelSpec::Cbire(CbireParams {
        cbi: CbiParams::diffusion(1.0, 1.0, 1.0),
        env: EnvironmentParams {
            b_e: 0.1,
            sigma_e: 0.3,
            mu_e: LevyMeasure::FiniteAtoms {
                atoms: vec![(-0.5, 0.5), (1.5, 0.1)],
            },
        },
    })
}

fn grid(dt: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 * dt).collect()
}

#[test]
fn vanishing_coefficients_give_a_constant_path() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(0.0, 0.0, 0.0));
    let cfg = SimConfig::new(0.01, 5.0, 1, 1).with_record_times(grid(0.5, 10));
    let tr = simulate_path(&m, 5.0, &cfg, 0).unwrap();
    assert!(tr.states.iter().all(|&x| x == 5.0));
}

#[test]
fn deterministic_path_follows_the_ode() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(1.0, 1.0, 0.0));
    let dt = 1e-3;
    let cfg = SimConfig::new(dt, 5.0, 1, 1).with_record_times(grid(0.25, 20));
    let tr = simulate_path(&m, 0.0, &cfg, 0).unwrap();
    for (t, x) in tr.times.iter().zip(&tr.states) {
        assert!((x - (1.0 - (-t).exp())).abs() < dt, "t={t} x={x}");
    }
}

#[test]
fn ensemble_mean_matches_first_moment() {
    let m = cir();
    let cfg = SimConfig::new(0.01, 10.0, 7, 20_000);
    let ens = simulate_ensemble(&m, 0.0, &cfg).unwrap();
    let est = MeanEstimate::from_samples(&ens.values_at(0)).unwrap();
    let exact = first_moment(m.cbi().unwrap(), 0.0, 10.0).unwrap();
    assert!((est.mean - exact).abs() < 3.0 * est.stderr, "{est:?} vs {exact}");
}

#[test]
fn jump_model_mean_matches_first_moment() {
    let m = jumpy_cbi();
    let cfg = SimConfig::new(0.01, 2.0, 11, 20_000).with_cutoff(1e-3);
    let ens = simulate_ensemble(&m, 2.0, &cfg).unwrap();
    let est = MeanEstimate::from_samples(&ens.values_at(0)).unwrap();
    let exact = first_moment(m.cbi().unwrap(), 2.0, 2.0).unwrap();
    assert!((est.mean - exact).abs() < 4.0 * est.stderr + 0.01, "{est:?} vs {exact}");
}

#[test]
fn equal_starts_give_identical_pairs() {
    for m in [cir(), jumpy_cbi(), cnbi(), cbire()] {
        let cfg = SimConfig::new(0.01, 3.0, 3, 20).with_record_times(grid(0.5, 6));
        let c = simulate_coupled(&m, 1.5, 1.5, &cfg).unwrap();
        for p in &c.pairs {
            assert_eq!(p.x, p.y);
        }
    }
}

#[test]
fn coupling_swaps_unordered_starts() {
    let cfg = SimConfig::new(0.01, 1.0, 3, 4);
    let c = simulate_coupled(&cir(), 5.0, 0.0, &cfg).unwrap();
    assert_eq!((c.x0, c.y0), (0.0, 5.0));
}

#[test]
fn simulation_is_deterministic_across_thread_counts() {
    let cfg = SimConfig::new(0.01, 2.0, 99, 40).with_record_times(grid(0.5, 4));
    for m in [jumpy_cbi(), cnbi(), cbire()] {
        let a = simulate_ensemble(&m, 1.0, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_ensemble(&m, 1.0, &cfg)).unwrap();
        assert_eq!(a.paths, b.paths);
        // A single path reproduces its ensemble member.
        let p = simulate_path(&m, 1.0, &cfg, 17).unwrap();
        assert_eq!(p, a.paths[17]);
    }
    let a = simulate_ensemble(&cir(), 1.0, &cfg).unwrap();
    let c = simulate_ensemble(&cir(), 1.0, &SimConfig { master_seed: 100, ..cfg }).unwrap();
    assert_ne!(a.paths, c.paths);
}

#[test]
fn states_stay_nonnegative() {
    for m in [cir(), jumpy_cbi(), cnbi(), cbire()] {
        let cfg = SimConfig::new(0.02, 5.0, 5, 200).with_record_times(grid(0.1, 50));
        let ens = simulate_ensemble(&m, 0.3, &cfg).unwrap();
        for p in &ens.paths {
            assert!(p.states.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn drift_only_pair_contracts_exponentially() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(0.0, 1.0, 0.0));
    let dt = 1e-3;
    let cfg = SimConfig::new(dt, 2.0, 1, 1).with_record_times(vec![0.5, 1.0, 2.0]);
    let c = simulate_coupled(&m, 0.0, 5.0, &cfg).unwrap();
    for (k, t) in c.times.iter().enumerate() {
        let gap = c.gaps_at(k)[0];
        assert!((gap - 5.0 * (-t).exp()).abs() < 5.0 * dt, "t={t}");
    }
}

#[test]
fn coupled_gap_obeys_the_contraction_bound() {
    let cfg = SimConfig::new(2e-3, 2.0, 21, 4000).with_record_times(vec![0.5, 1.0, 2.0]);
    let c = simulate_coupled(&cir(), 0.0, 5.0, &cfg).unwrap();
    for (k, t) in c.times.iter().enumerate() {
        let est = MeanEstimate::from_samples(&c.gaps_at(k)).unwrap();
        assert!(est.mean <= 5.0 * (-t).exp() + 3.0 * est.stderr, "t={t}: {est:?}");
    }
    assert!(c.ordering_fraction() > 0.99);
}

#[test]
fn ordering_violations_shrink_with_dt() {
    let run = |dt: f64| {
        let cfg = SimConfig::new(dt, 1.0, 8, 400).with_record_times(grid(0.05, 20));
        let c = simulate_coupled(&jumpy_cbi(), 0.2, 0.6, &cfg).unwrap();
        1.0 - c.step_ordering_fraction()
    };
    let coarse = run(1e-2);
    let fine = run(1e-3);
    assert!(fine <= coarse, "{fine} > {coarse}");
    assert!(fine < 0.01);
}

#[test]
fn martingale_parts_are_centred() {
    for m in [cir(), jumpy_cbi(), cnbi(), cbire()] {
        let cfg = SimConfig::new(0.01, 2.0, 13, 4000).with_record_times(vec![0.5, 1.0, 2.0]);
        let ens = simulate_ensemble(&m, 1.0, &cfg).unwrap();
        for k in 0..3 {
            let est = MeanEstimate::from_samples(&ens.martingale_at(k)).unwrap();
            assert!(est.mean.abs() < 4.0 * est.stderr, "{m:?} k={k}: {est:?}");
        }
    }
}

#[test]
fn overflow_truncates_the_path() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(0.0, -1000.0, 0.0));
    let cfg = SimConfig::new(0.01, 20.0, 1, 1).with_record_times(grid(1.0, 20));
    let tr = simulate_path(&m, 1.0, &cfg, 0).unwrap();
    let ft = tr.failure_time.expect("path should overflow");
    assert!(ft > 0.0 && ft < 20.0);
    assert!(tr.states.len() < 20);
    assert!(tr.states.iter().all(|x| x.is_finite()));
}

#[test]
fn invalid_configs_are_rejected() {
    let m = cir();
    let bad = [
        SimConfig::new(0.0, 1.0, 1, 1),
        SimConfig::new(0.1, 1.0, 1, 0),
        SimConfig::new(0.1, 1.0, 1, 1).with_record_times(vec![0.5, 0.55]),
        SimConfig::new(0.1, 1.0, 1, 1).with_record_times(vec![2.0]),
    ];
    for cfg in bad {
        assert!(matches!(simulate_ensemble(&m, 1.0, &cfg), Err(Error::InvalidConfig(_))));
    }
    let cfg = SimConfig::new(0.1, 1.0, 1, 1).with_cutoff(0.0);
    assert!(matches!(simulate_path(&jumpy_cbi(), 1.0, &cfg, 0), Err(Error::InvalidConfig(_))));
    let cfg = SimConfig::new(0.1, 1.0, 1, 1);
    assert!(simulate_path(&m, -1.0, &cfg, 0).is_err());
}

#[test]
fn deterministic_environment() {
    let env = EnvironmentParams {
        b_e: 0.4,
        sigma_e: 0.0,
        mu_e: LevyMeasure::Zero,
    };
    let cfg = SimConfig::new(0.1, 2.0, 1, 1);
    let p = simulate_environment(&env, &cfg, 0).unwrap();
    for (k, (a, b)) in p.xi.values.iter().zip(&p.z.values).enumerate() {
        let t = k as f64 * 0.1;
        assert!((a - 0.4 * t).abs() < 1e-12);
        assert!((b - 0.4 * t).abs() < 1e-12);
    }
}

#[test]
fn brownian_environment_lognormal_moment() {
    let env = EnvironmentParams {
        b_e: 0.0,
        sigma_e: 1.0,
        mu_e: LevyMeasure::Zero,
    };
    let cfg = SimConfig::new(0.1, 1.0, 4, 1);
    let draws: Vec<f64> = (0..100_000)
        .map(|i| {
            let p = simulate_environment(&env, &cfg, i).unwrap();
            p.xi.values.last().unwrap().exp()
        })
        .collect();
    let est = MeanEstimate::from_samples(&draws).unwrap();
    assert!((est.mean - 1.0).abs() < 3.0 * est.stderr, "{est:?}");
}

#[test]
fn compensated_environment_jumps_have_mean_b() {
    let env = EnvironmentParams {
        b_e: 0.3,
        sigma_e: 0.2,
        mu_e: LevyMeasure::FiniteAtoms {
            atoms: vec![(2f64.ln(), 1.0)],
        },
    };
    let cfg = SimConfig::new(0.05, 1.0, 6, 1);
    let mut ends = Vec::new();
    for i in 0..50_000 {
        let p = simulate_environment(&env, &cfg, i).unwrap();
        ends.push(*p.z.values.last().unwrap());
        assert!(p.z.values.windows(2).all(|w| w[1] - w[0] > -1.0));
    }
    let est = MeanEstimate::from_samples(&ends).unwrap();
    assert!((est.mean - 0.3).abs() < 3.0 * est.stderr, "{est:?}");
}

#[test]
fn generator_examples() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(1.0, 1.0, 0.0));
    assert_eq!(generator_apply(&m, TestFunction::Log1p, 0.0).unwrap(), 1.0);
    for &x in &[0.5, 10.0, 1e3, 1e6] {
        let lv = generator_apply(&m, TestFunction::Log1p, x).unwrap();
        assert!((lv - (1.0 - x) / (1.0 + x)).abs() < 1e-12);
        assert!(lv <= 2.0);
    }
    let p = CbiParams::diffusion(1.0, 1.0, 2f64.sqrt());
    let lv = generator_apply(&ModelSpec::Cbi(p.clone()), TestFunction::Exp { lambda: 1.0 }, 1.0)
        .unwrap();
    assert!((lv - (-1.0f64).exp()).abs() < 1e-12);
    assert!((lv - 0.367879).abs() < 1e-6);
}

#[test]
fn generator_exponential_identity_with_jumps() {
    let p = jumpy_cbi();
    let q = p.cbi().unwrap();
    for &(x, l) in &[(0.0, 0.5), (1.0, 1.0), (3.0, 2.5)] {
        let lv = generator_apply(&p, TestFunction::Exp { lambda: l }, x).unwrap();
        let exact = (-l * x).exp() * (-q.psi(l).unwrap() + x * q.phi(l).unwrap());
        assert!((lv - exact).abs() < 1e-8 * exact.abs().max(1.0), "{lv} vs {exact}");
    }
}

#[test]
fn generator_log_bound_on_a_grid() {
    let p = CbiParams::diffusion(0.5, 1.0, 1.0)
        .with_m(LevyMeasure::PowerLawDensity {
            coefficient: 0.5,
            exponent: -2.5,
            cutoff: None,
        })
        .with_nu(LevyMeasure::PowerLawDensity {
            coefficient: 0.5,
            exponent: -1.5,
            cutoff: None,
        });
    let bound = log_lyapunov_bound(&p).unwrap();
    let m = ModelSpec::Cbi(p);
    let mut x = 0.0;
    while x <= 1e6 {
        let lv = generator_apply(&m, TestFunction::Log1p, x).unwrap();
        assert!(lv.is_finite() && lv <= bound, "x={x}: {lv} > {bound}");
        x = if x == 0.0 { 1e-3 } else { x * 1.7 };
    }
}

#[test]
fn generator_power_ratio_is_bounded() {
    let m = cnbi();
    let f = TestFunction::Power { lambda: 1.5 };
    let mut worst = f64::NEG_INFINITY;
    let mut x = 0.0;
    while x <= 1e6 {
        let r = generator_apply(&m, f, x).unwrap() / f.value(x);
        assert!(r.is_finite());
        worst = worst.max(r);
        x = if x == 0.0 { 1e-3 } else { x * 1.7 };
    }
    assert!(worst < 10.0, "{worst}");
}

#[test]
fn generator_reports_divergent_moment() {
    let m = ModelSpec::Cbi(CbiParams::diffusion(1.0, 1.0, 0.0).with_nu(
        LevyMeasure::PowerLawDensity {
            coefficient: 1.0,
            exponent: -1.0,
            cutoff: None,
        },
    ));
    match generator_apply(&m, TestFunction::Log1p, 1.0) {
        Err(Error::DivergentJumpIntegral(msg)) => assert!(msg.contains("log")),
        other => panic!("{other:?}"),
    }
    assert!(generator_apply(&cir(), TestFunction::Power { lambda: 3.0 }, 1.0).is_err());
}
