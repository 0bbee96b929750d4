use cbilab::mechanisms::{
    check_conditions, levy_integral, measure_condition, phi_eval, psi_eval, sample_jump,
    CbiParams, GreyVerdict, Interval, JumpSampler, LevyMeasure,
};
use cbilab::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const E: f64 = std::f64::consts::E;

fn atoms(v: &[(f64, f64)]) -> LevyMeasure {
    LevyMeasure::FiniteAtoms { atoms: v.to_vec() }
}

fn power(c: f64, p: f64) -> LevyMeasure {
    LevyMeasure::PowerLawDensity {
        coefficient: c,
        exponent: p,
        cutoff: None,
    }
}

fn cir() -> CbiParams {
    CbiParams::diffusion(1.0, 1.0, 2f64.sqrt())
}

#[test]
fn levy_integral_examples() {
    let v = levy_integral(&atoms(&[(E, 1.0)]), f64::ln, Interval::above(1.0)).unwrap();
    assert_eq!(v, 1.0);
    assert_eq!(levy_integral(&LevyMeasure::Zero, |z| z, Interval::positive()).unwrap(), 0.0);
    let v = levy_integral(&power(1.0, -2.0), |_| 1.0, Interval::above(1.0)).unwrap();
    assert!((v - 1.0).abs() < 1e-10, "{v}");
}

#[test]
fn levy_integral_reports_divergence_as_infinity() {
    let v = levy_integral(&power(1.0, -1.0), |_| 1.0, Interval::above(1.0)).unwrap();
    assert_eq!(v, f64::INFINITY);
}

#[test]
fn atom_sums_are_exact_and_reproducible() {
    let m = atoms(&[(0.3, 0.7), (1.9, 0.1), (4.0, 2.5)]);
    let f = |z: f64| z.sin() * z;
    let exact = 0.7 * f(0.3) + 0.1 * f(1.9) + 2.5 * f(4.0);
    let a = levy_integral(&m, f, Interval::positive()).unwrap();
    let b = levy_integral(&m, f, Interval::positive()).unwrap();
    assert_eq!(a.to_bits(), exact.to_bits());
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn phi_examples() {
    let p = CbiParams::diffusion(1.0, 1.0, 2f64.sqrt());
    assert!((phi_eval(&p, 2.0).unwrap() - 6.0).abs() < 1e-14);
    assert_eq!(phi_eval(&p, 0.0).unwrap(), 0.0);
}

#[test]
fn phi_of_stable_branching_matches_gamma_constant() {
    // ∫(e^{−λz} − 1 + λz) z^{−2.5} dz = Γ(−1.5) λ^{1.5}, Γ(−1.5) = 4√π/3.
    let p = CbiParams::diffusion(0.0, 0.0, 0.0).with_m(power(1.0, -2.5));
    let g = 4.0 * std::f64::consts::PI.sqrt() / 3.0;
    for &l in &[0.5, 1.0, 3.0] {
        let v = phi_eval(&p, l).unwrap();
        let exact = g * f64::powf(l, 1.5);
        assert!((v - exact).abs() < 1e-8 * exact, "λ={l}: {v} vs {exact}");
    }
}

#[test]
fn psi_examples() {
    let p = CbiParams::diffusion(1.0, 0.0, 0.0);
    assert_eq!(psi_eval(&p, 3.0).unwrap(), 3.0);
    let p = CbiParams::diffusion(0.0, 0.0, 0.0).with_nu(atoms(&[(1.0, 1.0)]));
    assert_eq!(psi_eval(&p, 0.0).unwrap(), 0.0);
    let p = CbiParams::diffusion(0.0, 0.0, 0.0).with_nu(atoms(&[(1.0, 2.0)]));
    let v = psi_eval(&p, 1.0).unwrap();
    assert!((v - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    assert!((v - 1.264241).abs() < 1e-6);
}

#[test]
fn measure_condition_examples() {
    let r = measure_condition(&LevyMeasure::Zero, &LevyMeasure::Zero).unwrap();
    assert!(r.holds);
    assert_eq!((r.branching, r.immigration), (0.0, 0.0));

    // ∫_0^1 z^{-0.5} + ∫_1^∞ z^{-1.5} = 2 + 2
    let r = measure_condition(&power(1.0, -2.5), &LevyMeasure::Zero).unwrap();
    assert!(r.holds);
    assert!((r.branching - 4.0).abs() < 1e-8, "{}", r.branching);

    let r = measure_condition(&power(1.0, -3.2), &LevyMeasure::Zero).unwrap();
    assert!(!r.holds);
    assert_eq!(r.branching, f64::INFINITY);
}

#[test]
fn grey_holds_for_cir() {
    let r = check_conditions(&cir()).unwrap();
    assert!(r.grey_holds);
    assert_eq!(r.grey_verdict, GreyVerdict::Holds);
    // φ(λ) = λ + λ²: ∫_θ^Λ dλ/(λ+λ²) = log(Λ/(1+Λ)) − log(θ/(1+θ)).
    let th = r.grey_theta.unwrap();
    let cap = r.grey_cap;
    let exact = (cap / (1.0 + cap)).ln() - (th / (1.0 + th)).ln();
    assert!((r.grey_integral - exact).abs() < 1e-7 * exact, "{} vs {exact}", r.grey_integral);
    assert!((r.grey_tail - 1.0 / cap).abs() < 1e-12);
    assert!(r.invariant_exists);
}

#[test]
fn grey_fails_for_linear_branching() {
    let p = CbiParams::diffusion(1.0, 1.0, 0.0);
    let r = check_conditions(&p).unwrap();
    assert!(!r.grey_holds);
    assert_eq!(r.grey_verdict, GreyVerdict::Fails);
    assert_eq!(r.grey_tail, f64::INFINITY);
}

#[test]
fn grey_holds_for_stable_branching_without_diffusion() {
    let p = CbiParams::diffusion(1.0, 1.0, 0.0).with_m(power(1.0, -2.5));
    let r = check_conditions(&p).unwrap();
    assert!(r.grey_holds, "{r:?}");
    assert!(r.grey_tail.is_finite() && r.grey_tail > 0.0);
}

#[test]
fn grey_is_inapplicable_when_phi_never_positive() {
    let p = CbiParams::diffusion(1.0, -1.0, 0.0);
    let r = check_conditions(&p).unwrap();
    assert_eq!(r.grey_verdict, GreyVerdict::Inapplicable);
    assert!(!r.grey_holds);
    assert!(!r.invariant_exists);
}

#[test]
fn log_moment_and_invariant_for_atomic_immigration() {
    let p = CbiParams::diffusion(0.0, 1.0, 1.0).with_nu(atoms(&[(E, 1.0)]));
    let r = check_conditions(&p).unwrap();
    assert!((r.log_moment - 1.0).abs() < 1e-15);
    assert!((r.first_moment_tail - E).abs() < 1e-15);
    assert!(r.invariant_exists);
    assert!(r.log_moment_consistent);
}

#[test]
fn heavy_immigration_tail_has_log_but_not_first_moment() {
    // ν(dz) = z^{-1.5} dz: ∫(1∧z)ν < ∞, ∫ log z ν < ∞, ∫ z ν = ∞.
    let p = CbiParams::diffusion(0.0, 1.0, 1.0).with_nu(power(1.0, -1.5));
    let r = check_conditions(&p).unwrap();
    assert!((r.log_moment - 4.0).abs() < 1e-7, "{}", r.log_moment);
    assert_eq!(r.first_moment_tail, f64::INFINITY);
    assert!(r.invariant_exists);
    assert!(r.log_moment_consistent);
}

#[test]
fn critical_branching_has_no_invariant_law() {
    let p = CbiParams::diffusion(1.0, 0.0, 1.0);
    let r = check_conditions(&p).unwrap();
    assert!(!r.invariant_exists);
    // Without immigration δ₀ is invariant.
    let r = check_conditions(&CbiParams::diffusion(0.0, -1.0, 1.0)).unwrap();
    assert!(r.invariant_exists);
}

#[test]
fn log_moment_consistency_over_corpus() {
    let corpus = vec![
        cir(),
        CbiParams::diffusion(0.5, 2.0, 0.0).with_m(power(0.3, -2.5)),
        CbiParams::diffusion(0.0, 1.0, 1.0).with_nu(atoms(&[(1.0, 1.0), (5.0, 0.2)])),
        CbiParams::diffusion(0.0, 0.5, 0.0)
            .with_m(atoms(&[(2.0, 1.0)]))
            .with_nu(power(1.0, -1.5)),
        CbiParams::diffusion(1.0, 1.0, 0.5).with_nu(LevyMeasure::TemperedPowerLaw {
            coefficient: 1.0,
            exponent: -1.5,
            tempering: 2.0,
        }),
    ];
    for p in corpus {
        let r = check_conditions(&p).unwrap();
        assert!(r.log_moment_consistent, "{p:?}: {r:?}");
        assert!(r.invariant_exists);
    }
}

#[test]
fn invalid_measures_are_rejected() {
    let p = CbiParams::diffusion(1.0, 1.0, 1.0).with_m(power(1.0, -3.2));
    assert!(matches!(check_conditions(&p), Err(Error::InvalidMeasure(_))));
    let p = CbiParams::diffusion(1.0, 1.0, 1.0).with_nu(atoms(&[(-1.0, 1.0)]));
    assert!(matches!(p.validate(), Err(Error::InvalidMeasure(_))));
    let p = CbiParams::diffusion(-1.0, 1.0, 1.0);
    assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
}

#[test]
fn sample_jump_single_atom() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let z = sample_jump(&atoms(&[(2.0, 1.0)]), Interval::above(1.0), &mut rng).unwrap();
        assert_eq!(z, 2.0);
    }
}

#[test]
fn sample_jump_two_atoms_is_fair() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = JumpSampler::new(&atoms(&[(1.0, 1.0), (3.0, 1.0)]), Interval::positive()).unwrap();
    let n = 100_000;
    let ones = (0..n).filter(|_| s.sample(&mut rng) == 1.0).count();
    let p = ones as f64 / n as f64;
    let sd = (0.25 / n as f64).sqrt();
    assert!((p - 0.5).abs() < 3.0 * sd, "{p}");
}

#[test]
fn sample_jump_power_law_passes_ks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = JumpSampler::new(&power(1.0, -2.0), Interval::above(1.0)).unwrap();
    let n = 100_000;
    let mut v: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
    v.sort_by(f64::total_cmp);
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = 1.0 - 1.0 / z;
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the KS statistic.
    assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
}

#[test]
fn sample_jump_tempered_mean() {
    // Restricted to (1, ∞), c z^{-2} e^{-z} has mean ∫e^{-z}/z / ∫z^{-2}e^{-z}.
    let m = LevyMeasure::TemperedPowerLaw {
        coefficient: 1.0,
        exponent: -2.0,
        tempering: 1.0,
    };
    let num = levy_integral(&m, |z| z, Interval::above(1.0)).unwrap();
    let den = levy_integral(&m, |_| 1.0, Interval::above(1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = JumpSampler::new(&m, Interval::above(1.0)).unwrap();
    assert!((s.mass() - den).abs() < 1e-9);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - num / den).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {}", num / den);
}

#[test]
fn sample_jump_zero_mass_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = sample_jump(&atoms(&[(0.5, 1.0)]), Interval::above(1.0), &mut rng);
    assert!(matches!(r, Err(Error::ZeroMass { .. })));
    let r = sample_jump(&LevyMeasure::Zero, Interval::positive(), &mut rng);
    assert!(matches!(r, Err(Error::ZeroMass { .. })));
}

#[test]
fn measures_round_trip_through_serde() {
    for m in [
        LevyMeasure::Zero,
        atoms(&[(1.0, 0.5)]),
        LevyMeasure::PowerLawDensity {
            coefficient: 2.0,
            exponent: -1.5,
            cutoff: Some(3.0),
        },
        LevyMeasure::TemperedPowerLaw {
            coefficient: 1.0,
            exponent: -0.5,
            tempering: 2.0,
        },
    ] {
        let s = serde_json::to_string(&m).unwrap();
        let back: LevyMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
    let typo = r#"{"kind":"power-law-density","coefficient":1,"exponant":-2}"#;
    assert!(serde_json::from_str::<LevyMeasure>(typo).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phi_vanishes_at_zero_and_is_convex(
        b in -2.0f64..2.0, sigma in 0.0f64..2.0, c in 0.0f64..2.0, w in 0.0f64..2.0,
        l1 in 0.0f64..20.0, l2 in 0.0f64..20.0,
    ) {
        let p = CbiParams::diffusion(0.0, b, sigma)
            .with_m(power(c, -2.5))
            .with_nu(atoms(&[(1.0, w)]));
        prop_assert_eq!(p.phi(0.0).unwrap(), 0.0);
        prop_assert_eq!(p.psi(0.0).unwrap(), 0.0);
        let mid = p.phi(0.5 * (l1 + l2)).unwrap();
        let avg = 0.5 * (p.phi(l1).unwrap() + p.phi(l2).unwrap());
        prop_assert!(mid <= avg + 1e-8 * (1.0 + avg.abs()));
    }

    #[test]
    fn psi_is_nondecreasing(
        beta in 0.0f64..2.0, c in 0.0f64..2.0, l1 in 0.0f64..50.0, dl in 0.0f64..50.0,
    ) {
        let p = CbiParams::diffusion(beta, 1.0, 0.0).with_nu(power(c, -1.5));
        prop_assert!(p.psi(l1 + dl).unwrap() >= p.psi(l1).unwrap() - 1e-10);
    }
}
