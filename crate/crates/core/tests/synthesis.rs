mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polytrack::environment::{Cell, Polytope};
use polytrack::synthesis::{
    build_combined, relative_degree_ok, stability_matrix, synthesize, synthesize_decomposed, verify,
    AgentSystem, CellGain, GainLibrary, GainMatrix, RateMode, SynthesisConfig,
};
use polytrack::trajectory::{build_reference, coeffs_from_control_points, ControlPoints};
use polytrack::Error;

use common::{box_cell, chain_reference, full_lmi_max_eig};

fn interval_cell(points: [f64; 4]) -> Cell {
    Cell {
        id: "line".into(),
        polytope: Polytope::axis_box(&[0.0], &[10.0]).unwrap(),
        segment: ControlPoints::from_points(&points.map(|p| vec![p])).unwrap(),
        successor: None,
    }
}

fn benchmark_config(mode: RateMode) -> SynthesisConfig {
    SynthesisConfig {
        alpha: 10.0,
        delta: 0.1,
        k_max: 10.0,
        mode,
        ..SynthesisConfig::default()
    }
}

fn gain_1d(k: [f64; 5]) -> GainMatrix {
    GainMatrix::new(DMatrix::from_row_slice(1, 5, &k), 1).unwrap()
}

#[test]
fn hand_gain_certifies_unit_rate() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let cert = verify(&cell, &agent, &gain_1d([-1.0, 1.0, 1.0, 0.0, 0.0]), &benchmark_config(RateMode::Exponential)).unwrap();
    assert!(cert.passed, "{cert:?}");
    assert!((cert.mu + 1.0).abs() < 1e-12);
    assert!(cert.invariance_residual < 1e-12);
    // Upper face: 9x + p + p' <= 99.9 peaks at 90 + 4 + 3.
    let upper = cert.faces.iter().find(|f| cell.polytope.a()[(f.face, 0)] > 0.0).unwrap();
    assert!((upper.primal_max - 97.0).abs() < 1e-9, "{upper:?}");
}

#[test]
fn exponential_benchmark_reaches_the_gain_bound() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let (gain, cert) = synthesize(&cell, &agent, &benchmark_config(RateMode::Exponential)).unwrap();
    assert!(cert.passed);
    // |K_y| <= 10 caps the rate at -10.
    assert!((cert.mu + 10.0).abs() < 1e-5, "mu = {}", cert.mu);
    assert!(gain.max_abs() <= 10.0 + 1e-9);
    let (a_p, c_p) = chain_reference(3, 1);
    let one = DMatrix::identity(1, 1);
    let eig = full_lmi_max_eig(&DMatrix::zeros(1, 1), &one, &one, &a_p, &c_p, gain.matrix(), cert.mu);
    assert!(eig <= 1e-6);
}

#[test]
fn paper_mode_pins_the_rate_at_zero() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let (_, cert) = synthesize(&cell, &agent, &benchmark_config(RateMode::Paper)).unwrap();
    assert!(cert.passed);
    assert!(cert.mu.abs() <= 1e-6);
    assert_eq!(cert.mode, RateMode::Paper);
}

#[test]
fn zero_gain_violates_safety_by_the_margin() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let cert = verify(&cell, &agent, &gain_1d([0.0; 5]), &benchmark_config(RateMode::Paper)).unwrap();
    assert!(!cert.passed);
    assert!(cert.mu > 0.0, "tracking error grows without feedback");
    let worst = cert.max_face_residual();
    assert!((worst - 0.1).abs() < 1e-9, "residual {worst}");
}

#[test]
fn adversarial_gain_fails_on_a_named_face() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let cert = verify(&cell, &agent, &gain_1d([10.0, 0.0, 0.0, 0.0, 0.0]), &benchmark_config(RateMode::Exponential)).unwrap();
    assert!(!cert.passed);
    // u = 10 x pushes outward through x <= 10 by far the most.
    let worst = cert
        .faces
        .iter()
        .max_by(|a, b| a.residual.total_cmp(&b.residual))
        .unwrap();
    assert!(cell.polytope.a()[(worst.face, 0)] > 0.0);
    assert!((worst.residual - (200.0 - 99.9)).abs() < 1e-9, "{worst:?}");
    assert!(cert.mu > 0.0);
}

#[test]
fn tiny_gain_bound_reports_convergence() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let config = SynthesisConfig {
        k_max: 1e-3,
        ..SynthesisConfig::default()
    };
    match synthesize(&cell, &agent, &config) {
        Err(Error::Infeasible { cell, diagnosis }) => {
            assert_eq!(cell, "line");
            assert!(diagnosis.contains("convergence"), "{diagnosis}");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn large_margin_reports_the_face() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let config = SynthesisConfig {
        delta: 50.0,
        ..benchmark_config(RateMode::Exponential)
    };
    match synthesize(&cell, &agent, &config) {
        Err(Error::Infeasible { diagnosis, .. }) => assert!(diagnosis.starts_with("face "), "{diagnosis}"),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn certificate_recomputes_identically() {
    let cell = box_cell("box", [0.0, 0.0], [4.5, 2.5], &[[0.8, 1.25], [1.8, 1.25], [2.8, 1.25], [3.8, 1.25]], None);
    let agent = AgentSystem::single_integrator(2);
    let config = SynthesisConfig::default();
    let (gain, cert) = synthesize(&cell, &agent, &config).unwrap();
    assert!(cert.passed);
    assert!(cert.solver_status.is_some());
    let again = verify(&cell, &agent, &gain, &config).unwrap();
    assert_eq!(again.mu, cert.mu);
    assert_eq!(again.faces, cert.faces);
    assert!(again.passed);
    // The solver's own rate is never better than the recomputed one by more than the tolerance.
    assert!(cert.solver_mu.unwrap() >= cert.mu - 1e-6);
}

#[test]
fn decomposed_synthesis_keeps_the_block_pattern() {
    let cell = box_cell("box", [0.0, 0.0], [4.5, 2.5], &[[0.8, 1.25], [1.8, 1.0], [2.8, 1.5], [3.8, 1.25]], None);
    let agent = AgentSystem::single_integrator(2);
    let dec = synthesize_decomposed(&cell, &agent, &SynthesisConfig::default()).unwrap();
    assert!(dec.certificate.passed);
    assert!(!dec.used_joint_fallback);
    assert_eq!(dec.axis_mu.len(), 2);
    assert_eq!(dec.shared_mu, dec.axis_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let k = dec.gain.matrix();
    assert_eq!(k[(0, 1)], 0.0);
    assert_eq!(k[(1, 0)], 0.0);
    for q in 0..4 {
        assert_eq!(k[(0, 2 + 4 + q)], 0.0);
        assert_eq!(k[(1, 2 + q)], 0.0);
    }
}

#[test]
fn stability_matrix_is_the_lyapunov_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let agent = AgentSystem::new(a.clone(), b.clone(), DMatrix::identity(2, 2)).unwrap();
        let seg = common::random_cubic(&mut rng, [0.0, 0.0], 2.0);
        let reference = build_reference(&coeffs_from_control_points(&seg));
        let cs = build_combined(&agent, &reference).unwrap();
        let k = DMatrix::from_fn(2, 10, |_, _| rng.random_range(-2.0..2.0));
        let gain = GainMatrix::new(k.clone(), 2).unwrap();
        let s = stability_matrix(&cs, &gain).unwrap();
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let x_p = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        // V = |x - C_p x_p|^2, dV/dt = 2 e^T (x' - C_p A_p x_p)
        let u = k.columns(0, 2) * &x + k.columns(2, 8) * &x_p;
        let e = &x - &reference.c_p * &x_p;
        let dv = 2.0 * e.dot(&(&a * &x + &b * u - &reference.c_p * &reference.a_p * &x_p));
        let mut z = DVector::zeros(10);
        z.rows_mut(0, 2).copy_from(&x);
        z.rows_mut(2, 8).copy_from(&x_p);
        assert!((z.dot(&(&s * &z)) - dv).abs() < 1e-10);
    }
}

#[test]
fn relative_degree_failure_is_an_error() {
    // Double integrator with position output: the input does not reach dV/dt.
    let agent = AgentSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    let reference = build_reference(&coeffs_from_control_points(&interval_cell([1.0, 2.0, 3.0, 4.0]).segment));
    assert!(!relative_degree_ok(&build_combined(&agent, &reference).unwrap()));
    let cell = box_cell("b", [0.0, -1.0], [10.0, 1.0], &[[0.0, 0.0]; 4], None);
    let cell = Cell {
        segment: interval_cell([1.0, 2.0, 3.0, 4.0]).segment,
        ..cell
    };
    assert!(matches!(synthesize(&cell, &agent, &SynthesisConfig::default()), Err(Error::RelativeDegree)));
}

#[test]
fn invalid_configuration_is_rejected() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    for config in [
        SynthesisConfig { alpha: 0.0, ..SynthesisConfig::default() },
        SynthesisConfig { k_max: -1.0, ..SynthesisConfig::default() },
        SynthesisConfig { time_scale: 0.0, ..SynthesisConfig::default() },
    ] {
        assert!(matches!(synthesize(&cell, &agent, &config), Err(Error::Domain(_))));
    }
    let wrong = AgentSystem::single_integrator(2);
    assert!(matches!(synthesize(&cell, &wrong, &SynthesisConfig::default()), Err(Error::Dimension(_))));
}

#[test]
fn slower_time_scale_still_certifies() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let config = SynthesisConfig {
        time_scale: 2.0,
        ..benchmark_config(RateMode::Exponential)
    };
    let (gain, cert) = synthesize(&cell, &agent, &config).unwrap();
    assert!(cert.passed);
    let unscaled = verify(&cell, &agent, &gain, &benchmark_config(RateMode::Exponential)).unwrap();
    assert!(unscaled.invariance_residual > 1e-3, "gain is tied to its time scale");
}

#[test]
fn library_round_trip() {
    let cell = interval_cell([1.0, 2.0, 3.0, 4.0]);
    let agent = AgentSystem::single_integrator(1);
    let config = benchmark_config(RateMode::Exponential);
    let (gain, cert) = synthesize(&cell, &agent, &config).unwrap();
    let mut library = GainLibrary::new(agent.clone());
    library.insert(CellGain::new(gain.clone(), &cert, &config));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gains.json");
    library.save(&path).unwrap();
    let back = GainLibrary::load(&path).unwrap();
    let entry = back.gain_for("line").unwrap();
    assert_eq!(entry.gain.matrix(), gain.matrix());
    assert_eq!(entry.mu, cert.mu);
    assert_eq!(entry.mode, RateMode::Exponential);
    assert!(entry.certificate.passed);
    assert_eq!(back.agent.a, agent.a);
    assert!(back.gain_for("other").is_none());
    assert!(matches!(GainLibrary::from_json_str("{\"agent\": 3}"), Err(Error::Schema { .. })));
    assert!(matches!(GainLibrary::from_json_str("{\"agent\": "), Err(Error::Parse { .. })));
}

#[test]
fn rotated_cell_falls_back_to_the_joint_program() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let polytope = Polytope::new(
        DMatrix::from_row_slice(4, 2, &[s, s, -s, -s, s, -s, -s, s]),
        DVector::from_vec(vec![3.0, 0.0, 1.5, 1.5]),
    )
    .unwrap();
    let cell = Cell {
        id: "diamond".into(),
        polytope,
        segment: ControlPoints::from_points(&[vec![0.5, 0.5], vec![1.0, 1.0], vec![1.5, 1.5], vec![1.8, 1.8]]).unwrap(),
        successor: None,
    };
    let agent = AgentSystem::single_integrator(2);
    let dec = synthesize_decomposed(&cell, &agent, &SynthesisConfig::default()).unwrap();
    assert!(dec.used_joint_fallback);
    assert!(dec.certificate.passed);
    assert!(matches!(
        synthesize_decomposed(&cell, &AgentSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap(), &SynthesisConfig::default()),
        Err(Error::Domain(_))
    ));
}
