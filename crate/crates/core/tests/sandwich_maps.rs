//! Sandwich maps on the linear-potential system against closed forms.

use std::sync::Arc;

use contactkit::chart::Chart;
use contactkit::dynamics::FlowOptions;
use contactkit::linalg::max_abs_diff;
use contactkit::sandwich::{composite_pullback_residual, sandwich_report, Phi1, Phi2, SandwichConfig, SandwichStatus};
use contactkit::scenarios::{self, symplectify, Potential};
use contactkit::exterior::{FormFn, ScalarField, ScalarFn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = Chart::cube("s", dim, 1.0).unwrap();
    (0..count).map(|_| cube.sample(&mut rng, 0.0)).collect()
}

fn maps(gamma: f64) -> (scenarios::Scenario, Phi1, Phi2) {
    let s = scenarios::dissipative(gamma, Potential::Linear).unwrap();
    let phi1 = Phi1::new(&s.surface, FlowOptions::default(), 3).unwrap();
    let phi2 = Phi2::new(&s.surface, s.sigma.clone().unwrap(), FlowOptions::default(), &[0.0; 4], 3).unwrap();
    (s, phi1, phi2)
}

#[test]
fn phi1_matches_closed_form_and_pulls_back_eta() {
    let (s, phi1, _) = maps(1.0);
    let oracle = s.oracles.unwrap();
    for y in samples(5, 20, 11) {
        let got = phi1.map(&y).unwrap();
        assert!(max_abs_diff(&got, &oracle.phi1(&y)) <= 1e-6, "{got:?}");
        assert!(phi1.pullback_residual(&y).unwrap() <= 1e-5);
        assert!(phi1.reeb_defect(&y).unwrap() <= 1e-5);
    }
    let on_s = vec![oracle.height(&[0.2, 0.1, -0.3, 0.4]), 0.2, 0.1, -0.3, 0.4];
    let image = phi1.map(&on_s).unwrap();
    assert!(image[0].abs() < 1e-12);
    assert!(max_abs_diff(&image[1..], &on_s[1..]) < 1e-12);
}

#[test]
fn phi2_matches_closed_form_and_symplectification() {
    let (s, _, phi2) = maps(1.0);
    let oracle = s.oracles.unwrap();
    assert_eq!(phi2.slice().eliminated(), 0);
    for u in samples(4, 20, 12) {
        let got = phi2.map(&u).unwrap();
        assert!(max_abs_diff(&got, &oracle.phi2(&u)) <= 1e-6, "{got:?} vs {:?}", oracle.phi2(&u));
        assert!(phi2.pullback_residual(&u).unwrap() <= 1e-5);
        assert!(phi2.speed_defect(&u).unwrap() <= 1e-5);
        let b = &got[1..];
        let eta_b = phi2.eta_b(b).unwrap();
        assert!(max_abs_diff(eta_b.coeffs(), &oracle.eta_b(b)) <= 1e-8);
        let volume = phi2.eta_b_check(b).unwrap();
        assert!((volume - oracle.eta_b_volume()).abs() <= 1e-6, "{volume}");
    }
    let zero = phi2.map(&[0.0; 4]).unwrap();
    assert!(max_abs_diff(&zero, &oracle.phi2(&[0.0; 4])) <= 1e-12);
}

#[test]
fn eta_b_volume_by_hand_at_one_point() {
    // eta_B = a dq2 + b dp1 + c dp2 with a = p1 - p2, b = 1, c = p1 - p2 + 1 (gamma = 1);
    // d eta_B = -dq2^dp1 + dq2^dp2 + dp1^dp2, so eta_B ^ d eta_B = a - b - c = -2
    let (_, _, phi2) = maps(1.0);
    let v = phi2.eta_b_check(&[0.3, 0.5, -0.25]).unwrap();
    assert!((v + 2.0).abs() < 1e-7);
}

#[test]
fn composite_pulls_back_to_eta() {
    let (_, phi1, phi2) = maps(1.0);
    for y in samples(5, 5, 13) {
        assert!(composite_pullback_residual(&phi1, &phi2, &y).unwrap() <= 1e-5);
    }
}

#[test]
fn symplectified_slice_matches_phi2_target() {
    let (_, _, phi2) = maps(1.0);
    let p2 = Arc::new(phi2.clone());
    let p2d = p2.clone();
    let eta_b = FormFn::new(3, 1, move |b| p2.eta_b(b).unwrap())
        .with_derivative(move |b| p2d.d_eta_b(b).unwrap());
    let omega = symplectify(phi2.slice().chart(), Arc::new(eta_b), -1.0).unwrap();
    for x in [[0.3, 0.1, -0.2, 0.4], [-0.5, 0.0, 0.3, 0.3]] {
        let a = omega.form_at(&x).unwrap();
        let b = phi2.target_form(&x).unwrap();
        assert!(max_abs_diff(a.coeffs(), b.coeffs()) < 1e-12);
    }
}

#[test]
fn scaled_sigma_fails_rate_precondition() {
    let (s, _, _) = maps(1.0);
    let sigma = s.sigma.clone().unwrap();
    let doubled: Arc<dyn ScalarField> = Arc::new(ScalarFn::new(4, move |u| 2.0 * sigma.value(u)));
    // the grid check passes the residual test only when X(sigma) = n gamma
    assert!(Phi2::new(&s.surface, doubled, FlowOptions::default(), &[0.0; 4], 2).is_err());
}

fn config(box_half: f64) -> SandwichConfig {
    SandwichConfig {
        options: FlowOptions::default(),
        equilibrium_box: Chart::cube("eq", 4, box_half).unwrap(),
        equilibrium_grid: 3,
        precondition_grid: 2,
        threshold: 1e-5,
        pushforward_time: 1.0,
    }
}

#[test]
fn report_verifies_linear_potential() {
    let s = scenarios::dissipative(1.0, Potential::Linear).unwrap();
    let report = sandwich_report(&s.surface, s.sigma.clone().unwrap(), &samples(5, 10, 14), &config(5.0));
    assert_eq!(report.status, SandwichStatus::Verified, "{report:?}");
    assert_eq!(report.rectified, 10);
    assert_eq!(report.coverage, 1.0);
}

#[test]
fn perturbed_sigma_is_untestable() {
    let s = scenarios::dissipative(1.0, Potential::Linear).unwrap();
    let sigma = s.sigma.clone().unwrap();
    let g = sigma.gradient(&[0.0; 4]).unwrap();
    let perturbed: Arc<dyn ScalarField> = Arc::new(
        ScalarFn::new(4, move |u| sigma.value(u) + 0.1 * u[0])
            .with_gradient(move |_| vec![g[0] + 0.1, g[1], g[2], g[3]]),
    );
    let report = sandwich_report(&s.surface, perturbed, &samples(5, 3, 15), &config(5.0));
    assert!(matches!(report.status, SandwichStatus::Untestable { .. }), "{report:?}");
}

#[test]
fn harmonic_potential_is_obstructed() {
    let s = scenarios::dissipative(1.0, Potential::Harmonic).unwrap();
    let sigma: Arc<dyn ScalarField> = Arc::new(ScalarFn::constant(4, 0.0));
    let report = sandwich_report(&s.surface, sigma, &samples(5, 3, 16), &config(5.0));
    match report.status {
        SandwichStatus::Obstructed { equilibria } => {
            assert_eq!(equilibria.len(), 1);
            assert!(equilibria[0].iter().all(|c| c.abs() <= 1e-10));
        }
        other => panic!("expected obstruction, got {other:?}"),
    }
}

#[test]
fn small_chart_reports_domain_failures() {
    let s = scenarios::dissipative_in(1.0, Potential::Linear, 1.2).unwrap();
    // sigma > 0 with p near 0 drives p1, p2 past the 1.32 escape box before the slice
    let mut points: Vec<Vec<f64>> = samples(5, 8, 17).into_iter().map(|y| y.iter().map(|c| 0.2 * c).collect()).collect();
    points.push(vec![0.0, -1.0, -1.0, 0.0, 0.0]);
    points.push(vec![0.0, -1.0, -0.8, 0.2, 0.1]);
    let report = sandwich_report(&s.surface, s.sigma.clone().unwrap(), &points, &config(1.0));
    assert_eq!(report.domain_failures, 2, "{report:?}");
    assert_eq!(report.other_failures, 0, "{report:?}");
    assert_eq!(report.rectified, 8);
    assert_eq!(report.coverage, 0.8);
    assert_eq!(report.status, SandwichStatus::Verified);
}

#[test]
fn contactified_zero_set_is_the_target_of_phi1() {
    let (s, phi1, _) = maps(1.0);
    let surface = s.surface.clone();
    let theta = FormFn::new(4, 1, move |u| surface.theta(u).unwrap());
    let chart = Chart::cube("s", 4, 3.0).unwrap();
    let c = scenarios::contactify(&chart, Arc::new(theta), 10.0, 2).unwrap();
    for y in samples(5, 5, 18) {
        let image = phi1.map(&y).unwrap();
        let pulled = c.eta_at(&image).pullback_linear(&phi1.jacobian(&y).unwrap()).unwrap();
        assert!(max_abs_diff(pulled.coeffs(), s.system.eta_at(&y).coeffs()) <= 1e-5);
        assert!(max_abs_diff(&c.reeb(&image).unwrap(), &[1.0, 0.0, 0.0, 0.0, 0.0]) <= 1e-8);
    }
}
