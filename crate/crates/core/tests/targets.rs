mod common;

use std::collections::BTreeMap;

use rand::Rng;
use seqtransport::divergence::Grid;
use seqtransport::targets::*;

#[test]
fn bimodal_shape_and_mass() {
    let m = DiagonalMixture::bimodal();
    assert!(m.log_density(&[2.0, 2.0]) > m.log_density(&[0.0, 0.0]));
    let grid = Grid::new(vec![(-9.0, 9.0, 1201), (-9.0, 9.0, 1201)]).unwrap();
    let mass = grid.integrate(|x| m.log_density(x).exp()).unwrap();
    assert!((mass - 1.0).abs() <= 1e-8, "mass {mass}");
}

#[test]
fn bimodal_sampler_frequencies() {
    let m = DiagonalMixture::bimodal();
    let draws = m.sample_labeled(10_000, 3);
    let first = draws.iter().filter(|(k, _)| *k == 0).count() as f64 / 1e4;
    assert!((first - 0.5).abs() <= 0.02, "frequency {first}");
    // Draws from component 0 sit near (2, 2) with variances (0.1, 0.5).
    let c0: Vec<&Vec<f64>> = draws.iter().filter(|(k, _)| *k == 0).map(|(_, x)| x).collect();
    let n = c0.len() as f64;
    let mean_x = c0.iter().map(|x| x[0]).sum::<f64>() / n;
    let var_y = c0.iter().map(|x| (x[1] - 2.0).powi(2)).sum::<f64>() / n;
    assert!((mean_x - 2.0).abs() < 4.0 * (0.1f64 / n).sqrt());
    assert!((var_y - 0.5).abs() < 0.05);
    assert_eq!(m.sample(50, 3), m.sample(50, 3));
}

#[test]
fn banana_is_normalized_and_sampled() {
    let b = Banana::default();
    let grid = Grid::new(vec![(-8.0, 8.0, 801), (-10.0, 40.0, 2001)]).unwrap();
    let mass = grid.integrate(|x| b.log_density(x).exp()).unwrap();
    assert!((mass - 1.0).abs() <= 1e-8, "mass {mass}");
    let s = b.sample(20_000, 1);
    let mean2 = s.iter().map(|x| x[1]).sum::<f64>() / 2e4;
    // E[x₂] = b(E[x₁²] − 1) = 0.
    assert!(mean2.abs() < 0.05);
}

#[test]
fn sir_without_infection_decays_exponentially() {
    let config = SirConfig::default();
    let gamma = 0.7;
    let traj = sir_trajectory(&config, gamma, 0.0);
    for (j, y) in traj.iter().enumerate() {
        let t = 5.0 * (j + 1) as f64 / 6.0;
        assert!((y[1] - config.i0 * (-gamma * t).exp()).abs() <= 1e-8);
    }
}

#[test]
fn sir_conserves_population() {
    let config = SirConfig::default();
    let mut r = common::rng(4);
    for _ in 0..10 {
        let (g, b) = (r.random_range(0.0..2.0), r.random_range(0.0..2.0));
        for y in sir_trajectory(&config, g, b) {
            assert!((y.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn sir_step_halving() {
    let coarse = SirPosterior::synthetic(SirConfig::default(), 0).unwrap();
    let fine_config = SirConfig {
        max_step: 0.5e-3,
        max_rate_step: 0.01,
        ..SirConfig::default()
    };
    let fine = SirPosterior::new(fine_config, coarse.data().to_vec()).unwrap();
    let mut r = common::rng(6);
    for _ in 0..20 {
        let theta = [r.random_range(0.0..2.0), r.random_range(0.0..2.0)];
        let (a, b) = (coarse.log_posterior(&theta), fine.log_posterior(&theta));
        assert!((a - b).abs() <= 1e-6, "{theta:?}: {a} vs {b}");
    }
}

#[test]
fn sir_posterior_support_and_peak() {
    let post = SirPosterior::synthetic(SirConfig::default(), 2).unwrap();
    assert_eq!(post.log_posterior(&[2.5, 0.1]), f64::NEG_INFINITY);
    assert!(post.log_posterior(&[1.0, 0.1]) > post.log_posterior(&[0.5, 0.5]));
    let (ll, lp) = post.cube_parts(&[0.0, -0.9]);
    assert!((ll - post.log_likelihood(1.0, 0.1)).abs() < 1e-12);
    assert!((lp + 4f64.ln()).abs() < 1e-12);
}

#[test]
fn builtin_lookup() {
    let none = BTreeMap::new();
    assert_eq!(builtin_target("bimodal", &none).unwrap().name(), "bimodal");
    assert_eq!(builtin_target("sir", &none).unwrap().dim(), 2);
    assert!(builtin_target("donut", &none).is_err());
    let mut bad = BTreeMap::new();
    bad.insert("tilt".to_string(), 1.0);
    assert!(builtin_target("banana", &bad).is_err());
    let mut ok = BTreeMap::new();
    ok.insert("warp".to_string(), 0.5);
    match builtin_target("banana", &ok).unwrap() {
        BuiltinTarget::Banana(b) => assert_eq!(b.warp, 0.5),
        other => panic!("unexpected {other:?}"),
    }
}
