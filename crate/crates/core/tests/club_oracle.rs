mod common;

use common::{correlated_pairs, fitted_club_estimate, gaussian_mi};
use mir3::club::{joint_mi, ClubNet, MiEstimate, LOGVAR_MIN};
use mir3::nn::{AdamConfig, Net};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gaussian_mi_reference_values() {
    assert!(gaussian_mi(0.0).abs() < 1e-15);
    assert!((gaussian_mi(0.5) - 0.1438).abs() < 1e-4);
    assert!((gaussian_mi(0.9) - 0.8304).abs() < 1e-4);
}

#[test]
fn estimate_bounds_true_mi_from_above() {
    for rho in [0.0, 0.5, 0.9] {
        let truth = gaussian_mi(rho);
        for seed in 0..5 {
            let est = fitted_club_estimate(rho, seed);
            println!("rho {rho} seed {seed}: estimate {est:.4}, true {truth:.4}");
            assert!(est >= truth - 0.05, "rho {rho} seed {seed}: {est} < {truth} - 0.05");
        }
    }
}

#[test]
fn independent_pairs_estimate_near_zero() {
    let est = fitted_club_estimate(0.0, 11);
    assert!(est.abs() <= 0.05, "{est}");
}

/// Held-out log-likelihood of the OLS fit `a ≈ βh + c` with residual variance.
fn ols_log_likelihood(h: &Array2<f64>, a: &Array2<f64>, ht: &Array2<f64>, at: &Array2<f64>) -> f64 {
    let n = h.nrows() as f64;
    let (mh, ma) = (h.sum() / n, a.sum() / n);
    let cov: f64 = h.iter().zip(a.iter()).map(|(x, y)| (x - mh) * (y - ma)).sum();
    let var: f64 = h.iter().map(|x| (x - mh).powi(2)).sum();
    let beta = cov / var;
    let c = ma - beta * mh;
    let s2: f64 = h.iter().zip(a.iter()).map(|(x, y)| (y - beta * x - c).powi(2)).sum::<f64>() / n;
    let m = ht.nrows() as f64;
    ht.iter()
        .zip(at.iter())
        .map(|(x, y)| -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (y - beta * x - c).powi(2) / s2))
        .sum::<f64>()
        / m
}

#[test]
fn identity_target_matches_least_squares_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draw = |rng: &mut ChaCha8Rng, n: usize| {
        let h = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let a = h.mapv(|x| x + 0.1 * rng.random_range(-1.0..1.0f64) * 3f64.sqrt());
        (h, a)
    };
    let (h, a) = draw(&mut rng, 10_000);
    let (ht, at) = draw(&mut rng, 2_000);
    let mut club = ClubNet::new("id", 1, 1, 32, &mut rng).unwrap();
    club.fit(h.view(), a.view(), 500, &AdamConfig::new(1e-2)).unwrap();
    let fitted = club.log_likelihood(ht.view(), at.view()).unwrap().mean().unwrap();
    let oracle = ols_log_likelihood(&h, &a, &ht, &at);
    assert!((fitted - oracle).abs() <= 0.1, "fitted {fitted} oracle {oracle}");
    let (mean, _) = club.predict(ht.view()).unwrap();
    let max_dev = mean.iter().zip(ht.iter()).map(|(m, x)| (m - x).abs()).fold(0.0, f64::max);
    assert!(max_dev < 0.1, "mean head deviates from identity by {max_dev}");
}

#[test]
fn constant_zero_action_drives_variance_to_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = Array2::from_shape_fn((256, 3), |_| rng.random_range(-1.0..1.0));
    let a = Array2::zeros((256, 2));
    let mut club = ClubNet::new("c", 3, 2, 16, &mut rng).unwrap();
    club.fit(h.view(), a.view(), 3000, &AdamConfig::new(1e-2)).unwrap();
    let (mean, logvar) = club.predict(h.view()).unwrap();
    assert!(mean.iter().all(|m| m.abs() < 0.05), "{mean:?}");
    assert!(logvar.iter().all(|&v| v <= LOGVAR_MIN + 0.05), "{logvar:?}");
}

#[test]
fn zero_epochs_leave_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (h, a) = correlated_pairs(0.5, 64, &mut rng);
    let mut club = ClubNet::new("z", 1, 1, 8, &mut rng).unwrap();
    let before = (club.mean_net().params().clone(), club.logvar_net().params().clone());
    club.fit(h.view(), a.view(), 0, &AdamConfig::new(1e-2)).unwrap();
    assert_eq!(club.mean_net().params(), &before.0);
    assert_eq!(club.logvar_net().params(), &before.1);
}

#[test]
fn identical_pairs_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let club = ClubNet::new("i", 2, 2, 8, &mut rng).unwrap();
    let h = Array2::from_shape_fn((10, 2), |(_, j)| 0.3 + j as f64);
    let a = Array2::from_shape_fn((10, 2), |(_, j)| -0.2 * j as f64);
    assert_eq!(club.estimate(h.view(), a.view(), &mut rng).unwrap(), 0.0);
}

#[test]
fn single_pair_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let club = ClubNet::new("s", 1, 1, 8, &mut rng).unwrap();
    let one = Array2::zeros((1, 1));
    assert!(club.estimate(one.view(), one.view(), &mut rng).is_err());
}

#[test]
fn joint_total_is_sum_of_agents() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let clubs: Vec<ClubNet> = (0..3).map(|i| ClubNet::new(&format!("club.{i}"), 2, 2, 8, &mut rng).unwrap()).collect();
    let data: Vec<(Array2<f64>, Array2<f64>)> = (0..3)
        .map(|_| {
            (
                Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0)),
                Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    let views: Vec<_> = data.iter().map(|(h, a)| (h.view(), a.view())).collect();
    let est = joint_mi(&clubs, &views, &mut rng).unwrap();
    assert_eq!(est.total, est.per_agent.iter().sum::<f64>());
    let single = joint_mi(&clubs[..1], &views[..1], &mut rng).unwrap();
    assert_eq!(single.total, single.per_agent[0]);
    assert_eq!(MiEstimate::from_per_agent(vec![0.2, 0.3]).total, 0.5);
}

#[test]
fn independent_agents_total_near_zero() {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut clubs = Vec::new();
    let mut data = Vec::new();
    for i in 0..n {
        let (h, a) = correlated_pairs(0.0, 10_000, &mut rng);
        let mut c = ClubNet::new(&format!("club.{i}"), 1, 1, 32, &mut rng).unwrap();
        c.fit(h.view(), a.view(), 500, &AdamConfig::new(1e-2)).unwrap();
        clubs.push(c);
        data.push(correlated_pairs(0.0, 10_000, &mut rng));
    }
    let views: Vec<_> = data.iter().map(|(h, a)| (h.view(), a.view())).collect();
    let est = joint_mi(&clubs, &views, &mut rng).unwrap();
    assert!(est.total.abs() <= 0.05 * n as f64, "{est:?}");
}

#[test]
fn logvar_is_clamped_after_forward() {
    use mir3::nn::Activation;
    use ndarray::{array, Array1};
    let mean = Net::from_layers("m", &[(array![[0.0]], Array1::zeros(1))], &[Activation::Linear]).unwrap();
    let logvar = Net::from_layers("v", &[(array![[100.0]], Array1::zeros(1))], &[Activation::Linear]).unwrap();
    let club = ClubNet::from_nets(mean, logvar);
    let (_, lv) = club.predict(array![[1.0], [-1.0], [0.0]].view()).unwrap();
    assert_eq!(lv.column(0).to_vec(), vec![2.0, -6.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_pairing_is_shuffle_invariant(seed in 0u64..1000, b in 2usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let club = ClubNet::new("p", 3, 2, 8, &mut rng).unwrap();
        let h = Array2::from_shape_fn((b, 3), |_| rng.random_range(-1.0..1.0));
        let a = Array2::from_shape_fn((b, 2), |_| rng.random_range(-1.0..1.0));
        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(&mut rng);
        let hp = h.select(Axis(0), &order);
        let ap = a.select(Axis(0), &order);
        let x = club.estimate(h.view(), a.view(), &mut rng).unwrap();
        let y = club.estimate(hp.view(), ap.view(), &mut rng).unwrap();
        prop_assert_eq!(x.to_bits(), y.to_bits());
    }
}
