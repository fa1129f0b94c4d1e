//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use mir3::club::ClubNet;
use mir3::nn::{Activation, AdamConfig, Net};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

fn weighted_sum(net: &Net, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (net.infer_batch(x.view()).unwrap() * c).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Builds a random MLP (every width ≤ 8, random activations) and returns the
/// largest relative error between backprop and central differences over all
/// parameters and inputs.
pub fn fd_max_relative_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
    let kinds = [Activation::Relu, Activation::Tanh, Activation::Linear];
    let acts: Vec<Activation> = (0..depth).map(|k| kinds[(seed as usize + k) % 3]).collect();
    let mut net = Net::new("fd", &sizes, &acts, &mut rng).unwrap();
    let rows = rng.random_range(1..=4);
    let x = Array2::from_shape_fn((rows, sizes[0]), |_| rng.random_range(-2.0..2.0));
    let c = Array2::from_shape_fn((rows, sizes[depth]), |_| rng.random_range(-1.0..1.0));

    net.forward_batch(x.view()).unwrap();
    let input_grad = net.backward_batch(c.view()).unwrap();

    let mut worst: f64 = 0.0;
    let names: Vec<String> = net.params().iter().map(|(n, _)| n.clone()).collect();
    for name in &names {
        let len = net.params().get(name).unwrap().len();
        for i in 0..len {
            let analytic = net.params().get(name).unwrap().grads[i];
            let orig = net.params().get(name).unwrap().values[i];
            net.params_mut().get_mut(name).unwrap().values[i] = orig + FD_STEP;
            let up = weighted_sum(&net, &x, &c);
            net.params_mut().get_mut(name).unwrap().values[i] = orig - FD_STEP;
            let down = weighted_sum(&net, &x, &c);
            net.params_mut().get_mut(name).unwrap().values[i] = orig;
            worst = worst.max(rel_err(analytic, (up - down) / (2.0 * FD_STEP)));
        }
    }
    for r in 0..rows {
        for j in 0..sizes[0] {
            let mut xp = x.clone();
            xp[[r, j]] += FD_STEP;
            let mut xm = x.clone();
            xm[[r, j]] -= FD_STEP;
            let fd = (weighted_sum(&net, &xp, &c) - weighted_sum(&net, &xm, &c)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(input_grad[[r, j]], fd));
        }
    }
    worst
}

/// `-½ ln(1 − ρ²)`.
pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

/// `n` draws of `(h, a)`, standard normal marginals with correlation `rho`.
pub fn correlated_pairs(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let mut h = Array2::zeros((n, 1));
    let mut a = Array2::zeros((n, 1));
    let s = (1.0 - rho * rho).sqrt();
    for j in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        h[[j, 0]] = x;
        a[[j, 0]] = rho * x + s * e;
    }
    (h, a)
}

pub const CLUB_SAMPLES: usize = 10_000;
pub const CLUB_FIT_EPOCHS: usize = 500;

/// Fits a CLUB net on `CLUB_SAMPLES` correlated pairs and returns its
/// estimate on a fresh batch of the same size.
pub fn fitted_club_estimate(rho: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, a) = correlated_pairs(rho, CLUB_SAMPLES, &mut rng);
    let mut club = ClubNet::new("club", 1, 1, 32, &mut rng).unwrap();
    club.fit(h.view(), a.view(), CLUB_FIT_EPOCHS, &AdamConfig::new(1e-2)).unwrap();
    let (h2, a2) = correlated_pairs(rho, CLUB_SAMPLES, &mut rng);
    club.estimate(h2.view(), a2.view(), &mut rng).unwrap()
}

/// A desk-sized configuration that trains in well under a second per
/// hundred epochs.
pub fn small_config(algorithm: mir3::config::Algorithm, seed: u64) -> mir3::config::RunConfig {
    let mut cfg = mir3::config::RunConfig {
        algorithm,
        seed,
        ..Default::default()
    };
    cfg.env.n_agents = 3;
    cfg.env.max_episode_len = 25;
    cfg.train.hidden_dim = 32;
    cfg.train.batch_size = 4;
    cfg.train.buffer_size = 50;
    cfg.train.total_timesteps = 25 * 120;
    cfg.train.checkpoint_interval = 50;
    cfg.attack.budget_steps = 25 * 40;
    cfg.eval.episodes = 8;
    cfg.validate().unwrap();
    cfg
}
