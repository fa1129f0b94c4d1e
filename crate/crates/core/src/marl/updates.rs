//! Single-network update rules shared by the defender and attacker trainers.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::club::MiEstimate;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, Net};

/// A differentiable action-value function over `state ⊕ joint action` rows.
pub trait QFunction {
    /// Per-row values and `∂Q_j/∂input_j`.
    fn q_and_grad(&mut self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

impl QFunction for Net {
    fn q_and_grad(&mut self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        if self.output_dim() != 1 {
            return Err(Error::Topology(format!("{} is not a scalar critic", self.name())));
        }
        let q = self.forward_batch(input)?;
        let ones = Array2::ones((input.nrows(), 1));
        let g = self.input_grad_batch(ones.view())?;
        Ok((q.column(0).to_owned(), g))
    }
}

/// Adapts a closure `f(row) -> (Q, ∂Q/∂row)` into a [`QFunction`].
pub struct FnCritic<F>(pub F);

impl<F> QFunction for FnCritic<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn q_and_grad(&mut self, input: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let mut q = Array1::zeros(input.nrows());
        let mut g = Array2::zeros(input.raw_dim());
        for (j, row) in input.rows().into_iter().enumerate() {
            let (v, grad) = (self.0)(&row.to_vec());
            q[j] = v;
            g.row_mut(j).assign(&ArrayView1::from(&grad));
        }
        Ok((q, g))
    }
}

/// `r − λ · I`, returning `r` untouched when `λ = 0`.
pub fn shape_reward(reward: f64, mi: &MiEstimate, lambda: f64) -> f64 {
    shape_reward_total(reward, mi.total, lambda)
}

pub fn shape_reward_total(reward: f64, mi_total: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        reward
    } else {
        reward - lambda * mi_total
    }
}

/// `y = r + γ (1 − done) Q′`.
pub fn td_targets(
    rewards: ArrayView1<'_, f64>,
    dones: ArrayView1<'_, f64>,
    next_q: ArrayView1<'_, f64>,
    gamma: f64,
) -> Array1<f64> {
    let mut y = Array1::zeros(rewards.len());
    for j in 0..rewards.len() {
        y[j] = rewards[j] + gamma * (1.0 - dones[j]) * next_q[j];
    }
    y
}

/// One Adam step on the mean squared TD error. Returns the loss before the
/// step.
pub fn critic_step(
    critic: &mut Net,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
    adam: &AdamConfig,
) -> Result<f64> {
    let q = critic.forward_batch(inputs)?;
    let m = inputs.nrows() as f64;
    let mut grad = Array2::zeros((inputs.nrows(), 1));
    let mut loss = 0.0;
    for j in 0..inputs.nrows() {
        let diff = q[[j, 0]] - targets[j];
        loss += diff * diff / m;
        grad[[j, 0]] = 2.0 * diff / m;
    }
    critic.backward_batch(grad.view())?;
    adam_step(critic.params_mut(), adam)?;
    Ok(loss)
}

/// Deterministic policy gradient step: writes the actor's actions into
/// columns `action_offset..` of `critic_input`, ascends the critic through
/// those columns only, and returns `−mean Q`.
pub fn actor_step(
    actor: &mut Net,
    critic: &mut dyn QFunction,
    actor_input: ArrayView2<'_, f64>,
    mut critic_input: Array2<f64>,
    action_offset: usize,
    adam: &AdamConfig,
) -> Result<f64> {
    let actions = actor.forward_batch(actor_input)?;
    let width = actions.ncols();
    critic_input
        .slice_mut(s![.., action_offset..action_offset + width])
        .assign(&actions);
    let (q, g) = critic.q_and_grad(critic_input.view())?;
    let m = q.len() as f64;
    let grad = g.slice(s![.., action_offset..action_offset + width]).mapv(|v| -v / m);
    actor.backward_batch(grad.view())?;
    adam_step(actor.params_mut(), adam)?;
    Ok(-q.sum() / m)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Moves every other agent's action one signed-gradient step of size `ε`
/// against the critic of `self_index`, clipped to `[-1, 1]`. Rows of
/// `critic_input` are `state (state_dim) ⊕ a_0 ⊕ … ⊕ a_{N−1}` with 2-D actions.
pub fn m3ddpg_perturb(
    critic: &mut dyn QFunction,
    critic_input: &mut Array2<f64>,
    state_dim: usize,
    epsilon: f64,
    self_index: usize,
) -> Result<()> {
    if epsilon == 0.0 {
        return Ok(());
    }
    let n_agents = (critic_input.ncols() - state_dim) / 2;
    let (_, g) = critic.q_and_grad(critic_input.view())?;
    for j in 0..critic_input.nrows() {
        for agent in (0..n_agents).filter(|&a| a != self_index) {
            for d in 0..2 {
                let col = state_dim + 2 * agent + d;
                let v = critic_input[[j, col]] - epsilon * sign(g[[j, col]]);
                critic_input[[j, col]] = v.clamp(-1.0, 1.0);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shaping_arithmetic() {
        let mi = MiEstimate::from_per_agent(vec![2.0]);
        assert_eq!(shape_reward(-1.0, &mi, 0.0), -1.0);
        assert!((shape_reward(-1.0, &mi, 5e-5) - (-1.0001)).abs() < 1e-15);
        assert_eq!(shape_reward(-0.3, &MiEstimate::from_per_agent(vec![0.0]), 0.1), -0.3);
        assert_eq!(shape_reward_total(-0.3, f64::NAN, 0.0), -0.3);
    }

    #[test]
    fn td_target_arithmetic() {
        let y = td_targets(array![1.0, 1.0].view(), array![0.0, 1.0].view(), array![2.0, 2.0].view(), 0.99);
        assert!((y[0] - 2.98).abs() < 1e-12);
        assert_eq!(y[1], 1.0);
    }

    #[test]
    fn critic_fixed_point() {
        let mut critic =
            Net::from_layers("q", &[(array![[1.0, 0.5]], array![0.25])], &[Activation::Linear]).unwrap();
        let x = array![[1.0, 2.0], [-1.0, 0.0]];
        let y = critic.infer_batch(x.view()).unwrap().column(0).to_owned();
        let before = critic.params().digest();
        let loss = critic_step(&mut critic, x.view(), y.view(), &AdamConfig::new(1e-3)).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(before, critic.params().digest());
    }

    #[test]
    fn constant_critic_leaves_actor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut actor = Net::new("a", &[3, 4, 2], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let before = actor.params().digest();
        let mut critic = FnCritic(|row: &[f64]| (1.0, vec![0.0; row.len()]));
        let h = Array2::from_elem((5, 3), 0.3);
        actor_step(&mut actor, &mut critic, h.view(), Array2::zeros((5, 4)), 0, &AdamConfig::new(1e-3)).unwrap();
        assert_eq!(before, actor.params().digest());
    }

    #[test]
    fn quadratic_critic_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut actor = Net::new("a", &[1, 8, 1], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let mut critic = FnCritic(|row: &[f64]| {
            let a = row[0];
            (-(a - 0.5) * (a - 0.5), vec![-2.0 * (a - 0.5)])
        });
        let h = Array2::from_shape_fn((16, 1), |(j, _)| j as f64 / 8.0 - 1.0);
        let adam = AdamConfig::new(1e-2);
        for _ in 0..2000 {
            actor_step(&mut actor, &mut critic, h.view(), Array2::zeros((16, 1)), 0, &adam).unwrap();
        }
        let out = actor.infer_batch(h.view()).unwrap();
        assert!(out.iter().all(|a| (a - 0.5).abs() < 0.01), "{out}");
    }

    #[test]
    fn gradient_isolation_between_agents() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a0 = Net::new("a0", &[2, 4, 2], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let mut a1 = Net::new("a1", &[2, 4, 2], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let before = a1.params().digest();
        // Q depends only on agent 0's action (columns 0..2)
        let mut critic = FnCritic(|row: &[f64]| (row[0] + row[1], vec![1.0, 1.0, 0.0, 0.0]));
        let h = Array2::from_elem((4, 2), 0.1);
        let adam = AdamConfig::new(1e-3);
        let b0 = a0.params().digest();
        actor_step(&mut a0, &mut critic, h.view(), Array2::zeros((4, 4)), 0, &adam).unwrap();
        actor_step(&mut a1, &mut critic, h.view(), Array2::zeros((4, 4)), 2, &adam).unwrap();
        assert_eq!(before, a1.params().digest());
        assert_ne!(b0, a0.params().digest());
    }

    #[test]
    fn m3ddpg_steps_against_gradient() {
        // state_dim 0, two agents; Q = a_1x (agent 1 first action component)
        let mut critic = FnCritic(|_row: &[f64]| (0.0, vec![0.3, 0.2, 1.0, 0.0]));
        let mut input = array![[0.1, 0.2, 0.5, -0.5]];
        m3ddpg_perturb(&mut critic, &mut input, 0, 0.001, 0).unwrap();
        assert_eq!(input.row(0).slice(s![0..2]).to_vec(), vec![0.1, 0.2]);
        assert!((input[[0, 2]] - 0.499).abs() < 1e-15);
        assert_eq!(input[[0, 3]], -0.5);

        let mut same = array![[0.1, 0.2, 0.5, -0.5]];
        m3ddpg_perturb(&mut critic, &mut same, 0, 0.0, 0).unwrap();
        assert_eq!(same, array![[0.1, 0.2, 0.5, -0.5]]);

        let mut edge = array![[0.0, 0.0, -1.0, 0.0]];
        m3ddpg_perturb(&mut critic, &mut edge, 0, 0.5, 0).unwrap();
        assert_eq!(edge[[0, 2]], -1.0);
    }

    #[test]
    fn net_critic_input_grad_matches_weights() {
        let mut critic = Net::from_layers("q", &[(array![[2.0, -1.0]], Array1::zeros(1))], &[Activation::Linear]).unwrap();
        let (q, g) = critic.q_and_grad(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(q[0], 1.0);
        assert_eq!(g.row(0).to_vec(), vec![2.0, -1.0]);
    }
}
