use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::EpisodeRecord;
use crate::env::{DecPomdp, History};
use crate::error::Result;
use crate::nn::Net;

/// Independent random streams derived from one master seed, so that one
/// subsystem drawing more numbers never shifts another's sequence.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub env: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub buffer: ChaCha8Rng,
    pub club: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self::with_base(seed, 0)
    }

    /// Streams `base + 1 ..= base + 5`; distinct bases never overlap.
    pub fn with_base(seed: u64, base: u64) -> Self {
        RngStreams {
            env: stream(seed, base + 1),
            explore: stream(seed, base + 2),
            buffer: stream(seed, base + 3),
            club: stream(seed, base + 4),
            init: stream(seed, base + 5),
        }
    }

    pub fn next_episode_seed(&mut self) -> u64 {
        self.env.next_u64()
    }
}

/// Deterministic action of an actor network for one history.
pub fn actor_action(net: &Net, history: &History) -> Result<[f64; 2]> {
    let out = net.infer(history.as_slice())?;
    Ok([out[0], out[1]])
}

/// Runs one full episode. `policy` maps the current per-agent histories to
/// the executed joint action.
pub fn run_episode<E, P>(env: &mut E, seed: u64, window: usize, mut policy: P) -> Result<EpisodeRecord>
where
    E: DecPomdp,
    P: FnMut(&[History]) -> Result<Vec<[f64; 2]>>,
{
    let n = env.n_agents();
    let obs_dim = env.obs_dim();
    let obs = env.reset(seed);
    let mut histories: Vec<History> = obs
        .iter()
        .map(|o| History::new(window, obs_dim).updated(o))
        .collect();
    let mut record = EpisodeRecord::new(n, env.state_dim(), window * obs_dim);
    let snapshot = |h: &[History]| h.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>();
    {
        let hs = snapshot(&histories);
        let refs: Vec<&[f64]> = hs.iter().map(Vec::as_slice).collect();
        record.push_observation(&env.state_vector(), &refs);
    }
    loop {
        let joint = policy(&histories)?;
        let out = env.step(&joint)?;
        for (h, o) in histories.iter_mut().zip(&out.observations) {
            h.push(o);
        }
        let executed: Vec<[f64; 2]> = joint
            .iter()
            .map(|a| [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)])
            .collect();
        record.push_step(&executed, out.reward, out.done);
        let hs = snapshot(&histories);
        let refs: Vec<&[f64]> = hs.iter().map(Vec::as_slice).collect();
        record.push_observation(&env.state_vector(), &refs);
        if out.done {
            break;
        }
    }
    Ok(record)
}
