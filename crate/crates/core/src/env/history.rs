/// Sliding window of the last `window` observations of one agent, oldest
/// first, zero-padded until the window fills.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    obs_dim: usize,
    data: Vec<f64>,
}

impl History {
    pub fn new(window: usize, obs_dim: usize) -> Self {
        assert!(window >= 1, "history window must be >= 1");
        History {
            obs_dim,
            data: vec![0.0; window * obs_dim],
        }
    }

    pub fn window(&self) -> usize {
        self.data.len() / self.obs_dim.max(1)
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Drops the oldest slot and writes `obs` into the newest one.
    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.obs_dim, "observation length");
        self.data.rotate_left(self.obs_dim);
        let start = self.data.len() - self.obs_dim;
        self.data[start..].copy_from_slice(obs);
    }

    pub fn updated(&self, obs: &[f64]) -> History {
        let mut h = self.clone();
        h.push(obs);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_of_one_is_current_observation() {
        let h = History::new(1, 3).updated(&[1.0, 2.0, 3.0]).updated(&[4.0, 5.0, 6.0]);
        assert_eq!(h.as_slice(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn zero_padding_before_fill() {
        let h = History::new(4, 2).updated(&[1.0, 1.0]).updated(&[2.0, 2.0]);
        assert_eq!(h.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn oldest_dropped() {
        let mut h = History::new(2, 1);
        for v in [1.0, 2.0, 3.0] {
            h.push(&[v]);
        }
        assert_eq!(h.as_slice(), &[2.0, 3.0]);
        assert_eq!(h.window(), 2);
    }
}
