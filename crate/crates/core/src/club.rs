//! Contrastive log-ratio upper bound (CLUB) on the mutual information
//! between an agent's history and its action.
//!
//! A diagonal Gaussian `q(a | h)` is fit by maximum likelihood; the estimate
//! is the mean log-likelihood of matched pairs minus the mean over
//! mismatched pairs.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, Net};

pub const LOGVAR_MIN: f64 = -6.0;
pub const LOGVAR_MAX: f64 = 2.0;
/// Largest batch for which every (history, action) pair enters the negative term.
pub const FULL_PAIRING_MAX: usize = 512;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone)]
pub struct ClubNet {
    mean: Net,
    logvar: Net,
    skipped_updates: u64,
}

/// Per-agent CLUB values and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub per_agent: Vec<f64>,
    pub total: f64,
}

impl MiEstimate {
    pub fn from_per_agent(per_agent: Vec<f64>) -> Self {
        let total = per_agent.iter().sum();
        MiEstimate { per_agent, total }
    }
}

/// Sum that does not depend on the order of `values`.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

fn gaussian_log_density(a: &[f64], mean: &[f64], logvar: &[f64]) -> f64 {
    let mut ll = 0.0;
    for d in 0..a.len() {
        let diff = a[d] - mean[d];
        ll -= 0.5 * (LN_2PI + logvar[d] + diff * diff * (-logvar[d]).exp());
    }
    ll
}

impl ClubNet {
    /// Two single-hidden-layer heads `h -> hidden/2 -> action_dim`.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        history_dim: usize,
        action_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let acts = [Activation::Relu, Activation::Linear];
        let sizes = [history_dim, (hidden / 2).max(1), action_dim];
        Ok(ClubNet {
            mean: Net::new(format!("{name}.mean"), &sizes, &acts, rng)?,
            logvar: Net::new(format!("{name}.logvar"), &sizes, &acts, rng)?,
            skipped_updates: 0,
        })
    }

    pub fn from_nets(mean: Net, logvar: Net) -> Self {
        ClubNet {
            mean,
            logvar,
            skipped_updates: 0,
        }
    }

    pub fn mean_net(&self) -> &Net {
        &self.mean
    }

    pub fn logvar_net(&self) -> &Net {
        &self.logvar
    }

    pub fn nets_mut(&mut self) -> (&mut Net, &mut Net) {
        (&mut self.mean, &mut self.logvar)
    }

    /// Updates skipped because the loss was not finite.
    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }

    /// Conditional mean and clamped log-variance for each history row.
    pub fn predict(&self, histories: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let mean = self.mean.infer_batch(histories)?;
        let mut logvar = self.logvar.infer_batch(histories)?;
        logvar.mapv_inplace(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok((mean, logvar))
    }

    /// `log q(a_j | h_j)` for every row.
    pub fn log_likelihood(
        &self,
        histories: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>> {
        let (mean, logvar) = self.predict(histories)?;
        Ok(Array1::from_iter((0..actions.nrows()).map(|j| {
            gaussian_log_density(
                &actions.row(j).to_vec(),
                mean.row(j).as_slice().unwrap(),
                logvar.row(j).as_slice().unwrap(),
            )
        })))
    }

    /// Maximizes the mean log-likelihood of `actions` given `histories` with
    /// one full-batch Adam step per epoch.
    pub fn fit(
        &mut self,
        histories: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        epochs: usize,
        adam: &AdamConfig,
    ) -> Result<()> {
        let b = histories.nrows();
        if b == 0 {
            return Err(Error::InsufficientSamples { need: 1, got: 0 });
        }
        if actions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CLUB training actions".into()));
        }
        let inv_b = 1.0 / b as f64;
        for _ in 0..epochs {
            let mean = self.mean.forward_batch(histories)?;
            let raw_logvar = self.logvar.forward_batch(histories)?;
            let logvar = raw_logvar.mapv(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
            let prec = logvar.mapv(|v| (-v).exp());
            let diff = &actions - &mean;
            let scaled = &diff * &prec;
            let sq = &diff * &scaled;
            let loss = 0.5 * (LN_2PI * mean.len() as f64 + logvar.sum() + sq.sum()) * inv_b;
            let g_mean = scaled.mapv(|v| -v * inv_b);
            let mut g_logvar = Array2::zeros(raw_logvar.raw_dim());
            Zip::from(&mut g_logvar)
                .and(&raw_logvar)
                .and(&sq)
                .for_each(|g, &raw, &q| {
                    if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
                        *g = 0.5 * (1.0 - q) * inv_b;
                    }
                });
            if !loss.is_finite() {
                self.skipped_updates += 1;
                log::warn!("{}: non-finite CLUB loss, update skipped", self.mean.name());
                continue;
            }
            self.mean.backward_batch(g_mean.view())?;
            self.logvar.backward_batch(g_logvar.view())?;
            adam_step(self.mean.params_mut(), adam)?;
            adam_step(self.logvar.params_mut(), adam)?;
        }
        Ok(())
    }

    /// Per-sample CLUB contributions; their mean is the CLUB estimate.
    ///
    /// For `B <= FULL_PAIRING_MAX` sample `j` contributes
    /// `log q(a_j|h_j) - (1/B) Σ_k log q(a_k|h_j)` and `rng` is unused.
    /// Larger batches use a single negative `a_{π(j)}` from a uniform shuffle.
    pub fn pointwise<R: Rng + ?Sized>(
        &self,
        histories: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let b = histories.nrows();
        if b < 2 {
            return Err(Error::InsufficientSamples { need: 2, got: b });
        }
        if actions.nrows() != b {
            return Err(Error::Dimension {
                layer: "club batch".into(),
                expected: b,
                got: actions.nrows(),
            });
        }
        let (mean, logvar) = self.predict(histories)?;
        let prec = logvar.mapv(|v| (-v).exp());
        // log q(a | h) for every row of `acts` against the model of the same row.
        let log_q = |acts: &Array2<f64>| -> Array1<f64> {
            let diff = acts - &mean;
            let mut terms = &diff * &diff * &prec;
            terms += &logvar;
            terms.mapv_inplace(|v| -0.5 * (LN_2PI + v));
            terms.sum_axis(Axis(1))
        };
        let acts = actions.to_owned();
        let mut out = Array1::zeros(b);
        if b <= FULL_PAIRING_MAX {
            let mut diffs = vec![0.0; b];
            for j in 0..b {
                let (mu, lv) = (mean.row(j), logvar.row(j));
                let (mu, lv) = (mu.as_slice().unwrap(), lv.as_slice().unwrap());
                let pos = gaussian_log_density(acts.row(j).as_slice().unwrap(), mu, lv);
                for (k, a) in acts.rows().into_iter().enumerate() {
                    diffs[k] = pos - gaussian_log_density(a.as_slice().unwrap(), mu, lv);
                }
                out[j] = ordered_sum(&mut diffs) / b as f64;
            }
        } else {
            let mut perm: Vec<usize> = (0..b).collect();
            perm.shuffle(rng);
            out = log_q(&acts) - log_q(&acts.select(Axis(0), &perm));
        }
        Ok(out)
    }

    /// CLUB upper-bound estimate on a batch of at least two pairs.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        histories: ArrayView2<'_, f64>,
        actions: ArrayView2<'_, f64>,
        rng: &mut R,
    ) -> Result<f64> {
        let mut pw = self.pointwise(histories, actions, rng)?.to_vec();
        let n = pw.len() as f64;
        Ok(ordered_sum(&mut pw) / n)
    }
}

/// Sums per-agent CLUB estimates over matching per-agent batches.
pub fn joint_mi<R: Rng + ?Sized>(
    clubs: &[ClubNet],
    batches: &[(ArrayView2<'_, f64>, ArrayView2<'_, f64>)],
    rng: &mut R,
) -> Result<MiEstimate> {
    if clubs.len() != batches.len() {
        return Err(Error::Dimension {
            layer: "joint_mi agents".into(),
            expected: clubs.len(),
            got: batches.len(),
        });
    }
    let per_agent = clubs
        .iter()
        .zip(batches)
        .map(|(c, (h, a))| c.estimate(*h, *a, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MiEstimate::from_per_agent(per_agent))
}
