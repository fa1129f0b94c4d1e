//! C ABI over the `mir3` library.
//!
//! All objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`Mir3Status`]; on failure, [`mir3_last_error`] describes the problem for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mir3::config::RunConfig;
use mir3::env::{DecPomdp, History, Rendezvous, RendezvousConfig};
use mir3::eval::confidence_interval;
use mir3::marl::{actor_action, load_actors, EpochMetrics, Trainer};
use mir3::nn::{Checkpoint, Net};
use mir3::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mir3Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    MissingArtifact = 4,
    NumericalFailure = 5,
    Io = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> Mir3Status {
    match e {
        Error::Config { .. } => Mir3Status::Config,
        Error::MissingArtifact(_) | Error::MissingArtifacts(_) => Mir3Status::MissingArtifact,
        Error::NonFinite(_) | Error::NonFiniteGradient { .. } => Mir3Status::NumericalFailure,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Mir3Status::MissingArtifact,
        Error::Io { .. } | Error::Checkpoint(_) => Mir3Status::Io,
        _ => Mir3Status::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (Mir3Status, String)>) -> Mir3Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            Mir3Status::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            Mir3Status::Internal
        }
    }
}

type FfiResult<T> = Result<T, (Mir3Status, String)>;

fn lib<T>(r: mir3::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (Mir3Status, String) {
    (Mir3Status::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (Mir3Status::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn need(len: usize, want: usize, what: &str) -> FfiResult<()> {
    if len < want {
        return Err((
            Mir3Status::InvalidArgument,
            format!("`{what}` holds {len} values, need {want}"),
        ));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mir3_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Run configuration.
pub struct Mir3Config(RunConfig);

/// Defaults of the rendezvous tables.
#[no_mangle]
pub extern "C" fn mir3_config_default() -> *mut Mir3Config {
    Box::into_raw(Box::new(Mir3Config(RunConfig::default())))
}

/// Parses a TOML document.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_config_from_toml(toml: *const c_char, out: *mut *mut Mir3Config) -> Mir3Status {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let out = handle(out, "out")?;
        let cfg = lib(RunConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(Mir3Config(cfg)));
        Ok(())
    })
}

/// Applies one `section.key=value` override in place.
///
/// # Safety
/// `cfg` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mir3_config_set(cfg: *mut Mir3Config, assignment: *const c_char) -> Mir3Status {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let a = str_arg(assignment, "assignment")?;
        cfg.0 = lib(cfg.0.with_overrides(&[a]))?;
        Ok(())
    })
}

/// Serializes the config as TOML. Release the string with
/// [`mir3_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_config_to_toml(cfg: *const Mir3Config, out: *mut *mut c_char) -> Mir3Status {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = handle(out, "out")?;
        let s = CString::new(cfg.0.to_toml_string()).map_err(|e| (Mir3Status::Internal, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mir3_config_free(cfg: *mut Mir3Config) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn mir3_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defender trainer.
pub struct Mir3Trainer(Trainer);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct Mir3EpochMetrics {
    pub epoch: u64,
    pub env_steps: u64,
    pub episode_return: f64,
    /// NaN when not computed.
    pub mi_total: f64,
    /// NaN before the first update.
    pub critic_loss: f64,
    /// NaN before the first update.
    pub actor_loss: f64,
    pub wall_time_s: f64,
}

impl From<EpochMetrics> for Mir3EpochMetrics {
    fn from(m: EpochMetrics) -> Self {
        Mir3EpochMetrics {
            epoch: m.epoch,
            env_steps: m.env_steps,
            episode_return: m.episode_return,
            mi_total: m.mi_total.unwrap_or(f64::NAN),
            critic_loss: m.critic_loss.unwrap_or(f64::NAN),
            actor_loss: m.actor_loss.unwrap_or(f64::NAN),
            wall_time_s: m.wall_time_s,
        }
    }
}

/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_new(cfg: *const Mir3Config, out: *mut *mut Mir3Trainer) -> Mir3Status {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = handle(out, "out")?;
        let t = lib(Trainer::new(&cfg.0))?;
        *out = Box::into_raw(Box::new(Mir3Trainer(t)));
        Ok(())
    })
}

/// Runs one training epoch.
///
/// # Safety
/// `trainer` must come from this library; `metrics` may be null.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_train_epoch(
    trainer: *mut Mir3Trainer,
    metrics: *mut Mir3EpochMetrics,
) -> Mir3Status {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        let m = lib(t.0.train_epoch())?;
        if let Some(out) = metrics.as_mut() {
            *out = m.into();
        }
        Ok(())
    })
}

/// Non-zero once `train.total_timesteps` have been consumed.
///
/// # Safety
/// `trainer` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_is_finished(trainer: *const Mir3Trainer) -> i32 {
    trainer.as_ref().map_or(0, |t| t.0.is_finished() as i32)
}

/// Writes the trainer's networks as a checkpoint file.
///
/// # Safety
/// `trainer` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_save(trainer: *const Mir3Trainer, path: *const c_char) -> Mir3Status {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let p = str_arg(path, "path")?;
        lib(t.0.checkpoint().save(Path::new(p)))
    })
}

/// Copies the noise-free defender policy out of a trainer.
///
/// # Safety
/// `trainer` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_policy(trainer: *const Mir3Trainer, out: *mut *mut Mir3Policy) -> Mir3Status {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let out = handle(out, "out")?;
        let cfg = t.0.config();
        *out = Box::into_raw(Box::new(Mir3Policy {
            actors: t.0.actors().into_iter().cloned().collect(),
            window: cfg.env.history_window,
            obs_dim: cfg.obs_dim(),
        }));
        Ok(())
    })
}

/// # Safety
/// `trainer` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mir3_trainer_free(trainer: *mut Mir3Trainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Deterministic defender actors.
pub struct Mir3Policy {
    actors: Vec<Net>,
    window: usize,
    obs_dim: usize,
}

/// Loads defender actors from a checkpoint written for `cfg`.
///
/// # Safety
/// `cfg` must come from this library, `path` be NUL-terminated and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_policy_load(
    cfg: *const Mir3Config,
    path: *const c_char,
    out: *mut *mut Mir3Policy,
) -> Mir3Status {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let p = str_arg(path, "path")?;
        let out = handle(out, "out")?;
        let ck = lib(Checkpoint::load(Path::new(p)))?;
        let actors = lib(load_actors(&cfg.0, &ck))?;
        *out = Box::into_raw(Box::new(Mir3Policy {
            actors,
            window: cfg.0.env.history_window,
            obs_dim: cfg.0.obs_dim(),
        }));
        Ok(())
    })
}

/// Length of one agent's history input (`history_window * obs_dim`).
///
/// # Safety
/// `policy` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mir3_policy_history_len(policy: *const Mir3Policy) -> usize {
    policy.as_ref().map_or(0, |p| p.window * p.obs_dim)
}

/// Action of `agent` for a flattened history (oldest observation first).
///
/// # Safety
/// `history` must hold `history_len` values and `action_out` two.
#[no_mangle]
pub unsafe extern "C" fn mir3_policy_act(
    policy: *const Mir3Policy,
    agent: usize,
    history: *const f64,
    history_len: usize,
    action_out: *mut f64,
) -> Mir3Status {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        let net = p.actors.get(agent).ok_or_else(|| {
            (
                Mir3Status::InvalidArgument,
                format!("agent {agent} out of range ({} agents)", p.actors.len()),
            )
        })?;
        let h = slice(history, history_len, "history")?;
        need(h.len(), p.window * p.obs_dim, "history")?;
        let mut hist = History::new(p.window, p.obs_dim);
        for obs in h[..p.window * p.obs_dim].chunks(p.obs_dim) {
            hist.push(obs);
        }
        let a = lib(actor_action(net, &hist))?;
        slice_mut(action_out, 2, "action_out")?.copy_from_slice(&a);
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mir3_policy_free(policy: *mut Mir3Policy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Rendezvous environment.
pub struct Mir3Env(Rendezvous);

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mir3_env_new(
    n_agents: usize,
    v_max: f64,
    max_episode_len: usize,
    out: *mut *mut Mir3Env,
) -> Mir3Status {
    guard(|| {
        let out = handle(out, "out")?;
        if n_agents == 0 || max_episode_len == 0 || !(v_max > 0.0 && v_max.is_finite()) {
            return Err((
                Mir3Status::InvalidArgument,
                "need n_agents >= 1, max_episode_len >= 1 and finite v_max > 0".into(),
            ));
        }
        *out = Box::into_raw(Box::new(Mir3Env(Rendezvous::new(RendezvousConfig {
            n_agents,
            v_max,
            max_episode_len,
        }))));
        Ok(())
    })
}

/// Per-agent observation length.
///
/// # Safety
/// `env` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mir3_env_obs_dim(env: *const Mir3Env) -> usize {
    env.as_ref().map_or(0, |e| e.0.obs_dim())
}

/// Resets and writes the `n_agents * obs_dim` observations, agent-major.
///
/// # Safety
/// `obs_out` must hold `obs_len` values.
#[no_mangle]
pub unsafe extern "C" fn mir3_env_reset(env: *mut Mir3Env, seed: u64, obs_out: *mut f64, obs_len: usize) -> Mir3Status {
    guard(|| {
        let e = handle(env, "env")?;
        let out = slice_mut(obs_out, obs_len, "obs_out")?;
        need(out.len(), e.0.n_agents() * e.0.obs_dim(), "obs_out")?;
        let obs = e.0.reset(seed);
        for (dst, o) in out.chunks_mut(e.0.obs_dim()).zip(&obs) {
            dst.copy_from_slice(o);
        }
        Ok(())
    })
}

/// Advances one step with `2 * n_agents` action values.
///
/// # Safety
/// Buffers must hold the stated lengths; `reward` and `done` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mir3_env_step(
    env: *mut Mir3Env,
    actions: *const f64,
    actions_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut i32,
) -> Mir3Status {
    guard(|| {
        let e = handle(env, "env")?;
        let n = e.0.n_agents();
        let a = slice(actions, actions_len, "actions")?;
        need(a.len(), 2 * n, "actions")?;
        let out = slice_mut(obs_out, obs_len, "obs_out")?;
        need(out.len(), n * e.0.obs_dim(), "obs_out")?;
        let reward = handle(reward, "reward")?;
        let done = handle(done, "done")?;
        let joint: Vec<[f64; 2]> = a.chunks(2).take(n).map(|c| [c[0], c[1]]).collect();
        let step = lib(e.0.step(&joint))?;
        for (dst, o) in out.chunks_mut(e.0.obs_dim()).zip(&step.observations) {
            dst.copy_from_slice(o);
        }
        *reward = step.reward;
        *done = step.done as i32;
        Ok(())
    })
}

/// # Safety
/// `env` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mir3_env_free(env: *mut Mir3Env) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Normal-approximation interval `mean ± halfwidth` at `level`.
///
/// # Safety
/// `samples` must hold `n` values; `mean` and `halfwidth` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mir3_confidence_interval(
    samples: *const f64,
    n: usize,
    level: f64,
    mean: *mut f64,
    halfwidth: *mut f64,
) -> Mir3Status {
    guard(|| {
        let s = slice(samples, n, "samples")?;
        let mean = handle(mean, "mean")?;
        let half = handle(halfwidth, "halfwidth")?;
        let (m, h) = lib(confidence_interval(s, level))?;
        *mean = m;
        *half = h;
        Ok(())
    })
}
