//! C ABI over `rps-core`: opaque handles for the GMM environment and saved
//! agents, plain functions for mixture distance and text similarity.
//!
//! Every fallible function returns an [`RpsStatus`]. On failure the message is
//! kept per thread and can be read with [`rps_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rps_core::agents::{DdpgAgent, DqnAgent};
use rps_core::dialogue::{PromptStrategy, STATE_DIM};
use rps_core::env_gmm::{GmmEnv, GmmEpisodeConfig};
use rps_core::gmm::{mixture_distance, Gaussian1D, Mixture};
use rps_core::textsim::{cosine, Embedder};
use rps_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Usage = 4,
    Io = 5,
    Checkpoint = 6,
    Schema = 7,
    Parse = 8,
    InsufficientData = 9,
    NotYetEstimable = 10,
    Provider = 11,
    Diverged = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RpsStatus {
    match e {
        Error::Config(_) => RpsStatus::Config,
        Error::Usage(_) => RpsStatus::Usage,
        Error::Diverged(_) => RpsStatus::Diverged,
        Error::InsufficientData { .. } => RpsStatus::InsufficientData,
        Error::NotYetEstimable { .. } => RpsStatus::NotYetEstimable,
        Error::Checkpoint(_) => RpsStatus::Checkpoint,
        Error::Parse { .. } => RpsStatus::Parse,
        Error::Schema(_) => RpsStatus::Schema,
        Error::ProviderUnavailable(_) | Error::ProviderContract(_) => RpsStatus::Provider,
        Error::Io { .. } => RpsStatus::Io,
    }
}

struct Fail(RpsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(RpsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus the thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RpsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RpsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(RpsStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(RpsStatus::NullPointer, format!("{name} is null")))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(RpsStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

/// Copies `src` into the caller's buffer of `cap` values and reports the length needed.
unsafe fn write_vec(src: &[f64], dst: *mut f64, cap: usize, written: *mut usize) -> Result<(), Fail> {
    if !written.is_null() {
        *written = src.len();
    }
    if cap < src.len() {
        return Err(invalid(format!("buffer holds {cap} values, {} needed", src.len())));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(Fail(RpsStatus::NullPointer, "output buffer is null".into()));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn rps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn rps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// GMM elicitation environment with its own random stream.
pub struct RpsGmmEnv {
    env: GmmEnv,
    rng: ChaCha8Rng,
}

/// Creates an environment with default settings. `horizon` 0 keeps the default.
///
/// # Safety
/// `out_env` must be a valid pointer; the handle is released with [`rps_gmm_env_free`].
#[no_mangle]
pub unsafe extern "C" fn rps_gmm_env_new(
    biased: bool,
    horizon: usize,
    seed: u64,
    out_env: *mut *mut RpsGmmEnv,
) -> RpsStatus {
    guard(|| {
        let slot = out(out_env, "out_env")?;
        let mut cfg = GmmEpisodeConfig {
            biased,
            ..GmmEpisodeConfig::default()
        };
        if horizon > 0 {
            cfg.horizon = horizon;
        }
        let env = GmmEnv::new(cfg)?;
        *slot = Box::into_raw(Box::new(RpsGmmEnv {
            env,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`rps_gmm_env_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rps_gmm_env_free(env: *mut RpsGmmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rps_gmm_env_observation_dim(env: *const RpsGmmEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.config().observation_dim())
}

/// Starts an episode and writes the initial observation.
///
/// # Safety
/// `env` must be live; `obs` must hold `obs_cap` doubles; `obs_len` may be null.
#[no_mangle]
pub unsafe extern "C" fn rps_gmm_env_reset(
    env: *mut RpsGmmEnv,
    obs: *mut f64,
    obs_cap: usize,
    obs_len: *mut usize,
) -> RpsStatus {
    guard(|| {
        let h = out(env, "env")?;
        let o = h.env.reset(&mut h.rng)?;
        write_vec(&o, obs, obs_cap, obs_len)
    })
}

/// Takes one step. `distance` receives NaN while the estimate is still warming up.
///
/// # Safety
/// `env` must be live; `obs` must hold `obs_cap` doubles; the scalar outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn rps_gmm_env_step(
    env: *mut RpsGmmEnv,
    action: f64,
    obs: *mut f64,
    obs_cap: usize,
    reward: *mut f64,
    done: *mut bool,
    distance: *mut f64,
) -> RpsStatus {
    guard(|| {
        let h = out(env, "env")?;
        let s = h.env.step(action, &mut h.rng)?;
        write_vec(&s.observation, obs, obs_cap, ptr::null_mut())?;
        if let Some(r) = reward.as_mut() {
            *r = s.reward;
        }
        if let Some(d) = done.as_mut() {
            *d = s.done;
        }
        if let Some(d) = distance.as_mut() {
            *d = s.diagnostics.distance.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Saved DDPG policy.
pub struct RpsDdpg(DdpgAgent);

/// Saved DQN policy.
pub struct RpsDqn(DqnAgent);

/// # Safety
/// `path` must be a NUL-terminated string and `out_agent` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rps_ddpg_load(
    path: *const c_char,
    state_dim: usize,
    out_agent: *mut *mut RpsDdpg,
) -> RpsStatus {
    guard(|| {
        let slot = out(out_agent, "out_agent")?;
        let agent = DdpgAgent::load(text(path, "path")?, state_dim)?;
        *slot = Box::into_raw(Box::new(RpsDdpg(agent)));
        Ok(())
    })
}

/// Deterministic action for `obs`.
///
/// # Safety
/// `agent` must be live and `obs` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rps_ddpg_act(
    agent: *const RpsDdpg,
    obs: *const f64,
    len: usize,
    action: *mut f64,
) -> RpsStatus {
    guard(|| {
        let a = agent
            .as_ref()
            .ok_or_else(|| Fail(RpsStatus::NullPointer, "agent is null".into()))?;
        let o = slice(obs, len, "obs")?;
        let mut idle = ChaCha8Rng::seed_from_u64(0);
        *out(action, "action")? = a.0.act(o, false, &mut idle)?;
        Ok(())
    })
}

/// # Safety
/// `agent` must come from [`rps_ddpg_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rps_ddpg_free(agent: *mut RpsDdpg) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Loads a dialogue-track DQN checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_agent` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rps_dqn_load(path: *const c_char, out_agent: *mut *mut RpsDqn) -> RpsStatus {
    guard(|| {
        let slot = out(out_agent, "out_agent")?;
        let agent = DqnAgent::load(text(path, "path")?, STATE_DIM, PromptStrategy::COUNT)?;
        *slot = Box::into_raw(Box::new(RpsDqn(agent)));
        Ok(())
    })
}

/// Greedy strategy index for `obs`.
///
/// # Safety
/// `agent` must be live and `obs` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rps_dqn_greedy(
    agent: *const RpsDqn,
    obs: *const f64,
    len: usize,
    action: *mut u32,
) -> RpsStatus {
    guard(|| {
        let a = agent
            .as_ref()
            .ok_or_else(|| Fail(RpsStatus::NullPointer, "agent is null".into()))?;
        let o = slice(obs, len, "obs")?;
        *out(action, "action")? = a.0.greedy(o)? as u32;
        Ok(())
    })
}

/// # Safety
/// `agent` must come from [`rps_dqn_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rps_dqn_free(agent: *mut RpsDqn) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

unsafe fn mixture(k: usize, weights: *const f64, means: *const f64, variances: *const f64) -> Result<Mixture, Fail> {
    if k == 0 {
        return Err(invalid("mixture needs at least one component"));
    }
    let w = slice(weights, k, "weights")?;
    let m = slice(means, k, "means")?;
    let v = slice(variances, k, "variances")?;
    let comps = m
        .iter()
        .zip(v)
        .map(|(m, v)| Gaussian1D::new(*m, *v))
        .collect::<rps_core::Result<Vec<_>>>()?;
    Ok(Mixture::new(comps, w.to_vec())?)
}

/// Matched-component KL distance between two `k`-component mixtures given as parallel arrays.
///
/// # Safety
/// Each array must hold `k` doubles; `distance` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rps_mixture_distance(
    k: usize,
    est_weights: *const f64,
    est_means: *const f64,
    est_variances: *const f64,
    true_weights: *const f64,
    true_means: *const f64,
    true_variances: *const f64,
    distance: *mut f64,
) -> RpsStatus {
    guard(|| {
        let est = mixture(k, est_weights, est_means, est_variances)?;
        let truth = mixture(k, true_weights, true_means, true_variances)?;
        *out(distance, "distance")? = mixture_distance(&est, &truth)?;
        Ok(())
    })
}

/// Cosine similarity of two texts under the built-in hashed n-gram embedder.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `similarity` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rps_text_similarity(a: *const c_char, b: *const c_char, similarity: *mut f64) -> RpsStatus {
    guard(|| {
        let a = text(a, "a")?;
        let b = text(b, "b")?;
        let embed = Embedder::builtin();
        let va = embed.embed(a)?;
        let vb = embed.embed(b)?;
        *out(similarity, "similarity")? = cosine(&va, &vb)?;
        Ok(())
    })
}
