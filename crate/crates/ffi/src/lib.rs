//! C ABI over the `diiqn` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every function returns a
//! [`DiiqnStatus`]; on failure a message is available from
//! [`diiqn_last_error`] until the next call on the same thread. Panics are
//! caught and reported as `DIIQN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use diiqn::envs::{EnvError, Environment, Role};
use diiqn::expert::DatasetFile;
use diiqn::harness::{self, HarnessError};
use diiqn::learner::{LearnerError, RunConfig};
use diiqn::nn::QNetwork;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiiqnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Environment = 5,
    Network = 6,
    Dataset = 7,
    Training = 8,
    Panic = 9,
}

/// Which action set an environment handle acts with.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiiqnRole {
    Agent = 0,
    Expert = 1,
}

/// Opaque environment handle.
pub struct DiiqnEnv {
    inner: Box<dyn Environment>,
}

/// Opaque Q-network handle.
pub struct DiiqnNetwork {
    inner: QNetwork,
}

/// Opaque expert dataset handle.
pub struct DiiqnDataset {
    inner: DatasetFile,
}

/// Headline numbers of a training run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiiqnTrainSummary {
    pub steps: u64,
    /// -1 when the run never converged.
    pub convergence_step: i64,
    pub final_return: f32,
    pub final_normalized: f32,
    pub final_success_rate: f32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(DiiqnStatus, String);

impl Failure {
    fn new(status: DiiqnStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Usage(_) | HarnessError::Json(_) => DiiqnStatus::Config,
            HarnessError::Io { .. } | HarnessError::Csv(_) => DiiqnStatus::Io,
            HarnessError::Learner(LearnerError::Config(_)) => DiiqnStatus::Config,
            HarnessError::Env(_) => DiiqnStatus::Environment,
            HarnessError::Nn(_) => DiiqnStatus::Network,
            HarnessError::Expert(_) => DiiqnStatus::Dataset,
            _ => DiiqnStatus::Training,
        };
        Failure(status, e.to_string())
    }
}

impl From<LearnerError> for Failure {
    fn from(e: LearnerError) -> Self {
        HarnessError::from(e).into()
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        Failure(DiiqnStatus::Environment, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DiiqnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DiiqnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside diiqn");
            DiiqnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(DiiqnStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DiiqnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(DiiqnStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    handle(p, what)
}

unsafe fn buffer<'a>(p: *mut f32, len: usize, need: usize, what: &str) -> Result<&'a mut [f32], Failure> {
    if p.is_null() {
        return Err(Failure::new(DiiqnStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(Failure::new(
            DiiqnStatus::InvalidArgument,
            format!("{what} holds {len} values; {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

fn config(toml: &str) -> Result<RunConfig, Failure> {
    RunConfig::from_toml(toml).map_err(Failure::from)
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn diiqn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn diiqn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build an environment from run-config TOML text.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diiqn_env_new(
    config_toml: *const c_char,
    role: DiiqnRole,
    seed: u64,
    out: *mut *mut DiiqnEnv,
) -> DiiqnStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = config(text(config_toml, "config_toml")?)?;
        let role = match role {
            DiiqnRole::Agent => Role::Agent,
            DiiqnRole::Expert => Role::Expert,
        };
        let inner = cfg.env_config()?.build(role, seed)?;
        *out = Box::into_raw(Box::new(DiiqnEnv { inner }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`diiqn_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn diiqn_env_free(env: *mut DiiqnEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diiqn_env_dims(env: *const DiiqnEnv, state_dim: *mut usize, num_actions: *mut usize) -> DiiqnStatus {
    guard(|| {
        let env = handle(env.cast_mut(), "env")?;
        *out_ptr(state_dim, "state_dim")? = env.inner.state_dim();
        *out_ptr(num_actions, "num_actions")? = env.inner.num_actions();
        Ok(())
    })
}

/// Start an episode and write the initial state into `state`.
///
/// # Safety
/// `state` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn diiqn_env_reset(env: *mut DiiqnEnv, state: *mut f32, len: usize) -> DiiqnStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let dim = env.inner.state_dim();
        let out = buffer(state, len, dim, "state")?;
        out.copy_from_slice(&env.inner.reset());
        Ok(())
    })
}

/// Apply `action`, writing the next state, reward and terminal flag.
///
/// # Safety
/// `state` must point to `len` writable floats; `reward` and `done` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn diiqn_env_step(
    env: *mut DiiqnEnv,
    action: usize,
    state: *mut f32,
    len: usize,
    reward: *mut f32,
    done: *mut bool,
) -> DiiqnStatus {
    guard(|| {
        let env = handle(env, "env")?;
        let dim = env.inner.state_dim();
        let out = buffer(state, len, dim, "state")?;
        let reward = out_ptr(reward, "reward")?;
        let done = out_ptr(done, "done")?;
        let step = env.inner.step(action)?;
        out.copy_from_slice(&step.state);
        *reward = step.reward;
        *done = step.done;
        Ok(())
    })
}

/// Load a network checkpoint written by `diiqn train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diiqn_network_load(path: *const c_char, out: *mut *mut DiiqnNetwork) -> DiiqnStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = text(path, "path")?;
        let file = std::fs::File::open(path).map_err(|e| Failure::new(DiiqnStatus::Io, format!("{path}: {e}")))?;
        let inner = diiqn::nn::read_checkpoint(std::io::BufReader::new(file))
            .map_err(|e| Failure::new(DiiqnStatus::Network, e.to_string()))?;
        *out = Box::into_raw(Box::new(DiiqnNetwork { inner }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`diiqn_network_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn diiqn_network_free(net: *mut DiiqnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn diiqn_network_dims(
    net: *const DiiqnNetwork,
    input_dim: *mut usize,
    num_actions: *mut usize,
) -> DiiqnStatus {
    guard(|| {
        let net = handle(net.cast_mut(), "net")?;
        *out_ptr(input_dim, "input_dim")? = net.inner.input_dim();
        *out_ptr(num_actions, "num_actions")? = net.inner.num_actions();
        Ok(())
    })
}

/// Q-values of one state.
///
/// # Safety
/// `state` must point to `state_len` floats and `q` to `q_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn diiqn_network_forward(
    net: *const DiiqnNetwork,
    state: *const f32,
    state_len: usize,
    q: *mut f32,
    q_len: usize,
) -> DiiqnStatus {
    guard(|| {
        let net = handle(net.cast_mut(), "net")?;
        if state.is_null() {
            return Err(Failure::new(DiiqnStatus::NullPointer, "state is null"));
        }
        let input = std::slice::from_raw_parts(state, state_len);
        let out = buffer(q, q_len, net.inner.num_actions(), "q")?;
        let values = net
            .inner
            .forward(input)
            .map_err(|e| Failure::new(DiiqnStatus::InvalidArgument, e.to_string()))?;
        out.copy_from_slice(&values);
        Ok(())
    })
}

/// Load an expert dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn diiqn_dataset_load(path: *const c_char, out: *mut *mut DiiqnDataset) -> DiiqnStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let inner = harness::load_dataset(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(DiiqnDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`diiqn_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn diiqn_dataset_free(ds: *mut DiiqnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Record count, state length and number of distinct experts.
///
/// # Safety
/// `ds` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn diiqn_dataset_info(
    ds: *const DiiqnDataset,
    records: *mut usize,
    state_dim: *mut usize,
    experts: *mut usize,
) -> DiiqnStatus {
    guard(|| {
        let ds = &handle(ds.cast_mut(), "dataset")?.inner;
        *out_ptr(records, "records")? = ds.len();
        *out_ptr(state_dim, "state_dim")? = ds.shape.len();
        *out_ptr(experts, "experts")? = ds.expert_ids.iter().map(|&i| i as usize + 1).max().unwrap_or(0);
        Ok(())
    })
}

/// Copy record `index` into `s` and `s_next`.
///
/// # Safety
/// `s` and `s_next` must each point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn diiqn_dataset_record(
    ds: *const DiiqnDataset,
    index: usize,
    s: *mut f32,
    s_next: *mut f32,
    len: usize,
) -> DiiqnStatus {
    guard(|| {
        let ds = &handle(ds.cast_mut(), "dataset")?.inner;
        let (a, b) = ds.transitions.get(index).ok_or_else(|| {
            Failure::new(
                DiiqnStatus::InvalidArgument,
                format!("record {index} out of range for {} records", ds.len()),
            )
        })?;
        buffer(s, len, a.len(), "s")?.copy_from_slice(a);
        buffer(s_next, len, b.len(), "s_next")?.copy_from_slice(b);
        Ok(())
    })
}

/// Train from run-config TOML text and write the run files into `out_dir`,
/// exactly as `diiqn train` does. A relative `dataset` path is resolved
/// against the working directory.
///
/// # Safety
/// `config_toml` and `out_dir` must be NUL-terminated strings; `summary`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn diiqn_train(
    config_toml: *const c_char,
    out_dir: *const c_char,
    summary: *mut DiiqnTrainSummary,
) -> DiiqnStatus {
    guard(|| {
        let cfg = config(text(config_toml, "config_toml")?)?;
        let dir = Path::new(text(out_dir, "out_dir")?);
        let dataset = harness::dataset_for(&cfg)?;
        let s = harness::train(&cfg, dataset.as_ref(), dir)?;
        if let Some(out) = summary.as_mut() {
            *out = DiiqnTrainSummary {
                steps: s.steps,
                convergence_step: s.convergence_step.map_or(-1, |c| c as i64),
                final_return: s.final_return,
                final_normalized: s.final_normalized,
                final_success_rate: s.final_success_rate,
            };
        }
        Ok(())
    })
}
