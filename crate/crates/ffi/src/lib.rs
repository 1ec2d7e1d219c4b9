//! C ABI for the rsnsim library.
//!
//! Conventions:
//!
//! * Handles (`RsnNetwork`, `RsnPolicy`) are opaque; create them with the
//!   `rsn_*_new`/`rsn_*_synthesize` constructors and release them with the
//!   matching `rsn_*_free`. A null handle is never returned on success.
//! * Every fallible call returns an [`RsnStatus`]; on any non-`Ok` status
//!   the thread-local error message is set and can be fetched with
//!   [`rsn_last_error_message`] (free it with [`rsn_string_free`]).
//! * Strings cross the boundary as NUL-terminated UTF-8. Strings returned
//!   by this library are owned by the caller and must be released with
//!   [`rsn_string_free`].
//! * All functions catch panics; a panic surfaces as
//!   `RsnStatus::InternalError` instead of unwinding across the boundary.

use rsnsim::config::{build_network_spec, NetworkSection};
use rsnsim::cost::CostOracle;
use rsnsim::estimators::MetricsAccumulator;
use rsnsim::kernel::{self, KernelBasis, PolicyTables};
use rsnsim::model::{DistributionFamily, NetworkSpec, TrafficInstance};
use rsnsim::rbm;
use rsnsim::simengine::{
    run_streaming, InitialCondition, PolicyKind, PolicyParams, SimConfig, SimError,
};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationFailed = 4,
    InvalidArgument = 5,
    RuntimeInvariant = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into();
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: RsnStatus, msg: impl Into<String>) -> RsnStatus {
    set_error(msg);
    status
}

fn guard(body: impl FnOnce() -> RsnStatus) -> RsnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in library call".to_string());
            fail(RsnStatus::InternalError, msg)
        }
    }
}

/// Opaque network handle.
pub struct RsnNetwork {
    spec: NetworkSpec,
}

/// Opaque policy handle: kernel basis plus the synthesized tables.
pub struct RsnPolicy {
    basis: KernelBasis,
    tables: Arc<PolicyTables>,
}

/// Simulation parameters for [`rsn_simulate_ergodic`]. `horizon` is in
/// scaled (diffusion) time; the engine multiplies by `r^2`. All primitive
/// distributions are exponential, which requires `sigma_u = 1/alpha` and
/// `sigma_v = 1/beta` in the network description.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RsnSimParams {
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replication: u64,
}

/// Version of the underlying library; static string, do not free.
#[no_mangle]
pub extern "C" fn rsn_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Returns the thread-local message for the most recent error, or null when
/// no error has occurred on this thread. The caller owns the returned string.
#[no_mangle]
pub extern "C" fn rsn_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by an `rsn_*` function that
/// documents caller ownership, and must not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn rsn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn parse_cstr<'a>(ptr: *const c_char) -> Result<&'a str, RsnStatus> {
    if ptr.is_null() {
        return Err(fail(RsnStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(RsnStatus::InvalidUtf8, format!("invalid UTF-8: {e}")))
}

/// Parses a network from TOML text containing a `[network]` block with the
/// inline arrays (see the library documentation for the schema). On success
/// stores a new handle in `out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsn_network_from_toml(
    text: *const c_char,
    out: *mut *mut RsnNetwork,
) -> RsnStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsnStatus::NullArgument, "null output pointer");
        }
        let text = match parse_cstr(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct NetworkFile {
            network: NetworkSection,
        }
        let parsed: NetworkFile = match toml::from_str(text) {
            Ok(p) => p,
            Err(e) => return fail(RsnStatus::ParseError, e.to_string()),
        };
        let spec = match build_network_spec(&parsed.network) {
            Ok(s) => s,
            Err(e) => return fail(RsnStatus::ParseError, e.to_string()),
        };
        *out = Box::into_raw(Box::new(RsnNetwork { spec }));
        RsnStatus::Ok
    })
}

/// # Safety
/// `net` must be a handle from [`rsn_network_from_toml`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsn_network_free(net: *mut RsnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Checks the standing conditions. Returns `Ok` when the network is valid;
/// `ValidationFailed` otherwise, with the rendered report in `report_out`
/// (caller-owned, may be null if the report is not wanted).
///
/// # Safety
/// `net` must be a live handle; `report_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn rsn_network_validate(
    net: *const RsnNetwork,
    report_out: *mut *mut c_char,
) -> RsnStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            return fail(RsnStatus::NullArgument, "null network handle");
        };
        let report = net.spec.validate();
        if !report_out.is_null() {
            let text = CString::new(report.render().replace('\0', " ")).unwrap_or_default();
            *report_out = text.into_raw();
        }
        if report.is_valid() {
            RsnStatus::Ok
        } else {
            fail(RsnStatus::ValidationFailed, report.render())
        }
    })
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsn_network_resources(net: *const RsnNetwork) -> i32 {
    net.as_ref().map_or(-1, |n| n.spec.n_resources() as i32)
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsn_network_classes(net: *const RsnNetwork) -> i32 {
    net.as_ref().map_or(-1, |n| n.spec.n_classes() as i32)
}

/// Runs the offline policy synthesis for a validated network.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsn_policy_synthesize(
    net: *const RsnNetwork,
    out: *mut *mut RsnPolicy,
) -> RsnStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            return fail(RsnStatus::NullArgument, "null network handle");
        };
        if out.is_null() {
            return fail(RsnStatus::NullArgument, "null output pointer");
        }
        let report = net.spec.validate();
        if !report.is_valid() {
            return fail(RsnStatus::ValidationFailed, report.render());
        }
        match kernel::synthesize(&net.spec) {
            Ok(tables) => {
                let basis = kernel::compute_basis(&net.spec);
                *out = Box::into_raw(Box::new(RsnPolicy { basis, tables: Arc::new(tables) }));
                RsnStatus::Ok
            }
            Err(e) => fail(RsnStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `policy` must be a handle from [`rsn_policy_synthesize`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsn_policy_free(policy: *mut RsnPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// `h beta . u` for the cost direction; 0 in the trivial case.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsn_policy_lambda(policy: *const RsnPolicy) -> f64 {
    policy.as_ref().map_or(f64::NAN, |p| p.tables.basis.lambda())
}

/// Number of patterns in the cost-reduction set `M`.
///
/// # Safety
/// `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsn_policy_m_set_len(policy: *const RsnPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.tables.m_set().len())
}

/// Serializes the policy tables to TOML (caller-owned string).
///
/// # Safety
/// `policy` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsn_policy_to_toml(
    policy: *const RsnPolicy,
    out: *mut *mut c_char,
) -> RsnStatus {
    guard(|| {
        let Some(policy) = policy.as_ref() else {
            return fail(RsnStatus::NullArgument, "null policy handle");
        };
        if out.is_null() {
            return fail(RsnStatus::NullArgument, "null output pointer");
        }
        match toml::to_string(&policy.tables.to_file()) {
            Ok(text) => {
                *out = CString::new(text).unwrap_or_default().into_raw();
                RsnStatus::Ok
            }
            Err(e) => fail(RsnStatus::InternalError, e.to_string()),
        }
    })
}

/// Minimal holding cost for workload `w` (length `n_resources`), using the
/// limiting mean-job-size matrix.
///
/// # Safety
/// `net` and `policy` must be live handles; `w` must point to `w_len`
/// doubles; `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsn_hhat(
    net: *const RsnNetwork,
    policy: *const RsnPolicy,
    w: *const f64,
    w_len: usize,
    out_value: *mut f64,
) -> RsnStatus {
    guard(|| {
        let (Some(net), Some(policy)) = (net.as_ref(), policy.as_ref()) else {
            return fail(RsnStatus::NullArgument, "null handle");
        };
        if w.is_null() || out_value.is_null() {
            return fail(RsnStatus::NullArgument, "null buffer");
        }
        if w_len != net.spec.n_resources() {
            return fail(
                RsnStatus::InvalidArgument,
                format!("expected {} workload entries, got {w_len}", net.spec.n_resources()),
            );
        }
        let w = std::slice::from_raw_parts(w, w_len);
        if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return fail(RsnStatus::InvalidArgument, "workload must be finite and nonnegative");
        }
        let oracle = CostOracle::limiting(&net.spec, &policy.basis);
        let (value, _) = oracle.hhat(w);
        *out_value = value;
        RsnStatus::Ok
    })
}

/// Optimality-gap measure `dtilde(q)` for a queue vector (length
/// `n_classes`), using the limiting weighting.
///
/// # Safety
/// Same contract as [`rsn_hhat`] with `q` of length `n_classes`.
#[no_mangle]
pub unsafe extern "C" fn rsn_dtilde(
    net: *const RsnNetwork,
    policy: *const RsnPolicy,
    q: *const f64,
    q_len: usize,
    out_value: *mut f64,
) -> RsnStatus {
    guard(|| {
        let (Some(net), Some(policy)) = (net.as_ref(), policy.as_ref()) else {
            return fail(RsnStatus::NullArgument, "null handle");
        };
        if q.is_null() || out_value.is_null() {
            return fail(RsnStatus::NullArgument, "null buffer");
        }
        if q_len != net.spec.n_classes() {
            return fail(
                RsnStatus::InvalidArgument,
                format!("expected {} queue entries, got {q_len}", net.spec.n_classes()),
            );
        }
        let q = std::slice::from_raw_parts(q, q_len);
        if q.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return fail(RsnStatus::InvalidArgument, "queue vector must be finite and nonnegative");
        }
        let oracle = CostOracle::limiting(&net.spec, &policy.basis);
        *out_value = oracle.dtilde(q);
        RsnStatus::Ok
    })
}

/// Simulates one replication under the threshold policy with exponential
/// primitives, starting from empty queues, and reports the ergodic cost
/// `J_E` and the time-averaged instantaneous optimality gap.
///
/// # Safety
/// Handles must be live; output pointers (either may be null when the value
/// is not wanted, but not both) must be valid.
#[no_mangle]
pub unsafe extern "C" fn rsn_simulate_ergodic(
    net: *const RsnNetwork,
    policy: *const RsnPolicy,
    params: RsnSimParams,
    out_cost: *mut f64,
    out_mean_gap: *mut f64,
) -> RsnStatus {
    guard(|| {
        let (Some(net), Some(policy)) = (net.as_ref(), policy.as_ref()) else {
            return fail(RsnStatus::NullArgument, "null handle");
        };
        if out_cost.is_null() && out_mean_gap.is_null() {
            return fail(RsnStatus::NullArgument, "no output requested");
        }
        let n = net.spec.n_classes();
        let instance = match TrafficInstance::new(&net.spec, params.r) {
            Ok(i) => i,
            Err(e) => return fail(RsnStatus::InvalidArgument, e.to_string()),
        };
        let cfg = match SimConfig::new(
            &net.spec,
            instance,
            policy.tables.clone(),
            PolicyParams { c1: params.c1, c2: params.c2, kappa: params.kappa },
            &vec![DistributionFamily::Exponential; n],
            &vec![DistributionFamily::Exponential; n],
            params.horizon * params.r * params.r,
            params.seed,
            params.replication,
            InitialCondition::empty(n),
        ) {
            Ok(c) => c,
            Err(e) => return fail(RsnStatus::InvalidArgument, e.to_string()),
        };
        let mut acc = MetricsAccumulator::new(&cfg, None);
        match run_streaming(&cfg, PolicyKind::Threshold, |seg, _| acc.add(seg)) {
            Ok(_) => {}
            Err(e @ SimError::Invariant(_)) => {
                return fail(RsnStatus::RuntimeInvariant, e.to_string())
            }
            Err(e) => return fail(RsnStatus::InvalidArgument, e.to_string()),
        }
        let metrics = acc.finish();
        if !out_cost.is_null() {
            *out_cost = metrics.ergodic_cost;
        }
        if !out_mean_gap.is_null() {
            *out_mean_gap = metrics.mean_gap;
        }
        RsnStatus::Ok
    })
}

/// Monte Carlo estimate of the ergodic HGI benchmark for the network.
///
/// # Safety
/// Handles must be live; `out_value` must be valid; `out_std_error` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn rsn_hgi_ergodic(
    net: *const RsnNetwork,
    policy: *const RsnPolicy,
    dt: f64,
    horizon: f64,
    burn_in: f64,
    replications: usize,
    seed: u64,
    out_value: *mut f64,
    out_std_error: *mut f64,
) -> RsnStatus {
    guard(|| {
        let (Some(net), Some(policy)) = (net.as_ref(), policy.as_ref()) else {
            return fail(RsnStatus::NullArgument, "null handle");
        };
        if out_value.is_null() {
            return fail(RsnStatus::NullArgument, "null output pointer");
        }
        let oracle = CostOracle::limiting(&net.spec, &policy.basis);
        let rcfg = rbm::rbm_config_for(
            &net.spec,
            vec![0.0; net.spec.n_resources()],
            dt,
            horizon,
            seed,
        );
        match rbm::hgi_ergodic(&rcfg, &oracle, replications, burn_in) {
            Ok(est) => {
                *out_value = est.value;
                if !out_std_error.is_null() {
                    *out_std_error = est.std_error;
                }
                RsnStatus::Ok
            }
            Err(e) => fail(RsnStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// One-dimensional Skorokhod reflection of `f` (length `len`): writes the
/// reflected path into `phi_out` and the regulator into `reg_out` (either
/// may be null to skip).
///
/// # Safety
/// `f` must point to `len` doubles; non-null outputs must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rsn_skorokhod_1d(
    f: *const f64,
    len: usize,
    phi_out: *mut f64,
    reg_out: *mut f64,
) -> RsnStatus {
    guard(|| {
        if f.is_null() {
            return fail(RsnStatus::NullArgument, "null path");
        }
        let f = std::slice::from_raw_parts(f, len);
        let (phi, reg) = rbm::skorokhod_1d(f);
        if !phi_out.is_null() {
            std::ptr::copy_nonoverlapping(phi.as_ptr(), phi_out, len);
        }
        if !reg_out.is_null() {
            std::ptr::copy_nonoverlapping(reg.as_ptr(), reg_out, len);
        }
        RsnStatus::Ok
    })
}
