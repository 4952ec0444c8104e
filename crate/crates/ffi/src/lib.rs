//! C ABI over the attack planner.
//!
//! Every fallible call returns an [`IaStatus`]; on failure the message is
//! retrievable with [`ia_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use infattack::attack::{plan_against_victim, AttackConfig, AttackMode, AttackPlan};
use infattack::data::load_bundle;
use infattack::graph::Topology;
use infattack::harness::train_victim;
use infattack::influence::{
    approx_constant, approx_delta, label_influence_exact, objective_exact, Direction,
    InfluenceQuery, LabelSource,
};
use infattack::victim::{dense_features, SgcModel, TrainConfig, Victim};
use infattack::{Error, ErrorKind, Graph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    RuntimeError = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaDirection {
    Add = 0,
    Delete = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaMode {
    Approx = 0,
    Exact = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IaLabelSource {
    True = 0,
    Estimated = 1,
}

/// Opaque graph handle.
pub struct IaGraph {
    inner: Graph,
}

/// Opaque trained-victim handle. Bound to the graph it was built on.
pub struct IaVictim {
    inner: Victim,
    num_nodes: usize,
}

/// Opaque attack-plan handle.
pub struct IaPlan {
    inner: AttackPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IaStatus {
    match err.kind() {
        ErrorKind::Usage => IaStatus::InvalidArgument,
        ErrorKind::Data => IaStatus::DataError,
        ErrorKind::Runtime => IaStatus::RuntimeError,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IaStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            IaStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            IaStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))?;
    Ok(Path::new(s))
}

fn query(v: usize, c: usize, own: usize, k: usize, labels: LabelSource) -> Result<InfluenceQuery, Fail> {
    Ok(InfluenceQuery::new(v, c, own, k, labels)?)
}

fn direction(d: IaDirection) -> Direction {
    match d {
        IaDirection::Add => Direction::Add,
        IaDirection::Delete => Direction::Delete,
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ia_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ia_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a graph bundle directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ia_graph_load(dir: *const c_char, out_graph: *mut *mut IaGraph) -> IaStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = ptr::null_mut();
        let g = load_bundle(path_arg(dir, "dir")?)?;
        *slot = Box::into_raw(Box::new(IaGraph { inner: g }));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`ia_graph_load`] and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ia_graph_free(g: *mut IaGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_graph_num_nodes(g: *const IaGraph, out_n: *mut usize) -> IaStatus {
    guard(|| {
        *out(out_n, "out_n")? = deref(g, "graph")?.inner.num_nodes();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_graph_num_classes(g: *const IaGraph, out_n: *mut usize) -> IaStatus {
    guard(|| {
        *out(out_n, "out_n")? = deref(g, "graph")?.inner.num_classes();
        Ok(())
    })
}

/// Label influence of `u` on `v` after `k` propagation steps.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_label_influence(
    g: *const IaGraph,
    v: usize,
    u: usize,
    k: usize,
    out_value: *mut f64,
) -> IaStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        *out(out_value, "out_value")? = label_influence_exact(g, v, u, k)?;
        Ok(())
    })
}

/// Exact attack objective for target `v`, using the graph's stored labels.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_objective(
    g: *const IaGraph,
    v: usize,
    target_label: usize,
    own_label: usize,
    k: usize,
    out_value: *mut f64,
) -> IaStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        let q = query(v, target_label, own_label, k, LabelSource::TrueLabels)?;
        *out(out_value, "out_value")? = objective_exact(g, g.labels(), &q)?;
        Ok(())
    })
}

/// Candidate-independent part of the approximate gain.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_approx_constant(
    g: *const IaGraph,
    v: usize,
    target_label: usize,
    own_label: usize,
    k: usize,
    dir: IaDirection,
    out_value: *mut f64,
) -> IaStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        let q = query(v, target_label, own_label, k, LabelSource::TrueLabels)?;
        *out(out_value, "out_value")? = approx_constant(g, g.labels(), &q, direction(dir))?;
        Ok(())
    })
}

/// Influence carried by walks through the edge (`v`, `candidate`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_approx_delta(
    g: *const IaGraph,
    v: usize,
    target_label: usize,
    own_label: usize,
    k: usize,
    candidate: usize,
    dir: IaDirection,
    out_value: *mut f64,
) -> IaStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        let q = query(v, target_label, own_label, k, LabelSource::TrueLabels)?;
        *out(out_value, "out_value")? = approx_delta(g, g.labels(), &q, candidate, direction(dir))?;
        Ok(())
    })
}

/// Trains an SGC victim of depth `k` on every labeled node with default settings.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_victim_train(
    g: *const IaGraph,
    k: usize,
    seed: u64,
    out_victim: *mut *mut IaVictim,
) -> IaStatus {
    guard(|| {
        let slot = out(out_victim, "out_victim")?;
        *slot = ptr::null_mut();
        let g = &deref(g, "graph")?.inner;
        let ids: Vec<usize> = (0..g.num_nodes()).filter(|&u| g.label(u).is_some()).collect();
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let v = train_victim(g, k, &ids, &cfg)?;
        *slot = Box::into_raw(Box::new(IaVictim { inner: v, num_nodes: g.num_nodes() }));
        Ok(())
    })
}

/// Loads a saved model and binds it to `g`.
///
/// # Safety
/// Pointers must be valid; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ia_victim_load(
    g: *const IaGraph,
    path: *const c_char,
    out_victim: *mut *mut IaVictim,
) -> IaStatus {
    guard(|| {
        let slot = out(out_victim, "out_victim")?;
        *slot = ptr::null_mut();
        let g = &deref(g, "graph")?.inner;
        let model = SgcModel::load(path_arg(path, "path")?)?;
        let x = dense_features(g);
        let v = Victim::new(model, g, x.view())?;
        *slot = Box::into_raw(Box::new(IaVictim { inner: v, num_nodes: g.num_nodes() }));
        Ok(())
    })
}

/// # Safety
/// `v` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ia_victim_free(v: *mut IaVictim) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Plans an attack on `target` with up to `budget` edge toggles. The victim
/// must have been built on the same graph.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_attack(
    g: *const IaGraph,
    victim: *const IaVictim,
    target: usize,
    k: usize,
    budget: usize,
    mode: IaMode,
    labels: IaLabelSource,
    out_plan: *mut *mut IaPlan,
) -> IaStatus {
    guard(|| {
        let slot = out(out_plan, "out_plan")?;
        *slot = ptr::null_mut();
        let g = &deref(g, "graph")?.inner;
        let victim = deref(victim, "victim")?;
        if victim.num_nodes != g.num_nodes() {
            return Err(Error::InvalidArgument("victim was built on a different graph".into()).into());
        }
        let cfg = AttackConfig {
            budget,
            mode: match mode {
                IaMode::Approx => AttackMode::Approx,
                IaMode::Exact => AttackMode::Exact,
            },
            ..AttackConfig::default()
        };
        let source = match labels {
            IaLabelSource::True => LabelSource::TrueLabels,
            IaLabelSource::Estimated => LabelSource::EstimatedLabels,
        };
        let plan = plan_against_victim(g, &victim.inner, target, k, source, &cfg)?;
        *slot = Box::into_raw(Box::new(IaPlan { inner: plan }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_free(p: *mut IaPlan) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_success(p: *const IaPlan, out_success: *mut bool) -> IaStatus {
    guard(|| {
        *out(out_success, "out_success")? = deref(p, "plan")?.inner.success;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_num_toggles(p: *const IaPlan, out_n: *mut usize) -> IaStatus {
    guard(|| {
        *out(out_n, "out_n")? = deref(p, "plan")?.inner.toggles.len();
        Ok(())
    })
}

/// The `index`-th toggle in planning order.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_toggle(
    p: *const IaPlan,
    index: usize,
    out_node: *mut usize,
    out_dir: *mut IaDirection,
) -> IaStatus {
    guard(|| {
        let plan = &deref(p, "plan")?.inner;
        let t = plan.toggles.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("toggle {index} out of range ({} toggles)", plan.toggles.len()))
        })?;
        *out(out_node, "out_node")? = t.node;
        *out(out_dir, "out_dir")? = match t.direction {
            Direction::Add => IaDirection::Add,
            Direction::Delete => IaDirection::Delete,
        };
        Ok(())
    })
}

/// Full plan as JSON. Release with [`ia_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ia_plan_to_json(p: *const IaPlan, out_json: *mut *mut c_char) -> IaStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        let s = serde_json::to_string_pretty(&deref(p, "plan")?.inner).map_err(Error::from)?;
        *slot = CString::new(s).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}
