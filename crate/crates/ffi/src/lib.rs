//! C ABI for the reachlab core: environment stepping, the geodesic oracle,
//! outcome classification, manifest generation, rank statistics, and trained
//! pair-head scoring. Opaque handles own the Rust objects; every function
//! returns an `RlStatus` and writes results through out-pointers.
//!
//! The generated header lives at `include/reachlab.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use reachlab::audit;
use reachlab::metric::{pair_features, PairHead};
use reachlab::tworoom::{
    classify_outcome, generate_manifest, geodesic, step, Action, AgentState, EnvConfig,
    EpisodeSpec, FailureClass, ManifestKind, TopologyClass, WorldGeometry,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    RlOk = 0,
    RlNullPointer = 1,
    RlInvalidArgument = 2,
    RlDegenerateInput = 3,
    RlIoError = 4,
    RlBadArtifact = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(msg).ok();
    });
}

/// Message for the most recent error on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// World rectangle plus wall/doorway placement.
pub struct RlGeometry(WorldGeometry);

/// Environment constants: action bound, success radius, wall standoff,
/// stuck-band half-width.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RlEnvParams {
    pub a_max: f64,
    pub r_succ: f64,
    pub wall_standoff: f64,
    pub stuck_band: f64,
}

impl RlEnvParams {
    fn to_env(self) -> EnvConfig {
        EnvConfig {
            a_max: self.a_max,
            r_succ: self.r_succ,
            wall_standoff: self.wall_standoff,
            stuck_band: self.stuck_band,
        }
    }
}

/// Default environment constants.
#[no_mangle]
pub extern "C" fn rl_env_default() -> RlEnvParams {
    let e = EnvConfig::default();
    RlEnvParams {
        a_max: e.a_max,
        r_succ: e.r_succ,
        wall_standoff: e.wall_standoff,
        stuck_band: e.stuck_band,
    }
}

/// New geometry handle; NULL if the parameters are inconsistent.
/// Free with `rl_geometry_free`.
#[no_mangle]
pub extern "C" fn rl_geometry_new(
    width: f64,
    height: f64,
    wall_x: f64,
    door_lo: f64,
    door_hi: f64,
) -> *mut RlGeometry {
    let g = WorldGeometry {
        width,
        height,
        wall_x,
        door_lo,
        door_hi,
    };
    match g.validate() {
        Ok(()) => Box::into_raw(Box::new(RlGeometry(g))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// The default 224x224 two-room geometry. Free with `rl_geometry_free`.
#[no_mangle]
pub extern "C" fn rl_geometry_default() -> *mut RlGeometry {
    Box::into_raw(Box::new(RlGeometry(WorldGeometry::default())))
}

/// # Safety
/// `geom` must be a pointer returned by one of the geometry constructors and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_geometry_free(geom: *mut RlGeometry) {
    if !geom.is_null() {
        drop(Box::from_raw(geom));
    }
}

/// One environment step from (x, y) under action (dx, dy).
///
/// # Safety
/// `geom`, `out_x`, `out_y` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rl_step(
    geom: *const RlGeometry,
    env: RlEnvParams,
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> RlStatus {
    if geom.is_null() || out_x.is_null() || out_y.is_null() {
        return RlStatus::RlNullPointer;
    }
    let g = &(*geom).0;
    let s = step(
        AgentState::new(x, y),
        Action::new(dx, dy),
        g,
        &env.to_env(),
    );
    *out_x = s.x;
    *out_y = s.y;
    RlStatus::RlOk
}

/// Shortest obstacle-avoiding path length between two points.
///
/// # Safety
/// `geom` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rl_geodesic(
    geom: *const RlGeometry,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    out: *mut f64,
) -> RlStatus {
    if geom.is_null() || out.is_null() {
        return RlStatus::RlNullPointer;
    }
    *out = geodesic(AgentState::new(ax, ay), AgentState::new(bx, by), &(*geom).0);
    RlStatus::RlOk
}

/// Failure taxonomy, mirroring the episode reports.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlOutcomeClass {
    RlSuccess = 0,
    RlWrongRoom = 1,
    RlStuckAtWall = 2,
    RlSameRoomNotPrecise = 3,
    RlCrossedDoorNotPrecise = 4,
}

/// Classify a finished episode from its goal, final state, and topology
/// class.
///
/// # Safety
/// `geom`, `out_class`, `out_final_dist` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rl_classify_outcome(
    geom: *const RlGeometry,
    env: RlEnvParams,
    goal_x: f64,
    goal_y: f64,
    final_x: f64,
    final_y: f64,
    cross_wall: bool,
    out_class: *mut RlOutcomeClass,
    out_final_dist: *mut f64,
) -> RlStatus {
    if geom.is_null() || out_class.is_null() || out_final_dist.is_null() {
        return RlStatus::RlNullPointer;
    }
    let g = &(*geom).0;
    let spec = EpisodeSpec {
        start: AgentState::new(0.0, 0.0),
        goal: AgentState::new(goal_x, goal_y),
        topology_class: if cross_wall {
            TopologyClass::CrossWall
        } else {
            TopologyClass::SameRoom
        },
        euclid: 0.0,
        geodesic: 0.0,
    };
    let out = classify_outcome(&spec, AgentState::new(final_x, final_y), g, &env.to_env());
    *out_class = match out.failure_class {
        FailureClass::None => RlOutcomeClass::RlSuccess,
        FailureClass::WrongRoom => RlOutcomeClass::RlWrongRoom,
        FailureClass::StuckAtWall => RlOutcomeClass::RlStuckAtWall,
        FailureClass::SameRoomNotPrecise => RlOutcomeClass::RlSameRoomNotPrecise,
        FailureClass::CrossedDoorNotPrecise => RlOutcomeClass::RlCrossedDoorNotPrecise,
    };
    *out_final_dist = out.final_dist;
    RlStatus::RlOk
}

/// Generate a start/goal manifest ("balanced40" | "matched40" | "hard100")
/// and return its JSON as a newly-allocated string (free with
/// `rl_string_free`), or NULL on failure.
///
/// # Safety
/// `geom` must be valid; `kind` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rl_generate_manifest_json(
    geom: *const RlGeometry,
    kind: *const c_char,
    seed: u64,
) -> *mut c_char {
    if geom.is_null() || kind.is_null() {
        set_error("null pointer".into());
        return ptr::null_mut();
    }
    let Ok(kind) = CStr::from_ptr(kind).to_str() else {
        set_error("kind is not valid UTF-8".into());
        return ptr::null_mut();
    };
    let kind = match kind.parse::<ManifestKind>() {
        Ok(k) => k,
        Err(e) => {
            set_error(e.to_string());
            return ptr::null_mut();
        }
    };
    match generate_manifest(kind, &(*geom).0, seed).and_then(|m| m.to_json()) {
        Ok(json) => CString::new(json)
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be a pointer previously returned by an allocation-returning
/// function of this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Spearman rank correlation with average-tie ranks.
///
/// # Safety
/// `a` and `b` must point to `len` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rl_spearman(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> RlStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return RlStatus::RlNullPointer;
    }
    let xs = std::slice::from_raw_parts(a, len);
    let ys = std::slice::from_raw_parts(b, len);
    match audit::spearman(xs, ys) {
        Ok(v) => {
            *out = v;
            RlStatus::RlOk
        }
        Err(e) => {
            set_error(e.to_string());
            RlStatus::RlDegenerateInput
        }
    }
}

/// Percentile rank (0 best, 100 worst) that costs `c` assign to the
/// candidate `c_star` judges best.
///
/// # Safety
/// `c` and `c_star` must point to `len` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rl_best_rank_pct(
    c: *const f64,
    c_star: *const f64,
    len: usize,
    out: *mut f64,
) -> RlStatus {
    if c.is_null() || c_star.is_null() || out.is_null() {
        return RlStatus::RlNullPointer;
    }
    let xs = std::slice::from_raw_parts(c, len);
    let ys = std::slice::from_raw_parts(c_star, len);
    match audit::best_rank_pct(xs, ys) {
        Ok(v) => {
            *out = v;
            RlStatus::RlOk
        }
        Err(e) => {
            set_error(e.to_string());
            RlStatus::RlDegenerateInput
        }
    }
}

/// The pairwise feature map [z_i, z_j, z_i - z_j, |z_i - z_j|].
///
/// # Safety
/// `z_i`, `z_j` must point to `dim` readable doubles and `out` to `4 * dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_pair_features(
    z_i: *const f64,
    z_j: *const f64,
    dim: usize,
    out: *mut f64,
) -> RlStatus {
    if z_i.is_null() || z_j.is_null() || out.is_null() {
        return RlStatus::RlNullPointer;
    }
    let a = std::slice::from_raw_parts(z_i, dim);
    let b = std::slice::from_raw_parts(z_j, dim);
    match pair_features(a, b) {
        Ok(f) => {
            std::slice::from_raw_parts_mut(out, 4 * dim).copy_from_slice(&f);
            RlStatus::RlOk
        }
        Err(e) => {
            set_error(e.to_string());
            RlStatus::RlInvalidArgument
        }
    }
}

/// A trained pairwise reachability head loaded from a checkpoint.
pub struct RlPairHead(PairHead);

/// Load a head checkpoint; NULL on failure (see `rl_last_error_message`).
/// Free with `rl_pair_head_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rl_pair_head_load(path: *const c_char) -> *mut RlPairHead {
    if path.is_null() {
        set_error("null path".into());
        return ptr::null_mut();
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8".into());
        return ptr::null_mut();
    };
    match PairHead::load(Path::new(path)) {
        Ok(h) => Box::into_raw(Box::new(RlPairHead(h))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Latent dimension the head expects for each input.
///
/// # Safety
/// `head` must be a live handle from `rl_pair_head_load`.
#[no_mangle]
pub unsafe extern "C" fn rl_pair_head_latent_dim(head: *const RlPairHead) -> usize {
    if head.is_null() {
        return 0;
    }
    (*head).0.latent_dim()
}

/// Score a (predicted terminal, goal) latent pair: predicted scaled temporal
/// separation, strictly positive.
///
/// # Safety
/// `head` must be live; `z_i`, `z_j` must point to `dim` readable doubles
/// matching the head's latent dim; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rl_pair_head_score(
    head: *const RlPairHead,
    z_i: *const f64,
    z_j: *const f64,
    dim: usize,
    out: *mut f64,
) -> RlStatus {
    if head.is_null() || z_i.is_null() || z_j.is_null() || out.is_null() {
        return RlStatus::RlNullPointer;
    }
    let h = &(*head).0;
    if dim != h.latent_dim() {
        set_error(format!(
            "head expects latent dim {}, got {dim}",
            h.latent_dim()
        ));
        return RlStatus::RlInvalidArgument;
    }
    let a = std::slice::from_raw_parts(z_i, dim);
    let b = std::slice::from_raw_parts(z_j, dim);
    match h.score(a, b) {
        Ok(v) => {
            *out = v;
            RlStatus::RlOk
        }
        Err(e) => {
            set_error(e.to_string());
            RlStatus::RlInvalidArgument
        }
    }
}

/// # Safety
/// `head` must be a pointer from `rl_pair_head_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_pair_head_free(head: *mut RlPairHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}
