//! Deterministic two-room 2-D navigation world.
//!
//! Two rooms separated by a vertical wall with one doorway. The module owns
//! the environment dynamics (`step`), the analytic geodesic oracle, start/goal
//! manifest generation, and the episode failure taxonomy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// World rectangle and wall/doorway placement. All lengths share one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldGeometry {
    pub width: f64,
    pub height: f64,
    pub wall_x: f64,
    pub door_lo: f64,
    pub door_hi: f64,
}

impl Default for WorldGeometry {
    fn default() -> Self {
        WorldGeometry {
            width: 224.0,
            height: 224.0,
            wall_x: 112.0,
            door_lo: 96.0,
            door_hi: 128.0,
        }
    }
}

impl WorldGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.wall_x
            && self.wall_x < self.width
            && 0.0 <= self.door_lo
            && self.door_lo < self.door_hi
            && self.door_hi <= self.height;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad geometry: {self:?}")))
        }
    }
}

/// Environment constants that are not geometry: action bound, success radius,
/// wall standoff on blocked motion, and the stuck-at-wall band half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub a_max: f64,
    pub r_succ: f64,
    pub wall_standoff: f64,
    pub stuck_band: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            a_max: 8.0,
            r_succ: 12.0,
            wall_standoff: 0.5,
            stuck_band: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64) -> Self {
        AgentState { x, y }
    }

    pub fn dist(&self, other: &AgentState) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64) -> Self {
        Action { dx, dy }
    }

    pub fn clipped(&self, a_max: f64) -> Action {
        Action {
            dx: self.dx.clamp(-a_max, a_max),
            dy: self.dy.clamp(-a_max, a_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyClass {
    SameRoom,
    CrossWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub start: AgentState,
    pub goal: AgentState,
    pub topology_class: TopologyClass,
    pub euclid: f64,
    pub geodesic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    Balanced40,
    Matched40,
    Hard100,
}

impl ManifestKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifestKind::Balanced40 => "balanced40",
            ManifestKind::Matched40 => "matched40",
            ManifestKind::Hard100 => "hard100",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ManifestKind::Balanced40 => 0,
            ManifestKind::Matched40 => 1,
            ManifestKind::Hard100 => 2,
        }
    }
}

impl std::str::FromStr for ManifestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced40" => Ok(ManifestKind::Balanced40),
            "matched40" => Ok(ManifestKind::Matched40),
            "hard100" => Ok(ManifestKind::Hard100),
            other => Err(Error::InvalidConfig(format!("unknown manifest kind `{other}`"))),
        }
    }
}

/// Generation thresholds, written into the manifest file so every run is
/// self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestRule {
    /// Sampling margin from borders and from the wall plane.
    pub margin: f64,
    /// Matched manifest: Euclidean bin width.
    pub bin_width: f64,
    /// Matched manifest: accepted Euclidean range.
    pub matched_lo: f64,
    pub matched_hi: f64,
    /// Matched manifest: per-bin cap while building the target histogram.
    pub per_bin_cap: usize,
    /// Hard manifest: minimum Euclidean distance.
    pub hard_min_euclid: f64,
    /// Hard manifest: doorway-required criterion, geodesic >= euclid + this.
    pub doorway_slack: f64,
    /// Hard manifest: minimum count of doorway-required cross-wall specs.
    pub doorway_required_min: usize,
}

impl Default for ManifestRule {
    fn default() -> Self {
        ManifestRule {
            margin: 16.0,
            bin_width: 20.0,
            matched_lo: 40.0,
            matched_hi: 200.0,
            per_bin_cap: 5,
            hard_min_euclid: 120.0,
            doorway_slack: 10.0,
            doorway_required_min: 45,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub kind: ManifestKind,
    pub seed: u64,
    pub geometry: WorldGeometry,
    pub rule: ManifestRule,
    pub specs: Vec<EpisodeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    None,
    WrongRoom,
    StuckAtWall,
    SameRoomNotPrecise,
    CrossedDoorNotPrecise,
}

impl FailureClass {
    pub fn name(self) -> &'static str {
        match self {
            FailureClass::None => "none",
            FailureClass::WrongRoom => "wrong_room",
            FailureClass::StuckAtWall => "stuck_at_wall",
            FailureClass::SameRoomNotPrecise => "same_room_not_precise",
            FailureClass::CrossedDoorNotPrecise => "crossed_door_not_precise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub final_state: AgentState,
    pub final_dist: f64,
    pub failure_class: FailureClass,
}

/// Which side of the wall plane a point is on.
#[inline]
pub fn left_of_wall(x: f64, geom: &WorldGeometry) -> bool {
    x < geom.wall_x
}

#[inline]
pub fn opposite_sides(a: f64, b: f64, geom: &WorldGeometry) -> bool {
    (a - geom.wall_x) * (b - geom.wall_x) < 0.0
}

/// If the segment a->b crosses (or ends on) the wall plane, the y at the
/// crossing point. Returns None when both endpoints are strictly on one side
/// or the segment lies in the plane.
fn wall_crossing(ax: f64, ay: f64, bx: f64, by: f64, geom: &WorldGeometry) -> Option<f64> {
    let da = ax - geom.wall_x;
    let db = bx - geom.wall_x;
    if da * db > 0.0 {
        return None;
    }
    if ax == bx {
        // either no contact at all, or motion along the plane (doorway only)
        return None;
    }
    let t = (geom.wall_x - ax) / (bx - ax);
    if !(0.0..=1.0).contains(&t) {
        return None;
    }
    Some(ay + t * (by - ay))
}

/// True when the straight segment a->b is blocked by the wall (crosses the
/// plane outside the closed doorway interval).
pub fn segment_blocked(a: AgentState, b: AgentState, geom: &WorldGeometry) -> bool {
    match wall_crossing(a.x, a.y, b.x, b.y, geom) {
        Some(yc) => yc < geom.door_lo || yc > geom.door_hi,
        None => false,
    }
}

/// One environment step: clip the action, clamp the target into the world
/// rectangle, and stop at the wall (with a standoff on the origin side) if
/// the displacement segment crosses the wall outside the doorway.
pub fn step(state: AgentState, action: Action, geom: &WorldGeometry, env: &EnvConfig) -> AgentState {
    let a = action.clipped(env.a_max);
    let tx = (state.x + a.dx).clamp(0.0, geom.width);
    let ty = (state.y + a.dy).clamp(0.0, geom.height);
    if let Some(yc) = wall_crossing(state.x, state.y, tx, ty, geom) {
        if yc < geom.door_lo || yc > geom.door_hi {
            let sx = if state.x < geom.wall_x {
                geom.wall_x - env.wall_standoff
            } else {
                geom.wall_x + env.wall_standoff
            };
            return AgentState::new(sx, yc.clamp(0.0, geom.height));
        }
    }
    AgentState::new(tx, ty)
}

/// Shortest obstacle-avoiding path length. Blocked segments route through
/// the doorway: the unconstrained optimum over the wall plane is the straight
/// crossing point, and the objective is convex in the door height, so the
/// constrained optimum is the crossing point clamped into the doorway.
pub fn geodesic(a: AgentState, b: AgentState, geom: &WorldGeometry) -> f64 {
    match wall_crossing(a.x, a.y, b.x, b.y, geom) {
        Some(yc) if yc < geom.door_lo || yc > geom.door_hi => {
            let p = AgentState::new(geom.wall_x, yc.clamp(geom.door_lo, geom.door_hi));
            a.dist(&p) + p.dist(&b)
        }
        _ => a.dist(&b),
    }
}

/// Success and failure taxonomy for a finished episode. The stuck-at-wall
/// band takes precedence over wrong-room: an agent parked against the wall is
/// a wall failure no matter which side it stopped on.
pub fn classify_outcome(
    spec: &EpisodeSpec,
    final_state: AgentState,
    geom: &WorldGeometry,
    env: &EnvConfig,
) -> Outcome {
    let final_dist = final_state.dist(&spec.goal);
    if final_dist <= env.r_succ {
        return Outcome {
            success: true,
            final_state,
            final_dist,
            failure_class: FailureClass::None,
        };
    }
    let failure_class = if (final_state.x - geom.wall_x).abs() <= env.stuck_band {
        FailureClass::StuckAtWall
    } else if opposite_sides(final_state.x, spec.goal.x, geom) {
        FailureClass::WrongRoom
    } else {
        match spec.topology_class {
            TopologyClass::SameRoom => FailureClass::SameRoomNotPrecise,
            TopologyClass::CrossWall => FailureClass::CrossedDoorNotPrecise,
        }
    };
    Outcome {
        success: false,
        final_state,
        final_dist,
        failure_class,
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn sample_point<R: Rng>(rng: &mut R, geom: &WorldGeometry, margin: f64) -> AgentState {
    loop {
        let x = rng.random_range(margin..geom.width - margin);
        let y = rng.random_range(margin..geom.height - margin);
        if (x - geom.wall_x).abs() >= margin {
            return AgentState::new(round6(x), round6(y));
        }
    }
}

fn make_spec(start: AgentState, goal: AgentState, geom: &WorldGeometry) -> EpisodeSpec {
    let topology_class = if opposite_sides(start.x, goal.x, geom) {
        TopologyClass::CrossWall
    } else {
        TopologyClass::SameRoom
    };
    EpisodeSpec {
        start,
        goal,
        topology_class,
        euclid: round6(start.dist(&goal)),
        geodesic: round6(geodesic(start, goal, geom)),
    }
}

const MAX_DRAWS: usize = 1_000_000;

/// Generate a start/goal manifest. Deterministic given (kind, seed).
pub fn generate_manifest(kind: ManifestKind, geom: &WorldGeometry, seed: u64) -> Result<Manifest> {
    geom.validate()?;
    let rule = ManifestRule::default();
    let mut rng = stream(seed, "manifest", &[kind.tag()]);
    let specs = match kind {
        ManifestKind::Balanced40 => gen_balanced(&mut rng, geom, &rule, 20)?,
        ManifestKind::Matched40 => gen_matched(&mut rng, geom, &rule, 20)?,
        ManifestKind::Hard100 => gen_hard(&mut rng, geom, &rule, 50)?,
    };
    Ok(Manifest {
        version: 1,
        name: kind.name().to_string(),
        kind,
        seed,
        geometry: *geom,
        rule,
        specs,
    })
}

fn gen_balanced<R: Rng>(
    rng: &mut R,
    geom: &WorldGeometry,
    rule: &ManifestRule,
    per_class: usize,
) -> Result<Vec<EpisodeSpec>> {
    let mut same = Vec::new();
    let mut cross = Vec::new();
    for _ in 0..MAX_DRAWS {
        if same.len() == per_class && cross.len() == per_class {
            let mut specs = same;
            specs.append(&mut cross);
            return Ok(specs);
        }
        let s = sample_point(rng, geom, rule.margin);
        let g = sample_point(rng, geom, rule.margin);
        let spec = make_spec(s, g, geom);
        match spec.topology_class {
            TopologyClass::SameRoom if same.len() < per_class => same.push(spec),
            TopologyClass::CrossWall if cross.len() < per_class => cross.push(spec),
            _ => {}
        }
    }
    Err(Error::ManifestGeneration(
        "balanced composition not reached within draw budget".into(),
    ))
}

fn gen_matched<R: Rng>(
    rng: &mut R,
    geom: &WorldGeometry,
    rule: &ManifestRule,
    per_class: usize,
) -> Result<Vec<EpisodeSpec>> {
    let nbins = ((rule.matched_hi - rule.matched_lo) / rule.bin_width).ceil() as usize;
    let bin_of = |e: f64| -> Option<usize> {
        if e < rule.matched_lo || e >= rule.matched_hi {
            None
        } else {
            Some(((e - rule.matched_lo) / rule.bin_width) as usize)
        }
    };

    // Phase 1: same-room specs with a per-bin cap define the target histogram.
    let mut same: Vec<EpisodeSpec> = Vec::new();
    let mut same_bins = vec![0usize; nbins];
    let mut draws = 0;
    while same.len() < per_class {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::ManifestGeneration(
                "matched same-room histogram not filled within draw budget".into(),
            ));
        }
        let s = sample_point(rng, geom, rule.margin);
        let g = sample_point(rng, geom, rule.margin);
        let spec = make_spec(s, g, geom);
        if spec.topology_class != TopologyClass::SameRoom {
            continue;
        }
        if let Some(b) = bin_of(spec.euclid) {
            if same_bins[b] < rule.per_bin_cap {
                same_bins[b] += 1;
                same.push(spec);
            }
        }
    }

    // Phase 2: cross-wall specs are rejection-sampled to match that histogram.
    let mut cross: Vec<EpisodeSpec> = Vec::new();
    let mut cross_bins = vec![0usize; nbins];
    while cross.len() < per_class {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::ManifestGeneration(
                "matched cross-wall histogram not filled within draw budget".into(),
            ));
        }
        let s = sample_point(rng, geom, rule.margin);
        let g = sample_point(rng, geom, rule.margin);
        let spec = make_spec(s, g, geom);
        if spec.topology_class != TopologyClass::CrossWall {
            continue;
        }
        if let Some(b) = bin_of(spec.euclid) {
            if cross_bins[b] < same_bins[b] {
                cross_bins[b] += 1;
                cross.push(spec);
            }
        }
    }

    let mut specs = same;
    specs.append(&mut cross);
    Ok(specs)
}

fn gen_hard<R: Rng>(
    rng: &mut R,
    geom: &WorldGeometry,
    rule: &ManifestRule,
    per_class: usize,
) -> Result<Vec<EpisodeSpec>> {
    let max_unrequired = per_class - rule.doorway_required_min;
    let mut same: Vec<EpisodeSpec> = Vec::new();
    let mut cross: Vec<EpisodeSpec> = Vec::new();
    let mut unrequired = 0usize;
    for _ in 0..MAX_DRAWS {
        if same.len() == per_class && cross.len() == per_class {
            let mut specs = same;
            specs.append(&mut cross);
            return Ok(specs);
        }
        let s = sample_point(rng, geom, rule.margin);
        let g = sample_point(rng, geom, rule.margin);
        let spec = make_spec(s, g, geom);
        if spec.euclid < rule.hard_min_euclid {
            continue;
        }
        match spec.topology_class {
            TopologyClass::SameRoom if same.len() < per_class => same.push(spec),
            TopologyClass::CrossWall if cross.len() < per_class => {
                let doorway_required = spec.geodesic >= spec.euclid + rule.doorway_slack;
                if doorway_required {
                    cross.push(spec);
                } else if unrequired < max_unrequired {
                    unrequired += 1;
                    cross.push(spec);
                }
            }
            _ => {}
        }
    }
    Err(Error::ManifestGeneration(
        "hard composition not reached within draw budget".into(),
    ))
}

impl Manifest {
    pub fn same_room_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.topology_class == TopologyClass::SameRoom)
            .count()
    }

    pub fn cross_wall_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.topology_class == TopologyClass::CrossWall)
            .count()
    }

    pub fn doorway_required_count(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| {
                s.topology_class == TopologyClass::CrossWall
                    && s.geodesic >= s.euclid + self.rule.doorway_slack
            })
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Manifest> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> WorldGeometry {
        WorldGeometry::default()
    }

    fn env() -> EnvConfig {
        EnvConfig::default()
    }

    #[test]
    fn step_identity_action() {
        let s = step(
            AgentState::new(56.0, 56.0),
            Action::new(0.0, 0.0),
            &geom(),
            &env(),
        );
        assert_eq!(s, AgentState::new(56.0, 56.0));
    }

    #[test]
    fn step_blocked_at_wall_standoff() {
        // segment (110,60)->(118,60) crosses x=112 at y=60, outside the door
        let s = step(
            AgentState::new(110.0, 60.0),
            Action::new(8.0, 0.0),
            &geom(),
            &env(),
        );
        assert_eq!(s, AgentState::new(111.5, 60.0));
    }

    #[test]
    fn step_passes_through_doorway() {
        let s = step(
            AgentState::new(110.0, 112.0),
            Action::new(8.0, 0.0),
            &geom(),
            &env(),
        );
        assert_eq!(s, AgentState::new(118.0, 112.0));
    }

    #[test]
    fn step_clips_action_and_clamps_to_world() {
        let s = step(
            AgentState::new(4.0, 4.0),
            Action::new(-100.0, -100.0),
            &geom(),
            &env(),
        );
        // action clipped to -8, then clamped at the border
        assert_eq!(s, AgentState::new(0.0, 0.0));
    }

    #[test]
    fn step_blocked_from_right_side() {
        let s = step(
            AgentState::new(114.0, 60.0),
            Action::new(-8.0, 0.0),
            &geom(),
            &env(),
        );
        assert_eq!(s, AgentState::new(112.5, 60.0));
    }

    #[test]
    fn geodesic_same_room_straight() {
        let d = geodesic(AgentState::new(56.0, 56.0), AgentState::new(56.0, 156.0), &geom());
        assert!((d - 100.0).abs() < 1e-12);
    }

    #[test]
    fn geodesic_routes_through_door_corner() {
        let d = geodesic(AgentState::new(56.0, 56.0), AgentState::new(168.0, 56.0), &geom());
        let expected = 2.0 * (56.0f64.powi(2) + 40.0f64.powi(2)).sqrt();
        assert!((d - expected).abs() < 1e-9, "d={d} expected={expected}");
        assert!((d - 137.63).abs() < 0.01);
    }

    #[test]
    fn geodesic_inside_door_band_is_euclid() {
        let d = geodesic(AgentState::new(111.0, 100.0), AgentState::new(113.0, 100.0), &geom());
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn classify_examples() {
        let spec = EpisodeSpec {
            start: AgentState::new(40.0, 40.0),
            goal: AgentState::new(168.0, 56.0),
            topology_class: TopologyClass::CrossWall,
            euclid: 0.0,
            geodesic: 0.0,
        };
        let o = classify_outcome(&spec, AgentState::new(60.0, 60.0), &geom(), &env());
        assert_eq!(o.failure_class, FailureClass::WrongRoom);
        assert!(!o.success);

        let o = classify_outcome(&spec, AgentState::new(166.0, 58.0), &geom(), &env());
        assert!(o.success);
        assert_eq!(o.failure_class, FailureClass::None);

        let o = classify_outcome(&spec, AgentState::new(108.0, 100.0), &geom(), &env());
        assert_eq!(o.failure_class, FailureClass::StuckAtWall);
    }

    #[test]
    fn classify_near_miss_classes() {
        let mut spec = EpisodeSpec {
            start: AgentState::new(40.0, 40.0),
            goal: AgentState::new(80.0, 56.0),
            topology_class: TopologyClass::SameRoom,
            euclid: 0.0,
            geodesic: 0.0,
        };
        let o = classify_outcome(&spec, AgentState::new(40.0, 90.0), &geom(), &env());
        assert_eq!(o.failure_class, FailureClass::SameRoomNotPrecise);

        spec.goal = AgentState::new(168.0, 56.0);
        spec.topology_class = TopologyClass::CrossWall;
        let o = classify_outcome(&spec, AgentState::new(150.0, 120.0), &geom(), &env());
        assert_eq!(o.failure_class, FailureClass::CrossedDoorNotPrecise);
    }

    #[test]
    fn hard100_composition() {
        let m = generate_manifest(ManifestKind::Hard100, &geom(), 7001).unwrap();
        assert_eq!(m.same_room_count(), 50);
        assert_eq!(m.cross_wall_count(), 50);
        assert!(m.doorway_required_count() >= 45, "{}", m.doorway_required_count());
        for s in &m.specs {
            assert!(s.euclid >= 120.0);
            assert!(s.geodesic >= s.euclid - 1e-9);
        }
    }

    #[test]
    fn matched40_bins_equal() {
        let m = generate_manifest(ManifestKind::Matched40, &geom(), 7001).unwrap();
        assert_eq!(m.same_room_count(), 20);
        assert_eq!(m.cross_wall_count(), 20);
        let rule = m.rule;
        let nbins = ((rule.matched_hi - rule.matched_lo) / rule.bin_width).ceil() as usize;
        let mut same = vec![0usize; nbins];
        let mut cross = vec![0usize; nbins];
        for s in &m.specs {
            let b = ((s.euclid - rule.matched_lo) / rule.bin_width) as usize;
            match s.topology_class {
                TopologyClass::SameRoom => same[b] += 1,
                TopologyClass::CrossWall => cross[b] += 1,
            }
        }
        assert_eq!(same, cross);
    }

    #[test]
    fn manifest_generation_is_deterministic() {
        let a = generate_manifest(ManifestKind::Balanced40, &geom(), 3).unwrap();
        let b = generate_manifest(ManifestKind::Balanced40, &geom(), 3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_manifest(ManifestKind::Balanced40, &geom(), 4).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn manifest_points_respect_margins() {
        let m = generate_manifest(ManifestKind::Balanced40, &geom(), 11).unwrap();
        for s in &m.specs {
            for p in [s.start, s.goal] {
                assert!(p.x >= 16.0 && p.x <= 208.0);
                assert!(p.y >= 16.0 && p.y <= 208.0);
                assert!((p.x - 112.0).abs() >= 16.0 - 1e-9);
            }
        }
    }
}
