//! Independent reference implementations used as test oracles. These must
//! stay decoupled from the library code paths they check.

use reachlab::tworoom::{AgentState, WorldGeometry};

/// Marching segment-block check: sample the segment densely and look for a
/// sign change of (x - wall_x) whose interpolated crossing height lies
/// outside the doorway. Deliberately avoids the library's analytic
/// intersection test.
pub fn segment_blocked_marching(a: AgentState, b: AgentState, geom: &WorldGeometry) -> bool {
    let steps = 4000;
    let mut px = a.x;
    let mut py = a.y;
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let x = a.x + t * (b.x - a.x);
        let y = a.y + t * (b.y - a.y);
        let before = px - geom.wall_x;
        let after = x - geom.wall_x;
        if before != 0.0 && after != 0.0 && before.signum() != after.signum() {
            let f = before / (before - after);
            let yc = py + f * (y - py);
            if yc < geom.door_lo || yc > geom.door_hi {
                return true;
            }
        }
        px = x;
        py = y;
    }
    false
}

/// Geodesic reference at 1-unit resolution: the direct segment when the
/// marching check says it is clear, else the best route through door points
/// enumerated on a 1-unit grid.
pub fn geodesic_grid_oracle(a: AgentState, b: AgentState, geom: &WorldGeometry) -> f64 {
    if !segment_blocked_marching(a, b, geom) {
        return a.dist(&b);
    }
    let mut best = f64::INFINITY;
    let mut p = geom.door_lo;
    while p <= geom.door_hi + 1e-9 {
        let door = AgentState::new(geom.wall_x, p);
        best = best.min(a.dist(&door) + door.dist(&b));
        p += 1.0;
    }
    best
}

/// Brute-force average-tie ranks: for each element, 1 + count(strictly
/// smaller) + count(equal among earlier positions averaged), written as the
/// textbook all-pairs construction.
pub fn brute_force_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let smaller = xs.iter().filter(|&&v| v < xs[i]).count();
        let equal = xs.iter().filter(|&&v| v == xs[i]).count();
        // positions smaller+1 ..= smaller+equal share the average rank
        let first = (smaller + 1) as f64;
        let last = (smaller + equal) as f64;
        ranks[i] = (first + last) / 2.0;
    }
    ranks
}

/// Brute-force Spearman: explicit ranks, then the covariance formula.
pub fn brute_force_spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = brute_force_ranks(a);
    let rb = brute_force_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(num / (va * vb).sqrt())
}

/// Central finite-difference gradient of a scalar-valued function of one
/// parameter, used to check backprop.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[allow(dead_code)]
fn unused() {}
