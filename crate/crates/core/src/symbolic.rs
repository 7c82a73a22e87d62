//! Kneading combinatorics: monotonicity partitions in phase space,
//! cylinder partitions in parameter space, and the scale `N(t,h)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{bisect_monotone, MapFamily, UnimodalMap};

/// Deepest phase-partition level accepted.
pub const MAX_PHASE_LEVEL: usize = 40;
/// Interval budget for a phase partition.
pub const MAX_PHASE_INTERVALS: usize = 1 << 20;

/// Maximal intervals of `K(t)` on which `f_t^j` is monotone.
#[derive(Debug, Clone, Serialize)]
pub struct PhasePartition {
    pub t: f64,
    pub j: usize,
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Piece {
    left: f64,
    right: f64,
    // f^level at the endpoints
    img_left: f64,
    img_right: f64,
}

fn iterate(map: &UnimodalMap, mut x: f64, n: usize) -> f64 {
    for _ in 0..n {
        x = map.eval(x);
    }
    x
}

/// Splits `K(t)` recursively at the preimages of `c` up to level `j`.
pub fn phase_partition(map: &UnimodalMap, j: usize) -> Result<PhasePartition> {
    if j == 0 {
        return Err(Error::Argument("partition level must be at least 1".into()));
    }
    if j > MAX_PHASE_LEVEL {
        return Err(Error::Resource(format!(
            "partition level {j} exceeds {MAX_PHASE_LEVEL}"
        )));
    }
    let c = map.critical_point();
    let (lo, hi) = map.support();
    let mut pieces = vec![Piece {
        left: lo,
        right: hi,
        img_left: lo,
        img_right: hi,
    }];
    for level in 1..=j {
        // Pieces carry f^{level-1} at their endpoints; split where it hits c.
        let mut next = Vec::with_capacity(pieces.len() * 2);
        for p in &pieces {
            let (a, b) = (p.img_left.min(p.img_right), p.img_left.max(p.img_right));
            if a < c && c < b {
                let x = bisect_monotone(|x| iterate(map, x, level - 1), p.left, p.right, c);
                next.push(Piece {
                    left: p.left,
                    right: x,
                    img_left: p.img_left,
                    img_right: c,
                });
                next.push(Piece {
                    left: x,
                    right: p.right,
                    img_left: c,
                    img_right: p.img_right,
                });
            } else {
                next.push(*p);
            }
            if next.len() > MAX_PHASE_INTERVALS {
                return Err(Error::Resource(format!(
                    "phase partition at level {level} exceeds {MAX_PHASE_INTERVALS} intervals"
                )));
            }
        }
        for p in &mut next {
            p.img_left = map.eval(p.img_left);
            p.img_right = map.eval(p.img_right);
        }
        pieces = next;
    }
    Ok(PhasePartition {
        t: map.t(),
        j,
        intervals: pieces.iter().map(|p| (p.left, p.right)).collect(),
    })
}

/// Scan points per cylinder in [`param_partition`].
pub const PARAM_SCAN_POINTS: usize = 10_000;
/// Extra samples per scan cell in the post-hoc root audit.
pub const PARAM_AUDIT_POINTS: usize = 32;

/// A cylinder boundary: a parameter where `x_level(t) = c`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct CylinderBoundary {
    pub t: f64,
    pub level: usize,
}

/// Cylinders of level `j` inside a parameter interval.
#[derive(Debug, Clone, Serialize)]
pub struct ParamPartition {
    pub interval: (f64, f64),
    pub j: usize,
    pub cylinders: Vec<(f64, f64)>,
    pub boundaries: Vec<CylinderBoundary>,
    /// Scan points where `|x_i(t) − c|` has a shallow local minimum without
    /// a sign change: possible tangential roots that bisection cannot see.
    pub tangency_flags: Vec<f64>,
}

/// `x_i(t) = f_t^{i+1}(c)`.
pub fn kneading_point(family: &MapFamily, t: f64, i: usize) -> f64 {
    let map = family.map_for_orbits(t);
    iterate(&map, family.critical_point(), i + 1)
}

fn bisect_root(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ga = g(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Cylinders of level `j`: parameter subintervals on which `x_i(t) ≠ c`
/// for every `i < j`. Roots are located level by level on a uniform scan
/// of each lower-level cylinder and refined by bisection to `tol`.
pub fn param_partition(
    family: &MapFamily,
    interval: (f64, f64),
    j: usize,
    tol: f64,
) -> Result<ParamPartition> {
    let (a, b) = interval;
    if j == 0 {
        return Err(Error::Argument("cylinder level must be at least 1".into()));
    }
    if !(a < b) || !family.contains(a) || !family.contains(b) {
        return Err(Error::Domain(format!(
            "parameter interval [{a}, {b}] not inside the family's range"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    let c = family.critical_point();
    let mut cylinders = vec![(a, b)];
    let mut boundaries = Vec::new();
    let mut tangency_flags = Vec::new();
    for i in 0..j {
        let g = |t: f64| kneading_point(family, t, i) - c;
        let mut next = Vec::new();
        for &(lo, hi) in &cylinders {
            let step = (hi - lo) / PARAM_SCAN_POINTS as f64;
            let ts: Vec<f64> = (0..=PARAM_SCAN_POINTS)
                .map(|k| {
                    if k == PARAM_SCAN_POINTS {
                        hi
                    } else {
                        lo + k as f64 * step
                    }
                })
                .collect();
            let gs: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
            let mut roots = Vec::new();
            for k in 0..PARAM_SCAN_POINTS {
                let (g0, g1) = (gs[k], gs[k + 1]);
                let root = if g0 == 0.0 && k > 0 {
                    Some(ts[k])
                } else if g0 != 0.0 && g1 != 0.0 && (g0 < 0.0) != (g1 < 0.0) {
                    Some(bisect_root(g, ts[k], ts[k + 1], tol))
                } else {
                    None
                };
                if let Some(r) = root {
                    audit_cell(&g, ts[k], ts[k + 1], i)?;
                    roots.push(r);
                }
            }
            for k in 1..PARAM_SCAN_POINTS {
                let (gl, gm, gr) = (gs[k - 1], gs[k], gs[k + 1]);
                let same_sign = (gl < 0.0) == (gm < 0.0) && (gm < 0.0) == (gr < 0.0);
                let local_min = gm.abs() <= gl.abs() && gm.abs() <= gr.abs();
                let shallow = gm.abs() < 0.5 * (gm - gl).abs().max((gr - gm).abs());
                if same_sign && local_min && shallow && gm != 0.0 {
                    tangency_flags.push(ts[k]);
                }
            }
            let mut left = lo;
            for r in roots {
                if r > left && r < hi {
                    next.push((left, r));
                    boundaries.push(CylinderBoundary { t: r, level: i });
                    left = r;
                }
            }
            next.push((left, hi));
        }
        cylinders = next;
    }
    boundaries.sort_by(|x, y| x.t.total_cmp(&y.t));
    tangency_flags.sort_by(|x, y| x.total_cmp(y));
    Ok(ParamPartition {
        interval,
        j,
        cylinders,
        boundaries,
        tangency_flags,
    })
}

fn audit_cell(g: &impl Fn(f64) -> f64, a: f64, b: f64, level: usize) -> Result<()> {
    let mut changes = 0;
    let mut prev = g(a);
    for m in 1..=PARAM_AUDIT_POINTS {
        let t = if m == PARAM_AUDIT_POINTS {
            b
        } else {
            a + (b - a) * m as f64 / PARAM_AUDIT_POINTS as f64
        };
        let cur = g(t);
        if cur != 0.0 && prev != 0.0 && (cur < 0.0) != (prev < 0.0) {
            changes += 1;
        }
        if cur != 0.0 {
            prev = cur;
        }
    }
    if changes > 1 {
        return Err(Error::Resolution {
            level,
            left: a,
            right: b,
        });
    }
    Ok(())
}

/// Orbit-length cap for [`n_of_log`].
pub const MAX_SCALE_DEPTH: usize = 100_000_000;

/// `N(t,h)`: the unique `N` with
/// `1/|Df^{N+1}(f(c))| ≤ |h| < 1/|Df^N(f(c))|`.
pub fn n_of(map: &UnimodalMap, h: f64) -> Result<usize> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::Argument(format!(
            "step {h} must be finite and nonzero"
        )));
    }
    n_of_log(map, -h.abs().ln())
}

/// [`n_of`] with `−log|h|` given directly, for steps below the `f64` range.
pub fn n_of_log(map: &UnimodalMap, neg_log_h: f64) -> Result<usize> {
    let c = map.critical_point();
    scale_index(
        c,
        map.eval(c),
        |x| map.eval(x),
        |x| map.slope(x).abs().ln(),
        neg_log_h,
    )
}

/// Walks the orbit `x₁, x₂, …` accumulating `log|Df|` until it reaches
/// `neg_log_h`; the index of the last partial sum below it is `N`.
fn scale_index(
    c: f64,
    x1: f64,
    step: impl Fn(f64) -> f64,
    log_slope: impl Fn(f64) -> f64,
    neg_log_h: f64,
) -> Result<usize> {
    if !(neg_log_h > 0.0) || !neg_log_h.is_finite() {
        return Err(Error::Argument(format!(
            "need 0 < |h| < 1, got −log|h| = {neg_log_h}"
        )));
    }
    let mut x = x1;
    let mut sum = 0.0;
    for n in 0..MAX_SCALE_DEPTH {
        // sum = log|Df^n(f(c))|, x = f^{n+1}(c)
        if x == c {
            return Err(Error::Ambiguous { index: n + 1 });
        }
        let next = sum + log_slope(x);
        if next >= neg_log_h {
            return Ok(n);
        }
        sum = next;
        x = step(x);
    }
    Err(Error::Resource(format!(
        "N(t,h) exceeds {MAX_SCALE_DEPTH} iterates"
    )))
}
