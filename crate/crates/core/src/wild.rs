//! Spike propagation along the critical orbit, the operational `N₃`, the
//! wild-part integral, its Birkhoff-sum surrogate and direct Newton
//! quotients of the response.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{MapFamily, UnimodalMap};
use crate::quantities::{response, Observable};
use crate::symbolic::n_of;
use crate::transfer::{
    build_ulam, default_saltus_truncation, invariant_density, saltus_weights, DensityGrid,
};

/// A Heaviside difference pushed forward along the critical orbit.
///
/// At depth `i` the endpoints are `A_i = f_{t+h}^{i+1}(f_t^k(c))` and
/// `B_i = f_{t+h}^i(f_t^{k+1}(c))`.
#[derive(Debug, Clone, Serialize)]
pub struct SpikeSet {
    pub k: usize,
    /// Raw endpoints `(A_i, B_i)`.
    pub endpoints: Vec<(f64, f64)>,
    /// The same intervals, ordered.
    pub intervals: Vec<(f64, f64)>,
    /// `(A_0 − B_0)/(A_i − B_i)`: signed inverse expansion along the spike.
    pub length_factors: Vec<f64>,
    /// First depth whose interval contains `c`.
    pub straddle_depth: Option<usize>,
    /// `A_0 = B_0` to machine precision; the spike carries nothing.
    pub degenerate: bool,
}

impl SpikeSet {
    /// `s_{k+1}/h` times the signed length factors.
    pub fn weights(&self, s_next: f64, h: f64) -> Vec<f64> {
        self.length_factors.iter().map(|f| s_next / h * f).collect()
    }

    pub fn initial_width(&self) -> f64 {
        let (a, b) = self.endpoints[0];
        (a - b).abs()
    }
}

fn check_step(h: f64) -> Result<()> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::Argument(format!(
            "step {h} must be finite and nonzero"
        )));
    }
    Ok(())
}

/// Propagates spike `k` under `f_{t+h}` until it contains `c` or reaches
/// `depth_cap` intervals.
pub fn spike_propagate(
    family: &MapFamily,
    t: f64,
    h: f64,
    k: usize,
    depth_cap: usize,
) -> Result<SpikeSet> {
    check_step(h)?;
    let map_t = family.map_at(t)?;
    let map_th = family.map_at(t + h)?;
    let mut y = map_t.critical_point();
    for _ in 0..k {
        y = map_t.eval(y);
    }
    Ok(spike_from(&map_t, &map_th, y, k, depth_cap))
}

/// Spike `k` starting from `y = f_t^k(c)`.
fn spike_from(
    map_t: &UnimodalMap,
    map_th: &UnimodalMap,
    y: f64,
    k: usize,
    depth_cap: usize,
) -> SpikeSet {
    let c = map_t.critical_point();
    let mut a = map_th.eval(y);
    let mut b = map_t.eval(y);
    let degenerate = a == b;
    let mut set = SpikeSet {
        k,
        endpoints: Vec::new(),
        intervals: Vec::new(),
        length_factors: Vec::new(),
        straddle_depth: None,
        degenerate,
    };
    if degenerate {
        set.endpoints.push((a, b));
        set.intervals.push((a, b));
        set.length_factors.push(1.0);
        return set;
    }
    let w0 = a - b;
    for i in 0..depth_cap.max(1) {
        let (lo, hi) = (a.min(b), a.max(b));
        set.endpoints.push((a, b));
        set.intervals.push((lo, hi));
        set.length_factors.push(w0 / (a - b));
        if lo <= c && c <= hi {
            set.straddle_depth = Some(i);
            break;
        }
        a = map_th.eval(a);
        b = map_th.eval(b);
    }
    set
}

/// Operational `N₃` with the inputs it was derived from.
#[derive(Debug, Clone, Serialize)]
pub struct N3Estimate {
    pub n3: usize,
    pub n_of: usize,
    /// Straddle depth of spike `k` (`None`: degenerate, beyond the cap, or
    /// not evaluated).
    pub straddle_depths: Vec<Option<usize>>,
}

/// Largest `n ≤ N(t,h)` such that no spike `k < n` has met `c` at a depth
/// `i < n − k`. Spikes with `k > k_max` are not evaluated and count as
/// clean; spikes reaching `depth_cap` count as straddling there.
pub fn n3_estimate(
    family: &MapFamily,
    t: f64,
    h: f64,
    k_max: usize,
    depth_cap: usize,
) -> Result<N3Estimate> {
    check_step(h)?;
    let map_t = family.map_at(t)?;
    let map_th = family.map_at(t + h)?;
    let n = n_of(&map_t, h)?;
    n3_with(&map_t, &map_th, n, k_max, depth_cap)
}

fn n3_with(
    map_t: &UnimodalMap,
    map_th: &UnimodalMap,
    n: usize,
    k_max: usize,
    depth_cap: usize,
) -> Result<N3Estimate> {
    let mut y = map_t.critical_point();
    let mut depths = Vec::with_capacity(n);
    let mut reach = usize::MAX;
    let mut n3 = 0;
    for k in 0..n {
        if k <= k_max {
            let spike = spike_from(map_t, map_th, y, k, depth_cap);
            let d = if spike.degenerate {
                None
            } else {
                Some(spike.straddle_depth.unwrap_or(depth_cap))
            };
            if let Some(d) = d {
                reach = reach.min(k + d);
            }
            depths.push(if spike.degenerate {
                None
            } else {
                spike.straddle_depth
            });
        } else {
            depths.push(None);
        }
        // Condition for n3 = k + 1: every spike j ≤ k satisfies d_j + j ≥ k + 1.
        if reach < k + 1 {
            break;
        }
        n3 = k + 1;
        y = map_t.eval(y);
    }
    Ok(N3Estimate {
        n3,
        n_of: n,
        straddle_depths: depths,
    })
}

/// Breakdown of one wild-part evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct WildIntegral {
    pub value: f64,
    pub s1: f64,
    pub response: f64,
    pub k_trunc: usize,
    pub n3: N3Estimate,
    /// Depth used for each spike's inner sum.
    pub depths_used: Vec<usize>,
}

/// `Σ_{k ≤ K} s_{k+1} v_t(f^k c) Σ_{i < d_k} (φ(f_t^{i+k+1} c) − R_φ(t))`,
/// where `d_k` is the straddle depth of spike `k` (the cap if it never
/// straddles; degenerate spikes contribute nothing).
#[allow(clippy::too_many_arguments)]
pub fn wild_integral(
    family: &MapFamily,
    t: f64,
    h: f64,
    phi: &Observable,
    density: &DensityGrid,
    k_trunc: Option<usize>,
    depth_cap: usize,
) -> Result<WildIntegral> {
    check_step(h)?;
    let map_t = family.map_at(t)?;
    let map_th = family.map_at(t + h)?;
    let k_trunc = k_trunc.unwrap_or_else(|| default_saltus_truncation(map_t.lambda()));
    let saltus = saltus_weights(&map_t, density, Some(k_trunc + 1))?;
    let r = response(density, phi);
    let orbit = {
        let mut o = Vec::with_capacity(k_trunc + depth_cap + 2);
        let mut x = map_t.critical_point();
        o.push(x);
        for _ in 0..k_trunc + depth_cap + 1 {
            x = map_t.eval(x);
            o.push(x);
        }
        o
    };
    let mut value = 0.0;
    let mut depths_used = Vec::with_capacity(k_trunc + 1);
    for k in 0..=k_trunc {
        let spike = spike_from(&map_t, &map_th, orbit[k], k, depth_cap);
        if spike.degenerate {
            depths_used.push(0);
            continue;
        }
        let d = spike.straddle_depth.unwrap_or(depth_cap);
        depths_used.push(d);
        let inner: f64 = (0..d).map(|i| phi.eval(orbit[i + k + 1]) - r).sum();
        value += saltus.entries[k].weight * map_t.velocity(orbit[k]) * inner;
    }
    let n = n_of(&map_t, h)?;
    let n3 = n3_with(&map_t, &map_th, n, k_trunc.max(n), depth_cap)?;
    Ok(WildIntegral {
        value,
        s1: saltus.s1(),
        response: r,
        k_trunc,
        n3,
        depths_used,
    })
}

/// Orbit arithmetic for long critical orbits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrbitMode {
    #[default]
    Plain,
    /// Double-double orbit (tent family only).
    Compensated,
}

fn orbit_points(map: &UnimodalMap, n: usize, mode: OrbitMode) -> Result<Vec<f64>> {
    match mode {
        OrbitMode::Plain => Ok(map.critical_orbit(n)),
        OrbitMode::Compensated => map.critical_orbit_compensated(n),
    }
}

/// `Σ_{j=1}^{N} (φ(f_t^j(c)) − R)`.
pub fn birkhoff_surrogate(map: &UnimodalMap, n: usize, phi: &Observable, r: f64) -> f64 {
    map.critical_orbit(n).iter().map(|&x| phi.eval(x) - r).sum()
}

/// Prefix sums `S_1, …, S_N` of the centered critical-orbit observations.
pub fn surrogate_prefixes(
    map: &UnimodalMap,
    n: usize,
    phi: &Observable,
    r: f64,
    mode: OrbitMode,
) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    Ok(orbit_points(map, n, mode)?
        .into_iter()
        .map(|x| {
            acc += phi.eval(x) - r;
            acc
        })
        .collect())
}

/// Smallest step for which direct Newton quotients are offered.
pub const MIN_DIRECT_STEP: f64 = 1e-6;
/// Below this step the grid must have at least [`FINE_GRID`] cells.
pub const FINE_STEP: f64 = 1e-4;
pub const FINE_GRID: usize = 1 << 17;

fn check_direct(h: f64, n_grid: usize) -> Result<()> {
    check_step(h)?;
    if h.abs() < MIN_DIRECT_STEP {
        return Err(Error::Argument(format!(
            "|h| = {} is below {MIN_DIRECT_STEP}: grid error would swamp the quotient",
            h.abs()
        )));
    }
    if h.abs() < FINE_STEP && n_grid < FINE_GRID {
        return Err(Error::Argument(format!(
            "|h| < {FINE_STEP} needs at least {FINE_GRID} cells, got {n_grid}"
        )));
    }
    Ok(())
}

/// `(R_φ(t+h) − R_φ(t))/h` with both densities on `n_grid` cells.
pub fn newton_quotient(
    family: &MapFamily,
    t: f64,
    h: f64,
    phi: &Observable,
    n_grid: usize,
) -> Result<f64> {
    check_direct(h, n_grid)?;
    let map_th = family.map_at(t + h)?;
    let map_t = family.map_at(t)?;
    let r_th = response(&invariant_density(&build_ulam(&map_th, n_grid)?)?, phi);
    let r_t = response(&invariant_density(&build_ulam(&map_t, n_grid)?)?, phi);
    Ok((r_th - r_t) / h)
}

/// [`newton_quotient`] reusing a known `R_φ(t)` on the same grid.
pub fn newton_quotient_from(
    family: &MapFamily,
    t: f64,
    h: f64,
    phi: &Observable,
    n_grid: usize,
    r_t: f64,
) -> Result<f64> {
    check_direct(h, n_grid)?;
    let map_th = family.map_at(t + h)?;
    let r_th = response(&invariant_density(&build_ulam(&map_th, n_grid)?)?, phi);
    Ok((r_th - r_t) / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantities::transversality_j;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tent() -> MapFamily {
        MapFamily::tent(1.01, 2.0).unwrap()
    }

    fn density(t: f64, n: usize) -> DensityGrid {
        invariant_density(&build_ulam(&tent().map_at(t).unwrap(), n).unwrap()).unwrap()
    }

    #[test]
    fn spike_widths_grow_by_slope() {
        let (t, h) = (1.77, 3e-7);
        let s = spike_propagate(&tent(), t, h, 2, 200).unwrap();
        let d = s.straddle_depth.unwrap();
        for i in 0..d {
            let w0 = s.intervals[i].1 - s.intervals[i].0;
            let w1 = s.intervals[i + 1].1 - s.intervals[i + 1].0;
            let slack = 8.0 * f64::EPSILON * (t + h);
            assert!((w1 - (t + h) * w0).abs() <= slack, "depth {i}");
        }
    }

    #[test]
    fn spike_initial_width() {
        let s = spike_propagate(&tent(), 1.9, 1e-6, 0, 100).unwrap();
        assert!(s.straddle_depth.unwrap() >= 1);
        // |f_{t+h}(c) − f_t(c)| = |h|·v(c) = |h|/2 for the tent family.
        assert!(s.initial_width() <= 0.5 * 1e-6 * (1.0 + 1e-9));
        assert_abs_diff_eq!(s.initial_width(), 0.5e-6, epsilon = 1e-15);
        assert!(spike_propagate(&tent(), 1.9, 0.0, 0, 10).is_err());
        assert!(matches!(
            spike_propagate(&tent(), 1.99, 0.1, 0, 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn spike_recomputation_matches() {
        let fam = tent();
        let (t, h, k) = (1.61, -2e-5, 3);
        let s = spike_propagate(&fam, t, h, k, 50).unwrap();
        let ft = fam.map_at(t).unwrap();
        let fth = fam.map_at(t + h).unwrap();
        let y = ft.critical_orbit(k + 1);
        for (i, &(a, b)) in s.endpoints.iter().enumerate() {
            let mut ea = if k == 0 {
                ft.critical_point()
            } else {
                y[k - 1]
            };
            for _ in 0..=i {
                ea = fth.eval(ea);
            }
            let mut eb = y[k];
            for _ in 0..i {
                eb = fth.eval(eb);
            }
            assert_eq!((a, b), (ea, eb));
        }
        let w = s.weights(0.7, h);
        assert_abs_diff_eq!(w[0], 0.7 / h, epsilon = 1e-9);
    }

    #[test]
    fn spike_orientation_flip() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let fam = tent();
        let mut checked = 0;
        for _ in 0..200 {
            let t = rng.random_range(1.5..1.9);
            let h = 10f64.powf(-rng.random_range(5.0..9.0));
            let p = spike_propagate(&fam, t, h, 0, 100).unwrap();
            let m = spike_propagate(&fam, t, -h, 0, 100).unwrap();
            let (ap, bp) = p.endpoints[0];
            let (am, bm) = m.endpoints[0];
            assert!((ap - bp).signum() == -(am - bm).signum());
            // Depths agree exactly when c lies in both spikes at the first
            // straddle of either.
            let (dp, dm) = (p.straddle_depth.unwrap(), m.straddle_depth.unwrap());
            let d = dp.min(dm);
            let inside = |s: &SpikeSet| {
                s.intervals
                    .get(d)
                    .is_some_and(|&(l, r)| l <= 0.5 && 0.5 <= r)
            };
            assert_eq!(dp == dm, inside(&p) && inside(&m));
            if dp == dm {
                checked += 1;
            }
        }
        // Most draws land in the overlap.
        assert!(checked > 100, "{checked}/200");
    }

    #[test]
    fn n3_bounded_by_n_of() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let fam = tent();
        let mut within = 0;
        let total = 1000;
        for _ in 0..total {
            let t = rng.random_range(1.5..1.9);
            let h = 1e-8;
            let est = n3_estimate(&fam, t, h, usize::MAX, 10_000).unwrap();
            assert!(est.n3 <= est.n_of);
            if (est.n_of - est.n3) as f64 <= 5.0 * (est.n_of as f64).ln() {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.9 * total as f64, "{within}/{total}");
    }

    #[test]
    fn n3_full_tent_uses_first_spike_only() {
        let fam = tent();
        let h = -1e-6;
        let est = n3_estimate(&fam, 2.0, h, usize::MAX, 1000).unwrap();
        assert!(est.straddle_depths[1..].iter().all(Option::is_none));
        let d0 = est.straddle_depths[0].unwrap();
        assert_eq!(est.n3, d0.min(est.n_of));
        for k in 1..5 {
            assert!(spike_propagate(&fam, 2.0, h, k, 100).unwrap().degenerate);
        }
    }

    #[test]
    fn wild_constant_observable_vanishes() {
        let d = density(1.8, 1 << 12);
        let w = wild_integral(
            &tent(),
            1.8,
            1e-7,
            &Observable::constant(3.0),
            &d,
            None,
            200,
        )
        .unwrap();
        assert!(w.value.abs() <= 1e-12, "{}", w.value);
    }

    #[test]
    fn wild_full_tent_reduces_to_surrogate() {
        let fam = tent();
        let map = fam.map_at(2.0).unwrap();
        let d = density(2.0, 1 << 10);
        let phi = Observable::identity();
        let j = transversality_j(&map, 1e-12).unwrap().value;
        for e in 4..=12 {
            let h = -(10f64.powi(-e));
            let w = wild_integral(&fam, 2.0, h, &phi, &d, None, 200).unwrap();
            let d0 = spike_propagate(&fam, 2.0, h, 0, 200)
                .unwrap()
                .straddle_depth
                .unwrap();
            let sur = birkhoff_surrogate(&map, d0, &phi, w.response);
            let expected = w.s1 * map.velocity(0.5) * sur;
            assert_abs_diff_eq!(w.value, expected, epsilon = 1e-9);
            let resid = w.value - w.s1 * j * sur;
            assert!(resid.abs() < 2.0, "h={h}: {resid}");
        }
    }

    #[test]
    fn surrogate_examples() {
        let map = tent().map_at(2.0).unwrap();
        let phi = Observable::identity();
        assert_eq!(birkhoff_surrogate(&map, 4, &phi, 0.5), -1.0);
        let m = tent().map_at(1.83).unwrap();
        assert_eq!(
            birkhoff_surrogate(&m, 50, &Observable::constant(2.0), 2.0),
            0.0
        );
        let orbit = m.critical_orbit(31);
        let diff = birkhoff_surrogate(&m, 31, &phi, 0.57) - birkhoff_surrogate(&m, 30, &phi, 0.57);
        assert_abs_diff_eq!(diff, orbit[30] - 0.57, epsilon = 1e-13);
        let pre = surrogate_prefixes(&m, 31, &phi, 0.57, OrbitMode::Plain).unwrap();
        assert_eq!(pre[30], birkhoff_surrogate(&m, 31, &phi, 0.57));
        let dd = surrogate_prefixes(&m, 31, &phi, 0.57, OrbitMode::Compensated).unwrap();
        assert!((dd[10] - pre[10]).abs() < 1e-9);
    }

    #[test]
    fn newton_quotient_guards_and_examples() {
        let fam = tent();
        let c = Observable::constant(1.5);
        assert_eq!(newton_quotient(&fam, 1.8, 1e-2, &c, 1 << 12).unwrap(), 0.0);
        assert!(matches!(
            newton_quotient(&fam, 1.8, 1e-7, &c, 1 << 18),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            newton_quotient(&fam, 1.8, 1e-5, &c, 1 << 16),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            newton_quotient(&fam, 1.99, 1e-1, &c, 1 << 12),
            Err(Error::Domain(_))
        ));
        let phi = Observable::cosine(1.0);
        let q = newton_quotient(&fam, 1.8, 1e-2, &phi, 1 << 12).unwrap();
        let qa = newton_quotient(&fam, 1.8, 1e-2, &phi.affine(-3.0, 2.0), 1 << 12).unwrap();
        assert!((qa + 3.0 * q).abs() <= 1e-10 * q.abs().max(1.0));
    }

    #[test]
    fn newton_quotient_grid_stability() {
        let fam = tent();
        let phi = Observable::identity();
        let q17 = newton_quotient(&fam, 1.9, 1e-3, &phi, 1 << 17).unwrap();
        let q18 = newton_quotient(&fam, 1.9, 1e-3, &phi, 1 << 18).unwrap();
        assert!((q17 - q18).abs() <= 0.1 * q18.abs(), "{q17} vs {q18}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn surrogate_shift_and_scale(t in 1.45f64..2.0, n in 1usize..200, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let m = tent().map_at(t).unwrap();
            let phi = Observable::cosine(1.0);
            let r = 0.1;
            let base = birkhoff_surrogate(&m, n, &phi, r);
            // φ + b with R + b: unchanged; aφ with aR: scaled.
            let shifted = birkhoff_surrogate(&m, n, &phi.affine(1.0, b), r + b);
            let scaled = birkhoff_surrogate(&m, n, &phi.affine(a, 0.0), a * r);
            prop_assert!((shifted - base).abs() <= 1e-9 * (n as f64));
            prop_assert!((scaled - a * base).abs() <= 1e-9 * (n as f64));
        }

        #[test]
        fn n3_never_exceeds_n_of(t in 1.45f64..1.99, e in 2.0f64..12.0) {
            let h = 10f64.powf(-e);
            let est = n3_estimate(&tent(), t, h, usize::MAX, 5000).unwrap();
            prop_assert!(est.n3 <= est.n_of);
        }
    }
}
