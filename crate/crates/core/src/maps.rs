//! Piecewise expanding unimodal map families.
//!
//! A family `t ↦ f_t` is a pair of smooth monotone branches glued at a fixed
//! critical point `c`, with `f_t(0) = f_t(1) = 0` and `|Df_t| > 1` away from
//! `c`. The built-in tent family is
//!
//! ```text
//! f_t(x) = t·x        (x < 1/2)
//! f_t(x) = t − t·x    (x ≥ 1/2)
//! ```
//!
//! with parameter velocity `v_t(x) = ∂_t f_t(x) = x` resp. `1 − x`. Custom
//! families supply closed-form branch formulas together with their
//! derivatives; nothing here differentiates numerically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Which branch to use when a one-sided quantity is queried at `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A real function of `(t, x)`.
pub type FamilyFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed-form description of one monotone branch of a family.
#[derive(Clone)]
pub struct BranchFormula {
    pub value: FamilyFn,
    pub d1: FamilyFn,
    pub d2: FamilyFn,
    pub d3: FamilyFn,
    /// `∂_t` of the branch value.
    pub velocity: FamilyFn,
}

/// A user-defined two-branch family.
#[derive(Clone)]
pub struct CustomFamily {
    pub name: String,
    pub critical_point: f64,
    /// Increasing branch on `[0, c]`.
    pub left: BranchFormula,
    /// Decreasing branch on `[c, 1]`.
    pub right: BranchFormula,
}

#[derive(Clone)]
enum FamilyKind {
    Tent,
    Custom(Arc<CustomFamily>),
}

/// Tag describing the family, as echoed in configs and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Tent,
    Custom,
}

/// A one-parameter family of unimodal maps over `[param_min, param_max]`.
#[derive(Clone)]
pub struct MapFamily {
    kind: FamilyKind,
    param_min: f64,
    param_max: f64,
}

impl fmt::Debug for MapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapFamily")
            .field("name", &self.name())
            .field("param_min", &self.param_min)
            .field("param_max", &self.param_max)
            .finish()
    }
}

const TENT_CRITICAL: f64 = 0.5;
const CONSISTENCY_TOL: f64 = 1e-12;
const BOUND_SAMPLES: usize = 2048;

impl MapFamily {
    /// The tent family restricted to `[param_min, param_max] ⊂ (1, 2]`.
    pub fn tent(param_min: f64, param_max: f64) -> Result<Self> {
        if !(param_min > 1.0 && param_min <= param_max && param_max <= 2.0) {
            return Err(Error::Domain(format!(
                "tent parameters must satisfy 1 < param_min <= param_max <= 2, got [{param_min}, {param_max}]"
            )));
        }
        Ok(Self {
            kind: FamilyKind::Tent,
            param_min,
            param_max,
        })
    }

    /// Wraps a custom family after checking the unimodal-map axioms on a few
    /// parameters of the interval.
    pub fn custom(def: CustomFamily, param_min: f64, param_max: f64) -> Result<Self> {
        let c = def.critical_point;
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::Argument(format!("critical point {c} not in (0,1)")));
        }
        if !(param_min.is_finite() && param_max.is_finite() && param_min <= param_max) {
            return Err(Error::Domain(format!(
                "bad parameter interval [{param_min}, {param_max}]"
            )));
        }
        let family = Self {
            kind: FamilyKind::Custom(Arc::new(def)),
            param_min,
            param_max,
        };
        for t in [param_min, 0.5 * (param_min + param_max), param_max] {
            let map = family.map_at(t)?;
            let (l, r) = match &family.kind {
                FamilyKind::Custom(s) => (&s.left, &s.right),
                FamilyKind::Tent => unreachable!(),
            };
            let checks = [
                ((l.value)(t, 0.0), 0.0, "f(0) = 0"),
                ((r.value)(t, 1.0), 0.0, "f(1) = 0"),
                ((l.value)(t, c), (r.value)(t, c), "continuity at c"),
            ];
            for (got, want, what) in checks {
                if (got - want).abs() > CONSISTENCY_TOL {
                    return Err(Error::Construction(format!(
                        "{what} violated at t={t}: {got} vs {want}"
                    )));
                }
            }
            let peak = map.eval(c);
            if !(0.0..=1.0 + CONSISTENCY_TOL).contains(&peak) {
                return Err(Error::Construction(format!(
                    "f_t(c) = {peak} leaves [0,1] at t={t}"
                )));
            }
        }
        Ok(family)
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            FamilyKind::Tent => "tent",
            FamilyKind::Custom(s) => &s.name,
        }
    }

    pub fn tag(&self) -> FamilyTag {
        match self.kind {
            FamilyKind::Tent => FamilyTag::Tent,
            FamilyKind::Custom(_) => FamilyTag::Custom,
        }
    }

    pub fn is_tent(&self) -> bool {
        matches!(self.kind, FamilyKind::Tent)
    }

    pub fn critical_point(&self) -> f64 {
        match &self.kind {
            FamilyKind::Tent => TENT_CRITICAL,
            FamilyKind::Custom(s) => s.critical_point,
        }
    }

    pub fn param_interval(&self) -> (f64, f64) {
        (self.param_min, self.param_max)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.param_min && t <= self.param_max
    }

    fn check_param(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "parameter {t} outside [{}, {}]",
                self.param_min, self.param_max
            )))
        }
    }

    /// The map `f_t`, with its expansion bounds resolved.
    pub fn map_at(&self, t: f64) -> Result<UnimodalMap> {
        self.check_param(t)?;
        let c = self.critical_point();
        let (lambda, upper) = match &self.kind {
            FamilyKind::Tent => (t, t),
            FamilyKind::Custom(def) => {
                let mut lo = f64::INFINITY;
                let mut hi: f64 = 0.0;
                for (branch, a, b) in [(&def.left, 0.0, c), (&def.right, c, 1.0)] {
                    for i in 0..=BOUND_SAMPLES {
                        let x = a + (b - a) * i as f64 / BOUND_SAMPLES as f64;
                        let d = (branch.d1)(t, x).abs();
                        lo = lo.min(d);
                        hi = hi.max(d);
                    }
                }
                (lo, hi)
            }
        };
        if !(lambda > 1.0) || !upper.is_finite() {
            return Err(Error::Construction(format!(
                "map at t={t} is not uniformly expanding (inf |Df| = {lambda}, sup |Df| = {upper})"
            )));
        }
        Ok(UnimodalMap {
            family: self.clone(),
            t,
            lambda,
            upper,
        })
    }

    /// `f_t` without the expansion-bound sampling of [`MapFamily::map_at`];
    /// only for evaluating orbits in parameter scans. `λ` and `Λ` are NaN
    /// for custom families.
    pub(crate) fn map_for_orbits(&self, t: f64) -> UnimodalMap {
        let (lambda, upper) = match &self.kind {
            FamilyKind::Tent => (t, t),
            FamilyKind::Custom(_) => (f64::NAN, f64::NAN),
        };
        UnimodalMap {
            family: self.clone(),
            t,
            lambda,
            upper,
        }
    }

    fn check_x(x: f64) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("position {x} outside [0,1]")))
        }
    }

    /// `f_t(x)`.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.map_at(t)?.eval(x))
    }

    /// One-sided derivative `D^order f_t(x)`; `side` is mandatory at `x = c`.
    pub fn derivative(&self, t: f64, x: f64, order: u8, side: Option<Side>) -> Result<f64> {
        Self::check_x(x)?;
        self.map_at(t)?.derivative_of_order(x, order, side)
    }

    /// Parameter velocity `v_t(x) = ∂_s f_s(x)|_{s=t}`.
    pub fn velocity(&self, t: f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(self.map_at(t)?.velocity(x))
    }

    /// `(f_t(c), f_t²(c), …, f_tⁿ(c))`.
    pub fn critical_orbit(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Argument("orbit length must be at least 1".into()));
        }
        Ok(self.map_at(t)?.critical_orbit(n))
    }

    fn branch(&self, side: Side) -> Option<&BranchFormula> {
        match &self.kind {
            FamilyKind::Tent => None,
            FamilyKind::Custom(s) => Some(match side {
                Side::Left => &s.left,
                Side::Right => &s.right,
            }),
        }
    }
}

/// A single map `f_t` of a family. Cheap to clone, immutable.
#[derive(Clone, Debug)]
pub struct UnimodalMap {
    family: MapFamily,
    t: f64,
    lambda: f64,
    upper: f64,
}

impl UnimodalMap {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    pub fn critical_point(&self) -> f64 {
        self.family.critical_point()
    }

    /// Lower expansion bound `inf |Df_t|`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Upper derivative bound `sup |Df_t|`.
    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// Flags maps whose expansion does not rule out renormalization
    /// (`inf |Df_t| ≤ √2`).
    pub fn is_mixing_safe(&self) -> bool {
        self.lambda > std::f64::consts::SQRT_2
    }

    /// Branch selected for `x`; `x = c` goes right.
    #[inline]
    pub fn side_of(&self, x: f64) -> Side {
        if x < self.critical_point() {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// `f_t(x)` without domain checks.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.family.kind {
            FamilyKind::Tent => {
                if x < TENT_CRITICAL {
                    self.t * x
                } else {
                    self.t - self.t * x
                }
            }
            FamilyKind::Custom(_) => self.branch_value(self.side_of(x), x),
        }
    }

    /// Value of one branch formula (extended past `c` for custom families).
    #[inline]
    pub fn branch_value(&self, side: Side, x: f64) -> f64 {
        match (&self.family.kind, side) {
            (FamilyKind::Tent, Side::Left) => self.t * x,
            (FamilyKind::Tent, Side::Right) => self.t - self.t * x,
            (FamilyKind::Custom(_), _) => (self.family.branch(side).unwrap().value)(self.t, x),
        }
    }

    /// First derivative, choosing the branch from `x` (right at `c`).
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        self.slope_on(self.side_of(x), x)
    }

    /// First derivative of the given branch at `x`.
    #[inline]
    pub fn slope_on(&self, side: Side, x: f64) -> f64 {
        match (&self.family.kind, side) {
            (FamilyKind::Tent, Side::Left) => self.t,
            (FamilyKind::Tent, Side::Right) => -self.t,
            (FamilyKind::Custom(_), _) => (self.family.branch(side).unwrap().d1)(self.t, x),
        }
    }

    /// Derivative of order 1..=3. At `x = c` an explicit side is required.
    pub fn derivative_of_order(&self, x: f64, order: u8, side: Option<Side>) -> Result<f64> {
        if !(1..=3).contains(&order) {
            return Err(Error::Argument(format!(
                "derivative order {order} not in 1..=3"
            )));
        }
        let side = if x == self.critical_point() {
            side.ok_or_else(|| {
                Error::Argument("derivative at the critical point needs an explicit side".into())
            })?
        } else {
            self.side_of(x)
        };
        Ok(match (&self.family.kind, order) {
            (FamilyKind::Tent, 1) => self.slope_on(side, x),
            (FamilyKind::Tent, _) => 0.0,
            (FamilyKind::Custom(_), o) => {
                let b = self.family.branch(side).unwrap();
                match o {
                    1 => (b.d1)(self.t, x),
                    2 => (b.d2)(self.t, x),
                    _ => (b.d3)(self.t, x),
                }
            }
        })
    }

    /// `v_t(x)`.
    #[inline]
    pub fn velocity(&self, x: f64) -> f64 {
        match &self.family.kind {
            FamilyKind::Tent => {
                if x < TENT_CRITICAL {
                    x
                } else {
                    1.0 - x
                }
            }
            FamilyKind::Custom(_) => {
                let side = self.side_of(x);
                (self.family.branch(side).unwrap().velocity)(self.t, x)
            }
        }
    }

    /// `sup_x |v_t(x)|`; exact for the tent family, sampled otherwise.
    pub fn sup_velocity(&self) -> f64 {
        match &self.family.kind {
            FamilyKind::Tent => 0.5,
            FamilyKind::Custom(_) => (0..=BOUND_SAMPLES)
                .map(|i| self.velocity(i as f64 / BOUND_SAMPLES as f64).abs())
                .fold(0.0, f64::max),
        }
    }

    /// `(f(c), …, fⁿ(c))` by iterated evaluation.
    pub fn critical_orbit(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut x = self.critical_point();
        for _ in 0..n {
            x = self.eval(x);
            out.push(x);
        }
        out
    }

    /// Critical orbit carried in double-double arithmetic (about 106 bits),
    /// rounded to `f64` on output. Only piecewise-linear built-in families
    /// support this mode.
    pub fn critical_orbit_compensated(&self, n: usize) -> Result<Vec<f64>> {
        if !self.family.is_tent() {
            return Err(Error::Argument(
                "compensated orbits are only available for the tent family".into(),
            ));
        }
        let t = self.t;
        let mut x = DoubleDouble::from(TENT_CRITICAL);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let tx = x.mul_f64(t);
            x = if x.lt_f64(TENT_CRITICAL) {
                tx
            } else {
                tx.neg().add_f64(t)
            };
            out.push(x.hi);
        }
        Ok(out)
    }

    /// Support `K(t) = [f²(c), f(c)]` of the invariant density.
    pub fn support(&self) -> (f64, f64) {
        let v = self.eval(self.critical_point());
        let w = self.eval(v);
        (w.min(v), v.max(w))
    }

    /// Solves `branch(x) = y` on the branch's monotone interval; `None` if `y`
    /// is outside the branch image.
    pub fn preimage(&self, side: Side, y: f64) -> Option<f64> {
        let c = self.critical_point();
        let (a, b) = match side {
            Side::Left => (0.0, c),
            Side::Right => (c, 1.0),
        };
        let fa = self.branch_value(side, a);
        let fb = self.branch_value(side, b);
        let (lo, hi) = (fa.min(fb), fa.max(fb));
        if y < lo || y > hi {
            return None;
        }
        if let FamilyKind::Tent = self.family.kind {
            let x = match side {
                Side::Left => y / self.t,
                Side::Right => 1.0 - y / self.t,
            };
            return Some(x.clamp(a, b));
        }
        Some(bisect_monotone(|x| self.branch_value(side, x), a, b, y))
    }
}

/// Bisection for `g(x) = y` on `[a, b]` where `g` is monotone, to machine
/// precision.
pub(crate) fn bisect_monotone(g: impl Fn(f64) -> f64, a: f64, b: f64, y: f64) -> f64 {
    let increasing = g(b) >= g(a);
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = if increasing { g(mid) < y } else { g(mid) > y };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }
}

impl DoubleDouble {
    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn mul_f64(self, b: f64) -> Self {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Self::quick_two_sum(p, e + self.lo * b)
    }

    fn add_f64(self, b: f64) -> Self {
        let s = Self::two_sum(self.hi, b);
        Self::quick_two_sum(s.hi, s.lo + self.lo)
    }

    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn lt_f64(self, b: f64) -> bool {
        self.hi < b || (self.hi == b && self.lo < 0.0)
    }
}

#[cfg(test)]
pub(crate) mod test_families {
    use super::*;

    /// Smooth perturbation of the tent family: `f_t(x) = (t/2)·g(2x)` on the
    /// left and `(t/2)·g(2 − 2x)` on the right with `g(u) = u + ε·u·(1 − u)`.
    pub fn bent_tent(eps: f64, param_min: f64, param_max: f64) -> MapFamily {
        MapFamily::custom(bent_tent_spec(eps), param_min, param_max).unwrap()
    }

    pub fn bent_tent_spec(eps: f64) -> CustomFamily {
        let g = move |u: f64| u + eps * u * (1.0 - u);
        let dg = move |u: f64| 1.0 + eps * (1.0 - 2.0 * u);
        let left = BranchFormula {
            value: Arc::new(move |t, x| 0.5 * t * g(2.0 * x)),
            d1: Arc::new(move |t, x| t * dg(2.0 * x)),
            d2: Arc::new(move |t, _| -4.0 * t * eps),
            d3: Arc::new(|_, _| 0.0),
            velocity: Arc::new(move |_, x| 0.5 * g(2.0 * x)),
        };
        let right = BranchFormula {
            value: Arc::new(move |t, x| 0.5 * t * g(2.0 - 2.0 * x)),
            d1: Arc::new(move |t, x| -t * dg(2.0 - 2.0 * x)),
            d2: Arc::new(move |t, _| -4.0 * t * eps),
            d3: Arc::new(|_, _| 0.0),
            velocity: Arc::new(move |_, x| 0.5 * g(2.0 - 2.0 * x)),
        };
        CustomFamily {
            name: format!("bent-tent({eps})"),
            critical_point: 0.5,
            left,
            right,
        }
    }
}
