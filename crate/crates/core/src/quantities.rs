//! Scalar dynamical quantities of one parameter: Lyapunov exponent, density
//! jump, transversality series, dynamical variance and the response
//! `R_φ(t) = ∫φ dμ_t`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{MapFamily, Side, UnimodalMap};
use crate::transfer::{
    build_ulam, density_at_critical_point, invariant_density_with, DensityGrid, PowerOptions,
};

type ObsFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Lipschitz observable `φ: [0,1] → ℝ`.
#[derive(Clone)]
pub struct Observable {
    name: String,
    f: ObsFn,
    lipschitz_bound: f64,
    /// Set for constant observables, whose integral against any probability
    /// density is known exactly.
    constant: Option<f64>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl Observable {
    pub fn new(
        name: impl Into<String>,
        lipschitz_bound: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lipschitz_bound >= 0.0 && lipschitz_bound.is_finite()) {
            return Err(Error::Argument(format!(
                "Lipschitz bound {lipschitz_bound} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            lipschitz_bound,
            constant: None,
        })
    }

    /// `φ(x) = x`.
    pub fn identity() -> Self {
        Self::new("x", 1.0, |x| x).unwrap()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: Some(c),
            ..Self::new(format!("const:{c}"), 0.0, move |_| c).unwrap()
        }
    }

    /// `φ(x) = cos(2πkx)`.
    pub fn cosine(k: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * k;
        Self::new(format!("cos:{k}"), w.abs(), move |x| (w * x).cos()).unwrap()
    }

    /// `a·φ + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let f = self.f.clone();
        Self {
            name: format!("{a}*({})+{b}", self.name),
            f: Arc::new(move |x| a * f(x) + b),
            lipschitz_bound: a.abs() * self.lipschitz_bound,
            constant: self.constant.map(|c| a * c + b),
        }
    }

    /// Parses `x`, `x^2`, `const:<c>` or `cos:<k>`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text {
            "x" | "identity" => return Ok(Self::identity()),
            "x^2" | "square" => return Self::new("x^2", 2.0, |x| x * x),
            _ => {}
        }
        let bad = || Error::Argument(format!("unknown observable '{text}'"));
        let (kind, arg) = text.split_once(':').ok_or_else(bad)?;
        let value: f64 = arg.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "const" => Ok(Self::constant(value)),
            "cos" => Ok(Self::cosine(value)),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// Checks the declared Lipschitz bound on consecutive points of a
    /// uniform sample.
    pub fn check_lipschitz(&self, samples: usize) -> Result<()> {
        let h = 1.0 / samples as f64;
        for i in 0..samples {
            let (x, y) = (i as f64 * h, (i + 1) as f64 * h);
            let slope = (self.eval(y) - self.eval(x)).abs() / h;
            if slope > self.lipschitz_bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::Validation(format!(
                    "observable {} has slope {slope} > bound {} near x={x}",
                    self.name, self.lipschitz_bound
                )));
            }
        }
        Ok(())
    }
}

/// `∫ log|Df_t| dμ_t` by the midpoint rule on the density grid.
pub fn lyapunov(map: &UnimodalMap, density: &DensityGrid) -> Result<f64> {
    let n = density.n() as f64;
    let l: f64 = density
        .values()
        .iter()
        .enumerate()
        .map(|(i, r)| r * map.slope(density.midpoint(i)).abs().ln())
        .sum::<f64>()
        / n;
    if !(l > 0.0) {
        return Err(Error::Validation(format!(
            "Lyapunov exponent {l} is not positive"
        )));
    }
    Ok(l)
}

/// Deterministic generic starting point for long orbits.
pub const ORBIT_SEED_POINT: f64 = std::f64::consts::FRAC_1_PI;

/// Birkhoff average of `log|Df_t|` along an orbit of `steps` points.
pub fn lyapunov_birkhoff(map: &UnimodalMap, steps: usize) -> Result<f64> {
    let mut x = ORBIT_SEED_POINT;
    for _ in 0..1000 {
        x = map.eval(x);
    }
    let mut acc = 0.0;
    for _ in 0..steps {
        acc += map.slope(x).abs().ln();
        x = map.eval(x);
    }
    let l = acc / steps as f64;
    if !(l > 0.0) {
        return Err(Error::Validation(format!(
            "Lyapunov exponent {l} is not positive"
        )));
    }
    Ok(l)
}

/// `S_t = s₁(t) = ρ_t(c)(1/|Df_t(c−)| + 1/|Df_t(c+)|)`.
pub fn jump_s(map: &UnimodalMap, density: &DensityGrid) -> Result<f64> {
    let c = map.critical_point();
    let (rho_c, _) = density_at_critical_point(map, density);
    let s = rho_c
        * (1.0 / map.slope_on(Side::Left, c).abs() + 1.0 / map.slope_on(Side::Right, c).abs());
    if !(s > 0.0) {
        return Err(Error::Validation(format!(
            "density jump estimate {s} is not positive"
        )));
    }
    Ok(s)
}

/// Distance to `c` below which an orbit point counts as hitting it.
pub const NEAR_PERIODIC_DISTANCE: f64 = 1e-13;

/// One-sided values of the transversality series when the critical orbit
/// returns to `c`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct NearPeriodic {
    /// First `k ≥ 1` with `|f^k(c) − c| < 1e-13`.
    pub index: usize,
    /// Series with `c−` slopes at every return.
    pub left_sum: f64,
    /// Series with `c+` slopes at every return.
    pub right_sum: f64,
    /// Partial sum `Σ_{k<index}`.
    pub partial_before_return: f64,
}

/// Value and diagnostics of the transversality series.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Transversality {
    /// The series value (right-sided at returns to `c`).
    pub value: f64,
    /// Last index `K` included.
    pub terms: usize,
    /// `sup|v|·λ^{-K}/(1 − 1/λ)`.
    pub tail_bound: f64,
    pub near_periodic: Option<NearPeriodic>,
}

/// Smallest `K` with `sup|v|·λ^{-K}/(1 − 1/λ) < tol`.
pub fn transversality_truncation(sup_v: f64, lambda: f64, tol: f64) -> usize {
    if sup_v == 0.0 {
        return 0;
    }
    let base = sup_v / (tol * (1.0 - 1.0 / lambda));
    if base < 1.0 {
        return 0;
    }
    let mut k = (base.ln() / lambda.ln()).floor() as usize;
    while sup_v * lambda.powi(-(k as i32)) / (1.0 - 1.0 / lambda) >= tol {
        k += 1;
    }
    k
}

fn j_partial(map: &UnimodalMap, k_max: usize) -> (f64, Option<usize>) {
    let c = map.critical_point();
    let mut sum = map.velocity(c);
    let mut x = map.eval(c);
    let mut deriv = 1.0;
    for k in 1..=k_max {
        // x = f^k(c); accumulate Df(x) into Df^k(f(c)).
        if (x - c).abs() < NEAR_PERIODIC_DISTANCE {
            return (sum, Some(k));
        }
        deriv *= map.slope(x);
        sum += map.velocity(x) / deriv;
        x = map.eval(x);
    }
    (sum, None)
}

/// Exact series for a critical orbit of period `p`, taking the slope at
/// the return to `c` from `side`: the first block repeats with factor
/// `1/Df^p(f(c))`.
fn j_periodic(map: &UnimodalMap, p: usize, side: Side) -> f64 {
    let c = map.critical_point();
    let mut block = map.velocity(c);
    let mut x = map.eval(c);
    let mut deriv = 1.0;
    for _ in 1..p {
        deriv *= map.slope(x);
        block += map.velocity(x) / deriv;
        x = map.eval(x);
    }
    deriv *= map.slope_on(side, c);
    block / (1.0 - 1.0 / deriv)
}

/// `J(f_t, v_t) = Σ_{k≥0} v_t(f^k(c)) / Df_t^k(f_t(c))`, truncated at the
/// geometric tail bound `tol`.
pub fn transversality_j(map: &UnimodalMap, tol: f64) -> Result<Transversality> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    let sup_v = map.sup_velocity();
    let k = transversality_truncation(sup_v, map.lambda(), tol);
    transversality_j_terms(map, k)
}

/// Transversality partial sum through index `k`. If the orbit returns to
/// within [`NEAR_PERIODIC_DISTANCE`] of `c` first, the series is summed
/// exactly as a periodic one from each side and the right-sided value is
/// reported.
pub fn transversality_j_terms(map: &UnimodalMap, k: usize) -> Result<Transversality> {
    let lambda = map.lambda();
    let tail_bound = map.sup_velocity() * lambda.powi(-(k as i32)) / (1.0 - 1.0 / lambda);
    let (partial, hit) = j_partial(map, k);
    match hit {
        None => Ok(Transversality {
            value: partial,
            terms: k,
            tail_bound,
            near_periodic: None,
        }),
        Some(index) => {
            let left_sum = j_periodic(map, index, Side::Left);
            let right_sum = j_periodic(map, index, Side::Right);
            Ok(Transversality {
                value: right_sum,
                terms: k,
                tail_bound,
                near_periodic: Some(NearPeriodic {
                    index,
                    left_sum,
                    right_sum,
                    partial_before_return: partial,
                }),
            })
        }
    }
}

/// Estimator for `σ_t(φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    GreenKubo,
    Direct,
    /// Green–Kubo, switching to the direct estimator when the truncated sum
    /// comes out negative.
    Auto,
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "green_kubo" | "green-kubo" => Ok(Self::GreenKubo),
            "direct" => Ok(Self::Direct),
            "auto" => Ok(Self::Auto),
            _ => Err(Error::Argument(format!("unknown sigma mode '{s}'"))),
        }
    }
}

/// Parameters of the windowed-Birkhoff variance estimator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DirectOptions {
    pub window: usize,
    pub windows: usize,
    pub burn_in: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            window: 1000,
            windows: 10_000,
            burn_in: 1000,
        }
    }
}

/// Consecutive below-floor autocovariances that end the Green–Kubo sum.
pub const GK_QUIET_RUN: usize = 5;
/// Hard cap on the Green–Kubo lag.
pub const GK_MAX_LAG: usize = 2000;

/// Green–Kubo output: `σ` and the autocovariances used.
#[derive(Debug, Clone, Serialize)]
pub struct GreenKubo {
    pub sigma: f64,
    pub autocovariances: Vec<f64>,
    pub noise_floor: f64,
}

/// `σ² = C₀ + 2Σ_{k≥1} C_k` with `C_k = ∫ φ̂·φ̂∘f^k dμ`, each integral a
/// midpoint rule over the cells with `f^k` applied pointwise to midpoints.
/// Summation stops once `|C_k|` has stayed below `C₀/√n` for
/// [`GK_QUIET_RUN`] consecutive lags.
pub fn green_kubo(map: &UnimodalMap, density: &DensityGrid, phi: &Observable) -> Result<GreenKubo> {
    let n = density.n();
    let r = response(density, phi);
    let weights: Vec<f64> = density.values().iter().map(|v| v / n as f64).collect();
    let base: Vec<f64> = (0..n).map(|i| phi.eval(density.midpoint(i)) - r).collect();
    let mut pts: Vec<f64> = (0..n).map(|i| density.midpoint(i)).collect();
    let c0: f64 = weights.iter().zip(&base).map(|(w, b)| w * b * b).sum();
    let mut cov = vec![c0];
    // Rounding in φ − R leaves residues of order 1e-16·|φ|; below this
    // level φ̂ is treated as identically zero.
    let scale = (0..n)
        .map(|i| phi.eval(density.midpoint(i)).abs())
        .fold(0.0, f64::max);
    let tiny = (1e-12 * scale).powi(2);
    if c0 <= tiny {
        cov[0] = 0.0;
        return Ok(GreenKubo {
            sigma: 0.0,
            autocovariances: cov,
            noise_floor: 0.0,
        });
    }
    let floor = (c0 / (n as f64).sqrt()).max(tiny);
    let mut quiet = 0;
    for _ in 1..=GK_MAX_LAG {
        let mut ck = 0.0;
        for ((x, w), b) in pts.iter_mut().zip(&weights).zip(&base) {
            *x = map.eval(*x);
            ck += w * b * (phi.eval(*x) - r);
        }
        cov.push(ck);
        quiet = if ck.abs() < floor { quiet + 1 } else { 0 };
        if quiet >= GK_QUIET_RUN {
            break;
        }
    }
    if quiet < GK_QUIET_RUN {
        return Err(Error::Convergence {
            iterations: GK_MAX_LAG,
            residual: *cov.last().unwrap(),
        });
    }
    let var = c0 + 2.0 * cov[1..].iter().sum::<f64>();
    if var < 0.0 {
        return Err(Error::NegativeVariance {
            estimate: var,
            autocovariances: cov,
        });
    }
    Ok(GreenKubo {
        sigma: var.sqrt(),
        autocovariances: cov,
        noise_floor: floor,
    })
}

/// Standard deviation of `n^{-1/2}·Σ φ̂` over consecutive windows of one
/// long orbit.
pub fn sigma_direct(
    map: &UnimodalMap,
    density: &DensityGrid,
    phi: &Observable,
    opts: DirectOptions,
) -> Result<f64> {
    if opts.window == 0 || opts.windows < 2 {
        return Err(Error::Argument(
            "direct estimator needs window ≥ 1 and ≥ 2 windows".into(),
        ));
    }
    let r = response(density, phi);
    let mut x = ORBIT_SEED_POINT;
    for _ in 0..opts.burn_in {
        x = map.eval(x);
    }
    let scale = 1.0 / (opts.window as f64).sqrt();
    let sums: Vec<f64> = (0..opts.windows)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..opts.window {
                s += phi.eval(x) - r;
                x = map.eval(x);
            }
            s * scale
        })
        .collect();
    let m = sums.iter().sum::<f64>() / sums.len() as f64;
    let var = sums.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (sums.len() as f64 - 1.0);
    Ok(var.sqrt())
}

/// `σ_t(φ)` by the selected estimator.
pub fn sigma_variance(
    map: &UnimodalMap,
    density: &DensityGrid,
    phi: &Observable,
    mode: SigmaMode,
) -> Result<f64> {
    match mode {
        SigmaMode::GreenKubo => green_kubo(map, density, phi).map(|g| g.sigma),
        SigmaMode::Direct => sigma_direct(map, density, phi, DirectOptions::default()),
        SigmaMode::Auto => match green_kubo(map, density, phi) {
            Err(Error::NegativeVariance { .. }) => {
                sigma_direct(map, density, phi, DirectOptions::default())
            }
            other => other.map(|g| g.sigma),
        },
    }
}

/// `∫φ dμ_t` by the midpoint rule on the density grid.
pub fn response(density: &DensityGrid, phi: &Observable) -> f64 {
    if let Some(c) = phi.constant_value() {
        return c;
    }
    let n = density.n() as f64;
    density
        .values()
        .iter()
        .enumerate()
        .map(|(i, r)| r * phi.eval(density.midpoint(i)))
        .sum::<f64>()
        / n
}

/// Birkhoff time average of `φ` along a generic orbit.
pub fn response_birkhoff(map: &UnimodalMap, phi: &Observable, steps: usize) -> f64 {
    let mut x = ORBIT_SEED_POINT;
    for _ in 0..1000 {
        x = map.eval(x);
    }
    let mut acc = 0.0;
    for _ in 0..steps {
        acc += phi.eval(x);
        x = map.eval(x);
    }
    acc / steps as f64
}

/// Numerical settings for [`dyn_quantities`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuantityConfig {
    pub n: usize,
    pub j_tol: f64,
    pub sigma_mode: SigmaMode,
    pub power: PowerOptions,
}

impl Default for QuantityConfig {
    fn default() -> Self {
        Self {
            n: 1 << 14,
            j_tol: 1e-12,
            sigma_mode: SigmaMode::GreenKubo,
            power: PowerOptions::default(),
        }
    }
}

/// The record `{L, ℓ, S, J, σ, Ψ, R}` for one parameter.
#[derive(Debug, Clone, Serialize)]
pub struct DynQuantities {
    pub t: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub ell: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub sigma: f64,
    pub psi: f64,
    pub response: f64,
    /// `σ = 0`: the CLT hypothesis fails for this observable.
    pub sigma_zero: bool,
    pub j_detail: Transversality,
}

/// Builds the density on `config.n` cells and evaluates every quantity.
pub fn dyn_quantities(
    family: &MapFamily,
    t: f64,
    phi: &Observable,
    config: &QuantityConfig,
) -> Result<DynQuantities> {
    let map = family.map_at(t)?;
    let matrix = build_ulam(&map, config.n)?;
    let (density, _) = invariant_density_with(&matrix, config.power)?;
    dyn_quantities_from(&map, &density, phi, config)
}

/// Same as [`dyn_quantities`] with a precomputed density.
pub fn dyn_quantities_from(
    map: &UnimodalMap,
    density: &DensityGrid,
    phi: &Observable,
    config: &QuantityConfig,
) -> Result<DynQuantities> {
    let l = lyapunov(map, density)?;
    let ell = 1.0 / l.sqrt();
    let s = jump_s(map, density)?;
    let j_detail = transversality_j(map, config.j_tol)?;
    let sigma = sigma_variance(map, density, phi, config.sigma_mode)?;
    Ok(DynQuantities {
        t: map.t(),
        l,
        ell,
        s,
        j: j_detail.value,
        sigma,
        psi: sigma * s * j_detail.value * ell,
        response: response(density, phi),
        sigma_zero: sigma == 0.0,
        j_detail,
    })
}
