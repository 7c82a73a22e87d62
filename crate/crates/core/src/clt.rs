//! Monte-Carlo experiments over a parameter window: the surrogate and direct
//! CLT tiers, variance scaling in `−log h`, the modulus-of-continuity table,
//! the non-Lipschitz growth probe and the wild-part identity check.
//!
//! Every sample owns a ChaCha stream selected by its index, so results do not
//! depend on how rayon schedules the work.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{MapFamily, UnimodalMap};
use crate::quantities::{
    dyn_quantities_from, jump_s, response, transversality_j, DynQuantities, Observable,
    QuantityConfig, SigmaMode,
};
use crate::report::{fmt17, fmt_pow10};
use crate::stats::{ecdf, ks_distance, linear_regression, mean, spearman, variance, LinearFit};
use crate::symbolic::{n_of, n_of_log};
use crate::transfer::{build_ulam, density_l1_distance, invariant_density, DensityGrid};
use crate::wild::{
    birkhoff_surrogate, newton_quotient_from, surrogate_prefixes, wild_integral, OrbitMode,
};

/// Samples with `σ_t` below this are excluded from the CLT statistics.
pub const SIGMA_THRESHOLD: f64 = 1e-4;
pub const MIN_SAMPLES: usize = 100;
/// Mixing window of the tent family.
pub const TENT_WINDOW: (f64, f64) = (std::f64::consts::SQRT_2, 2.0);
const CDF_POINTS: usize = 161;
const CDF_RANGE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Surrogate,
    Direct,
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "surrogate" => Ok(Self::Surrogate),
            "direct" => Ok(Self::Direct),
            other => Err(Error::Argument(format!("unknown tier '{other}'"))),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Surrogate => "surrogate",
            Self::Direct => "direct",
        })
    }
}

/// Settings shared by every experiment of this module.
#[derive(Debug, Clone, Serialize)]
pub struct CltConfig {
    pub family: String,
    pub window: (f64, f64),
    pub observable: String,
    pub tier: Tier,
    /// Orbit length `N` of the surrogate tier.
    pub orbit_length: usize,
    /// Step of the direct tier and the wild check.
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    /// Grid for `σ_t`, `S_t`, `J_t` and `R_φ(t)`.
    pub grid: usize,
    /// Grid for direct Newton quotients.
    pub direct_grid: usize,
    /// `−log h` values for [`variance_scaling`].
    pub neg_log_h: Vec<f64>,
    /// Orbit lengths for [`lipschitz_probe`].
    pub orbit_lengths: Vec<usize>,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            family: "tent".into(),
            window: (1.5, 1.9),
            observable: "x".into(),
            tier: Tier::Surrogate,
            orbit_length: 2000,
            h: 1e-4,
            samples: 20_000,
            seed: 20_240_601,
            grid: 1 << 14,
            direct_grid: 1 << 18,
            neg_log_h: vec![200.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0],
            orbit_lengths: vec![100, 400, 1600, 6400],
        }
    }
}

/// Resolves a family name to its full validity window.
pub fn family_by_name(name: &str) -> Result<MapFamily> {
    match name.trim() {
        "tent" => MapFamily::tent(TENT_WINDOW.0 + f64::EPSILON, TENT_WINDOW.1),
        other => Err(Error::Argument(format!("unknown family '{other}'"))),
    }
}

impl CltConfig {
    pub fn observable(&self) -> Result<Observable> {
        Observable::parse(&self.observable)
    }

    /// Checks the invariants of the configuration and returns the family.
    pub fn validate(&self) -> Result<MapFamily> {
        let family = family_by_name(&self.family)?;
        let (lo, hi) = family.param_interval();
        let (a, b) = self.window;
        if !(a > lo && a < b && b < hi) {
            return Err(Error::Validation(format!(
                "window [{a}, {b}] must lie strictly inside ({lo}, {hi})"
            )));
        }
        if self.samples < MIN_SAMPLES {
            return Err(Error::Validation(format!(
                "sample count {} below {MIN_SAMPLES}",
                self.samples
            )));
        }
        if self.tier == Tier::Direct && !(self.h.abs() < b - a) {
            return Err(Error::Validation(format!(
                "step {} does not fit in the window",
                self.h
            )));
        }
        self.observable()?;
        Ok(family)
    }

    fn quantity_config(&self) -> QuantityConfig {
        clt_quantity_config(self.grid)
    }
}

/// Quantity settings of the experiments: `grid` cells and the Green–Kubo
/// estimator with the direct fallback.
pub fn clt_quantity_config(grid: usize) -> QuantityConfig {
    QuantityConfig {
        n: grid,
        sigma_mode: SigmaMode::Auto,
        ..QuantityConfig::default()
    }
}

/// The RNG stream of sample `index`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Parameter of sample `index`, uniform on `[a, b]`.
pub fn sample_parameter(seed: u64, index: usize, (a, b): (f64, f64)) -> f64 {
    let u: f64 = sample_rng(seed, index).random();
    a + (b - a) * u
}

/// One retained draw.
#[derive(Debug, Clone, Serialize)]
pub struct CltSample {
    pub index: usize,
    pub t: f64,
    /// Direct step, absent in the surrogate tier.
    pub h: Option<f64>,
    /// Effective `−log|h|`.
    pub neg_log_h: f64,
    pub raw: f64,
    pub normalized: f64,
}

impl CltSample {
    /// `h`, or `exp(−neg_log_h)` written without underflow.
    pub fn h_eff_text(&self) -> String {
        match self.h {
            Some(h) => fmt17(h),
            None => fmt_pow10(-self.neg_log_h / std::f64::consts::LN_10),
        }
    }
}

/// A sample dropped because `σ_t` is too small for the normalization.
#[derive(Debug, Clone, Serialize)]
pub struct Exclusion {
    pub index: usize,
    pub t: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceRow {
    pub neg_log_h: f64,
    pub retained: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SummaryStats {
    pub requested: usize,
    pub retained: usize,
    pub excluded: usize,
    /// `(x, F_emp(x))` on a fixed grid over `[−4, 4]`.
    pub cdf: Vec<(f64, f64)>,
    pub ks: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Every normalized value is a point mass at zero or nothing was kept.
    pub degenerate: bool,
    pub variance_table: Vec<VarianceRow>,
    pub fit: Option<LinearFit>,
    pub spearman: Option<f64>,
    pub sign_agreement: Option<f64>,
}

impl SummaryStats {
    fn of(values: &[f64], requested: usize, excluded: usize) -> Self {
        let grid: Vec<f64> = (0..CDF_POINTS)
            .map(|i| -CDF_RANGE + 2.0 * CDF_RANGE * i as f64 / (CDF_POINTS - 1) as f64)
            .collect();
        let nonempty = !values.is_empty();
        Self {
            requested,
            retained: values.len(),
            excluded,
            cdf: if nonempty {
                ecdf(values, &grid)
            } else {
                Vec::new()
            },
            ks: ks_distance(values).ok(),
            mean: nonempty.then(|| mean(values)),
            variance: (values.len() > 1).then(|| variance(values)),
            degenerate: values.iter().all(|v| *v == 0.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CltRun {
    pub config: CltConfig,
    pub samples: Vec<CltSample>,
    pub excluded: Vec<Exclusion>,
    pub summary: SummaryStats,
}

impl CltRun {
    /// `t,h_eff,raw,normalized`, one line per retained sample.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("t,h_eff,raw,normalized\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(s.t),
                s.h_eff_text(),
                fmt17(s.raw),
                fmt17(s.normalized)
            ));
        }
        out
    }

    /// Two-column empirical CDF.
    pub fn cdf_dat(&self) -> String {
        self.summary
            .cdf
            .iter()
            .map(|(x, f)| format!("{} {}\n", fmt17(*x), fmt17(*f)))
            .collect()
    }
}

/// Density and quantities of one parameter on `grid` cells.
fn quantities_at(
    family: &MapFamily,
    t: f64,
    phi: &Observable,
    cfg: &QuantityConfig,
) -> Result<(UnimodalMap, DensityGrid, DynQuantities)> {
    let map = family.map_at(t)?;
    let density = invariant_density(&build_ulam(&map, cfg.n)?)?;
    let q = dyn_quantities_from(&map, &density, phi, cfg)?;
    Ok((map, density, q))
}

/// One surrogate-tier draw at a fixed parameter.
#[derive(Debug, Clone, Serialize)]
pub struct SurrogateDraw {
    pub quantities: DynQuantities,
    /// `Σ_{j=1}^{N} (φ(f_t^j(c)) − R_φ(t))`.
    pub sum: f64,
    /// `sum/(σ_t√N)`, absent when `σ_t` is below [`SIGMA_THRESHOLD`].
    pub normalized: Option<f64>,
}

pub fn surrogate_draw(
    family: &MapFamily,
    t: f64,
    orbit_length: usize,
    phi: &Observable,
    grid: usize,
) -> Result<SurrogateDraw> {
    if orbit_length == 0 {
        return Err(Error::Argument("orbit length must be positive".into()));
    }
    let (map, _, q) = quantities_at(family, t, phi, &clt_quantity_config(grid))?;
    let sum = birkhoff_surrogate(&map, orbit_length, phi, q.response);
    let normalized =
        (q.sigma >= SIGMA_THRESHOLD).then(|| sum / (q.sigma * (orbit_length as f64).sqrt()));
    Ok(SurrogateDraw {
        quantities: q,
        sum,
        normalized,
    })
}

enum Outcome {
    Kept(CltSample, Option<f64>),
    Dropped(Exclusion),
}

fn assemble(config: &CltConfig, outcomes: Vec<Outcome>) -> CltRun {
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    let mut partner = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Kept(s, p) => {
                if let Some(p) = p {
                    partner.push((s.raw, p));
                }
                samples.push(s);
            }
            Outcome::Dropped(e) => excluded.push(e),
        }
    }
    let values: Vec<f64> = samples.iter().map(|s| s.normalized).collect();
    let mut summary = SummaryStats::of(&values, config.samples, excluded.len());
    if partner.len() > 1 {
        let (a, b): (Vec<f64>, Vec<f64>) = partner.iter().copied().unzip();
        summary.spearman = Some(spearman(&a, &b));
        let agree = partner
            .iter()
            .filter(|(x, y)| x.signum() == y.signum())
            .count();
        summary.sign_agreement = Some(agree as f64 / partner.len() as f64);
    }
    CltRun {
        config: config.clone(),
        samples,
        excluded,
        summary,
    }
}

/// Surrogate tier: `(1/(σ_t√N)) Σ_{j=1}^{N} (φ(f_t^j(c)) − R_φ(t))` over
/// uniform parameters, with effective `−log h = N·L_t`.
pub fn run_surrogate_clt(config: &CltConfig) -> Result<CltRun> {
    let family = config.validate()?;
    let phi = config.observable()?;
    if config.orbit_length == 0 {
        return Err(Error::Argument("orbit length must be positive".into()));
    }
    let outcomes = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let t = sample_parameter(config.seed, i, config.window);
            let d = surrogate_draw(&family, t, config.orbit_length, &phi, config.grid)?;
            Ok(match d.normalized {
                Some(normalized) => Outcome::Kept(
                    CltSample {
                        index: i,
                        t,
                        h: None,
                        neg_log_h: config.orbit_length as f64 * d.quantities.l,
                        raw: d.sum,
                        normalized,
                    },
                    None,
                ),
                None => Outcome::Dropped(Exclusion {
                    index: i,
                    t,
                    sigma: d.quantities.sigma,
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(config, outcomes))
}

/// Direct tier: Newton quotients on `direct_grid` cells normalized by
/// `Ψ(t)√(−log|h|)`, paired with `S_t·J_t` times the surrogate sum of length
/// `N(t,h)`.
///
/// A degenerate observable (`σ_t = 0`) keeps its samples with normalized
/// value 0; samples with `0 < σ_t <` [`SIGMA_THRESHOLD`] are excluded.
pub fn run_direct_clt(config: &CltConfig) -> Result<CltRun> {
    let family = config.validate()?;
    let phi = config.observable()?;
    let h = config.h;
    let (a, b) = config.window;
    let window = if h > 0.0 { (a, b - h) } else { (a - h, b) };
    let qcfg = config.quantity_config();
    let neg_log_h = -h.abs().ln();
    let outcomes = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let t = sample_parameter(config.seed, i, window);
            let (map, _, q) = quantities_at(&family, t, &phi, &qcfg)?;
            if q.sigma > 0.0 && q.sigma < SIGMA_THRESHOLD {
                return Ok(Outcome::Dropped(Exclusion {
                    index: i,
                    t,
                    sigma: q.sigma,
                }));
            }
            let fine = invariant_density(&build_ulam(&map, config.direct_grid)?)?;
            let raw = newton_quotient_from(
                &family,
                t,
                h,
                &phi,
                config.direct_grid,
                response(&fine, &phi),
            )?;
            let normalized = if q.sigma == 0.0 {
                0.0
            } else {
                raw / (q.psi * neg_log_h.sqrt())
            };
            let n = n_of(&map, h)?;
            let surrogate = q.s * q.j * birkhoff_surrogate(&map, n, &phi, q.response);
            Ok(Outcome::Kept(
                CltSample {
                    index: i,
                    t,
                    h: Some(h),
                    neg_log_h,
                    raw,
                    normalized,
                },
                Some(surrogate),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(config, outcomes))
}

/// Per-`h` variances and the regression of variance on `−log h`.
pub fn variance_regression(batches: &[(f64, Vec<f64>)]) -> Result<(Vec<VarianceRow>, LinearFit)> {
    let mut distinct: Vec<f64> = batches.iter().map(|b| b.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Argument(format!(
            "variance scaling needs at least 4 distinct steps, got {}",
            distinct.len()
        )));
    }
    let mut rows = Vec::with_capacity(batches.len());
    for (x, values) in batches {
        if values.len() < 2 {
            return Err(Error::Argument(format!(
                "fewer than 2 samples at −log h = {x}"
            )));
        }
        rows.push(VarianceRow {
            neg_log_h: *x,
            retained: values.len(),
            mean: mean(values),
            variance: variance(values),
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.neg_log_h, r.variance)).collect();
    Ok((rows, linear_regression(&points)))
}

/// `Var_t[quotient/Ψ(t)]` per effective step, where the surrogate quotient is
/// `S_t·J_t·Σ_{j=1}^{N(t,h)} φ̂(f_t^j(c))`. Parameters are shared across
/// steps.
pub fn variance_scaling(config: &CltConfig) -> Result<CltRun> {
    let family = config.validate()?;
    let phi = config.observable()?;
    let schedule = &config.neg_log_h;
    if schedule.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::Argument("−log h values must be positive".into()));
    }
    let mut distinct = schedule.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Argument(format!(
            "variance scaling needs at least 4 distinct steps, got {}",
            distinct.len()
        )));
    }
    let qcfg = config.quantity_config();
    let per_sample = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let t = sample_parameter(config.seed, i, config.window);
            let (map, _, q) = quantities_at(&family, t, &phi, &qcfg)?;
            if q.sigma < SIGMA_THRESHOLD {
                return Ok(Err(Exclusion {
                    index: i,
                    t,
                    sigma: q.sigma,
                }));
            }
            let lengths = schedule
                .iter()
                .map(|x| n_of_log(&map, *x))
                .collect::<Result<Vec<_>>>()?;
            let longest = lengths.iter().copied().max().unwrap_or(0).max(1);
            let prefixes = surrogate_prefixes(&map, longest, &phi, q.response, OrbitMode::Plain)?;
            let rows: Vec<CltSample> = schedule
                .iter()
                .zip(&lengths)
                .map(|(x, &n)| {
                    let sum = if n == 0 { 0.0 } else { prefixes[n - 1] };
                    let raw = q.s * q.j * sum;
                    CltSample {
                        index: i,
                        t,
                        h: None,
                        neg_log_h: *x,
                        raw,
                        normalized: raw / q.psi,
                    }
                })
                .collect();
            Ok(Ok(rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    for r in per_sample {
        match r {
            Ok(rows) => samples.extend(rows),
            Err(e) => excluded.push(e),
        }
    }
    let batches: Vec<(f64, Vec<f64>)> = schedule
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let values = samples
                .iter()
                .skip(k)
                .step_by(schedule.len())
                .map(|s| s.normalized)
                .collect();
            (*x, values)
        })
        .collect();
    let (rows, fit) = variance_regression(&batches)?;
    let all: Vec<f64> = samples.iter().map(|s| s.normalized).collect();
    let mut summary = SummaryStats::of(&all, config.samples, excluded.len());
    summary.retained = config.samples - excluded.len();
    summary.ks = None;
    summary.variance_table = rows;
    summary.fit = Some(fit);
    Ok(CltRun {
        config: config.clone(),
        samples,
        excluded,
        summary,
    })
}

/// One step of [`modulus_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct ModulusRow {
    pub h: f64,
    pub l1: f64,
    /// `‖ρ_{t+h} − ρ_t‖₁ / (|h|(log(1/|h|) + 1))`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusTable {
    pub t: f64,
    pub n: usize,
    pub rows: Vec<ModulusRow>,
    pub max_over_min: f64,
}

/// Smallest step the modulus table accepts.
pub const MODULUS_MIN_STEP: f64 = 1e-3;

pub fn modulus_experiment(
    family: &MapFamily,
    t: f64,
    steps: &[f64],
    n: usize,
) -> Result<ModulusTable> {
    if steps.is_empty() {
        return Err(Error::Argument("empty step schedule".into()));
    }
    for &h in steps {
        if h == 0.0 || !h.is_finite() {
            return Err(Error::Argument(format!(
                "step {h} must be finite and nonzero"
            )));
        }
        if h.abs() < MODULUS_MIN_STEP * (1.0 - 1e-12) {
            return Err(Error::Argument(format!(
                "|h| = {} is below the resolvable {MODULUS_MIN_STEP}",
                h.abs()
            )));
        }
        family.map_at(t + h)?;
    }
    let base = invariant_density(&build_ulam(&family.map_at(t)?, n)?)?;
    let rows = steps
        .par_iter()
        .map(|&h| {
            let shifted = invariant_density(&build_ulam(&family.map_at(t + h)?, n)?)?;
            let l1 = density_l1_distance(&shifted, &base)?;
            let a = h.abs();
            Ok(ModulusRow {
                h,
                l1,
                ratio: l1 / (a * ((1.0 / a).ln() + 1.0)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(ModulusTable {
        t,
        n,
        rows,
        max_over_min: max / min,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzRow {
    pub orbit_length: usize,
    pub max_abs: f64,
    /// Parameter attaining the maximum.
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzProbe {
    pub rows: Vec<LipschitzRow>,
    /// Last maximum over first maximum.
    pub growth: f64,
    /// `√(N_max/N_min)`.
    pub expected_growth: f64,
    pub monotone: bool,
    /// Growth within 50% of the expected value.
    pub within_tolerance: bool,
    pub degenerate: bool,
}

/// Summarizes `quotients[k][i]`, the raw quotient of parameter `ts[i]` at
/// orbit length `lengths[k]`.
pub fn lipschitz_from_quotients(
    lengths: &[usize],
    ts: &[f64],
    quotients: &[Vec<f64>],
) -> Result<LipschitzProbe> {
    if lengths.len() < 2 || quotients.len() != lengths.len() {
        return Err(Error::Argument(
            "need at least two orbit lengths with quotients".into(),
        ));
    }
    let rows: Vec<LipschitzRow> = lengths
        .iter()
        .zip(quotients)
        .map(|(&n, q)| {
            let (k, m) = q
                .iter()
                .map(|v| v.abs())
                .enumerate()
                .fold(
                    (0, 0.0),
                    |best, (k, v)| if v > best.1 { (k, v) } else { best },
                );
            LipschitzRow {
                orbit_length: n,
                max_abs: m,
                t: ts.get(k).copied().unwrap_or(f64::NAN),
            }
        })
        .collect();
    let first = rows[0].max_abs;
    let last = rows[rows.len() - 1].max_abs;
    let degenerate = rows.iter().all(|r| r.max_abs == 0.0);
    let growth = if degenerate { 0.0 } else { last / first };
    let expected_growth = (lengths[lengths.len() - 1] as f64 / lengths[0] as f64).sqrt();
    Ok(LipschitzProbe {
        monotone: rows.windows(2).all(|w| w[1].max_abs >= w[0].max_abs),
        within_tolerance: !degenerate && (growth / expected_growth - 1.0).abs() <= 0.5,
        growth,
        expected_growth,
        degenerate,
        rows,
    })
}

/// Maxima over the parameter sample of `|S_t·J_t·Σ_{j=1}^{N} φ̂(f_t^j(c))|`
/// for increasing `N`, using nested prefixes of one orbit per parameter.
pub fn lipschitz_probe(config: &CltConfig) -> Result<LipschitzProbe> {
    let family = config.validate()?;
    let phi = config.observable()?;
    let lengths = &config.orbit_lengths;
    if lengths.is_empty() || lengths.contains(&0) || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "orbit lengths must be positive and increasing".into(),
        ));
    }
    let longest = *lengths.last().unwrap();
    let per_sample = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let t = sample_parameter(config.seed, i, config.window);
            let map = family.map_at(t)?;
            let density = invariant_density(&build_ulam(&map, config.grid)?)?;
            let r = response(&density, &phi);
            let scale = jump_s(&map, &density)? * transversality_j(&map, 1e-12)?.value;
            let prefixes = surrogate_prefixes(&map, longest, &phi, r, OrbitMode::Plain)?;
            Ok((
                t,
                lengths
                    .iter()
                    .map(|&n| scale * prefixes[n - 1])
                    .collect::<Vec<_>>(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let quotients: Vec<Vec<f64>> = (0..lengths.len())
        .map(|k| per_sample.iter().map(|p| p.1[k]).collect())
        .collect();
    lipschitz_from_quotients(lengths, &ts, &quotients)
}

/// One parameter of [`wild_check`].
#[derive(Debug, Clone, Serialize)]
pub struct WildCheckRow {
    pub index: usize,
    pub t: f64,
    pub wild: f64,
    pub s1: f64,
    pub j: f64,
    pub n3: usize,
    pub n_of: usize,
    pub surrogate: f64,
    /// `wild/(s₁J) − Σ_{j=1}^{N₃} φ̂(f_t^j(c))`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WildCheck {
    pub h: f64,
    /// `3·log(log(1/|h|)) + 10`.
    pub bound: f64,
    pub rows: Vec<WildCheckRow>,
    pub within_bound: f64,
    pub exact_zero: f64,
}

/// Compares the wild part with the Birkhoff surrogate truncated at `N₃`.
pub fn wild_check(config: &CltConfig) -> Result<WildCheck> {
    let family = config.validate()?;
    let phi = config.observable()?;
    let h = config.h;
    if !(h.abs() < 1.0 / std::f64::consts::E) || h == 0.0 {
        return Err(Error::Argument(format!(
            "step {h} too large for the log-log bound"
        )));
    }
    let bound = 3.0 * (1.0 / h.abs()).ln().ln() + 10.0;
    let rows = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let t = sample_parameter(config.seed, i, config.window);
            let map = family.map_at(t)?;
            let density = invariant_density(&build_ulam(&map, config.grid)?)?;
            let n = n_of(&map, h)?;
            let w = wild_integral(&family, t, h, &phi, &density, None, 4 * n + 100)?;
            let j = transversality_j(&map, 1e-12)?.value;
            let surrogate = birkhoff_surrogate(&map, w.n3.n3, &phi, w.response);
            Ok(WildCheckRow {
                index: i,
                t,
                wild: w.value,
                s1: w.s1,
                j,
                n3: w.n3.n3,
                n_of: n,
                surrogate,
                residual: w.value / (w.s1 * j) - surrogate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |p: &dyn Fn(&WildCheckRow) -> bool| {
        rows.iter().filter(|r| p(r)).count() as f64 / rows.len() as f64
    };
    Ok(WildCheck {
        h,
        bound,
        within_bound: count(&|r| r.residual.abs() <= bound),
        exact_zero: count(&|r| r.residual == 0.0),
        rows,
    })
}
