//! Ulam discretization of the transfer operator
//! `(Lψ)(x) = Σ_{f(y)=x} ψ(y)/|Df(y)|` on a uniform grid of `[0,1]`.
//!
//! Column `j` of the [`UlamMatrix`] holds the fractions of cell `j` whose
//! image lands in each cell `i`, so the matrix is column-stochastic and acts
//! on vectors of cell-average densities. The grid is uniform on `[0,1]`
//! (the support `K(t)` is only metadata), and `n` is even so that `c = 1/2`
//! falls on a cell boundary for the tent family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{Side, UnimodalMap};
use crate::report::fmt17;
use crate::stats::{linear_regression, LinearFit};

/// Sparse column-stochastic Ulam matrix (compressed by columns).
#[derive(Debug, Clone)]
pub struct UlamMatrix {
    n: usize,
    t: f64,
    support: (f64, f64),
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    weights: Vec<f64>,
}

/// Smallest grid accepted by [`build_ulam`].
pub const MIN_CELLS: usize = 16;

/// Builds the Ulam matrix of `f_t` on `n` uniform cells.
///
/// Each cell is cut at the preimages of the grid boundaries (closed form for
/// the tent family, monotone bisection for custom branches); the fraction of
/// the cell between consecutive cuts is credited to the cell its image lands
/// in. Fractions of a column therefore telescope to one.
pub fn build_ulam(map: &UnimodalMap, n: usize) -> Result<UlamMatrix> {
    if n < MIN_CELLS {
        return Err(Error::Argument(format!(
            "grid needs at least {MIN_CELLS} cells, got {n}"
        )));
    }
    if !n.is_multiple_of(2) {
        return Err(Error::Argument(format!("cell count {n} must be even")));
    }
    if n > u32::MAX as usize {
        return Err(Error::Resource(format!("cell count {n} too large")));
    }
    if !(map.lambda() > 1.0) {
        return Err(Error::Construction(format!(
            "map at t={} is not expanding",
            map.t()
        )));
    }
    let c = map.critical_point();
    let nf = n as f64;
    let width = 1.0 / nf;
    let per_col = 2 * (map.upper_bound().ceil() as usize + 2);
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut rows = Vec::with_capacity(n * per_col / 2);
    let mut weights = Vec::with_capacity(n * per_col / 2);
    col_ptr.push(0);

    let mut cuts: Vec<f64> = Vec::with_capacity(per_col);
    let mut col: Vec<(u32, f64)> = Vec::with_capacity(per_col);

    for j in 0..n {
        let a = j as f64 * width;
        let b = (j + 1) as f64 * width;
        col.clear();
        let pieces: [(f64, f64, Side); 2];
        let pieces = if a < c && c < b {
            pieces = [(a, c, Side::Left), (c, b, Side::Right)];
            &pieces[..]
        } else {
            pieces = [(a, b, map.side_of(0.5 * (a + b))), (0.0, 0.0, Side::Left)];
            &pieces[..1]
        };
        for &(p, q, side) in pieces {
            let yp = map.branch_value(side, p);
            let yq = map.branch_value(side, q);
            let (lo, hi) = (yp.min(yq), yp.max(yq));
            cuts.clear();
            cuts.push(p);
            cuts.push(q);
            let first = (lo * nf).floor() as i64 + 1;
            let last = (hi * nf).ceil() as i64 - 1;
            for k in first.max(1)..=last.min(n as i64 - 1) {
                let y = k as f64 * width;
                if y > lo && y < hi {
                    if let Some(x) = map.preimage(side, y) {
                        cuts.push(x.clamp(p, q));
                    }
                }
            }
            cuts.sort_by(|u, v| u.partial_cmp(v).unwrap());
            for w in cuts.windows(2) {
                let len = w[1] - w[0];
                if len <= 0.0 {
                    continue;
                }
                let y = map.branch_value(side, 0.5 * (w[0] + w[1]));
                let row = ((y * nf).floor().max(0.0) as usize).min(n - 1) as u32;
                match col.iter_mut().find(|(r, _)| *r == row) {
                    Some(entry) => entry.1 += len * nf,
                    None => col.push((row, len * nf)),
                }
            }
        }
        let total: f64 = col.iter().map(|(_, w)| w).sum();
        col.sort_by_key(|(r, _)| *r);
        for &(r, w) in &col {
            rows.push(r);
            weights.push(w / total);
        }
        col_ptr.push(rows.len());
    }

    Ok(UlamMatrix {
        n,
        t: map.t(),
        support: map.support(),
        col_ptr,
        rows,
        weights,
    })
}

impl UlamMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// Entries `(row, weight)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.rows[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&r, &w)| (r as usize, w))
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.column(j).map(|(_, w)| w).sum()
    }

    /// `out = A·g` without allocation.
    pub fn apply_into(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &gj) in g.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.rows[k] as usize] += self.weights[k] * gj;
            }
        }
    }

    /// `A·g`.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.n {
            return Err(Error::Argument(format!(
                "vector length {} does not match grid size {}",
                g.len(),
                self.n
            )));
        }
        let mut out = vec![0.0; self.n];
        self.apply_into(g, &mut out);
        Ok(out)
    }

    /// Discrete total variation of column `j` viewed as a function of the row.
    pub fn column_variation(&self, j: usize) -> f64 {
        let mut prev_row = None;
        let mut prev_w = 0.0;
        let mut var = 0.0;
        for (r, w) in self.column(j) {
            match prev_row {
                Some(p) if r == p + 1 => var += (w - prev_w).abs(),
                Some(_) => var += prev_w + w,
                None => var += if r > 0 { w } else { 0.0 },
            }
            prev_row = Some(r);
            prev_w = w;
        }
        if let Some(p) = prev_row {
            if p + 1 < self.n {
                var += prev_w;
            }
        }
        var
    }

    /// Upper bound `Σ_j |g_j|·var(column j)` for the variation of `A·g`.
    pub fn variation_bound(&self, g: &[f64]) -> f64 {
        g.iter()
            .enumerate()
            .map(|(j, gj)| gj.abs() * self.column_variation(j))
            .sum()
    }
}

/// Cell-average density on a uniform grid of `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    values: Vec<f64>,
    t: f64,
    support: (f64, f64),
}

impl DensityGrid {
    pub fn new(values: Vec<f64>, t: f64, support: (f64, f64)) -> Self {
        Self { values, t, support }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `K(t) = [f_t²(c), f_t(c)]`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn left_edge(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n() as f64
    }

    /// Value of the cell containing `x` (the right cell on boundaries).
    pub fn value_at(&self, x: f64) -> f64 {
        let i = ((x * self.n() as f64).floor().max(0.0) as usize).min(self.n() - 1);
        self.values[i]
    }

    /// Mean over cells; equals the total mass under normalized Lebesgue.
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Mass carried by cells that do not meet the support interval.
    pub fn mass_outside_support(&self) -> f64 {
        let (lo, hi) = self.support;
        let w = self.cell_width();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let a = *i as f64 * w;
                a + w <= lo || a >= hi
            })
            .map(|(_, v)| v.abs() * w)
            .sum()
    }

    /// `cell_index,left_edge,value` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n() * 56 + 32);
        out.push_str("cell_index,left_edge,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", fmt17(self.left_edge(i)), fmt17(*v)));
        }
        out
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// L¹ norm under normalized Lebesgue measure: mean of absolute values.
pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Discrete total variation `Σ |g_{i+1} − g_i|`.
pub fn variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Discrete BV norm: variation plus L¹ norm.
pub fn bv_norm(v: &[f64]) -> f64 {
    variation(v) + l1_norm(v)
}

/// Stopping rule for [`invariant_density_with`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerOptions {
    /// Tolerance on the L¹ change between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Diagnostics of a converged power iteration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerReport {
    pub iterations: usize,
    pub last_change: f64,
}

/// Invariant density with the default stopping rule.
pub fn invariant_density(matrix: &UlamMatrix) -> Result<DensityGrid> {
    invariant_density_with(matrix, PowerOptions::default()).map(|(d, _)| d)
}

/// Power iteration from the uniform density, renormalized to mean one.
pub fn invariant_density_with(
    matrix: &UlamMatrix,
    opts: PowerOptions,
) -> Result<(DensityGrid, PowerReport)> {
    let n = matrix.n();
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        matrix.apply_into(&x, &mut y);
        let m = mean(&y);
        let mut diff = 0.0;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi /= m;
            diff += (*yi - xi).abs();
        }
        change = diff / n as f64;
        std::mem::swap(&mut x, &mut y);
        if change < opts.tol {
            return Ok((
                DensityGrid::new(x, matrix.t(), matrix.support()),
                PowerReport {
                    iterations: it,
                    last_change: change,
                },
            ));
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        residual: change,
    })
}

/// `A·g` (alias kept for symmetry with the other operator routines).
pub fn apply_transfer(matrix: &UlamMatrix, g: &[f64]) -> Result<Vec<f64>> {
    matrix.apply(g)
}

/// Mean absolute cellwise difference of two densities on the same grid.
pub fn density_l1_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Argument(format!(
            "grid mismatch: {} vs {} cells",
            a.n(),
            b.n()
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.n() as f64)
}

/// `g − ρ·∫g dm`: projection onto zero-mean functions along `ρ`.
pub fn project_zero_mean(density: &DensityGrid, g: &[f64]) -> Vec<f64> {
    let m = mean(g);
    g.iter()
        .zip(density.values())
        .map(|(gi, r)| gi - m * r)
        .collect()
}

/// Output of [`resolvent_zero_mean`].
#[derive(Debug, Clone)]
pub struct Resolvent {
    /// `r ≈ (I − A)⁻¹ Π g`.
    pub values: Vec<f64>,
    /// Number of Neumann terms summed.
    pub terms: usize,
    /// Empirical contraction ratio over the last terms.
    pub contraction: f64,
    /// `‖(I − A) r − Π g‖₁`, which equals the norm of the first omitted term.
    pub residual: f64,
    /// Geometric bound on `‖r − (I − A)⁻¹ Π g‖₁`.
    pub tail_bound: f64,
}

const RATIO_WINDOW: usize = 10;
const RESOLVENT_BURN_IN: usize = 64;
const RESOLVENT_MAX_TERMS: usize = 200_000;

/// Neumann summation `Σ_i Aⁱ Π g` until both the defining residual and the
/// geometric tail estimate drop below `tol`.
pub fn resolvent_zero_mean(
    matrix: &UlamMatrix,
    density: &DensityGrid,
    g: &[f64],
    tol: f64,
) -> Result<Resolvent> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    if g.len() != matrix.n() || density.n() != matrix.n() {
        return Err(Error::Argument("resolvent input length mismatch".into()));
    }
    let n = matrix.n();
    let mut term = project_zero_mean(density, g);
    let mut sum = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut norms: Vec<f64> = vec![l1_norm(&term)];
    if norms[0] == 0.0 {
        return Ok(Resolvent {
            values: sum,
            terms: 0,
            contraction: 0.0,
            residual: 0.0,
            tail_bound: 0.0,
        });
    }
    let mut ratio = 0.0;
    for k in 1..=RESOLVENT_MAX_TERMS {
        for (s, v) in sum.iter_mut().zip(&term) {
            *s += v;
        }
        matrix.apply_into(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        let norm = l1_norm(&term);
        norms.push(norm);
        if k > RATIO_WINDOW {
            let old = norms[k - RATIO_WINDOW];
            ratio = if old > 0.0 {
                (norm / old).powf(1.0 / RATIO_WINDOW as f64)
            } else {
                0.0
            };
        }
        if k >= RESOLVENT_BURN_IN && ratio >= 1.0 && norm > tol {
            return Err(Error::Spectral { ratio });
        }
        let tail = if ratio < 1.0 {
            norm * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        if norm <= tol && (tail <= tol || norm == 0.0) {
            return Ok(Resolvent {
                values: sum,
                terms: k,
                contraction: ratio,
                residual: norm,
                tail_bound: tail.min(f64::MAX),
            });
        }
    }
    Err(Error::Spectral { ratio })
}

/// One grid level of [`resolvent_spike_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct ResolventRow {
    pub n: usize,
    /// `log(‖Πg‖_BV / ‖Πg‖₁)`.
    pub log_ratio: f64,
    pub input_l1: f64,
    pub resolvent_l1: f64,
    pub terms: usize,
    pub residual: f64,
}

/// Resolvent norms of a single-cell spike across grid sizes, fitted against
/// `C₁·log(‖Πg‖_BV/‖Πg‖₁) + C₂`.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventProbe {
    pub location: f64,
    pub rows: Vec<ResolventRow>,
    pub fit: LinearFit,
    /// Fitted slopes on the lower and upper halves of the sweep.
    pub lower_slope: f64,
    pub upper_slope: f64,
    /// Upper-half slope above 1.5 times the lower-half slope.
    pub superlogarithmic: bool,
}

/// Feeds the unit-mass spike on the cell containing `location` through
/// [`resolvent_zero_mean`] for every grid size in `sizes`.
pub fn resolvent_spike_probe(
    map: &UnimodalMap,
    sizes: &[usize],
    location: f64,
    tol: f64,
) -> Result<ResolventProbe> {
    if sizes.len() < 4 {
        return Err(Error::Argument(
            "resolvent probe needs at least 4 grid sizes".into(),
        ));
    }
    if !(0.0..1.0).contains(&location) {
        return Err(Error::Domain(format!(
            "spike location {location} outside [0,1)"
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let matrix = build_ulam(map, n)?;
        let density = invariant_density(&matrix)?;
        let mut g = vec![0.0; n];
        g[((location * n as f64) as usize).min(n - 1)] = n as f64;
        let pg = project_zero_mean(&density, &g);
        let input_l1 = l1_norm(&pg);
        let r = resolvent_zero_mean(&matrix, &density, &g, tol)?;
        rows.push(ResolventRow {
            n,
            log_ratio: (bv_norm(&pg) / input_l1).ln(),
            input_l1,
            resolvent_l1: l1_norm(&r.values),
            terms: r.terms,
            residual: r.residual,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.log_ratio, r.resolvent_l1)).collect();
    let half = points.len() / 2;
    let lower_slope = linear_regression(&points[..=half]).slope;
    let upper_slope = linear_regression(&points[half..]).slope;
    Ok(ResolventProbe {
        location,
        fit: linear_regression(&points),
        superlogarithmic: upper_slope > 1.5 * lower_slope.max(0.0),
        lower_slope,
        upper_slope,
        rows,
    })
}

/// One Heaviside jump `s·H_a` of the saltus decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaltusEntry {
    /// `f_t^k(c)`.
    pub location: f64,
    /// `s_k(t)`.
    pub weight: f64,
}

/// Jump part of the invariant density: `Σ_k s_k H_{f^k(c)}` with
/// `H_a = −1_{[a,1]}`.
#[derive(Debug, Clone, Serialize)]
pub struct SaltusModel {
    pub entries: Vec<SaltusEntry>,
    /// Grid estimate of `ρ_t(c)`.
    pub density_at_c: f64,
    /// Set when the two cells adjacent to `c` disagree by more than
    /// [`C_JUMP_TOLERANCE`] relative.
    pub discontinuity_at_c: bool,
}

/// Relative disagreement of the cells adjacent to `c` that is reported as a
/// discontinuity.
pub const C_JUMP_TOLERANCE: f64 = 0.05;

/// Smallest `K` with `λ^{-K} < 1e-12`.
pub fn default_saltus_truncation(lambda: f64) -> usize {
    let k = (12.0 * std::f64::consts::LN_10 / lambda.ln()).floor() as usize + 1;
    k.max(1)
}

/// Grid estimate of `ρ_t(c)`: average of the two adjacent cells when `c` is
/// a cell boundary, the containing cell otherwise. The flag reports a
/// visible jump between the adjacent cells.
pub fn density_at_critical_point(map: &UnimodalMap, density: &DensityGrid) -> (f64, bool) {
    let nf = density.n() as f64;
    let pos = map.critical_point() * nf;
    let k = pos.round();
    if (pos - k).abs() < 1e-9 && k >= 1.0 && (k as usize) < density.n() {
        let left = density.values()[k as usize - 1];
        let right = density.values()[k as usize];
        let avg = 0.5 * (left + right);
        let flagged = (left - right).abs() > C_JUMP_TOLERANCE * avg.abs().max(1e-300);
        (avg, flagged)
    } else {
        (density.value_at(map.critical_point()), false)
    }
}

/// `s₁ = ρ(c)(1/|Df(c−)| + 1/|Df(c+)|)`, `s_k = s₁ / Df^{k−1}(f(c))` at the
/// locations `f^k(c)`, `k = 1..=k_trunc`.
pub fn saltus_weights(
    map: &UnimodalMap,
    density: &DensityGrid,
    k_trunc: Option<usize>,
) -> Result<SaltusModel> {
    let k_trunc = k_trunc.unwrap_or_else(|| default_saltus_truncation(map.lambda()));
    if k_trunc == 0 {
        return Err(Error::Argument(
            "saltus truncation must be at least 1".into(),
        ));
    }
    let c = map.critical_point();
    let (rho_c, flagged) = density_at_critical_point(map, density);
    let s1 = rho_c
        * (1.0 / map.slope_on(Side::Left, c).abs() + 1.0 / map.slope_on(Side::Right, c).abs());
    let orbit = map.critical_orbit(k_trunc);
    let mut entries = Vec::with_capacity(k_trunc);
    let mut deriv = 1.0;
    for (k, &x) in orbit.iter().enumerate() {
        entries.push(SaltusEntry {
            location: x,
            weight: s1 / deriv,
        });
        deriv *= map.slope(x);
        let _ = k;
    }
    Ok(SaltusModel {
        entries,
        density_at_c: rho_c,
        discontinuity_at_c: flagged,
    })
}

impl SaltusModel {
    pub fn s1(&self) -> f64 {
        self.entries[0].weight
    }

    /// Cell averages of `Σ_k s_k H_{x_k}` on an `n`-cell grid.
    pub fn step_function(&self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        let mut out = vec![0.0; n];
        // Accumulate as a difference array: H_a contributes −s on [a, 1].
        let mut diff = vec![0.0; n + 1];
        for e in &self.entries {
            let pos = (e.location * nf).clamp(0.0, nf);
            let i = (pos.floor() as usize).min(n - 1);
            let frac_right = (i as f64 + 1.0 - pos).clamp(0.0, 1.0);
            out[i] -= e.weight * frac_right;
            diff[i + 1] -= e.weight;
        }
        let mut acc = 0.0;
        for i in 0..n {
            acc += diff[i];
            out[i] += acc;
        }
        out
    }
}

/// Regularity of `ρ − Σ s_k H_{x_k}` on the grid.
#[derive(Debug, Clone, Serialize)]
pub struct SaltusRemainder {
    pub k_trunc: usize,
    /// L¹ norm of the remainder.
    pub l1: f64,
    /// Variation of the remainder.
    pub variation: f64,
    /// Variation of the finite-difference derivative of the remainder.
    pub derivative_variation: f64,
}

/// Removes the saltus steps from the density and measures what is left.
pub fn saltus_remainder(density: &DensityGrid, saltus: &SaltusModel) -> SaltusRemainder {
    let n = density.n();
    let steps = saltus.step_function(n);
    let rem: Vec<f64> = density
        .values()
        .iter()
        .zip(&steps)
        .map(|(r, s)| r - s)
        .collect();
    let nf = n as f64;
    let deriv: Vec<f64> = rem.windows(2).map(|w| (w[1] - w[0]) * nf).collect();
    SaltusRemainder {
        k_trunc: saltus.entries.len(),
        l1: l1_norm(&rem),
        variation: variation(&rem),
        derivative_variation: variation(&deriv),
    }
}

/// Fitted Lasota–Yorke constants `|Aᵏg|_BV ≤ C₆βᵏ|g|_BV + C₅|g|_{L¹}`.
#[derive(Debug, Clone, Serialize)]
pub struct LasotaYorkeReport {
    pub c6: f64,
    pub beta: f64,
    pub c5: f64,
    /// Minimum over trials and iterates of `bound − |Aᵏg|_BV` (nonnegative
    /// when the fitted constants dominate every observation).
    pub worst_margin: f64,
    pub trials: usize,
    pub iterates: usize,
    /// `Σ_j var(column j)`, a bound on `var(A·1)`.
    pub ones_variation_bound: f64,
}

/// Iterates used by the Lasota–Yorke probe.
pub const LY_ITERATES: usize = 40;

/// Measures BV growth of random spikes and steps under iteration and fits
/// Lasota–Yorke constants to the observed envelope.
pub fn lasota_yorke_probe(
    matrix: &UlamMatrix,
    trials: usize,
    seed: u64,
) -> Result<LasotaYorkeReport> {
    if trials < 10 {
        return Err(Error::Argument(format!(
            "need at least 10 trials, got {trials}"
        )));
    }
    let n = matrix.n();
    let nf = n as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // bv[trial][k], l1 of the input
    let mut histories = Vec::with_capacity(trials);
    let mut g = vec![0.0; n];
    let mut next = vec![0.0; n];
    for trial in 0..trials {
        g.iter_mut().for_each(|v| *v = 0.0);
        if trial % 2 == 0 {
            let j = rng.random_range(0..n);
            g[j] = nf;
        } else {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let (a, b) = (a.min(b), a.max(b) + 1);
            for v in &mut g[a..b] {
                *v = 1.0;
            }
        }
        let l1 = l1_norm(&g);
        let mut bvs = Vec::with_capacity(LY_ITERATES + 1);
        bvs.push(bv_norm(&g));
        for _ in 0..LY_ITERATES {
            matrix.apply_into(&g, &mut next);
            std::mem::swap(&mut g, &mut next);
            bvs.push(bv_norm(&g));
        }
        histories.push((l1, bvs));
    }
    let c5 = histories
        .iter()
        .map(|(l1, bvs)| bvs[LY_ITERATES] / l1)
        .fold(0.0, f64::max);
    let excess: Vec<f64> = (0..=LY_ITERATES)
        .map(|k| {
            histories
                .iter()
                .map(|(l1, bvs)| (bvs[k] - c5 * l1) / bvs[0])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let pts: Vec<(f64, f64)> = excess
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, e)| **e > 0.0)
        .map(|(k, e)| (k as f64, e.ln()))
        .collect();
    let beta = if pts.len() >= 2 {
        crate::stats::linear_regression(&pts)
            .slope
            .exp()
            .min(1.0 - 1e-12)
    } else {
        0.5
    };
    let c6 = excess
        .iter()
        .enumerate()
        .map(|(k, e)| e / beta.powi(k as i32))
        .fold(1.0, f64::max);
    let worst_margin = histories
        .iter()
        .flat_map(|(l1, bvs)| {
            bvs.iter()
                .enumerate()
                .map(move |(k, bv)| c6 * beta.powi(k as i32) * bvs[0] + c5 * l1 - bv)
        })
        .fold(f64::INFINITY, f64::min);
    let ones_variation_bound = (0..n).map(|j| matrix.column_variation(j)).sum();
    Ok(LasotaYorkeReport {
        c6,
        beta,
        c5,
        worst_margin,
        trials,
        iterates: LY_ITERATES,
        ones_variation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::test_families::bent_tent;
    use crate::maps::MapFamily;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn tent_map(t: f64) -> UnimodalMap {
        MapFamily::tent(1.01, 2.0).unwrap().map_at(t).unwrap()
    }

    fn density(t: f64, n: usize) -> (UlamMatrix, DensityGrid) {
        let a = build_ulam(&tent_map(t), n).unwrap();
        let d = invariant_density(&a).unwrap();
        (a, d)
    }

    #[test]
    fn full_tent_columns_split_in_halves() {
        let a = build_ulam(&tent_map(2.0), 16).unwrap();
        for j in 0..16 {
            let col: Vec<_> = a.column(j).collect();
            assert_eq!(col.len(), 2, "column {j}: {col:?}");
            for (_, w) in col {
                assert_abs_diff_eq!(w, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn grid_preconditions() {
        let m = tent_map(1.5);
        assert!(matches!(build_ulam(&m, 8), Err(Error::Argument(_))));
        assert!(matches!(build_ulam(&m, 33), Err(Error::Argument(_))));
    }

    #[test]
    fn columns_are_stochastic() {
        for (map, n) in [
            (tent_map(1.5), 1000),
            (tent_map(1.93), 1024),
            (bent_tent(0.2, 1.5, 1.9).map_at(1.7).unwrap(), 998),
        ] {
            let a = build_ulam(&map, n).unwrap();
            for j in 0..n {
                assert!((a.column_sum(j) - 1.0).abs() <= 1e-14);
                let rows: Vec<_> = a.column(j).map(|(r, _)| r).collect();
                let spread = rows.last().unwrap() - rows[0] + 1;
                assert!(spread <= 2 * (map.upper_bound().ceil() as usize + 1));
            }
        }
    }

    #[test]
    fn rows_above_critical_value_are_empty() {
        let n = 1024;
        let a = build_ulam(&tent_map(1.5), n).unwrap();
        // Construction oracle: the image of [0,1] is [0, 0.75], so only cells
        // meeting [0, 0.75) receive mass.
        let top = (0.75 * n as f64) as usize;
        for j in 0..n {
            assert!(a.column(j).all(|(r, _)| r < top));
        }
    }

    #[test]
    fn full_tent_density_is_uniform() {
        for n in [64, 1000, 4096] {
            let (_, d) = density(2.0, n);
            assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
        }
    }

    #[test]
    fn density_vanishes_off_support() {
        let (_, d) = density(1.5, 1 << 14);
        assert_abs_diff_eq!(d.mean(), 1.0, epsilon = 1e-12);
        let w = d.cell_width();
        for (i, v) in d.values().iter().enumerate() {
            let a = i as f64 * w;
            if a + w <= 0.375 || a >= 0.75 {
                assert!(v.abs() <= 1e-6, "cell {i} holds {v}");
            }
        }
        assert!(d.mass_outside_support() <= 1e-6);
        assert_eq!(d.support(), (0.375, 0.75));
    }

    #[test]
    fn density_matches_orbit_histogram() {
        // Oracle: histogram of a long orbit of a generic point.
        let t = 1.9;
        let n = 1 << 14;
        let (_, d) = density(t, n);
        let map = tent_map(t);
        let steps = 50_000_000usize;
        let bins = 256;
        let mut hist = vec![0u64; bins];
        let mut x = 0.123_456_789_f64;
        for _ in 0..1000 {
            x = map.eval(x);
        }
        for _ in 0..steps {
            x = map.eval(x);
            hist[((x * bins as f64) as usize).min(bins - 1)] += 1;
        }
        // Compare on coarse bins so sampling noise stays well below the tolerance.
        let scale = bins as f64 / steps as f64;
        let pooled: Vec<f64> = d.values().chunks(n / bins).map(mean).collect();
        let dist: f64 = hist
            .iter()
            .zip(&pooled)
            .map(|(&h, v)| (h as f64 * scale - v).abs())
            .sum::<f64>()
            / bins as f64;
        assert!(dist <= 5e-3, "L1 distance to orbit histogram {dist}");
    }

    #[test]
    fn non_convergence_reports_residual() {
        let a = build_ulam(&tent_map(1.9), 256).unwrap();
        let err = invariant_density_with(
            &a,
            PowerOptions {
                tol: 1e-300,
                max_iter: 5,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 5, residual } if residual > 0.0));
    }

    #[test]
    fn transfer_preserves_mass() {
        let (a, d) = density(1.9, 4096);
        let out = apply_transfer(&a, d.values()).unwrap();
        assert!(density_l1_distance(&d, &DensityGrid::new(out, 1.9, d.support())).unwrap() < 1e-11);
        let ones = apply_transfer(&a, &vec![1.0; 4096]).unwrap();
        assert_abs_diff_eq!(mean(&ones), 1.0, epsilon = 1e-13);
        let zero_mean: Vec<f64> = (0..4096)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let out = apply_transfer(&a, &zero_mean).unwrap();
        assert!(mean(&out).abs() < 1e-14);
        assert!(matches!(
            apply_transfer(&a, &[1.0; 3]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn resolvent_contract() {
        let (a, d) = density(1.9, 2048);
        let zero = resolvent_zero_mean(&a, &d, &vec![0.0; 2048], 1e-10).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut g: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = mean(&g);
            g.iter_mut().for_each(|v| *v -= m);
            let r = resolvent_zero_mean(&a, &d, &g, 1e-10).unwrap();
            let ar = a.apply(&r.values).unwrap();
            let pg = project_zero_mean(&d, &g);
            let resid: Vec<f64> = r
                .values
                .iter()
                .zip(&ar)
                .zip(&pg)
                .map(|((r, a), p)| r - a - p)
                .collect();
            assert!(l1_norm(&resid) <= 1e-10);
            assert!(r.contraction < 1.0);
        }
        assert!(resolvent_zero_mean(&a, &d, &vec![0.0; 2048], 0.0).is_err());
    }

    #[test]
    fn saltus_full_tent() {
        let (_, d) = density(2.0, 1024);
        let s = saltus_weights(&tent_map(2.0), &d, Some(5)).unwrap();
        assert_abs_diff_eq!(s.s1(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.entries[1].weight, -0.5, epsilon = 1e-8);
        assert_eq!(s.entries[1].location, 0.0);
        assert!(!s.discontinuity_at_c);
    }

    #[test]
    fn saltus_ratios_are_inverse_slopes() {
        let t = 1.73;
        let (_, d) = density(t, 4096);
        let s = saltus_weights(&tent_map(t), &d, None).unwrap();
        assert_eq!(s.entries.len(), default_saltus_truncation(t));
        for w in s.entries.windows(2) {
            assert_abs_diff_eq!((w[1].weight / w[0].weight).abs(), 1.0 / t, epsilon = 1e-12);
        }
        for (k, e) in s.entries.iter().enumerate() {
            assert!(e.weight.abs() <= s.s1().abs() * t.powi(-(k as i32)) * (1.0 + 1e-12));
        }
        assert!(matches!(
            saltus_weights(&tent_map(t), &d, Some(0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn truncation_default() {
        let k = default_saltus_truncation(1.5);
        assert!(1.5f64.powi(-(k as i32)) < 1e-12);
        assert!(1.5f64.powi(-(k as i32 - 1)) >= 1e-12);
    }

    #[test]
    fn tent_density_is_pure_saltus() {
        // Piecewise-linear maps have ρ' = 0, so the jump series alone must
        // rebuild the density.
        let t = 1.9;
        let map = tent_map(t);
        let (_, d) = density(t, 1 << 14);
        let reports: Vec<_> = [1, 2, 4, 8, 16, default_saltus_truncation(t), 80]
            .into_iter()
            .map(|k| saltus_remainder(&d, &saltus_weights(&map, &d, Some(k)).unwrap()))
            .collect();
        assert!(reports[0].l1 > 0.1, "{reports:?}");
        assert!(reports[5].l1 < 2e-3, "{reports:?}");
        let recon = saltus_weights(&map, &d, None)
            .unwrap()
            .step_function(1 << 14);
        assert_abs_diff_eq!(mean(&recon), 1.0, epsilon = 2e-3);
        // Beyond the default truncation nothing material changes.
        let (a, b) = (&reports[5], &reports[6]);
        assert!(
            (a.derivative_variation - b.derivative_variation).abs()
                <= 1e-6 * a.derivative_variation
        );
        assert!(a.derivative_variation.is_finite());
    }

    #[test]
    fn saltus_remainder_bounded_for_smooth_branches() {
        let map = bent_tent(0.1, 1.5, 1.95).map_at(1.85).unwrap();
        let a = build_ulam(&map, 1 << 13).unwrap();
        let d = invariant_density(&a).unwrap();
        let dv: Vec<f64> = [8, 16, 32, 64]
            .into_iter()
            .map(|k| {
                saltus_remainder(&d, &saltus_weights(&map, &d, Some(k)).unwrap())
                    .derivative_variation
            })
            .collect();
        for w in dv.windows(2) {
            assert!((w[1] - w[0]).abs() <= 0.05 * w[0], "{dv:?}");
        }
    }

    #[test]
    fn l1_distance_examples() {
        let a = DensityGrid::new(vec![1.0; 8], 2.0, (0.0, 1.0));
        assert_eq!(density_l1_distance(&a, &a).unwrap(), 0.0);
        let b = DensityGrid::new(
            [2.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0].to_vec(),
            2.0,
            (0.0, 1.0),
        );
        assert_abs_diff_eq!(density_l1_distance(&a, &b).unwrap(), 1.0);
        let c = DensityGrid::new(vec![1.0; 4], 2.0, (0.0, 1.0));
        assert!(density_l1_distance(&a, &c).is_err());
    }

    #[test]
    fn l1_distance_regression_near_1_9() {
        let n = 1 << 16;
        let (_, d1) = density(1.9, n);
        let (_, d2) = density(1.91, n);
        let dist = density_l1_distance(&d1, &d2).unwrap();
        assert!(dist <= 0.15, "{dist}");
        assert!(dist > 0.0);
    }

    #[test]
    fn grid_refinement_error_is_monotone() {
        // Error of each grid against a 2^17 reference, both as step functions.
        let (_, reference) = density(1.9, 1 << 17);
        let mut prev = f64::INFINITY;
        let mut pairwise = Vec::new();
        let mut last: Option<DensityGrid> = None;
        for p in 10..=16 {
            let (_, d) = density(1.9, 1 << p);
            let k = 1 << (17 - p);
            let dist = l1_norm(
                &reference
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v - d.values()[i / k])
                    .collect::<Vec<_>>(),
            );
            assert!(dist < prev, "n=2^{p}: {dist} !< {prev}");
            prev = dist;
            if let Some(coarse) = last {
                pairwise.push(l1_norm(
                    &d.values()
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v - coarse.values()[i / 2])
                        .collect::<Vec<_>>(),
                ));
            }
            last = Some(d);
        }
        // Successive differences fluctuate but shrink end to end.
        assert!(pairwise.last().unwrap() * 4.0 < pairwise[0], "{pairwise:?}");
    }

    #[test]
    fn lasota_yorke_probe_contracts() {
        let (a, d) = density(1.9, 4096);
        let report = lasota_yorke_probe(&a, 20, 3).unwrap();
        assert!(report.beta < 1.0, "{report:?}");
        assert!(report.worst_margin >= -1e-9, "{report:?}");
        let ones = a.apply(&vec![1.0; 4096]).unwrap();
        assert!(variation(&ones) <= report.ones_variation_bound);
        assert!(variation(&ones) <= a.variation_bound(&vec![1.0; 4096]) + 1e-12);
        // The density is a fixed point, so its variation does not move.
        let mut g = d.values().to_vec();
        let v0 = variation(&g);
        for _ in 0..10 {
            g = a.apply(&g).unwrap();
            assert!((variation(&g) - v0).abs() < 1e-6 * v0);
        }
        assert!(lasota_yorke_probe(&a, 5, 3).is_err());
    }

    #[test]
    fn csv_export_layout() {
        let d = DensityGrid::new(vec![1.0, 1.0, 0.5, 1.5], 2.0, (0.0, 1.0));
        let csv = d.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "cell_index,left_edge,value");
        assert_eq!(lines.len(), 5);
        let fields: Vec<_> = lines[3].split(',').collect();
        assert_eq!(fields[0], "2");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.5);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mass_conservation(t in 1.3f64..2.0, seed in 0u64..1000) {
            let a = build_ulam(&tent_map(t), 512).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let g: Vec<f64> = (0..512).map(|_| rng.random_range(-2.0..3.0)).collect();
            let out = a.apply(&g).unwrap();
            prop_assert!((mean(&out) - mean(&g)).abs() <= 1e-14);
        }
    }
}
