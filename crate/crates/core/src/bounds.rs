//! Population-level bounds on the unidentifiable variance term.
//!
//! The variance of the difference-in-means estimator involves `φ²(τ)`, the
//! variance of unit-level effects, which depends on the joint distribution of
//! `(y1, y0)` and is never identified. The functions here bound it using only
//! the stratum shares and the stratum-conditional marginals (sharp bounds), the
//! unconditional marginals (Aronow bounds) or a saturated regression on the
//! strata (Ding bounds). The Wald-estimator analogue bounds `φ²(τ̃)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::population::{late_truth, pop_variance, ComplianceType, FinitePopulation};
use crate::transport::{quantile_l2_antimonotone, quantile_l2_comonotone, StepCdf};

/// Slack allowed when checking `lower ≤ upper`.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Pivot magnitude below which a least-squares design is declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Which bound construction produced a [`BoundPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    Sharp,
    Aronow,
    Ding,
    SharpLate,
    SharpLateNocov,
}

impl BoundFamily {
    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Sharp => "sharp",
            BoundFamily::Aronow => "aronow",
            BoundFamily::Ding => "ding",
            BoundFamily::SharpLate => "sharp-late",
            BoundFamily::SharpLateNocov => "sharp-late-nocov",
        }
    }
}

/// Whether a bound is a population quantity or a sample plug-in estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Population,
    Plugin,
}

/// Lower and upper bound on a variance term.
///
/// Values are raw: a lower bound obtained after subtracting `θ²` may be
/// negative, and clamping is left to the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub family: BoundFamily,
    pub level: Level,
}

impl BoundPair {
    pub fn new(lower: f64, upper: f64, family: BoundFamily, level: Level) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::domain(format!(
                "{} bounds are not finite: ({lower}, {upper})",
                family.name()
            )));
        }
        let scale = 1.0f64.max(lower.abs()).max(upper.abs());
        if lower > upper + TIE_TOLERANCE * scale {
            return Err(Error::domain(format!(
                "{} lower bound {lower} exceeds upper bound {upper}",
                family.name()
            )));
        }
        Ok(BoundPair {
            lower,
            upper,
            family,
            level,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lower - tol && value <= self.upper + tol
    }
}

/// Design rows for a saturated stratum regression: an intercept followed by
/// dummies for strata `1..K` (stratum 0 is the baseline).
pub fn dummy_design(strata: &[usize], num_strata: usize) -> Vec<Vec<f64>> {
    strata
        .iter()
        .map(|&k| {
            let mut row = vec![0.0; num_strata];
            row[0] = 1.0;
            if k > 0 {
                row[k] = 1.0;
            }
            row
        })
        .collect()
}

/// Ordinary least-squares fit of one outcome on a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    /// Solve the normal equations `XᵀX γ = Xᵀy` by Gaussian elimination with
    /// partial pivoting.
    pub fn fit(design: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if design.len() != y.len() {
            return Err(Error::Regression("design and response differ in length".into()));
        }
        let p = design.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::Regression("empty design".into()));
        }
        if design.iter().any(|r| r.len() != p) {
            return Err(Error::Regression("ragged design rows".into()));
        }
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &yi) in design.iter().zip(y) {
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += row[r] * row[c];
                }
                a[r][p] += row[r] * yi;
            }
        }
        let coefficients = solve_augmented(a)?;
        let fitted: Vec<f64> = design
            .iter()
            .map(|row| row.iter().zip(&coefficients).map(|(x, g)| x * g).sum())
            .collect();
        let residuals = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
        Ok(RegressionFit {
            coefficients,
            fitted,
            residuals,
        })
    }

    /// Largest `|Xᵀe|` over design columns.
    pub fn normal_equation_residual(&self, design: &[Vec<f64>]) -> f64 {
        let p = self.coefficients.len();
        (0..p)
            .map(|c| {
                design
                    .iter()
                    .zip(&self.residuals)
                    .map(|(row, e)| row[c] * e)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let p = a.len();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < RANK_TOLERANCE {
            return Err(Error::Regression(format!(
                "design matrix is rank deficient at column {col}"
            )));
        }
        a.swap(col, pivot);
        for r in col + 1..p {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..=p {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; p];
    for r in (0..p).rev() {
        let tail: f64 = (r + 1..p).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][p] - tail) / a[r][r];
    }
    Ok(x)
}

/// `Σ_k w_k · coupling(F_{1|k}, F_{0|k})` for both pairings, reduced in stratum order.
pub(crate) fn weighted_couplings(terms: &[(f64, StepCdf, StepCdf)]) -> Result<(f64, f64)> {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (w, f1, f0) in terms {
        lower += w * quantile_l2_comonotone(f1, f0)?;
        upper += w * quantile_l2_antimonotone(f1, f0)?;
    }
    Ok((lower, upper))
}

fn stratum_terms(pop: &FinitePopulation) -> Result<Vec<(f64, StepCdf, StepCdf)>> {
    let strata = pop.strata();
    (0..strata.num_strata())
        .map(|k| {
            let members = strata.members(k);
            if members.is_empty() {
                return Err(Error::degenerate(format!(
                    "stratum {} has no units",
                    strata.label(k)
                )));
            }
            let pick = |y: &[f64]| members.iter().map(|&i| y[i]).collect::<Vec<_>>();
            Ok((
                strata.share(k),
                StepCdf::empirical(&pick(pop.y1()))?,
                StepCdf::empirical(&pick(pop.y0()))?,
            ))
        })
        .collect()
}

/// `φ²(τ)`.
pub fn phi2_tau(pop: &FinitePopulation) -> f64 {
    pop_variance(&pop.tau()).unwrap()
}

/// `φ²(τ̃)`, the unit-level effect variance after removing the complier effect.
pub fn phi2_tau_tilde(pop: &FinitePopulation) -> Result<f64> {
    pop_variance(&pop.tau_tilde()?)
}

/// Sharp bounds on `φ²(τ)` given the stratum shares and stratum-conditional
/// marginals:
///
/// `Σ_k π_k ∫ (F_{1|k}⁻¹(u) − F_{0|k}⁻¹(u))² du − θ²` and the same with
/// `F_{0|k}⁻¹(1−u)`.
pub fn sharp_bounds_cov(pop: &FinitePopulation) -> Result<BoundPair> {
    let (lo, hi) = weighted_couplings(&stratum_terms(pop)?)?;
    let theta = crate::population::ate(pop);
    let t2 = theta * theta;
    BoundPair::new(lo - t2, hi - t2, BoundFamily::Sharp, Level::Population)
}

/// Bounds that use only the unconditional marginals of `y1` and `y0`.
pub fn aronow_bounds(pop: &FinitePopulation) -> Result<BoundPair> {
    let pair = sharp_bounds_cov(&pop.without_strata())?;
    Ok(BoundPair {
        family: BoundFamily::Aronow,
        ..pair
    })
}

/// Regression-based bounds: `φ²(τ_w)` plus the comonotone and antimonotone
/// couplings of the per-arm residual distributions, where `τ_w` is the
/// difference of per-arm fitted values on the stratum dummies.
pub fn ding_bounds(pop: &FinitePopulation) -> Result<BoundPair> {
    let strata = pop.strata();
    let design = dummy_design(strata.index(), strata.num_strata());
    let fit1 = RegressionFit::fit(&design, pop.y1())?;
    let fit0 = RegressionFit::fit(&design, pop.y0())?;
    let tau_w: Vec<f64> = fit1.fitted.iter().zip(&fit0.fitted).map(|(a, b)| a - b).collect();
    let base = pop_variance(&tau_w)?;
    let e1 = StepCdf::empirical(&fit1.residuals)?;
    let e0 = StepCdf::empirical(&fit0.residuals)?;
    BoundPair::new(
        base + quantile_l2_comonotone(&e1, &e0)?,
        base + quantile_l2_antimonotone(&e1, &e0)?,
        BoundFamily::Ding,
        Level::Population,
    )
}

/// Verify monotonicity, exclusion and a positive complier share.
pub fn check_late_assumptions(pop: &FinitePopulation) -> Result<()> {
    pop.check_monotonicity()?;
    pop.check_exclusion()?;
    if pop.complier_count()? == 0 {
        return Err(Error::WeakInstrument("population has no compliers".into()));
    }
    Ok(())
}

fn late_terms(pop: &FinitePopulation, pooled: bool) -> Result<Vec<(f64, StepCdf, StepCdf)>> {
    check_late_assumptions(pop)?;
    let theta_c = late_truth(pop)?;
    let (a1, a0) = pop.adjusted_outcomes(theta_c)?;
    let g = pop.compliance().unwrap();
    let strata = pop.strata();
    let n = pop.size() as f64;
    let groups: Vec<Vec<usize>> = if pooled {
        vec![(0..pop.size()).collect()]
    } else {
        (0..strata.num_strata()).map(|k| strata.members(k).to_vec()).collect()
    };
    let mut terms = Vec::new();
    for members in groups {
        let compliers: Vec<usize> = members
            .into_iter()
            .filter(|&i| g[i] == ComplianceType::Complier)
            .collect();
        if compliers.is_empty() {
            continue;
        }
        let pick = |y: &[f64]| compliers.iter().map(|&i| y[i]).collect::<Vec<_>>();
        terms.push((
            compliers.len() as f64 / n,
            StepCdf::empirical(&pick(&a1))?,
            StepCdf::empirical(&pick(&a0))?,
        ));
    }
    Ok(terms)
}

/// Sharp bounds on `φ²(τ̃)` from complier-conditional distributions of the
/// adjusted outcomes `ỹ_t = y_t − θ_c d_t` within strata, weighted by
/// `π_c π_{k|c} = N_{k,c} / N`.
pub fn sharp_bounds_late(pop: &FinitePopulation) -> Result<BoundPair> {
    let (lo, hi) = weighted_couplings(&late_terms(pop, false)?)?;
    BoundPair::new(lo, hi, BoundFamily::SharpLate, Level::Population)
}

/// [`sharp_bounds_late`] ignoring the strata.
pub fn sharp_bounds_late_nocov(pop: &FinitePopulation) -> Result<BoundPair> {
    let (lo, hi) = weighted_couplings(&late_terms(pop, true)?)?;
    BoundPair::new(lo, hi, BoundFamily::SharpLateNocov, Level::Population)
}

/// Which end of the sharp interval an extremal population attains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Lower,
    Upper,
}

// Reassign the y0 values of `units` so that they are sorted along with (lower)
// or against (upper) the y1 values of the same units.
fn rearrange(y1: &[f64], y0: &mut [f64], units: &[usize], which: Extreme) {
    let mut by_y1 = units.to_vec();
    by_y1.sort_by(|&i, &j| y1[i].total_cmp(&y1[j]).then(i.cmp(&j)));
    let mut values: Vec<f64> = units.iter().map(|&i| y0[i]).collect();
    values.sort_by(f64::total_cmp);
    if which == Extreme::Upper {
        values.reverse();
    }
    for (&i, v) in by_y1.iter().zip(values) {
        y0[i] = v;
    }
}

/// A population with the same strata and stratum-conditional marginals whose
/// `φ²(τ)` equals the chosen sharp bound: within each stratum the sorted `y1`
/// values are paired with sorted (lower) or reverse-sorted (upper) `y0` values.
pub fn extremal_population(pop: &FinitePopulation, which: Extreme) -> Result<FinitePopulation> {
    if pop.compliance().is_some() {
        return Err(Error::domain(
            "population carries compliance types; use extremal_population_late",
        ));
    }
    let mut y0 = pop.y0().to_vec();
    let strata = pop.strata();
    for k in 0..strata.num_strata() {
        rearrange(pop.y1(), &mut y0, strata.members(k), which);
    }
    Ok(pop.with_outcomes(pop.y1().to_vec(), y0))
}

/// Noncompliance analogue of [`extremal_population`]: control outcomes are
/// rearranged among the compliers of each stratum, leaving always and never
/// takers untouched, so `φ²(τ̃)` equals the chosen sharp LATE bound.
pub fn extremal_population_late(pop: &FinitePopulation, which: Extreme) -> Result<FinitePopulation> {
    check_late_assumptions(pop)?;
    let g = pop.compliance().unwrap();
    let mut y0 = pop.y0().to_vec();
    let strata = pop.strata();
    for k in 0..strata.num_strata() {
        let compliers: Vec<usize> = strata
            .members(k)
            .iter()
            .copied()
            .filter(|&i| g[i] == ComplianceType::Complier)
            .collect();
        rearrange(pop.y1(), &mut y0, &compliers, which);
    }
    Ok(pop.with_outcomes(pop.y1().to_vec(), y0))
}

/// Largest multiset size accepted by [`brute_force_extremes`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Minimum and maximum of `(1/m) Σ (a_i − b_{π(i)})²` over all `m!` pairings.
pub fn brute_force_extremes(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let m = a.len();
    if m != b.len() {
        return Err(Error::domain("multisets differ in size"));
    }
    if m == 0 || m > BRUTE_FORCE_LIMIT {
        return Err(Error::domain(format!(
            "brute force needs 1 to {BRUTE_FORCE_LIMIT} values, got {m}"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let cost = |perm: &[usize]| {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| (a[i] - b[j]) * (a[i] - b[j]))
            .sum::<f64>()
            / m as f64
    };
    let first = cost(&perm);
    let (mut lo, mut hi) = (first, first);
    // Heap's algorithm
    let mut c = vec![0usize; m];
    let mut i = 1;
    while i < m {
        if c[i] < i {
            let swap_with = if i % 2 == 0 { 0 } else { c[i] };
            perm.swap(swap_with, i);
            let v = cost(&perm);
            lo = lo.min(v);
            hi = hi.max(v);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((lo, hi))
}
