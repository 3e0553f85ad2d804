//! Exact algebra for right-continuous step functions on the real line.
//!
//! Every bound in this crate reduces to a squared-L2 distance between two
//! quantile functions, paired either comonotonically (`F⁻¹(u)` against
//! `G⁻¹(u)`) or antimonotonically (`F⁻¹(u)` against `G⁻¹(1-u)`). For
//! empirical inputs the cumulative masses are kept as integer counts over a
//! common total, so quantile breakpoints are merged by exact integer
//! comparison and only the outcome values carry floating-point error.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Largest deviation of a real-valued terminal mass from 1 that is silently
/// renormalized.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Cumulative levels of a step function: integer counts over a positive
/// total, or plain reals.
#[derive(Debug, Clone, PartialEq)]
enum Levels {
    Counts { cum: Vec<i64>, total: i64 },
    Real(Vec<f64>),
}

impl Levels {
    fn len(&self) -> usize {
        match self {
            Levels::Counts { cum, .. } => cum.len(),
            Levels::Real(v) => v.len(),
        }
    }

    fn value(&self, j: usize) -> f64 {
        match self {
            Levels::Counts { cum, total } => cum[j] as f64 / *total as f64,
            Levels::Real(v) => v[j],
        }
    }
}

/// How two quantile functions are paired inside the L2 integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pairing {
    /// `F⁻¹(u)` against `G⁻¹(u)`; sorted values paired with sorted values.
    Comonotone,
    /// `F⁻¹(u)` against `G⁻¹(1-u)`; sorted values paired with reverse-sorted values.
    Antimonotone,
}

/// Functions that admit the generalized inverse `H⁻¹(u) = inf{s : H(s) ≥ u}`.
pub trait GeneralizedInverse {
    /// Smallest breakpoint at which the function first reaches `u`, or
    /// `+∞` when it never does. `u` must lie in `(0, 1]`.
    fn generalized_inverse(&self, u: f64) -> Result<f64>;
}

fn check_unit_interval(u: f64) -> Result<()> {
    if u > 0.0 && u <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("quantile level {u} outside (0, 1]")))
    }
}

fn check_support(support: &[f64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::domain("step function needs at least one breakpoint"));
    }
    if support.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("breakpoints must be finite"));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("breakpoints must be strictly increasing"));
    }
    Ok(())
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a.abs()
}

/// A distribution function with finitely many jumps: value 0 left of the
/// first breakpoint and `cum[j]` on `[s_j, s_{j+1})`, reaching 1 at the last
/// breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    support: Vec<f64>,
    levels: Levels,
}

impl StepCdf {
    /// Empirical distribution function of a nonempty multiset. Ties are kept
    /// as multiplicity.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empirical CDF of an empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sample contains non-finite values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut cum = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if support.last() == Some(&v) {
                *cum.last_mut().unwrap() = i as i64 + 1;
            } else {
                support.push(v);
                cum.push(i as i64 + 1);
            }
        }
        Ok(StepCdf {
            support,
            levels: Levels::Counts {
                cum,
                total: sorted.len() as i64,
            },
        })
    }

    /// Distribution with positive integer weights on strictly increasing
    /// support points.
    pub fn from_counts(support: Vec<f64>, counts: &[u64]) -> Result<Self> {
        check_support(&support)?;
        if counts.len() != support.len() {
            return Err(Error::domain("support and counts differ in length"));
        }
        if counts.contains(&0) {
            return Err(Error::domain("counts must be positive"));
        }
        let mut acc = 0i64;
        let cum = counts
            .iter()
            .map(|&c| {
                acc += c as i64;
                acc
            })
            .collect();
        Ok(StepCdf {
            support,
            levels: Levels::Counts { cum, total: acc },
        })
    }

    /// Distribution given by real cumulative masses. The last mass is set to
    /// exactly 1 when it is within [`MASS_TOLERANCE`] of 1; larger deficits
    /// are rejected.
    pub fn from_cumulative(support: Vec<f64>, mut cum: Vec<f64>) -> Result<Self> {
        check_support(&support)?;
        if cum.len() != support.len() {
            return Err(Error::domain("support and masses differ in length"));
        }
        if cum.iter().any(|c| !c.is_finite()) || cum[0] < 0.0 {
            return Err(Error::domain("cumulative masses must be finite and nonnegative"));
        }
        if cum.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain("cumulative masses must be nondecreasing"));
        }
        let last = *cum.last().unwrap();
        if (last - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!(
                "total mass {last} differs from 1 by more than {MASS_TOLERANCE}"
            )));
        }
        for c in cum.iter_mut() {
            *c = c.min(1.0);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(StepCdf {
            support,
            levels: Levels::Real(cum),
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Cumulative masses at each breakpoint.
    pub fn cumulative(&self) -> Vec<f64> {
        (0..self.levels.len()).map(|j| self.levels.value(j)).collect()
    }

    /// Cumulative masses as integer counts over their total, when the
    /// distribution is empirical.
    pub fn counts(&self) -> Option<(&[i64], i64)> {
        match &self.levels {
            Levels::Counts { cum, total } => Some((cum, *total)),
            Levels::Real(_) => None,
        }
    }

    /// `F(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match last_at_or_below(&self.support, x) {
            Some(j) => self.levels.value(j),
            None => 0.0,
        }
    }

    /// Distribution of `X + c`.
    pub fn shifted(&self, c: f64) -> StepCdf {
        StepCdf {
            support: self.support.iter().map(|s| s + c).collect(),
            levels: self.levels.clone(),
        }
    }

    /// The quantile function `F⁻¹` on `(0, 1]`.
    pub fn quantile(&self) -> StepQuantile {
        // Every breakpoint of a valid CDF carries positive mass except
        // possibly flat real-valued stretches, which are skipped.
        match &self.levels {
            Levels::Counts { cum, total } => {
                let mut knots = Vec::with_capacity(cum.len());
                let mut values = Vec::with_capacity(cum.len());
                let mut prev = 0;
                for (j, &c) in cum.iter().enumerate() {
                    if c > prev {
                        knots.push(c);
                        values.push(self.support[j]);
                        prev = c;
                    }
                }
                StepQuantile {
                    knots: Knots::Counts {
                        cum: knots,
                        total: *total,
                    },
                    values,
                }
            }
            Levels::Real(cum) => {
                let mut knots = Vec::with_capacity(cum.len());
                let mut values = Vec::with_capacity(cum.len());
                let mut prev = 0.0;
                for (j, &c) in cum.iter().enumerate() {
                    if c > prev {
                        knots.push(c);
                        values.push(self.support[j]);
                        prev = c;
                    }
                }
                StepQuantile {
                    knots: Knots::Real(knots),
                    values,
                }
            }
        }
    }
}

impl GeneralizedInverse for StepCdf {
    fn generalized_inverse(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        Ok(first_reaching(&self.support, &self.levels, u))
    }
}

/// A right-continuous step function with arbitrary real values between its
/// breakpoints, 0 at `-∞` and 1 at `+∞`. Weighted differences of empirical
/// sub-distribution functions produce these; they need not be monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedStepFunction {
    support: Vec<f64>,
    levels: Levels,
}

impl SignedStepFunction {
    /// Values `numerators[j] / denominator` on `[s_j, s_{j+1})`. The last
    /// numerator must equal the denominator so the function tends to 1.
    pub fn from_ratio(support: Vec<f64>, numerators: Vec<i64>, denominator: i64) -> Result<Self> {
        check_support(&support)?;
        if numerators.len() != support.len() {
            return Err(Error::domain("support and values differ in length"));
        }
        if denominator == 0 {
            return Err(Error::domain("zero normalizer"));
        }
        if *numerators.last().unwrap() != denominator {
            return Err(Error::domain("signed step function must end at 1"));
        }
        let (cum, total) = if denominator < 0 {
            (numerators.iter().map(|v| -v).collect(), -denominator)
        } else {
            (numerators, denominator)
        };
        Ok(SignedStepFunction {
            support,
            levels: Levels::Counts { cum, total },
        })
    }

    /// Real values on `[s_j, s_{j+1})`. The last value is renormalized to 1
    /// when within [`MASS_TOLERANCE`]; otherwise the input is rejected.
    pub fn from_values(support: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        check_support(&support)?;
        if values.len() != support.len() {
            return Err(Error::domain("support and values differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("values must be finite"));
        }
        let last = *values.last().unwrap();
        if (last - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!(
                "limit at +∞ is {last}, expected 1 within {MASS_TOLERANCE}"
            )));
        }
        *values.last_mut().unwrap() = 1.0;
        Ok(SignedStepFunction {
            support,
            levels: Levels::Real(values),
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Values at each breakpoint.
    pub fn values(&self) -> Vec<f64> {
        (0..self.levels.len()).map(|j| self.levels.value(j)).collect()
    }

    pub fn value(&self, x: f64) -> f64 {
        match last_at_or_below(&self.support, x) {
            Some(j) => self.levels.value(j),
            None => 0.0,
        }
    }

    pub fn is_monotone(&self) -> bool {
        let v = self.values();
        v[0] >= 0.0 && v.windows(2).all(|w| w[0] <= w[1])
    }

    /// Running supremum `sup_{v ≤ y} F(v)`, clamped to `[0, 1]`. Shares its
    /// generalized inverse with `self` on `(0, 1]`.
    pub fn monotone_envelope(&self) -> StepCdf {
        let mut support = Vec::with_capacity(self.support.len());
        let levels = match &self.levels {
            Levels::Counts { cum, total } => {
                let mut out = Vec::with_capacity(cum.len());
                let mut run = 0i64;
                for (j, &c) in cum.iter().enumerate() {
                    let next = run.max(c.clamp(0, *total));
                    if next > run {
                        support.push(self.support[j]);
                        out.push(next);
                        run = next;
                    }
                }
                Levels::Counts {
                    cum: out,
                    total: *total,
                }
            }
            Levels::Real(vals) => {
                let mut out = Vec::with_capacity(vals.len());
                let mut run = 0.0f64;
                for (j, &c) in vals.iter().enumerate() {
                    let next = run.max(c.clamp(0.0, 1.0));
                    if next > run {
                        support.push(self.support[j]);
                        out.push(next);
                        run = next;
                    }
                }
                Levels::Real(out)
            }
        };
        StepCdf { support, levels }
    }

    /// Quantile function `u ↦ inf{s : F(s) ≥ u}` on `(0, 1]`.
    pub fn quantile(&self) -> StepQuantile {
        self.monotone_envelope().quantile()
    }
}

impl GeneralizedInverse for SignedStepFunction {
    fn generalized_inverse(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        Ok(first_reaching(&self.support, &self.levels, u))
    }
}

// Direct scan of the definition: the first support point whose level
// reaches `u`, ignoring any later dips.
fn first_reaching(support: &[f64], levels: &Levels, u: f64) -> f64 {
    match levels {
        Levels::Counts { cum, total } => {
            // c/total ≥ u  ⇔  c ≥ u·total, compared in floating point only
            // once per breakpoint.
            for (j, &c) in cum.iter().enumerate() {
                if c as f64 / *total as f64 >= u {
                    return support[j];
                }
            }
        }
        Levels::Real(vals) => {
            for (j, &c) in vals.iter().enumerate() {
                if c >= u {
                    return support[j];
                }
            }
        }
    }
    f64::INFINITY
}

fn last_at_or_below(support: &[f64], x: f64) -> Option<usize> {
    let idx = support.partition_point(|&s| s <= x);
    idx.checked_sub(1)
}

#[derive(Debug, Clone, PartialEq)]
enum Knots {
    Counts { cum: Vec<i64>, total: i64 },
    Real(Vec<f64>),
}

/// A left-continuous quantile function: `values[j]` on `(u_{j-1}, u_j]` with
/// `0 = u_{-1} < u_0 < … < u_{r-1} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepQuantile {
    knots: Knots,
    values: Vec<f64>,
}

impl StepQuantile {
    /// Right endpoints of the constant pieces.
    pub fn knots(&self) -> Vec<f64> {
        match &self.knots {
            Knots::Counts { cum, total } => cum.iter().map(|&c| c as f64 / *total as f64).collect(),
            Knots::Real(k) => k.clone(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        check_unit_interval(u)?;
        let knots = self.knots();
        let j = knots.partition_point(|&k| k < u);
        Ok(self.values.get(j).copied().unwrap_or(f64::INFINITY))
    }

    fn is_complete(&self) -> bool {
        match &self.knots {
            Knots::Counts { cum, total } => cum.last() == Some(total),
            Knots::Real(k) => k.last() == Some(&1.0),
        }
    }
}

/// `∫₀¹ (F⁻¹(u) − G⁻¹(u))² du` or `∫₀¹ (F⁻¹(u) − G⁻¹(1−u))² du`, computed
/// exactly by merging the breakpoints of both quantile functions.
pub fn coupling_cost(f: &StepQuantile, g: &StepQuantile, pairing: Pairing) -> Result<f64> {
    if !f.is_complete() || !g.is_complete() {
        return Err(Error::domain("quantile function does not reach mass 1"));
    }
    if f.values.iter().chain(&g.values).any(|v| !v.is_finite()) {
        return Err(Error::domain("infinite quantile value"));
    }
    match (&f.knots, &g.knots) {
        (Knots::Counts { cum: cf, total: tf }, Knots::Counts { cum: cg, total: tg }) => {
            let (tf, tg) = (*tf as i128, *tg as i128);
            let total = tf / gcd(tf, tg) * tg;
            let (sf, sg) = (total / tf, total / tg);
            let kf: Vec<i128> = cf.iter().map(|&c| c as i128 * sf).collect();
            let mut kg: Vec<i128> = cg.iter().map(|&c| c as i128 * sg).collect();
            let mut vg = g.values.clone();
            if pairing == Pairing::Antimonotone {
                kg = reverse_knots(&kg, total);
                vg.reverse();
            }
            let sum = merge_pieces(&kf, &f.values, &kg, &vg, |a, b| (b - a) as f64);
            Ok(sum / total as f64)
        }
        _ => {
            let kf = f.knots();
            let mut kg = g.knots();
            let mut vg = g.values.clone();
            if pairing == Pairing::Antimonotone {
                kg = reverse_knots(&kg, 1.0);
                vg.reverse();
            }
            Ok(merge_pieces(&kf, &f.values, &kg, &vg, |a, b| b - a))
        }
    }
}

// Knots of u ↦ G⁻¹(1−u): the piece (u_{j-1}, u_j] maps to [1−u_j, 1−u_{j-1});
// endpoints have measure zero.
fn reverse_knots<T>(knots: &[T], total: T) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T>,
{
    let r = knots.len();
    (0..r)
        .map(|i| {
            // piece index counted from the top
            let j = r - 1 - i;
            if j == 0 {
                total
            } else {
                total - knots[j - 1]
            }
        })
        .collect()
}

fn merge_pieces<T, W>(kf: &[T], vf: &[f64], kg: &[T], vg: &[f64], width: W) -> f64
where
    T: Copy + PartialOrd + Default,
    W: Fn(T, T) -> f64,
{
    let (mut i, mut j) = (0, 0);
    let mut prev = T::default();
    let mut sum = 0.0;
    while i < kf.len() && j < kg.len() {
        let (a, b) = (kf[i], kg[j]);
        let next = if a <= b { a } else { b };
        let d = vf[i] - vg[j];
        sum += width(prev, next) * d * d;
        prev = next;
        match a.partial_cmp(&b) {
            Some(Ordering::Less) => i += 1,
            Some(Ordering::Greater) => j += 1,
            _ => {
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// `∫₀¹ (F⁻¹(u) − G⁻¹(u))² du`, the squared 2-Wasserstein distance.
pub fn quantile_l2_comonotone(f: &StepCdf, g: &StepCdf) -> Result<f64> {
    coupling_cost(&f.quantile(), &g.quantile(), Pairing::Comonotone)
}

/// `∫₀¹ (F⁻¹(u) − G⁻¹(1−u))² du`.
pub fn quantile_l2_antimonotone(f: &StepCdf, g: &StepCdf) -> Result<f64> {
    coupling_cost(&f.quantile(), &g.quantile(), Pairing::Antimonotone)
}

/// The comonotone integral evaluated through the distribution functions
/// instead of the quantiles:
///
/// `2 ∬_{v ≤ w} [(F(v) − G(w))₊ + (G(v) − F(w))₊] dv dw`.
///
/// The integrand is constant on the rectangles of the merged breakpoint grid
/// and vanishes outside its hull, so the double integral is a finite double sum.
pub fn representation_check(f: &StepCdf, g: &StepCdf) -> f64 {
    let mut grid: Vec<f64> = f.support().iter().chain(g.support()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let r = grid.len();
    if r < 2 {
        return 0.0;
    }
    let fv: Vec<f64> = grid[..r - 1].iter().map(|&x| f.value(x)).collect();
    let gv: Vec<f64> = grid[..r - 1].iter().map(|&x| g.value(x)).collect();
    let h: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    let pos = |x: f64| x.max(0.0);
    let mut total = 0.0;
    for i in 0..r - 1 {
        // v and w in the same cell: the triangle v ≤ w has half the area.
        total += 0.5 * h[i] * h[i] * (fv[i] - gv[i]).abs();
        for j in i + 1..r - 1 {
            total += h[i] * h[j] * (pos(fv[i] - gv[j]) + pos(gv[i] - fv[j]));
        }
    }
    2.0 * total
}
