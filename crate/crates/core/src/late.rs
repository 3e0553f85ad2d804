//! The Wald estimator under noncompliance and its sharp variance bounds.
//!
//! With take-up `d` observed, adjusted outcomes `ŷ = y − θ̂_c d` replace raw
//! outcomes, and complier-conditional distributions of the adjusted outcomes
//! are estimated by weighted differences of arm-wise sub-distribution
//! functions. Those estimates need not be monotone; their generalized
//! inverses are used as they are.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundFamily, BoundPair, Level};
use crate::error::{Error, Result};
use crate::estimate::{normal_interval, sample_variance, Interval, VarianceEstimate};
use crate::normal;
use crate::population::{Arm, ObservedSample};
use crate::transport::{coupling_cost, Pairing, SignedStepFunction};

/// Thresholds guarding the Wald estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LateOptions {
    /// Smallest admissible estimated complier share.
    pub eps_c: f64,
    /// Smallest admissible `|λ̂_{tk}|` for a stratum.
    pub eps_lambda: f64,
}

impl Default for LateOptions {
    fn default() -> Self {
        LateOptions {
            eps_c: 0.01,
            eps_lambda: 1e-8,
        }
    }
}

/// Lower-bound estimate subtracted in the Wald variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateFamily {
    NaiveZero,
    SharpLateNocov,
    SharpLate,
}

impl LateFamily {
    pub const ALL: [LateFamily; 3] = [
        LateFamily::NaiveZero,
        LateFamily::SharpLateNocov,
        LateFamily::SharpLate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LateFamily::NaiveZero => "naive-zero",
            LateFamily::SharpLateNocov => "sharp-late-nocov",
            LateFamily::SharpLate => "sharp-late",
        }
    }

    pub fn bound_family(self) -> Option<BoundFamily> {
        match self {
            LateFamily::NaiveZero => None,
            LateFamily::SharpLateNocov => Some(BoundFamily::SharpLateNocov),
            LateFamily::SharpLate => Some(BoundFamily::SharpLate),
        }
    }
}

impl fmt::Display for LateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LateFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown LATE bound family `{s}`")))
    }
}

fn require_takeup(s: &ObservedSample) -> Result<()> {
    if !s.has_takeup() {
        return Err(Error::domain("sample has no treatment take-up column"));
    }
    if s.n1() == 0 || s.n0() == 0 {
        return Err(Error::degenerate("both arms need units"));
    }
    Ok(())
}

fn takeup(u: &crate::population::Unit) -> bool {
    u.takeup.unwrap_or(false)
}

/// `π̂_c` as an exact fraction.
pub fn pi_c_ratio(s: &ObservedSample) -> Result<Ratio<i64>> {
    require_takeup(s)?;
    let (n1, n0) = (s.n1() as i64, s.n0() as i64);
    let c = s.arm(Arm::Treatment).filter(|u| takeup(u)).count() as i64;
    let e = s.arm(Arm::Control).filter(|u| takeup(u)).count() as i64;
    Ok(Ratio::new(c, n1) - Ratio::new(e, n0))
}

/// `π̂_c` without the weak-instrument check.
pub fn pi_c_hat_raw(s: &ObservedSample) -> Result<f64> {
    let r = pi_c_ratio(s)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

/// Difference in take-up rates between the arms.
pub fn pi_c_hat(s: &ObservedSample, opts: &LateOptions) -> Result<f64> {
    let p = pi_c_hat_raw(s)?;
    if p <= opts.eps_c {
        return Err(Error::WeakInstrument(format!(
            "estimated complier share {p} is not above {}",
            opts.eps_c
        )));
    }
    Ok(p)
}

fn diff_in_means(s: &ObservedSample) -> Result<f64> {
    crate::estimate::diff_in_means(s)
}

/// `θ̂_c = θ̂ / π̂_c`.
pub fn wald(s: &ObservedSample, opts: &LateOptions) -> Result<f64> {
    let p = pi_c_hat(s, opts)?;
    Ok(diff_in_means(s)? / p)
}

fn adjusted(u: &crate::population::Unit, theta_c_hat: f64) -> f64 {
    if takeup(u) {
        u.y - theta_c_hat
    } else {
        u.y
    }
}

/// `φ̌²_t`: sample variance of `ŷ = y − θ̂_c d` in arm `t`.
pub fn arm_variance_adjusted(s: &ObservedSample, theta_c_hat: f64, arm: Arm) -> Result<f64> {
    require_takeup(s)?;
    let v: Vec<f64> = s.arm(arm).map(|u| adjusted(u, theta_c_hat)).collect();
    sample_variance(&v).map_err(|e| Error::degenerate(format!("{arm:?} arm: {e}")))
}

// Integer ingredients of λ̂_{tk}: counts of contributing units in the own arm
// (added) and in the opposite arm (subtracted).
fn lambda_counts(s: &ObservedSample, k: Option<usize>, arm: Arm) -> (i64, i64) {
    let in_k = |u: &&crate::population::Unit| k.is_none_or(|k| u.stratum == k);
    let contributes = |u: &crate::population::Unit| takeup(u) == arm.is_treatment();
    let own = s.arm(arm).filter(in_k).filter(|u| contributes(u)).count() as i64;
    let other = match arm {
        Arm::Treatment => Arm::Control,
        Arm::Control => Arm::Treatment,
    };
    let cross = s.arm(other).filter(in_k).filter(|u| contributes(u)).count() as i64;
    (own, cross)
}

// λ̂_{tk} = own/n_t − cross/n_{1−t}, as numerator over n1·n0.
fn lambda_fraction(s: &ObservedSample, k: Option<usize>, arm: Arm) -> (i64, i64) {
    let (n1, n0) = (s.n1() as i64, s.n0() as i64);
    let (own, cross) = lambda_counts(s, k, arm);
    let num = match arm {
        Arm::Treatment => n0 * own - n1 * cross,
        Arm::Control => n1 * own - n0 * cross,
    };
    (num, n1 * n0)
}

/// `(λ̂_{1k}, λ̂_{0k})` as exact fractions. Strata without units give zeros.
pub fn lambda_ratios(s: &ObservedSample, k: usize) -> Result<(Ratio<i64>, Ratio<i64>)> {
    require_takeup(s)?;
    let (a, d) = lambda_fraction(s, Some(k), Arm::Treatment);
    let (b, _) = lambda_fraction(s, Some(k), Arm::Control);
    Ok((Ratio::new(a, d), Ratio::new(b, d)))
}

/// `(λ̂_{1k}, λ̂_{0k})`.
pub fn lambda_hats(s: &ObservedSample, k: usize) -> Result<(f64, f64)> {
    let (a, b) = lambda_ratios(s, k)?;
    let f = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    Ok((f(a), f(b)))
}

/// `π̂_{k|c} = λ̂_{1k} / π̂_c` as an exact fraction.
pub fn pi_k_given_c_ratio(s: &ObservedSample, k: usize) -> Result<Ratio<i64>> {
    let pc = pi_c_ratio(s)?;
    if *pc.numer() == 0 {
        return Err(Error::WeakInstrument("estimated complier share is zero".into()));
    }
    Ok(lambda_ratios(s, k)?.0 / pc)
}

fn f_check_in(
    s: &ObservedSample,
    theta_c_hat: f64,
    arm: Arm,
    k: Option<usize>,
    opts: &LateOptions,
) -> Result<SignedStepFunction> {
    require_takeup(s)?;
    let (num, den) = lambda_fraction(s, k, arm);
    let lambda = num as f64 / den as f64;
    if num == 0 || lambda.abs() < opts.eps_lambda {
        let name = k.map_or_else(|| "pooled sample".to_string(), |k| format!("stratum `{}`", s.labels()[k]));
        return Err(Error::degenerate(format!(
            "{name}: estimated complier mass λ̂ = {lambda} for the {arm:?} arm is below {}; merge strata",
            opts.eps_lambda
        )));
    }
    let (n1, n0) = (s.n1() as i64, s.n0() as i64);
    // weight of a unit in the numerator n1·n0·(own/n_t − cross/n_{1−t})
    let mut points: Vec<(f64, i64)> = s
        .units()
        .iter()
        .filter(|u| k.is_none_or(|k| u.stratum == k) && takeup(u) == arm.is_treatment())
        .map(|u| {
            let own = u.treated == arm.is_treatment();
            let w = match (arm, own) {
                (Arm::Treatment, true) => n0,
                (Arm::Treatment, false) => -n1,
                (Arm::Control, true) => n1,
                (Arm::Control, false) => -n0,
            };
            (adjusted(u, theta_c_hat), w)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut support: Vec<f64> = Vec::new();
    let mut cum: Vec<i64> = Vec::new();
    let mut acc = 0i64;
    for (v, w) in points {
        acc += w;
        if support.last() == Some(&v) {
            *cum.last_mut().unwrap() = acc;
        } else {
            support.push(v);
            cum.push(acc);
        }
    }
    SignedStepFunction::from_ratio(support, cum, num)
}

/// `F̌_{t|k}`: estimated complier-conditional distribution of adjusted
/// outcomes in stratum `k`, a weighted difference of sub-distribution
/// functions normalized by `λ̂_{tk}`.
pub fn f_check(
    s: &ObservedSample,
    theta_c_hat: f64,
    arm: Arm,
    k: usize,
    opts: &LateOptions,
) -> Result<SignedStepFunction> {
    if k >= s.num_strata() {
        return Err(Error::domain(format!("unknown stratum index {k}")));
    }
    f_check_in(s, theta_c_hat, arm, Some(k), opts)
}

/// Plug-in sharp LATE bounds for a given `θ̂_c`; with `pooled` the strata
/// are ignored.
pub fn late_bounds_at(
    s: &ObservedSample,
    theta_c_hat: f64,
    pooled: bool,
    opts: &LateOptions,
) -> Result<BoundPair> {
    let groups: Vec<Option<usize>> = if pooled {
        vec![None]
    } else {
        (0..s.num_strata()).map(Some).collect()
    };
    let (mut lo, mut hi) = (0.0, 0.0);
    for k in groups {
        let (num, den) = lambda_fraction(s, k, Arm::Treatment);
        let weight = num as f64 / den as f64;
        let q1 = f_check_in(s, theta_c_hat, Arm::Treatment, k, opts)?.quantile();
        let q0 = f_check_in(s, theta_c_hat, Arm::Control, k, opts)?.quantile();
        lo += weight * coupling_cost(&q1, &q0, Pairing::Comonotone)?;
        hi += weight * coupling_cost(&q1, &q0, Pairing::Antimonotone)?;
    }
    let family = if pooled {
        BoundFamily::SharpLateNocov
    } else {
        BoundFamily::SharpLate
    };
    BoundPair::new(lo, hi, family, Level::Plugin)
}

/// `(φ̌²_L, φ̌²_H)` over the strata, weights `λ̂_{1k} = π̂_c π̂_{k|c}`.
pub fn late_bound_estimates(s: &ObservedSample, opts: &LateOptions) -> Result<BoundPair> {
    late_bounds_at(s, wald(s, opts)?, false, opts)
}

/// [`late_bound_estimates`] with a single stratum.
pub fn late_bound_estimates_nocov(s: &ObservedSample, opts: &LateOptions) -> Result<BoundPair> {
    late_bounds_at(s, wald(s, opts)?, true, opts)
}

fn variance_at(
    s: &ObservedSample,
    theta_c_hat: f64,
    pi_c: f64,
    lower_raw: f64,
) -> Result<VarianceEstimate> {
    let phi1 = arm_variance_adjusted(s, theta_c_hat, Arm::Treatment)?;
    let phi0 = arm_variance_adjusted(s, theta_c_hat, Arm::Control)?;
    Ok(VarianceEstimate::combine(
        s.population_size(),
        s.n1(),
        s.n0(),
        phi1,
        phi0,
        lower_raw,
        1.0 / (pi_c * pi_c),
    ))
}

fn family_bounds(
    s: &ObservedSample,
    theta_c_hat: f64,
    family: LateFamily,
    opts: &LateOptions,
) -> Result<Option<BoundPair>> {
    Ok(match family {
        LateFamily::NaiveZero => None,
        LateFamily::SharpLateNocov => Some(late_bounds_at(s, theta_c_hat, true, opts)?),
        LateFamily::SharpLate => Some(late_bounds_at(s, theta_c_hat, false, opts)?),
    })
}

/// `σ̂²_c = π̂_c⁻² ((N/n1) φ̌²_1 + (N/n0) φ̌²_0 − max(φ̌²_L, 0))` with its parts.
pub fn variance_estimate_late(
    s: &ObservedSample,
    family: LateFamily,
    opts: &LateOptions,
) -> Result<VarianceEstimate> {
    let pc = pi_c_hat(s, opts)?;
    let theta_c = diff_in_means(s)? / pc;
    let lower = family_bounds(s, theta_c, family, opts)?.map_or(0.0, |b| b.lower);
    variance_at(s, theta_c, pc, lower)
}

/// `σ̂²_c`.
pub fn sigma_c_hat2(s: &ObservedSample, family: LateFamily, opts: &LateOptions) -> Result<f64> {
    Ok(variance_estimate_late(s, family, opts)?.value)
}

/// Conservative `1 − α` interval for `θ_c`.
pub fn ci_late(
    s: &ObservedSample,
    alpha: f64,
    family: LateFamily,
    opts: &LateOptions,
) -> Result<Interval> {
    let sigma2 = sigma_c_hat2(s, family, opts)?;
    normal_interval(wald(s, opts)?, sigma2, s.population_size(), alpha)
}

/// `Φ(√N θ̂ / σ̂)`: one-sided p-value against the alternative that the effect
/// is negative.
pub fn one_sided_p_value(estimate: f64, sigma2: f64, population_size: usize) -> f64 {
    let z = (population_size as f64).sqrt() * estimate / sigma2.sqrt();
    if z.is_nan() {
        // zero estimate with zero variance
        0.5
    } else {
        normal::cdf(z)
    }
}

/// `(λ̂_{1k}, λ̂_{0k})` for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumLambda {
    pub stratum: String,
    pub lambda1: f64,
    pub lambda0: f64,
}

/// Interval, variance estimate and one-sided p-value for one family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateFamilyInterval {
    pub family: LateFamily,
    pub sigma_c_hat2: VarianceEstimate,
    pub ci: Interval,
    pub p_value_negative: f64,
}

/// Complete noncompliance analysis of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateAnalysis {
    pub alpha: f64,
    pub population_size: usize,
    pub n1: usize,
    pub n0: usize,
    pub theta_hat: f64,
    pub pi_c_hat: f64,
    pub theta_c_hat: f64,
    /// `(φ̌²_1, φ̌²_0)`.
    pub phi2_check_arm: (f64, f64),
    pub lambda: Vec<StratumLambda>,
    pub bound_estimates: Vec<BoundPair>,
    pub intervals: Vec<LateFamilyInterval>,
}

impl LateAnalysis {
    pub fn interval(&self, family: LateFamily) -> Option<&LateFamilyInterval> {
        self.intervals.iter().find(|i| i.family == family)
    }

    pub fn bounds(&self, family: BoundFamily) -> Option<&BoundPair> {
        self.bound_estimates.iter().find(|b| b.family == family)
    }
}

/// Estimate `θ_c`, the requested bound families and one interval per family.
pub fn analyze_late(
    s: &ObservedSample,
    alpha: f64,
    families: &[LateFamily],
    opts: &LateOptions,
) -> Result<LateAnalysis> {
    let theta_hat = diff_in_means(s)?;
    let pc = pi_c_hat(s, opts)?;
    let theta_c_hat = theta_hat / pc;
    let phi2_check_arm = (
        arm_variance_adjusted(s, theta_c_hat, Arm::Treatment)?,
        arm_variance_adjusted(s, theta_c_hat, Arm::Control)?,
    );
    let lambda = (0..s.num_strata())
        .map(|k| {
            let (lambda1, lambda0) = lambda_hats(s, k)?;
            Ok(StratumLambda {
                stratum: s.labels()[k].clone(),
                lambda1,
                lambda0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bound_estimates = Vec::new();
    let mut intervals = Vec::new();
    for &family in families {
        let pair = family_bounds(s, theta_c_hat, family, opts)?;
        let var = variance_at(s, theta_c_hat, pc, pair.map_or(0.0, |b| b.lower))?;
        intervals.push(LateFamilyInterval {
            family,
            sigma_c_hat2: var,
            ci: normal_interval(theta_c_hat, var.value, s.population_size(), alpha)?,
            p_value_negative: one_sided_p_value(theta_c_hat, var.value, s.population_size()),
        });
        if let Some(b) = pair {
            bound_estimates.push(b);
        }
    }
    Ok(LateAnalysis {
        alpha,
        population_size: s.population_size(),
        n1: s.n1(),
        n0: s.n0(),
        theta_hat,
        pi_c_hat: pc,
        theta_c_hat,
        phi2_check_arm,
        lambda,
        bound_estimates,
        intervals,
    })
}

/// Merge strata whose `λ̂_{1k}` or `λ̂_{0k}` falls below the threshold into an
/// adjacent stratum.
pub fn merge_weak_strata(
    s: &ObservedSample,
    opts: &LateOptions,
) -> Result<(ObservedSample, Vec<crate::estimate::StratumMerge>)> {
    require_takeup(s)?;
    crate::estimate::merge_strata_while(s, |sample, k| {
        [Arm::Treatment, Arm::Control].into_iter().any(|arm| {
            let (num, den) = lambda_fraction(sample, Some(k), arm);
            num == 0 || (num as f64 / den as f64).abs() < opts.eps_lambda
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::GeneralizedInverse;

    fn sample(rows: &[(bool, f64, bool, &str)]) -> ObservedSample {
        let t: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let d: Vec<bool> = rows.iter().map(|r| r.2).collect();
        let w: Vec<&str> = rows.iter().map(|r| r.3).collect();
        ObservedSample::from_columns(&t, &y, Some(&d), &w).unwrap()
    }

    // treated (y=2, d=1), (y=0, d=0); control (y=1, d=0), (y=0, d=0)
    fn worked() -> ObservedSample {
        sample(&[
            (true, 2.0, true, "x"),
            (true, 0.0, false, "x"),
            (false, 1.0, false, "x"),
            (false, 0.0, false, "x"),
        ])
    }

    #[test]
    fn complier_share() {
        let opts = LateOptions::default();
        let s = sample(&[(true, 0.0, true, "x"), (true, 0.0, false, "x"), (false, 0.0, false, "x"), (false, 0.0, false, "x")]);
        assert_eq!(pi_c_hat(&s, &opts).unwrap(), 0.5);
        let perfect = sample(&[(true, 1.0, true, "x"), (false, 0.0, false, "x")]);
        assert_eq!(pi_c_hat(&perfect, &opts).unwrap(), 1.0);
        let none = sample(&[(true, 1.0, false, "x"), (false, 0.0, false, "x")]);
        assert!(matches!(pi_c_hat(&none, &opts), Err(Error::WeakInstrument(_))));
    }

    #[test]
    fn wald_on_worked_sample() {
        let s = worked();
        let opts = LateOptions::default();
        assert_eq!(diff_in_means(&s).unwrap(), 0.5);
        assert_eq!(wald(&s, &opts).unwrap(), 1.0);
        let null = sample(&[(true, 1.0, true, "x"), (true, 0.0, false, "x"), (false, 1.0, false, "x"), (false, 0.0, false, "x")]);
        assert_eq!(wald(&null, &opts).unwrap(), 0.0);
    }

    #[test]
    fn adjusted_arm_variance() {
        let s = worked();
        assert_eq!(arm_variance_adjusted(&s, 1.0, Arm::Treatment).unwrap(), 0.5);
        // no take-up in the control arm: raw variance
        assert_eq!(
            arm_variance_adjusted(&s, 1.0, Arm::Control).unwrap(),
            crate::estimate::arm_variance(&s, Arm::Control).unwrap()
        );
        let flat = sample(&[(true, 3.0, true, "x"), (true, 2.0, false, "x"), (false, 0.0, false, "x")]);
        assert_eq!(arm_variance_adjusted(&flat, 1.0, Arm::Treatment).unwrap(), 0.0);
    }

    #[test]
    fn lambda_examples() {
        let s = worked();
        assert_eq!(lambda_hats(&s, 0).unwrap(), (0.5, 0.5));
        let perfect = sample(&[(true, 1.0, true, "x"), (true, 2.0, true, "x"), (false, 0.0, false, "x")]);
        assert_eq!(lambda_hats(&perfect, 0).unwrap(), (1.0, 1.0));
        assert_eq!(lambda_hats(&s, 5).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn f_check_worked_sample() {
        let s = worked();
        let opts = LateOptions::default();
        for arm in [Arm::Treatment, Arm::Control] {
            let f = f_check(&s, 1.0, arm, 0, &opts).unwrap();
            for u in [0.01, 0.5, 1.0] {
                assert_eq!(f.generalized_inverse(u).unwrap(), 1.0);
            }
        }
        let b = late_bound_estimates(&s, &opts).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn f_check_perfect_compliance_is_shifted_ecdf() {
        let s = sample(&[(true, 3.0, true, "x"), (true, 5.0, true, "x"), (false, 1.0, false, "x"), (false, 0.0, false, "x")]);
        let f = f_check(&s, 2.0, Arm::Treatment, 0, &LateOptions::default()).unwrap();
        assert_eq!(f.support(), &[1.0, 3.0]);
        assert_eq!(f.values(), vec![0.5, 1.0]);
    }

    #[test]
    fn f_check_dips_below_zero() {
        // a control-arm taker with a small adjusted value is subtracted first
        let s = sample(&[
            (true, 5.0, true, "x"),
            (true, 6.0, true, "x"),
            (true, 0.0, false, "x"),
            (false, 1.0, true, "x"),
            (false, 0.0, false, "x"),
            (false, 0.5, false, "x"),
        ]);
        let f = f_check(&s, 2.0, Arm::Treatment, 0, &LateOptions::default()).unwrap();
        assert!(f.values()[0] < 0.0);
        assert!(!f.is_monotone());
        assert!(f.generalized_inverse(0.5).unwrap().is_finite());
    }

    #[test]
    fn f_check_rejects_tiny_lambda() {
        let s = sample(&[(true, 0.0, true, "a"), (false, 0.0, false, "a"), (true, 1.0, false, "b"), (false, 1.0, false, "b")]);
        assert!(matches!(
            f_check(&s, 0.0, Arm::Treatment, 1, &LateOptions::default()),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn variance_examples() {
        let s = worked();
        let opts = LateOptions::default();
        assert_eq!(sigma_c_hat2(&s, LateFamily::SharpLate, &opts).unwrap(), 8.0);
        let ci = ci_late(&s, 0.05, LateFamily::SharpLate, &opts).unwrap();
        let q = normal::upper_quantile(0.025).unwrap();
        assert!((ci.hi - (1.0 + q * 2f64.sqrt())).abs() < 1e-12);
        assert!((ci.lo - (1.0 - q * 2f64.sqrt())).abs() < 1e-12);
        let v = VarianceEstimate::combine(4, 2, 2, 1.0, 1.0, 0.0, 1.0 / 0.25);
        assert_eq!(v.value, 16.0);
    }

    #[test]
    fn lambda_identities_are_exact() {
        let s = sample(&[
            (true, 1.0, true, "a"),
            (true, 2.0, false, "b"),
            (true, 0.5, true, "b"),
            (false, 1.5, true, "a"),
            (false, 0.0, false, "b"),
            (false, 3.0, false, "a"),
            (false, 1.0, false, "b"),
        ]);
        let pc = pi_c_ratio(&s).unwrap();
        let total: Ratio<i64> = (0..s.num_strata()).map(|k| lambda_ratios(&s, k).unwrap().0).sum();
        assert_eq!(total, pc);
        for k in 0..s.num_strata() {
            assert_eq!(pc * pi_k_given_c_ratio(&s, k).unwrap(), lambda_ratios(&s, k).unwrap().0);
        }
    }

    #[test]
    fn p_values() {
        assert_eq!(one_sided_p_value(0.0, 1.0, 100), 0.5);
        assert_eq!(one_sided_p_value(0.0, 0.0, 100), 0.5);
        assert!(one_sided_p_value(-1.0, 1.0, 100) < 1e-6);
    }

    #[test]
    fn family_names() {
        for f in LateFamily::ALL {
            assert_eq!(f.name().parse::<LateFamily>().unwrap(), f);
        }
    }
}
