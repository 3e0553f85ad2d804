//! Plug-in estimators and conservative intervals under perfect compliance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    dummy_design, phi2_tau, weighted_couplings, BoundFamily, BoundPair, Level, RegressionFit,
};
use crate::error::{Error, Result};
use crate::normal;
use crate::population::{pop_variance, Arm, FinitePopulation, ObservedSample};
use crate::transport::{quantile_l2_antimonotone, quantile_l2_comonotone, StepCdf};

/// Lower-bound estimate subtracted in the variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerFamily {
    /// Subtract nothing: the classical conservative variance.
    NaiveZero,
    Aronow,
    Ding,
    Sharp,
}

impl LowerFamily {
    pub const ALL: [LowerFamily; 4] = [
        LowerFamily::NaiveZero,
        LowerFamily::Aronow,
        LowerFamily::Ding,
        LowerFamily::Sharp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LowerFamily::NaiveZero => "naive-zero",
            LowerFamily::Aronow => "aronow",
            LowerFamily::Ding => "ding",
            LowerFamily::Sharp => "sharp",
        }
    }

    pub fn bound_family(self) -> Option<BoundFamily> {
        match self {
            LowerFamily::NaiveZero => None,
            LowerFamily::Aronow => Some(BoundFamily::Aronow),
            LowerFamily::Ding => Some(BoundFamily::Ding),
            LowerFamily::Sharp => Some(BoundFamily::Sharp),
        }
    }
}

impl fmt::Display for LowerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LowerFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LowerFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown bound family `{s}`")))
    }
}

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn centered(center: f64, half_width: f64) -> Self {
        Interval {
            lo: center - half_width,
            hi: center + half_width,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Variance estimate `σ̂²` together with the raw quantities it was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    /// Final value, clamped at 0.
    pub value: f64,
    /// Value before the final clamp.
    pub raw: f64,
    /// Lower-bound estimate as computed, possibly negative.
    pub lower_raw: f64,
    /// Whether the subtracted lower bound was raised to 0.
    pub lower_clamped: bool,
    /// Whether the final value was raised to 0.
    pub clamped: bool,
}

impl VarianceEstimate {
    /// `scale · ((N/n1) φ1 + (N/n0) φ0 − max(lower, 0))`, then clamped at 0.
    pub fn combine(
        population_size: usize,
        n1: usize,
        n0: usize,
        phi1: f64,
        phi0: f64,
        lower_raw: f64,
        scale: f64,
    ) -> Self {
        let n = population_size as f64;
        let lower = lower_raw.max(0.0);
        let raw = scale * (n / n1 as f64 * phi1 + n / n0 as f64 * phi0 - lower);
        VarianceEstimate {
            value: raw.max(0.0),
            raw,
            lower_raw,
            lower_clamped: lower_raw < 0.0,
            clamped: raw < 0.0,
        }
    }
}

fn arm_values(s: &ObservedSample, arm: Arm) -> Vec<f64> {
    s.arm(arm).map(|u| u.y).collect()
}

fn require_both_arms(s: &ObservedSample) -> Result<()> {
    if s.n1() == 0 || s.n0() == 0 {
        return Err(Error::degenerate(format!(
            "both arms need units (treated {}, control {})",
            s.n1(),
            s.n0()
        )));
    }
    Ok(())
}

/// `θ̂`: treated mean minus control mean.
pub fn diff_in_means(s: &ObservedSample) -> Result<f64> {
    require_both_arms(s)?;
    let m = |arm| arm_values(s, arm).iter().sum::<f64>() / s.arm_size(arm) as f64;
    Ok(m(Arm::Treatment) - m(Arm::Control))
}

/// Sample variance with divisor `n − 1`.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::degenerate(format!(
            "variance needs at least two units, got {n}"
        )));
    }
    Ok(pop_variance(values)? * n as f64 / (n - 1) as f64)
}

/// `φ̂²_t`.
pub fn arm_variance(s: &ObservedSample, arm: Arm) -> Result<f64> {
    sample_variance(&arm_values(s, arm))
        .map_err(|e| Error::degenerate(format!("{arm:?} arm: {e}")))
}

/// Stratum shares and per-arm stratum-conditional empirical distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumEstimates {
    /// `π̂_k` over all enrolled units.
    pub shares: Vec<f64>,
    /// `F̂_{1|k}`.
    pub treated: Vec<StepCdf>,
    /// `F̂_{0|k}`.
    pub control: Vec<StepCdf>,
}

/// Strata of `s` that lack treated or control units.
pub fn strata_missing_an_arm(s: &ObservedSample) -> Vec<usize> {
    let k = s.num_strata();
    let mut seen = vec![(false, false); k];
    for u in s.units() {
        if u.treated {
            seen[u.stratum].0 = true;
        } else {
            seen[u.stratum].1 = true;
        }
    }
    (0..k).filter(|&j| !(seen[j].0 && seen[j].1)).collect()
}

pub fn stratum_estimates(s: &ObservedSample) -> Result<StratumEstimates> {
    if let Some(&k) = strata_missing_an_arm(s).first() {
        return Err(Error::degenerate(format!(
            "stratum `{}` lacks treated or control units",
            s.labels()[k]
        )));
    }
    let k = s.num_strata();
    let mut counts = vec![0usize; k];
    let mut values = vec![(Vec::new(), Vec::new()); k];
    for u in s.units() {
        counts[u.stratum] += 1;
        if u.treated {
            values[u.stratum].0.push(u.y);
        } else {
            values[u.stratum].1.push(u.y);
        }
    }
    let n = s.n() as f64;
    let mut treated = Vec::with_capacity(k);
    let mut control = Vec::with_capacity(k);
    for (t, c) in &values {
        treated.push(StepCdf::empirical(t)?);
        control.push(StepCdf::empirical(c)?);
    }
    Ok(StratumEstimates {
        shares: counts.iter().map(|&c| c as f64 / n).collect(),
        treated,
        control,
    })
}

/// Plug-in sharp bounds `Σ_k π̂_k coupling(F̂_{1|k}, F̂_{0|k}) − θ̂²`.
pub fn bound_estimates_cov(s: &ObservedSample) -> Result<BoundPair> {
    let est = stratum_estimates(s)?;
    let terms: Vec<_> = est
        .shares
        .into_iter()
        .zip(est.treated)
        .zip(est.control)
        .map(|((w, f1), f0)| (w, f1, f0))
        .collect();
    let (lo, hi) = weighted_couplings(&terms)?;
    let theta = diff_in_means(s)?;
    BoundPair::new(
        lo - theta * theta,
        hi - theta * theta,
        BoundFamily::Sharp,
        Level::Plugin,
    )
}

/// Plug-in bounds from the marginal arm distributions.
pub fn plugin_aronow(s: &ObservedSample) -> Result<BoundPair> {
    let pair = bound_estimates_cov(&s.pooled())?;
    Ok(BoundPair {
        family: BoundFamily::Aronow,
        ..pair
    })
}

/// Plug-in regression bounds: per-arm least squares on the stratum dummies,
/// `φ̂²(τ̂_w)` over all enrolled units plus the couplings of the per-arm
/// residual distributions.
pub fn plugin_ding(s: &ObservedSample) -> Result<BoundPair> {
    require_both_arms(s)?;
    let k = s.num_strata();
    let mut fits = Vec::with_capacity(2);
    for arm in [Arm::Treatment, Arm::Control] {
        let strata: Vec<usize> = s.arm(arm).map(|u| u.stratum).collect();
        let design = dummy_design(&strata, k);
        let fit = RegressionFit::fit(&design, &arm_values(s, arm)).map_err(|e| match e {
            Error::Regression(m) => Error::Regression(format!("{arm:?} arm: {m}")),
            other => other,
        })?;
        fits.push(fit);
    }
    let contrast: Vec<f64> = fits[0]
        .coefficients
        .iter()
        .zip(&fits[1].coefficients)
        .map(|(a, b)| a - b)
        .collect();
    let all = dummy_design(&s.units().iter().map(|u| u.stratum).collect::<Vec<_>>(), k);
    let tau_w: Vec<f64> = all
        .iter()
        .map(|row| row.iter().zip(&contrast).map(|(x, c)| x * c).sum())
        .collect();
    let base = pop_variance(&tau_w)?;
    let e1 = StepCdf::empirical(&fits[0].residuals)?;
    let e0 = StepCdf::empirical(&fits[1].residuals)?;
    BoundPair::new(
        base + quantile_l2_comonotone(&e1, &e0)?,
        base + quantile_l2_antimonotone(&e1, &e0)?,
        BoundFamily::Ding,
        Level::Plugin,
    )
}

/// Plug-in bound pair for a family; `None` for the naive family.
pub fn plugin_bounds(s: &ObservedSample, family: LowerFamily) -> Result<Option<BoundPair>> {
    Ok(match family {
        LowerFamily::NaiveZero => None,
        LowerFamily::Aronow => Some(plugin_aronow(s)?),
        LowerFamily::Ding => Some(plugin_ding(s)?),
        LowerFamily::Sharp => Some(bound_estimates_cov(s)?),
    })
}

fn variance_from_lower(s: &ObservedSample, lower_raw: f64) -> Result<VarianceEstimate> {
    let phi1 = arm_variance(s, Arm::Treatment)?;
    let phi0 = arm_variance(s, Arm::Control)?;
    Ok(VarianceEstimate::combine(
        s.population_size(),
        s.n1(),
        s.n0(),
        phi1,
        phi0,
        lower_raw,
        1.0,
    ))
}

/// `σ̂² = (N/n1) φ̂²_1 + (N/n0) φ̂²_0 − max(φ̂²_L, 0)`, clamped at 0, with its parts.
pub fn variance_estimate(s: &ObservedSample, family: LowerFamily) -> Result<VarianceEstimate> {
    let lower = plugin_bounds(s, family)?.map_or(0.0, |b| b.lower);
    variance_from_lower(s, lower)
}

/// `σ̂²` for the chosen lower-bound family.
pub fn sigma_hat2(s: &ObservedSample, family: LowerFamily) -> Result<f64> {
    Ok(variance_estimate(s, family)?.value)
}

/// `q_α` with `Φ(q_α) = 1 − α`.
pub fn normal_upper_quantile(alpha: f64) -> Result<f64> {
    normal::upper_quantile(alpha)
}

/// `center ± q_{α/2} √(σ̂² / N)`.
pub fn normal_interval(center: f64, sigma2: f64, population_size: usize, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if sigma2 < 0.0 || !sigma2.is_finite() {
        return Err(Error::domain(format!("variance {sigma2} is not a nonnegative number")));
    }
    let q = normal_upper_quantile(alpha / 2.0)?;
    Ok(Interval::centered(center, q * (sigma2 / population_size as f64).sqrt()))
}

/// Conservative `1 − α` interval for `θ`.
pub fn confidence_interval(s: &ObservedSample, alpha: f64, family: LowerFamily) -> Result<Interval> {
    normal_interval(diff_in_means(s)?, sigma_hat2(s, family)?, s.population_size(), alpha)
}

/// `σ² = (N/n1) φ²(y1) + (N/n0) φ²(y0) − φ²(τ)`; `Var(θ̂) = σ² / (N − 1)`.
pub fn design_sigma2(pop: &FinitePopulation, n1: usize, n0: usize) -> Result<f64> {
    if n1 == 0 || n0 == 0 || n1 + n0 != pop.size() {
        return Err(Error::domain("arm sizes must be positive and sum to N"));
    }
    let n = pop.size() as f64;
    Ok(n / n1 as f64 * pop_variance(pop.y1())? + n / n0 as f64 * pop_variance(pop.y0())?
        - phi2_tau(pop))
}

/// Interval and variance estimate for one lower-bound family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyInterval {
    pub family: LowerFamily,
    pub sigma_hat2: VarianceEstimate,
    pub ci: Interval,
}

/// Complete perfect-compliance analysis of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteAnalysis {
    pub alpha: f64,
    pub population_size: usize,
    pub n1: usize,
    pub n0: usize,
    pub theta_hat: f64,
    /// `(φ̂²_1, φ̂²_0)`.
    pub phi2_arm: (f64, f64),
    pub bound_estimates: Vec<BoundPair>,
    pub intervals: Vec<FamilyInterval>,
}

impl AteAnalysis {
    pub fn interval(&self, family: LowerFamily) -> Option<&FamilyInterval> {
        self.intervals.iter().find(|i| i.family == family)
    }

    pub fn bounds(&self, family: BoundFamily) -> Option<&BoundPair> {
        self.bound_estimates.iter().find(|b| b.family == family)
    }
}

/// Estimate `θ`, the requested bound families, and one interval per family.
pub fn analyze_ate(s: &ObservedSample, alpha: f64, families: &[LowerFamily]) -> Result<AteAnalysis> {
    let theta_hat = diff_in_means(s)?;
    let phi2_arm = (arm_variance(s, Arm::Treatment)?, arm_variance(s, Arm::Control)?);
    let mut bound_estimates = Vec::new();
    let mut intervals = Vec::new();
    for &family in families {
        let pair = plugin_bounds(s, family)?;
        let var = VarianceEstimate::combine(
            s.population_size(),
            s.n1(),
            s.n0(),
            phi2_arm.0,
            phi2_arm.1,
            pair.map_or(0.0, |b| b.lower),
            1.0,
        );
        intervals.push(FamilyInterval {
            family,
            sigma_hat2: var,
            ci: normal_interval(theta_hat, var.value, s.population_size(), alpha)?,
        });
        if let Some(b) = pair {
            bound_estimates.push(b);
        }
    }
    Ok(AteAnalysis {
        alpha,
        population_size: s.population_size(),
        n1: s.n1(),
        n0: s.n0(),
        theta_hat,
        phi2_arm,
        bound_estimates,
        intervals,
    })
}

/// One merge performed by [`merge_strata_while`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StratumMerge {
    pub from: String,
    pub into: String,
}

/// Repeatedly merge the first offending stratum into its successor (or its
/// predecessor when it is last) until `is_bad` holds for none or a single
/// stratum remains.
pub fn merge_strata_while<F>(s: &ObservedSample, is_bad: F) -> Result<(ObservedSample, Vec<StratumMerge>)>
where
    F: Fn(&ObservedSample, usize) -> bool,
{
    let mut current = s.clone();
    let mut merges = Vec::new();
    loop {
        let k = current.num_strata();
        let Some(bad) = (0..k).find(|&j| is_bad(&current, j)) else {
            break;
        };
        if k == 1 {
            break;
        }
        let target = if bad + 1 < k { bad + 1 } else { bad - 1 };
        let labels = current.labels();
        let merged_label = if bad < target {
            format!("{}+{}", labels[bad], labels[target])
        } else {
            format!("{}+{}", labels[target], labels[bad])
        };
        merges.push(StratumMerge {
            from: labels[bad].clone(),
            into: labels[target].clone(),
        });
        let keep = bad.min(target);
        let drop = bad.max(target);
        let map: Vec<usize> = (0..k)
            .map(|j| match j {
                j if j == drop => keep,
                j if j > drop => j - 1,
                j => j,
            })
            .collect();
        let mut new_labels: Vec<String> = labels
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != drop)
            .map(|(_, l)| l.clone())
            .collect();
        new_labels[keep] = merged_label;
        current = current.remap_strata(&map, new_labels)?;
    }
    Ok((current, merges))
}

/// Merge strata that lack treated or control units into an adjacent stratum.
pub fn merge_sparse_strata(s: &ObservedSample) -> Result<(ObservedSample, Vec<StratumMerge>)> {
    merge_strata_while(s, |sample, k| strata_missing_an_arm(sample).contains(&k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Unit;

    fn sample(treated: &[f64], control: &[f64]) -> ObservedSample {
        let t: Vec<bool> = treated.iter().map(|_| true).chain(control.iter().map(|_| false)).collect();
        let y: Vec<f64> = treated.iter().chain(control).copied().collect();
        ObservedSample::from_columns(&t, &y, None, &vec![0; y.len()]).unwrap()
    }

    fn stratified(rows: &[(bool, f64, &str)]) -> ObservedSample {
        let t: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let w: Vec<&str> = rows.iter().map(|r| r.2).collect();
        ObservedSample::from_columns(&t, &y, None, &w).unwrap()
    }

    #[test]
    fn difference_in_means() {
        assert_eq!(diff_in_means(&sample(&[2.0, 4.0], &[1.0, 3.0])).unwrap(), 1.0);
        assert_eq!(diff_in_means(&sample(&[2.0, 5.0], &[2.0, 5.0])).unwrap(), 0.0);
        assert_eq!(diff_in_means(&sample(&[1.0], &[0.0])).unwrap(), 1.0);
        assert!(matches!(diff_in_means(&sample(&[1.0], &[])), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn arm_variances() {
        let s = sample(&[1.0, 2.0, 3.0], &[4.0, 4.0]);
        assert_eq!(arm_variance(&s, Arm::Treatment).unwrap(), 1.0);
        assert_eq!(arm_variance(&s, Arm::Control).unwrap(), 0.0);
        assert_eq!(arm_variance(&sample(&[0.0, 1.0], &[0.0]), Arm::Treatment).unwrap(), 0.5);
        assert!(arm_variance(&sample(&[0.0, 1.0], &[0.0]), Arm::Control).is_err());
    }

    #[test]
    fn stratum_shares_and_cdfs() {
        let s = stratified(&[(true, 0.0, "a"), (true, 1.0, "a"), (false, 0.0, "a"), (false, 2.0, "b"), (true, 3.0, "b"), (false, 1.0, "b")]);
        let e = stratum_estimates(&s).unwrap();
        assert_eq!(e.shares, vec![0.5, 0.5]);
        assert_eq!(e.treated[0].support(), &[0.0, 1.0]);
        assert_eq!(e.treated[0].cumulative(), vec![0.5, 1.0]);
        let missing = stratified(&[(true, 0.0, "a"), (false, 0.0, "a"), (true, 1.0, "b")]);
        match stratum_estimates(&missing) {
            Err(Error::DegenerateDesign(m)) => assert!(m.contains("`b`")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plugin_sharp_bounds() {
        let s = sample(&[0.0, 1.0], &[0.0, 1.0]);
        let b = bound_estimates_cov(&s).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 1.0));
        let c = bound_estimates_cov(&sample(&[2.0, 2.0], &[2.0, 2.0])).unwrap();
        assert_eq!((c.lower, c.upper), (0.0, 0.0));
        let a = plugin_aronow(&s).unwrap();
        assert_eq!((a.lower, a.upper), (b.lower, b.upper));
    }

    #[test]
    fn plugin_ding_without_residuals() {
        // outcomes constant within stratum and arm, equal contrast in every stratum
        let s = stratified(&[(true, 3.0, "a"), (false, 1.0, "a"), (true, 5.0, "b"), (false, 3.0, "b")]);
        let d = plugin_ding(&s).unwrap();
        assert!(d.lower.abs() < 1e-12 && d.upper.abs() < 1e-12);
        let missing = stratified(&[(true, 0.0, "a"), (false, 0.0, "a"), (true, 1.0, "b"), (true, 2.0, "b")]);
        assert!(matches!(plugin_ding(&missing), Err(Error::Regression(_))));
    }

    #[test]
    fn variance_combination() {
        let v = VarianceEstimate::combine(4, 2, 2, 1.0, 1.0, 0.0, 1.0);
        assert_eq!(v.value, 4.0);
        let c = VarianceEstimate::combine(4, 2, 2, 1.0, 1.0, -0.3, 1.0);
        assert_eq!(c.value, 4.0);
        assert!(c.lower_clamped);
        let z = VarianceEstimate::combine(4, 2, 2, 0.1, 0.1, 5.0, 1.0);
        assert_eq!(z.value, 0.0);
        assert!(z.clamped && z.raw < 0.0);
    }

    #[test]
    fn interval_examples() {
        let ci = normal_interval(1.0, 4.0, 100, 0.05).unwrap();
        assert!((ci.lo - 0.608007).abs() < 1e-6);
        assert!((ci.hi - 1.391993).abs() < 1e-6);
        assert_eq!(normal_interval(2.5, 0.0, 10, 0.05).unwrap(), Interval { lo: 2.5, hi: 2.5 });
        let w = normal_interval(0.0, 9.0, 4, 0.32).unwrap();
        assert!((w.hi - 1.5 * 0.994457883209753).abs() < 1e-9);
        assert!(normal_interval(0.0, 1.0, 4, 1.0).is_err());
    }

    #[test]
    fn upper_quantiles() {
        assert!(normal_upper_quantile(0.5).unwrap().abs() < 1e-12);
        assert!((normal_upper_quantile(0.025).unwrap() - 1.959963984540054).abs() < 1e-8);
        assert!((normal_upper_quantile(0.16).unwrap() - 0.994457883209753).abs() < 1e-8);
        assert!(normal_upper_quantile(0.0).is_err());
    }

    #[test]
    fn sharp_interval_not_wider_than_naive() {
        let s = sample(&[0.0, 1.0, 3.0, 4.0], &[0.5, 2.0, 2.5, 6.0]);
        let a = analyze_ate(&s, 0.05, &LowerFamily::ALL).unwrap();
        let naive = a.interval(LowerFamily::NaiveZero).unwrap().ci.width();
        let sharp = a.interval(LowerFamily::Sharp).unwrap().ci.width();
        assert!(sharp <= naive);
        assert_eq!(a.bound_estimates.len(), 3);
    }

    #[test]
    fn family_names_round_trip() {
        for f in LowerFamily::ALL {
            assert_eq!(f.name().parse::<LowerFamily>().unwrap(), f);
        }
        assert!("sharpest".parse::<LowerFamily>().is_err());
    }

    #[test]
    fn merging_sparse_strata() {
        let s = stratified(&[
            (true, 0.0, "a"),
            (false, 1.0, "a"),
            (true, 2.0, "b"),
            (true, 3.0, "c"),
            (false, 4.0, "c"),
        ]);
        let (m, merges) = merge_sparse_strata(&s).unwrap();
        assert_eq!(m.labels(), &["a", "b+c"]);
        assert_eq!(merges, vec![StratumMerge { from: "b".into(), into: "c".into() }]);
        assert!(stratum_estimates(&m).is_ok());
        let last = stratified(&[(true, 0.0, "a"), (false, 1.0, "a"), (true, 2.0, "b")]);
        let (m, _) = merge_sparse_strata(&last).unwrap();
        assert_eq!(m.labels(), &["a+b"]);
        assert_eq!(m.units()[2], Unit { treated: true, y: 2.0, takeup: None, stratum: 0 });
    }
}
