//! Finite populations, observed samples and descriptive functionals.
//!
//! A [`FinitePopulation`] holds both potential outcomes of every unit, the
//! stratum each unit belongs to and, for experiments with noncompliance, the
//! compliance type. An [`ObservedSample`] is what an experiment reveals: the
//! assignment, the outcome under the assigned arm, optionally the treatment
//! actually taken, and the stratum.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::transport::StepCdf;

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treatment, Arm::Control];

    pub fn is_treatment(self) -> bool {
        self == Arm::Treatment
    }

    pub fn of(treated: bool) -> Arm {
        if treated {
            Arm::Treatment
        } else {
            Arm::Control
        }
    }
}

/// Principal stratum defined by the treatment taken under each assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplianceType {
    AlwaysTaker,
    Complier,
    NeverTaker,
    Defier,
}

impl ComplianceType {
    /// Treatment taken under (treatment, control) assignment.
    pub fn takeup(self) -> (bool, bool) {
        match self {
            ComplianceType::AlwaysTaker => (true, true),
            ComplianceType::Complier => (true, false),
            ComplianceType::NeverTaker => (false, false),
            ComplianceType::Defier => (false, true),
        }
    }

    pub fn takeup_under(self, arm: Arm) -> bool {
        let (d1, d0) = self.takeup();
        if arm.is_treatment() {
            d1
        } else {
            d0
        }
    }
}

/// Partition of units into strata.
///
/// Strata are indexed `0..K` in order of first appearance; labels are kept
/// for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumTable {
    index: Vec<usize>,
    labels: Vec<String>,
    members: Vec<Vec<usize>>,
}

impl StratumTable {
    pub fn from_keys<K>(keys: &[K]) -> Result<Self>
    where
        K: Eq + Hash + Clone + ToString,
    {
        if keys.is_empty() {
            return Err(Error::domain("stratum table needs at least one unit"));
        }
        let mut lookup: HashMap<K, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut index = Vec::with_capacity(keys.len());
        for (i, key) in keys.iter().enumerate() {
            let k = *lookup.entry(key.clone()).or_insert_with(|| {
                labels.push(key.to_string());
                members.push(Vec::new());
                labels.len() - 1
            });
            members[k].push(i);
            index.push(k);
        }
        Ok(StratumTable {
            index,
            labels,
            members,
        })
    }

    /// A single stratum holding all `n` units.
    pub fn single(n: usize) -> Self {
        StratumTable {
            index: vec![0; n],
            labels: vec!["all".to_string()],
            members: vec![(0..n).collect()],
        }
    }

    pub fn num_units(&self) -> usize {
        self.index.len()
    }

    /// `K`.
    pub fn num_strata(&self) -> usize {
        self.labels.len()
    }

    pub fn stratum_of(&self, unit: usize) -> usize {
        self.index[unit]
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn count(&self, k: usize) -> usize {
        self.members[k].len()
    }

    /// `π_k = N_k / N`.
    pub fn share(&self, k: usize) -> f64 {
        self.count(k) as f64 / self.num_units() as f64
    }

    pub fn shares(&self) -> Vec<f64> {
        (0..self.num_strata()).map(|k| self.share(k)).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Complete potential-outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    y1: Vec<f64>,
    y0: Vec<f64>,
    strata: StratumTable,
    compliance: Option<Vec<ComplianceType>>,
}

impl FinitePopulation {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>, strata: StratumTable) -> Result<Self> {
        let n = y1.len();
        if n == 0 {
            return Err(Error::domain("population must contain at least one unit"));
        }
        if y0.len() != n || strata.num_units() != n {
            return Err(Error::domain(format!(
                "column lengths differ: y1 {n}, y0 {}, strata {}",
                y0.len(),
                strata.num_units()
            )));
        }
        if y1.iter().chain(&y0).any(|v| !v.is_finite()) {
            return Err(Error::domain("potential outcomes must be finite"));
        }
        Ok(FinitePopulation {
            y1,
            y0,
            strata,
            compliance: None,
        })
    }

    /// Population with a single stratum.
    pub fn unstratified(y1: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        let n = y1.len();
        Self::new(y1, y0, StratumTable::single(n))
    }

    pub fn with_compliance(mut self, types: Vec<ComplianceType>) -> Result<Self> {
        if types.len() != self.size() {
            return Err(Error::domain("compliance column has the wrong length"));
        }
        self.compliance = Some(types);
        Ok(self)
    }

    /// `N`.
    pub fn size(&self) -> usize {
        self.y1.len()
    }

    pub fn outcomes(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Treatment => &self.y1,
            Arm::Control => &self.y0,
        }
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn strata(&self) -> &StratumTable {
        &self.strata
    }

    pub fn compliance(&self) -> Option<&[ComplianceType]> {
        self.compliance.as_deref()
    }

    /// Unit-level effects `τ_i = y_{1i} − y_{0i}`.
    pub fn tau(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    /// The same units with all strata merged into one.
    pub fn without_strata(&self) -> FinitePopulation {
        FinitePopulation {
            strata: StratumTable::single(self.size()),
            ..self.clone()
        }
    }

    /// Replace the potential outcomes, keeping strata and compliance.
    pub(crate) fn with_outcomes(&self, y1: Vec<f64>, y0: Vec<f64>) -> FinitePopulation {
        FinitePopulation {
            y1,
            y0,
            ..self.clone()
        }
    }

    /// Treatment taken under `arm`, when compliance types are known.
    pub fn takeup(&self, arm: Arm) -> Option<Vec<bool>> {
        self.compliance
            .as_ref()
            .map(|g| g.iter().map(|t| t.takeup_under(arm)).collect())
    }

    fn require_compliance(&self) -> Result<&[ComplianceType]> {
        self.compliance
            .as_deref()
            .ok_or_else(|| Error::domain("population has no compliance types"))
    }

    /// Fails when a defier is present.
    pub fn check_monotonicity(&self) -> Result<()> {
        let g = self.require_compliance()?;
        match g.iter().position(|&t| t == ComplianceType::Defier) {
            Some(i) => Err(Error::AssumptionViolation(format!(
                "unit {i} is a defier; monotonicity fails"
            ))),
            None => Ok(()),
        }
    }

    /// Fails when some always or never taker has `y1 ≠ y0`.
    pub fn check_exclusion(&self) -> Result<()> {
        let g = self.require_compliance()?;
        for (i, t) in g.iter().enumerate() {
            let (d1, d0) = t.takeup();
            if d1 == d0 && self.y1[i] != self.y0[i] {
                return Err(Error::AssumptionViolation(format!(
                    "unit {i} has d1 = d0 but y1 = {} ≠ y0 = {}; exclusion restriction fails",
                    self.y1[i], self.y0[i]
                )));
            }
        }
        Ok(())
    }

    /// Number of compliers.
    pub fn complier_count(&self) -> Result<usize> {
        Ok(self
            .require_compliance()?
            .iter()
            .filter(|&&t| t == ComplianceType::Complier)
            .count())
    }

    /// `π_c`.
    pub fn complier_share(&self) -> Result<f64> {
        Ok(self.complier_count()? as f64 / self.size() as f64)
    }

    /// Adjusted outcomes `ỹ_t = y_t − θ_c d_t` for both arms.
    pub fn adjusted_outcomes(&self, theta_c: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.require_compliance()?;
        let adjust = |y: &[f64], arm: Arm| -> Vec<f64> {
            y.iter()
                .zip(g)
                .map(|(&v, t)| if t.takeup_under(arm) { v - theta_c } else { v })
                .collect()
        };
        Ok((
            adjust(&self.y1, Arm::Treatment),
            adjust(&self.y0, Arm::Control),
        ))
    }

    /// `τ̃ = ỹ_1 − ỹ_0` evaluated at the true local average treatment effect.
    pub fn tau_tilde(&self) -> Result<Vec<f64>> {
        let theta_c = late_truth(self)?;
        let (a, b) = self.adjusted_outcomes(theta_c)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }

    /// The outcomes revealed by an assignment, with `N` as the population size.
    pub fn observe(&self, assignment: &[bool]) -> Result<ObservedSample> {
        if assignment.len() != self.size() {
            return Err(Error::domain("assignment length differs from population size"));
        }
        let units = assignment
            .iter()
            .enumerate()
            .map(|(i, &treated)| {
                let arm = Arm::of(treated);
                Unit {
                    treated,
                    y: self.outcomes(arm)[i],
                    takeup: self.compliance.as_ref().map(|g| g[i].takeup_under(arm)),
                    stratum: self.strata.stratum_of(i),
                }
            })
            .collect();
        ObservedSample::new(units, self.strata.labels().to_vec(), self.size())
    }
}

/// One enrolled unit as revealed by the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub treated: bool,
    pub y: f64,
    pub takeup: Option<bool>,
    pub stratum: usize,
}

impl Unit {
    pub fn arm(&self) -> Arm {
        Arm::of(self.treated)
    }
}

/// Assignment-revealed data: `n = n1 + n0` enrolled units drawn from a
/// population of size `N ≥ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSample {
    units: Vec<Unit>,
    labels: Vec<String>,
    population_size: usize,
    n1: usize,
}

impl ObservedSample {
    pub fn new(units: Vec<Unit>, labels: Vec<String>, population_size: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::domain("sample has no units"));
        }
        if population_size < units.len() {
            return Err(Error::domain(format!(
                "population size {population_size} smaller than sample size {}",
                units.len()
            )));
        }
        let with_takeup = units.iter().filter(|u| u.takeup.is_some()).count();
        if with_takeup != 0 && with_takeup != units.len() {
            return Err(Error::domain(
                "treatment take-up must be present for all units or none",
            ));
        }
        if let Some(u) = units.iter().find(|u| u.stratum >= labels.len()) {
            return Err(Error::domain(format!(
                "stratum index {} has no label",
                u.stratum
            )));
        }
        if units.iter().any(|u| !u.y.is_finite()) {
            return Err(Error::domain("outcomes must be finite"));
        }
        let n1 = units.iter().filter(|u| u.treated).count();
        Ok(ObservedSample {
            units,
            labels,
            population_size,
            n1,
        })
    }

    /// Build from parallel columns; stratum keys are labelled in order of
    /// first appearance and `N = n`.
    pub fn from_columns<K>(
        treated: &[bool],
        y: &[f64],
        takeup: Option<&[bool]>,
        keys: &[K],
    ) -> Result<Self>
    where
        K: Eq + Hash + Clone + ToString,
    {
        let n = treated.len();
        if y.len() != n || keys.len() != n || takeup.is_some_and(|d| d.len() != n) {
            return Err(Error::domain("sample columns differ in length"));
        }
        let table = StratumTable::from_keys(keys)?;
        let units = (0..n)
            .map(|i| Unit {
                treated: treated[i],
                y: y[i],
                takeup: takeup.map(|d| d[i]),
                stratum: table.stratum_of(i),
            })
            .collect();
        ObservedSample::new(units, table.labels().to_vec(), n)
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_strata(&self) -> usize {
        self.labels.len()
    }

    /// `n`.
    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.units.len() - self.n1
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        match arm {
            Arm::Treatment => self.n1(),
            Arm::Control => self.n0(),
        }
    }

    /// `N`.
    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn has_takeup(&self) -> bool {
        self.units.first().is_some_and(|u| u.takeup.is_some())
    }

    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &Unit> + '_ {
        self.units.iter().filter(move |u| u.arm() == arm)
    }

    /// Same units with every stratum merged into one.
    pub fn pooled(&self) -> ObservedSample {
        let units = self
            .units
            .iter()
            .map(|u| Unit { stratum: 0, ..*u })
            .collect();
        ObservedSample {
            units,
            labels: vec!["all".to_string()],
            population_size: self.population_size,
            n1: self.n1,
        }
    }

    /// Relabel strata through `map` (old index → new index) with new labels.
    pub fn remap_strata(&self, map: &[usize], labels: Vec<String>) -> Result<ObservedSample> {
        if map.len() != self.labels.len() || map.iter().any(|&k| k >= labels.len()) {
            return Err(Error::domain("invalid stratum remapping"));
        }
        let units = self
            .units
            .iter()
            .map(|u| Unit {
                stratum: map[u.stratum],
                ..*u
            })
            .collect();
        ObservedSample::new(units, labels, self.population_size)
    }
}

/// `μ(a)`.
pub fn mean(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::domain("mean of an empty sequence"));
    }
    Ok(a.iter().sum::<f64>() / a.len() as f64)
}

/// `φ²(a)` with divisor `N`.
pub fn pop_variance(a: &[f64]) -> Result<f64> {
    let m = mean(a)?;
    Ok(a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / a.len() as f64)
}

/// Average treatment effect `θ = μ(y1) − μ(y0)`.
pub fn ate(pop: &FinitePopulation) -> f64 {
    // population constructor guarantees nonempty columns
    mean(pop.y1()).unwrap() - mean(pop.y0()).unwrap()
}

/// Average effect among compliers.
pub fn late_truth(pop: &FinitePopulation) -> Result<f64> {
    let g = pop.require_compliance()?;
    let (sum, count) = g
        .iter()
        .zip(pop.tau())
        .filter(|(t, _)| **t == ComplianceType::Complier)
        .fold((0.0, 0usize), |(s, c), (_, tau)| (s + tau, c + 1));
    if count == 0 {
        return Err(Error::WeakInstrument("population has no compliers".into()));
    }
    Ok(sum / count as f64)
}

/// `F_{t|k}`: empirical distribution of arm-`t` potential outcomes in stratum `k`.
pub fn conditional_cdf(pop: &FinitePopulation, arm: Arm, k: usize) -> Result<StepCdf> {
    if k >= pop.strata().num_strata() {
        return Err(Error::domain(format!("unknown stratum index {k}")));
    }
    let y = pop.outcomes(arm);
    let values: Vec<f64> = pop.strata().members(k).iter().map(|&i| y[i]).collect();
    StepCdf::empirical(&values)
}

/// How a numeric covariate is cut into groups.
#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// Explicit increasing cut points `e_1 < … < e_m`; group `j` holds values
    /// in `(e_{j-1}, e_j]`, so there are `m + 1` groups numbered from 1.
    FixedEdges(Vec<f64>),
    /// Roughly equal-count groups cut at empirical quantiles.
    Quantile(usize),
}

/// Number of groups `⌊N^{1/4}⌋` (at least 1).
pub fn default_bin_count(n: usize) -> usize {
    // integer fourth root, robust to floating error near perfect powers
    let mut r = (n as f64).powf(0.25).floor() as usize;
    while (r + 1).pow(4) <= n {
        r += 1;
    }
    while r > 0 && r.pow(4) > n {
        r -= 1;
    }
    r.max(1)
}

/// Map numeric values to 1-based group numbers.
pub fn stratify_numeric(values: &[f64], binning: &Binning) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::domain("nothing to stratify"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("covariate values must be finite"));
    }
    let edges = match binning {
        Binning::FixedEdges(edges) => {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain("bin edges must be finite and strictly increasing"));
            }
            edges.clone()
        }
        Binning::Quantile(bins) => {
            if *bins == 0 {
                return Err(Error::domain("number of bins must be positive"));
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let mut edges: Vec<f64> = (1..*bins)
                .map(|j| sorted[(j * n).div_ceil(*bins).max(1) - 1])
                .collect();
            edges.dedup();
            edges
        }
    };
    let groups: Vec<usize> = values
        .iter()
        .map(|&v| 1 + edges.partition_point(|&e| e < v))
        .collect();
    if matches!(binning, Binning::FixedEdges(_)) {
        return Ok(groups);
    }
    // quantile groups are renumbered contiguously
    let mut used: Vec<usize> = groups.clone();
    used.sort_unstable();
    used.dedup();
    Ok(groups
        .iter()
        .map(|g| used.binary_search(g).unwrap() + 1)
        .collect())
}

/// Empirical versions of the regularity conditions behind the asymptotic
/// results. Purely advisory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    /// `max_t (1/N) Σ y_{ti}⁴`.
    pub fourth_moment: f64,
    /// `K · min_k π_k`.
    pub stratum_positivity: f64,
    /// `K² log K / N`.
    pub strata_growth: f64,
    pub num_strata: usize,
    pub treated_fraction: f64,
    pub control_fraction: f64,
    /// `π_c`, when compliance types are known.
    pub complier_share: Option<f64>,
    /// Smallest eigenvalue of the covariance of `(y1, y0, d1, d0)`, or of
    /// `(y1, y0)` without compliance types.
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

/// Tolerance for the symmetric eigensolver.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

pub fn condition_diagnostics(pop: &FinitePopulation, n1: usize, n0: usize) -> DiagnosticsReport {
    let n = pop.size() as f64;
    let fourth = |y: &[f64]| y.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    let k = pop.strata().num_strata();
    let min_count = (0..k).map(|j| pop.strata().count(j)).min().unwrap_or(0);
    let mut warnings = Vec::new();

    for arm in Arm::BOTH {
        if pop_variance(pop.outcomes(arm)).unwrap() == 0.0 {
            warnings.push(format!("potential outcomes under {arm:?} have zero variance"));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![pop.y1().to_vec(), pop.y0().to_vec()];
    let mut complier_share = None;
    if let Some(g) = pop.compliance() {
        columns.push(g.iter().map(|t| t.takeup().0 as u8 as f64).collect());
        columns.push(g.iter().map(|t| t.takeup().1 as u8 as f64).collect());
        let pc = pop.complier_share().unwrap();
        if pc == 0.0 {
            warnings.push("population has no compliers".to_string());
        }
        complier_share = Some(pc);
    }
    let min_eigenvalue = smallest_covariance_eigenvalue(&columns);
    if min_eigenvalue <= EIGEN_TOLERANCE {
        warnings.push("outcome covariance matrix is singular".to_string());
    }

    DiagnosticsReport {
        fourth_moment: fourth(pop.y1()).max(fourth(pop.y0())),
        stratum_positivity: k as f64 * min_count as f64 / n,
        strata_growth: (k * k) as f64 * (k as f64).ln() / n,
        num_strata: k,
        treated_fraction: n1 as f64 / n,
        control_fraction: n0 as f64 / n,
        complier_share,
        min_eigenvalue,
        warnings,
    }
}

/// Smallest eigenvalue of `(1/N) Σ (z_i − z̄)(z_i − z̄)ᵀ` for the given columns.
pub fn smallest_covariance_eigenvalue(columns: &[Vec<f64>]) -> f64 {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if p == 0 || n == 0 {
        return 0.0;
    }
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let cov = DMatrix::from_fn(p, p, |a, b| {
        columns[a]
            .iter()
            .zip(&columns[b])
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum::<f64>()
            / n as f64
    });
    let eig = SymmetricEigen::try_new(cov, EIGEN_TOLERANCE, 0).expect("symmetric eigensolver");
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    // roundoff can push a zero eigenvalue slightly negative
    if min.abs() <= EIGEN_TOLERANCE {
        0.0
    } else {
        min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_variance() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean(&[4.5; 7]).unwrap(), 4.5);
        assert!((mean(&[0.98, 58.14]).unwrap() - 29.56).abs() < 1e-12);
        assert!(mean(&[]).is_err());
        assert!((pop_variance(&[1.0, 2.0, 3.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pop_variance(&[3.0; 4]).unwrap(), 0.0);
        assert_eq!(pop_variance(&[0.0, 1.0]).unwrap(), 0.25);
        assert!(pop_variance(&[]).is_err());
    }

    #[test]
    fn ate_cases() {
        let p = FinitePopulation::unstratified(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(ate(&p), 1.0);
        let q = FinitePopulation::unstratified(vec![2.0, 5.0], vec![2.0, 5.0]).unwrap();
        assert_eq!(ate(&q), 0.0);
    }

    #[test]
    fn late_truth_cases() {
        use ComplianceType::*;
        let all = FinitePopulation::unstratified(vec![3.0, 1.0], vec![0.0, 0.5])
            .unwrap()
            .with_compliance(vec![Complier, Complier])
            .unwrap();
        assert_eq!(late_truth(&all).unwrap(), ate(&all));

        let mixed = FinitePopulation::unstratified(vec![2.0, 4.0, 1.0, 7.0], vec![0.0, 2.0, 1.0, 7.0])
            .unwrap()
            .with_compliance(vec![Complier, Complier, AlwaysTaker, NeverTaker])
            .unwrap();
        assert_eq!(late_truth(&mixed).unwrap(), 2.0);
        assert!((late_truth(&mixed).unwrap() * mixed.complier_share().unwrap() - ate(&mixed)).abs() < 1e-12);

        let none = FinitePopulation::unstratified(vec![1.0], vec![1.0])
            .unwrap()
            .with_compliance(vec![NeverTaker])
            .unwrap();
        assert!(matches!(late_truth(&none), Err(Error::WeakInstrument(_))));
    }

    #[test]
    fn assumption_checks() {
        use ComplianceType::*;
        let p = FinitePopulation::unstratified(vec![1.0, 2.0], vec![1.0, 3.0])
            .unwrap()
            .with_compliance(vec![AlwaysTaker, NeverTaker])
            .unwrap();
        assert!(p.check_monotonicity().is_ok());
        assert!(matches!(p.check_exclusion(), Err(Error::AssumptionViolation(_))));
        let d = FinitePopulation::unstratified(vec![1.0], vec![0.0])
            .unwrap()
            .with_compliance(vec![Defier])
            .unwrap();
        assert!(d.check_monotonicity().is_err());
    }

    #[test]
    fn conditional_cdfs() {
        let strata = StratumTable::from_keys(&["a", "a", "b"]).unwrap();
        let p = FinitePopulation::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.0, 0.0], strata).unwrap();
        let f = conditional_cdf(&p, Arm::Treatment, 0).unwrap();
        assert_eq!(f.support(), &[0.0, 1.0]);
        assert_eq!(f.cumulative(), vec![0.5, 1.0]);
        let g = conditional_cdf(&p, Arm::Treatment, 1).unwrap();
        assert_eq!(g.support(), &[3.0]);
        assert_eq!(g.cumulative(), vec![1.0]);
        assert!(conditional_cdf(&p, Arm::Control, 2).is_err());
    }

    #[test]
    fn stratum_table_order_and_shares() {
        let t = StratumTable::from_keys(&[3, 1, 3, 2, 1, 3]).unwrap();
        assert_eq!(t.labels(), &["3", "1", "2"]);
        assert_eq!(t.index(), &[0, 1, 0, 2, 1, 0]);
        let total: usize = (0..t.num_strata()).map(|k| t.count(k)).sum();
        assert_eq!(total, t.num_units());
        assert_eq!(t.share(0), 0.5);
    }

    #[test]
    fn fixed_edge_stratification() {
        let edges = Binning::FixedEdges(vec![20.0, 30.0, 40.0, 50.0, 60.0]);
        assert_eq!(stratify_numeric(&[19.0, 25.0, 45.0], &edges).unwrap(), vec![1, 2, 4]);
        assert_eq!(stratify_numeric(&[20.0, 21.0, 60.0, 61.0], &edges).unwrap(), vec![1, 2, 5, 6]);
        assert!(stratify_numeric(&[1.0], &Binning::FixedEdges(vec![2.0, 1.0])).is_err());
        assert!(stratify_numeric(&[], &edges).is_err());
    }

    #[test]
    fn quantile_stratification() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let groups = stratify_numeric(&values, &Binning::Quantile(4)).unwrap();
        for g in 1..=4 {
            assert_eq!(groups.iter().filter(|&&x| x == g).count(), 25);
        }
        let one = stratify_numeric(&values, &Binning::Quantile(1)).unwrap();
        assert!(one.iter().all(|&g| g == 1));
        // heavy ties collapse groups but stay contiguous
        let tied = stratify_numeric(&[1.0, 1.0, 1.0, 1.0, 2.0], &Binning::Quantile(4)).unwrap();
        assert_eq!(tied, vec![1, 1, 1, 1, 2]);
        assert!(stratify_numeric(&values, &Binning::Quantile(0)).is_err());
    }

    #[test]
    fn bin_count_is_fourth_root() {
        assert_eq!(default_bin_count(1), 1);
        assert_eq!(default_bin_count(15), 1);
        assert_eq!(default_bin_count(16), 2);
        assert_eq!(default_bin_count(2139), 6);
        assert_eq!(default_bin_count(10_000), 10);
    }

    #[test]
    fn diagnostics_constant_population() {
        let p = FinitePopulation::unstratified(vec![1.0; 5], vec![1.0; 5]).unwrap();
        let d = condition_diagnostics(&p, 2, 3);
        assert_eq!(d.min_eigenvalue, 0.0);
        assert_eq!(d.strata_growth, 0.0);
        assert_eq!(d.fourth_moment, 1.0);
        assert!(d.warnings.len() >= 2);
    }

    #[test]
    fn observe_reveals_assigned_arm() {
        use ComplianceType::*;
        let p = FinitePopulation::unstratified(vec![5.0, 6.0], vec![1.0, 2.0])
            .unwrap()
            .with_compliance(vec![Complier, AlwaysTaker])
            .unwrap();
        let s = p.observe(&[true, false]).unwrap();
        assert_eq!(s.units()[0].y, 5.0);
        assert_eq!(s.units()[0].takeup, Some(true));
        assert_eq!(s.units()[1].y, 2.0);
        assert_eq!(s.units()[1].takeup, Some(true));
        assert_eq!((s.n1(), s.n0(), s.population_size()), (1, 1, 2));
    }

    #[test]
    fn sample_validation() {
        let u = |t: bool, d: Option<bool>| Unit {
            treated: t,
            y: 0.0,
            takeup: d,
            stratum: 0,
        };
        assert!(ObservedSample::new(vec![u(true, Some(true)), u(false, None)], vec!["a".into()], 2).is_err());
        assert!(ObservedSample::new(vec![u(true, None)], vec!["a".into()], 0).is_err());
        assert!(ObservedSample::new(vec![], vec!["a".into()], 0).is_err());
    }
}
