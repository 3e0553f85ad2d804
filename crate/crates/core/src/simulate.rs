//! Data generators, complete randomization and the Monte Carlo study engine.
//!
//! A study draws one finite population from the master seed, computes its
//! truth once, then repeats the randomized assignment. Replication `r` uses
//! its own generator stream ([`replication_stream`]), so results do not
//! depend on the order or the number of threads executing replications.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    aronow_bounds, ding_bounds, extremal_population, extremal_population_late, phi2_tau,
    phi2_tau_tilde, sharp_bounds_cov, sharp_bounds_late, sharp_bounds_late_nocov, BoundFamily,
    BoundPair, Extreme,
};
use crate::error::{Error, Result};
use crate::estimate::{analyze_ate, LowerFamily};
use crate::late::{analyze_late, LateFamily, LateOptions};
use crate::population::{ate, late_truth, ComplianceType, FinitePopulation, StratumTable};
use crate::rng::{replication_stream, SimRng, POPULATION_STREAM};

/// Uniformly random treated set of size `n1` among `n` units, by a partial
/// Fisher–Yates shuffle of the unit indices.
pub fn complete_randomization(n: usize, n1: usize, rng: &mut SimRng) -> Result<Vec<bool>> {
    if n1 > n {
        return Err(Error::domain(format!("cannot treat {n1} of {n} units")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n1 {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    let mut treated = vec![false; n];
    for &i in &idx[..n1] {
        treated[i] = true;
    }
    Ok(treated)
}

/// Stratum means of `Y1`.
pub const DGP_MEANS: [f64; 4] = [3.0, 0.0, -2.0, 4.0];
/// Stratum standard deviations of `Y1`; the noise `V` has standard deviation
/// `6` minus these.
pub const DGP_SCALES: [f64; 4] = [2.0, 1.5, 5.0, 4.0];
/// Probabilities of always takers, compliers and never takers.
pub const DGP_TYPE_PROBS: [f64; 3] = [0.2, 0.7, 0.1];
/// Distribution of `W` given the compliance type (always, complier, never).
pub const DGP_W_GIVEN_TYPE: [[f64; 4]; 3] = [
    [0.15, 0.2, 0.3, 0.35],
    [0.25, 0.25, 0.25, 0.25],
    [0.35, 0.3, 0.2, 0.15],
];

fn categorical(rng: &mut SimRng, probs: &[f64]) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("population size must be positive"));
    }
    Ok(())
}

/// Perfect-compliance population: `W` uniform on `{1,2,3,4}`,
/// `Y1 | W=w ~ N(μ_w, s_w²)`, `Y0 = 0.3 Y1 + V` with `V | W=w ~ N(0, (6 − s_w)²)`.
pub fn dgp_perfect(n: usize, rng: &mut SimRng) -> Result<FinitePopulation> {
    check_size(n)?;
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.below(4) as usize;
        let a = rng.normal(DGP_MEANS[k], DGP_SCALES[k]);
        let v = rng.normal(0.0, 6.0 - DGP_SCALES[k]);
        y1.push(a);
        y0.push(0.3 * a + v);
        w.push(k as u32 + 1);
    }
    FinitePopulation::new(y1, y0, StratumTable::from_keys(&w)?)
}

/// Noncompliance population: compliance type drawn first, then `W` given the
/// type, `Y1 | W` as in [`dgp_perfect`], complier `Y0 | W=w ~ N(0.3w, (6 − s_w)²)`
/// and `Y0 = Y1` for always and never takers.
pub fn dgp_noncompliance(n: usize, rng: &mut SimRng) -> Result<FinitePopulation> {
    check_size(n)?;
    let types = [
        ComplianceType::AlwaysTaker,
        ComplianceType::Complier,
        ComplianceType::NeverTaker,
    ];
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for _ in 0..n {
        let t = categorical(rng, &DGP_TYPE_PROBS);
        let k = categorical(rng, &DGP_W_GIVEN_TYPE[t]);
        let a = rng.normal(DGP_MEANS[k], DGP_SCALES[k]);
        let b = if types[t] == ComplianceType::Complier {
            rng.normal(0.3 * (k + 1) as f64, 6.0 - DGP_SCALES[k])
        } else {
            a
        };
        y1.push(a);
        y0.push(b);
        w.push(k as u32 + 1);
        g.push(types[t]);
    }
    FinitePopulation::new(y1, y0, StratumTable::from_keys(&w)?)?.with_compliance(g)
}

/// Same strata and stratum-conditional marginals, with `φ²(τ)` moved to its
/// sharp lower bound.
pub fn attain_lower_bound(pop: &FinitePopulation) -> Result<FinitePopulation> {
    extremal_population(pop, Extreme::Lower)
}

/// Noncompliance analogue of [`attain_lower_bound`] for `φ²(τ̃)`.
pub fn attain_lower_bound_late(pop: &FinitePopulation) -> Result<FinitePopulation> {
    extremal_population_late(pop, Extreme::Lower)
}

/// Which generator and estimator pipeline a study uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Perfect,
    Noncompliance,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_reps() -> usize {
    1000
}

/// Number of grid points in [`binary_sweep`].
pub const SWEEP_POINTS: usize = 200;

/// Binary population of size 600: 200 units with `w = 1` (150 of them with
/// `y0 = 1`) and 400 with `w = 0` (50 with `y0 = 1`). `y1 = 1` for `j` units
/// of the first group and `400 − j` of the second, so that
/// `P(y1 = 1 | w = 1) = j / 200`.
pub fn binary_sweep_population(j: usize) -> Result<FinitePopulation> {
    if j == 0 || j > SWEEP_POINTS {
        return Err(Error::domain(format!("sweep index {j} outside 1..={SWEEP_POINTS}")));
    }
    let mut y1 = Vec::with_capacity(600);
    let mut y0 = Vec::with_capacity(600);
    let mut w = Vec::with_capacity(600);
    for i in 0..200 {
        y1.push(if i < j { 1.0 } else { 0.0 });
        y0.push(if i < 150 { 1.0 } else { 0.0 });
        w.push(1u8);
    }
    for i in 0..400 {
        y1.push(if i < 400 - j { 1.0 } else { 0.0 });
        y0.push(if i < 50 { 1.0 } else { 0.0 });
        w.push(0u8);
    }
    FinitePopulation::new(y1, y0, StratumTable::from_keys(&w)?)
}

/// One grid point of [`binary_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub sharp_lower: f64,
    pub sharp_upper: f64,
    pub aronow_lower: f64,
    pub aronow_upper: f64,
    pub ding_lower: f64,
    pub ding_upper: f64,
}

/// Sharp, Aronow and Ding bounds of [`binary_sweep_population`] for
/// `p = 1/200, …, 1`.
pub fn binary_sweep() -> Result<Vec<SweepRow>> {
    (1..=SWEEP_POINTS)
        .map(|j| {
            let pop = binary_sweep_population(j)?;
            let s = sharp_bounds_cov(&pop)?;
            let a = aronow_bounds(&pop)?;
            let d = ding_bounds(&pop)?;
            Ok(SweepRow {
                p: j as f64 / SWEEP_POINTS as f64,
                sharp_lower: s.lower,
                sharp_upper: s.upper,
                aronow_lower: a.lower,
                aronow_upper: a.upper,
                ding_lower: d.lower,
                ding_upper: d.upper,
            })
        })
        .collect()
}

/// Monte Carlo study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: Scenario,
    /// `N`.
    pub population_size: usize,
    /// Treated count; defaults to `N / 2`.
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Families for the perfect-compliance scenario; all when empty.
    #[serde(default)]
    pub families: Vec<LowerFamily>,
    /// Families for the noncompliance scenario; all when empty.
    #[serde(default)]
    pub late_families: Vec<LateFamily>,
    pub seed: u64,
    /// Replace the drawn population by one attaining the lower bound.
    #[serde(default)]
    pub attain_lower: bool,
    #[serde(default)]
    pub eps_c: Option<f64>,
    #[serde(default)]
    pub eps_lambda: Option<f64>,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, population_size: usize, reps: usize, seed: u64) -> Self {
        StudyConfig {
            scenario,
            population_size,
            n1: None,
            reps,
            alpha: default_alpha(),
            families: Vec::new(),
            late_families: Vec::new(),
            seed,
            attain_lower: false,
            eps_c: None,
            eps_lambda: None,
        }
    }

    pub fn n1(&self) -> usize {
        self.n1.unwrap_or(self.population_size / 2)
    }

    pub fn n0(&self) -> usize {
        self.population_size.saturating_sub(self.n1())
    }

    pub fn late_options(&self) -> LateOptions {
        let d = LateOptions::default();
        LateOptions {
            eps_c: self.eps_c.unwrap_or(d.eps_c),
            eps_lambda: self.eps_lambda.unwrap_or(d.eps_lambda),
        }
    }

    fn lower_families(&self) -> Vec<LowerFamily> {
        if self.families.is_empty() {
            LowerFamily::ALL.to_vec()
        } else {
            self.families.clone()
        }
    }

    fn wald_families(&self) -> Vec<LateFamily> {
        if self.late_families.is_empty() {
            LateFamily::ALL.to_vec()
        } else {
            self.late_families.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::domain("reps must be at least 1"));
        }
        if self.n1() > self.population_size {
            return Err(Error::domain("n1 exceeds the population size"));
        }
        if self.n1() < 2 || self.n0() < 2 {
            return Err(Error::domain("each arm needs at least two units"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Population quantities the replications are scored against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTruth {
    /// `θ`, or `θ_c` in the noncompliance scenario.
    pub effect: f64,
    /// `φ²(τ)`, or `φ²(τ̃)`.
    pub phi2: f64,
    /// `π_c` in the noncompliance scenario.
    pub complier_share: Option<f64>,
    pub bounds: Vec<BoundPair>,
}

/// Aggregated metrics for one lower-bound family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyMetrics {
    pub family: String,
    /// Population bounds of the family, absent for the naive family.
    pub value: Option<BoundPair>,
    pub rmse_lower: Option<f64>,
    pub rmse_upper: Option<f64>,
    /// Average interval width.
    pub aw: f64,
    /// Coverage rate of the population effect.
    pub cr: f64,
}

/// Result of [`run_study`]; identical configurations give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub n1: usize,
    pub n0: usize,
    pub truth: StudyTruth,
    /// RMSE of the point estimator (`θ̂` or `θ̂_c`).
    pub rmse_effect: f64,
    pub families: Vec<FamilyMetrics>,
    pub used_reps: usize,
    pub excluded_reps: usize,
    /// Message of the first excluded replication, if any.
    pub first_exclusion: Option<String>,
}

impl StudyReport {
    pub fn family(&self, name: &str) -> Option<&FamilyMetrics> {
        self.families.iter().find(|f| f.family == name)
    }
}

/// One family's estimates in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationEstimate {
    pub family: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
}

/// Log entry for one replication. Excluded replications carry the error
/// message and no estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub effect: Option<f64>,
    pub estimates: Vec<ReplicationEstimate>,
    pub excluded: Option<String>,
}

/// Per-replication estimates: the point estimate, then per family the
/// plug-in bounds (if any) and the interval.
struct RepOutcome {
    effect: f64,
    families: Vec<(Option<BoundPair>, f64, f64)>,
}

fn truth_of(pop: &FinitePopulation, scenario: Scenario) -> Result<StudyTruth> {
    Ok(match scenario {
        Scenario::Perfect => StudyTruth {
            effect: ate(pop),
            phi2: phi2_tau(pop),
            complier_share: None,
            bounds: vec![sharp_bounds_cov(pop)?, aronow_bounds(pop)?, ding_bounds(pop)?],
        },
        Scenario::Noncompliance => StudyTruth {
            effect: late_truth(pop)?,
            phi2: phi2_tau_tilde(pop)?,
            complier_share: Some(pop.complier_share()?),
            bounds: vec![sharp_bounds_late(pop)?, sharp_bounds_late_nocov(pop)?],
        },
    })
}

fn replicate(pop: &FinitePopulation, config: &StudyConfig, rep: usize) -> Result<RepOutcome> {
    let mut rng = SimRng::new(config.seed, replication_stream(rep));
    let assignment = complete_randomization(pop.size(), config.n1(), &mut rng)?;
    let sample = pop.observe(&assignment)?;
    match config.scenario {
        Scenario::Perfect => {
            let families = config.lower_families();
            let a = analyze_ate(&sample, config.alpha, &families)?;
            let rows = families
                .iter()
                .map(|&f| {
                    let ci = a.interval(f).unwrap().ci;
                    let b = f.bound_family().and_then(|bf| a.bounds(bf).copied());
                    (b, ci.lo, ci.hi)
                })
                .collect();
            Ok(RepOutcome {
                effect: a.theta_hat,
                families: rows,
            })
        }
        Scenario::Noncompliance => {
            let families = config.wald_families();
            let a = analyze_late(&sample, config.alpha, &families, &config.late_options())?;
            let rows = families
                .iter()
                .map(|&f| {
                    let ci = a.interval(f).unwrap().ci;
                    let b = f.bound_family().and_then(|bf| a.bounds(bf).copied());
                    (b, ci.lo, ci.hi)
                })
                .collect();
            Ok(RepOutcome {
                effect: a.theta_c_hat,
                families: rows,
            })
        }
    }
}

/// The study population: a fresh draw from the scenario's generator on the
/// population stream, optionally moved to the lower bound.
pub fn study_population(config: &StudyConfig) -> Result<FinitePopulation> {
    let mut rng = SimRng::new(config.seed, POPULATION_STREAM);
    let pop = match config.scenario {
        Scenario::Perfect => dgp_perfect(config.population_size, &mut rng)?,
        Scenario::Noncompliance => dgp_noncompliance(config.population_size, &mut rng)?,
    };
    if !config.attain_lower {
        return Ok(pop);
    }
    match config.scenario {
        Scenario::Perfect => attain_lower_bound(&pop),
        Scenario::Noncompliance => attain_lower_bound_late(&pop),
    }
}

/// Run the configured study on its generated population.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let pop = study_population(config)?;
    run_study_on(&pop, config)
}

/// Run the study's replications on a given population. The generator
/// settings of `config` other than the seed are ignored.
pub fn run_study_on(pop: &FinitePopulation, config: &StudyConfig) -> Result<StudyReport> {
    study_on(pop, config, false).map(|(report, _)| report)
}

/// [`run_study`] that also returns one [`ReplicationRecord`] per replication.
pub fn run_study_logged(config: &StudyConfig) -> Result<(StudyReport, Vec<ReplicationRecord>)> {
    config.validate()?;
    let pop = study_population(config)?;
    study_on(&pop, config, true)
}

fn study_on(
    pop: &FinitePopulation,
    config: &StudyConfig,
    keep_log: bool,
) -> Result<(StudyReport, Vec<ReplicationRecord>)> {
    config.validate()?;
    if config.population_size != pop.size() {
        return Err(Error::domain("configured population size differs from the population"));
    }
    let truth = truth_of(pop, config.scenario)?;
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| replicate(pop, config, rep))
        .collect();

    let names: Vec<(String, Option<BoundFamily>)> = match config.scenario {
        Scenario::Perfect => config
            .lower_families()
            .iter()
            .map(|f| (f.name().to_string(), f.bound_family()))
            .collect(),
        Scenario::Noncompliance => config
            .wald_families()
            .iter()
            .map(|f| (f.name().to_string(), f.bound_family()))
            .collect(),
    };
    let values: Vec<Option<BoundPair>> = names
        .iter()
        .map(|(_, bf)| bf.and_then(|bf| truth.bounds.iter().find(|b| b.family == bf).copied()))
        .collect();

    let m = names.len();
    let mut used = 0usize;
    let mut excluded = 0usize;
    let mut first_exclusion = None;
    let mut sq_effect = 0.0;
    let mut sq_lower = vec![0.0; m];
    let mut sq_upper = vec![0.0; m];
    let mut width = vec![0.0; m];
    let mut covered = vec![0usize; m];
    // aggregation in replication order keeps the sums bit-reproducible
    let mut log = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let rep = match outcome {
            Ok(r) => r,
            Err(e) => {
                excluded += 1;
                if keep_log {
                    log.push(ReplicationRecord {
                        rep: index,
                        effect: None,
                        estimates: Vec::new(),
                        excluded: Some(e.to_string()),
                    });
                }
                first_exclusion.get_or_insert_with(|| e.to_string());
                continue;
            }
        };
        if keep_log {
            log.push(ReplicationRecord {
                rep: index,
                effect: Some(rep.effect),
                estimates: names
                    .iter()
                    .zip(&rep.families)
                    .map(|((name, _), (b, lo, hi))| ReplicationEstimate {
                        family: name.clone(),
                        lower: b.map(|b| b.lower),
                        upper: b.map(|b| b.upper),
                        ci_lo: *lo,
                        ci_hi: *hi,
                        covered: *lo <= truth.effect && truth.effect <= *hi,
                    })
                    .collect(),
                excluded: None,
            });
        }
        used += 1;
        sq_effect += (rep.effect - truth.effect).powi(2);
        for (j, (b, lo, hi)) in rep.families.iter().enumerate() {
            if let (Some(est), Some(val)) = (b, values[j]) {
                sq_lower[j] += (est.lower - val.lower).powi(2);
                sq_upper[j] += (est.upper - val.upper).powi(2);
            }
            width[j] += hi - lo;
            if *lo <= truth.effect && truth.effect <= *hi {
                covered[j] += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::degenerate(format!(
            "every replication was excluded; first failure: {}",
            first_exclusion.unwrap_or_default()
        )));
    }
    let u = used as f64;
    let families = names
        .into_iter()
        .enumerate()
        .map(|(j, (family, _))| FamilyMetrics {
            family,
            value: values[j],
            rmse_lower: values[j].map(|_| (sq_lower[j] / u).sqrt()),
            rmse_upper: values[j].map(|_| (sq_upper[j] / u).sqrt()),
            aw: width[j] / u,
            cr: covered[j] as f64 / u,
        })
        .collect();
    let report = StudyReport {
        config: config.clone(),
        n1: config.n1(),
        n0: config.n0(),
        truth,
        rmse_effect: (sq_effect / u).sqrt(),
        families,
        used_reps: used,
        excluded_reps: excluded,
        first_exclusion,
    };
    Ok((report, log))
}
