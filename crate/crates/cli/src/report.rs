//! Report documents and their JSON / delimited renderings.

use std::io::Write;

use serde::Serialize;
use varbound::bounds::BoundPair;
use varbound::estimate::{AteAnalysis, FamilyInterval, StratumMerge};
use varbound::late::{LateAnalysis, LateFamilyInterval, LateOptions, StratumLambda};
use varbound::population::{Arm, ObservedSample};
use varbound::simulate::{ReplicationRecord, StudyReport, SweepRow};

use crate::error::Result;
use crate::format::{sig, to_json};
use crate::ingest::StratumSource;

pub const SCALE_NOTE: &str =
    "estimates are in outcome units and variances in squared outcome units; no rescaling is applied";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumCounts {
    pub label: String,
    pub n1: usize,
    pub n0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub source: String,
    pub population_size: usize,
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub strata_from: StratumSource,
    pub strata: Vec<StratumCounts>,
    /// Merges applied by `--merge-sparse-strata`, in order.
    pub merges: Vec<StratumMerge>,
}

impl InputSummary {
    pub fn new(source: &str, s: &ObservedSample, strata_from: StratumSource, merges: Vec<StratumMerge>) -> Self {
        let mut strata: Vec<StratumCounts> = s
            .labels()
            .iter()
            .map(|l| StratumCounts {
                label: l.clone(),
                n1: 0,
                n0: 0,
            })
            .collect();
        for u in s.units() {
            match u.arm() {
                Arm::Treatment => strata[u.stratum].n1 += 1,
                Arm::Control => strata[u.stratum].n0 += 1,
            }
        }
        InputSummary {
            source: source.to_string(),
            population_size: s.population_size(),
            n: s.n(),
            n1: s.n1(),
            n0: s.n0(),
            strata_from,
            strata,
            merges,
        }
    }
}

/// Sample versions of the regularity conditions. Advisory only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDiagnostics {
    /// `max_t (1/n_t) Σ_{T_i = t} y_i⁴`.
    pub fourth_moment: f64,
    /// `K · min_k n_k / n`.
    pub stratum_positivity: f64,
    /// `K² log K / n`.
    pub strata_growth: f64,
    pub num_strata: usize,
    pub treated_fraction: f64,
    pub control_fraction: f64,
    /// Smallest per-stratum arm size.
    pub min_stratum_arm_size: usize,
    /// `π̂_c` before any threshold, when take-up is observed.
    pub complier_share: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn sample_diagnostics(s: &ObservedSample, merges: &[StratumMerge]) -> SampleDiagnostics {
    let n = s.n() as f64;
    let k = s.num_strata();
    let mut counts = vec![[0usize; 2]; k];
    let mut fourth = [0.0f64; 2];
    for u in s.units() {
        let a = usize::from(!u.treated);
        counts[u.stratum][a] += 1;
        fourth[a] += u.y.powi(4);
    }
    let fourth_moment = (fourth[0] / s.n1().max(1) as f64).max(fourth[1] / s.n0().max(1) as f64);
    let min_stratum = counts.iter().map(|c| c[0] + c[1]).min().unwrap_or(0);
    let min_arm = counts.iter().flat_map(|c| c.iter().copied()).min().unwrap_or(0);

    let mut warnings = Vec::new();
    for m in merges {
        warnings.push(format!("stratum `{}` merged into `{}`", m.from, m.into));
    }
    for (j, c) in counts.iter().enumerate() {
        if c[0] == 0 || c[1] == 0 {
            warnings.push(format!("stratum `{}` has no units in one arm", s.labels()[j]));
        }
    }
    let complier_share = if s.has_takeup() {
        varbound::late::pi_c_hat_raw(s).ok()
    } else {
        None
    };
    if complier_share.is_some_and(|p| p <= 0.0) {
        warnings.push("estimated complier share is not positive".to_string());
    }

    SampleDiagnostics {
        fourth_moment,
        stratum_positivity: k as f64 * min_stratum as f64 / n,
        strata_growth: (k * k) as f64 * (k as f64).ln() / n,
        num_strata: k,
        treated_fraction: s.n1() as f64 / n,
        control_fraction: s.n0() as f64 / n,
        min_stratum_arm_size: min_arm,
        complier_share,
        warnings,
    }
}

/// Output of `bounds` and `ci`. `intervals` is present for `ci` only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteReport {
    pub command: &'static str,
    pub input: InputSummary,
    pub alpha: f64,
    pub theta_hat: f64,
    /// `(φ̂²_1, φ̂²_0)`.
    pub phi2_arm: (f64, f64),
    pub bounds: Vec<BoundPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<FamilyInterval>>,
    pub diagnostics: SampleDiagnostics,
    pub scale_note: &'static str,
}

impl AteReport {
    pub fn new(
        command: &'static str,
        input: InputSummary,
        analysis: AteAnalysis,
        diagnostics: SampleDiagnostics,
    ) -> Self {
        AteReport {
            command,
            input,
            alpha: analysis.alpha,
            theta_hat: analysis.theta_hat,
            phi2_arm: analysis.phi2_arm,
            bounds: analysis.bound_estimates,
            intervals: (command == "ci").then_some(analysis.intervals),
            diagnostics,
            scale_note: SCALE_NOTE,
        }
    }

    pub fn table(&self) -> Table {
        match &self.intervals {
            None => {
                let mut t = Table::new(&["family", "level", "theta_hat", "lower", "upper"]);
                for b in &self.bounds {
                    t.push(vec![
                        Cell::text(b.family.name()),
                        Cell::text(level_name(b)),
                        Cell::Num(self.theta_hat),
                        Cell::Num(b.lower),
                        Cell::Num(b.upper),
                    ]);
                }
                t
            }
            Some(intervals) => {
                let mut t = Table::new(&[
                    "family",
                    "theta_hat",
                    "lower",
                    "upper",
                    "sigma2",
                    "sigma2_raw",
                    "lower_raw",
                    "lower_clamped",
                    "sigma2_clamped",
                    "ci_lo",
                    "ci_hi",
                ]);
                for fi in intervals {
                    let b = fi
                        .family
                        .bound_family()
                        .and_then(|bf| self.bounds.iter().find(|b| b.family == bf));
                    let v = &fi.sigma_hat2;
                    t.push(vec![
                        Cell::text(fi.family.name()),
                        Cell::Num(self.theta_hat),
                        b.map_or(Cell::Empty, |b| Cell::Num(b.lower)),
                        b.map_or(Cell::Empty, |b| Cell::Num(b.upper)),
                        Cell::Num(v.value),
                        Cell::Num(v.raw),
                        Cell::Num(v.lower_raw),
                        Cell::Bool(v.lower_clamped),
                        Cell::Bool(v.clamped),
                        Cell::Num(fi.ci.lo),
                        Cell::Num(fi.ci.hi),
                    ]);
                }
                t
            }
        }
    }
}

fn level_name(b: &BoundPair) -> &'static str {
    match b.level {
        varbound::bounds::Level::Population => "population",
        varbound::bounds::Level::Plugin => "plugin",
    }
}

/// Output of `late`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateReport {
    pub command: &'static str,
    pub input: InputSummary,
    pub alpha: f64,
    pub options: LateOptions,
    /// Intention-to-treat difference in means.
    pub theta_hat: f64,
    pub pi_c_hat: f64,
    pub theta_c_hat: f64,
    /// `(φ̌²_1, φ̌²_0)`.
    pub phi2_check_arm: (f64, f64),
    pub lambda: Vec<StratumLambda>,
    pub bounds: Vec<BoundPair>,
    /// Each with the one-sided p-value of `θ_c = 0` against `θ_c < 0`.
    pub intervals: Vec<LateFamilyInterval>,
    pub diagnostics: SampleDiagnostics,
    pub scale_note: &'static str,
}

impl LateReport {
    pub fn new(
        input: InputSummary,
        analysis: LateAnalysis,
        options: LateOptions,
        diagnostics: SampleDiagnostics,
    ) -> Self {
        LateReport {
            command: "late",
            input,
            alpha: analysis.alpha,
            options,
            theta_hat: analysis.theta_hat,
            pi_c_hat: analysis.pi_c_hat,
            theta_c_hat: analysis.theta_c_hat,
            phi2_check_arm: analysis.phi2_check_arm,
            lambda: analysis.lambda,
            bounds: analysis.bound_estimates,
            intervals: analysis.intervals,
            diagnostics,
            scale_note: SCALE_NOTE,
        }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "family",
            "theta_c_hat",
            "pi_c_hat",
            "lower",
            "upper",
            "sigma2",
            "sigma2_raw",
            "lower_raw",
            "lower_clamped",
            "sigma2_clamped",
            "ci_lo",
            "ci_hi",
            "p_value_negative",
        ]);
        for fi in &self.intervals {
            let b = fi
                .family
                .bound_family()
                .and_then(|bf| self.bounds.iter().find(|b| b.family == bf));
            let v = &fi.sigma_c_hat2;
            t.push(vec![
                Cell::text(fi.family.name()),
                Cell::Num(self.theta_c_hat),
                Cell::Num(self.pi_c_hat),
                b.map_or(Cell::Empty, |b| Cell::Num(b.lower)),
                b.map_or(Cell::Empty, |b| Cell::Num(b.upper)),
                Cell::Num(v.value),
                Cell::Num(v.raw),
                Cell::Num(v.lower_raw),
                Cell::Bool(v.lower_clamped),
                Cell::Bool(v.clamped),
                Cell::Num(fi.ci.lo),
                Cell::Num(fi.ci.hi),
                Cell::Num(fi.p_value_negative),
            ]);
        }
        t
    }
}

/// Output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    #[serde(flatten)]
    pub report: StudyReport,
}

impl SimulateReport {
    pub fn table(&self) -> Table {
        let r = &self.report;
        let mut t = Table::new(&[
            "scenario",
            "population_size",
            "n1",
            "n0",
            "used_reps",
            "excluded_reps",
            "effect",
            "phi2",
            "rmse_effect",
            "family",
            "value_lower",
            "value_upper",
            "rmse_lower",
            "rmse_upper",
            "aw",
            "cr",
        ]);
        let scenario = match r.config.scenario {
            varbound::simulate::Scenario::Perfect => "perfect",
            varbound::simulate::Scenario::Noncompliance => "noncompliance",
        };
        let opt = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Num);
        for f in &r.families {
            t.push(vec![
                Cell::text(scenario),
                Cell::Int(r.config.population_size),
                Cell::Int(r.n1),
                Cell::Int(r.n0),
                Cell::Int(r.used_reps),
                Cell::Int(r.excluded_reps),
                Cell::Num(r.truth.effect),
                Cell::Num(r.truth.phi2),
                Cell::Num(r.rmse_effect),
                Cell::text(&f.family),
                opt(f.value.map(|b| b.lower)),
                opt(f.value.map(|b| b.upper)),
                opt(f.rmse_lower),
                opt(f.rmse_upper),
                Cell::Num(f.aw),
                Cell::Num(f.cr),
            ]);
        }
        t
    }
}

pub fn replication_table(log: &[ReplicationRecord]) -> Table {
    let mut t = Table::new(&[
        "rep", "family", "effect", "lower", "upper", "ci_lo", "ci_hi", "covered", "excluded",
    ]);
    let opt = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Num);
    for r in log {
        if let Some(msg) = &r.excluded {
            t.push(vec![
                Cell::Int(r.rep),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::text(msg),
            ]);
            continue;
        }
        for e in &r.estimates {
            t.push(vec![
                Cell::Int(r.rep),
                Cell::text(&e.family),
                opt(r.effect),
                opt(e.lower),
                opt(e.upper),
                Cell::Num(e.ci_lo),
                Cell::Num(e.ci_hi),
                Cell::Bool(e.covered),
                Cell::Empty,
            ]);
        }
    }
    t
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&[
        "p",
        "sharp_lower",
        "sharp_upper",
        "aronow_lower",
        "aronow_upper",
        "ding_lower",
        "ding_upper",
    ]);
    for r in rows {
        t.push(
            [
                r.p,
                r.sharp_lower,
                r.sharp_upper,
                r.aronow_lower,
                r.aronow_upper,
                r.ding_lower,
                r.ding_upper,
            ]
            .into_iter()
            .map(Cell::Num)
            .collect(),
        );
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn text(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }

    fn render(&self, digits: usize) -> String {
        match self {
            Cell::Num(v) => sig(*v, digits),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// A header plus rows; every row has the header's width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W, delimiter: u8, digits: usize) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render(digits)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Render a document in the requested format.
pub fn render<T: Serialize>(
    doc: &T,
    table: impl FnOnce() -> Table,
    format: OutputFormat,
    digits: usize,
    pretty: bool,
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        OutputFormat::Json => {
            buf.extend_from_slice(to_json(doc, pretty)?.as_bytes());
            buf.push(b'\n');
        }
        OutputFormat::Csv => table().write(&mut buf, b',', digits)?,
        OutputFormat::Tsv => table().write(&mut buf, b'\t', digits)?,
    }
    Ok(buf)
}
