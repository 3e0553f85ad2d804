//! Delimited-text ingestion into an [`ObservedSample`].

use std::fs::File;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::Serialize;
use varbound::population::{default_bin_count, stratify_numeric, Binning, ObservedSample};

use crate::error::{CliError, Result};

/// How a numeric covariate is grouped before it becomes part of the stratum
/// key.
#[derive(Debug, Clone, PartialEq)]
pub enum BinSpec {
    /// Explicit cut points; group `j` holds values in `(e_{j-1}, e_j]`.
    Edges(Vec<f64>),
    /// `q<K>`: `K` equal-count groups.
    Quantile(usize),
    /// `⌊n^{1/4}⌋` equal-count groups.
    Auto,
}

impl FromStr for BinSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(BinSpec::Auto);
        }
        if let Some(k) = s.strip_prefix('q') {
            let k: usize = k
                .parse()
                .map_err(|_| CliError::usage(format!("bad quantile bin count `{s}`")))?;
            if k == 0 {
                return Err(CliError::usage("quantile bin count must be positive"));
            }
            return Ok(BinSpec::Quantile(k));
        }
        let edges = s
            .split(',')
            .map(|e| e.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CliError::usage(format!("bad bin edges `{s}`")))?;
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::usage(format!(
                "bin edges `{s}` must be finite and strictly increasing"
            )));
        }
        Ok(BinSpec::Edges(edges))
    }
}

/// Parse a `column=spec` binning directive.
pub fn parse_bin_directive(s: &str) -> Result<(String, BinSpec)> {
    let (column, spec) = s
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("binning directive `{s}` is not column=spec")))?;
    Ok((column.trim().to_string(), spec.parse()?))
}

/// Column roles and text format of a data file.
#[derive(Debug, Clone)]
pub struct DatasetSchema {
    pub treatment: String,
    pub outcome: String,
    pub takeup: Option<String>,
    /// Cross-classified into the stratum key, in this order.
    pub covariates: Vec<String>,
    pub bins: Vec<(String, BinSpec)>,
    pub delimiter: u8,
    pub has_header: bool,
    /// `N` when the file holds a subset of a larger population.
    pub population_size: Option<usize>,
}

impl DatasetSchema {
    pub fn new(treatment: &str, outcome: &str) -> Self {
        DatasetSchema {
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            takeup: None,
            covariates: Vec::new(),
            bins: Vec::new(),
            delimiter: b',',
            has_header: true,
            population_size: None,
        }
    }

    fn binning(&self, column: &str) -> Option<&BinSpec> {
        self.bins.iter().find(|(c, _)| c == column).map(|(_, b)| b)
    }

    fn validate(&self) -> Result<()> {
        for (column, _) in &self.bins {
            if !self.covariates.contains(column) {
                return Err(CliError::usage(format!(
                    "binning directive for `{column}`, which is not a covariate"
                )));
            }
        }
        let mut roles: Vec<&str> = vec![&self.treatment, &self.outcome];
        roles.extend(self.takeup.as_deref());
        roles.extend(self.covariates.iter().map(String::as_str));
        for (i, r) in roles.iter().enumerate() {
            if roles[..i].contains(r) {
                return Err(CliError::usage(format!("column `{r}` is given two roles")));
            }
        }
        Ok(())
    }
}

/// Summary of how the stratum key was formed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSource {
    pub covariates: Vec<String>,
    /// Per covariate, the group labels after binning.
    pub levels: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub sample: ObservedSample,
    pub strata: StratumSource,
}

fn open(path: &str) -> Result<Box<dyn Read>> {
    if path == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        Ok(Box::new(File::open(path).map_err(|e| {
            CliError::usage(format!("cannot open `{path}`: {e}"))
        })?))
    }
}

pub fn ingest(path: &str, schema: &DatasetSchema) -> Result<Ingested> {
    ingest_reader(open(path)?, path, schema)
}

fn resolve(headers: &[String], has_header: bool, name: &str) -> Result<usize> {
    if has_header {
        if let Some(i) = headers.iter().position(|h| h == name) {
            return Ok(i);
        }
    }
    match name.parse::<usize>() {
        Ok(i) if i >= 1 && i <= headers.len() => Ok(i - 1),
        _ => Err(CliError::usage(format!("no column `{name}` in the input"))),
    }
}

fn parse_binary(v: &str) -> Option<bool> {
    match v.parse::<f64>() {
        Ok(x) if x == 0.0 => Some(false),
        Ok(x) if x == 1.0 => Some(true),
        _ => None,
    }
}

fn edge_label(g: usize, edges: &[f64]) -> String {
    if edges.is_empty() {
        "all".to_string()
    } else if g == 1 {
        format!("<={}", edges[0])
    } else if g > edges.len() {
        format!(">{}", edges[edges.len() - 1])
    } else {
        format!("({},{}]", edges[g - 2], edges[g - 1])
    }
}

pub fn ingest_reader<R: Read>(reader: R, source_name: &str, schema: &DatasetSchema) -> Result<Ingested> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let located = |line: u64, column: &str, message: String| CliError::Input {
        source_name: source_name.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    let from_csv = |e: csv::Error| match e.position() {
        Some(p) => located(p.line(), "*", e.to_string()),
        None => CliError::Csv(e),
    };

    let headers: Option<Vec<String>> = if schema.has_header {
        Some(rdr.headers().map_err(from_csv)?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let records = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(from_csv)?;
    let names = headers.unwrap_or_else(|| {
        let width = records.first().map_or(0, |r| r.len());
        (1..=width).map(|i| i.to_string()).collect()
    });

    let t_col = resolve(&names, schema.has_header, &schema.treatment)?;
    let y_col = resolve(&names, schema.has_header, &schema.outcome)?;
    let d_col = schema
        .takeup
        .as_deref()
        .map(|c| resolve(&names, schema.has_header, c))
        .transpose()?;
    let w_cols = schema
        .covariates
        .iter()
        .map(|c| resolve(&names, schema.has_header, c))
        .collect::<Result<Vec<_>>>()?;

    let n = records.len();
    let mut lines = Vec::with_capacity(n);
    let mut treated = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut takeup = d_col.map(|_| Vec::with_capacity(n));
    let mut raw_covariates: Vec<Vec<String>> = vec![Vec::with_capacity(n); w_cols.len()];

    for rec in &records {
        let line = rec.position().map_or(0, |p| p.line());
        lines.push(line);
        let field = |col: usize| -> Result<&str> {
            match rec.get(col) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(located(line, &names[col], "missing value".to_string())),
            }
        };
        let binary = |col: usize, role: &str| -> Result<bool> {
            let v = field(col)?;
            parse_binary(v).ok_or_else(|| {
                located(line, &names[col], format!("{role} value `{v}` is not 0 or 1"))
            })
        };
        treated.push(binary(t_col, "treatment")?);
        let v = field(y_col)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => y.push(x),
            _ => {
                return Err(located(line, &names[y_col], format!("outcome `{v}` is not a finite number")))
            }
        }
        if let (Some(col), Some(d)) = (d_col, takeup.as_mut()) {
            d.push(binary(col, "take-up")?);
        }
        for (j, &col) in w_cols.iter().enumerate() {
            raw_covariates[j].push(field(col)?.to_string());
        }
    }
    if n == 0 {
        return Err(CliError::usage(format!("{source_name}: no data rows")));
    }

    let mut columns: Vec<Vec<String>> = Vec::with_capacity(w_cols.len());
    for (j, name) in schema.covariates.iter().enumerate() {
        let raw = &raw_covariates[j];
        let column = match schema.binning(name) {
            None => raw.clone(),
            Some(spec) => {
                let mut values = Vec::with_capacity(n);
                for (i, v) in raw.iter().enumerate() {
                    match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => values.push(x),
                        _ => {
                            return Err(located(
                                lines[i],
                                name,
                                format!("binned covariate value `{v}` is not a finite number"),
                            ))
                        }
                    }
                }
                let binning = match spec {
                    BinSpec::Edges(e) => Binning::FixedEdges(e.clone()),
                    BinSpec::Quantile(k) => Binning::Quantile(*k),
                    BinSpec::Auto => Binning::Quantile(default_bin_count(n)),
                };
                let groups = stratify_numeric(&values, &binning)?;
                match spec {
                    BinSpec::Edges(e) => groups.iter().map(|&g| edge_label(g, e)).collect(),
                    _ => groups.iter().map(|g| format!("q{g}")).collect(),
                }
            }
        };
        columns.push(column);
    }

    let keys: Vec<String> = (0..n)
        .map(|i| {
            if columns.is_empty() {
                "all".to_string()
            } else {
                columns.iter().map(|c| c[i].as_str()).collect::<Vec<_>>().join("|")
            }
        })
        .collect();
    let mut sample = ObservedSample::from_columns(&treated, &y, takeup.as_deref(), &keys)?;
    if let Some(size) = schema.population_size {
        sample = ObservedSample::new(sample.units().to_vec(), sample.labels().to_vec(), size)?;
    }
    let levels = columns
        .iter()
        .map(|c| {
            let mut seen: Vec<String> = Vec::new();
            for v in c {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
            seen
        })
        .collect();
    Ok(Ingested {
        sample,
        strata: StratumSource {
            covariates: schema.covariates.clone(),
            levels,
        },
    })
}

/// Write the canonical CSV form of a sample: `t,y[,d],w` with the stratum
/// label in `w`. Reading it back with [`canonical_schema`] gives the same
/// sample.
pub fn emit_sample<W: Write>(sample: &ObservedSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let takeup = sample.has_takeup();
    let mut header = vec!["t", "y"];
    if takeup {
        header.push("d");
    }
    header.push("w");
    w.write_record(&header)?;
    for u in sample.units() {
        let mut row = vec![(u.treated as u8).to_string(), format!("{}", u.y)];
        if let Some(d) = u.takeup {
            row.push((d as u8).to_string());
        }
        row.push(sample.labels()[u.stratum].clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn canonical_schema(takeup: bool) -> DatasetSchema {
    let mut schema = DatasetSchema::new("t", "y");
    if takeup {
        schema.takeup = Some("d".to_string());
    }
    schema.covariates = vec!["w".to_string()];
    schema
}
