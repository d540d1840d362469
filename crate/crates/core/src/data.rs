//! Study data ingest, design matrices and confounder resampling.
//!
//! Column order in every design matrix is fixed: intercept, confounders in
//! input order, treatment, then (outcome model only) the mediator.

use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

const MISSING_TOKENS: &[&str] = &["", "NA", "N/A", "na", "NaN", "nan", "null", "NULL", "."];

/// Which input column plays which role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub outcome: String,
    pub treatment: String,
    pub mediator: String,
    #[serde(default)]
    pub confounders: Vec<String>,
}

impl ColumnRoles {
    pub fn new(
        outcome: impl Into<String>,
        treatment: impl Into<String>,
        mediator: impl Into<String>,
        confounders: &[&str],
    ) -> Self {
        Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            mediator: mediator.into(),
            confounders: confounders.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Validated, complete-case study data with treatment coded 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    roles: ColumnRoles,
    outcome: Vec<f64>,
    treat: Vec<f64>,
    mediator: Vec<f64>,
    /// n × q, one row per subject.
    confounders: DMatrix<f64>,
}

impl Dataset {
    pub fn new(
        roles: ColumnRoles,
        outcome: Vec<f64>,
        treat: Vec<f64>,
        mediator: Vec<f64>,
        confounders: DMatrix<f64>,
    ) -> Result<Self> {
        let n = outcome.len();
        if n == 0 {
            return Err(Error::Domain("dataset has no rows".into()));
        }
        if treat.len() != n || mediator.len() != n || confounders.nrows() != n {
            return Err(Error::Dimension(format!(
                "column lengths differ: outcome {n}, treatment {}, mediator {}, confounders {}",
                treat.len(),
                mediator.len(),
                confounders.nrows()
            )));
        }
        if confounders.ncols() != roles.confounders.len() {
            return Err(Error::Dimension(format!(
                "{} confounder columns but {} confounder names",
                confounders.ncols(),
                roles.confounders.len()
            )));
        }
        let bad: Vec<usize> = treat
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != 0.0 && t != 1.0)
            .map(|(i, _)| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Domain(format!(
                "treatment must be coded 0/1; offending rows: {}",
                format_rows(&bad)
            )));
        }
        let all_finite = outcome.iter().chain(&mediator).all(|v| v.is_finite())
            && confounders.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("non-finite value in data".into()));
        }
        Ok(Self {
            roles,
            outcome,
            treat,
            mediator,
            confounders,
        })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of confounders.
    pub fn q(&self) -> usize {
        self.confounders.ncols()
    }

    pub fn roles(&self) -> &ColumnRoles {
        &self.roles
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treat(&self) -> &[f64] {
        &self.treat
    }

    pub fn mediator(&self) -> &[f64] {
        &self.mediator
    }

    pub fn confounders(&self) -> &DMatrix<f64> {
        &self.confounders
    }

    /// Rejects non-0/1 values in columns declared binary.
    pub fn check_binary(&self, outcome_binary: bool, mediator_binary: bool) -> Result<()> {
        let check = |values: &[f64], column: &str| -> Result<()> {
            let bad: Vec<usize> = values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0 && v != 1.0)
                .map(|(i, _)| i + 1)
                .collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(Error::Domain(format!(
                    "column '{column}' is declared binary but has values outside {{0,1}} at rows {}",
                    format_rows(&bad)
                )))
            }
        };
        if outcome_binary {
            check(&self.outcome, &self.roles.outcome)?;
        }
        if mediator_binary {
            check(&self.mediator, &self.roles.mediator)?;
        }
        Ok(())
    }

    /// Copy with every confounder column centred and scaled to unit SD.
    /// Constant columns are only centred.
    pub fn standardize_confounders(&self) -> Dataset {
        let mut z = self.confounders.clone();
        let n = self.n() as f64;
        for mut col in z.column_iter_mut() {
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.apply(|v| *v = (*v - mean) / sd);
        }
        Dataset {
            confounders: z,
            ..self.clone()
        }
    }

    /// Dataset with treatment codes swapped (0 <-> 1).
    pub fn relabel_treatment(&self) -> Dataset {
        Dataset {
            treat: self.treat.iter().map(|t| 1.0 - t).collect(),
            ..self.clone()
        }
    }

    /// Writes the dataset with treatment as 0/1. Values use the shortest
    /// round-trip float representation so a reload is bit-exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec![
            self.roles.outcome.clone(),
            self.roles.treatment.clone(),
            self.roles.mediator.clone(),
        ];
        header.extend(self.roles.confounders.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![
                self.outcome[i].to_string(),
                (self.treat[i] as u8).to_string(),
                self.mediator[i].to_string(),
            ];
            rec.extend(self.confounders.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

fn format_rows(rows: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = rows
        .iter()
        .take(SHOWN)
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() > SHOWN {
        s.push_str(&format!(" (and {} more)", rows.len() - SHOWN));
    }
    s
}

fn codes_match(cell: &str, code: &str) -> bool {
    if cell == code {
        return true;
    }
    match (cell.parse::<f64>(), code.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Reads a headered CSV, resolves the role map and recodes treatment so that
/// `control_value` becomes 0 and `treat_value` becomes 1.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv(
    path: &Path,
    roles: &ColumnRoles,
    control_value: &str,
    treat_value: &str,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, roles, control_value, treat_value)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    roles: &ColumnRoles,
    control_value: &str,
    treat_value: &str,
) -> Result<Dataset> {
    if codes_match(control_value, treat_value) {
        return Err(Error::Config(format!(
            "control value '{control_value}' and treatment value '{treat_value}' coincide"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |role: &str, name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                role: role.into(),
                column: name.into(),
            })
    };
    let y_idx = find("outcome", &roles.outcome)?;
    let a_idx = find("treatment", &roles.treatment)?;
    let m_idx = find("mediator", &roles.mediator)?;
    let z_idx = roles
        .confounders
        .iter()
        .map(|c| find("confounder", c))
        .collect::<Result<Vec<_>>>()?;

    let mut outcome = Vec::new();
    let mut treat = Vec::new();
    let mut mediator = Vec::new();
    let mut z_rows: Vec<f64> = Vec::new();
    let mut bad_treat = Vec::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let numeric = |idx: usize| -> Result<f64> {
            let cell = record.get(idx).unwrap_or("");
            let column = headers.get(idx).unwrap_or("").to_string();
            if MISSING_TOKENS.contains(&cell) {
                return Err(Error::MissingValue { row, column });
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column,
                    value: cell.to_string(),
                })
        };
        outcome.push(numeric(y_idx)?);
        mediator.push(numeric(m_idx)?);
        for &j in &z_idx {
            z_rows.push(numeric(j)?);
        }
        let cell = record.get(a_idx).unwrap_or("");
        if MISSING_TOKENS.contains(&cell) {
            return Err(Error::MissingValue {
                row,
                column: roles.treatment.clone(),
            });
        }
        if codes_match(cell, control_value) {
            treat.push(0.0);
        } else if codes_match(cell, treat_value) {
            treat.push(1.0);
        } else {
            bad_treat.push(row);
            treat.push(f64::NAN);
        }
    }
    if !bad_treat.is_empty() {
        return Err(Error::Domain(format!(
            "treatment column '{}' has values other than '{control_value}'/'{treat_value}' at rows {}",
            roles.treatment,
            format_rows(&bad_treat)
        )));
    }
    let n = outcome.len();
    let confounders = DMatrix::from_row_slice(n, z_idx.len(), &z_rows);
    Dataset::new(roles.clone(), outcome, treat, mediator, confounders)
}

/// Mediator and outcome model design matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// n × P: intercept, confounders, treatment.
    pub x_m: DMatrix<f64>,
    /// n × (P+1): intercept, confounders, treatment, mediator.
    pub x_y: DMatrix<f64>,
    pub mediator_columns: Vec<String>,
    pub outcome_columns: Vec<String>,
}

impl DesignMatrices {
    /// Column count of the mediator model (P = q + 2).
    pub fn p(&self) -> usize {
        self.x_m.ncols()
    }
}

pub fn build_design(data: &Dataset) -> DesignMatrices {
    let n = data.n();
    let q = data.q();
    let p = q + 2;
    let x_m = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        j if j <= q => data.confounders[(i, j - 1)],
        _ => data.treat[i],
    });
    let x_y = DMatrix::from_fn(
        n,
        p + 1,
        |i, j| {
            if j < p {
                x_m[(i, j)]
            } else {
                data.mediator[i]
            }
        },
    );
    let mut mediator_columns = vec![INTERCEPT.to_string()];
    mediator_columns.extend(data.roles.confounders.iter().cloned());
    mediator_columns.push(data.roles.treatment.clone());
    let mut outcome_columns = mediator_columns.clone();
    outcome_columns.push(data.roles.mediator.clone());
    DesignMatrices {
        x_m,
        x_y,
        mediator_columns,
        outcome_columns,
    }
}

/// Row indices of a bootstrap resample of whole subjects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfounderResample {
    pub rows: Vec<usize>,
    pub iteration: u64,
}

impl ConfounderResample {
    /// The observed sample itself, in order.
    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).collect(),
            iteration: 0,
        }
    }

    /// n × q matrix of the resampled confounder rows.
    pub fn resolve(&self, data: &Dataset) -> DMatrix<f64> {
        let z = data.confounders();
        DMatrix::from_fn(self.rows.len(), z.ncols(), |i, j| z[(self.rows[i], j)])
    }
}

pub fn bootstrap_confounders<R: Rng + ?Sized>(
    data: &Dataset,
    iteration: u64,
    rng: &mut R,
) -> ConfounderResample {
    let n = data.n();
    ConfounderResample {
        rows: (0..n).map(|_| rng.random_range(0..n)).collect(),
        iteration,
    }
}
