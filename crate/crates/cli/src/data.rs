//! CSV loading, column transforms, and design/constraint assembly.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use cqreg::constraint::{canonicalize, CanonicalTransform, ConstraintSpec};
use cqreg::Dataset;

use crate::config::{RowRange, RunConfig, TransformOp};
use crate::error::{core, io, CliError, CliResult};

pub const INTERCEPT: &str = "intercept";

/// A column-oriented table of raw CSV cells.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    derived: HashMap<String, Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(CliError::Data(format!("{}: no data rows", path.display())));
        }
        Ok(Self {
            headers,
            rows,
            derived: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("missing column '{name}'")))
    }

    /// Stable sort of the rows by the raw text of one column.
    pub fn sort_by(&mut self, name: &str) -> CliResult<()> {
        if !self.derived.is_empty() {
            return Err(CliError::Data(
                "rows must be ordered before transforms".into(),
            ));
        }
        let j = self.index(name)?;
        self.rows.sort_by(|a, b| a[j].cmp(&b[j]));
        Ok(())
    }

    /// Drops rows whose text in `range.column` falls outside the range.
    pub fn keep_between(&mut self, range: &RowRange) -> CliResult<()> {
        let j = self.index(&range.column)?;
        self.rows.retain(|r| {
            range.from.as_deref().is_none_or(|f| r[j].as_str() >= f)
                && range.to.as_deref().is_none_or(|t| r[j].as_str() <= t)
        });
        if self.rows.is_empty() {
            return Err(CliError::Data(format!(
                "no rows left in range of '{}'",
                range.column
            )));
        }
        Ok(())
    }

    /// Yes/no text of a column as 1/0.
    pub fn indicator(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[j].to_ascii_lowercase().as_str() {
                "y" | "yes" | "true" | "1" => Ok(1.0),
                "n" | "no" | "false" | "0" => Ok(0.0),
                other => Err(CliError::Data(format!(
                    "row {}, column '{name}': not a yes/no value '{other}'",
                    i + 1
                ))),
            })
            .collect()
    }

    /// Numeric values of a column; data rows are numbered from 1.
    pub fn numeric(&self, name: &str) -> CliResult<Vec<f64>> {
        if let Some(v) = self.derived.get(name) {
            return Ok(v.clone());
        }
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::Data(format!(
                            "row {}, column '{name}': non-numeric value '{}'",
                            i + 1,
                            r[j]
                        ))
                    })
            })
            .collect()
    }

    pub fn add_derived(&mut self, name: String, values: Vec<f64>) -> CliResult<()> {
        if self.headers.contains(&name) || self.derived.contains_key(&name) {
            return Err(CliError::Data(format!("column '{name}' already exists")));
        }
        self.derived.insert(name, values);
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(err) = e.into_kind() {
            return io(path)(err);
        }
        unreachable!();
    }
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Applies the configured transforms in declaration order.
pub fn apply_transforms(table: &mut Table, cfg: &RunConfig) -> CliResult<()> {
    for t in &cfg.transforms {
        let out = match t.op {
            TransformOp::Indicator => table.indicator(&t.column)?,
            TransformOp::Square => table.numeric(&t.column)?.iter().map(|v| v * v).collect(),
            TransformOp::Log => log_column(&table.numeric(&t.column)?, &t.column)?,
        };
        table.add_derived(t.output_name(), out)?;
    }
    Ok(())
}

fn log_column(src: &[f64], name: &str) -> CliResult<Vec<f64>> {
    src.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(CliError::Data(format!(
                    "row {}, column '{name}': log of non-positive value {v}",
                    i + 1
                )))
            }
        })
        .collect()
}

/// The regression problem in original coordinates plus its canonical form.
#[derive(Debug, Clone)]
pub struct Problem {
    pub names: Vec<String>,
    pub data: Dataset,
    pub constraints: Option<ConstraintSpec>,
    pub transform: CanonicalTransform,
    pub canonical: Dataset,
}

impl Problem {
    pub fn q(&self) -> usize {
        self.transform.q()
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Config(format!("'{name}' is not a design column")))
    }

    /// Canonical indices of the tested columns. Each tested coefficient must
    /// map to a single canonical coordinate.
    pub fn tested(&self, names: &[String]) -> CliResult<(Vec<usize>, Vec<usize>)> {
        if names.is_empty() {
            return Err(CliError::Config(
                "'tested' must name at least one column".into(),
            ));
        }
        let mut orig = Vec::new();
        let mut canon = Vec::new();
        for name in names {
            let j = self.column(name)?;
            let r = self.transform.decoupled_coordinate(j).ok_or_else(|| {
                CliError::Config(format!(
                    "tested column '{name}' is entangled with other coefficients by the constraints"
                ))
            })?;
            orig.push(j);
            canon.push(r);
        }
        Ok((orig, canon))
    }
}

pub fn load_problem(cfg: &RunConfig) -> CliResult<Problem> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("no input file given".into()))?;
    let mut table = Table::read(input)?;
    if let Some(col) = &cfg.order_by {
        table.sort_by(col)?;
    }
    if let Some(range) = &cfg.between {
        table.keep_between(range)?;
    }
    apply_transforms(&mut table, cfg)?;
    build_problem(&table, cfg)
}

pub fn build_problem(table: &Table, cfg: &RunConfig) -> CliResult<Problem> {
    let response = cfg
        .response
        .as_ref()
        .ok_or_else(|| CliError::Config("no response column given".into()))?;
    let mut names = Vec::new();
    if cfg.intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(cfg.predictors.iter().cloned());
    if names.is_empty() {
        return Err(CliError::Config("the design has no columns".into()));
    }
    for (k, a) in names.iter().enumerate() {
        if names[..k].contains(a) {
            return Err(CliError::Config(format!("duplicate design column '{a}'")));
        }
    }

    let n = table.len();
    let y = DVector::from_vec(table.numeric(response)?);
    let mut x = DMatrix::zeros(n, names.len());
    for (j, name) in names.iter().enumerate() {
        let col = if cfg.intercept && j == 0 {
            vec![1.0; n]
        } else {
            table.numeric(name)?
        };
        x.set_column(j, &DVector::from_vec(col));
    }
    let data = if cfg.intercept {
        Dataset::new(y, x)
    } else {
        Dataset::new_general(y, x)
    }
    .map_err(core("qr_solver"))?;

    let constraints = constraint_spec(cfg, &names)?;
    let transform = match &constraints {
        Some(c) => canonicalize(c).map_err(core("constraint_model"))?,
        None => CanonicalTransform::identity(names.len(), 0),
    };
    let canonical = cqreg::constraint::transform_dataset(&data, &transform)
        .map_err(core("constraint_model"))?;
    Ok(Problem {
        names,
        data,
        constraints,
        transform,
        canonical,
    })
}

fn constraint_spec(cfg: &RunConfig, names: &[String]) -> CliResult<Option<ConstraintSpec>> {
    let p = names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut bounds: Vec<f64> = Vec::new();
    match (&cfg.constraint_matrix, &cfg.constraint_offset) {
        (Some(m), off) => {
            for (r, row) in m.iter().enumerate() {
                if row.len() != p {
                    return Err(CliError::Config(format!(
                        "constraint_matrix row {r} has {} entries, the design has {p} columns",
                        row.len()
                    )));
                }
            }
            let off = off.clone().unwrap_or_else(|| vec![0.0; m.len()]);
            if off.len() != m.len() {
                return Err(CliError::Config(format!(
                    "constraint_offset has {} entries, constraint_matrix has {} rows",
                    off.len(),
                    m.len()
                )));
            }
            rows.extend(m.iter().cloned());
            bounds.extend(off);
        }
        (None, Some(_)) => {
            return Err(CliError::Config(
                "constraint_offset given without constraint_matrix".into(),
            ))
        }
        (None, None) => {}
    }
    for c in &cfg.constraints {
        let mut row = vec![0.0; p];
        for (name, &v) in &c.coefficients {
            let j = names.iter().position(|c| c == name).ok_or_else(|| {
                CliError::Config(format!("constraint names unknown column '{name}'"))
            })?;
            row[j] = v;
        }
        rows.push(row);
        bounds.push(c.bound);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let c_mat = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    ConstraintSpec::new(c_mat, DVector::from_vec(bounds))
        .map(Some)
        .map_err(core("constraint_model"))
}
