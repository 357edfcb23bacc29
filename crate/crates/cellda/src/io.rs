//! CSV ingestion, CSV table output and the JSON model file.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use cellda_core::{ClassModel, DaConfig, DataSet, DiscriminantModel, Labels, Matrix, Mode, Standardizer};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Cell contents treated as missing unless overridden.
pub const DEFAULT_NA_TOKENS: [&str; 2] = ["NA", ""];

/// Reads a headed CSV file. Cells matching one of `na_tokens` (after
/// trimming) are missing. When `label_col` is given, that column holds class
/// labels, numbered `1..G` in order of first appearance.
pub fn read_csv(path: impl AsRef<Path>, label_col: Option<&str>, na_tokens: &[String]) -> Result<DataSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv_from(file, label_col, na_tokens).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv_from<R: Read>(reader: R, label_col: Option<&str>, na_tokens: &[String]) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(CliError::Data(format!("duplicate column name '{h}'")));
        }
    }
    let label_idx = match label_col {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Data(format!("label column '{name}' not in header")))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&k| Some(k) != label_idx).collect();
    if feature_idx.is_empty() {
        return Err(CliError::Data("no feature columns".into()));
    }
    let col_names: Vec<String> = feature_idx.iter().map(|&k| header[k].clone()).collect();
    let is_na = |s: &str| na_tokens.iter().any(|t| t == s);

    let mut values = Vec::new();
    let mut na = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut ids = Vec::new();
    let mut n = 0usize;
    for (r, record) in rdr.records().enumerate() {
        // data rows are numbered from 1, the header being row 0
        let row = r + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Data(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for &k in &feature_idx {
            let cell = record[k].trim();
            if is_na(cell) {
                values.push(f64::NAN);
                na.push(true);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("row {row}, column '{}': cannot parse '{cell}' as a number", header[k]))
            })?;
            values.push(v);
            na.push(!v.is_finite());
        }
        if let Some(k) = label_idx {
            let lab = record[k].trim();
            if is_na(lab) {
                return Err(CliError::Data(format!("row {row}: missing class label")));
            }
            let id = match label_names.iter().position(|l| l == lab) {
                Some(p) => p + 1,
                None => {
                    label_names.push(lab.to_string());
                    label_names.len()
                }
            };
            ids.push(id);
        }
        n += 1;
    }
    let matrix = Matrix::from_row_major(n, col_names.len(), values)?;
    let data = DataSet::new(matrix, na, col_names)?;
    match label_idx {
        Some(_) => Ok(data.with_labels(Labels::new(ids, label_names)?)?),
        None => Ok(data),
    }
}

/// Writes serializable rows as a headed CSV file.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv_to(file, rows).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_csv_to<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(format!("cannot write CSV: {e}")))?;
    }
    w.flush().map_err(|e| CliError::Data(format!("cannot write CSV: {e}")))?;
    Ok(())
}

pub const SCHEMA_VERSION: u32 = 1;

/// Serialized form of a trained model.
///
/// `mu`, `sigma` and `alpha` are stored on each class's standardized scale,
/// i.e. for `z_j = (x_j − location_j) / scale_j`. This is the representation
/// the classifier computes with, so a reloaded model predicts bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub mode: String,
    pub parameter_scale: String,
    pub col_names: Vec<String>,
    pub class_names: Vec<String>,
    pub config: ConfigBlock,
    pub classes: Vec<ClassBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigBlock {
    pub cell_cutoff: f64,
    pub case_cutoff: f64,
    pub eig_floor: f64,
    pub h_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub class0: bool,
    pub casewise_counts_na: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBlock {
    pub prior: f64,
    pub mu: Vec<f64>,
    /// Row-major `d × d`.
    pub sigma: Vec<f64>,
    pub p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(model: &DiscriminantModel) -> Self {
        let c = model.config();
        ModelFile {
            schema_version: SCHEMA_VERSION,
            mode: mode_name(model.mode()).to_string(),
            parameter_scale: "standardized".to_string(),
            col_names: model.col_names().to_vec(),
            class_names: model.class_names().to_vec(),
            config: ConfigBlock {
                cell_cutoff: c.cell_cutoff,
                case_cutoff: c.case_cutoff,
                eig_floor: c.eig_floor,
                h_fraction: c.h_fraction,
                max_iter: c.max_iter,
                tol: c.tol,
                class0: c.class0,
                casewise_counts_na: c.casewise_counts_na,
            },
            classes: model
                .classes()
                .iter()
                .map(|m| ClassBlock {
                    prior: m.prior(),
                    mu: m.mu().to_vec(),
                    sigma: m.sigma().as_slice().to_vec(),
                    p: m.p().to_vec(),
                    alpha: m.alpha().to_vec(),
                    location: m.standardizer().location.clone(),
                    scale: m.standardizer().scale.clone(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<DiscriminantModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "model schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.parameter_scale != "standardized" {
            return Err(CliError::Data(format!("unknown parameter scale '{}'", self.parameter_scale)));
        }
        let mode = parse_mode(&self.mode)?;
        let d = self.col_names.len();
        let c = &self.config;
        let config = DaConfig {
            cell_cutoff: c.cell_cutoff,
            case_cutoff: c.case_cutoff,
            eig_floor: c.eig_floor,
            h_fraction: c.h_fraction,
            max_iter: c.max_iter,
            tol: c.tol,
            class0: c.class0,
            casewise_counts_na: c.casewise_counts_na,
        };
        let mut shared: Option<Arc<Matrix>> = None;
        let mut classes = Vec::with_capacity(self.classes.len());
        for (k, b) in self.classes.iter().enumerate() {
            let sigma = Matrix::from_row_major(d, d, b.sigma.clone())?;
            let sigma = match (mode, &shared) {
                (Mode::Lda, Some(s)) => {
                    if **s != sigma {
                        return Err(CliError::Data(format!("LDA model: class {} has a different scatter", k + 1)));
                    }
                    s.clone()
                }
                _ => {
                    let s = Arc::new(sigma);
                    shared = Some(s.clone());
                    s
                }
            };
            let standardizer = Standardizer::new(b.location.clone(), b.scale.clone())?;
            classes.push(ClassModel::new(
                standardizer,
                b.mu.clone(),
                sigma,
                b.prior,
                b.p.clone(),
                b.alpha.clone(),
                config.cell_cutoff,
            )?);
        }
        Ok(DiscriminantModel::new(classes, mode, config, self.class_names.clone(), self.col_names.clone())?)
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Qda => "qda",
        Mode::Lda => "lda",
    }
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s.to_ascii_lowercase().as_str() {
        "qda" => Ok(Mode::Qda),
        "lda" => Ok(Mode::Lda),
        other => Err(CliError::Data(format!("unknown mode '{other}'"))),
    }
}

pub fn model_to_json(model: &DiscriminantModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<DiscriminantModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("invalid model file: {e}")))?;
    file.to_model()
}

pub fn save_model(path: impl AsRef<Path>, model: &DiscriminantModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DiscriminantModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    model_from_json(&text)
}

/// Checks that `data` has the model's columns in the model's order.
pub fn check_columns(data: &DataSet, model: &DiscriminantModel) -> Result<()> {
    if data.col_names() != model.col_names() {
        return Err(CliError::Data(format!(
            "input columns {:?} do not match model columns {:?}",
            data.col_names(),
            model.col_names()
        )));
    }
    Ok(())
}

/// Relabels `data` with the model's class dictionary so label ids agree.
pub fn align_labels(data: DataSet, model: &DiscriminantModel) -> Result<DataSet> {
    let Some(labels) = data.labels() else { return Ok(data) };
    let ids = labels
        .ids()
        .iter()
        .map(|&g| {
            let name = &labels.names()[g - 1];
            model
                .class_names()
                .iter()
                .position(|n| n == name)
                .map(|p| p + 1)
                .ok_or_else(|| CliError::Data(format!("label '{name}' is not a class of the model")))
        })
        .collect::<Result<Vec<_>>>()?;
    let relabeled = Labels::new(ids, model.class_names().to_vec())?;
    Ok(data.with_labels(relabeled)?)
}
