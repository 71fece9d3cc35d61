//! Survey schema, CSV ingestion, design-matrix encoding, and the synthetic
//! data generator.
//!
//! Categorical features use treatment coding: the reference level (first
//! declared level observed in the data) is dropped and every other observed
//! level gets a 0/1 indicator column named `<Feature>_<Level>`. Continuous
//! columns pass through and are standardized by `center_scale`.

pub mod synth;

use std::fmt;
use std::io::Read;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub use synth::{synthesize, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("unseen level {level:?} for feature {feature:?}")]
    UnseenLevel { feature: String, level: String },
    #[error("synthetic spec error: {0}")]
    Spec(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// The five ordered parking-duration classes, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DurationClass {
    Under2,
    From2To4,
    From4To6,
    From6To8,
    Over8,
}

pub const CLASS_LABELS: [&str; 5] = ["<2", "2-4", "4-6", "6-8", ">8"];
pub const N_CLASSES: usize = 5;

impl DurationClass {
    pub const ALL: [DurationClass; 5] = [
        DurationClass::Under2,
        DurationClass::From2To4,
        DurationClass::From4To6,
        DurationClass::From6To8,
        DurationClass::Over8,
    ];

    pub fn index(self) -> usize {
        match self {
            DurationClass::Under2 => 0,
            DurationClass::From2To4 => 1,
            DurationClass::From4To6 => 2,
            DurationClass::From6To8 => 3,
            DurationClass::Over8 => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<DurationClass> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        CLASS_LABELS[self.index()]
    }

    pub fn from_label(s: &str) -> Option<DurationClass> {
        CLASS_LABELS
            .iter()
            .position(|l| *l == s)
            .and_then(Self::from_index)
    }
}

impl fmt::Display for DurationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Assign raw parking hours to a duration class. Intervals are half-open
/// on the left: [0,2), [2,4), [4,6), [6,8), [8,inf).
pub fn bin_duration(hours: f64) -> Result<DurationClass, DatasetError> {
    if !hours.is_finite() || hours < 0.0 {
        return Err(DatasetError::Domain(format!(
            "duration must be a finite nonnegative number of hours, got {hours}"
        )));
    }
    Ok(if hours < 2.0 {
        DurationClass::Under2
    } else if hours < 4.0 {
        DurationClass::From2To4
    } else if hours < 6.0 {
        DurationClass::From4To6
    } else if hours < 8.0 {
        DurationClass::From6To8
    } else {
        DurationClass::Over8
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureKind {
    Categorical { levels: Vec<String> },
    Continuous { unit: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn categorical(name: &str, levels: &[&str]) -> FeatureSpec {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn continuous(name: &str, unit: &str) -> FeatureSpec {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous {
                unit: unit.to_string(),
            },
        }
    }
}

/// Declaration of the survey row layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target_name: String,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, target_name: &str) -> Result<Schema, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::Schema(
                "schema must declare at least one feature".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(DatasetError::Schema("feature name may not be empty".into()));
            }
            if !seen.insert(f.name.clone()) {
                return Err(DatasetError::Schema(format!(
                    "duplicate feature name {:?}",
                    f.name
                )));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.len() < 2 {
                    return Err(DatasetError::Schema(format!(
                        "categorical feature {:?} needs at least 2 levels",
                        f.name
                    )));
                }
                let mut lv = std::collections::HashSet::new();
                for l in levels {
                    if !lv.insert(l) {
                        return Err(DatasetError::Schema(format!(
                            "duplicate level {:?} in feature {:?}",
                            l, f.name
                        )));
                    }
                }
            }
        }
        Ok(Schema {
            features,
            target_name: target_name.to_string(),
        })
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn from_json(reader: impl Read) -> Result<Schema, DatasetError> {
        let raw: Schema = serde_json::from_reader(reader)
            .map_err(|e| DatasetError::Schema(format!("invalid schema JSON: {e}")))?;
        Schema::new(raw.features, &raw.target_name)
    }
}

/// A single feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Level(String),
    Number(f64),
}

/// One survey row. `target` is absent for prediction-only records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub values: IndexMap<String, Value>,
    pub target: Option<DurationClass>,
}

impl Record {
    /// Check the record against a schema: every feature present, kinds
    /// match, categorical values are declared levels, numbers finite.
    pub fn validate(&self, schema: &Schema) -> Result<(), DatasetError> {
        for f in &schema.features {
            let v = self.values.get(&f.name).ok_or_else(|| {
                DatasetError::Domain(format!("record is missing feature {:?}", f.name))
            })?;
            match (&f.kind, v) {
                (FeatureKind::Categorical { levels }, Value::Level(l)) => {
                    if !levels.contains(l) {
                        return Err(DatasetError::Domain(format!(
                            "value {:?} is not a declared level of feature {:?}",
                            l, f.name
                        )));
                    }
                }
                (FeatureKind::Continuous { .. }, Value::Number(x)) => {
                    if !x.is_finite() {
                        return Err(DatasetError::Domain(format!(
                            "non-finite value for feature {:?}",
                            f.name
                        )));
                    }
                }
                _ => {
                    return Err(DatasetError::Domain(format!(
                        "value kind mismatch for feature {:?}",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One column of the encoded matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EncodedColumn {
    #[serde(rename = "indicator")]
    Indicator { feature: String, level: String },
    #[serde(rename = "continuous")]
    Continuous { feature: String },
}

impl EncodedColumn {
    pub fn name(&self) -> String {
        match self {
            EncodedColumn::Indicator { feature, level } => format!("{feature}_{level}"),
            EncodedColumn::Continuous { feature } => feature.clone(),
        }
    }

    pub fn feature(&self) -> &str {
        match self {
            EncodedColumn::Indicator { feature, .. } => feature,
            EncodedColumn::Continuous { feature } => feature,
        }
    }
}

/// Treatment coding of one categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub feature: String,
    pub reference: String,
    /// Levels that received indicator columns, in declared order.
    pub emitted: Vec<String>,
}

/// Standardization parameters of one continuous column, mapping raw values
/// to the model's input space via (x - mean) / sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub sd: f64,
}

/// Everything needed to re-apply the training-time transform to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMeta {
    pub columns: Vec<EncodedColumn>,
    pub categoricals: Vec<CategoricalEncoding>,
    /// Keyed by continuous feature name; absent until `center_scale` runs.
    pub scaling: IndexMap<String, ColumnScaling>,
}

impl EncodingMeta {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name()).collect()
    }
}

/// Encoded, optionally standardized numeric matrix plus its transform
/// metadata and any encoding warnings.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub data: Matrix,
    pub targets: Option<Vec<usize>>,
    pub meta: EncodingMeta,
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn d(&self) -> usize {
        self.data.cols()
    }
}

/// Encode records with treatment coding. Reference level per categorical is
/// the first declared level that occurs in the data; declared levels that
/// never occur emit no column.
pub fn encode(records: &[Record], schema: &Schema) -> Result<DesignMatrix, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Domain("cannot encode an empty record list".into()));
    }
    for r in records {
        r.validate(schema)?;
    }

    let mut columns = Vec::new();
    let mut categoricals = Vec::new();
    let mut warnings = Vec::new();

    for f in &schema.features {
        match &f.kind {
            FeatureKind::Categorical { levels } => {
                let observed: Vec<&String> = levels
                    .iter()
                    .filter(|l| {
                        records
                            .iter()
                            .any(|r| r.values.get(&f.name) == Some(&Value::Level((*l).clone())))
                    })
                    .collect();
                if observed.len() == 1 {
                    warnings.push(format!(
                        "categorical feature {:?} has a single observed level {:?}; no columns emitted",
                        f.name, observed[0]
                    ));
                }
                let reference = observed
                    .first()
                    .expect("validated records always observe at least one level")
                    .to_string();
                let emitted: Vec<String> = observed[1..].iter().map(|l| l.to_string()).collect();
                for level in &emitted {
                    columns.push(EncodedColumn::Indicator {
                        feature: f.name.clone(),
                        level: level.clone(),
                    });
                }
                categoricals.push(CategoricalEncoding {
                    feature: f.name.clone(),
                    reference,
                    emitted,
                });
            }
            FeatureKind::Continuous { .. } => {
                columns.push(EncodedColumn::Continuous {
                    feature: f.name.clone(),
                });
            }
        }
    }

    let meta = EncodingMeta {
        columns,
        categoricals,
        scaling: IndexMap::new(),
    };

    let data = encode_rows(records, &meta)?;
    let targets = collect_targets(records);

    Ok(DesignMatrix {
        data,
        targets,
        meta,
        warnings,
    })
}

fn collect_targets(records: &[Record]) -> Option<Vec<usize>> {
    if records.iter().all(|r| r.target.is_some()) {
        Some(records.iter().map(|r| r.target.unwrap().index()).collect())
    } else {
        None
    }
}

/// Build raw (unscaled) encoded rows against fixed metadata.
fn encode_rows(records: &[Record], meta: &EncodingMeta) -> Result<Matrix, DatasetError> {
    let d = meta.columns.len();
    let mut m = Matrix::zeros(records.len(), d);
    for (i, r) in records.iter().enumerate() {
        // check categorical values against the fitted level sets
        for enc in &meta.categoricals {
            if let Some(Value::Level(l)) = r.values.get(&enc.feature) {
                if *l != enc.reference && !enc.emitted.contains(l) {
                    return Err(DatasetError::UnseenLevel {
                        feature: enc.feature.clone(),
                        level: l.clone(),
                    });
                }
            }
        }
        for (j, col) in meta.columns.iter().enumerate() {
            let v = match col {
                EncodedColumn::Indicator { feature, level } => {
                    match r.values.get(feature) {
                        Some(Value::Level(l)) if l == level => 1.0,
                        _ => 0.0,
                    }
                }
                EncodedColumn::Continuous { feature } => match r.values.get(feature) {
                    Some(Value::Number(x)) => *x,
                    _ => {
                        return Err(DatasetError::Domain(format!(
                            "record {i} lacks a numeric value for feature {feature:?}"
                        )))
                    }
                },
            };
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// Standardize continuous columns to mean 0, sample sd 1 (n-1 denominator).
/// Indicator columns are untouched. A constant column is centered only and
/// its sd recorded as 1, with a warning. Scalings compose, so re-running on
/// an already scaled matrix keeps the raw-to-model mapping intact.
pub fn center_scale(matrix: &DesignMatrix) -> Result<DesignMatrix, DatasetError> {
    let n = matrix.n();
    if n < 2 {
        return Err(DatasetError::Domain(
            "center_scale needs at least 2 rows".into(),
        ));
    }
    let mut out = matrix.clone();
    for (j, col) in matrix.meta.columns.iter().enumerate() {
        let feature = match col {
            EncodedColumn::Continuous { feature } => feature.clone(),
            _ => continue,
        };
        let mean = (0..n).map(|i| matrix.data.get(i, j)).sum::<f64>() / n as f64;
        let ss = (0..n)
            .map(|i| {
                let d = matrix.data.get(i, j) - mean;
                d * d
            })
            .sum::<f64>();
        let var = ss / (n as f64 - 1.0);
        let sd = if var.sqrt() > 0.0 {
            var.sqrt()
        } else {
            out.warnings.push(format!(
                "continuous column {feature:?} is constant; centering only"
            ));
            1.0
        };
        for i in 0..n {
            let v = (matrix.data.get(i, j) - mean) / sd;
            out.data.set(i, j, v);
        }
        let composed = match matrix.meta.scaling.get(&feature) {
            Some(prev) => ColumnScaling {
                mean: prev.mean + mean * prev.sd,
                sd: prev.sd * sd,
            },
            None => ColumnScaling { mean, sd },
        };
        out.meta.scaling.insert(feature, composed);
    }
    Ok(out)
}

/// Encode and scale unseen records with fitted metadata. Unseen categorical
/// levels are rejected; continuous columns use the stored training mean/sd.
pub fn apply_transform(
    records: &[Record],
    meta: &EncodingMeta,
) -> Result<DesignMatrix, DatasetError> {
    let mut data = encode_rows(records, meta)?;
    for (j, col) in meta.columns.iter().enumerate() {
        if let EncodedColumn::Continuous { feature } = col {
            if let Some(sc) = meta.scaling.get(feature) {
                for i in 0..data.rows() {
                    let v = (data.get(i, j) - sc.mean) / sc.sd;
                    data.set(i, j, v);
                }
            }
        }
    }
    Ok(DesignMatrix {
        data,
        targets: collect_targets(records),
        meta: meta.clone(),
        warnings: Vec::new(),
    })
}

/// Decode one encoded row's categorical block back to a level string.
/// Used by tests and the LIME perturber.
pub fn decode_level(row: &[f64], meta: &EncodingMeta, feature: &str) -> Option<String> {
    let enc = meta.categoricals.iter().find(|c| c.feature == feature)?;
    for (j, col) in meta.columns.iter().enumerate() {
        if let EncodedColumn::Indicator { feature: f, level } = col {
            if f == feature && row[j] > 0.5 {
                return Some(level.clone());
            }
        }
    }
    Some(enc.reference.clone())
}

/// Read survey rows from CSV. The header must contain exactly the schema's
/// feature names (any order) plus optionally the target column; the target
/// cell is either raw hours (binned) or a class label.
pub fn load_csv(reader: impl Read, schema: &Schema) -> Result<Vec<Record>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let mut seen = std::collections::HashSet::new();
    for h in &headers {
        if !seen.insert(h.clone()) {
            return Err(DatasetError::Parse {
                row: 0,
                column: h.clone(),
                message: "duplicate header".into(),
            });
        }
        if h != &schema.target_name && schema.feature(h).is_none() {
            return Err(DatasetError::Parse {
                row: 0,
                column: h.clone(),
                message: "column not declared in schema".into(),
            });
        }
    }
    for f in &schema.features {
        if !headers.iter().any(|h| h == &f.name) {
            return Err(DatasetError::Parse {
                row: 0,
                column: f.name.clone(),
                message: "missing column".into(),
            });
        }
    }
    let has_target = headers.iter().any(|h| h == &schema.target_name);

    let mut records = Vec::new();
    for (row_idx, result) in rdr.records().enumerate() {
        let row = result?;
        let data_row = row_idx + 1; // 1-based, after the header
        let mut values = IndexMap::new();
        let mut target = None;
        for (h, cell) in headers.iter().zip(row.iter()) {
            let cell = cell.trim();
            if h == &schema.target_name {
                target = Some(parse_target(cell, data_row, h)?);
                continue;
            }
            let spec = schema.feature(h).expect("header checked above");
            let v = match &spec.kind {
                FeatureKind::Categorical { levels } => {
                    if levels.iter().any(|l| l == cell) {
                        Value::Level(cell.to_string())
                    } else {
                        return Err(DatasetError::Parse {
                            row: data_row,
                            column: h.clone(),
                            message: format!("{cell:?} is not a declared level"),
                        });
                    }
                }
                FeatureKind::Continuous { .. } => {
                    let x: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                        row: data_row,
                        column: h.clone(),
                        message: format!("{cell:?} is not a number"),
                    })?;
                    if !x.is_finite() {
                        return Err(DatasetError::Parse {
                            row: data_row,
                            column: h.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                    Value::Number(x)
                }
            };
            values.insert(h.clone(), v);
        }
        if has_target && target.is_none() {
            return Err(DatasetError::Parse {
                row: data_row,
                column: schema.target_name.clone(),
                message: "missing target cell".into(),
            });
        }
        // keep schema order regardless of header order
        let mut ordered = IndexMap::new();
        for f in &schema.features {
            if let Some(v) = values.shift_remove(&f.name) {
                ordered.insert(f.name.clone(), v);
            } else {
                return Err(DatasetError::Parse {
                    row: data_row,
                    column: f.name.clone(),
                    message: "missing cell".into(),
                });
            }
        }
        records.push(Record {
            values: ordered,
            target,
        });
    }
    Ok(records)
}

fn parse_target(cell: &str, row: usize, column: &str) -> Result<DurationClass, DatasetError> {
    if let Ok(hours) = cell.parse::<f64>() {
        return bin_duration(hours).map_err(|e| DatasetError::Parse {
            row,
            column: column.to_string(),
            message: e.to_string(),
        });
    }
    DurationClass::from_label(cell).ok_or_else(|| DatasetError::Parse {
        row,
        column: column.to_string(),
        message: format!("{cell:?} is neither hours nor a duration class"),
    })
}

/// Format a number with 6 significant digits for CSV emission.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // strip trailing zeros but keep at least one digit
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Write records as CSV in schema order, target column last.
pub fn write_csv(
    records: &[Record],
    schema: &Schema,
    writer: impl std::io::Write,
) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
    let has_target = records.iter().any(|r| r.target.is_some());
    if has_target {
        header.push(schema.target_name.clone());
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = Vec::with_capacity(header.len());
        for f in &schema.features {
            match r.values.get(&f.name) {
                Some(Value::Level(l)) => row.push(l.clone()),
                Some(Value::Number(x)) => row.push(format_number(*x)),
                None => {
                    return Err(DatasetError::Domain(format!(
                        "record missing feature {:?}",
                        f.name
                    )))
                }
            }
        }
        if has_target {
            match r.target {
                Some(t) => row.push(t.label().to_string()),
                None => {
                    return Err(DatasetError::Domain(
                        "mixed records: some have targets, some do not".into(),
                    ))
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DatasetError::Domain(e.to_string()))?;
    Ok(())
}
