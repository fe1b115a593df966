//! Dataset ingestion: schema-driven CSV loading, preprocessing into
//! normalized numeric samples, train/test splitting, and extraction of the
//! verification input domain.
//!
//! A schema file describes one feature per line as `name|kind|spec|role`
//! with `#` comments and `!` directives; see [`DatasetSchema::parse`].
//! Continuous features are min-max scaled to [0,1] (declared range first,
//! observed otherwise), non-sensitive categoricals are one-hot encoded,
//! sensitive features become a [`SensitiveDomain`], and labels are indexed
//! 1-based in declared order.

pub mod synth;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{EncodingMode, NetworkSpec};
use crate::rr::SensitiveDomain;
use crate::verify::{FeatureRange, InputDomain};

const MISSING_TOKENS: [&str; 3] = ["", "?", "NA"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Numeric; `lo:hi` range declared in the schema or observed from data.
    Continuous { lo: Option<f64>, hi: Option<f64> },
    /// Closed category list in declared order.
    Categorical { categories: Vec<String> },
    /// Numeric binarized at a cutoff into `le<cut>` / `gt<cut>`.
    Threshold { cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureRole {
    Feature,
    Sensitive,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub kind: FeatureKind,
    pub role: FeatureRole,
}

/// Parsed schema: ordered fields plus file-level directives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub fields: Vec<SchemaField>,
    /// Combine multiple sensitive features into one composite attribute.
    pub composite_sensitive: bool,
    /// Encode a binary sensitive attribute as one +-1 column instead of
    /// a one-hot pair.
    pub signed_binary: bool,
}

impl DatasetSchema {
    /// Parses the line-oriented schema grammar:
    ///
    /// ```text
    /// # comment
    /// !composite
    /// !signed-binary
    /// age|continuous|17:90|feature
    /// workclass|categorical|Private,Gov,Other|feature
    /// sex|categorical|Male,Female|sensitive
    /// age_group|threshold|40|sensitive
    /// income|categorical|<=50K,>50K|label
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = Vec::new();
        let mut composite = false;
        let mut signed_binary = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(directive) = line.strip_prefix('!') {
                match directive.trim() {
                    "composite" => composite = true,
                    "signed-binary" => signed_binary = true,
                    other => {
                        return Err(Error::Schema(format!(
                            "line {}: unknown directive `!{other}`",
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 4 {
                return Err(Error::Schema(format!(
                    "line {}: expected `name|kind|spec|role`, got `{line}`",
                    lineno + 1
                )));
            }
            let name = parts[0].trim().to_string();
            if name.is_empty() {
                return Err(Error::Schema(format!("line {}: empty feature name", lineno + 1)));
            }
            let spec = parts[2].trim();
            let kind = match parts[1].trim() {
                "continuous" => {
                    if spec.is_empty() {
                        FeatureKind::Continuous { lo: None, hi: None }
                    } else {
                        let (lo, hi) = spec.split_once(':').ok_or_else(|| {
                            Error::Schema(format!("line {}: range must be `lo:hi`", lineno + 1))
                        })?;
                        let lo = parse_float(lo, lineno)?;
                        let hi = parse_float(hi, lineno)?;
                        if lo >= hi {
                            return Err(Error::Schema(format!(
                                "line {}: empty range {lo}:{hi}",
                                lineno + 1
                            )));
                        }
                        FeatureKind::Continuous { lo: Some(lo), hi: Some(hi) }
                    }
                }
                "categorical" => {
                    let categories: Vec<String> =
                        spec.split(',').map(|c| c.trim().to_string()).collect();
                    if categories.len() < 2 || categories.iter().any(String::is_empty) {
                        return Err(Error::Schema(format!(
                            "line {}: need >= 2 non-empty categories",
                            lineno + 1
                        )));
                    }
                    FeatureKind::Categorical { categories }
                }
                "threshold" => FeatureKind::Threshold { cutoff: parse_float(spec, lineno)? },
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown kind `{other}`",
                        lineno + 1
                    )))
                }
            };
            let role = match parts[3].trim() {
                "feature" => FeatureRole::Feature,
                "sensitive" => FeatureRole::Sensitive,
                "label" => FeatureRole::Label,
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown role `{other}`",
                        lineno + 1
                    )))
                }
            };
            fields.push(SchemaField { name, kind, role });
        }
        let schema = Self { fields, composite_sensitive: composite, signed_binary };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let labels: Vec<_> = self.fields.iter().filter(|f| f.role == FeatureRole::Label).collect();
        if labels.len() != 1 {
            return Err(Error::Schema(format!("need exactly 1 label column, got {}", labels.len())));
        }
        if !matches!(labels[0].kind, FeatureKind::Categorical { .. }) {
            return Err(Error::Schema("label column must be categorical".into()));
        }
        let sensitive = self.sensitive_fields();
        if sensitive.is_empty() {
            return Err(Error::Schema("need at least 1 sensitive feature".into()));
        }
        for f in &sensitive {
            if matches!(f.kind, FeatureKind::Continuous { .. }) {
                return Err(Error::Schema(format!(
                    "sensitive feature `{}` must be categorical or threshold",
                    f.name
                )));
            }
        }
        if sensitive.len() > 1 && !self.composite_sensitive {
            return Err(Error::Schema(
                "multiple sensitive features require the !composite directive".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.fields {
            if !seen.insert(&f.name) {
                return Err(Error::Schema(format!("duplicate column `{}`", f.name)));
            }
        }
        Ok(())
    }

    pub fn sensitive_fields(&self) -> Vec<&SchemaField> {
        self.fields.iter().filter(|f| f.role == FeatureRole::Sensitive).collect()
    }

    pub fn label_field(&self) -> &SchemaField {
        self.fields.iter().find(|f| f.role == FeatureRole::Label).unwrap()
    }

    /// Category list of a sensitive field, after threshold binarization.
    fn sensitive_categories(field: &SchemaField) -> Vec<String> {
        match &field.kind {
            FeatureKind::Categorical { categories } => categories.clone(),
            FeatureKind::Threshold { cutoff } => {
                vec![format!("le{cutoff}"), format!("gt{cutoff}")]
            }
            FeatureKind::Continuous { .. } => unreachable!("rejected by validate"),
        }
    }

    /// The sensitive domain this schema induces.
    pub fn sensitive_domain(&self) -> Result<SensitiveDomain> {
        let fields = self.sensitive_fields();
        let mut values = vec![String::new()];
        for f in &fields {
            let cats = Self::sensitive_categories(f);
            let mut next = Vec::with_capacity(values.len() * cats.len());
            for v in &values {
                for c in &cats {
                    next.push(if v.is_empty() { c.clone() } else { format!("{v}*{c}") });
                }
            }
            values = next;
        }
        let mode = if self.signed_binary {
            if values.len() != 2 {
                return Err(Error::Schema(format!(
                    "!signed-binary needs exactly 2 sensitive values, got {}",
                    values.len()
                )));
            }
            EncodingMode::SignedBinary
        } else {
            EncodingMode::OneHot
        };
        SensitiveDomain::new(values, mode)
    }
}

fn parse_float(text: &str, lineno: usize) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Schema(format!("line {}: bad number `{text}`", lineno + 1)))
}

/// Schema-column-ordered string table straight out of a CSV file.
#[derive(Debug, Clone)]
pub struct RawTable {
    /// One entry per schema field, in schema order.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Rows discarded for missing or unparseable values.
    pub dropped: usize,
}

/// Reads a CSV with a header row, keeping schema columns only. Rows with a
/// missing value (empty, `?`, `NA`) or an unparseable number in any schema
/// column are dropped and counted.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    let headers = reader.headers()?.clone();
    let mut indices = Vec::with_capacity(schema.fields.len());
    for field in &schema.fields {
        let idx = headers
            .iter()
            .position(|h| h == field.name)
            .ok_or_else(|| Error::Schema(format!("CSV is missing column `{}`", field.name)))?;
        indices.push(idx);
    }

    let mut rows = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(indices.len());
        let mut ok = true;
        for (&idx, field) in indices.iter().zip(&schema.fields) {
            let value = record.get(idx).unwrap_or("").trim();
            if MISSING_TOKENS.contains(&value) {
                ok = false;
                break;
            }
            let numeric = matches!(
                field.kind,
                FeatureKind::Continuous { .. } | FeatureKind::Threshold { .. }
            );
            if numeric && value.parse::<f64>().map(f64::is_finite) != Ok(true) {
                ok = false;
                break;
            }
            row.push(value.to_string());
        }
        if ok {
            rows.push(row);
        } else {
            dropped += 1;
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }
    Ok(RawTable { columns: schema.fields.iter().map(|f| f.name.clone()).collect(), rows, dropped })
}

/// Scaling record of one continuous input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub declared: bool,
}

impl Normalization {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            return 0.0;
        }
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.lo + v * (self.hi - self.lo)
    }
}

/// How one post-encoding input column came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnOrigin {
    Continuous(Normalization),
    /// One-hot indicator for `field=category`.
    Indicator,
    /// Declared or observed range was a single point; column is constant 0.
    DegenerateConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputColumn {
    pub name: String,
    pub origin: ColumnOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    /// Sensitive value index into the dataset's [`SensitiveDomain`].
    pub s: usize,
    /// 1-based class label.
    pub y: usize,
}

/// Fully preprocessed dataset: normalized features, indexed sensitive
/// values and labels, plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub columns: Vec<InputColumn>,
    pub sensitive: SensitiveDomain,
    pub label_names: Vec<String>,
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.columns.len()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Share of the most common label, as a fraction.
    pub fn majority_fraction(&self) -> f64 {
        let mut counts = vec![0usize; self.num_classes()];
        for s in &self.samples {
            counts[s.y - 1] += 1;
        }
        counts.into_iter().max().unwrap_or(0) as f64 / self.len().max(1) as f64
    }

    pub fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset {
            samples,
            columns: self.columns.clone(),
            sensitive: self.sensitive.clone(),
            label_names: self.label_names.clone(),
            dropped_rows: 0,
        }
    }

    /// Network shape fitting this dataset: the sensitive encoding occupies
    /// the leading input positions, the feature columns the rest.
    pub fn net_spec(&self, hidden: &[usize]) -> Result<NetworkSpec> {
        let enc = self.sensitive.encoding_width();
        NetworkSpec::with_hidden(
            enc + self.feature_width(),
            hidden,
            self.num_classes(),
            0..enc,
        )
    }
}

/// Converts a raw table into a [`Dataset`] per the schema.
pub fn preprocess(raw: &RawTable, schema: &DatasetSchema) -> Result<Dataset> {
    if raw.rows.is_empty() {
        return Err(Error::Data("empty raw table".into()));
    }
    let sensitive = schema.sensitive_domain()?;
    let label_field = schema.label_field();
    let label_names = match &label_field.kind {
        FeatureKind::Categorical { categories } => categories.clone(),
        _ => unreachable!("validated"),
    };

    let col_of: HashMap<&str, usize> =
        raw.columns.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let col = |name: &str| -> usize { col_of[name] };

    // Plan the x columns and resolve continuous ranges first.
    struct Plan {
        field_idx: usize,
        kind: PlanKind,
    }
    enum PlanKind {
        Continuous(Normalization),
        Degenerate,
        OneHot(Vec<String>),
        Binary(f64),
    }
    let mut plans = Vec::new();
    let mut columns = Vec::new();
    for (fi, field) in schema.fields.iter().enumerate() {
        if field.role != FeatureRole::Feature {
            continue;
        }
        match &field.kind {
            FeatureKind::Continuous { lo, hi } => {
                let (lo, hi, declared) = match (lo, hi) {
                    (Some(l), Some(h)) => (*l, *h, true),
                    _ => {
                        let ci = col(&field.name);
                        let mut min = f64::INFINITY;
                        let mut max = f64::NEG_INFINITY;
                        for row in &raw.rows {
                            let v: f64 = row[ci].parse().unwrap();
                            min = min.min(v);
                            max = max.max(v);
                        }
                        (min, max, false)
                    }
                };
                if lo == hi {
                    columns.push(InputColumn {
                        name: field.name.clone(),
                        origin: ColumnOrigin::DegenerateConstant,
                    });
                    plans.push(Plan { field_idx: fi, kind: PlanKind::Degenerate });
                } else {
                    let norm = Normalization { name: field.name.clone(), lo, hi, declared };
                    columns.push(InputColumn {
                        name: field.name.clone(),
                        origin: ColumnOrigin::Continuous(norm.clone()),
                    });
                    plans.push(Plan { field_idx: fi, kind: PlanKind::Continuous(norm) });
                }
            }
            FeatureKind::Categorical { categories } => {
                for c in categories {
                    columns.push(InputColumn {
                        name: format!("{}={}", field.name, c),
                        origin: ColumnOrigin::Indicator,
                    });
                }
                plans.push(Plan { field_idx: fi, kind: PlanKind::OneHot(categories.clone()) });
            }
            FeatureKind::Threshold { cutoff } => {
                columns.push(InputColumn {
                    name: format!("{}>{}", field.name, cutoff),
                    origin: ColumnOrigin::Indicator,
                });
                plans.push(Plan { field_idx: fi, kind: PlanKind::Binary(*cutoff) });
            }
        }
    }

    let sensitive_fields = schema.sensitive_fields();
    let mut samples = Vec::with_capacity(raw.rows.len());
    for row in &raw.rows {
        let mut x = Vec::with_capacity(columns.len());
        for plan in &plans {
            let field = &schema.fields[plan.field_idx];
            let value = &row[col(&field.name)];
            match &plan.kind {
                PlanKind::Continuous(norm) => x.push(norm.normalize(value.parse().unwrap())),
                PlanKind::Degenerate => x.push(0.0),
                PlanKind::OneHot(categories) => {
                    let idx = categories.iter().position(|c| c == value).ok_or_else(|| {
                        Error::Data(format!(
                            "value `{value}` not in categories of `{}`",
                            field.name
                        ))
                    })?;
                    for i in 0..categories.len() {
                        x.push(if i == idx { 1.0 } else { 0.0 });
                    }
                }
                PlanKind::Binary(cutoff) => {
                    let v: f64 = value.parse().unwrap();
                    x.push(if v > *cutoff { 1.0 } else { 0.0 });
                }
            }
        }

        // Composite sensitive index: first declared field is most significant.
        let mut s = 0usize;
        for field in &sensitive_fields {
            let value = &row[col(&field.name)];
            let cats = DatasetSchema::sensitive_categories(field);
            let idx = match &field.kind {
                FeatureKind::Categorical { categories } => {
                    categories.iter().position(|c| c == value).ok_or_else(|| {
                        Error::Data(format!(
                            "value `{value}` not in categories of sensitive `{}`",
                            field.name
                        ))
                    })?
                }
                FeatureKind::Threshold { cutoff } => {
                    let v: f64 = value.parse().unwrap();
                    usize::from(v > *cutoff)
                }
                FeatureKind::Continuous { .. } => unreachable!(),
            };
            s = s * cats.len() + idx;
        }

        let label_value = &row[col(&label_field.name)];
        let y = label_names.iter().position(|c| c == label_value).ok_or_else(|| {
            Error::Data(format!("label value `{label_value}` not in declared classes"))
        })? + 1;

        samples.push(Sample { x, s, y });
    }

    Ok(Dataset { samples, columns, sensitive, label_names, dropped_rows: raw.dropped })
}

/// Seeded split into (train, test) of sizes `ceil(n(1-f))` / `floor(n*f)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::Config(format!(
            "test fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let test_n = (n as f64 * test_fraction).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let test_idx = &indices[..test_n];
    let train_idx = &indices[test_n..];
    let pick = |idx: &[usize]| {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        dataset.with_samples(sorted.iter().map(|&i| dataset.samples[i].clone()).collect())
    };
    Ok((pick(train_idx), pick(test_idx)))
}

/// Box domain of the preprocessed feature space: [0,1] per continuous
/// column (degenerate columns collapse to [0,0]), 0/1 indicator columns as
/// integral [0,1] ranges, and the sensitive domain attached.
pub fn extract_domain(dataset: &Dataset) -> Result<InputDomain> {
    let features = dataset
        .columns
        .iter()
        .map(|c| match &c.origin {
            ColumnOrigin::Continuous(_) => FeatureRange {
                name: c.name.clone(),
                lo: 0.0,
                hi: 1.0,
                integral: false,
            },
            ColumnOrigin::Indicator => FeatureRange {
                name: c.name.clone(),
                lo: 0.0,
                hi: 1.0,
                integral: true,
            },
            ColumnOrigin::DegenerateConstant => FeatureRange {
                name: c.name.clone(),
                lo: 0.0,
                hi: 0.0,
                integral: false,
            },
        })
        .collect();
    InputDomain::new(features, dataset.sensitive.clone())
}
