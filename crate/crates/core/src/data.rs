//! Tabular schema, raw-file ingestion and the encoded model-input space.
//!
//! The encoded layout follows attribute order. A numeric attribute occupies
//! one standardized column, an ordinal attribute one column in its original
//! integer units, and a categorical attribute one column per category
//! (a one-hot "attribute set").

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::ops::{Deref, DerefMut, Range};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema parse error: {0}")]
    SchemaParse(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("{0} contains no data rows")]
    Empty(String),
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("unknown category {code:?} for attribute {attribute}")]
    UnknownCategory { attribute: String, code: String },
    #[error("attribute {attribute}: ordinal value {value} is not an integer")]
    NonIntegerOrdinal { attribute: String, value: String },
    #[error("missing value for attribute {0}")]
    MissingAttribute(String),
    #[error("attribute {attribute}: expected a {expected} value")]
    WrongValueKind {
        attribute: String,
        expected: &'static str,
    },
    #[error("attribute {attribute}: invalid one-hot block {values:?}")]
    InvalidOneHot { attribute: String, values: Vec<f64> },
    #[error("sample has width {got}, schema expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// One category of a categorical attribute: the raw code found in data files
/// and a readable label used in reports.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Category {
    pub code: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeKind {
    Numeric,
    Ordinal,
    Categorical(Vec<Category>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

/// Class code as it appears in the raw label field, plus its display name.
/// The position in [`LabelMapping::classes`] is the class index.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ClassLabel {
    pub code: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    pub column: String,
    pub classes: [ClassLabel; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Whitespace,
    Comma,
}

/// What a single encoded column represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Numeric { attribute: usize },
    Ordinal { attribute: usize },
    OneHot { attribute: usize, category: usize },
}

impl Column {
    pub fn attribute(&self) -> usize {
        match *self {
            Column::Numeric { attribute }
            | Column::Ordinal { attribute }
            | Column::OneHot { attribute, .. } => attribute,
        }
    }

    pub fn is_one_hot(&self) -> bool {
        matches!(self, Column::OneHot { .. })
    }
}

/// Ordered semantic attributes, their directional constraints and the
/// derived encoded-column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    attributes: Vec<Attribute>,
    direction: Vec<i8>,
    label: LabelMapping,
    delimiter: Delimiter,
    header: bool,
    columns: Vec<Column>,
    ranges: Vec<Range<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    delimiter: Delimiter,
    #[serde(default)]
    header: bool,
    label: LabelFile,
    #[serde(rename = "attribute", default)]
    attributes: Vec<AttributeFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelFile {
    column: String,
    classes: Vec<ClassLabel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeFile {
    name: String,
    kind: KindFile,
    #[serde(default)]
    direction: i8,
    #[serde(default)]
    categories: Vec<Category>,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindFile {
    Numeric,
    Ordinal,
    Categorical,
}

impl Schema {
    /// Builds a schema and checks every invariant: unique attribute names,
    /// at least two unique categories per categorical attribute, direction
    /// codes in {-1, 0, +1} and zero on categoricals.
    pub fn new(
        attributes: Vec<Attribute>,
        direction: Vec<i8>,
        label: LabelMapping,
        delimiter: Delimiter,
        header: bool,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(DataError::InvalidSchema(msg));
        if attributes.is_empty() {
            return invalid("no attributes declared".into());
        }
        if direction.len() != attributes.len() {
            return invalid(format!(
                "{} direction codes for {} attributes",
                direction.len(),
                attributes.len()
            ));
        }
        let mut names = HashSet::new();
        for (attr, &dir) in attributes.iter().zip(&direction) {
            if attr.name.is_empty() {
                return invalid("empty attribute name".into());
            }
            if !names.insert(attr.name.as_str()) {
                return invalid(format!("duplicate attribute name {:?}", attr.name));
            }
            if !(-1..=1).contains(&dir) {
                return invalid(format!("{}: direction must be -1, 0 or 1", attr.name));
            }
            if let AttributeKind::Categorical(cats) = &attr.kind {
                if cats.len() < 2 {
                    return invalid(format!("{}: categorical needs >= 2 categories", attr.name));
                }
                let mut codes = HashSet::new();
                for c in cats {
                    if !codes.insert(c.code.as_str()) {
                        return invalid(format!("{}: duplicate category {:?}", attr.name, c.code));
                    }
                }
                if dir != 0 {
                    return invalid(format!(
                        "{}: categorical attributes cannot carry a direction",
                        attr.name
                    ));
                }
            }
        }
        if names.contains(label.column.as_str()) {
            return invalid(format!(
                "label column {:?} clashes with an attribute",
                label.column
            ));
        }
        if label.classes[0].code == label.classes[1].code {
            return invalid("label classes share a code".into());
        }

        let mut columns = Vec::new();
        let mut ranges = Vec::with_capacity(attributes.len());
        for (i, attr) in attributes.iter().enumerate() {
            let start = columns.len();
            match &attr.kind {
                AttributeKind::Numeric => columns.push(Column::Numeric { attribute: i }),
                AttributeKind::Ordinal => columns.push(Column::Ordinal { attribute: i }),
                AttributeKind::Categorical(cats) => {
                    columns.extend((0..cats.len()).map(|category| Column::OneHot {
                        attribute: i,
                        category,
                    }))
                }
            }
            ranges.push(start..columns.len());
        }

        Ok(Schema {
            attributes,
            direction,
            label,
            delimiter,
            header,
            columns,
            ranges,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| DataError::SchemaParse(e.to_string()))?;
        let classes: [ClassLabel; 2] = file.label.classes.try_into().map_err(|v: Vec<_>| {
            DataError::InvalidSchema(format!("label needs exactly 2 classes, got {}", v.len()))
        })?;
        let mut attributes = Vec::with_capacity(file.attributes.len());
        let mut direction = Vec::with_capacity(file.attributes.len());
        for a in file.attributes {
            let kind = match a.kind {
                KindFile::Numeric | KindFile::Ordinal if !a.categories.is_empty() => {
                    return Err(DataError::InvalidSchema(format!(
                        "{}: only categorical attributes take categories",
                        a.name
                    )))
                }
                KindFile::Numeric => AttributeKind::Numeric,
                KindFile::Ordinal => AttributeKind::Ordinal,
                KindFile::Categorical => AttributeKind::Categorical(a.categories),
            };
            attributes.push(Attribute { name: a.name, kind });
            direction.push(a.direction);
        }
        Schema::new(
            attributes,
            direction,
            LabelMapping {
                column: file.label.column,
                classes,
            },
            file.delimiter,
            file.header,
        )
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn direction(&self) -> &[i8] {
        &self.direction
    }

    pub fn label(&self) -> &LabelMapping {
        &self.label
    }

    pub fn delimiter(&self) -> Delimiter {
        self.delimiter
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Encoded columns spanned by attribute `attribute`.
    pub fn attribute_range(&self, attribute: usize) -> Range<usize> {
        self.ranges[attribute].clone()
    }

    /// Column ranges of every one-hot attribute set.
    pub fn one_hot_sets(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.attributes
            .iter()
            .zip(&self.ranges)
            .filter(|(a, _)| matches!(a.kind, AttributeKind::Categorical(_)))
            .map(|(_, r)| r.clone())
    }

    pub fn ordinal_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Column::Ordinal { .. }))
            .map(|(i, _)| i)
    }

    /// Per-column directional constraint vector: numeric and ordinal columns
    /// carry their attribute's code, every one-hot column carries 0.
    pub fn expand_direction(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match c {
                Column::OneHot { .. } => 0.0,
                _ => f64::from(self.direction[c.attribute()]),
            })
            .collect()
    }

    /// Checks that one-hot blocks are exact and ordinals integral.
    pub fn check_valid(&self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.width() {
            return Err(DataError::WidthMismatch {
                expected: self.width(),
                got: sample.len(),
            });
        }
        for (i, attr) in self.attributes.iter().enumerate() {
            let block = &sample[self.ranges[i].clone()];
            match attr.kind {
                AttributeKind::Numeric => {}
                AttributeKind::Ordinal => {
                    if block[0].fract() != 0.0 || !block[0].is_finite() {
                        return Err(DataError::NonIntegerOrdinal {
                            attribute: attr.name.clone(),
                            value: block[0].to_string(),
                        });
                    }
                }
                AttributeKind::Categorical(_) => {
                    let ones = block.iter().filter(|&&v| v == 1.0).count();
                    let zeros = block.iter().filter(|&&v| v == 0.0).count();
                    if ones != 1 || ones + zeros != block.len() {
                        return Err(DataError::InvalidOneHot {
                            attribute: attr.name.clone(),
                            values: block.to_vec(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, sample: &[f64]) -> bool {
        self.check_valid(sample).is_ok()
    }

    /// Parses one attribute from its raw text field.
    pub fn parse_value(&self, attribute: usize, field: &str) -> Result<AttrValue> {
        let attr = &self.attributes[attribute];
        match &attr.kind {
            AttributeKind::Numeric => field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(AttrValue::Numeric)
                .ok_or_else(|| DataError::WrongValueKind {
                    attribute: attr.name.clone(),
                    expected: "numeric",
                }),
            AttributeKind::Ordinal => {
                parse_ordinal(field).map(AttrValue::Ordinal).ok_or_else(|| {
                    DataError::NonIntegerOrdinal {
                        attribute: attr.name.clone(),
                        value: field.to_string(),
                    }
                })
            }
            AttributeKind::Categorical(cats) => {
                if cats.iter().any(|c| c.code == field) {
                    Ok(AttrValue::Category(field.to_string()))
                } else {
                    Err(DataError::UnknownCategory {
                        attribute: attr.name.clone(),
                        code: field.to_string(),
                    })
                }
            }
        }
    }

    /// Parses a full record from raw fields given in attribute order.
    pub fn parse_record(&self, fields: &[&str]) -> Result<Record> {
        if fields.len() < self.attributes.len() {
            return Err(DataError::MissingAttribute(
                self.attributes[fields.len()].name.clone(),
            ));
        }
        fields
            .iter()
            .take(self.attributes.len())
            .enumerate()
            .map(|(i, f)| self.parse_value(i, f))
            .collect::<Result<Vec<_>>>()
            .map(Record)
    }

    /// Human-readable rendering of a semantic value.
    pub fn display_value(&self, attribute: usize, value: &AttrValue) -> String {
        match (value, &self.attributes[attribute].kind) {
            (AttrValue::Category(code), AttributeKind::Categorical(cats)) => cats
                .iter()
                .find(|c| &c.code == code)
                .map_or_else(|| code.clone(), |c| c.label.clone()),
            (AttrValue::Numeric(v), _) => format_number(*v),
            (AttrValue::Ordinal(v), _) => v.to_string(),
            (AttrValue::Category(code), _) => code.clone(),
        }
    }

    fn class_of(&self, code: &str) -> Option<usize> {
        self.label.classes.iter().position(|c| c.code == code)
    }
}

fn parse_ordinal(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = field.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Integers print bare, everything else with two decimals.
fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Schema::from_toml_str(&text)
}

/// A semantic attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Numeric(f64),
    Ordinal(i64),
    Category(String),
}

/// Semantic values in schema attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct Record(pub Vec<AttrValue>);

/// A point in model-input space. May be invalid (fractional one-hots or
/// ordinals) while a search is in progress.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedSample(pub Vec<f64>);

impl Deref for EncodedSample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for EncodedSample {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for EncodedSample {
    fn from(v: Vec<f64>) -> Self {
        EncodedSample(v)
    }
}

/// Per-column affine standardization. Identity on everything except numeric
/// columns once fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(width: usize) -> Self {
        Scaler {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Population mean/std of each numeric column over `raw` samples.
    /// A zero-variance column gets std 1.
    pub fn fit(schema: &Schema, raw: &[EncodedSample]) -> Self {
        let mut scaler = Scaler::identity(schema.width());
        if raw.is_empty() {
            return scaler;
        }
        let n = raw.len() as f64;
        for (j, col) in schema.columns().iter().enumerate() {
            if !matches!(col, Column::Numeric { .. }) {
                continue;
            }
            let mean = raw.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = raw.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            scaler.mean[j] = mean;
            scaler.std[j] = if std > 0.0 && std.is_finite() {
                std
            } else {
                log::warn!(
                    "attribute {} has zero variance; leaving it unscaled",
                    schema.attributes()[col.attribute()].name
                );
                1.0
            };
        }
        scaler
    }

    pub fn apply(&self, values: &mut [f64]) {
        for ((v, m), s) in values.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, values: &mut [f64]) {
        for ((v, m), s) in values.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Maps semantic records to encoded samples and back under one schema and
/// one set of standardization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub schema: Arc<Schema>,
    pub scaler: Scaler,
}

impl Encoder {
    pub fn new(schema: Arc<Schema>, scaler: Scaler) -> Self {
        Encoder { schema, scaler }
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn encode(&self, record: &Record) -> Result<EncodedSample> {
        let mut raw = encode_raw(&self.schema, record)?;
        self.scaler.apply(&mut raw);
        Ok(raw)
    }

    pub fn decode(&self, sample: &[f64]) -> Result<Record> {
        self.schema.check_valid(sample)?;
        let mut raw = sample.to_vec();
        self.scaler.invert(&mut raw);
        let schema = &self.schema;
        let values = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, attr)| {
                let r = schema.attribute_range(i);
                match &attr.kind {
                    AttributeKind::Numeric => AttrValue::Numeric(raw[r.start]),
                    AttributeKind::Ordinal => AttrValue::Ordinal(raw[r.start] as i64),
                    AttributeKind::Categorical(cats) => {
                        let hot = raw[r].iter().position(|&v| v == 1.0).expect("validated");
                        AttrValue::Category(cats[hot].code.clone())
                    }
                }
            })
            .collect();
        Ok(Record(values))
    }
}

fn encode_raw(schema: &Schema, record: &Record) -> Result<EncodedSample> {
    let attrs = schema.attributes();
    if record.0.len() < attrs.len() {
        return Err(DataError::MissingAttribute(
            attrs[record.0.len()].name.clone(),
        ));
    }
    let mut out = vec![0.0; schema.width()];
    for (i, (attr, value)) in attrs.iter().zip(&record.0).enumerate() {
        let r = schema.attribute_range(i);
        let wrong = |expected| DataError::WrongValueKind {
            attribute: attr.name.clone(),
            expected,
        };
        match (&attr.kind, value) {
            (AttributeKind::Numeric, AttrValue::Numeric(v)) => out[r.start] = *v,
            (AttributeKind::Numeric, AttrValue::Ordinal(v)) => out[r.start] = *v as f64,
            (AttributeKind::Numeric, _) => return Err(wrong("numeric")),
            (AttributeKind::Ordinal, AttrValue::Ordinal(v)) => out[r.start] = *v as f64,
            (AttributeKind::Ordinal, _) => return Err(wrong("ordinal")),
            (AttributeKind::Categorical(cats), AttrValue::Category(code)) => {
                let k = cats.iter().position(|c| &c.code == code).ok_or_else(|| {
                    DataError::UnknownCategory {
                        attribute: attr.name.clone(),
                        code: code.clone(),
                    }
                })?;
                out[r.start + k] = 1.0;
            }
            (AttributeKind::Categorical(_), _) => return Err(wrong("categorical")),
        }
    }
    Ok(EncodedSample(out))
}

/// Labelled encoded samples sharing one encoder. `ids` are zero-based row
/// numbers in the source file.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub encoder: Encoder,
    pub samples: Vec<EncodedSample>,
    pub labels: Vec<usize>,
    pub ids: Vec<usize>,
}

impl Dataset {
    pub fn schema(&self) -> &Schema {
        &self.encoder.schema
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn width(&self) -> usize {
        self.encoder.width()
    }

    /// Encodes a record with this dataset's standardization parameters.
    pub fn encode(&self, record: &Record) -> Result<EncodedSample> {
        self.encoder.encode(record)
    }

    pub fn decode(&self, sample: &[f64]) -> Result<Record> {
        self.encoder.decode(sample)
    }

    /// Fraction of samples carrying the most frequent label.
    pub fn majority_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        ones.max(self.len() - ones) as f64 / self.len() as f64
    }

    fn subset(&self, idx: &[usize], encoder: Encoder) -> Dataset {
        Dataset {
            encoder,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Shuffled split with `round(fraction * n)` rows in the training part.
    /// Standardization is fitted on the training rows of this (unscaled)
    /// dataset and applied to both halves.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DataError::BadFraction(fraction));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * fraction).round() as usize;
        let (train_idx, val_idx) = idx.split_at(n_train);

        // Work on raw units regardless of any previous scaling.
        let raw = |i: &usize| {
            let mut v = self.samples[*i].clone();
            self.encoder.scaler.invert(&mut v);
            v
        };
        let train_raw: Vec<EncodedSample> = train_idx.iter().map(raw).collect();
        let scaler = Scaler::fit(self.schema(), &train_raw);
        let encoder = Encoder::new(self.encoder.schema.clone(), scaler);

        let scaled = |idx: &[usize]| {
            let mut part = self.subset(idx, encoder.clone());
            for s in &mut part.samples {
                self.encoder.scaler.invert(s);
                encoder.scaler.apply(s);
            }
            part
        };
        Ok((scaled(train_idx), scaled(val_idx)))
    }
}

/// Reads a raw data file laid out per the schema (attribute fields in schema
/// order, label field last, or by header names when `header = true`).
/// Returns an unscaled dataset.
pub fn load_dataset(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, schema).map_err(|e| match e {
        DataError::Empty(_) => DataError::Empty(path.display().to_string()),
        e => e,
    })
}

pub fn parse_dataset(text: &str, schema: Arc<Schema>) -> Result<Dataset> {
    let split_fields = |line: &str| -> Vec<String> {
        match schema.delimiter() {
            Delimiter::Whitespace => line.split_whitespace().map(str::to_string).collect(),
            Delimiter::Comma => line.split(',').map(|f| f.trim().to_string()).collect(),
        }
    };
    let n_fields = schema.attributes().len() + 1;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    // Permutation from file position to schema position (label last).
    let order: Vec<usize> =
        if schema.header {
            let (line, head) = lines
                .next()
                .ok_or_else(|| DataError::Empty("input".into()))?;
            let names = split_fields(head);
            let mut order = Vec::with_capacity(n_fields);
            for name in schema
                .attributes()
                .iter()
                .map(|a| a.name.as_str())
                .chain([schema.label().column.as_str()])
            {
                let pos = names.iter().position(|n| n == name).ok_or_else(|| {
                    DataError::MalformedRow {
                        line,
                        msg: format!("header lacks column {name:?}"),
                    }
                })?;
                order.push(pos);
            }
            order
        } else {
            (0..n_fields).collect()
        };

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (line, text) in lines {
        let fields = split_fields(text);
        let needed = order.iter().max().map_or(0, |m| m + 1);
        if fields.len() < needed || (!schema.header && fields.len() != n_fields) {
            return Err(DataError::MalformedRow {
                line,
                msg: format!("expected {} fields, found {}", n_fields, fields.len()),
            });
        }
        let ordered: Vec<&str> = order.iter().map(|&p| fields[p].as_str()).collect();
        let (attr_fields, label_field) = ordered.split_at(n_fields - 1);
        let record = schema.parse_record(attr_fields).map_err(|e| match e {
            DataError::MalformedRow { .. } => e,
            e => DataError::MalformedRow {
                line,
                msg: e.to_string(),
            },
        })?;
        let label = schema
            .class_of(label_field[0])
            .ok_or_else(|| DataError::MalformedRow {
                line,
                msg: format!("unknown class label {:?}", label_field[0]),
            })?;
        samples.push(encode_raw(&schema, &record)?);
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(DataError::Empty("input".into()));
    }
    let ids = (0..samples.len()).collect();
    let width = schema.width();
    Ok(Dataset {
        encoder: Encoder::new(schema, Scaler::identity(width)),
        samples,
        labels,
        ids,
    })
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Numeric(v) => write!(f, "{}", format_number(*v)),
            AttrValue::Ordinal(v) => write!(f, "{v}"),
            AttrValue::Category(c) => f.write_str(c),
        }
    }
}
