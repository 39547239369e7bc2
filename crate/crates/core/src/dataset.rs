//! Labeled datasets and their CSV / JSONL encodings.
//!
//! CSV rows are `id,ood_flag,label,f0,...,f{d-1}` with an optional header
//! row starting with `id`. JSONL lines are objects with keys `id`, `ood`,
//! `label` and `features`. Features are used as given; no normalization is
//! applied before mixing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{FeatureVector, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// Infers the format from a file extension (`.csv`, `.jsonl`, `.ndjson`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => Ok(DataFormat::Csv),
            Some("jsonl") | Some("ndjson") => Ok(DataFormat::Jsonl),
            _ => Err(Error::InvalidConfig(format!(
                "cannot infer dataset format from '{}'",
                path.display()
            ))),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Csv => "csv",
            DataFormat::Jsonl => "jsonl",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" | "ndjson" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
        }
    }
}

/// Mapping from label names to dense class indices `0..K`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabelTable {
    names: Vec<String>,
}

impl LabelTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidData("duplicate label names".into()));
        }
        Ok(Self { names })
    }

    /// `"0"`, `"1"`, ... for `k` classes.
    pub fn numeric(k: usize) -> Self {
        Self {
            names: (0..k).map(|i| i.to_string()).collect(),
        }
    }

    /// Numeric labels keep their values; anything else is sorted lexicographically.
    fn infer<'a>(raw: impl Iterator<Item = &'a str>) -> Self {
        let raw: BTreeSet<&str> = raw.collect();
        let numeric: Option<Vec<usize>> = raw.iter().map(|s| s.parse::<usize>().ok()).collect();
        match numeric {
            Some(ns) => Self::numeric(ns.into_iter().max().map_or(0, |m| m + 1)),
            None => Self {
                names: raw.into_iter().map(str::to_owned).collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, usize> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, usize> = serde_json::from_str(text)?;
        let mut names = vec![None; map.len()];
        for (name, idx) in map {
            match names.get_mut(idx) {
                Some(slot @ None) => *slot = Some(name),
                _ => {
                    return Err(Error::InvalidData(format!(
                        "label table indices must be dense and unique (bad index {idx})"
                    )))
                }
            }
        }
        Ok(Self {
            names: names.into_iter().map(|n| n.expect("all slots filled")).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub features: FeatureVector,
    pub label: Option<usize>,
    pub ood: bool,
}

impl Record {
    pub fn sample(&self) -> Sample {
        Sample::new(self.id.clone(), self.features.clone())
    }
}

/// Validated records sharing one feature dimension, plus the label table
/// that maps their class indices to names.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    records: Vec<Record>,
    labels: LabelTable,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(records: Vec<Record>, labels: LabelTable) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyDataset)?;
        let dim = first.features.dim();
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if r.features.dim() != dim {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "dimension mismatch: expected {dim}, got {}",
                        r.features.dim()
                    ),
                });
            }
            match r.label {
                None if !r.ood => {
                    return Err(Error::Parse {
                        row,
                        message: "in-distribution record has no label".into(),
                    })
                }
                Some(k) if k >= labels.len() => {
                    return Err(Error::Parse {
                        row,
                        message: format!("label {k} outside the label table"),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            records,
            labels,
            dim,
        })
    }

    /// Builds a dataset with numeric labels `0..=max label`.
    pub fn with_numeric_labels(records: Vec<Record>) -> Result<Self> {
        let k = records
            .iter()
            .filter_map(|r| r.label)
            .max()
            .map_or(0, |m| m + 1);
        Self::new(records, LabelTable::numeric(k))
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_ood(&self) -> usize {
        self.records.iter().filter(|r| r.ood).count()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.records.iter().map(Record::sample).collect()
    }

    pub fn ood_flags(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.ood).collect()
    }

    /// Records with `ood == false`, in order.
    pub fn in_distribution(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.ood)
    }

    /// A dataset with the records selected by `keep`, sharing this label table.
    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> Result<Self> {
        Self::new(
            self.records.iter().filter(|r| keep(r)).cloned().collect(),
            self.labels.clone(),
        )
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "ood_flag".into(), "label".into()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![
                r.id.clone(),
                if r.ood { "1" } else { "0" }.to_string(),
                self.label_name(r.label),
            ];
            row.extend(r.features.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let label = match r.label {
                None => Value::Null,
                Some(k) => match self.labels.name(k).and_then(|n| n.parse::<u64>().ok()) {
                    Some(n) => Value::from(n),
                    None => Value::from(self.label_name(Some(k))),
                },
            };
            let obj = serde_json::json!({
                "id": r.id,
                "ood": r.ood,
                "label": label,
                "features": r.features,
            });
            out.push_str(&obj.to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_string_as(&self, format: DataFormat) -> String {
        match format {
            DataFormat::Csv => self.to_csv_string(),
            DataFormat::Jsonl => self.to_jsonl_string(),
        }
    }

    pub fn save(&self, path: &Path, format: DataFormat) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_string_as(format).as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    fn label_name(&self, label: Option<usize>) -> String {
        label
            .and_then(|k| self.labels.name(k))
            .unwrap_or_default()
            .to_string()
    }
}

struct RawRecord {
    id: String,
    ood: bool,
    label: Option<String>,
    features: FeatureVector,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "ood" | "yes" => Some(true),
        "0" | "false" | "id" | "no" => Some(false),
        _ => None,
    }
}

fn parse_features(row: usize, values: Vec<f64>) -> Result<FeatureVector> {
    FeatureVector::new(values).map_err(|e| Error::Parse {
        row,
        message: e.to_string(),
    })
}

fn read_csv(text: &str) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut data_row = 0;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: data_row + 1,
            message: e.to_string(),
        })?;
        if line == 0 && rec.get(0) == Some("id") {
            continue;
        }
        if rec.iter().all(str::is_empty) {
            continue;
        }
        data_row += 1;
        let row = data_row;
        let err = |message: String| Error::Parse { row, message };
        if rec.len() < 4 {
            return Err(err(format!(
                "expected id, ood_flag, label and at least one feature, got {} fields",
                rec.len()
            )));
        }
        let ood = parse_flag(&rec[1]).ok_or_else(|| err(format!("bad ood flag '{}'", &rec[1])))?;
        let label = (!rec[2].is_empty()).then(|| rec[2].to_string());
        let values = rec
            .iter()
            .skip(3)
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("feature {j}: cannot parse '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(RawRecord {
            id: rec[0].to_string(),
            ood,
            label,
            features: parse_features(row, values)?,
        });
    }
    Ok(out)
}

fn read_jsonl(reader: impl BufRead) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    let mut data_row = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Parse {
            row: data_row + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        data_row += 1;
        let row = data_row;
        let err = |message: String| Error::Parse { row, message };
        let v: Value = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let id = match v.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(err("missing or invalid \"id\"".into())),
        };
        let ood = match v.get("ood") {
            Some(Value::Bool(b)) => *b,
            Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
            Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
            _ => return Err(err("missing or invalid \"ood\"".into())),
        };
        let label = match v.get("label") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) if n.as_u64().is_some() => Some(n.to_string()),
            Some(other) => return Err(err(format!("invalid label {other}"))),
        };
        let values = match v.get("features") {
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(j, x)| match x {
                    Value::Number(n) => n.as_f64().ok_or_else(|| err(format!("feature {j} out of range"))),
                    Value::String(s) => s
                        .parse::<f64>()
                        .map_err(|_| err(format!("feature {j}: cannot parse '{s}'"))),
                    other => Err(err(format!("feature {j}: not a number ({other})"))),
                })
                .collect::<Result<Vec<f64>>>()?,
            _ => return Err(err("missing or invalid \"features\"".into())),
        };
        out.push(RawRecord {
            id,
            ood,
            label,
            features: parse_features(row, values)?,
        });
    }
    Ok(out)
}

fn resolve(raw: Vec<RawRecord>, table: Option<&LabelTable>) -> Result<LabeledDataset> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = match table {
        Some(t) => t.clone(),
        None => LabelTable::infer(raw.iter().filter_map(|r| r.label.as_deref())),
    };
    let mut records = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let label = match &r.label {
            None => None,
            Some(name) => Some(labels.index_of(name).ok_or_else(|| Error::Parse {
                row: i + 1,
                message: format!("label '{name}' is not in the label table"),
            })?),
        };
        records.push(Record {
            id: r.id,
            features: r.features,
            label,
            ood: r.ood,
        });
    }
    LabeledDataset::new(records, labels)
}

pub fn parse_dataset(text: &str, format: DataFormat, table: Option<&LabelTable>) -> Result<LabeledDataset> {
    let raw = match format {
        DataFormat::Csv => read_csv(text)?,
        DataFormat::Jsonl => read_jsonl(text.as_bytes())?,
    };
    resolve(raw, table)
}

/// Loads a dataset, inferring the label table from the labels present.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<LabeledDataset> {
    load_dataset_with_labels(path, format, None)
}

/// Loads a dataset, mapping labels through `table` when given.
pub fn load_dataset_with_labels(
    path: &Path,
    format: DataFormat,
    table: Option<&LabelTable>,
) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let raw = match format {
        DataFormat::Csv => {
            let mut text = String::new();
            std::io::Read::read_to_string(&mut BufReader::new(file), &mut text)
                .map_err(|e| Error::io(path, e))?;
            read_csv(&text)?
        }
        DataFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    resolve(raw, table)
}
