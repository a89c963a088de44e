//! CSV ingestion through a column mapping.
//!
//! A mapping names the object kind, the column holding the external key and
//! the columns to keep as attributes. In TOML form:
//!
//! ```toml
//! kind = "molecule-cation"
//! key_column = "smiles"
//!
//! [[attributes]]
//! column = "lambda_max"
//! kind = "numeric"
//! unit = "nm"
//!
//! [[attributes]]
//! column = "anion"
//! name = "anion_family"   # attribute name, defaults to the column name
//! kind = "categorical"
//! ```
//!
//! Empty cells leave the attribute out of that row's characterization.
//! Boolean cells accept `true/false`, `yes/no` and `1/0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AttributeKind, AttributeValue, ModelError, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: AttributeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ColumnMapping {
    pub fn attribute(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub kind: String,
    pub key_column: String,
    #[serde(default)]
    pub attributes: Vec<ColumnMapping>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestRow {
    pub key: String,
    pub attributes: BTreeMap<String, AttributeValue>,
}

fn malformed(msg: String) -> ModelError {
    ModelError::MalformedInput(msg)
}

fn parse_cell(m: &ColumnMapping, cell: &str, row: usize) -> Result<AttributeValue, ModelError> {
    let bad = |what: &str| ModelError::InvalidAttribute {
        name: m.attribute().to_string(),
        reason: format!("row {row}: {cell:?} is not {what}"),
    };
    let value = match m.kind {
        AttributeKind::Numeric => {
            let v: f64 = cell.parse().map_err(|_| bad("a number"))?;
            if !v.is_finite() {
                return Err(bad("a finite number"));
            }
            Value::Numeric(v)
        }
        AttributeKind::Categorical => Value::Categorical(cell.to_string()),
        AttributeKind::Text => Value::Text(cell.to_string()),
        AttributeKind::Boolean => match cell.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Value::Boolean(true),
            "false" | "no" | "0" => Value::Boolean(false),
            _ => return Err(bad("a boolean")),
        },
    };
    let unit = match (m.kind, &m.unit) {
        (AttributeKind::Numeric, u) => u.clone(),
        (_, Some(_)) => {
            return Err(ModelError::InvalidAttribute {
                name: m.attribute().to_string(),
                reason: "only numeric attributes carry units".into(),
            })
        }
        (_, None) => None,
    };
    Ok(AttributeValue { value, unit })
}

/// Parses `text` (with a header row) into one row per record.
pub fn parse_csv(text: &str, mapping: &CsvMapping) -> Result<Vec<IngestRow>, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(format!("header: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(format!("column {name:?} not found")))
    };
    let key_at = column(&mapping.key_column)?;
    let attr_at: Vec<usize> = mapping
        .attributes
        .iter()
        .map(|m| column(&m.column))
        .collect::<Result<_, _>>()?;
    let mut names = std::collections::HashSet::new();
    if let Some(m) = mapping.attributes.iter().find(|m| !names.insert(m.attribute())) {
        return Err(malformed(format!("attribute {:?} mapped twice", m.attribute())));
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| malformed(format!("row {row}: {e}")))?;
        let key = record.get(key_at).unwrap_or("").to_string();
        if key.is_empty() {
            return Err(malformed(format!("row {row}: empty key")));
        }
        let mut attributes = BTreeMap::new();
        for (m, &at) in mapping.attributes.iter().zip(&attr_at) {
            let cell = record.get(at).unwrap_or("");
            if !cell.is_empty() {
                attributes.insert(m.attribute().to_string(), parse_cell(m, cell, row)?);
            }
        }
        rows.push(IngestRow { key, attributes });
    }
    Ok(rows)
}
