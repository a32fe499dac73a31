use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

/// One declared entity attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    /// Reference level for categorical attributes; the most frequent level
    /// is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// Attribute schema shared by every entity of a corpus, in column order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeSpec>,
}

impl Schema {
    pub fn get(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Numeric(f64),
    Categorical(String),
}

impl AttributeValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            AttributeValue::Numeric(v) => Some(*v),
            AttributeValue::Categorical(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            AttributeValue::Categorical(l) => Some(l),
            AttributeValue::Numeric(_) => None,
        }
    }
}

/// A search subject. `id` is the query term, which is also the join key
/// against suggestion records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl Entity {
    pub fn new(name: impl Into<String>, attributes: BTreeMap<String, AttributeValue>) -> Self {
        let name = name.into();
        Self {
            id: name.clone(),
            name,
            attributes,
        }
    }
}

pub fn load_schema(path: &Path) -> Result<Schema, StoreError> {
    let file = File::open(path)?;
    serde_json::from_reader(file)
        .map_err(|e| StoreError::Entities(format!("{}: {e}", path.display())))
}

pub fn load_entities(path: &Path, schema: &Schema) -> Result<Vec<Entity>, StoreError> {
    read_entities(File::open(path)?, schema)
}

/// Reads the entity CSV: a `name` column followed by the schema's attributes.
pub fn read_entities<R: Read>(reader: R, schema: &Schema) -> Result<Vec<Entity>, StoreError> {
    let err = |m: String| StoreError::Entities(m);
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("name") {
        return Err(err("first column must be `name`".into()));
    }
    let mut columns = Vec::new();
    for column in &header[1..] {
        let spec = schema
            .get(column)
            .ok_or_else(|| err(format!("column `{column}` is not declared in the schema")))?;
        columns.push(spec);
    }
    for spec in &schema.attributes {
        if !header[1..].contains(&spec.name) {
            return Err(err(format!(
                "schema attribute `{}` has no column",
                spec.name
            )));
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = row + 2;
        let name = record.get(0).unwrap_or_default().to_string();
        if name.is_empty() {
            return Err(err(format!("row {line}: empty name")));
        }
        if !seen.insert(name.clone()) {
            return Err(err(format!("row {line}: duplicate entity `{name}`")));
        }
        let mut attributes = BTreeMap::new();
        for (spec, raw) in columns.iter().zip(record.iter().skip(1)) {
            let value = match spec.kind {
                AttributeKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| {
                        err(format!(
                            "row {line}: `{}` is not numeric: {raw:?}",
                            spec.name
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(err(format!("row {line}: `{}` is not finite", spec.name)));
                    }
                    AttributeValue::Numeric(v)
                }
                AttributeKind::Categorical => {
                    if raw.is_empty() {
                        return Err(err(format!("row {line}: `{}` is empty", spec.name)));
                    }
                    AttributeValue::Categorical(raw.to_string())
                }
            };
            attributes.insert(spec.name.clone(), value);
        }
        if attributes.len() != columns.len() {
            return Err(err(format!(
                "row {line}: expected {} attributes",
                columns.len()
            )));
        }
        out.push(Entity::new(name, attributes));
    }
    Ok(out)
}
