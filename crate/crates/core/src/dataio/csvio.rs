use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featurespace::{FeatureSchema, FieldKind, RawRecord};
use crate::numcore::Rng;

/// Schema-conformant rows, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<RawRecord>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<RawRecord>) -> Self {
        Self { schema, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.label == 1).count() as f64 / self.rows.len() as f64
    }

    /// Rows whose split key sorts strictly before `cutoff` go to the first
    /// part. Rows without a split key count as training rows.
    pub fn split_by_key(&self, cutoff: &str) -> (Dataset, Dataset) {
        let (train, test): (Vec<_>, Vec<_>) = self
            .rows
            .iter()
            .cloned()
            .partition(|r| r.split.as_deref().map_or(true, |k| k < cutoff));
        (
            Dataset::new(self.schema.clone(), train),
            Dataset::new(self.schema.clone(), test),
        )
    }

    /// Seeded shuffle, then the first `train_fraction` of rows for training.
    pub fn split_random(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        Rng::new(seed).shuffle(&mut idx);
        let cut = ((self.rows.len() as f64) * train_fraction).round() as usize;
        let pick = |ids: &[usize]| ids.iter().map(|&i| self.rows[i].clone()).collect();
        (
            Dataset::new(self.schema.clone(), pick(&idx[..cut])),
            Dataset::new(self.schema.clone(), pick(&idx[cut..])),
        )
    }

    /// Dense group index per row (order of first appearance). All rows share
    /// group 0 when the schema has no group column.
    pub fn group_indices(&self) -> Vec<usize> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        self.rows
            .iter()
            .map(|r| match &r.group {
                None => 0,
                Some(g) => {
                    let next = seen.len();
                    *seen.entry(g.as_str()).or_insert(next)
                }
            })
            .collect()
    }
}

/// Reads a headered, comma-separated file. Columns are matched by name;
/// extra columns are ignored. Row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let positions: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut columns = HashMap::new();
    for col in schema.required_columns() {
        let pos = positions
            .get(col)
            .ok_or_else(|| Error::SchemaMismatch(col.to_string()))?;
        columns.insert(col.to_string(), *pos);
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = RawRecord::parse(
            schema,
            |c| columns.get(c).and_then(|&p| record.get(p)),
            Some(i + 1),
        )?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(Dataset::new(schema.clone(), rows))
}

/// Writes every schema column; floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let schema = &data.schema;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let columns = schema.required_columns();
    writer.write_record(&columns)?;
    let label = schema.label.as_str();
    for row in &data.rows {
        let mut cat = row.categorical.iter();
        let mut num = row.numerical.iter();
        let mut cells: Vec<String> = Vec::with_capacity(columns.len());
        for f in &schema.fields {
            cells.push(match f.kind {
                FieldKind::Categorical => cat.next().cloned().unwrap_or_default(),
                FieldKind::Numerical => {
                    num.next().map(|v| v.to_string()).unwrap_or_default()
                }
            });
        }
        for col in &columns[schema.fields.len()..] {
            let value = if *col == label {
                row.label.to_string()
            } else if Some(*col) == schema.group.as_deref() {
                row.group.clone().unwrap_or_default()
            } else {
                row.split.clone().unwrap_or_default()
            };
            cells.push(value);
        }
        writer.write_record(&cells)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
