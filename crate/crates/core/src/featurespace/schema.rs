use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expected sign of the relation between a numerical field and the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    #[default]
    None,
}

impl Direction {
    pub fn is_monotone(self) -> bool {
        self != Direction::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Categorical,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenseMode {
    /// `(ln(1 + x) - mu) / sigma`
    #[default]
    Log1pZscore,
    Raw,
}

fn default_buckets() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Categorical only; includes the reserved OOV id 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    /// Numerical only.
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl FieldSpec {
    pub fn categorical(name: impl Into<String>, vocab_size: usize) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Categorical,
            vocab_size: Some(vocab_size),
            buckets: default_buckets(),
            direction: Direction::None,
        }
    }

    pub fn numerical(name: impl Into<String>, buckets: usize, direction: Direction) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Numerical,
            vocab_size: None,
            buckets,
            direction,
        }
    }
}

/// Ordered field list: every categorical field precedes every numerical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub label: String,
    /// Column grouping impressions by user, used by GAUC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Column used for time-based train/test splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default)]
    pub dense_transform: DenseMode,
    pub fields: Vec<FieldSpec>,
}

impl FeatureSchema {
    pub fn new(label: impl Into<String>, fields: Vec<FieldSpec>) -> Result<Self> {
        let schema = Self {
            label: label.into(),
            group: None,
            split: None,
            dense_transform: DenseMode::default(),
            fields,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_group(mut self, column: impl Into<String>) -> Self {
        self.group = Some(column.into());
        self
    }

    pub fn with_split(mut self, column: impl Into<String>) -> Self {
        self.split = Some(column.into());
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let mut numerical_started = false;
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) || f.name == self.label {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", f.name)));
            }
            match f.kind {
                FieldKind::Categorical => {
                    if numerical_started {
                        return Err(Error::InvalidSchema(format!(
                            "categorical field `{}` follows a numerical field",
                            f.name
                        )));
                    }
                    match f.vocab_size {
                        Some(v) if v >= 2 => {}
                        _ => {
                            return Err(Error::InvalidSchema(format!(
                                "categorical field `{}` needs vocab_size >= 2",
                                f.name
                            )))
                        }
                    }
                }
                FieldKind::Numerical => {
                    numerical_started = true;
                    if f.vocab_size.is_some() {
                        return Err(Error::InvalidSchema(format!(
                            "numerical field `{}` cannot declare vocab_size",
                            f.name
                        )));
                    }
                    if f.buckets < 1 || (f.direction.is_monotone() && f.buckets < 2) {
                        return Err(Error::InvalidSchema(format!(
                            "numerical field `{}` has invalid bucket count {}",
                            f.name, f.buckets
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn categorical(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.kind == FieldKind::Categorical)
    }

    pub fn numerical(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.kind == FieldKind::Numerical)
    }

    pub fn n_categorical(&self) -> usize {
        self.categorical().count()
    }

    pub fn n_numerical(&self) -> usize {
        self.numerical().count()
    }

    /// Position of a numerical field within the numerical block.
    pub fn numerical_index(&self, name: &str) -> Option<usize> {
        self.numerical().position(|f| f.name == name)
    }

    /// Every column a data file must provide.
    pub fn required_columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        cols.push(&self.label);
        for extra in [&self.group, &self.split].into_iter().flatten() {
            if !cols.contains(&extra.as_str()) {
                cols.push(extra);
            }
        }
        cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
label = "is_click"
group = "user_id"

[[fields]]
name = "user_id"
kind = "categorical"
vocab_size = 100

[[fields]]
name = "play_cnt"
kind = "numerical"
buckets = 8
direction = "increasing"

[[fields]]
name = "age_days"
kind = "numerical"
"#;

    #[test]
    fn parses_toml() {
        let s = FeatureSchema::from_toml_str(SCHEMA).unwrap();
        assert_eq!(s.n_categorical(), 1);
        assert_eq!(s.n_numerical(), 2);
        assert_eq!(s.fields[2].buckets, 10);
        assert_eq!(s.fields[2].direction, Direction::None);
        assert_eq!(s.required_columns(), vec!["user_id", "play_cnt", "age_days", "is_click"]);
        let again = FeatureSchema::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_layouts() {
        let bad = SCHEMA.replace("buckets = 8", "bucketz = 8");
        assert!(FeatureSchema::from_toml_str(&bad).is_err());

        let order = FeatureSchema::new(
            "y",
            vec![
                FieldSpec::numerical("x", 4, Direction::Increasing),
                FieldSpec::categorical("c", 3),
            ],
        );
        assert!(matches!(order, Err(Error::InvalidSchema(_))));

        let dup = FeatureSchema::new(
            "y",
            vec![FieldSpec::categorical("c", 3), FieldSpec::categorical("c", 3)],
        );
        assert!(dup.is_err());

        let tiny_vocab = FeatureSchema::new("y", vec![FieldSpec::categorical("c", 1)]);
        assert!(tiny_vocab.is_err());

        let one_bucket_monotone =
            FeatureSchema::new("y", vec![FieldSpec::numerical("x", 1, Direction::Decreasing)]);
        assert!(one_bucket_monotone.is_err());
        assert!(FeatureSchema::new("y", vec![FieldSpec::numerical("x", 1, Direction::None)]).is_ok());
    }
}
