//! Dataset schema: column kinds, categorical encodings, and label mappings.
//!
//! A [`SchemaConfig`] is the declarative on-disk form (JSON). It either lists
//! every column (headerless files) or names only the special columns and
//! lets the CSV header supply the rest via `default_kind`. Resolving a config
//! against the actual header yields a [`FeatureSchema`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a column contributes to the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Real-valued feature, parsed as f64.
    Numeric,
    /// String feature, ordinal-encoded to [1, d].
    Categorical,
    /// Dropped: detection must not depend on capture time.
    Timestamp,
    /// Normal-vs-anomaly ground truth (raw values, see `normal_values`).
    BinaryLabel,
    /// Attack category ground truth for the classification stage.
    AttackLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Declarative schema file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub name: String,
    /// Whether the CSV carries a header row.
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Explicit column list. Required when `has_header` is false; otherwise
    /// acts as per-name overrides on top of the header.
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
    /// Kind assigned to header columns not listed in `columns`.
    #[serde(default)]
    pub default_kind: Option<ColumnKind>,
    /// Raw binary-label values that mean "normal"; anything else is an
    /// anomaly.
    #[serde(default)]
    pub normal_values: Vec<String>,
    /// Optional category -> raw attack labels map. When absent, each distinct
    /// anomalous raw label becomes its own category.
    #[serde(default)]
    pub attack_categories: Option<BTreeMap<String, Vec<String>>>,
}

fn default_true() -> bool {
    true
}

impl SchemaConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SchemaConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Resolves against the CSV header (None for headerless files) into a
    /// validated [`FeatureSchema`].
    pub fn resolve(&self, header: Option<&[String]>) -> Result<FeatureSchema> {
        let columns: Vec<ColumnSpec> = match (self.has_header, header) {
            (false, _) => {
                if self.columns.is_empty() {
                    return Err(Error::Config(format!(
                        "schema '{}' declares no header and no explicit columns",
                        self.name
                    )));
                }
                self.columns.clone()
            }
            (true, None) => {
                return Err(Error::SchemaMismatch(format!(
                    "schema '{}' expects a header row but the file has none",
                    self.name
                )))
            }
            (true, Some(names)) => {
                let overrides: BTreeMap<&str, ColumnKind> = self
                    .columns
                    .iter()
                    .map(|c| (c.name.as_str(), c.kind))
                    .collect();
                // Explicit columns must exist in the file.
                for spec in &self.columns {
                    if !names.iter().any(|n| n == &spec.name) {
                        return Err(Error::SchemaMismatch(format!(
                            "schema column '{}' not present in CSV header",
                            spec.name
                        )));
                    }
                }
                let unlisted = names.iter().find(|n| !overrides.contains_key(n.as_str()));
                if unlisted.is_some() && self.default_kind.is_none() {
                    return Err(Error::Config(format!(
                        "schema '{}' needs default_kind to resolve unlisted header columns",
                        self.name
                    )));
                }
                names
                    .iter()
                    .map(|n| ColumnSpec {
                        name: n.clone(),
                        kind: match overrides.get(n.as_str()) {
                            Some(k) => *k,
                            None => self.default_kind.expect("checked above"),
                        },
                    })
                    .collect()
            }
        };

        let schema = FeatureSchema {
            name: self.name.clone(),
            columns,
            normal_values: self.normal_values.iter().cloned().collect(),
            attack_categories: self.attack_categories.clone(),
            categorical_maps: BTreeMap::new(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

/// Resolved schema: ordered column kinds plus, after fitting, the ordinal
/// code map of every categorical column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    pub normal_values: BTreeSet<String>,
    pub attack_categories: Option<BTreeMap<String, Vec<String>>>,
    /// Categorical column name -> raw value -> ordinal code in [1, d].
    pub categorical_maps: BTreeMap<String, BTreeMap<String, u32>>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        let binary = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::BinaryLabel)
            .count();
        if binary != 1 {
            return Err(Error::Config(format!(
                "schema '{}' must declare exactly one binary_label column, found {}",
                self.name, binary
            )));
        }
        let attack = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::AttackLabel)
            .count();
        if attack > 1 {
            return Err(Error::Config(format!(
                "schema '{}' declares {} attack_label columns, at most one allowed",
                self.name, attack
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(&c.name) {
                return Err(Error::Config(format!(
                    "schema '{}' has duplicate column '{}'",
                    self.name, c.name
                )));
            }
        }
        Ok(())
    }

    /// Names of the columns that become features, in file order.
    pub fn feature_columns(&self) -> Vec<&ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
            .collect()
    }

    pub fn binary_label_column(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::BinaryLabel)
            .expect("validated schema has a binary label column")
    }

    pub fn attack_label_column(&self) -> Option<&ColumnSpec> {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::AttackLabel)
    }

    pub fn is_normal_value(&self, raw: &str) -> bool {
        self.normal_values.contains(raw)
    }

    /// The raw value -> category name map (explicit taxonomy if configured,
    /// identity otherwise).
    pub fn category_of(&self, raw: &str) -> Option<String> {
        match &self.attack_categories {
            Some(map) => map.iter().find_map(|(cat, raws)| {
                raws.iter().any(|r| r == raw).then(|| cat.clone())
            }),
            None => Some(raw.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit_config() -> SchemaConfig {
        SchemaConfig {
            name: "t".into(),
            has_header: false,
            columns: vec![
                ColumnSpec {
                    name: "a".into(),
                    kind: ColumnKind::Numeric,
                },
                ColumnSpec {
                    name: "proto".into(),
                    kind: ColumnKind::Categorical,
                },
                ColumnSpec {
                    name: "ts".into(),
                    kind: ColumnKind::Timestamp,
                },
                ColumnSpec {
                    name: "label".into(),
                    kind: ColumnKind::BinaryLabel,
                },
            ],
            default_kind: None,
            normal_values: vec!["normal".into()],
            attack_categories: None,
        }
    }

    #[test]
    fn resolve_explicit_columns() {
        let schema = explicit_config().resolve(None).unwrap();
        assert_eq!(schema.columns.len(), 4);
        assert_eq!(schema.feature_columns().len(), 2);
        assert_eq!(schema.binary_label_column().name, "label");
    }

    #[test]
    fn resolve_header_with_default_kind() {
        let cfg = SchemaConfig {
            name: "t".into(),
            has_header: true,
            columns: vec![ColumnSpec {
                name: "label".into(),
                kind: ColumnKind::BinaryLabel,
            }],
            default_kind: Some(ColumnKind::Numeric),
            normal_values: vec!["Benign".into()],
            attack_categories: None,
        };
        let header: Vec<String> = ["f1", "f2", "label"].iter().map(|s| s.to_string()).collect();
        let schema = cfg.resolve(Some(&header)).unwrap();
        assert_eq!(schema.feature_columns().len(), 2);
    }

    #[test]
    fn missing_binary_label_is_rejected() {
        let mut cfg = explicit_config();
        cfg.columns.retain(|c| c.kind != ColumnKind::BinaryLabel);
        assert!(matches!(cfg.resolve(None), Err(Error::Config(_))));
    }

    #[test]
    fn override_must_exist_in_header() {
        let cfg = SchemaConfig {
            name: "t".into(),
            has_header: true,
            columns: vec![ColumnSpec {
                name: "nope".into(),
                kind: ColumnKind::BinaryLabel,
            }],
            default_kind: Some(ColumnKind::Numeric),
            normal_values: vec![],
            attack_categories: None,
        };
        let header: Vec<String> = ["f1", "label"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(
            cfg.resolve(Some(&header)),
            Err(Error::SchemaMismatch(msg)) if msg.contains("nope")
        ));
    }

    #[test]
    fn category_mapping_explicit_and_identity() {
        let mut cfg = explicit_config();
        cfg.attack_categories = Some(BTreeMap::from([(
            "dos".to_string(),
            vec!["neptune".to_string(), "smurf".to_string()],
        )]));
        let schema = cfg.resolve(None).unwrap();
        assert_eq!(schema.category_of("smurf"), Some("dos".into()));
        assert_eq!(schema.category_of("unknown"), None);

        let identity = explicit_config().resolve(None).unwrap();
        assert_eq!(identity.category_of("smurf"), Some("smurf".into()));
    }
}
