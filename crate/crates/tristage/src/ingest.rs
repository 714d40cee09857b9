//! CSV ingestion: load rows against a schema, ordinal-encode categoricals,
//! harmonize labels, and report what was kept and dropped.
//!
//! Rows with unparseable numerics, non-finite values, missing fields, or the
//! wrong field count are dropped and counted per reason rather than imputed.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::AttackTaxonomy;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, FeatureSchema, SchemaConfig};

/// One retained feature column in file order.
#[derive(Debug, Clone)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Row-aligned raw columns of the retained rows.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub schema: FeatureSchema,
    pub feature_cols: Vec<(String, RawColumn)>,
    pub binary_raw: Vec<String>,
    pub attack_raw: Option<Vec<String>>,
    pub report: IngestReport,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.binary_raw.len()
    }
}

/// Retained/dropped row accounting, serialized as the ingest report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub rows_read: usize,
    pub rows_retained: usize,
    pub drops: BTreeMap<String, usize>,
    pub dropped_columns: Vec<String>,
    pub feature_columns: Vec<String>,
    pub normal_count: usize,
    pub anomaly_count: usize,
    /// Anomalous raw labels without a configured category (kept for
    /// detection, unusable for stage-3 classification).
    pub unmapped_attack_labels: BTreeMap<String, usize>,
}

fn bump(map: &mut BTreeMap<String, usize>, key: &str) {
    *map.entry(key.to_string()).or_insert(0) += 1;
}

/// Loads the CSV at `path`, resolving `config` against its header. Rows that
/// fail to parse are dropped and counted; an empty result is a hard error.
pub fn load_dataset(path: &Path, config: &SchemaConfig) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(config.has_header)
        .flexible(true)
        .from_path(path)?;

    let header: Option<Vec<String>> = if config.has_header {
        Some(
            reader
                .headers()?
                .iter()
                .map(|h| h.trim().to_string())
                .collect(),
        )
    } else {
        None
    };
    let schema = config.resolve(header.as_deref())?;

    let n_cols = schema.columns.len();
    let mut feature_cols: Vec<(String, RawColumn)> = schema
        .feature_columns()
        .iter()
        .map(|c| {
            let col = match c.kind {
                ColumnKind::Numeric => RawColumn::Numeric(Vec::new()),
                ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
                _ => unreachable!("feature_columns filters other kinds"),
            };
            (c.name.clone(), col)
        })
        .collect();
    let mut binary_raw: Vec<String> = Vec::new();
    let mut attack_raw: Option<Vec<String>> =
        schema.attack_label_column().map(|_| Vec::new());

    let mut rows_read = 0usize;
    let mut drops: BTreeMap<String, usize> = BTreeMap::new();

    #[derive(Debug)]
    enum Parsed {
        Numeric(f64),
        Categorical(String),
        Binary(String),
        Attack(String),
        Skip,
    }

    'rows: for record in reader.records() {
        let record = record?;
        rows_read += 1;
        if record.len() != n_cols {
            bump(&mut drops, "wrong_field_count");
            continue;
        }
        let mut parsed: Vec<Parsed> = Vec::with_capacity(n_cols);
        for (spec, field) in schema.columns.iter().zip(record.iter()) {
            let field = field.trim();
            let value = match spec.kind {
                ColumnKind::Timestamp => Parsed::Skip,
                ColumnKind::Numeric => {
                    if field.is_empty() {
                        bump(&mut drops, "missing_value");
                        continue 'rows;
                    }
                    match field.parse::<f64>() {
                        Ok(v) if v.is_finite() => Parsed::Numeric(v),
                        Ok(_) => {
                            bump(&mut drops, "non_finite");
                            continue 'rows;
                        }
                        Err(_) => {
                            bump(&mut drops, "unparseable_numeric");
                            continue 'rows;
                        }
                    }
                }
                ColumnKind::Categorical => {
                    if field.is_empty() {
                        bump(&mut drops, "missing_value");
                        continue 'rows;
                    }
                    Parsed::Categorical(field.to_string())
                }
                ColumnKind::BinaryLabel => {
                    if field.is_empty() {
                        bump(&mut drops, "missing_value");
                        continue 'rows;
                    }
                    Parsed::Binary(field.to_string())
                }
                ColumnKind::AttackLabel => Parsed::Attack(field.to_string()),
            };
            parsed.push(value);
        }
        // Row accepted: commit fields to their columns.
        let mut feat_idx = 0usize;
        for value in parsed {
            match value {
                Parsed::Numeric(v) => {
                    if let RawColumn::Numeric(col) = &mut feature_cols[feat_idx].1 {
                        col.push(v);
                    }
                    feat_idx += 1;
                }
                Parsed::Categorical(s) => {
                    if let RawColumn::Categorical(col) = &mut feature_cols[feat_idx].1 {
                        col.push(s);
                    }
                    feat_idx += 1;
                }
                Parsed::Binary(s) => binary_raw.push(s),
                Parsed::Attack(s) => {
                    if let Some(col) = &mut attack_raw {
                        col.push(s);
                    }
                }
                Parsed::Skip => {}
            }
        }
    }

    let rows_retained = binary_raw.len();
    if rows_retained == 0 {
        return Err(Error::EmptyDataset(format!(
            "{} has no usable rows ({} read, all dropped or file empty)",
            path.display(),
            rows_read
        )));
    }

    let normal_count = binary_raw.iter().filter(|v| schema.is_normal_value(v)).count();
    let report = IngestReport {
        dataset: schema.name.clone(),
        rows_read,
        rows_retained,
        drops,
        dropped_columns: schema
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Timestamp)
            .map(|c| c.name.clone())
            .collect(),
        feature_columns: feature_cols.iter().map(|(n, _)| n.clone()).collect(),
        normal_count,
        anomaly_count: rows_retained - normal_count,
        unmapped_attack_labels: BTreeMap::new(),
    };

    Ok(RawTable {
        schema,
        feature_cols,
        binary_raw,
        attack_raw,
        report,
    })
}

/// Fits ordinal encodings: per categorical column, distinct raw values in
/// lexicographic order map to the contiguous range [1, d].
pub fn fit_encoding(raw: &RawTable) -> FeatureSchema {
    let mut schema = raw.schema.clone();
    for (name, col) in &raw.feature_cols {
        if let RawColumn::Categorical(values) = col {
            let mut distinct: Vec<&String> = values.iter().collect();
            distinct.sort();
            distinct.dedup();
            let map: BTreeMap<String, u32> = distinct
                .into_iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), (i + 1) as u32))
                .collect();
            schema.categorical_maps.insert(name.clone(), map);
        }
    }
    schema
}

/// Applies a fitted schema: numeric columns pass through, categorical
/// columns take their ordinal codes, and labels are harmonized (normal
/// values -> 0, anything else -> 1; anomalous raws -> taxonomy ids).
pub fn encode(
    raw: &RawTable,
    schema: &FeatureSchema,
    taxonomy: Option<&AttackTaxonomy>,
) -> Result<(DataMatrix, IngestReport)> {
    let rows = raw.n_rows();
    let cols = raw.feature_cols.len();
    let mut features = Array2::zeros((rows, cols));
    for (j, (name, col)) in raw.feature_cols.iter().enumerate() {
        match col {
            RawColumn::Numeric(values) => {
                for (i, &v) in values.iter().enumerate() {
                    features[[i, j]] = v;
                }
            }
            RawColumn::Categorical(values) => {
                let map = schema.categorical_maps.get(name).ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "categorical column '{name}' has no fitted encoding"
                    ))
                })?;
                for (i, v) in values.iter().enumerate() {
                    let code = map.get(v).ok_or_else(|| {
                        Error::SchemaMismatch(format!(
                            "value '{v}' in column '{name}' missing from fitted encoding"
                        ))
                    })?;
                    features[[i, j]] = *code as f64;
                }
            }
        }
    }

    let binary: Vec<u8> = raw
        .binary_raw
        .iter()
        .map(|v| u8::from(!schema.is_normal_value(v)))
        .collect();

    let mut unmapped: BTreeMap<String, usize> = BTreeMap::new();
    let attack: Option<Vec<Option<u32>>> = taxonomy.map(|tax| {
        (0..rows)
            .map(|i| {
                if binary[i] == 0 {
                    return None;
                }
                let raw_label = match &raw.attack_raw {
                    Some(col) => &col[i],
                    // Single label column: the binary column's raw value is
                    // the category source for anomalous rows.
                    None => &raw.binary_raw[i],
                };
                match tax.id_of_raw(raw_label) {
                    Some(id) => Some(id as u32),
                    None => {
                        bump(&mut unmapped, raw_label);
                        None
                    }
                }
            })
            .collect()
    });

    let mut report = raw.report.clone();
    report.unmapped_attack_labels = unmapped;
    let matrix = DataMatrix::new(features, Some(binary), attack)?;
    Ok((matrix, report))
}

/// Everything ingestion produces for one dataset file.
#[derive(Debug, Clone)]
pub struct IngestOutput {
    /// Encoded (not yet normalized) features with harmonized labels.
    pub matrix: DataMatrix,
    pub schema: FeatureSchema,
    pub taxonomy: AttackTaxonomy,
    pub report: IngestReport,
}

/// One-shot ingestion: load, fit encodings, build the attack taxonomy, and
/// encode. Normalization is applied later (per training fold) so held-out
/// data is always scaled with training-fold parameters.
pub fn ingest_csv(path: &Path, config: &SchemaConfig) -> Result<IngestOutput> {
    let raw = load_dataset(path, config)?;
    let schema = fit_encoding(&raw);
    let taxonomy = AttackTaxonomy::from_schema_and_observed(
        &schema,
        raw.attack_raw.as_deref().unwrap_or(&raw.binary_raw),
        &raw.binary_raw,
    )?;
    let (matrix, report) = encode(&raw, &schema, Some(&taxonomy))?;
    Ok(IngestOutput {
        matrix,
        schema,
        taxonomy,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;
    use std::io::Write;

    fn demo_config() -> SchemaConfig {
        SchemaConfig {
            name: "demo".into(),
            has_header: true,
            columns: vec![
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
            default_kind: Some(ColumnKind::Numeric),
            normal_values: vec!["normal".into()],
            attack_categories: None,
        }
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn bad_numeric_rows_are_dropped_and_counted() {
        let f = write_csv(
            "bytes,proto,ts,label\n\
             10,tcp,111,normal\n\
             oops,tcp,112,normal\n\
             30,udp,113,dos\n",
        );
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        assert_eq!(raw.n_rows(), 2);
        assert_eq!(raw.report.drops["unparseable_numeric"], 1);
        assert_eq!(raw.report.rows_read, 3);
        // Timestamp column never becomes a feature.
        assert_eq!(raw.report.feature_columns, vec!["bytes", "proto"]);
        assert_eq!(raw.report.dropped_columns, vec!["ts"]);
    }

    #[test]
    fn infinities_and_missing_fields_are_dropped() {
        let f = write_csv(
            "bytes,proto,ts,label\n\
             inf,tcp,1,normal\n\
             5,,1,normal\n\
             5,tcp,1,normal\n\
             5,tcp,1\n",
        );
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        assert_eq!(raw.n_rows(), 1);
        assert_eq!(raw.report.drops["non_finite"], 1);
        assert_eq!(raw.report.drops["missing_value"], 1);
        assert_eq!(raw.report.drops["wrong_field_count"], 1);
    }

    #[test]
    fn empty_dataset_is_a_hard_error() {
        let f = write_csv("bytes,proto,ts,label\n");
        assert!(matches!(
            load_dataset(f.path(), &demo_config()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn encoding_is_lexicographic_and_contiguous() {
        let f = write_csv(
            "bytes,proto,ts,label\n\
             1,tcp,1,normal\n\
             2,udp,1,normal\n\
             3,icmp,1,dos\n\
             4,tcp,1,probe\n",
        );
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        let schema = fit_encoding(&raw);
        let map = &schema.categorical_maps["proto"];
        assert_eq!(map["icmp"], 1);
        assert_eq!(map["tcp"], 2);
        assert_eq!(map["udp"], 3);

        // Bijection between distinct raw values and [1, d].
        let mut codes: Vec<u32> = map.values().cloned().collect();
        codes.sort_unstable();
        assert_eq!(codes, vec![1, 2, 3]);
    }

    #[test]
    fn single_distinct_value_maps_to_one() {
        let f = write_csv("bytes,proto,ts,label\n1,tcp,1,normal\n2,tcp,1,dos\n");
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        let schema = fit_encoding(&raw);
        assert_eq!(schema.categorical_maps["proto"]["tcp"], 1);
    }

    #[test]
    fn many_distinct_values_cover_full_range() {
        let mut body = String::from("bytes,proto,ts,label\n");
        for i in 0..70 {
            body.push_str(&format!("1,svc{i:03},1,normal\n"));
        }
        let f = write_csv(&body);
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        let schema = fit_encoding(&raw);
        let mut codes: Vec<u32> = schema.categorical_maps["proto"].values().cloned().collect();
        codes.sort_unstable();
        assert_eq!(codes, (1..=70).collect::<Vec<u32>>());
    }

    #[test]
    fn ingest_harmonizes_labels_and_builds_taxonomy() {
        let f = write_csv(
            "bytes,proto,ts,label\n\
             1,tcp,1,normal\n\
             2,udp,1,dos\n\
             3,udp,1,probe\n\
             4,tcp,1,dos\n",
        );
        let out = ingest_csv(f.path(), &demo_config()).unwrap();
        assert_eq!(out.report.normal_count, 1);
        assert_eq!(out.report.anomaly_count, 3);
        assert_eq!(out.taxonomy.categories(), &["dos", "probe"]);
        let labels = out.matrix.binary_labels().unwrap().to_vec();
        assert_eq!(labels, vec![0, 1, 1, 1]);
        let attacks = out.matrix.attack_labels().unwrap().to_vec();
        assert_eq!(attacks, vec![None, Some(0), Some(1), Some(0)]);
    }

    #[test]
    fn fitted_schema_applies_deterministically() {
        let f = write_csv(
            "bytes,proto,ts,label\n\
             1,tcp,1,normal\n\
             2,udp,1,dos\n",
        );
        let raw = load_dataset(f.path(), &demo_config()).unwrap();
        let schema = fit_encoding(&raw);
        let (a, _) = encode(&raw, &schema, None).unwrap();
        let (b, _) = encode(&raw, &schema, None).unwrap();
        assert_eq!(a.features(), b.features());
    }
}
