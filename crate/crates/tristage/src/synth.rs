//! Deterministic synthetic datasets: Gaussian fixtures for property tests
//! and a flow-record-style demo CSV (with schema) for end-to-end runs when
//! no real capture data is on hand.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::DataMatrix;
use crate::error::Result;
use crate::rng::{rng_from_seed, standard_normal};
use crate::schema::{ColumnKind, ColumnSpec, SchemaConfig};

/// Tight normal cloud plus dispersed anomalies, n-dimensional, labeled.
/// The shape stage-1 filtering is built for: normals concentrate, anomalies
/// scatter.
pub fn contaminated_fixture(
    n_normal: usize,
    n_anomaly: usize,
    dim: usize,
    seed: u64,
) -> DataMatrix {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity((n_normal + n_anomaly) * dim);
    let mut labels = Vec::with_capacity(n_normal + n_anomaly);
    for _ in 0..n_normal {
        for _ in 0..dim {
            rows.push((0.45 + 0.03 * standard_normal(&mut rng)).clamp(0.0, 1.0));
        }
        labels.push(0u8);
    }
    for _ in 0..n_anomaly {
        for _ in 0..dim {
            rows.push(rng.gen_range(0.0..1.0));
        }
        labels.push(1u8);
    }
    let features = Array2::from_shape_vec((n_normal + n_anomaly, dim), rows).unwrap();
    DataMatrix::new(features, Some(labels), None).unwrap()
}

/// Clean normal samples N(mean, std^2) clamped to [0,1].
pub fn clean_normals(n: usize, dim: usize, mean: f64, std: f64, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((n, dim), |_| {
        (mean + std * standard_normal(&mut rng)).clamp(0.0, 1.0)
    })
}

/// Anomalies shifted by 3 sigma on the first half of the dimensions.
pub fn shifted_anomalies(n: usize, dim: usize, mean: f64, std: f64, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((n, dim), |(_, j)| {
        let mu = if j < dim / 2 { mean + 3.0 * std } else { mean };
        (mu + std * standard_normal(&mut rng)).clamp(0.0, 1.0)
    })
}

/// Multi-class Gaussian blobs with the given per-class counts. Each class
/// gets a distinct mean pattern so a small CNN can separate them.
pub fn multiclass_fixture(
    counts: &[usize],
    dim: usize,
    noise: f64,
    seed: u64,
) -> (Array2<f64>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let total: usize = counts.iter().sum();
    let mut rows = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    let patterns: Vec<Vec<f64>> = (0..counts.len())
        .map(|c| {
            (0..dim)
                .map(|d| 0.15 + 0.7 * (((d * (c + 3) + c * 5) % 11) as f64 / 10.0))
                .collect()
        })
        .collect();
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            for d in 0..dim {
                rows.push((patterns[c][d] + noise * standard_normal(&mut rng)).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    (Array2::from_shape_vec((total, dim), rows).unwrap(), labels)
}

struct Profile {
    name: &'static str,
    protocol: &'static str,
    service: &'static str,
    flag: &'static str,
    /// Means of the numeric features.
    numeric: [f64; 16],
}

const NUMERIC_COLUMNS: [&str; 16] = [
    "duration",
    "src_bytes",
    "dst_bytes",
    "conn_count",
    "srv_count",
    "serror_rate",
    "rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_serror_rate",
    "logged_in",
    "hot_indicators",
    "failed_logins",
];

fn normal_profiles() -> Vec<Profile> {
    vec![
        Profile {
            name: "normal",
            protocol: "tcp",
            service: "http",
            flag: "SF",
            numeric: [
                2.0, 300.0, 4000.0, 8.0, 8.0, 0.0, 0.02, 0.95, 0.05, 120.0, 110.0, 0.9, 0.01,
                1.0, 0.0, 0.0,
            ],
        },
        Profile {
            name: "normal",
            protocol: "udp",
            service: "dns",
            flag: "SF",
            numeric: [
                0.1, 60.0, 120.0, 4.0, 4.0, 0.0, 0.0, 0.98, 0.02, 60.0, 60.0, 0.97, 0.0, 0.0,
                0.0, 0.0,
            ],
        },
        Profile {
            name: "normal",
            protocol: "tcp",
            service: "smtp",
            flag: "SF",
            numeric: [
                4.0, 900.0, 400.0, 3.0, 3.0, 0.0, 0.01, 0.9, 0.1, 40.0, 35.0, 0.85, 0.01, 1.0,
                0.0, 0.0,
            ],
        },
    ]
}

fn attack_profiles() -> Vec<(Profile, f64)> {
    // (profile, share of the anomaly budget)
    vec![
        (
            Profile {
                name: "flood",
                protocol: "tcp",
                service: "http",
                flag: "S0",
                numeric: [
                    0.0, 0.0, 0.0, 200.0, 200.0, 0.95, 0.0, 1.0, 0.0, 255.0, 255.0, 1.0, 0.95,
                    0.0, 0.0, 0.0,
                ],
            },
            0.70,
        ),
        (
            Profile {
                name: "probe",
                protocol: "icmp",
                service: "eco_i",
                flag: "REJ",
                numeric: [
                    0.0, 20.0, 0.0, 120.0, 4.0, 0.1, 0.85, 0.1, 0.9, 255.0, 12.0, 0.05, 0.1,
                    0.0, 0.0, 0.0,
                ],
            },
            0.20,
        ),
        (
            Profile {
                name: "credential",
                protocol: "tcp",
                service: "ssh",
                flag: "RSTO",
                numeric: [
                    6.0, 150.0, 200.0, 12.0, 12.0, 0.05, 0.3, 0.8, 0.2, 30.0, 25.0, 0.8, 0.05,
                    0.0, 1.0, 5.0,
                ],
            },
            0.08,
        ),
        (
            Profile {
                name: "escalation",
                protocol: "tcp",
                service: "telnet",
                flag: "SF",
                numeric: [
                    60.0, 2000.0, 6000.0, 2.0, 2.0, 0.0, 0.0, 0.9, 0.1, 10.0, 8.0, 0.8, 0.0,
                    1.0, 4.0, 1.0,
                ],
            },
            0.02,
        ),
    ]
}

fn render_row(rng: &mut ChaCha8Rng, profile: &Profile) -> Vec<String> {
    let mut fields = Vec::with_capacity(20);
    for (i, &mu) in profile.numeric.iter().enumerate() {
        let spread = (mu.abs() * 0.15).max(0.02);
        let v = (mu + spread * standard_normal(rng)).max(0.0);
        // Rate-style columns stay in [0,1]; counts render as integers.
        let name = NUMERIC_COLUMNS[i];
        if name.contains("rate") || name == "logged_in" {
            fields.push(format!("{:.4}", v.min(1.0)));
        } else {
            fields.push(format!("{}", v.round() as u64));
        }
    }
    fields.insert(1, profile.protocol.to_string());
    fields.insert(2, profile.service.to_string());
    fields.insert(3, profile.flag.to_string());
    fields.push(profile.name.to_string());
    fields
}

/// Schema for [`write_demo_csv`] output.
pub fn demo_schema() -> SchemaConfig {
    let mut columns = vec![ColumnSpec {
        name: "duration".into(),
        kind: ColumnKind::Numeric,
    }];
    columns.push(ColumnSpec {
        name: "protocol".into(),
        kind: ColumnKind::Categorical,
    });
    columns.push(ColumnSpec {
        name: "service".into(),
        kind: ColumnKind::Categorical,
    });
    columns.push(ColumnSpec {
        name: "flag".into(),
        kind: ColumnKind::Categorical,
    });
    for name in NUMERIC_COLUMNS.iter().skip(1) {
        columns.push(ColumnSpec {
            name: (*name).into(),
            kind: ColumnKind::Numeric,
        });
    }
    columns.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::BinaryLabel,
    });
    SchemaConfig {
        name: "demo-flows".into(),
        has_header: true,
        columns,
        default_kind: None,
        normal_values: vec!["normal".into()],
        attack_categories: None,
    }
}

/// Writes a demo flow-record CSV (normal web/dns/mail traffic plus four
/// attack behaviors at a 70/20/8/2 split) and its schema JSON. Deterministic
/// in `seed`.
pub fn write_demo_csv(
    csv_path: &Path,
    schema_path: &Path,
    n_normal: usize,
    n_anomaly: usize,
    seed: u64,
) -> Result<()> {
    let schema = demo_schema();
    schema.to_json_file(schema_path)?;

    let mut rng = rng_from_seed(seed);
    let mut writer = csv::Writer::from_path(csv_path)?;
    let header: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
    writer.write_record(&header)?;

    let normals = normal_profiles();
    for i in 0..n_normal {
        let profile = &normals[i % normals.len()];
        writer.write_record(render_row(&mut rng, profile))?;
    }
    let attacks = attack_profiles();
    let mut remaining = n_anomaly;
    for (idx, (profile, share)) in attacks.iter().enumerate() {
        let count = if idx == attacks.len() - 1 {
            remaining
        } else {
            ((n_anomaly as f64 * share).round() as usize).min(remaining)
        };
        for _ in 0..count {
            writer.write_record(render_row(&mut rng, profile))?;
        }
        remaining -= count;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_csv;

    #[test]
    fn contaminated_fixture_shape_and_labels() {
        let m = contaminated_fixture(1000, 100, 20, 1);
        assert_eq!(m.n_rows(), 1100);
        assert_eq!(m.n_cols(), 20);
        let labels = m.binary_labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 100);
    }

    #[test]
    fn demo_csv_ingests_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("demo.csv");
        let schema = dir.path().join("demo.schema.json");
        write_demo_csv(&csv, &schema, 300, 60, 9).unwrap();
        let cfg = SchemaConfig::from_json_file(&schema).unwrap();
        let out = ingest_csv(&csv, &cfg).unwrap();
        assert_eq!(out.report.rows_retained, 360);
        assert_eq!(out.report.normal_count, 300);
        assert_eq!(out.report.anomaly_count, 60);
        assert_eq!(
            out.taxonomy.categories(),
            &["credential", "escalation", "flood", "probe"]
        );
        // 19 feature columns (16 numeric + 3 categorical).
        assert_eq!(out.matrix.n_cols(), 19);
    }

    #[test]
    fn generators_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let s = dir.path().join("s.json");
        write_demo_csv(&a, &s, 100, 20, 5).unwrap();
        write_demo_csv(&b, &s, 100, 20, 5).unwrap();
        assert_eq!(
            std::fs::read_to_string(&a).unwrap(),
            std::fs::read_to_string(&b).unwrap()
        );
        let (xa, _) = multiclass_fixture(&[10, 20], 8, 0.05, 3);
        let (xb, _) = multiclass_fixture(&[10, 20], 8, 0.05, 3);
        assert_eq!(xa, xb);
    }
}
