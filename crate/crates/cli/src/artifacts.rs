//! Output files for a training run. Everything except timestamps and wall
//! times is a pure function of the resolved configuration and the data, so
//! repeated runs produce byte-identical artifacts.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cg3_core::graphdata::GraphDataset;
use cg3_core::trainer::{TrainConfig, TrainOutcome, TrainReport};

use crate::{train_error, CliError};

/// The bundle files covered by the manifest hash, in hashing order.
const BUNDLE_FILES: [&str; 5] =
    ["meta.json", "features.csv", "edges.csv", "labels.csv", "splits.json"];

#[derive(Serialize)]
struct MultiReport<'a> {
    config: &'a TrainConfig,
    seeds: &'a [u64],
    runs: &'a [TrainReport],
    test_acc_mean: f64,
    test_acc_std: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    /// SHA-256 of each input bundle file, keyed by file name.
    data: Vec<(String, String)>,
    created_unix: u64,
    config: &'a TrainConfig,
    outputs: Vec<String>,
}

/// Sample mean and standard deviation; a single observation has spread 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents)
        .map_err(|e| CliError::Load(format!("{}: {}", dir.join(name).display(), e)))
}

fn join_row(row: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&v.to_string());
    }
    s
}

/// Writes report.json, metrics.jsonl, predictions.csv, embeddings.tsv, and
/// manifest.json into `out_dir`. Per-epoch metrics and node-level artifacts
/// come from the first seed's run.
pub fn write_all(
    out_dir: &Path,
    data_dir: &Path,
    cfg: &TrainConfig,
    seeds: &[u64],
    reports: &[TrainReport],
    outcome: &mut TrainOutcome,
    ds: &GraphDataset,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Load(format!("{}: {}", out_dir.display(), e)))?;
    let mut outputs = Vec::new();

    let report_json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        let accs: Vec<f64> = reports.iter().map(|r| r.test_acc).collect();
        let (test_acc_mean, test_acc_std) = mean_std(&accs);
        serde_json::to_string_pretty(&MultiReport {
            config: cfg,
            seeds,
            runs: reports,
            test_acc_mean,
            test_acc_std,
        })
    }
    .expect("report serializes");
    write_file(out_dir, "report.json", &(report_json + "\n"))?;
    outputs.push("report.json".to_string());

    let mut metrics = String::new();
    for epoch in &outcome.report.epochs {
        metrics.push_str(&serde_json::to_string(epoch).expect("metrics serialize"));
        metrics.push('\n');
    }
    write_file(out_dir, "metrics.jsonl", &metrics)?;
    outputs.push("metrics.jsonl".to_string());

    let preds = outcome.model.predict(&mut outcome.tape).map_err(train_error)?;
    let mut csv = String::from("node,label,prob\n");
    for (node, &class) in preds.classes.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", node, class, preds.probs.get(node, class)));
    }
    write_file(out_dir, "predictions.csv", &csv)?;
    outputs.push("predictions.csv".to_string());

    let (h1, h2) = outcome.model.embeddings(&mut outcome.tape).map_err(train_error)?;
    let mut tsv = String::new();
    for node in 0..ds.nodes() {
        tsv.push_str(&node.to_string());
        for view in [&h1, &h2].into_iter().flatten() {
            tsv.push('\t');
            tsv.push_str(&join_row(view.row(node)));
        }
        tsv.push('\n');
    }
    write_file(out_dir, "embeddings.tsv", &tsv)?;
    outputs.push("embeddings.tsv".to_string());

    let mut data = Vec::new();
    for name in BUNDLE_FILES {
        let bytes = fs::read(data_dir.join(name))
            .map_err(|e| CliError::Load(format!("{}: {}", data_dir.join(name).display(), e)))?;
        data.push((name.to_string(), format!("{:x}", Sha256::digest(&bytes))));
    }
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        data,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .expect("clock after 1970")
            .as_secs(),
        config: cfg,
        outputs,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(out_dir, "manifest.json", &(manifest_json + "\n"))?;
    Ok(())
}
