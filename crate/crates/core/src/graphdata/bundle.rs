//! On-disk bundle format: a directory of five UTF-8 text files.
//!
//! `meta.json` carries counts, `features.csv` one row per node,
//! `edges.csv` one `i,j` pair per line in either orientation,
//! `labels.csv` one integer per node (-1 for unknown), `splits.json`
//! the three index sets. `save_bundle` writes edges with i < j in
//! lexicographic order, so saving a loaded bundle is byte-stable.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, GraphDataset};
use crate::numcore::{DenseMatrix, SparseMatrix};

#[derive(Serialize, Deserialize)]
struct Meta {
    nodes: usize,
    features: usize,
    classes: usize,
}

#[derive(Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn malformed(file: &str, msg: impl Into<String>) -> DataError {
    DataError::Malformed { file: file.to_string(), msg: msg.into() }
}

fn read(dir: &Path, file: &str) -> Result<String, DataError> {
    fs::read_to_string(dir.join(file))
        .map_err(|e| malformed(file, format!("cannot read: {}", e)))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphDataset, DataError> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&read(dir, "meta.json")?)
        .map_err(|e| malformed("meta.json", e.to_string()))?;

    let features_text = read(dir, "features.csv")?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(meta.nodes);
    for (lineno, line) in features_text.lines().enumerate() {
        let mut row = Vec::with_capacity(meta.features);
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| malformed("features.csv", format!("line {}: bad float {:?}", lineno + 1, tok)))?;
            row.push(v);
        }
        if row.len() != meta.features {
            return Err(DataError::RaggedFeatures { row: lineno, expected: meta.features, got: row.len() });
        }
        rows.push(row);
    }
    if rows.len() != meta.nodes {
        return Err(malformed("features.csv", format!("expected {} rows, got {}", meta.nodes, rows.len())));
    }
    let features = DenseMatrix::from_rows(&rows)?;

    let edges_text = read(dir, "edges.csv")?;
    let mut undirected: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (lineno, line) in edges_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |tok: Option<&str>| -> Result<usize, DataError> {
            tok.and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| malformed("edges.csv", format!("line {}: expected `i,j`", lineno + 1)))
        };
        let i = parse(parts.next())?;
        let j = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(malformed("edges.csv", format!("line {}: expected `i,j`", lineno + 1)));
        }
        if i >= meta.nodes || j >= meta.nodes {
            return Err(malformed("edges.csv", format!("line {}: node out of range", lineno + 1)));
        }
        undirected.insert((i.min(j), i.max(j)));
    }
    let mut triplets = Vec::with_capacity(undirected.len() * 2);
    for &(i, j) in &undirected {
        triplets.push((i, j, 1.0));
        if i != j {
            triplets.push((j, i, 1.0));
        }
    }
    let adjacency = SparseMatrix::from_triplets(meta.nodes, meta.nodes, &triplets)?;

    let labels_text = read(dir, "labels.csv")?;
    let mut labels = Vec::with_capacity(meta.nodes);
    for (lineno, line) in labels_text.lines().enumerate() {
        let v: i64 = line
            .trim()
            .parse()
            .map_err(|_| malformed("labels.csv", format!("line {}: bad label {:?}", lineno + 1, line)))?;
        labels.push(v);
    }

    let splits: Splits = serde_json::from_str(&read(dir, "splits.json")?)
        .map_err(|e| malformed("splits.json", e.to_string()))?;

    GraphDataset::new(features, adjacency, labels, meta.classes, splits.train, splits.val, splits.test)
}

pub fn save_bundle(ds: &GraphDataset, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let meta = Meta { nodes: ds.nodes(), features: ds.feature_dim(), classes: ds.classes() };
    fs::write(dir.join("meta.json"), serde_json::to_string(&meta)? + "\n")?;

    let mut features = String::new();
    for i in 0..ds.nodes() {
        let row = ds.features().row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                features.push(',');
            }
            features.push_str(&v.to_string());
        }
        features.push('\n');
    }
    fs::write(dir.join("features.csv"), features)?;

    let mut edges = String::new();
    for (i, j) in ds.edge_list() {
        edges.push_str(&format!("{},{}\n", i, j));
    }
    fs::write(dir.join("edges.csv"), edges)?;

    let mut labels = String::new();
    for &l in ds.labels() {
        labels.push_str(&format!("{}\n", l));
    }
    fs::write(dir.join("labels.csv"), labels)?;

    let splits = Splits {
        train: ds.train_idx().to_vec(),
        val: ds.val_idx().to_vec(),
        test: ds.test_idx().to_vec(),
    };
    fs::write(dir.join("splits.json"), serde_json::to_string(&splits)? + "\n")?;
    Ok(())
}
