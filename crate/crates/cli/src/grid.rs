//! Loss-weight sweep: a fixed 3 x 2 x 2 grid over the fusion weight and the
//! two auxiliary term weights, each point trained across the same seeds. The
//! winner by mean validation accuracy keeps its artifacts.

use serde::Serialize;

use cg3_core::losses::LossWeights;
use cg3_core::trainer::{train_seeds, TrainConfig, TrainOutcome, TrainReport};

use crate::{artifacts, load_data, train_error, CliError, GridArgs};

const GRID_PHI1: [f64; 3] = [0.25, 0.5, 0.75];
const GRID_SSC: [f64; 2] = [0.5, 1.0];
const GRID_G2: [f64; 2] = [0.5, 1.0];

#[derive(Serialize, Clone)]
struct ComboScore {
    lambda_phi1: f64,
    lambda_ssc: f64,
    lambda_g2: f64,
    val_acc_mean: f64,
    val_acc_std: f64,
    test_acc_mean: f64,
    test_acc_std: f64,
}

#[derive(Serialize)]
struct GridReport<'a> {
    base_config: &'a TrainConfig,
    seeds: &'a [u64],
    combos: &'a [ComboScore],
    best: &'a ComboScore,
}

pub fn run(args: GridArgs) -> Result<(), CliError> {
    let (base, runs) = args.flags.resolve()?;
    let ds = load_data(&args.data)?;
    let seeds: Vec<u64> = (0..runs).map(|i| base.seed + i as u64).collect();

    let mut combos: Vec<ComboScore> = Vec::new();
    // Ties go to the earliest grid point, so the sweep order is part of the
    // interface: phi1 outermost, then ssc, then g2.
    let mut best: Option<(usize, TrainOutcome, Vec<TrainReport>, TrainConfig)> = None;
    for &lambda_phi1 in &GRID_PHI1 {
        for &lambda_ssc in &GRID_SSC {
            for &lambda_g2 in &GRID_G2 {
                let mut cfg = base.clone();
                cfg.weights = LossWeights { lambda_phi1, lambda_ssc, lambda_g2 };
                let (outcome, reports) = train_seeds(&ds, &cfg, &seeds).map_err(train_error)?;
                let vals: Vec<f64> = reports.iter().map(|r| r.best_val_acc).collect();
                let tests: Vec<f64> = reports.iter().map(|r| r.test_acc).collect();
                let (val_acc_mean, val_acc_std) = artifacts::mean_std(&vals);
                let (test_acc_mean, test_acc_std) = artifacts::mean_std(&tests);
                combos.push(ComboScore {
                    lambda_phi1,
                    lambda_ssc,
                    lambda_g2,
                    val_acc_mean,
                    val_acc_std,
                    test_acc_mean,
                    test_acc_std,
                });
                let improved = match &best {
                    None => true,
                    Some((idx, ..)) => val_acc_mean > combos[*idx].val_acc_mean,
                };
                if improved {
                    best = Some((combos.len() - 1, outcome, reports, cfg));
                }
            }
        }
    }

    let (best_idx, mut outcome, reports, best_cfg) = best.expect("the grid is never empty");
    artifacts::write_all(&args.out, &args.data, &best_cfg, &seeds, &reports, &mut outcome, &ds)?;
    let grid_report = GridReport {
        base_config: &base,
        seeds: &seeds,
        combos: &combos,
        best: &combos[best_idx],
    };
    let json = serde_json::to_string_pretty(&grid_report).expect("grid report serializes");
    artifacts::write_file(&args.out, "grid_report.json", &(json + "\n"))?;

    let b = &combos[best_idx];
    crate::emit!(
        "best lambda_phi1 {} lambda_ssc {} lambda_g2 {}: val {:.4} +/- {:.4}, test {:.4} +/- {:.4}",
        b.lambda_phi1, b.lambda_ssc, b.lambda_g2, b.val_acc_mean, b.val_acc_std, b.test_acc_mean, b.test_acc_std
    );
    crate::emit!("artifacts in {}", args.out.display());
    Ok(())
}
